"""Training criteria for the parallel model + network feedforward filter.

Three criteria are supported:

``least_squares``
    plain sum of squared feedforward errors.
``orthogonal_regularized``
    least squares plus ``lam * sum_j ||U1_j^T C_j||^2``, the energy of the
    network output inside each reference's model subspace.
``explicit_projection``
    least squares with the network output replaced by its complement-space
    projection ``C_j - U1_j U1_j^T C_j``.

Every loss is an unnormalised sum over all samples of all references. The
n x n projectors are never formed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linmodel import (
    DEFAULT_RANK_TOLERANCE,
    LinearModel,
    RankDeficiencyError,
    build_regressor,
    decompose,
    stacked_least_squares,
)
from . import kernels
from .neuralnet import ACTIVATIONS, GradientSet, Network, forward

KINDS = ("least_squares", "orthogonal_regularized", "explicit_projection")


@dataclass(frozen=True)
class ObjectiveConfig:
    kind: str = "orthogonal_regularized"
    lam: float = 0.01

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}; expected one of {KINDS}")
        if not self.lam >= 0:
            raise ValueError("lambda must be non-negative")

    @property
    def weight(self) -> float:
        return self.lam if self.kind == "orthogonal_regularized" else 0.0


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    j1: float
    j2: float
    j3: float

    def as_tuple(self):
        return (self.total, self.j1, self.j2, self.j3)


class FitProblem:
    """Per-reference regressors, targets and SVD bases derived from a dataset.

    Bases are computed once here and reused by every loss evaluation.
    """

    def __init__(self, dataset, n_theta: int | None = None, rank_tolerance: float = DEFAULT_RANK_TOLERANCE,
                 with_bases: bool = True):
        self.dataset = dataset
        self.n_theta = dataset.n_theta if n_theta is None else n_theta
        if len(dataset) == 0:
            raise ValueError("dataset is empty")
        self.regressors = [build_regressor(e.reference, self.n_theta) for e in dataset]
        self.targets = [np.asarray(e.optimal_input.samples, dtype=float) for e in dataset]
        self.bases = None
        if with_bases:
            bases = []
            for j, M in enumerate(self.regressors):
                try:
                    bases.append(decompose(M, rank_tolerance))
                except RankDeficiencyError as exc:
                    raise RankDeficiencyError(f"reference {j}: {exc}") from None
            self.bases = bases
        self._stack()

    def _stack(self):
        self.X = np.ascontiguousarray(np.vstack(self.regressors))
        self.F = np.concatenate(self.targets)
        lengths = [M.shape[0] for M in self.regressors]
        bounds = np.cumsum([0] + lengths)
        self.slices = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
        self._starts = bounds[:-1]
        self._entry = np.repeat(np.arange(len(lengths)), lengths)
        if self.bases is not None and len(self.bases) == len(lengths):
            # all U1 blocks stacked row-wise; entry j owns rows slices[j]
            self._U = np.vstack([b.U1 for b in self.bases])
            self._SVt = np.stack([b.singular_values[:, None] * b.V.T for b in self.bases])
            self._F1 = self.coefficients(self.F)

    def coefficients(self, v) -> np.ndarray:
        """Per-entry ``U1_j^T v_j`` for a stacked vector, shape (n_entries, rank)."""
        self.require_bases()
        return np.add.reduceat(self._U * v[:, None], self._starts, axis=0)

    def lift(self, coeffs) -> np.ndarray:
        """Stacked ``U1_j c_j``: maps per-entry coefficients back to samples."""
        return np.einsum("nr,nr->n", self._U, coeffs[self._entry])

    def complement(self, v) -> np.ndarray:
        return v - self.lift(self.coefficients(v))

    @classmethod
    def from_arrays(cls, regressors, targets, bases=None):
        """Build a problem directly from regressor/target arrays (used by tests)."""
        self = cls.__new__(cls)
        self.dataset = None
        self.regressors = [np.asarray(M, dtype=float) for M in regressors]
        self.targets = [np.asarray(t, dtype=float) for t in targets]
        self.n_theta = self.regressors[0].shape[1]
        self.bases = list(bases) if bases is not None else [decompose(M) for M in self.regressors]
        self._stack()
        return self

    def require_bases(self):
        if self.bases is None or len(self.bases) != len(self.slices):
            raise ValueError("one projection basis per dataset entry is required")
        return self.bases

    def __len__(self):
        return len(self.slices)


def _theta_array(theta, n_theta):
    th = np.asarray(getattr(theta, "theta", theta), dtype=float).ravel()
    if th.shape[0] != n_theta:
        raise ValueError(f"theta has length {th.shape[0]}, expected {n_theta}")
    return th


def _network_output(net, problem):
    if net is None:
        return np.zeros(problem.X.shape[0])
    return np.asarray(net.forward(problem.X), dtype=float)


def _breakdown(kind, lam, th, C, problem):
    """Split the criterion into model-subspace fit, complement fit and penalty."""
    c1 = problem.coefficients(C)
    m1 = problem._SVt @ th
    if kind == "explicit_projection":
        j1 = float(np.sum((problem._F1 - m1) ** 2))
        j3 = 0.0
    else:
        j1 = float(np.sum((problem._F1 - m1 - c1) ** 2))
        j3 = float(np.sum(c1 ** 2))
    w2 = problem.complement(problem.F - C)
    return j1, float(w2 @ w2), lam * j3


def loss_ls(theta, net, problem: FitProblem) -> float:
    th = _theta_array(theta, problem.n_theta)
    e = problem.F - problem.X @ th - _network_output(net, problem)
    return float(e @ e)


def loss_projected(theta, net, problem: FitProblem, lam: float) -> LossBreakdown:
    return evaluate(ObjectiveConfig("orthogonal_regularized", lam), theta, net, problem)


def loss_explicit_projection(theta, net, problem: FitProblem) -> float:
    th = _theta_array(theta, problem.n_theta)
    C2 = problem.complement(_network_output(net, problem))
    e = problem.F - problem.X @ th - C2
    return float(e @ e)


def evaluate(objective: ObjectiveConfig, theta, net, problem: FitProblem) -> LossBreakdown:
    """Loss of the selected criterion with its three-way split."""
    th = _theta_array(theta, problem.n_theta)
    C = _network_output(net, problem)
    return _value_and_cotangents(objective, th, C, problem)[0]


def _value_and_cotangents(objective, th, C, problem, need_grad=False):
    kind = objective.kind
    lam = objective.weight
    problem.require_bases()
    C_used = problem.complement(C) if kind == "explicit_projection" else C
    e = problem.F - problem.X @ th - C_used
    j1, j2, j3 = _breakdown(kind, lam, th, C, problem)
    total = float(e @ e) + j3
    breakdown = LossBreakdown(total, j1, j2, j3)
    if not need_grad:
        return breakdown, None, None
    if kind == "orthogonal_regularized":
        gC = -2.0 * e
        if lam != 0.0:
            gC += 2.0 * lam * problem.lift(problem.coefficients(C))
    elif kind == "explicit_projection":
        gC = -2.0 * problem.complement(e)
    else:
        gC = -2.0 * e
    g_theta = -2.0 * (problem.X.T @ e)
    return breakdown, g_theta, gC


def value_and_grad(objective: ObjectiveConfig, theta, net: Network | None, problem: FitProblem):
    """Loss breakdown, theta-gradient and flat network gradient (``None`` without a network)."""
    th = _theta_array(theta, problem.n_theta)
    if net is None:
        C = np.zeros(problem.X.shape[0])
        breakdown, g_theta, _ = _value_and_cotangents(objective, th, C, problem, need_grad=True)
        return breakdown, g_theta, None
    return value_and_grad_flat(objective, th, net.flatten(), net.sizes, ACTIVATIONS[net.activation], problem)


def value_and_grad_flat(objective: ObjectiveConfig, theta, params, sizes, act: int, problem: FitProblem):
    """:func:`value_and_grad` on a flat parameter vector, skipping Network construction."""
    C, acts = kernels.mlp_activations_np(params, sizes, act, problem.X)
    breakdown, g_theta, gC = _value_and_cotangents(objective, theta, C, problem, need_grad=True)
    return breakdown, g_theta, kernels.mlp_backward_np(params, sizes, act, acts, gC)


def gradients(objective: ObjectiveConfig, theta, net: Network | None, problem: FitProblem):
    """Exact gradient of the selected criterion in theta and in the network parameters."""
    _, g_theta, g_phi = value_and_grad(objective, theta, net, problem)
    if net is None:
        return g_theta, None
    g = net.with_params(g_phi)
    return g_theta, GradientSet(g.weights, g.biases)


def model_subspace_theta(problem: FitProblem) -> np.ndarray:
    """Minimiser of the theta-only term of the explicit-projection split."""
    return stacked_least_squares(problem.regressors, problem.targets)


def solve_disjoint(problem: FitProblem, net_template: Network, fit_network):
    """Fit the explicit-projection criterion as two independent problems.

    ``theta`` comes from stacked least squares and does not depend on the
    network; ``fit_network(loss_and_grad, x0)`` minimises the complement-space
    misfit over the flat network parameters and returns the optimum.
    """
    theta = LinearModel(model_subspace_theta(problem))
    objective = ObjectiveConfig("explicit_projection", 0.0)

    def loss_and_grad(x):
        net = net_template.with_params(x)
        breakdown, _, g_phi = value_and_grad(objective, theta.theta, net, problem)
        return breakdown, g_phi

    x = fit_network(loss_and_grad, net_template.flatten())
    return theta, net_template.with_params(x)
