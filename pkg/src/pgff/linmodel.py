"""Linear-in-parameters feedforward model and its output-subspace projections."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signals import Trajectory, build_stack

DEFAULT_RANK_TOLERANCE = 1e-8


class RankDeficiencyError(ValueError):
    """A regressor matrix does not have full column rank."""


@dataclass(frozen=True)
class LinearModel:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).ravel()
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def n_theta(self) -> int:
        return self.theta.shape[0]


def build_regressor(reference: Trajectory, n_theta: int) -> np.ndarray:
    """Stacked regressor: column n holds the n-th derivative of ``reference``."""
    if n_theta < 1:
        raise ValueError("n_theta must be positive")
    if reference.length <= n_theta:
        raise ValueError(f"reference of length {reference.length} too short for n_theta={n_theta}")
    return build_stack(reference, n_theta - 1)


@dataclass(frozen=True)
class ProjectionBasis:
    """Thin SVD ``M = U1 diag(s) V^T`` of one regressor matrix.

    Only ``U1`` is stored; the complement projector is applied as
    ``v - U1 (U1^T v)``.
    """

    U1: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray
    rank_tolerance: float

    @property
    def n_samples(self) -> int:
        return self.U1.shape[0]

    def coefficients(self, v):
        """``U1^T v``; its norm equals the norm of the model-subspace part of v."""
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.U1.shape[0]:
            raise ValueError(f"expected length {self.U1.shape[0]}, got {v.shape[0]}")
        return self.U1.T @ v


def decompose(M: np.ndarray, rank_tolerance: float = DEFAULT_RANK_TOLERANCE) -> ProjectionBasis:
    """Thin SVD of a tall regressor; ``rank_tolerance`` is relative to the largest singular value."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] <= M.shape[1]:
        raise RankDeficiencyError(f"regressor must be tall, got shape {M.shape}")
    U1, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s[0] == 0.0 or s[-1] <= rank_tolerance * s[0]:
        raise RankDeficiencyError(
            f"regressor is rank deficient: singular values {s} (relative tolerance {rank_tolerance})")
    for arr in (U1, s, Vt):
        arr.setflags(write=False)
    return ProjectionBasis(U1, s, Vt.T, rank_tolerance)


def project_model_subspace(basis: ProjectionBasis, v) -> np.ndarray:
    return basis.U1 @ basis.coefficients(v)


def project_complement(basis: ProjectionBasis, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v - project_model_subspace(basis, v)


def stacked_least_squares(regressors, targets, rank_tolerance: float = DEFAULT_RANK_TOLERANCE) -> np.ndarray:
    """Minimise ``sum_j ||t_j - M_j theta||^2`` through the SVD of the stacked regressor."""
    M = np.vstack(regressors)
    t = np.concatenate(targets)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s[0] == 0.0 or s[-1] <= rank_tolerance * s[0]:
        raise RankDeficiencyError(f"stacked regressor is rank deficient: singular values {s}")
    return Vt.T @ ((U.T @ t) / s)


def closed_form_ls(dataset, n_theta: int | None = None) -> LinearModel:
    """Best linear approximation of the dataset's inverse dynamics."""
    n_theta = dataset.n_theta if n_theta is None else n_theta
    regs = [build_regressor(e.reference, n_theta) for e in dataset]
    targets = [np.asarray(e.optimal_input.samples) for e in dataset]
    return LinearModel(stacked_least_squares(regs, targets))
