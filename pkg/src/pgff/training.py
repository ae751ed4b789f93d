"""Full-batch optimisation of the filter parameters: L-BFGS warm start, then ADAM."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .linmodel import LinearModel
from .neuralnet import ACTIVATIONS, Network, init_network
from .objectives import (
    FitProblem,
    ObjectiveConfig,
    model_subspace_theta,
    value_and_grad,
    value_and_grad_flat,
)

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """The loss or its gradient became non-finite."""


@dataclass(frozen=True)
class AdamConfig:
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")


@dataclass(frozen=True)
class LBFGSConfig:
    iterations: int = 50
    memory: int = 10
    line_search_max_steps: int = 40


@dataclass(frozen=True)
class ConvergenceConfig:
    grad_norm_tol: float = 1e-8
    loss_rel_tol: float = 1e-12
    patience: int = 200


@dataclass(frozen=True)
class TrainConfig:
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    parametrization: str = "parallel"  # or "model_only"
    hidden_layers: tuple = (5, 5)
    activation: str = "tanh"
    max_iterations: int = 50_000
    adam: AdamConfig = field(default_factory=AdamConfig)
    lbfgs: LBFGSConfig | None = field(default_factory=LBFGSConfig)
    seed: int = 0
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)

    def __post_init__(self):
        if self.parametrization not in ("parallel", "model_only"):
            raise ValueError(f"unknown parametrization {self.parametrization!r}")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["objective"] = ObjectiveConfig(**d.get("objective", {}))
        d["adam"] = AdamConfig(**d.get("adam", {}))
        d["lbfgs"] = None if d.get("lbfgs", {}) is None else LBFGSConfig(**d.get("lbfgs", {}))
        d["convergence"] = ConvergenceConfig(**d.get("convergence", {}))
        if "hidden_layers" in d:
            d["hidden_layers"] = tuple(d["hidden_layers"])
        return cls(**d)


@dataclass
class TrainReport:
    loss_history: np.ndarray  # rows of (total, j1, j2, j3)
    final_theta: LinearModel
    final_network: Network | None
    iterations_run: int
    converged: bool
    seed: int
    wall_time: float
    config: TrainConfig
    lbfgs_iterations: int = 0
    stop_reason: str = ""

    @property
    def final_loss(self) -> float:
        return float(self.loss_history[-1, 0])

    @property
    def initial_loss(self) -> float:
        return float(self.loss_history[0, 0])

    def to_dict(self):
        return {
            "final_theta": self.final_theta.theta.tolist(),
            "final_loss": self.final_loss,
            "initial_loss": self.initial_loss,
            "iterations_run": self.iterations_run,
            "lbfgs_iterations": self.lbfgs_iterations,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "seed": self.seed,
            "wall_time": self.wall_time,
            "config": self.config.to_dict(),
            "network": None if self.final_network is None else self.final_network.to_dict(),
        }

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.json").write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        with (directory / "loss_history.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "total", "j1", "j2", "j3"])
            for i, row in enumerate(self.loss_history):
                w.writerow([i] + [repr(float(x)) for x in row])
        if self.final_network is not None:
            (directory / "network.json").write_text(json.dumps(self.final_network.to_dict()) + "\n")
        return directory


def load_report(directory) -> dict:
    directory = Path(directory)
    data = json.loads((directory / "report.json").read_text())
    data["config"] = TrainConfig.from_dict(data["config"])
    data["final_network"] = None if data["network"] is None else Network.from_dict(data["network"])
    data["final_theta"] = LinearModel(data["final_theta"])
    return data


# ---------------------------------------------------------------------------
# optimisers on flat parameter vectors
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(state: AdamState, params, grads, hyper: AdamConfig):
    """One bias-corrected ADAM update; returns the new state and parameters."""
    t = state.t + 1
    m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * grads
    v = hyper.beta2 * state.v + (1.0 - hyper.beta2) * grads * grads
    m_hat = m / (1.0 - hyper.beta1 ** t)
    v_hat = v / (1.0 - hyper.beta2 ** t)
    new = params - hyper.step_size * m_hat / (np.sqrt(v_hat) + hyper.epsilon)
    return AdamState(m, v, t), new


@dataclass
class LBFGSResult:
    params: np.ndarray
    loss: float
    iterations: int
    line_search_failed: bool
    history: list


def lbfgs_phase(params, loss_fn, grad_fn=None, iterations=50, memory=10, c_armijo=1e-4,
                max_backtracks=40, grad_tol=0.0, callback=None) -> LBFGSResult:
    """Limited-memory BFGS with a halving Armijo backtracking line search.

    ``loss_fn(x)`` returns the loss, or ``(loss, grad)`` when ``grad_fn`` is
    ``None``. Only steps that strictly decrease the loss are accepted, so the
    returned loss never exceeds the starting loss.
    """
    if grad_fn is None:
        fg = loss_fn
    else:
        def fg(x):
            return loss_fn(x), grad_fn(x)

    x = np.array(params, dtype=float)
    f, g = fg(x)
    f = float(f)
    if not np.isfinite(f):
        raise DivergenceError("initial loss is not finite")
    history = [f]
    s_list, y_list = [], []
    failed = False
    it = 0
    for it in range(1, iterations + 1):
        gnorm = np.linalg.norm(g)
        if gnorm <= grad_tol or gnorm == 0.0:
            it -= 1
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(s_list), reversed(y_list)):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            alphas.append((a, rho, s, y))
            q -= a * y
        if s_list:
            q *= (s_list[-1] @ y_list[-1]) / (y_list[-1] @ y_list[-1])
        else:
            q *= min(1.0, 1.0 / np.abs(g).sum())
        for a, rho, s, y in reversed(alphas):
            b = rho * (y @ q)
            q += (a - b) * s
        d = -q
        gtd = g @ d
        if not gtd < 0:
            s_list.clear()
            y_list.clear()
            d = -g * min(1.0, 1.0 / np.abs(g).sum())
            gtd = g @ d
        step = 1.0
        accepted = False
        for _ in range(max_backtracks):
            x_new = x + step * d
            f_new, g_new = fg(x_new)
            f_new = float(f_new)
            if np.isfinite(f_new) and f_new < f and f_new <= f + c_armijo * step * gtd:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            failed = True
            it -= 1
            break
        s = x_new - x
        y = g_new - g
        if y @ s > 1e-10 * np.linalg.norm(y) * np.linalg.norm(s):
            s_list.append(s)
            y_list.append(y)
            if len(s_list) > memory:
                s_list.pop(0)
                y_list.pop(0)
        x, f, g = x_new, f_new, g_new
        history.append(f)
        if callback is not None:
            callback(x, f)
    return LBFGSResult(x, f, it, failed, history)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


class _Packing:
    """Maps (theta, network) to and from one flat optimisation vector."""

    def __init__(self, n_theta, net_template, train_theta=True):
        self.n_theta = n_theta
        self.net_template = net_template
        self.train_theta = train_theta

    def pack(self, theta, net):
        parts = []
        if self.train_theta:
            parts.append(np.asarray(theta, dtype=float))
        if net is not None:
            parts.append(net.flatten())
        return np.concatenate(parts) if parts else np.zeros(0)

    def unpack(self, x, fixed_theta=None):
        if self.train_theta:
            theta = x[:self.n_theta]
            rest = x[self.n_theta:]
        else:
            theta = fixed_theta
            rest = x
        net = None if self.net_template is None else self.net_template.with_params(rest)
        return theta, net


def flatten_parameters(theta, net):
    """Concatenate theta and the network parameters (network may be ``None``)."""
    return _Packing(len(np.asarray(theta)), net).pack(theta, net)


def unflatten_parameters(x, n_theta, net_template):
    return _Packing(n_theta, net_template).unpack(np.asarray(x, dtype=float))


def _initial_parameters(config: TrainConfig, problem: FitProblem, initial):
    if initial is not None:
        theta, net = initial
        theta = np.array(getattr(theta, "theta", theta), dtype=float)
        net = None if net is None else net.copy()
        if config.parametrization == "model_only":
            net = None
        return theta, net
    theta = np.zeros(problem.n_theta)
    if config.parametrization == "model_only":
        return theta, None
    sizes = [problem.n_theta, *config.hidden_layers, 1]
    net = init_network(sizes, config.activation, np.random.default_rng(config.seed))
    return theta, net


def train(config: TrainConfig, dataset_or_problem, initial=None) -> TrainReport:
    """Optimise the filter parameters under ``config.objective``.

    With the explicit-projection criterion the model coefficients are fixed to
    their closed-form stacked least-squares value and only the network is
    optimised, since that criterion separates into two independent problems.
    The returned parameters are the best iterate seen.
    """
    start = time.perf_counter()
    problem = dataset_or_problem if isinstance(dataset_or_problem, FitProblem) else FitProblem(dataset_or_problem)
    problem.require_bases()
    objective = config.objective
    theta0, net0 = _initial_parameters(config, problem, initial)

    disjoint = objective.kind == "explicit_projection"
    fixed_theta = None
    if disjoint:
        fixed_theta = model_subspace_theta(problem)
        theta0 = fixed_theta
    packing = _Packing(problem.n_theta, net0, train_theta=not disjoint)

    n_free_theta = 0 if disjoint else problem.n_theta
    sizes = None if net0 is None else net0.sizes
    act = None if net0 is None else ACTIVATIONS[net0.activation]

    def evaluate(x):
        theta = fixed_theta if disjoint else x[:n_free_theta]
        if net0 is None:
            breakdown, g_theta, g_phi = value_and_grad(objective, theta, None, problem)
        else:
            breakdown, g_theta, g_phi = value_and_grad_flat(objective, theta, x[n_free_theta:], sizes, act, problem)
        parts = []
        if packing.train_theta:
            parts.append(g_theta)
        if g_phi is not None:
            parts.append(g_phi)
        grad = np.concatenate(parts) if parts else np.zeros(0)
        if not (np.isfinite(breakdown.total) and np.all(np.isfinite(grad))):
            raise DivergenceError(f"non-finite loss or gradient (loss={breakdown.total})")
        return breakdown, grad

    x = packing.pack(theta0, net0)
    breakdown, grad = evaluate(x)
    history = [breakdown.as_tuple()]
    best_x, best_loss = x.copy(), breakdown.total
    lbfgs_its = 0
    converged = False
    stop_reason = "max_iterations"

    if x.size == 0:
        converged, stop_reason = True, "no_free_parameters"
    elif config.lbfgs is not None and config.lbfgs.iterations > 0:
        last = {}

        def fg(z):
            last["breakdown"], g = evaluate(z)
            return last["breakdown"].total, g

        def record(z, f):
            # the accepted point is always the most recent evaluation
            history.append(last["breakdown"].as_tuple())

        res = lbfgs_phase(x, fg, iterations=config.lbfgs.iterations, memory=config.lbfgs.memory,
                          max_backtracks=config.lbfgs.line_search_max_steps, callback=record)
        lbfgs_its = res.iterations
        x = res.params
        breakdown, grad = evaluate(x)
        if breakdown.total <= best_loss:
            best_x, best_loss = x.copy(), breakdown.total
        if res.line_search_failed:
            log.info("L-BFGS line search failed after %d iterations; continuing with ADAM", lbfgs_its)

    conv = config.convergence
    state = AdamState.zeros(x.size)
    best_trace = [best_loss]
    adam_its = 0
    for adam_its in range(1, (config.max_iterations if x.size else 0) + 1):
        if np.linalg.norm(grad) <= conv.grad_norm_tol * (1.0 + breakdown.total):
            converged, stop_reason = True, "grad_norm"
            adam_its -= 1
            break
        if len(best_trace) > conv.patience:
            past = best_trace[-conv.patience - 1]
            if past - best_loss <= conv.loss_rel_tol * abs(best_loss):
                converged, stop_reason = True, "loss_plateau"
                adam_its -= 1
                break
        state, x = adam_step(state, x, grad, config.adam)
        breakdown, grad = evaluate(x)
        history.append(breakdown.as_tuple())
        if breakdown.total < best_loss:
            best_x, best_loss = x.copy(), breakdown.total
        best_trace.append(best_loss)

    theta, net = packing.unpack(best_x, fixed_theta)
    final = value_and_grad(objective, theta, net, problem)[0]
    history.append(final.as_tuple())
    return TrainReport(
        loss_history=np.array(history, dtype=float),
        final_theta=LinearModel(theta),
        final_network=net,
        iterations_run=lbfgs_its + adam_its,
        converged=converged,
        seed=config.seed,
        wall_time=time.perf_counter() - start,
        config=config,
        lbfgs_iterations=lbfgs_its,
        stop_reason=stop_reason,
    )
