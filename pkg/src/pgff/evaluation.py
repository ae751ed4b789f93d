"""Filter application, feedforward/tracking metrics and the seed study."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .linmodel import LinearModel, build_regressor, decompose, project_complement
from .objectives import FitProblem, ObjectiveConfig
from .plant import StribeckPlant, exact_inverse, forward_simulate
from .signals import Trajectory
from .training import TrainConfig, train

BASIS_MODES = ("none", "regularized", "explicit_projection")


@dataclass
class FilterUnderTest:
    """A trained feedforward filter: linear model plus optional network.

    ``network`` only needs a ``forward(X)`` method, so analytic stand-ins can
    be evaluated the same way as trained networks.
    """

    theta: LinearModel
    network: object = None
    objective_kind: str = "least_squares"
    basis_mode: str = "none"
    name: str = ""

    def __post_init__(self):
        if not isinstance(self.theta, LinearModel):
            self.theta = LinearModel(self.theta)
        if self.basis_mode not in BASIS_MODES:
            raise ValueError(f"unknown basis mode {self.basis_mode!r}")

    @classmethod
    def from_report(cls, report, name=""):
        """Build from a :class:`TrainReport` or a loaded report dict."""
        get = (lambda k: report[k]) if isinstance(report, dict) else (lambda k: getattr(report, k))
        config = get("config")
        kind = config.objective.kind
        if config.parametrization == "model_only":
            mode = "none"
        elif kind == "explicit_projection":
            mode = "explicit_projection"
        elif kind == "orthogonal_regularized":
            mode = "regularized"
        else:
            mode = "none"
        return cls(get("final_theta"), get("final_network"), kind, mode, name)


def apply_filter(filt: FilterUnderTest, reference: Trajectory):
    """Return ``(f, f_model, f_net)`` for one reference."""
    n_theta = filt.theta.n_theta
    M = build_regressor(reference, n_theta)
    f_model = M @ filt.theta.theta
    if filt.network is None:
        f_net = np.zeros_like(f_model)
    else:
        f_net = np.asarray(filt.network.forward(M), dtype=float)
        if filt.basis_mode == "explicit_projection":
            f_net = project_complement(decompose(M), f_net)
    fs = reference.sample_rate
    return Trajectory(f_model + f_net, fs), Trajectory(f_model, fs), Trajectory(f_net, fs)


def _rms(x):
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x * x))) if x.size else 0.0


@dataclass
class ReferenceResult:
    name: str
    ffw_rmse: float
    tracking_rmse: float
    model_energy: float
    network_energy: float
    series: dict = field(repr=False, default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "ffw_rmse": self.ffw_rmse,
            "tracking_rmse": self.tracking_rmse,
            "model_energy": self.model_energy,
            "network_energy": self.network_energy,
        }


@dataclass
class EvalReport:
    filter_name: str
    references: list
    theta: np.ndarray
    theta_error: float

    def by_name(self, name) -> ReferenceResult:
        for r in self.references:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self):
        return {
            "filter": self.filter_name,
            "theta": np.asarray(self.theta).tolist(),
            "theta_error": self.theta_error,
            "references": [r.to_dict() for r in self.references],
        }

    def write_series(self, directory) -> list:
        """One CSV per reference with the signals behind a Fig.-4 style plot."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        cols = ["k", "r", "f_hat", "f", "f_model", "f_net", "y", "e"]
        for res in self.references:
            path = directory / f"{self.filter_name or 'filter'}_{res.name}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(cols)
                n = len(res.series["r"])
                for k in range(n):
                    w.writerow([k + 1] + [repr(float(res.series[c][k])) for c in cols[1:]])
            paths.append(path)
        return paths


def evaluate(filt: FilterUnderTest, references, plant: StribeckPlant, names=None) -> EvalReport:
    """Feedforward error against the exact inverse and tracking error in simulation.

    The tracking RMS skips the first ``n_theta`` samples, where the
    backward-difference warm-up dominates.
    """
    references = list(references)
    names = list(names) if names is not None else [f"ref{i}" for i in range(len(references))]
    n_theta = filt.theta.n_theta
    results = []
    for name, ref in zip(names, references):
        f, f_model, f_net = apply_filter(filt, ref)
        f_hat = exact_inverse(ref, plant)
        y = forward_simulate(f, plant)
        e = ref.samples - y.samples
        results.append(ReferenceResult(
            name=name,
            ffw_rmse=_rms(f_hat.samples - f.samples),
            tracking_rmse=_rms(e[n_theta:]),
            model_energy=float(f_model.samples @ f_model.samples),
            network_energy=float(f_net.samples @ f_net.samples),
            series={"r": ref.samples, "f_hat": f_hat.samples, "f": f.samples, "f_model": f_model.samples,
                    "f_net": f_net.samples, "y": y.samples, "e": e},
        ))
    a = plant.linear_coefficients
    theta = filt.theta.theta
    err = float(np.linalg.norm(theta - a[:theta.shape[0]])) if theta.shape[0] <= a.shape[0] else float("nan")
    return EvalReport(filt.name, results, theta, err)


@dataclass
class SeedStudy:
    seeds: list
    thetas: np.ndarray
    final_losses: np.ndarray
    config: TrainConfig

    @property
    def mean(self):
        return self.thetas.mean(axis=0)

    @property
    def std(self):
        return self.thetas.std(axis=0)

    @property
    def min(self):
        return self.thetas.min(axis=0)

    @property
    def max(self):
        return self.thetas.max(axis=0)

    @property
    def spread(self):
        return self.max - self.min

    @property
    def loss_ratio(self) -> float:
        """Largest final loss divided by the smallest."""
        return float(self.final_losses.max() / self.final_losses.min())

    def to_dict(self):
        return {
            "objective": self.config.objective.kind,
            "lambda": self.config.objective.lam,
            "parametrization": self.config.parametrization,
            "seeds": list(self.seeds),
            "thetas": self.thetas.tolist(),
            "final_losses": self.final_losses.tolist(),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "min": self.min.tolist(),
            "max": self.max.tolist(),
            "spread": self.spread.tolist(),
            "note": "seed spread is this tool's operational measure of non-uniqueness",
        }

    def table(self) -> str:
        lines = [f"{'coef':>6} {'mean':>12} {'std':>12} {'min':>12} {'max':>12}"]
        for i in range(self.thetas.shape[1]):
            lines.append(f"theta{i:<1} {self.mean[i]:12.5f} {self.std[i]:12.5f} {self.min[i]:12.5f} {self.max[i]:12.5f}")
        lines.append(f"final loss range: {self.final_losses.min():.6g} .. {self.final_losses.max():.6g}")
        return "\n".join(lines)


def nonuniqueness_study(objective, dataset, n_seeds: int, base_seed: int = 0, reports=None) -> SeedStudy:
    """Train ``n_seeds`` independently seeded runs and summarise theta.

    ``objective`` is a :class:`TrainConfig` template or an
    :class:`ObjectiveConfig` (parallel parametrization assumed). Finished
    reports are appended to ``reports`` when a list is passed.
    """
    if n_seeds < 5:
        raise ValueError("a seed study needs at least 5 seeds")
    config = objective if isinstance(objective, TrainConfig) else TrainConfig(objective=objective)
    problem = FitProblem(dataset)
    seeds = [base_seed + i for i in range(n_seeds)]
    thetas, losses = [], []
    for seed in seeds:
        rep = train(replace(config, seed=seed), problem)
        thetas.append(rep.final_theta.theta)
        losses.append(rep.final_loss)
        if reports is not None:
            reports.append(rep)
    return SeedStudy(seeds, np.array(thetas), np.array(losses), config)


def save_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2) + "\n")
    return path
