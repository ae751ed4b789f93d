"""Experiment configuration and the generate/train/evaluate pipeline steps.

A config is a single JSON document. Every field has a default, and the fully
expanded form is written next to whatever a pipeline step produces, so each
output directory records exactly how it was made.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .objectives import KINDS, ObjectiveConfig
from .plant import StribeckPlant, load_dataset, round_trip_error, save_dataset, synthesize_dataset
from .signals import ReferenceSpec, generate_reference
from .training import AdamConfig, ConvergenceConfig, LBFGSConfig, TrainConfig

OBJECTIVE_CHOICES = ("model_only",) + KINDS
ROUND_TRIP_TOLERANCE = 1e-8


def default_training_specs(sample_rate: float = 100.0) -> list:
    """Nine point-to-point references with peak velocities spread over 0.1..0.6."""
    accels = (1.0, 2.0, 4.0)
    specs = []
    for i, v in enumerate(np.linspace(0.1, 0.6, 9)):
        a = accels[i % 3]
        specs.append(ReferenceSpec(
            displacement=round(1.5 * float(v), 4),
            max_velocity=float(v),
            max_acceleration=a,
            max_jerk=10.0 * a,
            max_snap=200.0 * a,
            sample_rate=sample_rate,
            dwell_samples=100,
        ))
    return specs


def similar_spec(sample_rate: float = 100.0) -> ReferenceSpec:
    """Inside the training envelope."""
    return ReferenceSpec(0.6, 0.4, 1.5, 15.0, 300.0, sample_rate, 100)


def extrapolation_spec(sample_rate: float = 100.0) -> ReferenceSpec:
    """Peak velocity 2.0, well outside the low-velocity friction band."""
    return ReferenceSpec(3.0, 2.0, 4.0, 40.0, 800.0, sample_rate, 100)


def _spec(d) -> ReferenceSpec:
    return d if isinstance(d, ReferenceSpec) else ReferenceSpec(**d)


@dataclass
class ExperimentConfig:
    plant: StribeckPlant = field(default_factory=StribeckPlant)
    references: list = field(default_factory=default_training_specs)
    n_theta: int = 3
    objective: str = "orthogonal_regularized"
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: list = field(default_factory=lambda: [0])
    evaluation_references: dict = field(default_factory=lambda: {
        "similar": similar_spec(),
        "extrapolation": extrapolation_spec(),
    })
    out: str = "runs"

    def __post_init__(self):
        if self.objective not in OBJECTIVE_CHOICES:
            raise ValueError(f"unknown objective {self.objective!r}; expected one of {OBJECTIVE_CHOICES}")
        if self.n_theta < 1:
            raise ValueError("n_theta must be positive")
        self.references = [_spec(s) for s in self.references]
        self.evaluation_references = {k: _spec(v) for k, v in self.evaluation_references.items()}
        self.seeds = [int(s) for s in self.seeds]
        # keep the training config's criterion in step with the chosen objective
        self.train = replace(self.train, objective=objective_config(self.objective, self.train.objective.lam),
                             parametrization=parametrization_of(self.objective))

    @property
    def lam(self) -> float:
        return self.train.objective.lam

    def with_overrides(self, objective=None, lam=None, seeds=None, out=None, linear=False,
                       max_iterations=None) -> "ExperimentConfig":
        cfg = replace(self)
        if lam is not None:
            cfg.train = replace(cfg.train, objective=ObjectiveConfig(cfg.train.objective.kind, float(lam)))
        if objective is not None:
            cfg.objective = objective
        if max_iterations is not None:
            cfg.train = replace(cfg.train, max_iterations=int(max_iterations))
        if seeds is not None:
            cfg.seeds = list(seeds)
        if out is not None:
            cfg.out = str(out)
        if linear:
            cfg.plant = cfg.plant.linearized()
        cfg.__post_init__()
        return cfg

    def to_dict(self):
        return {
            "plant": self.plant.to_dict(),
            "references": [s.to_dict() for s in self.references],
            "n_theta": self.n_theta,
            "objective": self.objective,
            "lambda": self.lam,
            "train": self.train.to_dict(),
            "seeds": list(self.seeds),
            "evaluation_references": {k: v.to_dict() for k, v in self.evaluation_references.items()},
            "out": self.out,
        }

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        d = dict(d)
        kwargs = {}
        if "plant" in d:
            kwargs["plant"] = StribeckPlant(**d["plant"])
        if "references" in d:
            kwargs["references"] = [_spec(s) for s in d["references"]]
        for key in ("n_theta", "objective", "seeds", "out"):
            if key in d:
                kwargs[key] = d[key]
        if "evaluation_references" in d:
            kwargs["evaluation_references"] = d["evaluation_references"]
        train = TrainConfig.from_dict(d["train"]) if "train" in d else TrainConfig()
        if "lambda" in d:
            train = replace(train, objective=ObjectiveConfig(train.objective.kind, float(d["lambda"])))
        kwargs["train"] = train
        unknown = set(d) - {"plant", "references", "n_theta", "objective", "lambda", "train", "seeds",
                            "evaluation_references", "out"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kwargs)


def objective_config(objective: str, lam: float = 0.01) -> ObjectiveConfig:
    kind = "least_squares" if objective == "model_only" else objective
    return ObjectiveConfig(kind, lam)


def parametrization_of(objective: str) -> str:
    return "model_only" if objective == "model_only" else "parallel"


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))


def write_config(config: ExperimentConfig, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "config.json"
    path.write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    return path


# ---------------------------------------------------------------------------
# pipeline steps
# ---------------------------------------------------------------------------


class IntegrityError(RuntimeError):
    """A dataset on disk failed its consistency checks."""


def generate(config: ExperimentConfig, directory):
    """Synthesize the training dataset, check the round trip and write it out."""
    dataset = synthesize_dataset(config.references, config.plant, config.n_theta)
    check_dataset(dataset)
    save_dataset(dataset, directory)
    write_config(config, directory)
    return dataset


def check_dataset(dataset, tolerance: float = ROUND_TRIP_TOLERANCE):
    """Every entry must be finite and reproduce its reference under simulation."""
    for j, entry in enumerate(dataset):
        if not (np.all(np.isfinite(entry.reference.samples)) and np.all(np.isfinite(entry.optimal_input.samples))):
            raise IntegrityError(f"entry {j} contains non-finite samples")
        err = round_trip_error(entry, dataset.plant)
        if not err <= tolerance:
            raise IntegrityError(f"entry {j}: round-trip error {err:.3g} exceeds {tolerance:.1g}")


def open_dataset(directory):
    dataset = load_dataset(directory)
    check_dataset(dataset)
    return dataset


def run_name(objective: str, lam: float, seed: int) -> str:
    if objective == "orthogonal_regularized":
        return f"{objective}_lam{lam:g}_seed{seed}"
    return f"{objective}_seed{seed}"


def evaluation_references(config: ExperimentConfig) -> dict:
    return {name: generate_reference(spec) for name, spec in config.evaluation_references.items()}
