"""Mass-damper benchmark system with Stribeck-like friction."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .signals import ReferenceSpec, Trajectory, build_stack, generate_reference


class SimulationError(RuntimeError):
    """The per-sample implicit solve did not converge."""


@dataclass(frozen=True)
class StribeckPlant:
    """``m*y'' + c1*y' + (c2 - c1)/cosh(alpha*y') * y' = f``."""

    mass: float = 5.0
    c1: float = 1.0
    c2: float = 20.0
    alpha: float = 20.0
    sample_rate: float = 100.0

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not (self.c2 >= self.c1 > 0):
            raise ValueError("need c2 >= c1 > 0")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")

    @property
    def linear_coefficients(self) -> np.ndarray:
        """Stiffness, damping and mass coefficients ``[0, c1, m]``."""
        a = np.array([0.0, self.c1, self.mass])
        a.setflags(write=False)
        return a

    def linearized(self) -> "StribeckPlant":
        return StribeckPlant(self.mass, self.c1, self.c1, self.alpha, self.sample_rate)

    def to_dict(self):
        return {"mass": self.mass, "c1": self.c1, "c2": self.c2, "alpha": self.alpha,
                "sample_rate": self.sample_rate}


def friction_nonlinearity(velocity, plant: StribeckPlant):
    """Nonlinear part of the friction force, excluding ``c1 * velocity``."""
    v = np.asarray(velocity, dtype=float)
    # v / cosh(alpha v) written with exp(-alpha |v|) so large speeds cannot overflow
    e = np.exp(-plant.alpha * np.abs(v))
    out = (plant.c2 - plant.c1) * v * (2.0 * e / (1.0 + e * e))
    return float(out) if out.ndim == 0 else out


def exact_inverse(reference: Trajectory, plant: StribeckPlant) -> Trajectory:
    """Input that makes the plant output equal ``reference`` exactly."""
    if reference.length < 3:
        raise ValueError("reference must have at least 3 samples")
    stack = build_stack(reference, 2)
    vel, acc = stack[:, 1], stack[:, 2]
    f = plant.mass * acc + plant.c1 * vel + friction_nonlinearity(vel, plant)
    return Trajectory(f, reference.sample_rate)


def forward_simulate(inputs: Trajectory, plant: StribeckPlant, tol: float = 1e-12,
                     max_iter: int = 100) -> Trajectory:
    """Output of the plant, at rest before the first sample, under ``inputs``.

    Each sample solves the scalar implicit equation in the new velocity with a
    bracketed Newton iteration.
    """
    f = np.ascontiguousarray(inputs.samples, dtype=float)
    y, status = kernels.simulate_stribeck(
        f, plant.mass, plant.c1, plant.c2, plant.alpha, inputs.sample_rate, tol, max_iter)
    if status >= 0:
        raise SimulationError(f"implicit solve did not converge at sample {status + 1}")
    return Trajectory(y, inputs.sample_rate)


def simulation_residual(inputs: Trajectory, output: Trajectory, plant: StribeckPlant) -> np.ndarray:
    """``a^T y~ + g(y') - f`` evaluated on the returned samples."""
    stack = build_stack(output, 2)
    vel, acc = stack[:, 1], stack[:, 2]
    return plant.mass * acc + plant.c1 * vel + friction_nonlinearity(vel, plant) - inputs.samples


@dataclass(frozen=True)
class DatasetEntry:
    reference: Trajectory
    optimal_input: Trajectory

    def __post_init__(self):
        if self.reference.length != self.optimal_input.length:
            raise ValueError("reference and optimal input lengths differ")
        if self.reference.sample_rate != self.optimal_input.sample_rate:
            raise ValueError("reference and optimal input sample rates differ")


@dataclass(frozen=True)
class Dataset:
    entries: tuple
    plant: StribeckPlant
    n_theta: int = 3
    specs: tuple = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "specs", tuple(self.specs))

    @property
    def count(self) -> int:
        return len(self.entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, j):
        return self.entries[j]


def synthesize_dataset(specs, plant: StribeckPlant, n_theta: int = 3) -> Dataset:
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one reference spec")
    entries = []
    for spec in specs:
        ref = generate_reference(spec)
        if ref.sample_rate != plant.sample_rate:
            raise ValueError("reference and plant sample rates differ")
        entries.append(DatasetEntry(ref, exact_inverse(ref, plant)))
    return Dataset(tuple(entries), plant, n_theta, tuple(specs))


def round_trip_error(entry: DatasetEntry, plant: StribeckPlant) -> float:
    y = forward_simulate(entry.optimal_input, plant)
    return float(np.max(np.abs(y.samples - entry.reference.samples)))


# ---------------------------------------------------------------------------
# on-disk layout: meta.json + entry_<j>.csv (k,r,f_hat)
# ---------------------------------------------------------------------------


def save_dataset(dataset: Dataset, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "plant": dataset.plant.to_dict(),
        "sample_rate_hz": dataset.plant.sample_rate,
        "n_entries": dataset.count,
        "n_theta": dataset.n_theta,
        "reference_specs": [s.to_dict() for s in dataset.specs],
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    for j, entry in enumerate(dataset.entries):
        with (directory / f"entry_{j}.csv").open("w") as fh:
            fh.write("k,r,f_hat\n")
            for k, (r, f) in enumerate(zip(entry.reference.samples, entry.optimal_input.samples), start=1):
                fh.write(f"{k},{float(r)!r},{float(f)!r}\n")
    return directory


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no meta.json in {directory}")
    meta = json.loads(meta_path.read_text())
    plant = StribeckPlant(**meta["plant"])
    fs = meta["sample_rate_hz"]
    entries = []
    for j in range(meta["n_entries"]):
        data = np.loadtxt(directory / f"entry_{j}.csv", delimiter=",", skiprows=1, ndmin=2)
        entries.append(DatasetEntry(Trajectory(data[:, 1], fs), Trajectory(data[:, 2], fs)))
    specs = tuple(ReferenceSpec(**s) for s in meta.get("reference_specs", []))
    return Dataset(tuple(entries), plant, meta.get("n_theta", 3), specs)
