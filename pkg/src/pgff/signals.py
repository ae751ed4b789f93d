"""Discrete-time signals, backward-difference derivatives and reference profiles."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels

DEFAULT_SAMPLE_RATE = 100.0


class InfeasibleReferenceError(ValueError):
    """Raised when no motion profile satisfies the requested bounds."""


@dataclass(frozen=True)
class Trajectory:
    """A finite signal ``r(1..N)`` sampled at ``sample_rate`` Hz."""

    samples: np.ndarray
    sample_rate: float = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if samples.shape[0] < 2:
            raise ValueError("a trajectory needs at least 2 samples")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    def __len__(self):
        return self.length


def derivative(traj: Trajectory, order: int, initial_history=None) -> Trajectory:
    """Backward-difference derivative of the given order.

    ``initial_history[n]`` is the value of the n-th derivative at the sample
    just before the window (k = 0); it defaults to zero, i.e. the signal is at
    rest before the task starts.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    if order == 0:
        return traj
    history = np.zeros(order) if initial_history is None else np.asarray(initial_history, dtype=float)
    if history.shape[0] < order:
        raise ValueError(f"initial_history needs {order} entries, got {history.shape[0]}")
    x = traj.samples
    for n in range(order):
        x = kernels.backward_difference(np.ascontiguousarray(x), traj.sample_rate, float(history[n]))
    return Trajectory(x, traj.sample_rate)


def build_stack(traj: Trajectory, m: int, initial_history=None) -> np.ndarray:
    """Return the ``N x (m+1)`` matrix whose column n is the n-th derivative."""
    if m < 0:
        raise ValueError("m must be non-negative")
    history = np.zeros(m) if initial_history is None else np.asarray(initial_history, dtype=float)
    cols = [np.asarray(traj.samples, dtype=float)]
    for n in range(m):
        cols.append(kernels.backward_difference(cols[-1], traj.sample_rate, float(history[n])))
    return np.column_stack(cols)


@dataclass(frozen=True)
class ReferenceSpec:
    displacement: float
    max_velocity: float
    max_acceleration: float
    max_jerk: float
    max_snap: float
    sample_rate: float = DEFAULT_SAMPLE_RATE
    dwell_samples: int = 50

    @property
    def bounds(self):
        return (self.max_velocity, self.max_acceleration, self.max_jerk, self.max_snap)

    def to_dict(self):
        return {
            "displacement": self.displacement,
            "max_velocity": self.max_velocity,
            "max_acceleration": self.max_acceleration,
            "max_jerk": self.max_jerk,
            "max_snap": self.max_snap,
            "sample_rate": self.sample_rate,
            "dwell_samples": self.dwell_samples,
        }


def _box(n):
    return np.full(n, 1.0 / n)


def _profile_kernel(widths):
    kernel = np.ones(1)
    for n in widths:
        kernel = np.convolve(kernel, _box(n))
    return kernel


def _stage_widths(distance, bounds, fs):
    # each stage width is the smallest whole number of samples that keeps
    # the corresponding peak below its bound
    widths = []
    level = distance
    for bound in bounds:
        n = max(1, math.ceil(level * fs / bound * (1 - 1e-12)))
        widths.append(n)
        level = level / (n / fs)
    return widths


def generate_reference(spec: ReferenceSpec, max_refinements: int = 10_000) -> Trajectory:
    """Snap-limited point-to-point profile from 0 to ``spec.displacement``.

    The velocity is a cascade of four normalised moving averages (velocity,
    acceleration, jerk and snap stages), so snap is piecewise constant and the
    profile starts and ends at rest. Stages are widened until every bound
    holds on the backward-difference derivatives.
    """
    fs = spec.sample_rate
    bounds = np.array(spec.bounds, dtype=float)
    if not (fs > 0 and np.all(np.isfinite(bounds)) and np.all(bounds > 0)):
        raise InfeasibleReferenceError(f"bounds must be positive and finite: {spec}")
    if spec.dwell_samples < 0:
        raise InfeasibleReferenceError("dwell_samples must be non-negative")
    distance = abs(float(spec.displacement))
    if not math.isfinite(distance):
        raise InfeasibleReferenceError("displacement must be finite")
    if distance == 0.0:
        return Trajectory(np.zeros(max(2, 2 * spec.dwell_samples + 1)), fs)

    widths = _stage_widths(distance, bounds, fs)
    limit = bounds * (1 + 1e-9)
    for _ in range(max_refinements):
        motion = spec.displacement * np.cumsum(_profile_kernel(widths))
        samples = np.concatenate([
            np.zeros(spec.dwell_samples),
            motion,
            # four extra held samples let every backward difference up to snap return to zero
            np.full(spec.dwell_samples + 4, motion[-1]),
        ])
        traj = Trajectory(samples, fs)
        peaks = np.abs(build_stack(traj, 4)[:, 1:]).max(axis=0)
        over = np.nonzero(peaks > limit)[0]
        if over.size == 0:
            return traj
        widths[over[0]] += 1
    raise InfeasibleReferenceError(f"could not satisfy bounds after {max_refinements} refinements: {spec}")


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    """Write ``k,r`` rows plus a ``<stem>.json`` sidecar holding the rate."""
    path = Path(path)
    k = np.arange(1, traj.length + 1)
    with path.open("w") as fh:
        fh.write("k,r\n")
        for ki, ri in zip(k, traj.samples):
            fh.write(f"{ki},{float(ri)!r}\n")
    path.with_suffix(".json").write_text(json.dumps({"sample_rate_hz": traj.sample_rate}) + "\n")
    return path


def read_trajectory_csv(path) -> Trajectory:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Trajectory(data[:, 1], meta["sample_rate_hz"])
