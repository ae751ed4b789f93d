import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pgff.signals import (
    InfeasibleReferenceError,
    ReferenceSpec,
    Trajectory,
    build_stack,
    derivative,
    generate_reference,
    read_trajectory_csv,
    write_trajectory_csv,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)
signals = arrays(np.float64, st.integers(2, 60), elements=finite)


def test_trajectory_rejects_short_and_bad_rate():
    with pytest.raises(ValueError):
        Trajectory([1.0])
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0], 0.0)
    with pytest.raises(ValueError):
        Trajectory(np.zeros((2, 2)))


def test_trajectory_samples_are_read_only():
    t = Trajectory([0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        t.samples[0] = 5.0
    assert t.length == len(t) == 3


def test_constant_signal_has_zero_derivative():
    assert derivative(Trajectory([0.0, 0.0, 0.0], 7.0), 1).samples.tolist() == [0.0, 0.0, 0.0]


def test_unit_backward_differences():
    assert derivative(Trajectory([0.0, 1.0, 2.0], 1.0), 1).samples.tolist() == [0.0, 1.0, 1.0]


def test_second_difference_by_hand():
    # first pass, fs=2: 2*[0-0, 1-0, 4-1, 9-4] = [0, 2, 6, 10]
    # second pass:      2*[0-0, 2-0, 6-2, 10-6] = [0, 4, 8, 8]
    d2 = derivative(Trajectory([0.0, 1.0, 4.0, 9.0], 2.0), 2)
    assert d2.samples.tolist() == [0.0, 4.0, 8.0, 8.0]
    assert d2.sample_rate == 2.0


def test_initial_history_enters_first_sample():
    d = derivative(Trajectory([3.0, 4.0], 10.0), 1, initial_history=[1.0])
    assert d.samples.tolist() == [20.0, 10.0]


def test_order_zero_is_identity():
    t = Trajectory([1.0, 5.0, -2.0])
    assert derivative(t, 0) is t


def test_negative_order_rejected():
    with pytest.raises(ValueError):
        derivative(Trajectory([0.0, 1.0]), -1)


def test_build_stack_by_hand():
    stack = build_stack(Trajectory([0.0, 1.0, 2.0], 1.0), 2)
    assert stack.T.tolist() == [[0, 1, 2], [0, 1, 1], [0, 1, 0]]
    assert build_stack(Trajectory([0.0, 1.0, 2.0]), 0).ravel().tolist() == [0, 1, 2]


@given(signals, st.floats(0.5, 500.0), st.integers(1, 4))
def test_stack_columns_satisfy_recursion(x, fs, m):
    stack = build_stack(Trajectory(x, fs), m)
    assert np.array_equal(stack[:, 0], x)
    for n in range(1, m + 1):
        assert np.array_equal(stack[1:, n], fs * (stack[1:, n - 1] - stack[:-1, n - 1]))
        assert np.array_equal(stack[:, n], derivative(Trajectory(x, fs), n).samples)


@given(signals, st.integers(0, 3))
def test_derivative_composes_exactly(x, n):
    t = Trajectory(x, 3.0)
    assert np.array_equal(derivative(t, n + 1).samples, derivative(derivative(t, n), 1).samples)


@given(signals, finite, finite)
def test_derivative_is_linear(x, a, b):
    rng = np.random.default_rng(len(x))
    y = rng.standard_normal(len(x))
    lhs = derivative(Trajectory(a * x + b * y, 4.0), 2).samples
    rhs = a * derivative(Trajectory(x, 4.0), 2).samples + b * derivative(Trajectory(y, 4.0), 2).samples
    scale = 16 * (abs(a) * np.abs(x).max() + abs(b) * np.abs(y).max() + 1.0)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


def test_zero_displacement_gives_zeros():
    r = generate_reference(ReferenceSpec(0.0, 1.0, 1.0, 1.0, 1.0, dwell_samples=3))
    assert np.all(r.samples == 0.0) and r.length == 7


@pytest.mark.parametrize("bad", [
    dict(max_velocity=0.0), dict(max_acceleration=-1.0), dict(max_snap=np.inf), dict(dwell_samples=-1),
])
def test_infeasible_specs_rejected(bad):
    kw = dict(displacement=1.0, max_velocity=1.0, max_acceleration=1.0, max_jerk=1.0, max_snap=1.0)
    kw.update(bad)
    with pytest.raises(InfeasibleReferenceError):
        generate_reference(ReferenceSpec(**kw))


spec_strategy = st.builds(
    ReferenceSpec,
    displacement=st.floats(-3.0, 3.0).filter(lambda d: abs(d) > 1e-3),
    max_velocity=st.floats(0.05, 2.5),
    max_acceleration=st.floats(0.5, 8.0),
    max_jerk=st.floats(5.0, 80.0),
    max_snap=st.floats(100.0, 1600.0),
    sample_rate=st.sampled_from([50.0, 100.0, 200.0]),
    dwell_samples=st.integers(0, 20),
)


@given(spec_strategy)
def test_generated_profile_respects_bounds(spec):
    r = generate_reference(spec)
    stack = build_stack(r, 4)
    peaks = np.abs(stack[:, 1:]).max(axis=0)
    assert np.all(peaks <= np.array(spec.bounds) * (1 + 1e-9))
    assert abs(r.samples[-1] - spec.displacement) <= 1e-6 * abs(spec.displacement) + 1e-9
    # at rest at both ends: velocity, acceleration and jerk vanish at the last sample
    assert np.all(np.abs(stack[-1, 1:4]) <= spec.max_snap / spec.sample_rate)
    assert r.samples[0] == 0.0 or spec.dwell_samples == 0


def test_default_training_references_respect_bounds(default_config):
    for spec in default_config.references:
        r = generate_reference(spec)
        peaks = np.abs(build_stack(r, 4)[:, 1:]).max(axis=0)
        assert np.all(peaks <= np.array(spec.bounds) * (1 + 1e-9))
        # the velocity cap is actually reached, within one sample's worth of acceleration
        assert peaks[0] >= spec.max_velocity * 0.9


def test_generation_is_deterministic(default_config):
    spec = default_config.references[4]
    assert np.array_equal(generate_reference(spec).samples, generate_reference(spec).samples)


def test_csv_round_trip(tmp_path):
    t = Trajectory(np.random.default_rng(0).standard_normal(20), 250.0)
    path = write_trajectory_csv(t, tmp_path / "ref.csv")
    assert path.read_text().splitlines()[0] == "k,r"
    assert path.read_text().splitlines()[1].startswith("1,")
    assert json.loads((tmp_path / "ref.json").read_text()) == {"sample_rate_hz": 250.0}
    back = read_trajectory_csv(path)
    assert np.array_equal(back.samples, t.samples) and back.sample_rate == 250.0
