import csv

import numpy as np
import pytest

from pgff.evaluation import FilterUnderTest, SeedStudy, apply_filter, evaluate, nonuniqueness_study
from pgff.experiment import extrapolation_spec, similar_spec
from pgff.linmodel import build_regressor, decompose
from pgff.neuralnet import init_network, zero_network
from pgff.objectives import ObjectiveConfig
from pgff.plant import friction_nonlinearity
from pgff.signals import build_stack, generate_reference
from pgff.training import TrainConfig, train


class FrictionOracle:
    """Stands in for a network that has learned the friction term exactly."""

    def __init__(self, plant):
        self.plant = plant

    def forward(self, X):
        return friction_nonlinearity(X[:, 1], self.plant)


@pytest.fixture(scope="module")
def refs():
    return {"similar": generate_reference(similar_spec()), "extrapolation": generate_reference(extrapolation_spec())}


def test_evaluation_reference_velocities(refs):
    assert np.abs(build_stack(refs["similar"], 1)[:, 1]).max() <= 0.6
    assert np.abs(build_stack(refs["extrapolation"], 1)[:, 1]).max() >= 1.5


def test_zero_network_gives_model_output(refs):
    filt = FilterUnderTest([0.1, 1.0, 5.0], zero_network([3, 5, 5, 1]))
    f, fm, fn = apply_filter(filt, refs["similar"])
    assert np.array_equal(f.samples, fm.samples) and np.all(fn.samples == 0)
    assert np.allclose(fm.samples, build_regressor(refs["similar"], 3) @ [0.1, 1.0, 5.0], rtol=1e-14)


def test_zero_theta_gives_network_output(refs):
    net = init_network([3, 5, 5, 1], "tanh", 2)
    f, fm, fn = apply_filter(FilterUnderTest([0.0, 0.0, 0.0], net), refs["similar"])
    assert np.array_equal(f.samples, fn.samples) and np.all(fm.samples == 0)


def test_additivity(refs):
    net = init_network([3, 5, 5, 1], "tanh", 2)
    for mode in ("none", "regularized", "explicit_projection"):
        f, fm, fn = apply_filter(FilterUnderTest([0.3, 1.1, 4.9], net, basis_mode=mode), refs["extrapolation"])
        assert np.array_equal(f.samples, fm.samples + fn.samples)


def test_unknown_basis_mode():
    with pytest.raises(ValueError):
        FilterUnderTest([0, 0, 0], None, basis_mode="partial")


def test_explicit_projection_output_orthogonal(refs):
    net = init_network([3, 5, 5, 1], "tanh", 8)
    filt = FilterUnderTest([0.0, 1.0, 5.0], net, "explicit_projection", "explicit_projection")
    for ref in refs.values():
        _, _, fn = apply_filter(filt, ref)
        U1 = decompose(build_regressor(ref, 3)).U1
        assert np.linalg.norm(U1.T @ fn.samples) <= 1e-9 * np.linalg.norm(fn.samples)


def test_perfect_filter(refs, plant):
    filt = FilterUnderTest(plant.linear_coefficients, FrictionOracle(plant), name="oracle")
    rep = evaluate(filt, list(refs.values()), plant, list(refs))
    for r in rep.references:
        assert r.ffw_rmse <= 1e-8
        assert r.tracking_rmse <= 1e-7
    assert rep.theta_error == 0.0


def test_true_linear_model_extrapolates(refs, plant):
    rep = evaluate(FilterUnderTest(plant.linear_coefficients), [refs["extrapolation"]], plant, ["x"])
    # only the low-velocity passages during acceleration and braking contribute
    assert rep.references[0].ffw_rmse < 0.1


def test_true_linear_model_error_is_friction_rms(refs, plant):
    ref = refs["similar"]
    rep = evaluate(FilterUnderTest(plant.linear_coefficients), [ref], plant, ["s"])
    g = friction_nonlinearity(build_stack(ref, 1)[:, 1], plant)
    assert rep.references[0].ffw_rmse == pytest.approx(np.sqrt(np.mean(g ** 2)), rel=1e-10)


def test_report_serialization(tmp_path, refs, plant):
    net = init_network([3, 5, 5, 1], "tanh", 0)
    rep = evaluate(FilterUnderTest([0.0, 1.0, 5.0], net, name="f"), list(refs.values()), plant, list(refs))
    d = rep.to_dict()
    assert d["filter"] == "f" and [r["name"] for r in d["references"]] == ["similar", "extrapolation"]
    for r in d["references"]:
        assert all(np.isfinite(r[k]) and r[k] >= 0 for k in ("ffw_rmse", "tracking_rmse", "model_energy",
                                                               "network_energy"))
    paths = rep.write_series(tmp_path)
    with paths[0].open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "r", "f_hat", "f", "f_model", "f_net", "y", "e"]
    assert len(rows) - 1 == refs["similar"].length
    assert rep.by_name("extrapolation").name == "extrapolation"
    with pytest.raises(KeyError):
        rep.by_name("other")


def test_from_report_modes(stribeck_problem):
    for kind, param, mode in [("least_squares", "model_only", "none"), ("least_squares", "parallel", "none"),
                              ("orthogonal_regularized", "parallel", "regularized"),
                              ("explicit_projection", "parallel", "explicit_projection")]:
        rep = train(TrainConfig(objective=ObjectiveConfig(kind), parametrization=param, max_iterations=0,
                                lbfgs=None), stribeck_problem)
        filt = FilterUnderTest.from_report(rep)
        assert filt.basis_mode == mode and filt.objective_kind == kind


def test_seed_study_model_only(stribeck_dataset):
    cfg = TrainConfig(objective=ObjectiveConfig("least_squares"), parametrization="model_only")
    reports = []
    study = nonuniqueness_study(cfg, stribeck_dataset, 5, reports=reports)
    assert isinstance(study, SeedStudy) and study.seeds == [0, 1, 2, 3, 4]
    assert np.all(study.std <= 1e-6)
    assert len(reports) == 5 and study.thetas.shape == (5, 3)
    assert "theta0" in study.table()
    assert study.to_dict()["parametrization"] == "model_only"


def test_seed_study_needs_five_seeds(stribeck_dataset):
    with pytest.raises(ValueError):
        nonuniqueness_study(ObjectiveConfig("least_squares"), stribeck_dataset, 4)
