import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osassl.core import CovariateSchema, read_panel_csv
from osassl.learners import MeanLearner, RidgeLearner
from osassl.synthgen import GeneratorSpec, best_fixed_algorithm, generate, write_generated

ALWAYS = dict(declare_intercept=60.0)  # declaration probability 1


def residuals(panel, truth):
    theta = np.stack([truth.theta(panel.x[i], panel.z[i], panel.declared[i]) for i in range(len(panel))])
    sigma = np.stack([truth.sigma(panel.x[i], panel.z[i], panel.declared[i]) for i in range(len(panel))])
    return theta, (panel.y - theta) / np.where(sigma > 0, sigma, 1.0)


def test_zero_noise_costs_equal_theta():
    panel, truth = generate(GeneratorSpec(n_cities=30, n_times=5, noise_scale=0.0, seed=3))
    theta, _ = residuals(panel, truth)
    assert np.array_equal(panel.y, theta)


def test_same_seed_is_bitwise_identical():
    a, _ = generate(GeneratorSpec(seed=11))
    b, _ = generate(GeneratorSpec(seed=11))
    c, _ = generate(GeneratorSpec(seed=12))
    for name in ("x", "z", "y", "declared"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert not np.array_equal(a.y, c.y)


def test_longer_run_reproduces_prefix():
    short, _ = generate(GeneratorSpec(n_times=6, seed=4))
    long, _ = generate(GeneratorSpec(n_times=10, seed=4))
    for name in ("x", "z", "y", "declared"):
        assert np.array_equal(getattr(short, name), getattr(long, name)[:6])


@settings(max_examples=20)
@given(
    seed=st.integers(0, 1000),
    family=st.sampled_from(["linear", "additive", "piecewise"]),
    topology=st.sampled_from(["lattice", "ring", "star", "edgeless"]),
    rho=st.floats(0, 0.95),
    noise=st.floats(0, 3),
)
def test_mask_and_bounds(seed, family, topology, rho, noise):
    spec = GeneratorSpec(n_cities=12, n_times=4, family=family, topology=topology, edge_correlation=rho,
                         noise_scale=noise, seed=seed)
    panel, truth = generate(spec)
    assert np.all(panel.y[~panel.declared] == 0)
    assert np.all((panel.y >= 0) & (panel.y <= truth.cost_bound))
    theta, _ = residuals(panel, truth)
    assert np.all((theta >= 0) & (theta <= truth.cost_bound))
    assert np.all((panel.z >= 0) & (panel.z <= 1))


def test_edgeless_noise_is_uncorrelated():
    T = 10_000
    panel, truth = generate(GeneratorSpec(n_cities=3, n_times=T, topology="edgeless", **ALWAYS, seed=5))
    _, e = residuals(panel, truth)
    assert panel.declared.all()
    r = np.corrcoef(e.T)
    for i, j in [(0, 1), (0, 2), (1, 2)]:
        assert abs(r[i, j]) < 3 / np.sqrt(T)
    np.testing.assert_allclose(e.var(axis=0), 1.0, atol=0.05)


def test_noise_correlates_along_edges_only():
    T = 20_000
    spec = GeneratorSpec(n_cities=6, n_times=T, topology="ring", ring_k=1, edge_correlation=0.5, **ALWAYS, seed=6)
    panel, truth = generate(spec)
    _, e = residuals(panel, truth)
    r = np.corrcoef(e.T)
    adj = truth.graph.neighbors()
    tol = 4 / np.sqrt(T)
    for i in range(6):
        for j in range(i + 1, 6):
            # ring of 6 with k=1: every city has two neighbours, one shared innovation per edge
            expect = 0.5 / 2 if j in adj[i] else 0.0
            assert abs(r[i, j] - expect) < tol, (i, j, r[i, j])


def test_spec_validation_and_json():
    assert GeneratorSpec().validate() == []
    errs = GeneratorSpec(n_cities=0, edge_correlation=1.0, family="cubic").validate()
    assert len(errs) == 3
    with pytest.raises(ValueError, match="invalid generator spec"):
        generate(GeneratorSpec(edge_correlation=1.0))
    spec = GeneratorSpec(seed=9, topology="star")
    assert GeneratorSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec
    with pytest.raises(ValueError, match="unknown generator fields"):
        GeneratorSpec.from_dict({"n_city": 3})


def test_write_generated_roundtrip(tmp_path, synthetic):
    panel, truth = synthetic
    paths = write_generated(panel, truth, tmp_path)
    back = read_panel_csv(paths["panel"], CovariateSchema.load(paths["schema"]), cost_bound=truth.cost_bound)
    assert np.array_equal(back.y, panel.y) and np.array_equal(back.x, panel.x)
    assert json.loads(paths["truth"].read_text())["cost_bound"] == truth.cost_bound


def test_well_specified_model_ranks_first(synthetic):
    _, truth = synthetic
    ranking = best_fixed_algorithm(truth, [MeanLearner(name="mean"), RidgeLearner(name="ridge", penalty=1e-6)])
    assert [n for n, _ in ranking] == ["ridge", "mean"]
    assert ranking[0][1] < 0.05 * ranking[1][1]


def test_identical_algorithms_tie(synthetic):
    _, truth = synthetic
    ranking = best_fixed_algorithm(truth, [RidgeLearner(name="a"), RidgeLearner(name="b")])
    assert ranking[0][1] == pytest.approx(ranking[1][1], rel=1e-12)


def test_mean_predictor_bias_closed_form(synthetic):
    _, truth = synthetic
    ranking = dict(best_fixed_algorithm(truth, [MeanLearner(name="mean")], seed=50))
    train, _ = generate(GeneratorSpec(**{**truth.spec.to_dict(), "seed": 50}))
    test, tt = generate(GeneratorSpec(**{**truth.spec.to_dict(), "seed": 51}))
    c = train.y[train.declared].mean()
    theta = tt.theta(test.x[test.declared], test.z[test.declared], np.ones(test.declared.sum(), bool))
    # squared bias of a constant = variance of theta* + squared offset of the constant
    assert ranking["mean"] == pytest.approx(theta.var() + (theta.mean() - c) ** 2, rel=1e-9)
