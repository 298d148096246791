import json

import numpy as np
import pytest
from conftest import random_model

from mlnira.data import CenteredDesign, compute_icc, group_mean_center
from mlnira.errors import ContractError, EstimationError
from mlnira.mlreg import RegressionSpec, fit_path
from mlnira.sampler import MAX_EXACT_NODES, exact_marginals
from mlnira.synth import (
    GeneratorSpec,
    bundled_spec,
    exact_mean_total,
    reference_logistic_fit,
    synth_generate,
    write_truth,
)


def test_bundled_shape():
    data, b = synth_generate(bundled_spec())
    assert data.n_rows == 4000 and data.n_nodes == 7 and data.n_groups == 32
    assert b.shape == (7, 32)


def test_seed_determinism():
    a, _ = synth_generate(bundled_spec(5))
    b, _ = synth_generate(bundled_spec(5))
    c, _ = synth_generate(bundled_spec(6))
    assert np.array_equal(a.responses, b.responses)
    assert not np.array_equal(a.responses, c.responses)


def test_no_group_variation_gives_small_icc():
    spec = GeneratorSpec(np.zeros((1, 1)), [0.0], 30, 100, 0.0, seed=2, node_names=("x",))
    data, b = synth_generate(spec)
    assert np.all(b == 0)
    assert compute_icc(data, "x") < 0.02


def test_large_model_falls_back_to_chain():
    m = MAX_EXACT_NODES + 1
    spec = GeneratorSpec(np.zeros((m, m)), np.zeros(m), 2, 50, 0.3, seed=1)
    data, _ = synth_generate(spec)
    assert data.responses.shape == (100, m)


def test_spec_validation_and_yaml(tmp_path):
    with pytest.raises(ContractError):
        GeneratorSpec(np.ones((2, 2)), [0, 0], 1, 1)
    (tmp_path / "g.yaml").write_text(
        "true_W: [[0, 0.5], [0.5, 0]]\ntrue_tau: [-1, -1]\nn_groups: 3\nrows_per_group: 4\nseed: 9\n"
    )
    spec = GeneratorSpec.load(tmp_path / "g.yaml")
    assert spec.group_names == ("G1", "G2", "G3") and spec.node_names == ("X1", "X2")


def test_truth_sidecar(tmp_path):
    spec = bundled_spec()
    _, b = synth_generate(spec)
    write_truth(spec, b, tmp_path / "t.json")
    truth = json.loads((tmp_path / "t.json").read_text())
    assert np.allclose(truth["true_B"], b) and truth["group_names"][0] == "G01"


class TestExactMeanTotal:
    def test_small_cases(self):
        assert exact_mean_total(np.zeros((1, 1)), [0.0]) == pytest.approx(0.5)
        assert exact_mean_total(np.zeros((2, 2)), [0.0, 0.0]) == pytest.approx(1.0)

    def test_sum_of_marginals(self):
        model = random_model(np.random.default_rng(3), m=5)
        marg = exact_marginals(model.weights, model.fixed_thresholds)
        assert exact_mean_total(model.weights, model.fixed_thresholds) == pytest.approx(marg.sum())
        assert exact_mean_total(model.weights, model.fixed_thresholds, scored=[1, 3]) == pytest.approx(
            marg[1] + marg[3]
        )


class TestReferenceFit:
    def test_balanced(self):
        d = CenteredDesign("y", (), np.zeros((4, 0)), np.array([0, 1, 1, 0.0]), np.zeros(4, int), ("g",))
        assert abs(reference_logistic_fit(d)[0]) < 1e-12

    def test_separation_flagged(self):
        x = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        d = CenteredDesign("y", ("x",), x, np.array([0, 0, 1, 1.0]), np.zeros(4, int), ("g",))
        with pytest.raises(EstimationError):
            reference_logistic_fit(d)

    def test_agrees_with_path_at_small_lambda(self):
        W = np.array([[0, 1.2], [1.2, 0]])
        data, _ = synth_generate(GeneratorSpec(W, [-0.6, -0.4], 1, 1000, 0.0, seed=6))
        d = group_mean_center(data, "X1", "grand")
        fit = fit_path(RegressionSpec("X1", ("X2",), multilevel=False, lambda_grid=(1e-9,)), d)[0]
        ref = reference_logistic_fit(d)
        assert np.allclose([fit.params.intercept, *fit.params.slopes], ref, atol=1e-3)
