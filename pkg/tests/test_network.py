import json

import numpy as np
import pytest
from conftest import make_model
from hypothesis import given
from hypothesis import strategies as st

from mlnira.data import BinaryDataset
from mlnira.errors import ConfigurationError, ContractError, EstimationError
from mlnira.mlreg import FitResult, ParameterSet
from mlnira.network import (
    FIXED,
    IsingConfig,
    NetworkModel,
    combine_edges,
    combine_matrix,
    ebic_report,
    effective_threshold,
    effective_thresholds,
    extract_thresholds,
    fit_multilevel_ising,
    fit_single_ising,
)
from mlnira.synth import GeneratorSpec, bundled_spec, synth_generate


def fit_result(tau, b=()):
    return FitResult(ParameterSet(tau, np.zeros(2), np.asarray(b, float), 1.0), 0.1, 0, 0, 0, 0, True, 1)


@pytest.fixture(scope="module")
def bundled_data():
    return synth_generate(bundled_spec())[0]


class TestCombine:
    def test_and_rule(self):
        assert combine_edges(0.4, 0.6, "AND") == pytest.approx(0.5)
        assert combine_edges(0.4, 0.0, "AND") == 0.0

    def test_or_rule(self):
        assert combine_edges(0.4, 0.0, "OR") == 0.4
        assert combine_edges(0.0, -0.3, "OR") == -0.3
        assert combine_edges(0.0, 0.0, "OR") == 0.0
        assert combine_edges(0.4, 0.6, "OR") == pytest.approx(0.5)

    def test_unknown_rule(self):
        with pytest.raises(ConfigurationError):
            combine_edges(1, 1, "XOR")

    @given(st.lists(st.floats(-3, 3), min_size=16, max_size=16), st.sampled_from(["AND", "OR"]))
    def test_matrix_symmetric_zero_diagonal(self, vals, rule):
        w = combine_matrix(np.array(vals).reshape(4, 4), rule)
        assert np.array_equal(w, w.T) and np.all(np.diag(w) == 0)
        if rule == "AND":
            assert np.all(np.abs(w) <= np.abs(combine_matrix(np.array(vals).reshape(4, 4), "OR")) + 1e-12)


class TestThresholds:
    def test_extract_shapes(self):
        tau, b = extract_thresholds([fit_result(0.1), fit_result(0.2), fit_result(0.3)])
        assert tau.shape == (3,) and b.shape == (3, 0)
        tau, b = extract_thresholds([fit_result(0.1, (0.2, -0.2)), fit_result(0.3, (0, 0)), fit_result(0.0, (1, 1))], 2)
        assert b.shape == (3, 2)
        assert b[0].tolist() == [0.2, -0.2]

    def test_extract_mismatch(self):
        with pytest.raises(ContractError):
            extract_thresholds([fit_result(0.1, (1, 2)), fit_result(0.1, (1, 2, 3))])

    def test_effective(self):
        m = make_model(np.zeros((2, 2)), [-1.2, 0.5], [[0.4, 0.0], [0.0, 0.0]], ("g1", "g2"))
        assert effective_threshold(m, "N0") == -1.2
        assert effective_threshold(m, 0, "g1") == pytest.approx(-0.8)
        assert effective_threshold(m, "N0", "g2") == -1.2
        with pytest.raises(ConfigurationError):
            effective_thresholds(m, "g9")

    def test_random_only_mode(self):
        m = NetworkModel(("a",), np.zeros((1, 1)), [-1.0], [[0.3]], ("g",), threshold_mode="random_only")
        assert effective_thresholds(m, "g").tolist() == [0.3]
        assert effective_thresholds(m, FIXED).tolist() == [-1.0]


class TestModelInvariants:
    def test_asymmetric_rejected(self):
        with pytest.raises(ContractError):
            make_model([[0, 1], [0.5, 0]], [0, 0])

    def test_diagonal_rejected(self):
        with pytest.raises(ContractError):
            make_model([[1, 0], [0, 0]], [0, 0])

    def test_reserved_group_name(self):
        with pytest.raises(ContractError):
            make_model(np.zeros((1, 1)), [0.0], [[0.0]], ("fixed",))

    def test_round_trip_bytes(self, tmp_path):
        m = make_model([[0, 0.1 + 0.2], [0.1 + 0.2, 0]], [-1 / 3, 2.5], [[0.1, -0.1], [1e-17, 0]], ("a", "b"))
        m.save(tmp_path / "m.json")
        text = (tmp_path / "m.json").read_text()
        m2 = NetworkModel.load(tmp_path / "m.json")
        assert m2.dumps() == text
        assert np.array_equal(m2.weights, m.weights)
        assert json.loads(text)["format_version"] == 1
        assert m2.sha256() == m.sha256()

    def test_nan_metadata_survives(self):
        m = make_model(np.zeros((2, 2)), [0, 0])
        assert np.all(np.isnan(NetworkModel.loads(m.dumps()).per_node_ebic))


class TestFitting:
    def test_bundled_shapes(self, bundled_data):
        ml = fit_multilevel_ising(bundled_data)
        assert ml.weights.shape == (7, 7)
        assert ml.fixed_thresholds.shape == (7,)
        assert ml.random_thresholds.shape == (7, 32)
        sl = fit_single_ising(bundled_data)
        assert sl.random_thresholds.shape == (7, 0) and sl.n_groups == 0
        table = ebic_report([ml])
        assert table.shape == (7, 1)
        twice = ebic_report([ml, ml], ["a", "b"])
        assert np.array_equal(twice.column("a"), twice.column("b"))

    def test_recovers_strong_edges(self, bundled_data):
        spec = bundled_spec()
        ml = fit_multilevel_ising(bundled_data)
        strong = spec.true_W >= 0.8
        assert np.all(ml.weights[strong] > 0)

    def test_independent_nodes_sparse(self):
        clean = 0
        for seed in range(10):
            spec = GeneratorSpec(np.zeros((4, 4)), [-0.5, 0.0, -1.0, 0.3], 1, 800, 0.0, seed)
            data, _ = synth_generate(spec)
            clean += not np.any(fit_single_ising(data).weights)
        assert clean >= 9

    def test_group_offset_sign(self):
        spec = GeneratorSpec(np.zeros((3, 3)), [-0.5, -0.5, -0.5], 2, 600, 0.0, 4, ("A", "B", "C"))
        data, _ = synth_generate(spec)
        responses = np.array(data.responses)
        rng = np.random.default_rng(0)
        g1 = data.group_index == 0
        responses[g1, 0] = (rng.random(g1.sum()) < 1 / (1 + np.exp(-0.5))).astype(np.uint8)
        responses[~g1, 0] = (rng.random((~g1).sum()) < 1 / (1 + np.exp(1.5))).astype(np.uint8)
        model = fit_multilevel_ising(BinaryDataset(data.node_names, data.group_ids, responses))
        b = model.random_thresholds[0]
        assert np.sign(b[0]) != np.sign(b[1])

    def test_one_group_matches_floored_multilevel(self):
        from mlnira.data import group_mean_center
        from mlnira.mlreg import Q_FLOOR, RegressionSpec, fit_path

        W = np.array([[0, 1.0, 0], [1.0, 0, 0.7], [0, 0.7, 0]])
        data, _ = synth_generate(GeneratorSpec(W, [-0.8, -1, -0.5], 1, 1500, 0.0, 8))
        single = fit_single_ising(data, IsingConfig(lambda_count=10))
        for j, node in enumerate(data.node_names):
            d = group_mean_center(data, node)
            lam = single.per_node_lambda[j]
            ml = fit_path(RegressionSpec(node, d.predictor_nodes, lambda_grid=(lam,), fixed_q=Q_FLOOR), d)[0]
            sl = fit_path(RegressionSpec(node, d.predictor_nodes, multilevel=False, lambda_grid=(lam,)), d)[0]
            assert ml.params.intercept == pytest.approx(sl.params.intercept, abs=1e-3)
            assert np.allclose(ml.params.slopes, sl.params.slopes, atol=1e-3)

    def test_constant_node_named(self):
        data = BinaryDataset(("a", "b"), np.array(["g"] * 6), np.array([[0, 1], [1, 1], [0, 1], [1, 1], [1, 1], [0, 1]]))
        with pytest.raises(EstimationError, match="'b'"):
            fit_single_ising(data)

    def test_multilevel_needs_groups(self):
        data = BinaryDataset(("a", "b"), np.array(["g"] * 4), np.array([[0, 1], [1, 0], [0, 1], [1, 1]]))
        with pytest.raises(ConfigurationError):
            fit_multilevel_ising(data)

    def test_node_permutation_invariance(self, bundled_data):
        perm = [3, 0, 6, 1, 5, 2, 4]
        permuted = BinaryDataset(
            tuple(bundled_data.node_names[i] for i in perm), bundled_data.group_ids, bundled_data.responses[:, perm]
        )
        a = fit_single_ising(bundled_data)
        b = fit_single_ising(permuted)
        assert np.allclose(a.weights[np.ix_(perm, perm)], b.weights, atol=1e-6)
        assert np.allclose(a.fixed_thresholds[perm], b.fixed_thresholds, atol=1e-6)

    def test_group_relabel_invariance(self):
        data, _ = synth_generate(GeneratorSpec(np.array([[0, 1.0], [1.0, 0]]), [-1, -1], 5, 80, 0.7, 3))
        relabel = {g: f"z{9 - i}" for i, g in enumerate(data.group_names)}
        other = BinaryDataset(data.node_names, np.array([relabel[g] for g in data.group_ids]), data.responses)
        a, b = fit_multilevel_ising(data), fit_multilevel_ising(other)
        assert np.allclose(a.weights, b.weights, atol=1e-6)
        for g in data.group_names:
            assert np.allclose(effective_thresholds(a, g), effective_thresholds(b, relabel[g]), atol=1e-6)

    def test_threads_do_not_change_bytes(self, bundled_data):
        a = fit_single_ising(bundled_data)
        b = fit_single_ising(bundled_data, IsingConfig(threads=3))
        assert a.dumps() == b.dumps()

    def test_table_format(self, bundled_data):
        text = ebic_report([fit_single_ising(bundled_data)]).format()
        lines = text.splitlines()
        assert lines[0].split() == ["Node", "EBIC_S"]
        assert len(lines) == 8
