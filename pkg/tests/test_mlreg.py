import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlnira.data import BinaryDataset, CenteredDesign, group_mean_center
from mlnira.errors import ContractError, EstimationError
from mlnira.mlreg import (
    ParameterSet,
    RegressionSpec,
    _optimize,
    _Problem,
    _State,
    conditional_probability,
    ebic,
    fit_intercept_only,
    fit_path,
    intercept_probability,
    lambda_max,
    linear_predictor,
    odds_ratio,
    penalized_quasi_loglik,
    penalized_score,
    quasi_loglik,
    select_best,
    sigmoid,
)
from mlnira.synth import GeneratorSpec, reference_logistic_fit, synth_generate


def design(x, y, groups=None):
    x = np.asarray(x, dtype=float).reshape(len(y), -1)
    gi = np.zeros(len(y), dtype=int) if groups is None else np.asarray(groups)
    g = int(gi.max()) + 1
    return CenteredDesign(
        "y", tuple(f"x{i}" for i in range(x.shape[1])), x, np.asarray(y, float), gi, tuple(f"G{i}" for i in range(g))
    )


def nested_data(seed=0, groups=8, rows=60, sd=0.8):
    W = np.array([[0, 1.0, 0.0], [1.0, 0, 0.8], [0.0, 0.8, 0]])
    spec = GeneratorSpec(W, [-1.0, -1.2, -0.8], groups, rows, sd, seed, ("A", "B", "C"))
    return synth_generate(spec)


class TestElementary:
    def test_sigmoid(self):
        assert sigmoid(0.0) == 0.5
        assert abs(sigmoid(40.0) - 1.0) <= 1e-15
        assert sigmoid(-1.7) == pytest.approx(1 - sigmoid(1.7), abs=1e-15)
        assert np.all(np.isfinite(sigmoid(np.array([-1000.0, 1000.0]))))

    def test_conditional_probability(self):
        assert conditional_probability(0.0) == 0.5
        assert conditional_probability(math.log(3)) == pytest.approx(0.75, abs=1e-15)

    def test_linear_predictor(self):
        assert linear_predictor(np.zeros(2), ParameterSet(0.0, np.zeros(2), np.zeros(3), 1.0), 1) == 0.0
        p = ParameterSet(0.1, np.array([0.5, -2.0]), np.array([-0.3, 0.2]), 1.0)
        assert linear_predictor(np.array([1, 0]), p, 0) == pytest.approx(0.3, abs=1e-15)
        single = ParameterSet(0.1, np.array([0.5, -2.0]))
        zero_b = ParameterSet(0.1, np.array([0.5, -2.0]), np.zeros(2), 1.0)
        assert linear_predictor(np.array([1, 1]), single) == linear_predictor(np.array([1, 1]), zero_b, 1)
        with pytest.raises(IndexError):
            linear_predictor(np.array([1, 0]), p, 5)

    def test_odds_and_intercept_probability(self):
        assert odds_ratio(0.0) == 1.0
        assert odds_ratio(math.log(2)) == pytest.approx(2.0)
        assert odds_ratio(-0.7) == pytest.approx(0.4966, abs=1e-4)
        assert intercept_probability(0.0, 0.0) == 0.5
        assert intercept_probability(-2.1972, 0.0) == pytest.approx(0.1, abs=1e-4)
        assert intercept_probability(0.4, -0.9) == intercept_probability(-0.5, 0.0)

    def test_ebic(self):
        assert ebic(-100, 0, 100, 7, 0.9) == 200
        assert ebic(-100, 2, 100, 7, 0.25) == pytest.approx(210.733, abs=1e-3)
        assert ebic(-100, 3, 50, 7, 0.0) == pytest.approx(200 + 3 * math.log(50))


class TestObjective:
    def test_intercept_only_closed_form(self):
        y = np.array([1, 0, 0, 1, 0, 0, 0, 1.0])
        ybar = y.mean()
        tau = math.log(ybar / (1 - ybar))
        d = design(np.zeros((8, 0)), y)
        expected = 8 * (ybar * tau - math.log1p(math.exp(tau)))
        assert quasi_loglik(d, ParameterSet(tau, np.zeros(0))) == pytest.approx(expected, rel=1e-12)

    def test_lambda_zero_is_bernoulli(self):
        rng = np.random.default_rng(1)
        x, y = rng.normal(size=(30, 2)), rng.integers(0, 2, 30)
        p = ParameterSet(0.2, np.array([0.5, -0.1]))
        eta = 0.2 + x @ p.slopes
        ll = float(np.sum(y * np.log(sigmoid(eta)) + (1 - y) * np.log(1 - sigmoid(eta))))
        assert penalized_quasi_loglik(design(x, y), p, 0.0) == pytest.approx(ll, rel=1e-12)

    @given(st.floats(0.0, 10.0), st.lists(st.floats(-3, 3), min_size=2, max_size=2))
    def test_penalty_linear_in_lambda(self, lam, slopes):
        rng = np.random.default_rng(2)
        d = design(rng.normal(size=(20, 2)), rng.integers(0, 2, 20))
        p = ParameterSet(0.0, np.array(slopes))
        diff = penalized_quasi_loglik(d, p, lam) - penalized_quasi_loglik(d, p, 2 * lam)
        assert diff == pytest.approx(lam * np.abs(slopes).sum(), abs=1e-9)

    def test_zero_variance_with_offsets(self):
        d = design(np.zeros((4, 0)), [0, 1, 0, 1], [0, 0, 1, 1])
        with pytest.raises(ContractError):
            quasi_loglik(d, ParameterSet(0.0, np.zeros(0), np.array([0.1, -0.1]), 0.0))

    def test_score_clamps_inactive_slopes(self):
        rng = np.random.default_rng(3)
        d = design(rng.normal(size=(50, 3)), rng.integers(0, 2, 50))
        p = ParameterSet(0.0, np.zeros(3))
        big = np.abs(d.predictor_matrix.T @ (d.outcome_vector - 0.5)).max() + 1
        assert np.all(penalized_score(d, p, big)[1:] == 0)


class TestFitting:
    def test_large_lambda_gives_null_model(self):
        data, _ = nested_data(groups=1, rows=400, sd=0.0)
        d = group_mean_center(data, "A", "grand")
        null = fit_intercept_only(d, multilevel=False)
        lam = lambda_max(d, null) * 1.5
        fit = fit_path(RegressionSpec("A", d.predictor_nodes, multilevel=False, lambda_grid=(lam,)), d)[0]
        assert np.all(fit.params.slopes == 0)
        ybar = d.outcome_vector.mean()
        assert fit.params.intercept == pytest.approx(math.log(ybar / (1 - ybar)), abs=1e-4)

    def test_balanced_outcome_intercept_zero(self):
        d = design(np.zeros((6, 0)), [0, 1, 0, 1, 1, 0])
        assert abs(fit_intercept_only(d, multilevel=False).params.intercept) < 1e-8
        ref = reference_logistic_fit(d)
        assert abs(ref[0]) < 1e-10

    def test_matches_irls_at_small_lambda(self):
        data, _ = nested_data(groups=1, rows=800, sd=0.0)
        for node in data.node_names:
            d = group_mean_center(data, node, "grand")
            fit = fit_path(RegressionSpec(node, d.predictor_nodes, multilevel=False, lambda_grid=(1e-10,)), d)[0]
            ours = np.concatenate([[fit.params.intercept], fit.params.slopes])
            assert np.max(np.abs(ours - reference_logistic_fit(d))) < 1e-3

    def test_path_shape_and_warm_start(self):
        data, _ = nested_data()
        d = group_mean_center(data, "B")
        spec = RegressionSpec("B", d.predictor_nodes, lambda_count=20)
        path = fit_path(spec, d)
        lams = [r.lam for r in path]
        assert len(path) == 20 and all(a > b for a, b in zip(lams, lams[1:]))
        assert all(r.converged for r in path)
        assert path[0].active_count == 0
        assert path[-1].active_count == 2
        best = select_best(path)
        assert best.ebic == min(r.ebic for r in path)
        assert best.params.random_intercepts.shape == (8,)
        assert best.params.variance_q > 0

    def test_objective_non_decreasing_along_iterations(self):
        data, _ = nested_data(seed=5)
        d = group_mean_center(data, "A")
        trace = []
        fit_path(RegressionSpec("A", d.predictor_nodes, lambda_count=15), d, trace=trace)
        assert trace
        ok = sum(f1 >= f0 - 1e-9 * max(1.0, abs(f0)) for f0, f1 in trace)
        assert ok / len(trace) >= 0.95

    def test_active_count_soft_monotone(self):
        good = total = 0
        for seed in range(6):
            rng = np.random.default_rng(seed)
            m = 5
            W = np.triu(rng.uniform(-1, 1.5, (m, m)), 1) * (rng.random((m, m)) < 0.5)
            W = W + W.T
            spec = GeneratorSpec(W, rng.uniform(-1.5, 0, m), 6, 80, 0.6, seed)
            data, _ = synth_generate(spec)
            d = group_mean_center(data, "X1")
            counts = [r.active_count for r in fit_path(RegressionSpec("X1", d.predictor_nodes, lambda_count=30), d)]
            good += sum(a <= b for a, b in zip(counts, counts[1:]))
            total += len(counts) - 1
        assert good / total >= 0.95

    def test_design_mismatch(self):
        data, _ = nested_data()
        d = group_mean_center(data, "A")
        with pytest.raises(ContractError):
            fit_path(RegressionSpec("A", ("C", "B")), d)

    def test_constant_outcome(self):
        d = design(np.zeros((5, 1)), [1, 1, 1, 1, 1])
        with pytest.raises(EstimationError):
            fit_path(RegressionSpec("y", ("x0",), multilevel=False), d)

    def test_random_intercepts_track_truth(self):
        data, b = nested_data(seed=11, groups=20, rows=150, sd=1.0)
        d = group_mean_center(data, "A")
        best = select_best(fit_path(RegressionSpec("A", d.predictor_nodes), d))
        assert np.corrcoef(best.params.random_intercepts, b[0])[0, 1] > 0.8

    def test_spec_validation(self):
        with pytest.raises(ContractError):
            RegressionSpec("A", ("A",))
        with pytest.raises(ContractError):
            RegressionSpec("A", ("B",), lambda_grid=(0.1, 0.2))
        with pytest.raises(ContractError):
            RegressionSpec("A", ("B",), gamma=2.0)


class TestSelection:
    def fake(self, ebic_value, lam, converged=True):
        from mlnira.mlreg import FitResult

        return FitResult(ParameterSet(0.0, np.zeros(1)), lam, 0.0, 0.0, 0, ebic_value, converged, 1)

    def test_argmin(self):
        path = [self.fake(210, 0.5), self.fake(205, 0.3), self.fake(207, 0.1)]
        assert select_best(path).lam == 0.3

    def test_tie_prefers_larger_lambda(self):
        assert select_best([self.fake(205, 0.1), self.fake(205, 0.3)]).lam == 0.3

    def test_single_and_unconverged(self):
        assert select_best([self.fake(1.0, 0.2)]).lam == 0.2
        assert select_best([self.fake(1.0, 0.2, False), self.fake(5.0, 0.1)]).lam == 0.1
        with pytest.raises(EstimationError):
            select_best([self.fake(1.0, 0.2, False)])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_optimizer_reaches_stationary_point(seed):
    rng = np.random.default_rng(seed)
    n, p, g = 120, 3, 4
    x = rng.normal(size=(n, p))
    gi = rng.integers(0, g, n)
    y = (rng.random(n) < sigmoid(x[:, 0] - 0.3)).astype(float)
    if y.min() == y.max():
        return
    d = design(x, y, gi)
    if len(np.unique(gi)) < g:
        return
    spec = RegressionSpec("y", d.predictor_nodes, fixed_q=0.5, max_iter=500)
    prob = _Problem(d, True)
    lam = 2.0
    s, ok, _ = _optimize(prob, lam, _State(0.0, np.zeros(p), np.zeros(g), 0.5), spec)
    assert ok
    score = penalized_score(d, ParameterSet(s.tau, s.beta, s.b, 0.5), lam)
    assert np.max(np.abs(score)) < 1e-2
