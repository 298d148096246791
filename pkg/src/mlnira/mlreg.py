"""L1-penalized (random-intercept) logistic regression over a lambda path.

The objective for one outcome node is the penalized quasi-likelihood

    sum_i [y_i eta_i - log(1 + exp(eta_i))] - 0.5 * sum_g b_g^2 / Q - lam * sum_k |beta_k|

with ``eta_i = tau + x_i . beta + b_{g(i)}``. Only the slopes carry the L1
penalty; the random intercepts are shrunk by the Gaussian term alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import expit

from .data import CenteredDesign
from .errors import ContractError, EstimationError

Q_FLOOR = 1e-6
SEPARATION_ETA = 30.0
SEPARATION_SHARE = 0.10
ARMIJO_C = 1e-4
MAX_HALVINGS = 30


@dataclass(frozen=True)
class RegressionSpec:
    outcome_node: str
    predictor_nodes: tuple[str, ...]
    multilevel: bool = True
    lambda_grid: tuple[float, ...] | None = None
    lambda_count: int = 50
    lambda_min_ratio: float = 0.01
    gamma: float = 0.25
    max_iter: int = 500
    tol: float = 1e-5
    q_floor: float = Q_FLOOR
    q_init: float = 1.0
    fixed_q: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "predictor_nodes", tuple(self.predictor_nodes))
        if self.outcome_node in self.predictor_nodes:
            raise ContractError("predictor_nodes must exclude the outcome node")
        if self.lambda_grid is not None:
            grid = tuple(float(v) for v in self.lambda_grid)
            if not grid:
                raise ContractError("lambda_grid must be nonempty")
            if any(v < 0 for v in grid) or any(a <= b for a, b in zip(grid, grid[1:])):
                raise ContractError("lambda_grid must be non-negative and strictly descending")
            object.__setattr__(self, "lambda_grid", grid)
        if not 0.0 <= self.gamma <= 1.0:
            raise ContractError("gamma must lie in [0, 1]")
        if self.max_iter < 1 or self.tol <= 0:
            raise ContractError("max_iter and tol must be positive")


@dataclass(frozen=True)
class ParameterSet:
    intercept: float
    slopes: np.ndarray
    random_intercepts: np.ndarray = field(default_factory=lambda: np.zeros(0))
    variance_q: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "slopes", np.asarray(self.slopes, dtype=np.float64))
        object.__setattr__(
            self, "random_intercepts", np.asarray(self.random_intercepts, dtype=np.float64)
        )
        if self.variance_q < 0:
            raise ContractError("variance_q must be non-negative")

    @property
    def multilevel(self) -> bool:
        return self.random_intercepts.size > 0


@dataclass(frozen=True)
class FitResult:
    params: ParameterSet
    lam: float
    penalized_loglik: float
    quasi_loglik: float
    active_count: int
    ebic: float
    converged: bool
    iterations: int
    warnings: tuple[str, ...] = ()


# --- elementary maps -------------------------------------------------------


def sigmoid(x):
    """Logistic function, stable for large ``|x|``."""
    out = expit(x)
    return float(out) if np.ndim(out) == 0 else out


conditional_probability = sigmoid


def linear_predictor(x, params: ParameterSet, group: int | None = None) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != params.slopes.shape:
        raise ContractError("predictor row length must match the slopes")
    eta = params.intercept + float(x @ params.slopes)
    if params.multilevel:
        if group is None or not 0 <= group < params.random_intercepts.size:
            raise IndexError(f"group ordinal {group} out of range")
        eta += params.random_intercepts[group]
    return eta


def odds_ratio(beta: float) -> float:
    return math.exp(beta)


def intercept_probability(tau: float, b: float = 0.0) -> float:
    """Activation probability with every predictor at zero."""
    return sigmoid(tau + b)


def ebic(loglik: float, active_count: int, n_obs: int, p_total: int, gamma: float) -> float:
    """Extended BIC with the log binomial model-space term ``2 gamma ln C(p, |M|)``."""
    if not 0 <= active_count <= p_total:
        raise ContractError("active_count must lie in [0, p_total]")
    if n_obs < 1:
        raise ContractError("n_obs must be >= 1")
    log_binom = (
        math.lgamma(p_total + 1) - math.lgamma(active_count + 1) - math.lgamma(p_total - active_count + 1)
    )
    return -2.0 * loglik + active_count * math.log(n_obs) + 2.0 * gamma * log_binom


# --- objective and score ---------------------------------------------------


def _eta(design: CenteredDesign, params: ParameterSet) -> np.ndarray:
    eta = params.intercept + design.predictor_matrix @ params.slopes
    if params.multilevel:
        if params.random_intercepts.size != design.n_groups:
            raise ContractError("one random intercept per group required")
        eta = eta + params.random_intercepts[design.group_index]
    return eta


def _bernoulli_loglik(y: np.ndarray, eta: np.ndarray) -> float:
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _ridge_term(b: np.ndarray, q: float) -> float:
    if b.size == 0 or not np.any(b):
        return 0.0
    if q <= 0:
        raise ContractError("Q = 0 with nonzero random intercepts")
    return 0.5 * float(b @ b) / q


def quasi_loglik(design: CenteredDesign, params: ParameterSet) -> float:
    """PQL approximate log-likelihood (no L1 term)."""
    eta = _eta(design, params)
    return _bernoulli_loglik(design.outcome_vector, eta) - _ridge_term(
        params.random_intercepts, params.variance_q
    )


def penalized_quasi_loglik(design: CenteredDesign, params: ParameterSet, lam: float) -> float:
    return quasi_loglik(design, params) - lam * float(np.sum(np.abs(params.slopes)))


def _soft_pseudo_gradient(g_beta: np.ndarray, beta: np.ndarray, lam: float) -> np.ndarray:
    clamp = np.sign(g_beta) * np.maximum(np.abs(g_beta) - lam, 0.0)
    return np.where(beta != 0, g_beta - lam * np.sign(beta), clamp)


def penalized_score(design: CenteredDesign, params: ParameterSet, lam: float) -> np.ndarray:
    """Score of the penalized objective, ordered ``(tau, beta..., b...)``.

    Slopes sitting exactly at zero get the clamped subgradient, so the entry
    is zero whenever the L1 term dominates the likelihood gradient.
    """
    eta = _eta(design, params)
    r = design.outcome_vector - expit(eta)
    g_beta = design.predictor_matrix.T @ r
    parts = [np.array([r.sum()]), _soft_pseudo_gradient(g_beta, params.slopes, lam)]
    if params.multilevel:
        g_b = np.bincount(design.group_index, weights=r, minlength=design.n_groups)
        b = params.random_intercepts
        parts.append(g_b - (b / params.variance_q if np.any(b) else 0.0))
    return np.concatenate(parts)


# --- optimizer -------------------------------------------------------------


class _Problem:
    """Dense arrays for one regression; ``x`` may have zero columns."""

    def __init__(self, design: CenteredDesign, multilevel: bool, x: np.ndarray | None = None):
        self.x = design.predictor_matrix if x is None else x
        self.y = design.outcome_vector
        self.gidx = design.group_index
        self.n, self.p = self.x.shape
        self.G = design.n_groups if multilevel else 0

    def eta(self, tau, beta, b):
        eta = tau + self.x @ beta
        if self.G:
            eta = eta + b[self.gidx]
        return eta

    def objective(self, tau, beta, b, q, lam):
        eta = self.eta(tau, beta, b)
        val = _bernoulli_loglik(self.y, eta)
        if self.G:
            val -= 0.5 * float(b @ b) / q
        if self.p:
            val -= lam * float(np.sum(np.abs(beta)))
        return val

    def _neg_hessian(self, w, act):
        """Negative Hessian of the smooth part over (tau, active slopes, b)."""
        xa = self.x[:, act]
        k = xa.shape[1]
        size = 1 + k + self.G
        h = np.empty((size, size))
        h[0, 0] = w.sum()
        wx = w[:, None] * xa
        h[0, 1 : 1 + k] = h[1 : 1 + k, 0] = wx.sum(axis=0)
        h[1 : 1 + k, 1 : 1 + k] = xa.T @ wx
        if self.G:
            wg = np.bincount(self.gidx, weights=w, minlength=self.G)
            h[0, 1 + k :] = h[1 + k :, 0] = wg
            for c in range(k):
                row = np.bincount(self.gidx, weights=wx[:, c], minlength=self.G)
                h[1 + c, 1 + k :] = h[1 + k :, 1 + c] = row
            h[1 + k :, 1 + k :] = 0.0
            h[1 + k :, 1 + k :][np.diag_indices(self.G)] = wg
        return h


@dataclass
class _State:
    tau: float
    beta: np.ndarray
    b: np.ndarray
    q: float


def _solve_spd(h: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        c = np.linalg.cholesky(h)
        return np.linalg.solve(c.T, np.linalg.solve(c, rhs))
    except np.linalg.LinAlgError:
        ridge = 1e-10 * max(1.0, float(np.trace(h)) / h.shape[0])
        return np.linalg.lstsq(h + ridge * np.eye(h.shape[0]), rhs, rcond=None)[0]


def _optimize(prob: _Problem, lam: float, start: _State, spec: RegressionSpec, trace: list | None = None):
    """Alternate penalized ascent steps on (tau, beta, b) with the Q update.

    Returns ``(state, converged, iterations)``. When ``trace`` is a list, each
    accepted step appends ``(objective_before, objective_after)`` at fixed Q.
    """
    s = _State(start.tau, start.beta.copy(), start.b.copy(), start.q)
    if spec.fixed_q is not None and prob.G:
        s.q = spec.fixed_q
    x, y, G, p = prob.x, prob.y, prob.G, prob.p
    converged = False
    it = 0
    for it in range(1, spec.max_iter + 1):
        eta = prob.eta(s.tau, s.beta, s.b)
        mu = expit(eta)
        r = y - mu
        w = np.maximum(mu * (1.0 - mu), 1e-12)
        g_tau = r.sum()
        pg_beta = _soft_pseudo_gradient(x.T @ r, s.beta, lam) if p else np.zeros(0)
        g_b = np.bincount(prob.gidx, weights=r, minlength=G) - s.b / s.q if G else np.zeros(0)

        act = s.beta != 0
        entering = (~act) & (pg_beta != 0)
        h = prob._neg_hessian(w, act)
        h[1 + act.sum() :, 1 + act.sum() :][np.diag_indices(G)] += 1.0 / s.q if G else 0.0
        rhs = np.concatenate([[g_tau], pg_beta[act], g_b])
        d_free = _solve_spd(h, rhs)
        d_beta = np.zeros(p)
        k = int(act.sum())
        d_beta[act] = d_free[1 : 1 + k]
        if entering.any():
            diag = (x[:, entering] ** 2 * w[:, None]).sum(axis=0)
            d_beta[entering] = pg_beta[entering] / np.maximum(diag, 1e-12)
        d_tau = d_free[0]
        d_b = d_free[1 + k :]

        slope = g_tau * d_tau + float(pg_beta @ d_beta) + float(g_b @ d_b)
        f0 = prob.objective(s.tau, s.beta, s.b, s.q, lam)
        step_ok = False
        if slope > 1e-14 * (1.0 + abs(f0)):
            eta_d = d_tau + x @ d_beta
            if G:
                eta_d = eta_d + d_b[prob.gidx]
            curv = float(w @ eta_d**2) + (float(d_b @ d_b) / s.q if G else 0.0)
            t = min(1.0, slope / curv) if curv > 0 else 1.0
            orthant = np.where(act, np.sign(s.beta), np.sign(pg_beta))
            for _ in range(MAX_HALVINGS + 1):
                tau_n = s.tau + t * d_tau
                beta_n = s.beta + t * d_beta
                beta_n[np.sign(beta_n) != orthant] = 0.0
                b_n = s.b + t * d_b
                f1 = prob.objective(tau_n, beta_n, b_n, s.q, lam)
                gain = (tau_n - s.tau) * g_tau + float(pg_beta @ (beta_n - s.beta)) + float(g_b @ (b_n - s.b))
                if f1 >= f0 + ARMIJO_C * gain and f1 >= f0:
                    step_ok = True
                    break
                t *= 0.5
        if not step_ok:
            # no ascent possible: stationary up to rounding
            converged = slope <= 1e-6 * (1.0 + abs(f0))
            break
        if trace is not None:
            trace.append((f0, f1))
        delta = np.concatenate([[tau_n - s.tau], beta_n - s.beta, b_n - s.b])
        scale = np.maximum(np.abs(np.concatenate([[tau_n], beta_n, b_n])), 1.0)
        change = float(np.max(np.abs(delta) / scale))
        s.tau, s.beta, s.b = tau_n, beta_n, b_n
        if G and spec.fixed_q is None:
            q_new = max(float(np.mean(s.b**2)), spec.q_floor)
            change = max(change, abs(q_new - s.q) / max(s.q, 1.0))
            s.q = q_new
        if change < spec.tol:
            converged = True
            break
    return s, converged, it


def _initial_state(prob: _Problem, spec: RegressionSpec) -> _State:
    ybar = float(np.clip(prob.y.mean(), 1e-6, 1 - 1e-6))
    q = spec.fixed_q if spec.fixed_q is not None else spec.q_init
    return _State(math.log(ybar / (1 - ybar)), np.zeros(prob.p), np.zeros(prob.G), q if prob.G else 0.0)


def _check_outcome(design: CenteredDesign) -> None:
    y = design.outcome_vector
    if y.size == 0 or np.all(y == y[0]):
        raise EstimationError(
            f"outcome node {design.outcome_node!r} is constant; cannot fit", node=design.outcome_node
        )


def _separation_warnings(prob: _Problem, s: _State) -> tuple[str, ...]:
    eta = prob.eta(s.tau, s.beta, s.b)
    share = float(np.mean(np.abs(eta) > SEPARATION_ETA))
    if share > SEPARATION_SHARE:
        return (f"possible separation: |eta| > {SEPARATION_ETA:g} on {share:.1%} of rows",)
    return ()


def _result(prob, design, spec, s, lam, converged, iterations) -> FitResult:
    params = ParameterSet(
        s.tau, s.beta.copy(), s.b.copy(), float(max(s.q, spec.q_floor)) if prob.G else 0.0
    )
    q_ll = _bernoulli_loglik(prob.y, prob.eta(s.tau, s.beta, s.b))
    if prob.G:
        q_ll -= 0.5 * float(s.b @ s.b) / s.q
    pen = q_ll - lam * float(np.sum(np.abs(s.beta)))
    active = int(np.count_nonzero(s.beta))
    return FitResult(
        params=params,
        lam=float(lam),
        penalized_loglik=pen,
        quasi_loglik=q_ll,
        active_count=active,
        ebic=ebic(q_ll, active, prob.n, prob.p, spec.gamma),
        converged=converged,
        iterations=iterations,
        warnings=_separation_warnings(prob, s),
    )


def fit_intercept_only(design: CenteredDesign, multilevel: bool = True, **options) -> FitResult:
    """Null model: intercept (plus random intercepts) with no slopes."""
    _check_outcome(design)
    spec = RegressionSpec(design.outcome_node, (), multilevel=multilevel, **options)
    null_design = replace(design, predictor_matrix=np.zeros((design.n_obs, 0)), predictor_nodes=())
    prob = _Problem(null_design, multilevel)
    s, ok, it = _optimize(prob, 0.0, _initial_state(prob, spec), spec)
    if not ok:
        raise EstimationError(
            f"intercept-only fit for {design.outcome_node!r} did not converge in {it} iterations",
            node=design.outcome_node,
            diagnostics={"iterations": it, "variance_q": s.q, "intercept": s.tau},
        )
    return _result(prob, null_design, spec, s, 0.0, ok, it)


def lambda_max(design: CenteredDesign, null_fit: FitResult) -> float:
    """Smallest lambda at which every slope stays at zero."""
    p = null_fit.params
    eta = p.intercept + (p.random_intercepts[design.group_index] if p.multilevel else 0.0)
    r = design.outcome_vector - expit(eta)
    if design.predictor_matrix.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(design.predictor_matrix.T @ r)))


def lambda_grid(lam_max: float, count: int = 50, min_ratio: float = 0.01) -> tuple[float, ...]:
    if lam_max <= 1e-10:
        lam_max = 1.0
    return tuple(float(v) for v in np.geomspace(lam_max, lam_max * min_ratio, count))


def fit_path(spec: RegressionSpec, design: CenteredDesign, trace: list | None = None) -> list[FitResult]:
    """Fit every lambda on the grid, warm-starting each from the previous one."""
    if tuple(design.predictor_nodes) != spec.predictor_nodes:
        raise ContractError("design predictors do not match the regression spec")
    _check_outcome(design)
    prob = _Problem(design, spec.multilevel)
    null_spec = replace(spec, lambda_grid=None)
    null_fit = fit_intercept_only(
        design,
        multilevel=spec.multilevel,
        max_iter=spec.max_iter,
        tol=spec.tol,
        q_floor=spec.q_floor,
        q_init=spec.q_init,
        fixed_q=spec.fixed_q,
    )
    grid = spec.lambda_grid or lambda_grid(
        lambda_max(design, null_fit), null_spec.lambda_count, null_spec.lambda_min_ratio
    )
    np_ = null_fit.params
    state = _State(np_.intercept, np.zeros(prob.p), np_.random_intercepts.copy(), np_.variance_q)
    results = []
    for lam in grid:
        state, ok, it = _optimize(prob, lam, state, spec, trace)
        results.append(_result(prob, design, spec, state, lam, ok, it))
    return results


def select_best(path: Sequence[FitResult]) -> FitResult:
    """Converged fit with the lowest EBIC; ties go to the larger lambda."""
    if not path:
        raise ContractError("empty path")
    candidates = [r for r in path if r.converged and math.isfinite(r.ebic)]
    if not candidates:
        raise EstimationError("no converged fit on the lambda path")
    return min(candidates, key=lambda r: (r.ebic, -r.lam))
