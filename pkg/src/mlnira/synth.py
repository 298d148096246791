"""Synthetic nested data from known multilevel Ising parameters, plus
brute-force references used to check the estimators and the sampler."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml
from scipy.special import expit

from .data import BinaryDataset, CenteredDesign
from .errors import ContractError, EstimationError
from .rng import stream
from .sampler import MAX_EXACT_NODES, SamplerConfig, all_states, exact_distribution, simulate


@dataclass(frozen=True)
class GeneratorSpec:
    true_W: np.ndarray
    true_tau: np.ndarray
    n_groups: int
    rows_per_group: int
    group_intercept_sd: float = 0.0
    seed: int = 0
    node_names: tuple[str, ...] | None = None
    beta: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.true_W, dtype=np.float64)
        tau = np.asarray(self.true_tau, dtype=np.float64)
        m = tau.size
        if w.shape != (m, m) or not np.allclose(w, w.T, rtol=0, atol=0) or np.any(np.diag(w) != 0):
            raise ContractError("true_W must be a symmetric M x M matrix with zero diagonal")
        if self.n_groups < 1 or self.rows_per_group < 1:
            raise ContractError("n_groups and rows_per_group must be >= 1")
        if self.group_intercept_sd < 0:
            raise ContractError("group_intercept_sd must be non-negative")
        names = self.node_names or tuple(f"X{i + 1}" for i in range(m))
        if len(names) != m:
            raise ContractError("node_names length must match the node count")
        object.__setattr__(self, "true_W", w)
        object.__setattr__(self, "true_tau", tau)
        object.__setattr__(self, "node_names", tuple(names))

    @property
    def n_nodes(self) -> int:
        return self.true_tau.size

    @property
    def group_names(self) -> tuple[str, ...]:
        width = len(str(self.n_groups))
        return tuple(f"G{g + 1:0{width}d}" for g in range(self.n_groups))

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        return cls(
            true_W=np.asarray(d["true_W"], dtype=np.float64),
            true_tau=np.asarray(d["true_tau"], dtype=np.float64),
            n_groups=int(d["n_groups"]),
            rows_per_group=int(d["rows_per_group"]),
            group_intercept_sd=float(d.get("group_intercept_sd", 0.0)),
            seed=int(d.get("seed", 0)),
            node_names=tuple(d["node_names"]) if d.get("node_names") else None,
            beta=float(d.get("beta", 1.0)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "GeneratorSpec":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))


def bundled_spec(seed: int | None = None) -> GeneratorSpec:
    """7 symptoms x 32 regions x 125 respondents, shaped like a GAD-7 survey."""
    text = resources.files("mlnira").joinpath("data/gad7_synthetic.yaml").read_text()
    d = yaml.safe_load(text)
    if seed is not None:
        d["seed"] = seed
    return GeneratorSpec.from_dict(d)


def synth_generate(spec: GeneratorSpec) -> tuple[BinaryDataset, np.ndarray]:
    """Draw group intercept offsets, then sample each group's respondents.

    Returns the dataset and the true node x group offset matrix.
    """
    m, g = spec.n_nodes, spec.n_groups
    b = stream(spec.seed, 0).normal(0.0, spec.group_intercept_sd, size=(m, g))
    states = all_states(m) if m <= MAX_EXACT_NODES else None
    rows, labels = [], []
    for gi, name in enumerate(spec.group_names):
        rng = stream(spec.seed, gi + 1)
        theta = spec.true_tau + b[:, gi]
        if states is not None:
            p = exact_distribution(spec.true_W, theta, spec.beta)
            block = states[rng.choice(p.size, size=spec.rows_per_group, p=p)]
        else:
            cfg = SamplerConfig(beta=spec.beta, n_samples=spec.rows_per_group)
            block = simulate(spec.true_W, theta, cfg, rng)
        rows.append(block)
        labels.extend([name] * spec.rows_per_group)
    data = BinaryDataset(spec.node_names, np.asarray(labels), np.vstack(rows))
    return data, b


def write_truth(spec: GeneratorSpec, b: np.ndarray, path: str | Path) -> None:
    truth = {
        "node_names": list(spec.node_names),
        "group_names": list(spec.group_names),
        "true_W": spec.true_W.tolist(),
        "true_tau": spec.true_tau.tolist(),
        "true_B": np.asarray(b).tolist(),
        "group_intercept_sd": spec.group_intercept_sd,
        "seed": spec.seed,
    }
    Path(path).write_text(json.dumps(truth, indent=2) + "\n")


def exact_mean_total(W, theta, beta: float = 1.0, scored=None) -> float:
    """Expected total score under the exact Boltzmann law.

    ``scored`` is a sequence of node indices; None scores every node.
    """
    theta = np.asarray(theta, dtype=np.float64)
    p = exact_distribution(W, theta, beta)
    s = all_states(theta.size)
    if scored is not None:
        s = s[:, list(scored)]
    return float(p @ s.sum(axis=1))


def reference_logistic_fit(design: CenteredDesign, max_iter: int = 100, tol: float = 1e-10) -> np.ndarray:
    """Unpenalized single-level logistic MLE by IRLS: ``[intercept, slopes...]``.

    Raises :class:`EstimationError` when the iterates diverge, which is what
    happens on perfectly separated data.
    """
    x = np.column_stack([np.ones(design.n_obs), design.predictor_matrix])
    y = design.outcome_vector
    coef = np.zeros(x.shape[1])
    for _ in range(max_iter):
        mu = expit(x @ coef)
        w = mu * (1 - mu)
        z = x @ coef + (y - mu) / np.maximum(w, 1e-300)
        xtw = x.T * w
        try:
            new = np.linalg.solve(xtw @ x, xtw @ z)
        except np.linalg.LinAlgError:
            raise EstimationError("IRLS diverged: singular weighted design (separation)") from None
        if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > 30:
            raise EstimationError("IRLS diverged: coefficients growing without bound (separation)")
        if np.max(np.abs(new - coef)) < tol:
            return new
        coef = new
    raise EstimationError("IRLS did not converge (possible separation)")
