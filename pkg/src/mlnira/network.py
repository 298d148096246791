"""Single-level and multilevel Ising networks from nodewise regressions."""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import BinaryDataset, group_mean_center
from .errors import ConfigurationError, ContractError, EstimationError
from .mlreg import FitResult, RegressionSpec, fit_path, select_best

FORMAT_VERSION = 1
FIXED = "fixed"
ZERO_TOL = 1e-8
RULES = ("AND", "OR")
THRESHOLD_MODES = ("total", "random_only")


def _ro(a, dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NetworkModel:
    node_names: tuple[str, ...]
    weights: np.ndarray
    fixed_thresholds: np.ndarray
    random_thresholds: np.ndarray
    group_names: tuple[str, ...] = ()
    rule: str = "AND"
    beta_inverse_temperature: float = 1.0
    per_node_ebic: np.ndarray | None = None
    per_node_lambda: np.ndarray | None = None
    per_node_variance: np.ndarray | None = None
    threshold_mode: str = "total"
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        m = len(self.node_names)
        if len(set(self.node_names)) != m:
            raise ContractError("node names must be unique")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (m, m):
            raise ContractError(f"weights must be {m}x{m}")
        if not np.array_equal(w, w.T):
            raise ContractError("weights must be symmetric")
        if np.any(np.diag(w) != 0):
            raise ContractError("weight diagonal must be exactly 0")
        tau = np.asarray(self.fixed_thresholds, dtype=np.float64)
        if tau.shape != (m,):
            raise ContractError(f"fixed_thresholds must have length {m}")
        g = len(self.group_names)
        b = np.asarray(self.random_thresholds, dtype=np.float64).reshape(m, g)
        if len(set(self.group_names)) != g:
            raise ContractError("group names must be unique")
        if FIXED in self.group_names:
            raise ContractError(f"{FIXED!r} is reserved and cannot name a group")
        if not self.beta_inverse_temperature > 0:
            raise ContractError("inverse temperature must be positive")
        if self.rule not in RULES:
            raise ContractError(f"rule must be one of {RULES}")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ContractError(f"threshold_mode must be one of {THRESHOLD_MODES}")
        for name in ("per_node_ebic", "per_node_lambda", "per_node_variance"):
            v = getattr(self, name)
            if v is None:
                v = np.full(m, np.nan)
            v = np.asarray(v, dtype=np.float64)
            if v.shape != (m,):
                raise ContractError(f"{name} must have length {m}")
            object.__setattr__(self, name, _ro(v))
        object.__setattr__(self, "node_names", tuple(str(n) for n in self.node_names))
        object.__setattr__(self, "group_names", tuple(str(n) for n in self.group_names))
        object.__setattr__(self, "weights", _ro(w))
        object.__setattr__(self, "fixed_thresholds", _ro(tau))
        object.__setattr__(self, "random_thresholds", _ro(b))
        object.__setattr__(self, "beta_inverse_temperature", float(self.beta_inverse_temperature))

    @property
    def n_nodes(self) -> int:
        return len(self.node_names)

    @property
    def n_groups(self) -> int:
        return len(self.group_names)

    @property
    def multilevel(self) -> bool:
        return self.n_groups > 0

    @property
    def temperature(self) -> float:
        return 1.0 / self.beta_inverse_temperature

    def node_index(self, node: str) -> int:
        try:
            return self.node_names.index(node)
        except ValueError:
            raise ConfigurationError(f"unknown node {node!r}") from None

    def group_position(self, group: str) -> int:
        try:
            return self.group_names.index(group)
        except ValueError:
            raise ConfigurationError(f"unknown group {group!r}") from None

    # --- persistence ---------------------------------------------------

    def to_dict(self) -> dict:
        def vec(a):
            return [None if not math.isfinite(v) else float(v) for v in a]

        return {
            "format_version": self.format_version,
            "node_names": list(self.node_names),
            "group_names": list(self.group_names),
            "rule": self.rule,
            "threshold_mode": self.threshold_mode,
            "beta_inverse_temperature": self.beta_inverse_temperature,
            "weights": [[float(v) for v in row] for row in self.weights],
            "fixed_thresholds": [float(v) for v in self.fixed_thresholds],
            "random_thresholds": [[float(v) for v in row] for row in self.random_thresholds],
            "per_node_ebic": vec(self.per_node_ebic),
            "per_node_lambda": vec(self.per_node_lambda),
            "per_node_variance": vec(self.per_node_variance),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkModel":
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise ContractError(f"unsupported model format_version {version!r}")

        def vec(key):
            return [math.nan if v is None else v for v in d.get(key) or []] or None

        m = len(d["node_names"])
        return cls(
            node_names=tuple(d["node_names"]),
            weights=np.asarray(d["weights"], dtype=np.float64).reshape(m, m),
            fixed_thresholds=d["fixed_thresholds"],
            random_thresholds=np.asarray(d["random_thresholds"], dtype=np.float64).reshape(
                m, len(d["group_names"])
            ),
            group_names=tuple(d["group_names"]),
            rule=d["rule"],
            beta_inverse_temperature=d["beta_inverse_temperature"],
            per_node_ebic=vec("per_node_ebic"),
            per_node_lambda=vec("per_node_lambda"),
            per_node_variance=vec("per_node_variance"),
            threshold_mode=d.get("threshold_mode", "total"),
        )

    @classmethod
    def loads(cls, text: str) -> "NetworkModel":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "NetworkModel":
        return cls.loads(Path(path).read_text())


def effective_threshold(model: NetworkModel, node: int | str, level: str = FIXED) -> float:
    j = model.node_index(node) if isinstance(node, str) else int(node)
    return float(effective_thresholds(model, level)[j])


def effective_thresholds(model: NetworkModel, level: str = FIXED) -> np.ndarray:
    """Threshold vector entering simulation at ``level`` ("fixed" or a group name)."""
    if level == FIXED:
        return np.array(model.fixed_thresholds)
    g = model.group_position(level)
    b = model.random_thresholds[:, g]
    if model.threshold_mode == "random_only":
        return np.array(b)
    return model.fixed_thresholds + b


# --- assembly --------------------------------------------------------------


def combine_edges(beta_jk: float, beta_kj: float, rule: str = "AND") -> float:
    nz_jk = abs(beta_jk) >= ZERO_TOL
    nz_kj = abs(beta_kj) >= ZERO_TOL
    if rule == "AND":
        return (beta_jk + beta_kj) / 2 if nz_jk and nz_kj else 0.0
    if rule == "OR":
        if nz_jk and nz_kj:
            return (beta_jk + beta_kj) / 2
        if nz_jk:
            return float(beta_jk)
        if nz_kj:
            return float(beta_kj)
        return 0.0
    raise ConfigurationError(f"unknown rule {rule!r}")


def combine_matrix(coef: np.ndarray, rule: str = "AND") -> np.ndarray:
    """Symmetric weights from directed coefficients ``coef[j, k]`` (k predicts j)."""
    coef = np.asarray(coef, dtype=np.float64)
    m = coef.shape[0]
    w = np.zeros((m, m))
    for j in range(m):
        for k in range(j + 1, m):
            w[j, k] = w[k, j] = combine_edges(coef[j, k], coef[k, j], rule)
    return w


def extract_thresholds(fits: Sequence[FitResult], n_groups: int | None = None):
    """Fixed intercepts as a vector and random intercepts as a node x group matrix."""
    if any(f is None for f in fits):
        raise EstimationError("missing nodewise fit")
    tau = np.array([f.params.intercept for f in fits])
    g = fits[0].params.random_intercepts.size if fits else 0
    if n_groups is not None and g not in (0, n_groups):
        raise ContractError("random intercept count does not match the group count")
    if any(f.params.random_intercepts.size != g for f in fits):
        raise ContractError("nodewise fits disagree on the group count")
    b = np.vstack([f.params.random_intercepts for f in fits]) if g else np.zeros((len(fits), 0))
    return tau, b


@dataclass(frozen=True)
class IsingConfig:
    rule: str = "AND"
    gamma: float = 0.25
    lambda_count: int = 50
    lambda_min_ratio: float = 0.01
    max_iter: int = 500
    tol: float = 1e-5
    q_floor: float = 1e-6
    center: bool = True
    threshold_mode: str = "total"
    beta_inverse_temperature: float = 1.0
    threads: int = 1

    def __post_init__(self):
        if self.rule not in RULES:
            raise ConfigurationError(f"rule must be one of {RULES}")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ConfigurationError(f"threshold_mode must be one of {THRESHOLD_MODES}")


@dataclass(frozen=True)
class NodewiseFit:
    node: str
    best: FitResult
    path: tuple[FitResult, ...] = field(repr=False, default=())


def fit_nodewise(data: BinaryDataset, config: IsingConfig, multilevel: bool) -> list[NodewiseFit]:
    """One penalized regression per node, each selected by EBIC."""
    if data.n_nodes < 2:
        raise ConfigurationError("an Ising network needs at least 2 nodes")
    if multilevel and data.n_groups < 2:
        raise ConfigurationError("a multilevel network needs at least 2 groups")
    for node in data.degenerate_nodes():
        raise EstimationError(f"node {node!r} is constant across all rows; cannot estimate", node=node)
    # single-level fits treat the whole sample as one group
    mode = ("group" if multilevel else "grand") if config.center else "none"

    def one(node: str) -> NodewiseFit:
        design = group_mean_center(data, node, mode=mode)
        spec = RegressionSpec(
            outcome_node=node,
            predictor_nodes=design.predictor_nodes,
            multilevel=multilevel,
            lambda_count=config.lambda_count,
            lambda_min_ratio=config.lambda_min_ratio,
            gamma=config.gamma,
            max_iter=config.max_iter,
            tol=config.tol,
            q_floor=config.q_floor,
        )
        try:
            path = fit_path(spec, design)
            best = select_best(path)
        except EstimationError as exc:
            raise EstimationError(f"node {node!r}: {exc}", node=node, diagnostics=exc.diagnostics) from exc
        return NodewiseFit(node, best, tuple(path))

    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            return list(pool.map(one, data.node_names))
    return [one(node) for node in data.node_names]


def assemble_network(
    data: BinaryDataset, fits: Sequence[NodewiseFit], config: IsingConfig, multilevel: bool
) -> NetworkModel:
    m = data.n_nodes
    coef = np.zeros((m, m))
    for j, nf in enumerate(fits):
        others = [k for k in range(m) if k != j]
        coef[j, others] = nf.best.params.slopes
    tau, b = extract_thresholds([nf.best for nf in fits], data.n_groups if multilevel else None)
    return NetworkModel(
        node_names=data.node_names,
        weights=combine_matrix(coef, config.rule),
        fixed_thresholds=tau,
        random_thresholds=b,
        group_names=data.group_names if multilevel else (),
        rule=config.rule,
        beta_inverse_temperature=config.beta_inverse_temperature,
        per_node_ebic=[nf.best.ebic for nf in fits],
        per_node_lambda=[nf.best.lam for nf in fits],
        per_node_variance=[nf.best.params.variance_q for nf in fits],
        threshold_mode=config.threshold_mode,
    )


def fit_multilevel_ising(data: BinaryDataset, config: IsingConfig | None = None) -> NetworkModel:
    config = config or IsingConfig()
    return assemble_network(data, fit_nodewise(data, config, True), config, True)


def fit_single_ising(data: BinaryDataset, config: IsingConfig | None = None) -> NetworkModel:
    config = config or IsingConfig()
    return assemble_network(data, fit_nodewise(data, config, False), config, False)


# --- EBIC comparison table -------------------------------------------------


@dataclass(frozen=True)
class EbicTable:
    node_names: tuple[str, ...]
    labels: tuple[str, ...]
    values: np.ndarray

    @property
    def shape(self):
        return self.values.shape

    def column(self, label: str) -> np.ndarray:
        return self.values[:, self.labels.index(label)]

    def to_csv(self) -> str:
        lines = ["node," + ",".join(f"EBIC_{lab}" for lab in self.labels)]
        for name, row in zip(self.node_names, self.values):
            lines.append(name + "," + ",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"

    def format(self) -> str:
        head = ["Node", *(f"EBIC_{lab}" for lab in self.labels)]
        rows = [[n, *(f"{v:.0f}" for v in r)] for n, r in zip(self.node_names, self.values)]
        widths = [max(len(str(c)) for c in col) for col in zip(head, *rows)]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        return "\n".join(fmt.format(*r).rstrip() for r in [head, *rows]) + "\n"


def ebic_report(models: Sequence[NetworkModel], labels: Sequence[str] | None = None) -> EbicTable:
    """Per-node EBIC values of several models side by side."""
    if not models:
        raise ContractError("need at least one model")
    names = models[0].node_names
    if any(m.node_names != names for m in models):
        raise ContractError("models must share node names and order")
    if labels is None:
        labels = [("M" if m.multilevel else "S") for m in models]
        if len(set(labels)) != len(labels):
            labels = [str(i + 1) for i in range(len(models))]
    values = np.column_stack([m.per_node_ebic for m in models])
    return EbicTable(tuple(names), tuple(labels), values)
