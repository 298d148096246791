"""Simulated node interventions: shift one threshold, resimulate, compare totals."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigurationError, DegenerateInputError, NiraError, SizeError
from .network import FIXED, NetworkModel, effective_thresholds
from .sampler import SampleMatrix, SamplerConfig, generate_sample

ALLEVIATE = "alleviate"
AGGRAVATE = "aggravate"
DIRECTIONS = (ALLEVIATE, AGGRAVATE)
ADJUST_METHODS = ("holm", "bonferroni")
SD_AXES = ("nodes", "groups")
BASELINE = "baseline"
REPORT_VERSION = 1


@dataclass(frozen=True)
class InterventionSpec:
    target_node: str
    direction: str = ALLEVIATE
    magnitude_sd: float = 2.0
    level: str = FIXED

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ConfigurationError(f"direction must be one of {DIRECTIONS}")
        if not self.magnitude_sd >= 0:
            raise ConfigurationError("magnitude_sd must be non-negative")


@dataclass(frozen=True)
class SubnetworkPartition:
    """Intervene on ``intervention_nodes``, score only ``outcome_nodes``."""

    intervention_nodes: tuple[str, ...]
    outcome_nodes: tuple[str, ...]

    def __post_init__(self):
        a, b = tuple(self.intervention_nodes), tuple(self.outcome_nodes)
        if not a or not b:
            raise ConfigurationError("both node sets must be nonempty")
        if set(a) & set(b):
            raise ConfigurationError("intervention and outcome node sets must be disjoint")
        object.__setattr__(self, "intervention_nodes", a)
        object.__setattr__(self, "outcome_nodes", b)

    def validate(self, model: NetworkModel) -> None:
        for node in (*self.intervention_nodes, *self.outcome_nodes):
            model.node_index(node)


@dataclass(frozen=True)
class ScenarioResult:
    spec: InterventionSpec | None  # None marks the baseline
    samples: SampleMatrix
    mean_total: float
    per_node_marginals: np.ndarray

    @property
    def label(self) -> str:
        return BASELINE if self.spec is None else self.spec.target_node


@dataclass(frozen=True)
class ReportRow:
    target: str
    direction: str
    level: str
    mean_total: float
    t: float
    p: float
    p_adjusted: float
    significant: bool


@dataclass(frozen=True)
class ComparisonReport:
    baseline_mean: float
    rows: tuple[ReportRow, ...]
    ranking: tuple[str, ...]
    adjust_method: str
    direction: str
    level: str
    magnitude_sd: float
    alpha: float
    scored_nodes: tuple[str, ...]
    model_sha256: str = ""
    sampler: dict = field(default_factory=dict)

    def row(self, target: str) -> ReportRow:
        for r in self.rows:
            if r.target == target:
                return r
        raise KeyError(target)

    @property
    def any_significant(self) -> bool:
        return any(r.significant for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["target", "direction", "level", "mean_total", "t", "p", "p_adjusted", "significant"])
        writer.writerow([BASELINE, "", self.level, repr(self.baseline_mean), "", "", "", ""])
        for r in self.rows:
            writer.writerow(
                [r.target, r.direction, r.level, repr(r.mean_total), repr(r.t), repr(r.p), repr(r.p_adjusted),
                 str(r.significant).lower()]
            )
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "format_version": REPORT_VERSION,
            "model_sha256": self.model_sha256,
            "direction": self.direction,
            "level": self.level,
            "magnitude_sd": self.magnitude_sd,
            "adjust_method": self.adjust_method,
            "alpha": self.alpha,
            "scored_nodes": list(self.scored_nodes),
            "sampler": self.sampler,
            "baseline_mean": self.baseline_mean,
            "rows": [
                {
                    "target": r.target,
                    "direction": r.direction,
                    "level": r.level,
                    "mean_total": r.mean_total,
                    "t": r.t,
                    "p": r.p,
                    "p_adjusted": r.p_adjusted,
                    "significant": r.significant,
                }
                for r in self.rows
            ],
            "ranking": list(self.ranking),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    def save(self, directory: str | Path, stem: str = "nira_report") -> None:
        directory = Path(directory)
        (directory / f"{stem}.csv").write_text(self.to_csv())
        (directory / f"{stem}.json").write_text(self.dumps())


# --- threshold manipulation ------------------------------------------------


def threshold_sd(theta) -> float:
    """Sample standard deviation (denominator M-1) of a threshold vector."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size < 2:
        raise SizeError("need at least 2 thresholds for a standard deviation")
    return float(np.std(theta, ddof=1))


def intervention_shift(model: NetworkModel, spec: InterventionSpec, sd_axis: str = "nodes") -> float:
    """Signed threshold change for ``spec``: minus k*SD to alleviate, plus to aggravate."""
    if sd_axis == "nodes":
        sd = threshold_sd(effective_thresholds(model, spec.level))
    elif sd_axis == "groups":
        if spec.level == FIXED:
            raise ConfigurationError("sd_axis='groups' needs a group level")
        model.group_position(spec.level)
        sd = threshold_sd(model.random_thresholds[model.node_index(spec.target_node)])
    else:
        raise ConfigurationError(f"sd_axis must be one of {SD_AXES}")
    sign = -1.0 if spec.direction == ALLEVIATE else 1.0
    return sign * spec.magnitude_sd * sd


def apply_intervention(model: NetworkModel, spec: InterventionSpec, sd_axis: str = "nodes") -> np.ndarray:
    theta = effective_thresholds(model, spec.level)
    j = model.node_index(spec.target_node)
    theta[j] = theta[j] + intervention_shift(model, spec, sd_axis)
    return theta


# --- statistics ------------------------------------------------------------


def total_scores(samples: SampleMatrix | np.ndarray, scored_nodes: Iterable[str] | None = None,
                 node_names: Sequence[str] | None = None) -> np.ndarray:
    """Row sums over the scored columns (all columns when ``scored_nodes`` is None)."""
    if isinstance(samples, SampleMatrix):
        rows, names = samples.rows, samples.node_names
    else:
        rows, names = np.asarray(samples), node_names
    if scored_nodes is None:
        return rows.sum(axis=1, dtype=np.int64)
    if names is None:
        raise ConfigurationError("node names are needed to select scored nodes")
    names = list(names)
    try:
        cols = [names.index(n) for n in scored_nodes]
    except ValueError as exc:
        raise ConfigurationError(f"unknown scored node: {exc}") from None
    return rows[:, cols].sum(axis=1, dtype=np.int64)


def welch_t_test(a, b) -> tuple[float, float]:
    """Two-sided unequal-variance t test; ``t > 0`` when ``mean(a) > mean(b)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise SizeError("each sample needs at least 2 observations")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    if se2 == 0:
        raise DegenerateInputError("both samples have zero variance")
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    df = se2**2 / ((va**2 / (a.size - 1) if va else 0.0) + (vb**2 / (b.size - 1) if vb else 0.0))
    p = float(2 * stats.t.sf(abs(t), df))
    return float(t), min(p, 1.0)


def adjust_p(p_values, method: str = "holm") -> np.ndarray:
    """Family-wise adjusted p-values, clipped to [0, 1]."""
    p = np.asarray(p_values, dtype=np.float64)
    m = p.size
    if method == "bonferroni":
        return np.minimum(p * m, 1.0)
    if method == "holm":
        order = np.argsort(p, kind="stable")
        stepped = np.maximum.accumulate(p[order] * (m - np.arange(m)))
        out = np.empty(m)
        out[order] = np.minimum(stepped, 1.0)
        return out
    raise ConfigurationError(f"unknown adjustment method {method!r}")


def rank_targets(rows: Sequence[ReportRow], direction: str) -> tuple[str, ...]:
    """Significant targets first, each block ordered best-first by mean total."""
    if direction not in DIRECTIONS:
        raise ConfigurationError(f"direction must be one of {DIRECTIONS}")
    sign = 1.0 if direction == ALLEVIATE else -1.0
    indexed = list(enumerate(rows))
    indexed.sort(key=lambda ir: (not ir[1].significant, sign * ir[1].mean_total, ir[0]))
    return tuple(r.target for _, r in indexed)


# --- pipeline --------------------------------------------------------------


def _scenario(model, spec, theta, level, config, stream_id, scored) -> ScenarioResult:
    try:
        samples = generate_sample(model, level, config, theta_override=theta, stream_id=stream_id)
    except NiraError as exc:
        label = BASELINE if spec is None else spec.target_node
        raise type(exc)(f"scenario {label!r}: {exc}") from exc
    totals = total_scores(samples, scored)
    return ScenarioResult(spec, samples, float(totals.mean()), samples.rows.mean(axis=0))


def run_nira(
    model: NetworkModel,
    level: str = FIXED,
    direction: str = ALLEVIATE,
    config: SamplerConfig | None = None,
    partition: SubnetworkPartition | None = None,
    magnitude_sd: float = 2.0,
    adjust: str = "holm",
    alpha: float = 0.05,
    sd_axis: str = "nodes",
    threads: int = 1,
) -> tuple[list[ScenarioResult], ComparisonReport]:
    """Baseline plus one intervention scenario per target, each on its own stream.

    Stream 0 is the baseline (identical to :func:`generate_sample` with the
    same config); target ``i`` in model order uses stream ``i + 1``.
    """
    config = config or SamplerConfig()
    if direction not in DIRECTIONS:
        raise ConfigurationError(f"direction must be one of {DIRECTIONS}")
    if adjust not in ADJUST_METHODS:
        raise ConfigurationError(f"adjust must be one of {ADJUST_METHODS}")
    if level != FIXED:
        if not model.multilevel:
            raise ConfigurationError("group-level interventions need a multilevel model")
        model.group_position(level)
    if partition is not None:
        partition.validate(model)
        targets = [n for n in model.node_names if n in partition.intervention_nodes]
        scored = [n for n in model.node_names if n in partition.outcome_nodes]
    else:
        targets = list(model.node_names)
        scored = list(model.node_names)

    specs = [InterventionSpec(t, direction, magnitude_sd, level) for t in targets]
    jobs = [(None, effective_thresholds(model, level), 0)]
    jobs += [(s, apply_intervention(model, s, sd_axis), i + 1) for i, s in enumerate(specs)]

    def run(job):
        spec, theta, sid = job
        return _scenario(model, spec, theta, level, config, sid, scored)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            scenarios = list(pool.map(run, jobs))
    else:
        scenarios = [run(j) for j in jobs]

    base_totals = total_scores(scenarios[0].samples, scored)
    tests = []
    for sc in scenarios[1:]:
        try:
            tests.append(welch_t_test(base_totals, total_scores(sc.samples, scored)))
        except DegenerateInputError as exc:
            raise DegenerateInputError(f"scenario {sc.label!r}: {exc}") from exc
    p_adj = adjust_p([p for _, p in tests], adjust)
    rows = tuple(
        ReportRow(sc.label, direction, level, sc.mean_total, t, p, float(pa), bool(pa < alpha))
        for sc, (t, p), pa in zip(scenarios[1:], tests, p_adj)
    )
    report = ComparisonReport(
        baseline_mean=scenarios[0].mean_total,
        rows=rows,
        ranking=rank_targets(rows, direction),
        adjust_method=adjust,
        direction=direction,
        level=level,
        magnitude_sd=float(magnitude_sd),
        alpha=float(alpha),
        scored_nodes=tuple(scored),
        model_sha256=model.sha256(),
        sampler={**config.resolved(model.n_nodes).__dict__},
    )
    return scenarios, report
