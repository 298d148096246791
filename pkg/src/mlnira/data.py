"""Nested survey data: ingestion, dichotomization, centering and the ICC."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ContractError, IngestionError

LATENT_RESIDUAL_VARIANCE = math.pi**2 / 3


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _group_codes(group_ids: np.ndarray) -> tuple[tuple[str, ...], np.ndarray]:
    names, codes = np.unique(group_ids, return_inverse=True)
    return tuple(str(n) for n in names), codes.astype(np.intp)


@dataclass(frozen=True)
class OrdinalDataset:
    """Integer responses in ``[0, max_level]`` with one group label per row."""

    node_names: tuple[str, ...]
    group_ids: np.ndarray
    responses: np.ndarray
    max_level: int

    def __post_init__(self):
        responses = np.asarray(self.responses)
        group_ids = np.asarray(self.group_ids).astype(str)
        if responses.ndim != 2 or responses.shape[1] != len(self.node_names):
            raise ContractError(
                f"responses must be rows x {len(self.node_names)} nodes, got shape {responses.shape}"
            )
        if group_ids.shape != (responses.shape[0],):
            raise ContractError("group_ids length must equal the number of rows")
        if responses.shape[0] == 0:
            raise ContractError("dataset has no rows")
        if not np.issubdtype(responses.dtype, np.integer):
            if not np.all(np.equal(np.mod(responses, 1), 0)):
                raise ContractError("responses must be integers")
            responses = responses.astype(np.int64)
        if self.max_level < 1:
            raise ContractError("max_level must be >= 1")
        if responses.min() < 0 or responses.max() > self.max_level:
            raise ContractError(f"responses must lie in [0, {self.max_level}]")
        object.__setattr__(self, "node_names", tuple(self.node_names))
        object.__setattr__(self, "group_ids", _frozen(group_ids))
        object.__setattr__(self, "responses", _frozen(responses.astype(np.int64)))

    @property
    def n_rows(self) -> int:
        return self.responses.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.responses.shape[1]


@dataclass(frozen=True)
class BinaryDataset:
    """0/1 responses (rows x nodes) nested in groups.

    Constant columns are allowed here so that dichotomization never fails;
    the estimators reject them with a node-addressed error.
    """

    node_names: tuple[str, ...]
    group_ids: np.ndarray
    responses: np.ndarray
    group_names: tuple[str, ...] = field(init=False)
    group_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        responses = np.asarray(self.responses)
        group_ids = np.asarray(self.group_ids).astype(str)
        if responses.ndim != 2 or responses.shape[1] != len(self.node_names):
            raise ContractError(
                f"responses must be rows x {len(self.node_names)} nodes, got shape {responses.shape}"
            )
        if len(set(self.node_names)) != len(self.node_names):
            raise ContractError("node names must be unique")
        if group_ids.shape != (responses.shape[0],):
            raise ContractError("group_ids length must equal the number of rows")
        if responses.shape[0] == 0:
            raise ContractError("dataset has no rows")
        if not np.all((responses == 0) | (responses == 1)):
            raise ContractError("binary responses must be 0 or 1")
        names, codes = _group_codes(group_ids)
        object.__setattr__(self, "node_names", tuple(self.node_names))
        object.__setattr__(self, "group_ids", _frozen(group_ids))
        object.__setattr__(self, "responses", _frozen(responses.astype(np.uint8)))
        object.__setattr__(self, "group_names", names)
        object.__setattr__(self, "group_index", _frozen(codes))

    @property
    def n_rows(self) -> int:
        return self.responses.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.responses.shape[1]

    @property
    def n_groups(self) -> int:
        return len(self.group_names)

    def node_index(self, node: str) -> int:
        try:
            return self.node_names.index(node)
        except ValueError:
            raise ConfigurationError(f"unknown node {node!r}") from None

    def degenerate_nodes(self) -> list[str]:
        """Nodes lacking either a 0 or a 1 anywhere in the data."""
        col_sums = self.responses.sum(axis=0)
        return [
            name
            for name, s in zip(self.node_names, col_sums)
            if s == 0 or s == self.n_rows
        ]


@dataclass(frozen=True)
class CenteredDesign:
    """Design for one nodewise regression: centered predictors, raw outcome."""

    outcome_node: str
    predictor_nodes: tuple[str, ...]
    predictor_matrix: np.ndarray
    outcome_vector: np.ndarray
    group_index: np.ndarray
    group_names: tuple[str, ...]

    @property
    def n_obs(self) -> int:
        return self.outcome_vector.shape[0]

    @property
    def n_groups(self) -> int:
        return len(self.group_names)


def dichotomize(data: OrdinalDataset, cutoff: int = 1) -> BinaryDataset:
    """Recode responses to 1 where ``response >= cutoff`` and 0 otherwise."""
    if isinstance(data, BinaryDataset):
        if cutoff != 1:
            raise ConfigurationError(f"cutoff {cutoff} out of range [1, 1] for binary data")
        return data
    if not 1 <= cutoff <= data.max_level:
        raise ConfigurationError(f"cutoff {cutoff} out of range [1, {data.max_level}]")
    binary = (data.responses >= cutoff).astype(np.uint8)
    return BinaryDataset(data.node_names, data.group_ids, binary)


def group_mean_center(
    data: BinaryDataset, outcome_node: str, mode: str = "group"
) -> CenteredDesign:
    """Build the design for regressing ``outcome_node`` on every other node.

    ``mode="group"`` subtracts each predictor's group mean, ``"grand"`` the
    overall mean, ``"none"`` leaves predictors raw. The outcome is never
    centered and the grand mean is not re-added.
    """
    j = data.node_index(outcome_node)
    keep = [k for k in range(data.n_nodes) if k != j]
    x = data.responses[:, keep].astype(np.float64)
    if mode == "group":
        counts = np.bincount(data.group_index, minlength=data.n_groups)
        if np.any(counts == 0):
            raise ContractError("every group must be nonempty")
        means = np.zeros((data.n_groups, x.shape[1]))
        for c in range(x.shape[1]):
            means[:, c] = np.bincount(data.group_index, weights=x[:, c], minlength=data.n_groups)
        means /= counts[:, None]
        x = x - means[data.group_index]
    elif mode == "grand":
        x = x - x.mean(axis=0)
    elif mode != "none":
        raise ConfigurationError(f"unknown centering mode {mode!r}")
    return CenteredDesign(
        outcome_node=outcome_node,
        predictor_nodes=tuple(data.node_names[k] for k in keep),
        predictor_matrix=_frozen(x),
        outcome_vector=_frozen(data.responses[:, j].astype(np.float64)),
        group_index=data.group_index,
        group_names=data.group_names,
    )


def icc_from_variance(q: float) -> float:
    """Latent-scale intraclass correlation ``Q / (Q + pi^2/3)``."""
    if q < 0:
        raise ContractError("variance must be non-negative")
    return q / (q + LATENT_RESIDUAL_VARIANCE)


def compute_icc(data: BinaryDataset, node: str, **fit_options) -> float:
    """ICC of ``node`` from an intercept-only random-intercept logistic fit."""
    from .mlreg import fit_intercept_only

    if data.n_groups < 2:
        raise ConfigurationError("ICC needs at least 2 groups")
    j = data.node_index(node)
    design = CenteredDesign(
        outcome_node=node,
        predictor_nodes=(),
        predictor_matrix=np.zeros((data.n_rows, 0)),
        outcome_vector=data.responses[:, j].astype(np.float64),
        group_index=data.group_index,
        group_names=data.group_names,
    )
    result = fit_intercept_only(design, multilevel=True, **fit_options)
    return icc_from_variance(result.params.variance_q)


# --- CSV ---------------------------------------------------------------------


def read_csv(
    path: str | Path,
    group_column: str = "group",
    node_columns: Sequence[str] | None = None,
    max_level: int | None = None,
) -> OrdinalDataset:
    """Read a survey CSV: header row, one group column, integer responses.

    Rows with a missing or non-integer cell are rejected, never imputed.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        if group_column not in header:
            raise IngestionError(f"{path}: group column {group_column!r} not in header")
        if node_columns is None:
            node_columns = [h for h in header if h != group_column]
        else:
            node_columns = list(node_columns)
            missing = [c for c in node_columns if c not in header]
            if missing:
                raise IngestionError(f"{path}: columns {missing} not in header")
        if not node_columns:
            raise IngestionError(f"{path}: no node columns")
        g_pos = header.index(group_column)
        n_pos = [header.index(c) for c in node_columns]
        groups, rows = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise IngestionError(
                    f"{path}: row {line_no}: expected {len(header)} cells, found {len(row)}"
                )
            label = row[g_pos].strip()
            if not label:
                raise IngestionError(f"{path}: row {line_no}, column {group_column!r}: missing group")
            values = []
            for pos, name in zip(n_pos, node_columns):
                cell = row[pos].strip()
                try:
                    v = int(cell)
                except ValueError:
                    raise IngestionError(
                        f"{path}: row {line_no}, column {name!r}: not an integer: {cell!r}"
                    ) from None
                if v < 0 or (max_level is not None and v > max_level):
                    raise IngestionError(
                        f"{path}: row {line_no}, column {name!r}: value {v} out of range"
                    )
                values.append(v)
            groups.append(label)
            rows.append(values)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    responses = np.asarray(rows, dtype=np.int64)
    if max_level is None:
        max_level = max(1, int(responses.max()))
    return OrdinalDataset(tuple(node_columns), np.asarray(groups), responses, max_level)


def write_csv(data: OrdinalDataset | BinaryDataset, path: str | Path, group_column: str = "group") -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([group_column, *data.node_names])
        for g, row in zip(data.group_ids, data.responses):
            writer.writerow([g, *(int(v) for v in row)])
