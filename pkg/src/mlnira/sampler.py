"""Single-site Metropolis-Hastings simulation of {0,1} Ising networks.

Energy convention: ``H(s) = -1/2 s'Ws - theta's`` and ``pi(s) ~ exp(-beta H(s))``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .errors import ConfigurationError, ContractError, SizeError
from .network import FIXED, NetworkModel, effective_thresholds
from .rng import stream

MAX_EXACT_NODES = 15
_CHUNK_STEPS = 1 << 20


@dataclass(frozen=True)
class SamplerConfig:
    """``burn_in``/``thin`` default to 10*M and M single-site steps."""

    beta: float = 1.0
    burn_in: int | None = None
    thin: int | None = None
    n_samples: int = 5000
    seed: int = 0

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigurationError("beta must be positive")
        for name in ("burn_in", "thin"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.n_samples < 1:
            raise ConfigurationError("n_samples must be >= 1")

    def resolved(self, n_nodes: int) -> "SamplerConfig":
        return SamplerConfig(
            beta=self.beta,
            burn_in=self.burn_in if self.burn_in is not None else 10 * n_nodes,
            thin=self.thin if self.thin is not None else n_nodes,
            n_samples=self.n_samples,
            seed=self.seed,
        )


@dataclass(frozen=True)
class SampleMatrix:
    rows: np.ndarray
    node_names: tuple[str, ...]
    provenance: dict

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.uint8)
        if rows.ndim != 2 or rows.shape[1] != len(self.node_names):
            raise ContractError("sample shape does not match the node list")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def n_samples(self) -> int:
        return self.rows.shape[0]

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.node_names)
            writer.writerows(self.rows.tolist())


def _check(s, W, theta):
    s = np.asarray(s)
    W = np.asarray(W, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    m = theta.shape[0]
    if s.shape != (m,) or W.shape != (m, m):
        raise ContractError(f"shape mismatch: s {s.shape}, W {W.shape}, theta {theta.shape}")
    return s, W, theta


def energy(s, W, theta) -> float:
    s, W, theta = _check(s, W, theta)
    sf = s.astype(np.float64)
    return float(-0.5 * sf @ W @ sf - theta @ sf)


def delta_energy(s, k: int, W, theta) -> float:
    """Energy change from flipping node ``k``, in O(M)."""
    s, W, theta = _check(s, W, theta)
    if not 0 <= k < theta.shape[0]:
        raise IndexError(f"node index {k} out of range")
    return float((2.0 * s[k] - 1.0) * (W[k] @ s.astype(np.float64) + theta[k]))


def acceptance(delta_h: float, beta: float = 1.0) -> float:
    x = -beta * delta_h
    return 1.0 if x >= 0 else math.exp(x)


def mh_step(s, W, theta, beta: float, rng: np.random.Generator) -> np.ndarray:
    """One proposal: draw a node, then a uniform; return the next state."""
    s = np.array(s, dtype=np.uint8)
    k = int(rng.integers(s.shape[0]))
    u = rng.random()
    if u <= acceptance(delta_energy(s, k, W, theta), beta):
        s[k] = 1 - s[k]
    return s


def all_states(m: int) -> np.ndarray:
    """Every {0,1} vector of length m; row i is i in binary, node 0 most significant."""
    if m > MAX_EXACT_NODES:
        raise SizeError(f"exact enumeration supports at most {MAX_EXACT_NODES} nodes, got {m}")
    idx = np.arange(2**m)
    return ((idx[:, None] >> np.arange(m - 1, -1, -1)) & 1).astype(np.uint8)


def state_index(rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    m = rows.shape[1]
    return rows @ (1 << np.arange(m - 1, -1, -1))


def exact_distribution(W, theta, beta: float = 1.0) -> np.ndarray:
    """Boltzmann probabilities of all states, ordered as :func:`all_states`."""
    theta = np.asarray(theta, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64).reshape(theta.size, theta.size)
    s = all_states(theta.size).astype(np.float64)
    h = -0.5 * np.einsum("ij,jk,ik->i", s, W, s) - s @ theta
    logp = -beta * h
    return np.exp(logp - logsumexp(logp))


def exact_marginals(W, theta, beta: float = 1.0) -> np.ndarray:
    p = exact_distribution(W, theta, beta)
    return p @ all_states(np.size(theta)).astype(np.float64)


def simulate(W, theta, config: SamplerConfig, rng: np.random.Generator) -> np.ndarray:
    """Run one chain: random start, burn-in, then ``thin`` steps per retained row."""
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    m = theta.shape[0]
    W = np.ascontiguousarray(W, dtype=np.float64).reshape(m, m)
    cfg = config.resolved(m)
    s = rng.integers(0, 2, size=m).astype(np.uint8)
    left = cfg.burn_in
    while left > 0:
        n = min(left, _CHUNK_STEPS)
        kernels.sweep(W, theta, cfg.beta, s, rng.integers(0, m, size=n), rng.random(n))
        left -= n
    out = np.empty((cfg.n_samples, m), dtype=np.uint8)
    per_chunk = max(1, _CHUNK_STEPS // cfg.thin)
    for r0 in range(0, cfg.n_samples, per_chunk):
        rows = min(per_chunk, cfg.n_samples - r0)
        n = rows * cfg.thin
        kernels.record(
            W, theta, cfg.beta, s, rng.integers(0, m, size=n), rng.random(n), cfg.thin, out[r0 : r0 + rows]
        )
    return out


def generate_sample(
    model: NetworkModel,
    level: str = FIXED,
    config: SamplerConfig | None = None,
    theta_override=None,
    stream_id: int = 0,
) -> SampleMatrix:
    """Simulate ``config.n_samples`` respondents from ``model`` at ``level``.

    The chain draws from the independent stream ``(config.seed, stream_id)``.
    """
    config = config or SamplerConfig()
    if theta_override is None:
        theta = effective_thresholds(model, level)
    else:
        theta = np.asarray(theta_override, dtype=np.float64)
        if theta.shape != (model.n_nodes,):
            raise ContractError(f"theta_override must have length {model.n_nodes}")
    if level != FIXED:
        model.group_position(level)
    rows = simulate(model.weights, theta, config, stream(config.seed, stream_id))
    provenance = {
        "model_sha256": model.sha256(),
        "level": level,
        "seed": config.seed,
        "stream": stream_id,
        "config": asdict(config.resolved(model.n_nodes)),
    }
    return SampleMatrix(rows, model.node_names, provenance)
