import re

import numpy as np
import pytest

from mlnira.network import NetworkModel

# Acceptance tests store a one-line detail per criterion here; the terminal
# summary below prints PASS/FAIL for each.
ACCEPTANCE: dict[int, str] = {}


def make_model(W, tau, B=None, groups=(), names=None) -> NetworkModel:
    tau = np.asarray(tau, dtype=float)
    m = tau.size
    names = names or tuple(f"N{i}" for i in range(m))
    B = np.zeros((m, len(groups))) if B is None else np.asarray(B, dtype=float)
    return NetworkModel(tuple(names), np.asarray(W, dtype=float), tau, B, tuple(groups))


def random_model(rng, m=4, w_range=(-1.5, 1.5), theta_range=(-2.0, 0.0)) -> NetworkModel:
    W = np.triu(rng.uniform(*w_range, size=(m, m)), 1)
    return make_model(W + W.T, rng.uniform(*theta_range, size=m))


@pytest.fixture
def criterion():
    def record(number: int, detail: str) -> None:
        ACCEPTANCE[number] = detail

    return record


def pytest_terminal_summary(terminalreporter):
    outcomes = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            m = re.search(r"test_criterion_(\d+)", getattr(rep, "nodeid", ""))
            if m and rep.when == "call" or (m and key == "error"):
                outcomes[int(m.group(1))] = "PASS" if key == "passed" else "FAIL"
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(outcomes):
        terminalreporter.write_line(f"criterion {n:2d}: {outcomes[n]}  {ACCEPTANCE.get(n, '')}")
