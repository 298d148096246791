"""Pure-Python twin of the compiled chain kernel.

Floating-point operations happen in the same order as the compiled code, so
both backends produce identical chains from identical draws.
"""

import math

import numpy as np


def _chain(W, theta, beta, s, ks, us, thin=None, out=None):
    w_rows = W.tolist()
    th = theta.tolist()
    state = s.tolist()
    m = len(state)
    exp = math.exp
    accepted = 0
    rows = [] if out is not None else None
    for i, (k, u) in enumerate(zip(ks.tolist(), us.tolist())):
        field = th[k]
        wk = w_rows[k]
        for j in range(m):
            if state[j]:
                field += wk[j]
        dh = (2.0 * state[k] - 1.0) * field
        if dh <= 0.0 or u <= exp(-beta * dh):
            state[k] = 1 - state[k]
            accepted += 1
        if rows is not None and (i + 1) % thin == 0:
            rows.append(list(state))
    s[:] = state
    if out is not None and rows:
        out[:] = np.asarray(rows, dtype=np.uint8)
    return accepted


def sweep(W, theta, beta, s, ks, us):
    """Run ``len(ks)`` single-site steps in place; return the accepted count."""
    return _chain(W, theta, beta, s, ks, us)


def record(W, theta, beta, s, ks, us, thin, out):
    """Fill each row of ``out`` with the state after ``thin`` more steps."""
    if len(ks) != out.shape[0] * thin or len(us) != out.shape[0] * thin:
        raise ValueError("need exactly rows * thin draws")
    _chain(W, theta, beta, s, ks, us, thin, out)
