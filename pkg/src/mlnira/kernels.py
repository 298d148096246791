"""Chain kernel selected at import: compiled when built, pure Python otherwise.

Set ``MLNIRA_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

if os.environ.get("MLNIRA_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"
sweep = _impl.sweep
record = _impl.record
