"""Backend selection for the hot kernels.

The compiled extension is preferred. Set ``RETROQ_PURE_PYTHON=1`` to force
the NumPy fallback; it is also used automatically when the extension has not
been built.
"""

import os

from . import _kernels_py

if os.environ.get("RETROQ_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND
cn_propagate = _impl.cn_propagate
cn_history = _impl.cn_history
rk4_trajectories = _impl.rk4_trajectories

__all__ = ["BACKEND", "cn_propagate", "cn_history", "rk4_trajectories", "_kernels_py"]
