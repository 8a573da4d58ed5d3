"""Backend selection for the rollout kernels.

The compiled extension is used when it imports; ``REGMDP_PURE_PYTHON=1``
forces the numpy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("REGMDP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

sample_starts = _impl.sample_starts
rollout = _impl.rollout
