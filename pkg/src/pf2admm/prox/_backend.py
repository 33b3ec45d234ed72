"""Pick the compiled kernels when importable, else the pure-Python twins.

Set ``PF2ADMM_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and by the backend-equivalence tests).
"""

import os

from . import _kernels_py

python_kernels = _kernels_py

try:
    from . import _kernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and os.environ.get("PF2ADMM_PURE_PYTHON", "") in ("", "0"):
    kernels = compiled_kernels
    BACKEND = "cython"
else:
    kernels = python_kernels
    BACKEND = "python"
