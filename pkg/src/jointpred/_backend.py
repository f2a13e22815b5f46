"""Pick the compiled likelihood kernels when available.

Set ``JOINTPRED_PURE_PYTHON=1`` to force the numpy implementation.
"""
import os

from . import _kernels_py as pure

compiled = None
if not os.environ.get("JOINTPRED_PURE_PYTHON"):
    try:
        from . import _kernels as compiled
    except ImportError:
        compiled = None

kernels = compiled if compiled is not None else pure
NAME = "cython" if compiled is not None else "numpy"
