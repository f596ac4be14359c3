"""Backend selection for the ansatz kernel.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``FEDQT_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

BACKEND = "python"
evolve = _fallback.evolve

if os.environ.get("FEDQT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernel
    except ImportError:  # extension not built
        pass
    else:
        evolve = _ckernel.evolve
        BACKEND = "cython"

__all__ = ["BACKEND", "evolve"]
