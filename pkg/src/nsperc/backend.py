"""Kernel backend selection.

The hot inner loops exist twice: jitted (``_kernels_numba``) and pure numpy
(``_kernels_numpy``). The environment variable ``NSP_BACKEND`` picks one at
import time:

    NSP_BACKEND=numba   require the jitted kernels (ImportError if missing)
    NSP_BACKEND=numpy   force the pure-numpy fallback
    NSP_BACKEND=auto    jitted if numba imports, numpy otherwise (default)

Both backends are numerically equivalent to ~1e-13; ``benchmarks/`` compares
their speed.
"""

from __future__ import annotations

import os

_choice = os.environ.get("NSP_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(f"NSP_BACKEND must be auto|numba|numpy, got {_choice!r}")

if _choice == "numpy":
    from . import _kernels_numpy as _impl
else:
    try:
        from . import _kernels_numba as _impl
    except ImportError:
        if _choice == "numba":
            raise
        from . import _kernels_numpy as _impl


def backend_name() -> str:
    return _impl.BACKEND_NAME


erfcx = _impl.erfcx
log_erfc = _impl.log_erfc
log_fzt = _impl.log_fzt
l2_value = _impl.l2_value
l2_terms = _impl.l2_terms
l3_value = _impl.l3_value
l3_terms = _impl.l3_terms
