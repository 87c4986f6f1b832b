"""Numeric kernel backend selection.

Imports the compiled Cython kernels when available, otherwise falls back
to the numpy implementations.  Set HEISBETA_FORCE_PYTHON=1 to force the
fallback (used by the benchmark and the backend-equivalence tests).
"""

import os

if os.environ.get("HEISBETA_FORCE_PYTHON"):
    from . import pykernels as _impl
else:
    try:
        from . import cykernels as _impl
    except ImportError:
        from . import pykernels as _impl

BACKEND = _impl.BACKEND
koranyi_norm = _impl.koranyi_norm
fiber_distance = _impl.fiber_distance
lp_state = _impl.lp_state
power_residual = _impl.power_residual
