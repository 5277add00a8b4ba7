"""Hot numeric kernels with a compiled core and a NumPy/SciPy fallback.

The compiled extension (built from _compiled.pyx at install time) is used
when importable; otherwise the fallback is selected. Set AUGLM_FORCE_FALLBACK
to any non-empty value to skip the compiled module, e.g. for benchmarking or
debugging. Both backends implement the same contracts; results agree to
floating-point accumulation order.
"""

import os

if os.environ.get("AUGLM_FORCE_FALLBACK"):
    from . import _fallback as _impl
else:
    try:
        from . import _compiled as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _fallback as _impl

BACKEND: str = _impl.BACKEND
gather_sum = _impl.gather_sum
ppr_power = _impl.ppr_power
ppr_push = _impl.ppr_push

__all__ = ["BACKEND", "gather_sum", "ppr_power", "ppr_push"]
