"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``ODENTROPY_PURE=1`` to force the fallback.
"""

import os

import numpy as np

from . import _fallback

BACKEND = "python"
_compiled = None
if os.environ.get("ODENTROPY_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _compiled = None


def compiled_available() -> bool:
    return _compiled is not None


def balance_columns(W, R, target, b, tol, max_iter, backend=None):
    """Dispatch to the selected backend; see ``_fallback.balance_columns``.

    ``b`` is updated in place and must be a contiguous float64 array.
    """
    backend = backend or BACKEND
    W = np.ascontiguousarray(W, dtype=float)
    R = np.ascontiguousarray(R, dtype=float)
    target = np.ascontiguousarray(target, dtype=float)
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        it, res = _compiled.balance_columns(W, R, target, b, float(tol), int(max_iter))
        return int(it), float(res)
    return _fallback.balance_columns(W, R, target, b, tol, max_iter)
