"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable, or when
``ODENTROPY_PURE=1`` is set.
"""

import numpy as np


def balance_columns(W, R, target, b, tol, max_iter):
    """Fixed-point scaling of destination weights ``b`` in place.

    Each sweep forms ``P[i, j] = W[i, j] b[j] / sum_s W[i, s] b[s]`` and the
    column totals ``col[j] = sum_i R[i] P[i, j]``, then rescales
    ``b[j] *= target[j] / col[j]`` and divides ``b`` by its geometric mean
    over stations with ``target > 0``. Stops as soon as the largest relative
    column violation is ``<= tol`` (before updating), or after ``max_iter``
    updates.

    Returns ``(iterations, residual)`` measured at the returned ``b``.
    """
    active = target > 0
    rows = R > 0
    Wr = W[rows]
    Rr = R[rows]
    it = 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        while True:
            den = Wr @ b
            q = np.where(den > 0, Rr / den, np.inf)
            col = b * (q @ Wr)
            r = np.where(active, np.abs(col - target) / np.where(active, target, 1.0), np.abs(col))
            r = np.where(np.isnan(r), np.inf, r)
            res = float(r.max())
            if res <= tol or it >= max_iter or res == np.inf:
                return it, res
            b[active] *= target[active] / col[active]
            b[~active] = 0.0
            b /= np.exp(np.log(b[active]).mean())
            it += 1
