"""Entropy objective, constraint residuals and a small-instance reference solver.

The reference solver works directly on the dual of

    max H(n) = -sum (n log n - n)   s.t.  A n = c

whose minimiser ``y`` gives ``n = exp(A^T y)``. It assembles the constraint
matrix explicitly and takes damped Newton steps, so it shares nothing with
the closed forms and balancing sweeps in :mod:`odentropy.estimators`. It is
meant for instances of a few stations and intervals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Scenario, check_od
from .errors import ConvergenceError, InfeasibleError, ValidationError


@dataclass(frozen=True)
class ConstraintSet:
    """Which constraint families are active.

    Entry rows (every origin/interval sums to its entry count) are always
    on. ``symmetry`` adds daily inbound = daily outbound per station;
    ``person_km`` is the reported total, or None.
    """

    symmetry: bool = False
    person_km: float | None = None

    @property
    def entry_rows(self) -> bool:
        return True

    def __post_init__(self):
        if self.person_km is not None and not self.person_km > 0:
            raise ValidationError("person-km target must be positive")


ENTRY_ONLY = ConstraintSet()
SYMMETRIC = ConstraintSet(symmetry=True)


@dataclass(frozen=True)
class ResidualReport:
    entry_rows: float
    symmetry: float | None
    person_km: float | None
    entropy: float

    def max_residual(self) -> float:
        vals = [v for v in (self.entry_rows, self.symmetry, self.person_km) if v is not None]
        return max(vals)

    def lines(self) -> list[str]:
        out = [f"entropy H            {self.entropy:.10g}",
               f"entry rows residual  {self.entry_rows:.3e}"]
        if self.symmetry is not None:
            out.append(f"symmetry residual    {self.symmetry:.3e}")
        if self.person_km is not None:
            out.append(f"person-km residual   {self.person_km:.3e}")
        return out


def _xlogx(n: np.ndarray) -> np.ndarray:
    pos = n > 0
    return np.where(pos, n * np.log(np.where(pos, n, 1.0)), 0.0)


def entropy(od, raw: bool = False) -> float:
    """Entropy of an OD tensor with ``0 log 0 = 0``.

    By default returns ``H = -sum(n log n - n)`` over off-diagonal cells, the
    quantity the estimators maximise. ``raw=True`` returns
    ``sum(n log n - n)`` without the sign flip.
    """
    n = np.asarray(od, dtype=float)
    N = n.shape[0]
    off = ~np.eye(N, dtype=bool)
    s = float((_xlogx(n) - n)[off].sum())
    return s if raw else -s


def _relative(actual: np.ndarray, wanted: np.ndarray) -> float:
    # relative where the target is positive, absolute where it is zero
    err = np.abs(actual - wanted)
    pos = wanted > 0
    rel = np.where(pos, err / np.where(pos, wanted, 1.0), err)
    return float(rel.max()) if rel.size else 0.0


def residuals(od, scenario: Scenario, constraints: ConstraintSet = ENTRY_ONLY) -> ResidualReport:
    """Maximum relative violation of each enabled constraint family."""
    n = check_od(od, scenario.n_stations, scenario.n_intervals)
    O = scenario.entries
    rows = _relative(n.sum(axis=1), O)
    sym = None
    if constraints.symmetry:
        sym = _relative(n.sum(axis=(0, 2)), O.sum(axis=1))
    pk = None
    if constraints.person_km is not None:
        d = scenario.require_distances()
        total = float(np.einsum("ijt,ij->", n, d))
        pk = abs(total - constraints.person_km) / constraints.person_km
    return ResidualReport(rows, sym, pk, entropy(n))


# ------------------------------------------------------------- dual solver


@dataclass
class DualProblem:
    """Explicit constraint system over the structurally free cells.

    ``cells`` lists ``(i, j, t)`` of the free variables; ``A`` has one row per
    active constraint and one column per free cell; ``c`` the right-hand sides.
    """

    shape: tuple[int, int, int]
    cells: np.ndarray
    A: np.ndarray
    c: np.ndarray
    row_kind: np.ndarray  # 0 entry row, 1 symmetry, 2 person-km

    def primal(self, y: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.A.T @ y)

    def value(self, y: np.ndarray) -> float:
        return float(self.primal(y).sum() - self.c @ y)

    def gradient(self, y: np.ndarray) -> np.ndarray:
        return self.A @ self.primal(y) - self.c

    def hessian(self, y: np.ndarray) -> np.ndarray:
        x = self.primal(y)
        return (self.A * x[None, :]) @ self.A.T

    def to_tensor(self, x: np.ndarray) -> np.ndarray:
        n = np.zeros(self.shape)
        i, j, t = self.cells.T
        n[i, j, t] = x
        return n

    def relative_residual(self, y: np.ndarray) -> float:
        return _relative(self.A @ self.primal(y), self.c)


def build_dual(scenario: Scenario, constraints: ConstraintSet) -> DualProblem:
    O = np.asarray(scenario.entries, dtype=float)
    N, Tn = O.shape
    daily = O.sum(axis=1)
    free = np.zeros((N, N, Tn), dtype=bool)
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            for t in range(Tn):
                if O[i, t] > 0 and (not constraints.symmetry or daily[j] > 0):
                    free[i, j, t] = True
    cells = np.argwhere(free)
    col = {tuple(c): k for k, c in enumerate(cells)}

    rows, rhs, kinds = [], [], []
    for i in range(N):
        for t in range(Tn):
            if O[i, t] > 0:
                r = np.zeros(len(cells))
                for j in range(N):
                    k = col.get((i, j, t))
                    if k is not None:
                        r[k] = 1.0
                if not r.any():
                    raise InfeasibleError(f"origin {i} at interval {t} has entries but no admissible destination")
                rows.append(r), rhs.append(O[i, t]), kinds.append(0)
    if constraints.symmetry:
        for j in range(N):
            if daily[j] > 0:
                r = np.zeros(len(cells))
                for (a, b, t), k in col.items():
                    if b == j:
                        r[k] = 1.0
                if not r.any():
                    raise InfeasibleError(f"station {j} has daily entries but no admissible inbound cell")
                rows.append(r), rhs.append(daily[j]), kinds.append(1)
    if constraints.person_km is not None:
        d = scenario.require_distances()
        r = np.array([d[a, b] for a, b, _ in cells])
        rows.append(r), rhs.append(float(constraints.person_km)), kinds.append(2)
    return DualProblem((N, N, Tn), cells, np.array(rows), np.array(rhs), np.array(kinds))


def initial_multipliers(problem: DualProblem, scenario: Scenario, tol: float) -> np.ndarray:
    """Start at the uniform split: ``log(O/(N-1))`` on entry rows, zero elsewhere."""
    N = scenario.n_stations
    y = np.zeros(len(problem.c))
    entry = problem.row_kind == 0
    y[entry] = np.log(np.maximum(problem.c[entry] / (N - 1), tol))
    return y


def reference_solve(scenario: Scenario, constraints: ConstraintSet = ENTRY_ONLY, tol: float = 1e-10,
                    max_iterations: int = 500, y0: np.ndarray | None = None) -> np.ndarray:
    """Entropy maximiser under ``constraints`` by damped Newton on the dual.

    Terminates when every relative constraint residual is ``<= tol``.
    ``y0`` overrides the starting multipliers (same layout as
    :func:`build_dual` rows).
    """
    problem = build_dual(scenario, constraints)
    y = initial_multipliers(problem, scenario, tol) if y0 is None else np.array(y0, dtype=float)
    f = problem.value(y)
    for it in range(max_iterations):
        if problem.relative_residual(y) <= tol:
            return problem.to_tensor(problem.primal(y))
        grad = problem.gradient(y)
        H = problem.hessian(y)
        step = -np.linalg.lstsq(H, grad, rcond=None)[0]
        slope = float(grad @ step)
        if slope >= 0:
            step, slope = -grad, -float(grad @ grad)
        gnorm = float(np.linalg.norm(grad))
        alpha = 1.0
        while True:
            y_new = y + alpha * step
            f_new = problem.value(y_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * alpha * slope:
                break
            # predicted decrease below the resolution of f: fall back to the gradient norm
            if (np.isfinite(f_new) and abs(alpha * slope) < 1e-12 * max(abs(f), 1.0)
                    and np.linalg.norm(problem.gradient(y_new)) < gnorm):
                break
            alpha *= 0.5
            if alpha < 1e-14:
                break
        if alpha < 1e-14:
            # no decrease possible at double precision
            if problem.relative_residual(y) <= tol:
                break
            raise ConvergenceError("dual Newton line search stalled (constraints likely infeasible)",
                                   residual=problem.relative_residual(y), iterations=it)
        y, f = y_new, f_new
    res = problem.relative_residual(y)
    if res <= tol:
        return problem.to_tensor(problem.primal(y))
    raise ConvergenceError("reference solver did not converge", residual=res, iterations=max_iterations)
