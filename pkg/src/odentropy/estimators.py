"""Entropy-maximising OD estimators and the person-km calibration loop.

Methods
-------
bm
    Entries spread uniformly over the ``N - 1`` other stations.
sa-closed
    Destination share proportional to the destination's daily entries,
    ``n[i, j, t] = O[i, t] * T[j] / O``. Because ``i -> i`` trips are
    excluded, each row sums to ``O[i, t] * (1 - T[i] / O)`` rather than
    ``O[i, t]``.
sa
    Exact maximiser under entry rows and daily symmetry, found by balancing
    destination weights.
ad
    Distance-sensitive destination choice, ``p(j|i) ~ exp(theta d_ij + mu_j)``,
    with ``theta`` and ``mu`` calibrated to a reported person-km total under
    daily symmetry.

Every estimator returns an ``(N, N, T)`` array with a zero diagonal.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .core import Scenario
from .errors import ConvergenceError, InfeasibleError, ValidationError

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-5
DEFAULT_MAX_ITERATIONS = 10_000
METHODS = ("bm", "sa-closed", "sa", "ad")


@dataclass(frozen=True)
class UtilityParams:
    """Destination-choice parameters.

    ``theta`` holds one coefficient per attribute matrix. ``dest_constants``
    holds the per-station constants ``K_j``; ``-inf`` marks a station that
    can never be chosen (zero daily entries under the symmetry constraint).
    """

    theta: np.ndarray
    dest_constants: np.ndarray

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float)).copy()
        K = np.asarray(self.dest_constants, dtype=float).copy()
        if theta.ndim != 1 or K.ndim != 1:
            raise ValidationError("theta and dest_constants must be vectors")
        if not np.all(np.isfinite(theta)):
            raise ValidationError("theta must be finite")
        if np.any(np.isnan(K)) or np.any(K == np.inf):
            raise ValidationError("destination constants must be finite or -inf")
        if not np.any(np.isfinite(K)):
            raise ValidationError("at least one destination constant must be finite")
        theta.setflags(write=False)
        K.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "dest_constants", K)

    @classmethod
    def uniform(cls, n_stations: int, theta: float = 0.0) -> "UtilityParams":
        return cls(np.array([theta]), np.zeros(n_stations))

    @property
    def m(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class CalibrationTarget:
    person_km: float
    epsilon: float = DEFAULT_EPSILON
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        if not (math.isfinite(self.person_km) and self.person_km > 0):
            raise ValidationError("person-km target must be positive and finite")
        if not (self.epsilon > 0):
            raise ValidationError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")


@dataclass
class TraceRow:
    iteration: int
    theta: float
    person_km_residual: float  # signed, relative to the target
    symmetry_residual: float
    lower: float  # current theta bracket; nan while still expanding
    upper: float
    phase: str  # "start", "expand" or "bisect"


@dataclass(frozen=True)
class CalibrationResult:
    params: UtilityParams
    od: np.ndarray
    iterations: int
    residual_person_km: float
    residual_symmetry: float
    converged: bool
    trace: list[TraceRow] = field(default_factory=list)
    inner_sweeps: int = 0


# ----------------------------------------------------------------- helpers


def _offdiag_mask(N: int) -> np.ndarray:
    return ~np.eye(N, dtype=bool)


def _spread(entries: np.ndarray, P: np.ndarray) -> np.ndarray:
    """``n[i, j, t] = O[i, t] * P[i, j]``."""
    return entries[:, None, :] * P[:, :, None]


def _row_normalise(W: np.ndarray, b: np.ndarray) -> np.ndarray:
    M = W * b[None, :]
    s = M.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(s > 0, M / s, 0.0)


def _check_symmetry_feasible(daily: np.ndarray) -> None:
    # Inbound trips to j can only come from other stations.
    total = daily.sum()
    bad = np.nonzero(2.0 * daily > total * (1.0 + 1e-12))[0]
    if len(bad):
        j = bad[0]
        raise InfeasibleError(
            f"station index {j} has {daily[j]:.6g} daily entries, more than the "
            f"{total - daily[j]:.6g} entries of all other stations combined; "
            "daily symmetry cannot hold without i->i trips"
        )


def _balance(W, daily, b, epsilon, max_iterations):
    it, res = kernels.balance_columns(W, daily, daily, b, epsilon, max_iterations)
    if not res <= epsilon:
        raise ConvergenceError("destination balancing did not converge", residual=res, iterations=it)
    return it, res


def _initial_weights(daily: np.ndarray) -> np.ndarray:
    b = np.where(daily > 0, daily, 0.0).astype(float)
    b /= np.exp(np.log(b[daily > 0]).mean())
    return np.ascontiguousarray(b)


def _distance_weights(d: np.ndarray, theta: float) -> np.ndarray:
    """``exp(theta d_ij)`` per row, shifted by the row max; zero diagonal."""
    N = d.shape[0]
    off = _offdiag_mask(N)
    U = np.where(off, theta * d, -np.inf)
    U -= U.max(axis=1, keepdims=True)
    return np.ascontiguousarray(np.exp(U))


# -------------------------------------------------------------- estimators


def estimate_bm(scenario: Scenario) -> np.ndarray:
    """Uniform split of every entry count over the other ``N - 1`` stations."""
    N = scenario.n_stations
    P = _offdiag_mask(N) / (N - 1.0)
    return _spread(scenario.entries, P)


def estimate_sa_closed(scenario: Scenario) -> np.ndarray:
    """``n[i, j, t] = O[i, t] * T[j] / O`` for ``j != i``.

    Rows do not sum to the entries: the shortfall is ``O[i, t] * T[i] / O``.
    """
    T = scenario.daily
    O = T.sum()
    if not O > 0:
        raise ValidationError("total entries must be positive")
    P = np.where(_offdiag_mask(scenario.n_stations), T[None, :] / O, 0.0)
    return _spread(scenario.entries, P)


def estimate_sa_balanced(scenario: Scenario, epsilon: float = DEFAULT_EPSILON,
                         max_iterations: int = DEFAULT_MAX_ITERATIONS) -> np.ndarray:
    """Entropy maximiser under entry rows and daily symmetry with ``n_ii = 0``.

    The solution has the form ``n[i, j, t] = a[i, t] b[j]``. Row constraints
    fix ``a`` exactly, so only the destination weights ``b`` are iterated,
    until the largest relative symmetry violation is ``<= epsilon``.

    Raises
    ------
    InfeasibleError
        A station has more daily entries than all others combined.
    ConvergenceError
        ``max_iterations`` sweeps did not reach ``epsilon``.
    """
    T = scenario.daily
    _check_symmetry_feasible(T)
    W = np.ascontiguousarray(_offdiag_mask(scenario.n_stations).astype(float))
    b = _initial_weights(T)
    _balance(W, T, b, epsilon, max_iterations)
    return _spread(scenario.entries, _row_normalise(W, b))


def choice_matrix(params: UtilityParams, attributes: Sequence[np.ndarray]) -> np.ndarray:
    """Destination-choice probabilities for every origin as an ``(N, N)`` matrix.

    ``u[i, j] = K[j] + sum_k theta[k] * attributes[k][i, j]`` and
    ``P[i, j] = exp(u[i, j]) / sum_{s != i} exp(u[i, s])``, ``P[i, i] = 0``.
    The row maximum is subtracted before exponentiating.
    """
    K = params.dest_constants
    N = K.shape[0]
    if len(attributes) != params.m:
        raise ValidationError(f"expected {params.m} attribute matrices, got {len(attributes)}")
    U = np.broadcast_to(K[None, :], (N, N)).copy()
    for th, A in zip(params.theta, attributes):
        A = np.asarray(A, dtype=float)
        if A.shape != (N, N):
            raise ValidationError(f"attribute matrix must be {N}x{N}, got {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValidationError("attribute matrices must be finite")
        with np.errstate(invalid="ignore"):
            U = U + np.where(np.isfinite(U), th * A, 0.0)
    U[np.arange(N), np.arange(N)] = -np.inf
    c = U.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(c)):
        raise ValidationError("some origin has no reachable destination")
    E = np.exp(U - c)
    return E / E.sum(axis=1, keepdims=True)


def destination_probabilities(params: UtilityParams, attributes: Sequence[np.ndarray], origin: int) -> np.ndarray:
    """Probability vector over destinations for one origin (zero at the origin itself)."""
    N = params.dest_constants.shape[0]
    if not 0 <= origin < N:
        raise ValidationError(f"origin index {origin} out of range")
    return choice_matrix(params, attributes)[origin]


def estimate_ad(scenario: Scenario, params: UtilityParams) -> np.ndarray:
    """``n[i, j, t] = O[i, t] * p(j|i)`` with distance as the single attribute."""
    d = scenario.require_distances()
    if params.m != 1:
        raise ValidationError("the distance model takes exactly one theta")
    if params.dest_constants.shape[0] != scenario.n_stations:
        raise ValidationError("destination constants do not match the station count")
    return _spread(scenario.entries, choice_matrix(params, [d]))


def person_km(od: np.ndarray, distances: np.ndarray) -> float:
    return float(np.einsum("ijt,ij->", od, distances))


@dataclass
class _Evaluation:
    theta: float
    b: np.ndarray
    P: np.ndarray
    person_km: float
    symmetry: float
    sweeps: int


def _evaluate(d, daily, theta, b0, tol, max_iterations) -> _Evaluation:
    W = _distance_weights(d, theta)
    b = np.ascontiguousarray(b0.copy())
    it, res = kernels.balance_columns(W, daily, daily, b, tol, max_iterations)
    if not res <= tol:
        raise ConvergenceError(f"destination balancing at theta={theta:.6g} did not converge",
                               residual=res, iterations=it)
    P = _row_normalise(W, b)
    pk = float((daily[:, None] * P * d).sum())
    return _Evaluation(theta, b, P, pk, res, it)


def balance_ad(scenario: Scenario, theta: float, epsilon: float = DEFAULT_EPSILON,
               max_iterations: int = DEFAULT_MAX_ITERATIONS) -> UtilityParams:
    """Destination constants that make the distance model satisfy daily symmetry at a fixed ``theta``."""
    d = scenario.require_distances()
    T = scenario.daily
    _check_symmetry_feasible(T)
    ev = _evaluate(d, T, float(theta), _initial_weights(T), epsilon, max_iterations)
    return _params_from(ev)


def _params_from(ev: _Evaluation) -> UtilityParams:
    with np.errstate(divide="ignore"):
        mu = np.log(ev.b)
    return UtilityParams(np.array([ev.theta]), mu)


def calibrate_ad(scenario: Scenario, target: CalibrationTarget) -> CalibrationResult:
    """Calibrate ``theta`` and ``mu`` to the person-km target under daily symmetry.

    Outer loop: root search on ``theta`` for
    ``g(theta) = person_km(theta) - target``, which increases with
    ``theta``. The bracket starts at ``[-1/dm, 1/dm]`` (``dm`` the mean
    off-diagonal distance) around ``theta = 0`` and doubles outward until
    ``g`` changes sign, then is bisected until ``|g| / target <= epsilon``.

    Inner loop: for each trial ``theta`` the destination weights
    ``exp(mu)`` are balanced to a symmetry residual of ``epsilon / 10``,
    warm-started from the previous trial. ``mu`` is centred to zero mean over
    stations with positive daily entries.

    Raises
    ------
    InfeasibleError
        Target outside what any ``theta`` can reach; the message carries the
        person-km range reached during bracket expansion.
    ConvergenceError
        Outer or inner iteration cap hit.
    """
    d = scenario.require_distances()
    T = scenario.daily
    _check_symmetry_feasible(T)
    dbar = float(target.person_km)
    eps = float(target.epsilon)
    inner_tol = eps / 10.0
    max_it = int(target.max_iterations)
    O = float(T.sum())
    off = _offdiag_mask(scenario.n_stations)
    d_off = d[off]
    lo_bound, hi_bound = O * d_off.min(), O * d_off.max()
    if not lo_bound < dbar < hi_bound and not (lo_bound == hi_bound and abs(dbar - lo_bound) <= eps * dbar):
        raise InfeasibleError(f"person-km target {dbar:.6g} cannot be reached", bracket=(lo_bound, hi_bound))

    trace: list[TraceRow] = []
    sweeps = 0
    b_warm = _initial_weights(T)

    def run(theta, lower, upper, phase):
        nonlocal sweeps, b_warm
        try:
            ev = _evaluate(d, T, theta, b_warm, inner_tol, max_it)
        except ConvergenceError as e:
            e.trace = trace
            raise
        sweeps += ev.sweeps
        b_warm = ev.b
        g = (ev.person_km - dbar) / dbar
        trace.append(TraceRow(len(trace), theta, g, ev.symmetry, lower, upper, phase))
        log.debug("theta=%.9g g=%.3e sym=%.3e sweeps=%d", theta, g, ev.symmetry, ev.sweeps)
        return ev, g

    def finish(ev, g):
        od = _spread(scenario.entries, ev.P)
        return CalibrationResult(
            params=_params_from(ev), od=od, iterations=len(trace), residual_person_km=abs(g),
            residual_symmetry=ev.symmetry, converged=True, trace=trace, inner_sweeps=sweeps,
        )

    ev, g = run(0.0, math.nan, math.nan, "start")
    if abs(g) <= eps or lo_bound == hi_bound:
        return finish(ev, g)

    # Bracket expansion away from theta = 0.
    mean_d = float(d_off.mean())
    spread = float(d_off.max() - d_off.min())
    step = 1.0 / mean_d
    direction = -1.0 if g > 0 else 1.0
    inner = 0.0
    outer = direction * step
    while True:
        if len(trace) >= max_it:
            raise ConvergenceError("theta bracket expansion hit the iteration cap", residual=abs(g),
                                   iterations=len(trace), trace=trace)
        try:
            ev, g = run(outer, math.nan, math.nan, "expand")
        except ConvergenceError:
            ev = None
        if ev is None or abs(outer) * spread > 700.0:
            reached = [dbar * (1.0 + row.person_km_residual) for row in trace]
            raise InfeasibleError(f"person-km target {dbar:.6g} is outside the attainable range",
                                  bracket=(min(reached), max(reached)))
        if abs(g) <= eps:
            return finish(ev, g)
        if (g > 0) == (direction > 0):
            break
        inner = outer
        outer *= 2.0

    lo, hi = sorted((inner, outer))
    while True:
        if len(trace) >= max_it:
            raise ConvergenceError("theta bisection hit the iteration cap", residual=abs(g),
                                   iterations=len(trace), trace=trace)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            raise ConvergenceError("theta bracket collapsed before reaching the person-km tolerance",
                                   residual=abs(g), iterations=len(trace), trace=trace)
        ev, g = run(mid, lo, hi, "bisect")
        if abs(g) <= eps:
            return finish(ev, g)
        if g > 0:
            hi = mid
        else:
            lo = mid
        trace[-1].lower, trace[-1].upper = lo, hi


def estimate(scenario: Scenario, method: str, *, epsilon: float = DEFAULT_EPSILON,
             max_iterations: int = DEFAULT_MAX_ITERATIONS, params: UtilityParams | None = None,
             person_km_target: float | None = None):
    """Dispatch by method name. Returns ``(od, calibration_result_or_None)``."""
    if method == "bm":
        return estimate_bm(scenario), None
    if method == "sa-closed":
        return estimate_sa_closed(scenario), None
    if method == "sa":
        return estimate_sa_balanced(scenario, epsilon, max_iterations), None
    if method == "ad":
        if person_km_target is not None:
            res = calibrate_ad(scenario, CalibrationTarget(person_km_target, epsilon, max_iterations))
            return res.od, res
        if params is None:
            raise ValidationError("method 'ad' needs either a person-km target or explicit parameters")
        return estimate_ad(scenario, params), None
    raise ValidationError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
