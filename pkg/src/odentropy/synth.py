"""Synthetic scenarios with a known ground-truth OD tensor.

Ground truth is built from the destination-choice form

    n[i, j, t] = total * w[i] * profile[t] * p(j | i)
    p(j | i) ~ attraction[j] * exp(theta * d[i, j]),  j != i

and the entry counts are its row sums, so entries are always consistent
with the truth. With ``origins="stationary"`` the origin weights are the
stationary distribution of ``p``, which makes the truth satisfy daily
symmetry and therefore lie exactly in the calibrated distance model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Scenario, StationSet, TimeGrid
from .errors import ValidationError
from .estimators import UtilityParams, choice_matrix

TOPOLOGIES = ("line", "star")
PRESETS = ("two-peak-line", "two-peak-star")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    stations: int = 8
    intervals: int = 96
    topology: str = "line"
    spacing_km: float = 4.0
    truth_theta: float = -0.3
    truth_attraction: tuple[float, ...] | None = None  # default: bump centred on the hub
    temporal_profile: tuple[float, ...] | None = None  # default: two_peak_profile(intervals)
    total_trips: float = 10_000.0
    origins: str | tuple[float, ...] = "stationary"
    time_varying_attraction: float = 0.0  # amplitude of a per-interval log-attraction wobble
    stochastic: bool = False  # Poisson-round every cell using ``seed``

    def __post_init__(self):
        if self.stations < 2:
            raise ValidationError("need at least 2 stations")
        if self.intervals < 1:
            raise ValidationError("need at least 1 interval")
        if self.topology not in TOPOLOGIES:
            raise ValidationError(f"topology must be one of {TOPOLOGIES}")
        if not self.spacing_km > 0 or not self.total_trips > 0:
            raise ValidationError("spacing_km and total_trips must be positive")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        if not np.isfinite(self.truth_theta):
            raise ValidationError("truth_theta must be finite")
        if self.truth_attraction is not None:
            a = np.asarray(self.truth_attraction, dtype=float)
            if a.shape != (self.stations,) or np.any(a <= 0) or not np.all(np.isfinite(a)):
                raise ValidationError("truth_attraction needs one positive weight per station")
        if self.temporal_profile is not None:
            _check_weights(self.temporal_profile, self.intervals, "temporal_profile")
        if isinstance(self.origins, str):
            if self.origins not in ("stationary", "uniform"):
                raise ValidationError("origins must be 'stationary', 'uniform' or a weight vector")
        else:
            _check_weights(self.origins, self.stations, "origins")


def _check_weights(w, size, name):
    w = np.asarray(w, dtype=float)
    if w.shape != (size,) or np.any(w < 0) or not np.all(np.isfinite(w)) or not w.sum() > 0:
        raise ValidationError(f"{name} needs {size} non-negative weights with a positive sum")


def two_peak_profile(intervals: int) -> np.ndarray:
    """Sharp morning peak near 08:00 and a lower, wider one near 17:00 on a 24 h day."""
    hours = (np.arange(intervals) + 0.5) * 24.0 / intervals
    w = (0.03
         + 1.0 * np.exp(-0.5 * ((hours - 8.0) / 1.0) ** 2)
         + 0.7 * np.exp(-0.5 * ((hours - 17.0) / 1.6) ** 2))
    return w / w.sum()


def topology_distances(topology: str, stations: int, spacing_km: float) -> np.ndarray:
    k = np.arange(stations)
    if topology == "line":
        return np.abs(k[:, None] - k[None, :]) * spacing_km
    if topology == "star":
        # station 0 is the hub; every other station is one spoke away
        d = np.where(k[:, None] == k[None, :], 0.0, 2.0 * spacing_km)
        d[0, 1:] = d[1:, 0] = spacing_km
        return d
    raise ValidationError(f"unknown topology {topology!r}")


def hub_index(config: SynthConfig) -> int:
    return int(np.argmax(_attraction(config)))


def _attraction(config: SynthConfig) -> np.ndarray:
    if config.truth_attraction is not None:
        return np.asarray(config.truth_attraction, dtype=float)
    N = config.stations
    if config.topology == "star":
        a = np.ones(N)
        a[0] = 4.0
        return a
    centre = N // 2
    width = max(N / 4.0, 1.0)
    return 1.0 + 3.0 * np.exp(-(((np.arange(N) - centre) / width) ** 2))


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Left fixed point ``w P = w`` with ``sum(w) = 1``."""
    N = P.shape[0]
    A = np.vstack([P.T - np.eye(N), np.ones((1, N))])
    rhs = np.zeros(N + 1)
    rhs[-1] = 1.0
    w = np.linalg.lstsq(A, rhs, rcond=None)[0]
    w = np.clip(w, 0.0, None)
    return w / w.sum()


def generate(config: SynthConfig) -> tuple[Scenario, np.ndarray]:
    """Build a scenario and its ground-truth OD tensor. Deterministic for a fixed config."""
    N, T = config.stations, config.intervals
    d = topology_distances(config.topology, N, config.spacing_km)
    logA = np.log(_attraction(config))
    P = choice_matrix(UtilityParams(np.array([config.truth_theta]), logA), [d])

    if isinstance(config.origins, str):
        w = stationary_distribution(P) if config.origins == "stationary" else np.full(N, 1.0 / N)
    else:
        w = np.asarray(config.origins, dtype=float)
        w = w / w.sum()
    prof = two_peak_profile(T) if config.temporal_profile is None else np.asarray(config.temporal_profile, float)
    prof = prof / prof.sum()

    if config.time_varying_attraction:
        phase = np.linspace(0.0, np.pi, N)
        t = np.arange(T)
        truth = np.empty((N, N, T))
        for k in range(T):
            wobble = config.time_varying_attraction * np.sin(2 * np.pi * t[k] / T + phase)
            Pk = choice_matrix(UtilityParams(np.array([config.truth_theta]), logA + wobble), [d])
            truth[:, :, k] = config.total_trips * w[:, None] * prof[k] * Pk
    else:
        truth = config.total_trips * w[:, None, None] * prof[None, None, :] * P[:, :, None]

    if config.stochastic:
        rng = np.random.default_rng(config.seed)
        truth = rng.poisson(truth).astype(float)
    idx = np.arange(N)
    truth[idx, idx, :] = 0.0

    entries = truth.sum(axis=1)
    width = len(str(N - 1))
    ids = tuple(f"S{k:0{width}d}" for k in range(N))
    minutes = max(1, round(24 * 60 / T))
    scenario = Scenario(StationSet(ids), TimeGrid(T, minutes), entries, d)
    return scenario, truth


def preset(name: str, stations: int = 8, intervals: int = 96, **overrides) -> SynthConfig:
    """Named configurations: ``two-peak-line`` and ``two-peak-star``."""
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}")
    topology = name.rsplit("-", 1)[1]
    return SynthConfig(stations=stations, intervals=intervals, topology=topology, **overrides)
