"""Scenario data model, CSV ingestion and serialisation.

Array conventions used across the package:

* entries ``O`` has shape ``(N, T)``: passengers entering station ``i`` in
  interval ``t``.
* distances ``d`` has shape ``(N, N)`` in kilometres with a zero diagonal.
* an OD tensor ``n`` has shape ``(N, N, T)`` indexed ``[origin, destination,
  interval]`` with ``n[i, i, :] == 0``.

Station order is always the first-appearance order of the entries file.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence, Union

import numpy as np

from .errors import (
    DuplicateKeyError,
    MissingPairError,
    ParseError,
    UnknownStationError,
    ValidationError,
)

Source = Union[str, os.PathLike, IO[str], IO[bytes]]

ENTRIES_HEADER = ("station", "interval", "count")
DISTANCES_HEADER = ("from", "to", "km")
OD_HEADER = ("origin", "destination", "interval", "trips")


@dataclass(frozen=True)
class StationSet:
    ids: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = tuple(self.ids)
        object.__setattr__(self, "ids", ids)
        if any((not isinstance(s, str)) or s == "" for s in ids):
            raise ValidationError("station ids must be non-empty strings")
        if len(set(ids)) != len(ids):
            raise ValidationError("station ids must be unique")
        if len(ids) < 2:
            raise ValidationError("at least two stations are required")
        object.__setattr__(self, "_index", {s: k for k, s in enumerate(ids)})

    @property
    def count(self) -> int:
        return len(self.ids)

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    def index(self, station: str) -> int:
        try:
            return self._index[station]
        except KeyError:
            raise UnknownStationError(f"unknown station {station!r}") from None


@dataclass(frozen=True)
class TimeGrid:
    interval_count: int
    interval_minutes: int = 15

    def __post_init__(self):
        if int(self.interval_count) != self.interval_count or self.interval_count < 1:
            raise ValidationError("interval_count must be a positive integer")
        if int(self.interval_minutes) != self.interval_minutes or self.interval_minutes < 1:
            raise ValidationError("interval_minutes must be a positive integer")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def check_entries(entries, n_stations: int | None = None, n_intervals: int | None = None) -> np.ndarray:
    """Validate an entry matrix and return it as a float array."""
    O = np.asarray(entries, dtype=float)
    if O.ndim != 2:
        raise ValidationError(f"entries must be 2-D (stations x intervals), got shape {O.shape}")
    if n_stations is not None and O.shape[0] != n_stations:
        raise ValidationError(f"entries have {O.shape[0]} rows, expected {n_stations}")
    if n_intervals is not None and O.shape[1] != n_intervals:
        raise ValidationError(f"entries have {O.shape[1]} intervals, expected {n_intervals}")
    if not np.all(np.isfinite(O)):
        raise ValidationError("entries must be finite")
    if np.any(O < 0):
        raise ValidationError("entries must be non-negative")
    return O


def check_distances(distances, n_stations: int | None = None) -> np.ndarray:
    d = np.asarray(distances, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValidationError(f"distance matrix must be square, got shape {d.shape}")
    if n_stations is not None and d.shape[0] != n_stations:
        raise ValidationError(f"distance matrix is {d.shape[0]}x{d.shape[0]}, expected {n_stations}")
    if not np.all(np.isfinite(d)):
        raise ValidationError("distances must be finite")
    if np.any(d < 0):
        raise ValidationError("distances must be non-negative")
    if np.any(np.diag(d) != 0):
        raise ValidationError("distance matrix diagonal must be zero")
    return d


def check_od(od, n_stations: int | None = None, n_intervals: int | None = None) -> np.ndarray:
    n = np.asarray(od, dtype=float)
    if n.ndim != 3 or n.shape[0] != n.shape[1]:
        raise ValidationError(f"OD tensor must have shape (N, N, T), got {n.shape}")
    if n_stations is not None and n.shape[0] != n_stations:
        raise ValidationError(f"OD tensor has {n.shape[0]} stations, expected {n_stations}")
    if n_intervals is not None and n.shape[2] != n_intervals:
        raise ValidationError(f"OD tensor has {n.shape[2]} intervals, expected {n_intervals}")
    if not np.all(np.isfinite(n)):
        raise ValidationError("OD tensor must be finite")
    if np.any(n < 0):
        raise ValidationError("OD tensor must be non-negative")
    idx = np.arange(n.shape[0])
    if np.any(n[idx, idx, :] != 0):
        raise ValidationError("OD tensor must have a zero diagonal (no i->i trips)")
    return n


@dataclass(frozen=True)
class Scenario:
    """Validated bundle of stations, time grid, entry counts and optional distances."""

    stations: StationSet
    grid: TimeGrid
    entries: np.ndarray
    distances: np.ndarray | None = None

    def __post_init__(self):
        O = check_entries(self.entries, self.stations.count, self.grid.interval_count)
        object.__setattr__(self, "entries", _frozen(O))
        if self.distances is not None:
            d = check_distances(self.distances, self.stations.count)
            object.__setattr__(self, "distances", _frozen(d))
        if not self.total > 0:
            raise ValidationError("total entries must be positive")

    @classmethod
    def from_arrays(cls, entries, distances=None, station_ids: Sequence[str] | None = None,
                    interval_minutes: int = 15) -> "Scenario":
        O = check_entries(entries)
        if station_ids is None:
            station_ids = [f"S{k}" for k in range(O.shape[0])]
        return cls(StationSet(tuple(station_ids)), TimeGrid(O.shape[1], interval_minutes), O, distances)

    @property
    def n_stations(self) -> int:
        return self.stations.count

    @property
    def n_intervals(self) -> int:
        return self.grid.interval_count

    @property
    def daily(self) -> np.ndarray:
        return daily_totals(self.entries)

    @property
    def total(self) -> float:
        return float(self.daily.sum())

    def require_distances(self) -> np.ndarray:
        if self.distances is None:
            raise ValidationError("this operation needs a distance matrix")
        return self.distances

    def scaled(self, factor: float) -> "Scenario":
        return Scenario(self.stations, self.grid, self.entries * factor, self.distances)


def daily_totals(entries) -> np.ndarray:
    """Per-station totals over the day, ``T_j = sum_t O[j, t]``."""
    return np.asarray(entries, dtype=float).sum(axis=1)


def exclude_stations(scenario: Scenario, excluded: Iterable[str]) -> Scenario:
    """Drop stations (entries rows, distance rows and columns) from a scenario."""
    excluded = list(excluded)
    drop = {scenario.stations.index(s) for s in excluded}
    keep = [k for k in range(scenario.n_stations) if k not in drop]
    ids = tuple(scenario.stations.ids[k] for k in keep)
    d = None
    if scenario.distances is not None:
        d = scenario.distances[np.ix_(keep, keep)]
    return Scenario(StationSet(ids), scenario.grid, scenario.entries[keep], d)


# --------------------------------------------------------------------------- io


class _opened:
    """Context manager yielding a text stream for a path or an open stream."""

    def __init__(self, source: Source, mode: str = "r"):
        self.source = source
        self.mode = mode
        self._file = None
        self._wrapper = None

    def __enter__(self):
        src = self.source
        if isinstance(src, (str, os.PathLike)):
            enc = "utf-8-sig" if self.mode == "r" else "utf-8"
            self._file = open(src, self.mode, encoding=enc, newline="")
            return self._file
        if isinstance(src, io.TextIOBase):
            return src
        enc = "utf-8-sig" if self.mode == "r" else "utf-8"
        self._wrapper = io.TextIOWrapper(src, encoding=enc, newline="")
        return self._wrapper

    def __exit__(self, *exc):
        if self._file is not None:
            self._file.close()
        if self._wrapper is not None:
            self._wrapper.flush()
            self._wrapper.detach()
        return False


def _rows(stream, header: tuple[str, ...]):
    reader = csv.reader(stream)
    got = None
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        got = tuple(c.strip() for c in row)
        break
    if got != header:
        raise ParseError(f"expected header {','.join(header)!r}, got {got!r}", line=reader.line_num or 1)
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=reader.line_num)
        yield reader.line_num, [c.strip() for c in row]


def _parse_nonneg(text: str, what: str, line: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"cannot parse {what} {text!r}", line=line) from None
    if not math.isfinite(v):
        raise ParseError(f"{what} must be finite, got {text!r}", line=line)
    if v < 0:
        raise ValidationError(f"line {line}: {what} must be non-negative, got {text}")
    return v


def _parse_interval(text: str, line: int) -> int:
    try:
        t = int(text)
    except ValueError:
        raise ParseError(f"cannot parse interval {text!r}", line=line) from None
    if t < 0:
        raise ParseError(f"interval must be >= 0, got {t}", line=line)
    return t


def load_entries(source: Source, stations: Sequence[str] | None = None, intervals: int | None = None,
                 interval_minutes: int = 15) -> tuple[StationSet, TimeGrid, np.ndarray]:
    """Read an ``entries.csv`` (``station,interval,count``).

    Parameters
    ----------
    source : path or stream
        Text or binary stream, or a filesystem path.
    stations : sequence of str, optional
        Pre-declared station ids. They come first in the ordering; stations
        first seen in the file are appended after them.
    intervals : int, optional
        Override the number of intervals; by default ``1 + max(interval)``.

    Returns
    -------
    stations, grid, entries
        Absent ``(station, interval)`` pairs are zero.
    """
    order: dict[str, int] = {}
    for s in stations or ():
        order.setdefault(s, len(order))
    cells: dict[tuple[int, int], float] = {}
    max_t = -1
    with _opened(source) as fh:
        for line, (station, interval, count) in _rows(fh, ENTRIES_HEADER):
            if station == "":
                raise ParseError("empty station id", line=line)
            t = _parse_interval(interval, line)
            v = _parse_nonneg(count, "count", line)
            i = order.setdefault(station, len(order))
            if (i, t) in cells:
                raise DuplicateKeyError(f"duplicate entry for ({station}, {t})", line=line)
            cells[(i, t)] = v
            max_t = max(max_t, t)
    if intervals is None:
        if max_t < 0:
            raise ValidationError("entries file has no data rows")
        intervals = max_t + 1
    elif max_t >= intervals:
        raise ValidationError(f"interval index {max_t} outside 0..{intervals - 1}")
    O = np.zeros((len(order), intervals))
    for (i, t), v in cells.items():
        O[i, t] = v
    return StationSet(tuple(order)), TimeGrid(intervals, interval_minutes), O


def load_distances(source: Source, stations: StationSet, symmetric: bool = False) -> np.ndarray:
    """Read a ``distances.csv`` (``from,to,km``) into an ``(N, N)`` matrix.

    Every ordered off-diagonal pair must be present unless ``symmetric`` is
    set, in which case a missing ``(j, i)`` is copied from ``(i, j)``.
    Diagonal rows are accepted and ignored.
    """
    N = stations.count
    d = np.full((N, N), np.nan)
    with _opened(source) as fh:
        for line, (a, b, km) in _rows(fh, DISTANCES_HEADER):
            i, j = stations.index(a), stations.index(b)
            v = _parse_nonneg(km, "distance", line)
            if not np.isnan(d[i, j]):
                raise DuplicateKeyError(f"duplicate distance for ({a}, {b})", line=line)
            d[i, j] = v
    if symmetric:
        d = np.where(np.isnan(d), d.T, d)
    np.fill_diagonal(d, 0.0)
    missing = np.argwhere(np.isnan(d))
    if len(missing):
        i, j = missing[0]
        raise MissingPairError(
            f"{len(missing)} station pair(s) without distance, e.g. ({stations.ids[i]}, {stations.ids[j]})"
        )
    return check_distances(d, N)


def load_scenario(entries: Source, distances: Source | None = None, symmetric: bool = False,
                  exclude: Iterable[str] = (), intervals: int | None = None,
                  interval_minutes: int = 15) -> Scenario:
    """Load entries (and optionally distances) into a validated scenario."""
    stations, grid, O = load_entries(entries, intervals=intervals, interval_minutes=interval_minutes)
    d = load_distances(distances, stations, symmetric) if distances is not None else None
    scenario = Scenario(stations, grid, O, d)
    exclude = list(exclude)
    if exclude:
        scenario = exclude_stations(scenario, exclude)
    return scenario


def write_entries(dest: Source, stations: StationSet, entries) -> None:
    """Write every ``(station, interval)`` cell, zeros included, so that a reload is lossless."""
    O = check_entries(entries, stations.count)
    with _opened(dest, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ENTRIES_HEADER)
        for i, s in enumerate(stations.ids):
            for t in range(O.shape[1]):
                w.writerow((s, t, repr(float(O[i, t]))))


def write_distances(dest: Source, stations: StationSet, distances) -> None:
    d = check_distances(distances, stations.count)
    with _opened(dest, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DISTANCES_HEADER)
        for i, a in enumerate(stations.ids):
            for j, b in enumerate(stations.ids):
                if i != j:
                    w.writerow((a, b, repr(float(d[i, j]))))


def write_od(dest: Source, stations: StationSet, od) -> None:
    """Write an OD tensor as ``origin,destination,interval,trips`` with 6 decimals; zero cells are omitted."""
    n = check_od(od, stations.count)
    ids = stations.ids
    with _opened(dest, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OD_HEADER)
        for i, j, t in zip(*np.nonzero(n)):
            w.writerow((ids[i], ids[j], int(t), f"{n[i, j, t]:.6f}"))


def read_od(source: Source, stations: StationSet, intervals: int) -> np.ndarray:
    n = np.zeros((stations.count, stations.count, intervals))
    seen = set()
    with _opened(source) as fh:
        for line, (a, b, interval, trips) in _rows(fh, OD_HEADER):
            i, j = stations.index(a), stations.index(b)
            t = _parse_interval(interval, line)
            if t >= intervals:
                raise ParseError(f"interval {t} outside 0..{intervals - 1}", line=line)
            if (i, j, t) in seen:
                raise DuplicateKeyError(f"duplicate OD cell ({a}, {b}, {t})", line=line)
            seen.add((i, j, t))
            n[i, j, t] = _parse_nonneg(trips, "trips", line)
    return check_od(n, stations.count, intervals)
