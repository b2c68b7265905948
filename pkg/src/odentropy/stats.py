"""Travel statistics over OD tensors and variant comparison tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import Source, _opened, check_distances, check_od
from .errors import ValidationError


@dataclass(frozen=True)
class TravelStats:
    total_person_km: float
    average_distance: float
    total_trips: float
    daily_exits: np.ndarray  # (N,) trips arriving at each station over the day
    exit_profile: np.ndarray  # (N, T)


def compute_stats(od, distances) -> TravelStats:
    n = check_od(od)
    d = check_distances(distances)
    if d.shape[0] != n.shape[0]:
        raise ValidationError(f"distance matrix is {d.shape[0]}x{d.shape[0]} but OD tensor has {n.shape[0]} stations")
    profile = n.sum(axis=0)
    trips = float(n.sum())
    pkm = float(np.einsum("ijt,ij->", n, d))
    avg = pkm / trips if trips > 0 else 0.0
    return TravelStats(pkm, avg, trips, profile.sum(axis=1), profile)


def exit_profile_series(od, station: int) -> np.ndarray:
    """Exits at ``station`` in every interval, ``sum_i n[i, station, t]``."""
    n = check_od(od)
    if not 0 <= station < n.shape[0]:
        raise ValidationError(f"station index {station} out of range")
    return n[:, station, :].sum(axis=0)


def accuracy(estimate: float, reference: float) -> float:
    """Percentage agreement ``100 * (1 - |est - ref| / ref)``."""
    if reference == 0:
        raise ValidationError("reference value must be non-zero")
    return 100.0 * (1.0 - abs(estimate - reference) / abs(reference))


@dataclass(frozen=True)
class StatsRow:
    """The three headline numbers compared across variants."""

    total_person_km: float
    average_distance: float
    station_exits: float


COLUMNS = ("total_person_km", "average_distance", "station_exits")
LABELS = ("Total person-km", "Average travel distance (km)", "Total daily exits")


@dataclass
class ComparisonReport:
    rows: dict[str, StatsRow]
    reference: StatsRow | None = None
    reference_name: str = "reference"
    station: str = ""

    def accuracies(self) -> dict[str, dict[str, float]]:
        if self.reference is None:
            return {}
        out = {}
        for name, row in self.rows.items():
            out[name] = {c: accuracy(getattr(row, c), getattr(self.reference, c)) for c in COLUMNS}
        return out

    def text(self, person_km_scale: float = 1.0) -> str:
        exits_label = f"{LABELS[2]} at {self.station}" if self.station else LABELS[2]
        pk_label = LABELS[0] if person_km_scale == 1 else f"{LABELS[0]} (in {person_km_scale:g})"
        header = ["Variant", pk_label, LABELS[1], exits_label]
        body = []
        acc = self.accuracies()
        for name, row in self._all_rows():
            cells = [name, f"{row.total_person_km / person_km_scale:,.0f}", f"{row.average_distance:.1f}",
                     f"{row.station_exits:,.0f}"]
            if name in acc:
                cells[1:] = [f"{c} ({acc[name][k]:.0f}%)" for c, k in zip(cells[1:], COLUMNS)]
            body.append(cells)
        widths = [max(len(r[k]) for r in [header] + body) for k in range(4)]
        fmt = lambda r: "  ".join(c.ljust(w) if k == 0 else c.rjust(w) for k, (c, w) in enumerate(zip(r, widths)))
        return "\n".join([fmt(header)] + [fmt(r) for r in body])

    def _all_rows(self):
        yield from self.rows.items()
        if self.reference is not None:
            yield self.reference_name, self.reference

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["variant", *COLUMNS]
        if self.reference is not None:
            head += [f"accuracy_{c}" for c in COLUMNS]
        w.writerow(head)
        acc = self.accuracies()
        for name, row in self._all_rows():
            vals = [name] + [repr(float(getattr(row, c))) for c in COLUMNS]
            if self.reference is not None:
                vals += [f"{acc[name][c]:.4f}" if name in acc else "" for c in COLUMNS]
            w.writerow(vals)
        return buf.getvalue()


def compare_stats(rows: Mapping[str, StatsRow], reference: StatsRow | None = None,
                  reference_name: str = "reference", station: str = "") -> ComparisonReport:
    return ComparisonReport(dict(rows), reference, reference_name, station)


def compare_report(variants: Mapping[str, np.ndarray], distances, station: int,
                   reference: StatsRow | None = None, station_name: str = "",
                   reference_name: str = "reference") -> ComparisonReport:
    """Headline statistics per variant, with optional accuracy against reference values."""
    shapes = {np.shape(v) for v in variants.values()}
    if len(shapes) > 1:
        raise ValidationError(f"variants have different shapes: {sorted(shapes)}")
    rows = {}
    for name, od in variants.items():
        st = compute_stats(od, distances)
        rows[name] = StatsRow(st.total_person_km, st.average_distance, float(st.daily_exits[station]))
    return compare_stats(rows, reference, reference_name, station_name)


def write_stats_csv(dest: Source, stats: Mapping[str, TravelStats], station_ids: Sequence[str],
                    exit_stations: Sequence[int]) -> None:
    with _opened(dest, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "total_person_km", "average_distance_km", "total_trips",
                    *[f"exits_{station_ids[k]}" for k in exit_stations]])
        for name, st in stats.items():
            w.writerow([name, repr(st.total_person_km), repr(st.average_distance), repr(st.total_trips),
                        *[repr(float(st.daily_exits[k])) for k in exit_stations]])


def write_profile_csv(dest: Source, variants: Mapping[str, np.ndarray], entries, station: int) -> None:
    """Per-interval exits at one station for each variant, plus that station's entries."""
    series = {name: exit_profile_series(od, station) for name, od in variants.items()}
    ent = np.asarray(entries, dtype=float)[station]
    with _opened(dest, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["interval", *series, "entries"])
        for t in range(ent.shape[0]):
            w.writerow([t, *[repr(float(s[t])) for s in series.values()], repr(float(ent[t]))])
