"""Command-line interface.

Exit codes: 0 success, 2 input or validation error, 3 non-convergence or
infeasible constraints.
"""

from __future__ import annotations

import csv
import sys
from pathlib import Path

import click
import numpy as np

from . import estimators, oracle, stats, synth
from .core import load_scenario, read_od, write_distances, write_entries, write_od
from .errors import NumericalError, ODError, ValidationError

EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _fail(message: str, code: int):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _run(fn):
    try:
        return fn()
    except NumericalError as e:
        _fail(str(e), EXIT_NUMERICAL)
    except (ODError, OSError) as e:
        _fail(str(e), EXIT_INPUT)


def _split_exclude(values) -> list[str]:
    out = []
    for v in values:
        out.extend(s for s in (x.strip() for x in v.split(",")) if s)
    return out


def _scenario(entries, distances, symmetric, exclude, intervals=None):
    return load_scenario(entries, distances, symmetric=symmetric, exclude=_split_exclude(exclude),
                         intervals=intervals)


def _named_paths(values) -> dict[str, Path]:
    out = {}
    for v in values:
        name, sep, path = v.partition("=")
        if not sep:
            name, path = Path(v).stem, v
        if name in out:
            raise click.UsageError(f"duplicate variant name {name!r}")
        out[name] = Path(path)
    return out


def _read_constants(path, scenario) -> np.ndarray:
    K = np.zeros(scenario.n_stations)
    seen = set()
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["station", "constant"]:
            raise ValidationError(f"{path}: expected header 'station,constant'")
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise ValidationError(f"{path}: line {reader.line_num}: expected 2 fields")
            k = scenario.stations.index(row[0].strip())
            if k in seen:
                raise ValidationError(f"{path}: line {reader.line_num}: duplicate station {row[0]!r}")
            seen.add(k)
            try:
                K[k] = float(row[1])
            except ValueError:
                raise ValidationError(f"{path}: line {reader.line_num}: bad constant {row[1]!r}") from None
    return K


common_entries = click.option("--entries", type=click.Path(exists=True, dir_okay=False), required=True,
                              help="entries.csv (station,interval,count).")
common_distances = click.option("--distances", type=click.Path(exists=True, dir_okay=False),
                                help="distances.csv (from,to,km).")
common_symmetric = click.option("--symmetric-distances", is_flag=True,
                                help="Fill a missing (j,i) distance from (i,j).")
common_exclude = click.option("--exclude", multiple=True, help="Station ids to drop (repeatable or comma-separated).")
common_out = click.option("--out", type=click.Path(file_okay=False), default=".", show_default=True,
                          help="Output directory.")


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Dynamic OD estimation from entry-only smart-card counts."""


@main.command()
@common_entries
@common_distances
@common_symmetric
@click.option("--method", type=click.Choice(estimators.METHODS), default="sa", show_default=True)
@click.option("--epsilon", type=float, default=estimators.DEFAULT_EPSILON, show_default=True)
@click.option("--max-iter", type=int, default=estimators.DEFAULT_MAX_ITERATIONS, show_default=True)
@click.option("--person-km", type=float, help="Reported person-km; calibrates the ad method.")
@click.option("--theta", type=float, help="Distance coefficient for an uncalibrated ad run.")
@click.option("--constants", type=click.Path(exists=True, dir_okay=False),
              help="CSV station,constant of destination constants for an uncalibrated ad run.")
@click.option("--intervals", type=int, help="Override the number of intervals.")
@common_exclude
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker threads; estimators currently run single-threaded.")
@click.option("--raw-eq4", is_flag=True, help="Report sum(n log n - n) instead of its negation.")
@common_out
def estimate(entries, distances, symmetric_distances, method, epsilon, max_iter, person_km, theta, constants,
             intervals, exclude, threads, raw_eq4, out):
    """Estimate an OD tensor and write od.csv."""
    if threads < 1:
        raise click.UsageError("--threads must be >= 1")
    if method == "ad":
        if distances is None:
            raise click.UsageError("method ad needs --distances")
        if person_km is None and theta is None and constants is None:
            raise click.UsageError("method ad needs --person-km (calibrate) or --theta/--constants (evaluate)")
        if person_km is not None and (theta is not None or constants is not None):
            raise click.UsageError("--person-km cannot be combined with --theta/--constants")

    def go():
        sc = _scenario(entries, distances, symmetric_distances, exclude, intervals)
        params = None
        if method == "ad" and person_km is None:
            K = _read_constants(constants, sc) if constants else np.zeros(sc.n_stations)
            params = estimators.UtilityParams(np.array([theta or 0.0]), K)
        od, cal = estimators.estimate(sc, method, epsilon=epsilon, max_iterations=max_iter, params=params,
                                      person_km_target=person_km)
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        write_od(outdir / "od.csv", sc.stations, od)
        click.echo(f"method {method}: wrote {outdir / 'od.csv'}")
        if cal is not None:
            _write_trace(outdir / "calibration_trace.csv", cal.trace)
            _write_constants(outdir / "constants.csv", sc, cal.params.dest_constants)
            click.echo(f"theta {cal.params.theta[0]:.10g} after {cal.iterations} iterations "
                       f"({cal.inner_sweeps} balancing sweeps)")
        cons = oracle.ConstraintSet(symmetry=method != "bm", person_km=person_km)
        rep = oracle.residuals(od, sc, cons)
        if raw_eq4:
            click.echo(f"entropy sum(n log n - n) {oracle.entropy(od, raw=True):.10g}")
        for line in rep.lines():
            if not (raw_eq4 and line.startswith("entropy")):
                click.echo(line)

    _run(go)


def _write_trace(path, trace):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "theta", "person_km_residual", "symmetry_residual"])
        for row in trace:
            w.writerow([row.iteration, repr(row.theta), repr(row.person_km_residual), repr(row.symmetry_residual)])


def _write_constants(path, sc, K):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station", "constant"])
        for s, k in zip(sc.stations.ids, K):
            w.writerow([s, repr(float(k))])


def _load_variants(sc, od_args):
    variants = _named_paths(od_args)
    if not variants:
        raise click.UsageError("give at least one --od NAME=PATH")
    return {name: read_od(p, sc.stations, sc.n_intervals) for name, p in variants.items()}


@main.command("stats")
@common_entries
@click.option("--distances", type=click.Path(exists=True, dir_okay=False), required=True)
@common_symmetric
@click.option("--od", "od_args", multiple=True, required=True, help="NAME=PATH of an od.csv (repeatable).")
@click.option("--station", "station_args", multiple=True,
              help="Station for exits columns (repeatable); the first also gets profile.csv.")
@common_exclude
@common_out
def stats_cmd(entries, distances, symmetric_distances, od_args, station_args, exclude, out):
    """Travel statistics (stats.csv) and exit profiles (profile.csv)."""

    def go():
        sc = _scenario(entries, distances, symmetric_distances, exclude)
        variants = _load_variants(sc, od_args)
        ks = [sc.stations.index(s) for s in station_args]
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        per = {name: stats.compute_stats(od, sc.distances) for name, od in variants.items()}
        stats.write_stats_csv(outdir / "stats.csv", per, sc.stations.ids, ks)
        for name, st in per.items():
            click.echo(f"{name}: person-km {st.total_person_km:.6g}, average {st.average_distance:.4g} km, "
                       f"trips {st.total_trips:.6g}")
        if ks:
            stats.write_profile_csv(outdir / "profile.csv", variants, sc.entries, ks[0])

    _run(go)


@main.command()
@common_entries
@click.option("--distances", type=click.Path(exists=True, dir_okay=False), required=True)
@common_symmetric
@click.option("--od", "od_args", multiple=True, required=True, help="NAME=PATH of an od.csv (repeatable).")
@click.option("--station", required=True, help="Station whose daily exits are compared.")
@click.option("--ref-person-km", type=float)
@click.option("--ref-avg-distance", type=float)
@click.option("--ref-exits", type=float)
@click.option("--ref-name", default="reference", show_default=True)
@click.option("--scale", type=float, default=1.0, show_default=True, help="Divide person-km by this in the table.")
@common_exclude
@common_out
def compare(entries, distances, symmetric_distances, od_args, station, ref_person_km, ref_avg_distance, ref_exits,
            ref_name, scale, exclude, out):
    """Side-by-side statistics with optional accuracy against reported values."""
    refs = (ref_person_km, ref_avg_distance, ref_exits)
    if any(r is not None for r in refs) and any(r is None for r in refs):
        raise click.UsageError("give all of --ref-person-km, --ref-avg-distance, --ref-exits or none")

    def go():
        sc = _scenario(entries, distances, symmetric_distances, exclude)
        variants = _load_variants(sc, od_args)
        reference = stats.StatsRow(*refs) if refs[0] is not None else None
        rep = stats.compare_report(variants, sc.distances, sc.stations.index(station), reference,
                                   station_name=station, reference_name=ref_name)
        click.echo(rep.text(person_km_scale=scale))
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "compare.csv").write_text(rep.to_csv(), encoding="utf-8")

    _run(go)


@main.command()
@common_entries
@click.option("--od", "od_path", type=click.Path(exists=True, dir_okay=False), required=True)
@common_distances
@common_symmetric
@click.option("--symmetry", is_flag=True, help="Also check daily symmetry.")
@click.option("--person-km", type=float, help="Also check the person-km total.")
@common_exclude
@click.option("--raw-eq4", is_flag=True, help="Report sum(n log n - n) instead of its negation.")
def check(entries, od_path, distances, symmetric_distances, symmetry, person_km, exclude, raw_eq4):
    """Print constraint residuals and entropy of an od.csv."""
    if person_km is not None and distances is None:
        raise click.UsageError("--person-km needs --distances")

    def go():
        sc = _scenario(entries, distances, symmetric_distances, exclude)
        od = read_od(od_path, sc.stations, sc.n_intervals)
        rep = oracle.residuals(od, sc, oracle.ConstraintSet(symmetry, person_km))
        for line in rep.lines():
            if raw_eq4 and line.startswith("entropy"):
                line = f"entropy sum(n log n - n) {oracle.entropy(od, raw=True):.10g}"
            click.echo(line)

    _run(go)


@main.command()
@click.option("--preset", type=click.Choice(synth.PRESETS), default="two-peak-line", show_default=True)
@click.option("--stations", type=int, default=8, show_default=True)
@click.option("--intervals", type=int, default=96, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--theta", type=float, default=-0.3, show_default=True, help="Ground-truth distance coefficient.")
@click.option("--spacing-km", type=float, default=4.0, show_default=True)
@click.option("--total-trips", type=float, default=10_000.0, show_default=True)
@click.option("--stochastic", is_flag=True, help="Poisson-round every OD cell (seeded).")
@click.option("--time-varying", type=float, default=0.0, show_default=True,
              help="Amplitude of time-varying destination attraction (outside the ad model).")
@common_out
def generate(preset, stations, intervals, seed, theta, spacing_km, total_trips, stochastic, time_varying, out):
    """Write a synthetic scenario: entries.csv, distances.csv, truth_od.csv."""

    def go():
        cfg = synth.preset(preset, stations=stations, intervals=intervals, seed=seed, truth_theta=theta,
                           spacing_km=spacing_km, total_trips=total_trips, stochastic=stochastic,
                           time_varying_attraction=time_varying)
        sc, truth = synth.generate(cfg)
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        write_entries(outdir / "entries.csv", sc.stations, sc.entries)
        write_distances(outdir / "distances.csv", sc.stations, sc.distances)
        write_od(outdir / "truth_od.csv", sc.stations, truth)
        click.echo(f"wrote scenario with {sc.n_stations} stations x {sc.n_intervals} intervals to {outdir}")
        click.echo(f"hub station {sc.stations.ids[synth.hub_index(cfg)]}")
        click.echo(f"truth person-km {estimators.person_km(truth, sc.distances)!r}")

    _run(go)


if __name__ == "__main__":  # pragma: no cover
    main()
