import numpy as np
import pytest
from click.testing import CliRunner

from odentropy import StationSet, read_od
from odentropy.cli import main

LINE3_ENTRIES = "station,interval,count\nA,0,10\nB,0,4\nC,0,2\n"
LINE3_DIST = "from,to,km\nA,B,5\nA,C,9\nB,C,4\n"
LINE4_ENTRIES = "station,interval,count\nA,0,5\nB,0,4\nC,0,3\nD,0,4\n"
LINE4_DIST = "from,to,km\nA,B,4\nA,C,8\nA,D,12\nB,C,4\nB,D,8\nC,D,4\n"


@pytest.fixture
def files(tmp_path):
    def make(entries, dist):
        (tmp_path / "entries.csv").write_text(entries)
        (tmp_path / "distances.csv").write_text(dist)
        return tmp_path
    return make


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


def test_estimate_bm_writes_uniform_split(files):
    p = files(LINE3_ENTRIES, LINE3_DIST)
    r = invoke("estimate", "--entries", p / "entries.csv", "--method", "bm", "--out", p / "bm")
    assert r.exit_code == 0, r.output
    n = read_od(p / "bm" / "od.csv", StationSet(("A", "B", "C")), 1)
    np.testing.assert_allclose(n[:, :, 0], [[0, 5, 5], [2, 0, 2], [1, 1, 0]])
    assert "entry rows residual" in r.output


def test_estimate_ad_calibrates_and_writes_trace(files):
    p = files(LINE4_ENTRIES, LINE4_DIST)
    r = invoke("estimate", "--entries", p / "entries.csv", "--distances", p / "distances.csv",
               "--symmetric-distances", "--method", "ad", "--person-km", "100", "--out", p / "ad")
    assert r.exit_code == 0, r.output
    trace = (p / "ad" / "calibration_trace.csv").read_text().splitlines()
    assert trace[0] == "iteration,theta,person_km_residual,symmetry_residual" and len(trace) > 2
    assert (p / "ad" / "constants.csv").exists()
    pk = float(next(l for l in r.output.splitlines() if l.startswith("person-km residual")).split()[-1])
    assert pk <= 1e-5


def test_estimate_ad_with_fixed_theta(files):
    p = files(LINE4_ENTRIES, LINE4_DIST)
    r = invoke("estimate", "--entries", p / "entries.csv", "--distances", p / "distances.csv",
               "--symmetric-distances", "--method", "ad", "--theta", "-0.1", "--out", p / "ad")
    assert r.exit_code == 0, r.output
    assert not (p / "ad" / "calibration_trace.csv").exists()


@pytest.mark.parametrize("extra", [[], ["--theta", "0", "--person-km", "80"]])
def test_estimate_ad_without_parameters_is_usage_error(files, extra):
    p = files(LINE4_ENTRIES, LINE4_DIST)
    r = invoke("estimate", "--entries", p / "entries.csv", "--distances", p / "distances.csv",
               "--symmetric-distances", "--method", "ad", *extra, "--out", p)
    assert r.exit_code == 2


def test_infeasible_balancing_exits_3(files):
    p = files(LINE3_ENTRIES, LINE3_DIST)
    r = invoke("estimate", "--entries", p / "entries.csv", "--method", "sa", "--out", p)
    assert r.exit_code == 3
    assert "error:" in r.output


def test_unreachable_person_km_exits_3(files):
    p = files(LINE4_ENTRIES, LINE4_DIST)
    r = invoke("estimate", "--entries", p / "entries.csv", "--distances", p / "distances.csv",
               "--symmetric-distances", "--method", "ad", "--person-km", "1e6", "--out", p)
    assert r.exit_code == 3


def test_bad_input_exits_2(files):
    p = files("station,interval,count\nA,0,-3\nB,0,1\n", LINE3_DIST)
    r = invoke("estimate", "--entries", p / "entries.csv", "--method", "bm", "--out", p)
    assert r.exit_code == 2
    assert "non-negative" in r.output


def test_compare_reproduces_quoted_accuracies(tmp_path):
    # one flow of 66552 trips over 19.7 km: average 19.7 km and 66552 exits at B
    (tmp_path / "e.csv").write_text("station,interval,count\nA,0,66552\nB,0,0\n")
    (tmp_path / "d.csv").write_text("from,to,km\nA,B,19.7\nB,A,19.7\n")
    (tmp_path / "od.csv").write_text("origin,destination,interval,trips\nA,B,0,66552\n")
    r = invoke("compare", "--entries", tmp_path / "e.csv", "--distances", tmp_path / "d.csv",
               "--od", f"AD={tmp_path / 'od.csv'}", "--station", "B", "--ref-person-km", "5776e3",
               "--ref-avg-distance", "18.7", "--ref-exits", "64700", "--ref-name", "survey", "--scale", "1000",
               "--out", tmp_path)
    assert r.exit_code == 0, r.output
    ad = next(l for l in r.output.splitlines() if l.startswith("AD"))
    assert "19.7 (95%)" in ad and "66,552 (97%)" in ad
    assert "accuracy_average_distance" in (tmp_path / "compare.csv").read_text()


def test_stats_writes_csvs(files):
    p = files(LINE3_ENTRIES, LINE3_DIST)
    invoke("estimate", "--entries", p / "entries.csv", "--method", "bm", "--out", p / "bm")
    r = invoke("stats", "--entries", p / "entries.csv", "--distances", p / "distances.csv",
               "--symmetric-distances", "--od", f"bm={p / 'bm' / 'od.csv'}", "--station", "B", "--out", p / "s")
    assert r.exit_code == 0, r.output
    assert (p / "s" / "stats.csv").read_text().startswith(
        "variant,total_person_km,average_distance_km,total_trips,exits_B\nbm,")
    assert (p / "s" / "profile.csv").read_text().splitlines()[0] == "interval,bm,entries"


def test_check_detects_corrupted_row(files):
    p = files(LINE3_ENTRIES, LINE3_DIST)
    invoke("estimate", "--entries", p / "entries.csv", "--method", "bm", "--out", p)
    good = invoke("check", "--entries", p / "entries.csv", "--od", p / "od.csv")
    assert "entry rows residual  0.000e+00" in good.output
    od = (p / "od.csv").read_text().replace("A,B,0,5.000000", "A,B,0,6.000000")
    (p / "od.csv").write_text(od)
    bad = invoke("check", "--entries", p / "entries.csv", "--od", p / "od.csv")
    assert bad.exit_code == 0
    assert "entry rows residual  1.000e-01" in bad.output


def test_check_raw_flag(files):
    p = files(LINE3_ENTRIES, LINE3_DIST)
    invoke("estimate", "--entries", p / "entries.csv", "--method", "bm", "--out", p)
    r = invoke("check", "--entries", p / "entries.csv", "--od", p / "od.csv", "--raw-eq4")
    assert "sum(n log n - n)" in r.output


def test_generate_then_estimate_round_trip(tmp_path):
    r = invoke("generate", "--preset", "two-peak-line", "--stations", "8", "--intervals", "96",
               "--out", tmp_path / "g")
    assert r.exit_code == 0, r.output
    g = tmp_path / "g"
    pk = float(next(l for l in r.output.splitlines() if l.startswith("truth person-km")).split()[-1])
    r = invoke("estimate", "--entries", g / "entries.csv", "--distances", g / "distances.csv", "--method", "ad",
               "--person-km", pk, "--out", tmp_path / "est")
    assert r.exit_code == 0, r.output
    ids = StationSet(tuple(f"S{k}" for k in range(8)))
    est = read_od(tmp_path / "est" / "od.csv", ids, 96)
    truth = read_od(g / "truth_od.csv", ids, 96)
    assert np.abs(est - truth).max() < 1e-3 * truth.max() + 1e-6


def test_runs_are_byte_identical(tmp_path):
    for k in (1, 2):
        invoke("generate", "--stations", "6", "--intervals", "24", "--seed", "5", "--stochastic",
               "--out", tmp_path / f"g{k}")
        g = tmp_path / f"g{k}"
        invoke("estimate", "--entries", g / "entries.csv", "--distances", g / "distances.csv", "--method", "ad",
               "--person-km", "45000", "--out", tmp_path / f"e{k}")
    for name in ("g{}/entries.csv", "g{}/distances.csv", "g{}/truth_od.csv", "e{}/od.csv",
                 "e{}/calibration_trace.csv", "e{}/constants.csv"):
        a, b = (tmp_path / name.format(1)).read_bytes(), (tmp_path / name.format(2)).read_bytes()
        assert a == b, name


def test_exclude_flag(files):
    p = files(LINE3_ENTRIES, LINE3_DIST)
    r = invoke("estimate", "--entries", p / "entries.csv", "--method", "bm", "--exclude", "C", "--out", p)
    assert r.exit_code == 0
    assert ",C," not in (p / "od.csv").read_text()
