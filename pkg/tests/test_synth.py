import numpy as np
import pytest

from odentropy import CalibrationTarget, ValidationError, calibrate_ad, person_km, residuals
from odentropy.synth import (
    SynthConfig,
    generate,
    hub_index,
    preset,
    stationary_distribution,
    topology_distances,
    two_peak_profile,
)


def test_fully_symmetric_case():
    cfg = SynthConfig(stations=3, intervals=1, truth_theta=0.0, truth_attraction=(1.0, 1.0, 1.0),
                      temporal_profile=(1.0,), total_trips=30.0)
    sc, truth = generate(cfg)
    off = ~np.eye(3, dtype=bool)
    np.testing.assert_allclose(truth[off], 5.0, rtol=1e-12)
    np.testing.assert_allclose(sc.entries, [[10], [10], [10]], rtol=1e-12)


@pytest.mark.parametrize("cfg", [
    SynthConfig(),
    SynthConfig(topology="star", stations=6, intervals=12),
    SynthConfig(stations=5, intervals=8, origins="uniform", time_varying_attraction=0.5),
    SynthConfig(stations=4, intervals=10, stochastic=True, seed=3),
])
def test_truth_satisfies_entry_rows(cfg):
    sc, truth = generate(cfg)
    assert residuals(truth, sc).entry_rows == 0.0


def test_deterministic():
    for cfg in (SynthConfig(seed=4), SynthConfig(seed=4, stochastic=True)):
        (a, ta), (b, tb) = generate(cfg), generate(cfg)
        assert np.array_equal(a.entries, b.entries) and np.array_equal(ta, tb)
        assert np.array_equal(a.distances, b.distances) and a.stations == b.stations


def test_stochastic_seed_changes_counts():
    _, a = generate(SynthConfig(stochastic=True, seed=1, stations=4, intervals=8))
    _, b = generate(SynthConfig(stochastic=True, seed=2, stations=4, intervals=8))
    assert not np.array_equal(a, b)
    assert np.all(a == np.round(a))


def test_stationary_origins_give_daily_symmetry():
    sc, truth = generate(SynthConfig(stations=7, intervals=24))
    np.testing.assert_allclose(truth.sum(axis=(0, 2)), sc.daily, rtol=1e-10)


def test_line_recovery_n5():
    sc, truth = generate(SynthConfig(stations=5, intervals=12, truth_theta=-0.3))
    dbar = person_km(truth, sc.distances)
    res = calibrate_ad(sc, CalibrationTarget(dbar))
    assert abs(person_km(res.od, sc.distances) - dbar) / dbar <= 1e-5
    off = truth > 0
    assert np.mean(np.abs(res.od[off] - truth[off]) / truth[off]) <= 0.05
    assert res.params.theta[0] == pytest.approx(-0.3, abs=1e-3)


def test_out_of_family_gap():
    sc, truth = generate(SynthConfig(stations=6, intervals=24, origins="uniform", time_varying_attraction=0.8))
    dbar = person_km(truth, sc.distances)
    res = calibrate_ad(sc, CalibrationTarget(dbar))
    assert abs(person_km(res.od, sc.distances) - dbar) / dbar <= 1e-5
    off = truth > 0
    assert np.max(np.abs(res.od[off] - truth[off]) / truth[off]) > 1e-2


def test_topologies():
    np.testing.assert_array_equal(topology_distances("line", 3, 2.0), [[0, 2, 4], [2, 0, 2], [4, 2, 0]])
    star = topology_distances("star", 4, 1.0)
    assert star[0, 3] == 1.0 and star[1, 2] == 2.0 and np.all(np.diag(star) == 0)


def test_two_peak_profile_shape():
    p = two_peak_profile(96)
    assert p.sum() == pytest.approx(1.0)
    assert abs(int(np.argmax(p[:48])) - 32) <= 1  # 08:00
    assert abs(int(np.argmax(p[48:])) + 48 - 68) <= 1  # 17:00
    assert p[:48].max() > p[48:].max()


def test_stationary_distribution():
    P = np.array([[0.0, 1.0], [0.5, 0.5]])
    w = stationary_distribution(P)
    np.testing.assert_allclose(w @ P, w, atol=1e-12)


def test_hub_and_presets():
    assert hub_index(preset("two-peak-star")) == 0
    assert hub_index(preset("two-peak-line", stations=8)) == 4
    with pytest.raises(ValidationError):
        preset("nope")
    sc, _ = generate(preset("two-peak-line", stations=12, intervals=4))
    assert sc.stations.ids[0] == "S00" and sc.n_intervals == 4


@pytest.mark.parametrize("kw", [
    dict(stations=1), dict(intervals=0), dict(topology="ring"), dict(spacing_km=0), dict(total_trips=-1),
    dict(truth_attraction=(1.0, 0.0)), dict(stations=2, temporal_profile=(0.0,), intervals=1),
    dict(origins="random"), dict(stations=2, origins=(1.0, -1.0)), dict(truth_theta=float("nan")),
])
def test_degenerate_configs(kw):
    with pytest.raises(ValidationError):
        SynthConfig(**kw)
