import math

import numpy as np
import pytest

from odentropy import (
    CalibrationTarget,
    ConstraintSet,
    ConvergenceError,
    InfeasibleError,
    ValidationError,
    calibrate_ad,
    entropy,
    estimate_bm,
    estimate_sa_balanced,
    estimate_sa_closed,
    person_km,
    reference_solve,
    residuals,
)
from odentropy.oracle import SYMMETRIC, build_dual, initial_multipliers
from _instances import equal_totals_scenario, random_scenario


def test_entropy_zero_tensor():
    assert entropy(np.zeros((3, 3, 2))) == 0.0


def test_entropy_single_cells():
    n = np.zeros((2, 2, 1))
    n[0, 1, 0] = 1.0
    assert entropy(n) == 1.0
    n[0, 1, 0] = math.e
    assert entropy(n) == pytest.approx(0.0, abs=1e-15)
    assert entropy(n, raw=True) == pytest.approx(0.0, abs=1e-15)
    n[0, 1, 0] = 2.0
    assert entropy(n, raw=True) == pytest.approx(2 * math.log(2) - 2)
    assert entropy(n) == -entropy(n, raw=True)


def test_residuals_bm_exact(rng):
    sc = random_scenario(rng, 5, 3)
    assert residuals(estimate_bm(sc), sc).entry_rows <= 1e-15


def test_residuals_sa_closed_shortfall(line3):
    rep = residuals(estimate_sa_closed(line3), line3)
    assert rep.entry_rows == pytest.approx(10 / 16, abs=1e-15)


def test_residuals_calibrated_ad(rng):
    sc = random_scenario(rng, 4, 3)
    dbar = 1.02 * person_km(estimate_sa_balanced(sc), sc.distances)
    res = calibrate_ad(sc, CalibrationTarget(dbar))
    rep = residuals(res.od, sc, ConstraintSet(True, dbar))
    assert max(rep.entry_rows, rep.symmetry, rep.person_km) <= 1e-5


def test_residuals_need_distances_for_person_km():
    from odentropy import Scenario

    sc = Scenario.from_arrays([[1.0], [1.0], [1.0]])
    with pytest.raises(ValidationError):
        residuals(estimate_bm(sc), sc, ConstraintSet(person_km=3.0))


def test_zero_rows_checked_absolutely():
    from odentropy import Scenario

    sc = Scenario.from_arrays([[2.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    n = estimate_bm(sc)
    n[0, 1, 1] = 0.25  # trips out of an empty (station, interval)
    assert residuals(n, sc).entry_rows == 0.25


def test_reference_entry_rows_is_uniform(rng):
    sc = random_scenario(rng, 4, 2, with_distances=False)
    ref = reference_solve(sc, ConstraintSet())
    off = ~np.eye(4, dtype=bool)
    np.testing.assert_allclose(ref, sc.entries[:, None, :] / 3 * off[:, :, None], rtol=1e-9)


def test_reference_symmetric_equal_totals_is_uniform(rng):
    sc = equal_totals_scenario(rng, 4, 3)
    np.testing.assert_allclose(reference_solve(sc, SYMMETRIC), estimate_bm(sc), atol=1e-8)


def test_reference_person_km_hits_target(rng):
    sc = random_scenario(rng, 4, 2)
    # any feasible tensor: scale a random positive one into the rows, then read off its totals
    n = rng.uniform(0.5, 1.5, (4, 4, 2))
    n[np.arange(4), np.arange(4), :] = 0
    n *= sc.entries[:, None, :] / n.sum(axis=1, keepdims=True)
    dbar = person_km(n, sc.distances)
    ref = reference_solve(sc, ConstraintSet(person_km=dbar), tol=1e-10)
    assert person_km(ref, sc.distances) == pytest.approx(dbar, rel=1e-10)


def test_reference_detects_infeasible_symmetry(line3):
    with pytest.raises(ConvergenceError):
        reference_solve(line3, SYMMETRIC, max_iterations=200)


def test_reference_structural_infeasibility():
    from odentropy import Scenario

    # under symmetry only stations with daily entries can receive trips,
    # so station 0 has nowhere to send its one trip
    sc = Scenario.from_arrays([[1.0], [0.0], [0.0]])
    with pytest.raises(InfeasibleError):
        build_dual(sc, SYMMETRIC)


@pytest.mark.parametrize("cons", [ConstraintSet(), SYMMETRIC, "pk"])
def test_dual_gradient_matches_finite_differences(rng, cons):
    sc = random_scenario(rng, 3, 2)
    if cons == "pk":
        cons = ConstraintSet(True, person_km(estimate_sa_balanced(sc), sc.distances))
    prob = build_dual(sc, cons)
    for _ in range(5):
        y = initial_multipliers(prob, sc, 1e-10) + rng.normal(scale=0.1, size=len(prob.c))
        g = prob.gradient(y)
        h = 1e-6
        fd = np.array([(prob.value(y + h * e) - prob.value(y - h * e)) / (2 * h) for e in np.eye(len(y))])
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-5 * np.abs(g).max())


def _nullspace(A):
    _, s, vt = np.linalg.svd(A)
    rank = int((s > 1e-10 * s.max()).sum())
    return vt[rank:].T


@pytest.mark.parametrize("which", ["rows", "sym", "pk"])
def test_optimality_certificate(rng, which):
    sc = random_scenario(rng, 4, 2)
    cons = {"rows": ConstraintSet(), "sym": SYMMETRIC,
            "pk": ConstraintSet(True, 0.97 * person_km(estimate_sa_balanced(sc), sc.distances))}[which]
    ref = reference_solve(sc, cons)
    prob = build_dual(sc, cons)
    i, j, t = prob.cells.T
    x = ref[i, j, t]
    Z = _nullspace(prob.A)
    assert Z.shape[1] > 0
    h0 = entropy(ref)
    for _ in range(30):
        delta = Z @ rng.normal(size=Z.shape[1])
        delta *= 0.05 * x.min() / np.abs(delta).max()
        moved = ref.copy()
        moved[i, j, t] = x + delta
        assert np.all(moved >= 0)
        assert entropy(moved) <= h0 + 1e-9


def test_reference_unique_from_different_starts(rng):
    sc = random_scenario(rng, 4, 3)
    cons = ConstraintSet(True, 1.03 * person_km(estimate_sa_balanced(sc), sc.distances))
    tol = 1e-10
    prob = build_dual(sc, cons)
    a = reference_solve(sc, cons, tol=tol)
    y0 = initial_multipliers(prob, sc, tol) + rng.normal(scale=0.5, size=len(prob.c))
    y0[-1] = 0.1
    b = reference_solve(sc, cons, tol=tol, y0=y0)
    np.testing.assert_allclose(a, b, rtol=10 * tol * 100, atol=10 * tol * np.abs(a).max())
