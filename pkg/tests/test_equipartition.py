import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from equipart.equipartition import (
    DiscrepancyMap,
    EquipartitionError,
    SearchParams,
    collapse,
    cyclic_shift,
    discrepancy_map,
    equipartition,
    is_prime,
    prime_factor_count,
    smallest_prime_factor,
    solve_composite,
    solve_prime,
    weight_profile,
)
from equipart.measures import Measure
from equipart.verify import brute_force_hyperplane, verify_partition

from conftest import DISC, SQUARE, gaussian, mixture, uniform

FAST = SearchParams(restarts=8)


def test_factor_helpers():
    assert [smallest_prime_factor(k) for k in (2, 3, 4, 9, 15, 49, 97)] == [2, 3, 2, 3, 3, 7, 97]
    assert [prime_factor_count(k) for k in (2, 4, 6, 8, 9, 12)] == [1, 2, 2, 3, 2, 3]
    assert is_prime(5) and not is_prime(1) and not is_prime(9)


def test_collapse_merges_close_points_in_order():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [1e-12, 0.0], [2.0, 0.0]])
    c = collapse(x, 1e-9)
    assert c.t == 3
    assert c.index.tolist() == [0, 1, 0, 2]
    assert c.multiplicities.tolist() == [2, 1, 1]
    assert c.expand([5.0, 6.0, 7.0]).tolist() == [5.0, 6.0, 5.0, 7.0]
    assert cyclic_shift(x)[0].tolist() == [1.0, 0.0]


def test_profile_of_symmetric_pair_is_zero():
    m = uniform(DISC, n=40_000, seed=1)
    assert np.allclose(weight_profile([[-0.4, 0.0], [0.4, 0.0]], m), 0.0, atol=2e-2)


def test_profile_repeats_weight_of_merged_site():
    m = uniform(n=40_000, seed=2)
    y = weight_profile([[0.3, 0.5], [0.8, 0.5], [0.3, 0.5]], m)
    assert y[0] == y[2]
    assert abs(y.sum()) <= 1e-9


def test_profile_for_square_bisector():
    m = uniform(mass=2.0, n=40_000, seed=3)
    # equal multiplicities and the perpendicular bisector x_1 = 0.5 already halves the square
    assert np.allclose(weight_profile([[0.0, 0.0], [1.0, 0.0]], m), 0.0, atol=2e-2)


def test_identical_measures_give_zero_discrepancy():
    m = gaussian([0.4, 0.6], 0.2, seed=4)
    f = discrepancy_map([[0.2, 0.2], [0.7, 0.4], [0.5, 0.9]], [m, m])
    assert f.shape == (3,) and np.all(f == 0.0)


def test_single_measure_on_the_line_has_empty_discrepancy():
    m = uniform({"kind": "box", "lo": [0.0], "hi": [1.0]}, seed=5)
    assert discrepancy_map([[0.1], [0.9]], [m]).shape == (0,)


def test_mirror_symmetric_measures_vanish_on_the_mirror_line():
    a = gaussian([0.5, 0.3], 0.15, seed=6)
    b = Measure(a.samples * [1, -1] + [0, 1], a.total_mass)
    f = discrepancy_map([[0.3, 0.5], [0.7, 0.5]], [a, b])
    assert np.linalg.norm(f) < 1e-2


@settings(max_examples=12, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.sampled_from([2, 3, 5]))
def test_discrepancy_map_commutes_with_cyclic_shift(seed, p):
    rng = np.random.default_rng(seed)
    ms = [uniform(n=20_000, seed=7), gaussian([0.6, 0.4], 0.25, n=20_000, seed=8)]
    x = rng.uniform(0.05, 0.95, size=(p, 2))
    fx = discrepancy_map(x, ms).reshape(len(ms) - 1, p)
    fs = discrepancy_map(cyclic_shift(x), ms).reshape(len(ms) - 1, p)
    tol = 10 * 1e-3 * 2.0  # ten times the capacity tolerance, weights are O(extent^2)
    assert np.allclose(fs, np.roll(fx, -1, axis=1), atol=tol)


def test_profiles_sum_to_zero():
    rng = np.random.default_rng(9)
    ms = [uniform(n=20_000, seed=10), gaussian([0.3, 0.7], 0.2, n=20_000, seed=11)]
    fmap = DiscrepancyMap(ms)
    for _ in range(10):
        for prof in fmap.profiles(rng.uniform(size=(5, 2))):
            assert abs(prof.sum()) <= 1e-9


def _masses_ok(result, k, tol):
    rep = result.report
    assert len(result.parts) == k
    assert rep.coverage_defects == 0 and rep.convexity_ok
    assert rep.max_deviation <= tol


def test_prime_two_on_identical_squares():
    m = uniform(mass=2.0, n=60_000, seed=12)
    sol = solve_prime(2, [m, m], FAST)
    assert sol.r == 2 and np.allclose(sol.masses, 1.0, atol=5e-3)


def test_prime_two_on_translated_blobs_matches_oracle():
    a = gaussian([0.3, 0.4], 0.1, mass=2.0, n=60_000, seed=13)
    b = gaussian([0.7, 0.6], 0.1, mass=2.0, n=60_000, seed=14)
    res = equipartition(2, [a, b], FAST)
    oracle = brute_force_hyperplane([a, b], angles=360, offsets=250)
    _masses_ok(res, 2, 2e-2)
    assert res.max_deviation <= oracle.deviation + 5e-3


def test_prime_three_on_discs():
    ms = [uniform(DISC, mass=3.0, n=60_000, seed=15), uniform(DISC, mass=3.0, n=60_000, seed=16)]
    _masses_ok(equipartition(3, ms, FAST), 3, 2e-2)


def test_composite_four_on_squares():
    ms = [uniform(mass=4.0, n=80_000, seed=17), uniform(mass=4.0, n=80_000, seed=18)]
    res = solve_composite(2, 2, ms, FAST)
    _masses_ok(res, 4, 2e-2)
    assert res.tree.kind == "composite" and len(res.tree.children) == 2
    direct = equipartition(4, ms, FAST)
    _masses_ok(direct, 4, 2e-2)


def test_composite_with_unit_factor_matches_prime():
    ms = [uniform(mass=3.0, n=40_000, seed=19), gaussian([0.5, 0.5], 0.2, mass=3.0, n=40_000, seed=20)]
    a = equipartition(3, ms, FAST)
    b = solve_composite(3, 1, ms, FAST)
    assert np.array_equal(a.report.masses, b.report.masses)


def test_k_one_is_whole_space():
    ms = [uniform(seed=21), gaussian([0.2, 0.2], 0.3, seed=22)]
    res = equipartition(1, ms)
    assert res.parts[0].halfspaces == []
    assert res.report.masses.tolist() == [[1.0, 1.0]]
    assert res.max_deviation == 0.0


def test_line_uses_quantile_cuts():
    m = gaussian([0.3], 0.2, support={"kind": "box", "lo": [0.0], "hi": [1.0]}, mass=5.0, n=50_000, seed=23)
    res = equipartition(5, [m])
    _masses_ok(res, 5, 1e-3)


@pytest.mark.slow
def test_six_parts_for_gaussian_mixtures():
    def blob(c, s):
        return {"kind": "gaussian", "parameters": {"mean": c, "cov": [[s, 0], [0, s]], "support": SQUARE}}
    a = mixture([blob([0.25, 0.3], 0.01), blob([0.7, 0.7], 0.02)], mass=6.0, n=240_000, seed=24)
    b = mixture([blob([0.7, 0.25], 0.015), dict(blob([0.3, 0.75], 0.01), weight=0.5)], mass=6.0, n=240_000, seed=25)
    _masses_ok(equipartition(6, [a, b], FAST), 6, 2e-2)


def test_reported_deviation_matches_independent_verification():
    ms = [uniform(mass=2.0, n=40_000, seed=26), gaussian([0.4, 0.6], 0.2, mass=2.0, n=40_000, seed=27)]
    res = equipartition(2, ms, FAST)
    rep = verify_partition([p.halfspaces for p in res.parts], ms)
    assert rep.max_deviation == res.max_deviation


def test_search_is_deterministic():
    ms = [uniform(mass=3.0, n=30_000, seed=28), gaussian([0.6, 0.4], 0.2, mass=3.0, n=30_000, seed=29)]
    a = equipartition(3, ms, FAST)
    b = equipartition(3, ms, FAST)
    assert a.tree.to_dict() == b.tree.to_dict()


def test_failed_search_names_stage_and_residual():
    ms = [uniform(mass=3.0, n=20_000, seed=30), gaussian([0.8, 0.2], 0.1, mass=3.0, n=20_000, seed=31)]
    hopeless = SearchParams(restarts=1, max_iterations=1, tolerance=1e-15, mass_tolerance=1e-9)
    with pytest.raises(EquipartitionError) as exc:
        equipartition(3, ms, hopeless)
    assert exc.value.stage == "prime" and exc.value.path == ()
    assert np.isfinite(exc.value.residual) and exc.value.best_point.shape == (3, 2)


def test_rejects_bad_arguments():
    ms = [uniform(seed=32)] * 3
    with pytest.raises(ValueError):
        equipartition(2, ms)
    with pytest.raises(ValueError):
        equipartition(0, ms[:1])
    with pytest.raises(ValueError):
        solve_prime(4, ms[:2])


def test_snap_merges_only_the_closest_close_pair():
    from equipart.equipartition import _snap_closest

    x = np.array([[0.0, 0.0], [0.5, 0.5], [0.51, 0.5], [1.0, 0.0]])
    out = _snap_closest(x, 0.05)
    assert np.allclose(out[1], [0.505, 0.5]) and np.allclose(out[2], out[1])
    assert np.array_equal(out[[0, 3]], x[[0, 3]])
    assert _snap_closest(x, 0.005) is None
    # two sites would collapse to a single cell
    assert _snap_closest(x[1:3], 0.05) is None
