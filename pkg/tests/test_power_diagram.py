import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from equipart.measures import ConvexBody, in_halfspaces
from equipart.power_diagram import (
    PowerPartition,
    SiteConfig,
    cell_halfspaces,
    cell_measure,
    classify,
    extract_polygons_2d,
    merge_epsilon,
    normalize_weights,
    polygon_area,
    power_value,
)

from conftest import DISC, mc_tol, uniform

TWO = np.array([[0.0, 0.0], [1.0, 0.0]])


def test_power_value_is_squared_distance_minus_weight():
    p = PowerPartition([[0.0, 0.0]], [0.0])
    assert power_value(p, 0, [3.0, 4.0]) == 25.0
    assert power_value(PowerPartition([[0.0, 0.0]], [25.0]), 0, [3.0, 4.0]) == 0.0


def test_power_differences_ignore_common_shift():
    x = np.array([0.3, -1.2])
    a = PowerPartition(TWO, [0.4, -0.1])
    b = PowerPartition(TWO, [7.4, 6.9])
    da = power_value(a, 0, x) - power_value(a, 1, x)
    db = power_value(b, 0, x) - power_value(b, 1, x)
    assert da == pytest.approx(db, abs=1e-12)


def test_classify_nearer_site_and_tie_goes_to_lowest_index():
    p = PowerPartition(TWO, [0.0, 0.0])
    assert classify(p, [0.25, 0.0]) == 0
    assert classify(p, [0.5, 0.0]) == 0
    assert classify(p, [0.5000001, 0.0]) == 1


def test_weighted_boundary_follows_hand_solution():
    # h_0 = h_1  <=>  x_1 = (1 + w_0 - w_1) / 2
    p = PowerPartition(TWO, [0.5, -0.5])
    assert classify(p, [0.7, 0.0]) == 0
    assert classify(p, [0.99, 0.3]) == 0
    assert classify(p, [1.01, 0.3]) == 1
    q = PowerPartition(TWO, [0.25, -0.25])
    assert classify(q, [0.749, 0.0]) == 0
    assert classify(q, [0.751, 0.0]) == 1


def test_cell_halfspaces_for_weighted_pair():
    (n, o), = cell_halfspaces(PowerPartition(TWO, [0.25, -0.25]), 0)
    # 2 x_1 <= 1.5, i.e. x_1 <= 0.75
    assert np.allclose(n, [2.0, 0.0]) and o == pytest.approx(1.5)
    (n, o), = cell_halfspaces(PowerPartition(TWO, [0.5, -0.5]), 0)
    assert o / n[0] == pytest.approx(1.0)


def test_unweighted_pair_gives_perpendicular_bisector():
    s = np.array([[0.2, 0.1], [0.8, 0.5]])
    (n, o), = cell_halfspaces(PowerPartition(s, [0.0, 0.0]), 0)
    mid = s.mean(axis=0)
    assert n @ mid == pytest.approx(o)
    e = s[1] - s[0]
    assert abs(n[0] * e[1] - n[1] * e[0]) < 1e-12


def test_middle_of_three_collinear_sites_is_a_slab():
    p = PowerPartition([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], np.zeros(3))
    hs = cell_halfspaces(p, 1)
    pts = np.array([[0.6, 50.0], [1.4, -50.0], [0.4, 0.0], [1.6, 0.0]])
    assert in_halfspaces(pts, hs).tolist() == [True, True, False, False]


def test_cell_measure_symmetric_and_saturated():
    n = 60_000
    m = uniform(n=n, seed=1)
    p = PowerPartition([[0.25, 0.5], [0.75, 0.5]], [0.0, 0.0])
    mass = cell_measure(p, m)
    assert mass.sum() == pytest.approx(1.0)
    assert abs(mass[0] - 0.5) <= mc_tol(0.5, n)
    sat = cell_measure(PowerPartition([[0.25, 0.5], [0.75, 0.5]], [100.0, 0.0]), m)
    assert sat.tolist() == [1.0, 0.0]


def test_equilateral_sites_split_disc_in_thirds():
    n = 90_000
    m = uniform(DISC, n=n, seed=2)
    ang = 2 * np.pi * np.arange(3) / 3
    p = PowerPartition(0.3 * np.c_[np.cos(ang), np.sin(ang)], np.zeros(3))
    mass = cell_measure(p, m)
    assert np.all(np.abs(mass - 1 / 3) <= mc_tol(1 / 3, n))


def test_polygons_two_rectangles_and_tiling():
    square = ConvexBody.box([0, 0], [1, 1])
    polys = extract_polygons_2d(PowerPartition([[0.25, 0.5], [0.75, 0.5]], [0.0, 0.0]), square)
    for poly, xr in zip(polys, [(0.0, 0.5), (0.5, 1.0)]):
        assert polygon_area(poly) == pytest.approx(0.5, abs=1e-12)
        assert poly[:, 0].min() == pytest.approx(xr[0]) and poly[:, 0].max() == pytest.approx(xr[1])
    rng = np.random.default_rng(3)
    sites = rng.uniform(size=(7, 2))
    polys = extract_polygons_2d(PowerPartition(sites, rng.normal(scale=0.05, size=7)), square)
    assert sum(polygon_area(q) for q in polys if len(q)) == pytest.approx(1.0, abs=1e-9)


def test_polygon_areas_agree_with_sampled_masses():
    n = 100_000
    m = uniform(n=n, seed=4)
    rng = np.random.default_rng(5)
    p = PowerPartition(rng.uniform(size=(5, 2)), rng.normal(scale=0.03, size=5))
    areas = np.array([polygon_area(q) if len(q) else 0.0 for q in extract_polygons_2d(p, ConvexBody.box([0, 0], [1, 1]))])
    mass = cell_measure(p, m)
    for a, c in zip(areas, mass):
        assert abs(a - c) <= mc_tol(max(a, 1e-3), n) + 1e-9


def test_polygon_edges_respect_facet_bound():
    rng = np.random.default_rng(6)
    for _ in range(20):
        t = int(rng.integers(2, 9))
        p = PowerPartition(rng.uniform(size=(t, 2)), rng.normal(scale=0.05, size=t))
        for q in extract_polygons_2d(p, ConvexBody.box([0, 0], [1, 1])):
            assert len(q) <= t - 1 + 4


def test_cell_missing_the_clip_region_is_empty():
    p = PowerPartition([[0.5, 0.5], [5.0, 5.0]], [0.0, 100.0])
    polys = extract_polygons_2d(p, ConvexBody.box([0, 0], [1, 1]))
    assert polys[0].shape == (0, 2) and polygon_area(polys[1]) == pytest.approx(1.0)


def test_site_config_validation():
    with pytest.raises(ValueError):
        SiteConfig([[0, 0], [0, 0]], [0.5, 0.5])
    with pytest.raises(ValueError):
        SiteConfig([[0, 0], [1, 0]], [1.0, 0.0])
    with pytest.raises(ValueError):
        SiteConfig([[0, 0], [1, 0]], [1.0])
    assert merge_epsilon([0, 0], [3, 4]) == pytest.approx(5e-9)


def test_normalized_weights_are_orthogonal_to_capacities():
    rng = np.random.default_rng(7)
    for _ in range(200):
        c = rng.uniform(0.01, 3.0, size=6)
        w = normalize_weights(rng.normal(scale=100.0, size=6), c)
        assert abs(w @ c) <= 1e-12


coords = st.floats(-2.0, 2.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(-1e3, 1e3, allow_nan=False), t=st.integers(2, 7))
def test_diagonal_shift_never_changes_classification(seed, alpha, t):
    rng = np.random.default_rng(seed)
    sites = rng.integers(-8, 8, size=(t, 2)) / 8.0 + rng.uniform(size=(t, 2)) * 1e-3
    w = rng.integers(-16, 16, size=t) / 16.0
    # dyadic coordinates and a dyadic shift keep the arithmetic exact
    alpha = np.round(alpha * 64) / 64
    x = rng.integers(-32, 32, size=(200, 2)) / 16.0
    a = classify(PowerPartition(sites, w), x)
    b = classify(PowerPartition(sites, w + alpha), x)
    assert np.array_equal(a, b)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.integers(2, 8))
def test_zero_weights_give_nearest_site(seed, t):
    rng = np.random.default_rng(seed)
    sites = rng.uniform(size=(t, 2))
    x = rng.uniform(-0.5, 1.5, size=(300, 2))
    lab = classify(PowerPartition(sites, np.zeros(t)), x)
    dist = np.linalg.norm(x[:, None] - sites[None], axis=2)
    assert np.allclose(dist[np.arange(300), lab], dist.min(axis=1))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.integers(2, 8))
def test_classify_agrees_with_halfspaces(seed, t):
    rng = np.random.default_rng(seed)
    p = PowerPartition(rng.uniform(size=(t, 2)), rng.normal(scale=0.05, size=t))
    x = rng.uniform(size=(500, 2))
    lab = classify(p, x)
    member = np.array([in_halfspaces(x, cell_halfspaces(p, i)) for i in range(t)])
    # every point lies in its own cell; ties are the only way to be in two
    assert np.all(member[lab, np.arange(500)])
    assert np.all(member.sum(axis=0) == 1)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.integers(2, 6))
def test_cells_are_convex_along_segments(seed, t):
    rng = np.random.default_rng(seed)
    p = PowerPartition(rng.uniform(size=(t, 2)), rng.normal(scale=0.05, size=t))
    x = rng.uniform(size=(400, 2))
    lab = classify(p, x)
    ts = np.linspace(0, 1, 100)[:, None]
    for i in range(t):
        pts = x[lab == i]
        if len(pts) < 2:
            continue
        a, b = pts[:2]
        seg_lab = classify(p, a + ts * (b - a))
        assert np.all(seg_lab == i)
