import logging

import numpy as np
import pytest

from coronaLab.PointMeasure import Ball, PointMeasure, ad_regularity, circle, density, find_thin_boundary_ball, \
    growth_constant, is_doubling_ball, mass, segment, thin_boundary_profile
from coronaLab.errors import NoThinBall


def test_mass_of_single_atom(unit_atom):
    assert mass(unit_atom, Ball((0.0, 0.0), 1.0)) == 1.0
    assert mass(unit_atom, Ball((3.0, 0.0), 1.0)) == 0.0


def test_mass_of_segment_ball(segment_measure):
    assert abs(mass(segment_measure, Ball((0.5, 0.0), 0.25)) - 0.5) <= 1e-3


def test_mass_is_closed_ball_membership():
    mu = PointMeasure([[1.0, 0.0]], [2.0])
    assert mass(mu, Ball((0.0, 0.0), 1.0)) == 2.0


def test_mass_by_index_set_and_indicator(segment_measure):
    indices = np.arange(0, 1000, 7)
    mask = np.zeros(1000, dtype=bool)
    mask[indices] = True
    assert mass(segment_measure, indices) == pytest.approx(mass(segment_measure, mask))


def test_mass_is_additive_on_disjoint_regions():
    rng = np.random.default_rng(3)
    mu = PointMeasure(rng.random((50, 2)), rng.random(50))
    order = rng.permutation(50)
    E, F = order[:20], order[20:35]
    both = np.concatenate((E, F))
    assert mass(mu, E) + mass(mu, F) == pytest.approx(mass(mu, both), rel=1e-14)


def test_density_values(unit_atom, segment_measure):
    assert density(unit_atom, Ball((0.0, 0.0), 0.5)) == 1.0
    assert abs(density(segment_measure, Ball((0.5, 0.0), 0.25)) - 1.0) <= 2e-3
    assert density(segment_measure, Ball((0.5, 5.0), 0.25)) == 0.0


def test_density_matches_mass_for_scaled_balls(segment_measure):
    ball = Ball((0.3, 0.0), 0.05)
    for a in (0.5, 1.0, 3.0):
        scaled = ball.scaled(a)
        assert density(segment_measure, scaled) * (2 * a * 0.05) == pytest.approx(mass(segment_measure, scaled))


def test_growth_constant_of_segment(segment_measure):
    """Arclength on a line has sup mu(B(x, r)) / r = 2; atoms add at most one spacing on each side."""
    at_resolution = growth_constant(segment_measure)
    assert 2.0 <= at_resolution <= 3.0 + 1e-6
    coarse = growth_constant(segment_measure, resolution=0.01)
    assert 2.0 <= coarse <= 2.1 + 1e-6


def test_growth_constant_of_empty_measure():
    assert growth_constant(PointMeasure.empty()) == 0.0


def test_growth_constant_below_resolution_warns(unit_atom, caplog):
    with caplog.at_level(logging.WARNING):
        value = growth_constant(unit_atom, [Ball((0.0, 0.0), 1e-6)])
    assert value == pytest.approx(1e6)
    assert "resolution floor" in caplog.text


def test_growth_constant_is_scale_covariant():
    rng = np.random.default_rng(5)
    mu = PointMeasure(rng.random((40, 2)), rng.random(40))
    s = 3.0
    scaled = PointMeasure(mu.points * s, mu.weights * s)
    assert growth_constant(scaled) == pytest.approx(growth_constant(mu), rel=1e-12)


def test_is_doubling_ball(unit_atom, segment_measure):
    assert is_doubling_ball(unit_atom, Ball((0.0, 0.0), 0.5), 4.0, 1.0)
    two = PointMeasure([[0.0, 0.0], [3.0, 0.0]], [1.0, 1.0])
    assert not is_doubling_ball(two, Ball((0.0, 0.0), 1.0), 4.0, 1.5)
    assert is_doubling_ball(segment_measure, Ball((0.5, 0.0), 0.1), 2.0, 2.5)


def test_thin_boundary_profile_of_centered_atom(unit_atom):
    profile = thin_boundary_profile(unit_atom, Ball((0.0, 0.0), 1.0))
    assert profile
    assert all(ratio == 0.0 for _, ratio in profile)


def test_thin_boundary_profile_of_sphere_adversary():
    mu = circle(1000)
    profile = thin_boundary_profile(mu, Ball((0.0, 0.0), 1.0))
    t, ratio = profile[-1]
    assert ratio == pytest.approx(1.0 / t)
    assert ratio > 100


def test_thin_boundary_profile_empty_when_2B_carries_no_mass(unit_atom):
    assert thin_boundary_profile(unit_atom, Ball((10.0, 0.0), 1.0)) == []


def test_find_thin_boundary_ball_for_atom_takes_radius_nearest_window_midpoint(unit_atom):
    ball = find_thin_boundary_ball(unit_atom, Ball((0.0, 0.0), 0.1), delta0=0.125)
    grid = np.linspace(1.6, 1.76, 64)
    assert np.isclose(grid, ball.radius, rtol=0, atol=1e-12).any()
    assert abs(ball.radius - 1.68) <= 0.5 * (grid[1] - grid[0]) + 1e-12
    np.testing.assert_array_equal(ball.center, [0.0, 0.0])


def test_find_thin_boundary_ball_on_segment(segment_measure):
    inner = Ball((0.5, 0.0), 0.01)
    ball = find_thin_boundary_ball(segment_measure, inner, C1=10.0, delta0=0.125)
    assert 0.16 - 1e-12 <= ball.radius <= 0.176 + 1e-12
    assert max(ratio for _, ratio in thin_boundary_profile(segment_measure, ball)) <= 10.0


def test_find_thin_boundary_ball_fails_on_sphere_inside_window():
    mu = circle(1000, radius=1.68)
    with pytest.raises(NoThinBall):
        find_thin_boundary_ball(mu, Ball((0.0, 0.0), 0.1), C1=2.0, delta0=0.125)


def test_ad_regularity_of_segment(segment_measure):
    result = ad_regularity(segment_measure, resolution=0.01)
    assert not result.degenerate
    assert 0.9 < result.c_lower <= 1.0 + 1e-6
    assert 1.9 < result.c_upper < 2.2


def test_ad_regularity_of_single_atom_is_degenerate(unit_atom):
    assert ad_regularity(unit_atom).degenerate


def test_point_measure_rejects_negative_weights():
    with pytest.raises(ValueError):
        PointMeasure([[0.0, 0.0]], [-1.0])
    signed = PointMeasure([[0.0, 0.0], [1.0, 0.0]], [-1.0, 2.0], signed=True)
    assert signed.total_variation() == 3.0


def test_csv_import_reads_exported_measure(tmp_path):
    mu = segment(10, total_mass=2.0)
    path = str(tmp_path / "mu.csv")
    mu.export_to_csv_file(path)
    loaded = PointMeasure.import_from_csv_file(path)
    np.testing.assert_array_equal(loaded.points, mu.points)
    np.testing.assert_array_equal(loaded.weights, mu.weights)


def test_csv_import_rejects_malformed_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x1,x2,weight\n0.0,0.0,1.0\n0.5,abc,1.0\n", encoding="utf-8")
    with pytest.raises(ValueError, match="Malformed row 3"):
        PointMeasure.import_from_csv_file(str(path))
