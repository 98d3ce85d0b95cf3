import numpy as np
import pytest

from fracground import barrier, field, fracops, rearrange


def _two_bumps(grid):
    left = field.gaussian(grid, width=0.5, center=[-1.5] + [0.0] * (grid.N - 1))
    right = field.gaussian(grid, width=0.5, center=[1.5] + [0.0] * (grid.N - 1))
    return left.with_values(left.values + right.values)


def test_rearrange_fixed_point(plane_gaussian):
    rearranged = rearrange.rearrange_decreasing(plane_gaussian)
    np.testing.assert_array_equal(rearranged.values, plane_gaussian.values)


def test_rearrange_recenters_shifted_bump(plane_grid):
    h = plane_grid.h
    shifted = field.gaussian(plane_grid, center=[5 * h, -3 * h])
    rearranged = rearrange.rearrange_decreasing(shifted)
    np.testing.assert_array_equal(np.sort(rearranged.values.ravel()), np.sort(shifted.values.ravel()))
    peak = np.unravel_index(np.argmax(rearranged.values), plane_grid.shape)
    assert peak == (plane_grid.M // 2, plane_grid.M // 2)


def test_rearrange_is_equimeasurable(plane_grid, rng):
    f = field.random_smooth_field(plane_grid, rng)
    rearranged = rearrange.rearrange_decreasing(f)
    np.testing.assert_array_equal(np.sort(rearranged.values.ravel()), np.sort(np.abs(f.values).ravel()))
    for q in [1, 2, 3.5, 4]:
        np.testing.assert_allclose(fracops.lp_norm(rearranged, q), fracops.lp_norm(f, q), rtol=1e-12)
    np.testing.assert_allclose(
        fracops.constraint_V(rearranged, 2.0), fracops.constraint_V(f, 2.0), rtol=1e-12, atol=1e-14
    )


def test_rearranged_field_is_radial_decreasing(plane_grid, rng):
    rearranged = rearrange.rearrange_decreasing(field.random_smooth_field(plane_grid, rng))
    assert rearrange.monotonicity_defect(rearranged) == 0.0
    profile = rearrange.radial_profile(rearranged)
    assert np.all(np.diff(profile.values) <= 0)


def test_polya_szego_gap_of_radial_field(plane_gaussian):
    assert abs(rearrange.polya_szego_gap(plane_gaussian, 0.5)) < 1e-12 * fracops.seminorm_squared(
        plane_gaussian, 0.5
    )


def test_polya_szego_gap_of_translated_gaussian(plane_grid):
    h = plane_grid.h
    shifted = field.gaussian(plane_grid, center=[7 * h, 2 * h])
    T = fracops.seminorm_squared(shifted, 0.5)
    assert abs(rearrange.polya_szego_gap(shifted, 0.5)) < 1e-8 * T


def test_polya_szego_gap_of_two_bumps(plane_grid):
    assert rearrange.polya_szego_gap(_two_bumps(plane_grid), 0.5) > 0


@pytest.mark.parametrize("N, M, L", [(1, 256, 8.0), (2, 64, 8.0)])
@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_polya_szego_holds_on_corpus(N, M, L, s):
    grid = field.make_grid(N, M, L)
    rng = np.random.default_rng(1000 * N + int(100 * s))
    for _ in range(34):
        assert rearrange.polya_szego_holds(field.random_smooth_field(grid, rng), s)


def test_monotonicity_defect(plane_grid):
    assert rearrange.monotonicity_defect(field.gaussian(plane_grid)) == 0.0
    assert rearrange.monotonicity_defect(field.zeros(plane_grid)) == 0.0
    shifted = field.gaussian(plane_grid, center=[1.0, 0.0])
    assert rearrange.monotonicity_defect(shifted) > 0.05


def test_radial_profile(plane_gaussian):
    profile = rearrange.radial_profile(plane_gaussian)
    assert profile.N == 2
    assert profile.radii[0] == 0.0
    assert np.all(np.diff(profile.radii) > 0)
    assert np.all(np.diff(profile.values) <= 0)
    assert profile.radii[-1] < plane_gaussian.grid.L
    np.testing.assert_allclose(profile.values, np.exp(-(profile.radii**2) / 2) * 2.0, rtol=1e-12)
    np.testing.assert_allclose(profile.spread, 0.0, atol=1e-15)


def test_radial_profile_rejects(plane_grid, plane_gaussian):
    with pytest.raises(ValueError):
        rearrange.radial_profile(_two_bumps(plane_grid))
    with pytest.raises(ValueError):
        rearrange.radial_profile(plane_gaussian.with_values(-plane_gaussian.values))
    with pytest.raises(ValueError):
        rearrange.radial_profile(field.gaussian(plane_grid, center=[1.0, 0.0]))
    unchecked = rearrange.radial_profile(_two_bumps(plane_grid), check=False)
    assert unchecked.spread.max() > 0


def test_sphere_measure():
    np.testing.assert_allclose(rearrange.sphere_measure(1), 2.0)
    np.testing.assert_allclose(rearrange.sphere_measure(2), 2 * np.pi)
    np.testing.assert_allclose(rearrange.sphere_measure(3), 4 * np.pi)
    np.testing.assert_allclose(rearrange.radial_bound_coefficient(2), np.pi ** (-0.5))


def test_radial_bound_check_on_barrier():
    grid = field.make_grid(2, 256, 4.0)
    w = barrier.make_barrier(barrier.BarrierSpec(zeta=1.0, R=1.0), grid)
    report = rearrange.radial_bound_check(w)
    assert report["passed"]
    np.testing.assert_allclose(report["l2_norm"] ** 2, 11 * np.pi / 6, rtol=2e-2)
    at_one = np.argmin(np.abs(report["radii"] - 1.0))
    assert report["radii"][at_one] == pytest.approx(1.0)
    np.testing.assert_allclose(report["bounds"][at_one], np.sqrt(11 / 6), rtol=1e-2)
    assert report["values"][at_one] == 1.0
    assert report["min_margin"] >= 0


def test_radial_bound_check_on_zero_field(plane_grid):
    report = rearrange.radial_bound_check(field.zeros(plane_grid))
    assert report["passed"]
    np.testing.assert_array_equal(report["margins"], report["bounds"])
    assert rearrange.decay_margin(field.zeros(plane_grid)) == 0.0


@pytest.mark.parametrize("N, M, L", [(1, 256, 8.0), (2, 64, 8.0), (3, 16, 4.0)])
def test_radial_bound_holds_on_rearranged_corpus(N, M, L):
    grid = field.make_grid(N, M, L)
    rng = np.random.default_rng(N)
    for _ in range(10):
        rearranged = rearrange.rearrange_decreasing(field.random_smooth_field(grid, rng))
        report = rearrange.radial_bound_check(rearranged)
        assert report["min_margin"] >= -1e-6 * report["l2_norm"]


def test_decay_margin(plane_gaussian):
    margin = rearrange.decay_margin(plane_gaussian)
    assert 0 < margin < 1
