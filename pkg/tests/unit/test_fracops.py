import numpy as np
import pytest

from fracground import field, fracops


def test_frac_laplacian_of_zero(line_grid):
    zero = fracops.frac_laplacian(field.zeros(line_grid), 0.5)
    np.testing.assert_array_equal(zero.values, 0.0)


@pytest.mark.parametrize("s", [0.25, 0.5, 1.0])
def test_frac_laplacian_eigenfunction(s):
    grid = field.make_grid(1, 32, 4.0)
    mode = field.from_function(grid, lambda x: np.cos(np.pi / 4 * x))
    image = fracops.frac_laplacian(mode, s)
    np.testing.assert_allclose(image.values, (np.pi / 4) ** (2 * s) * mode.values, atol=1e-12)


def test_frac_laplacian_classical_limit(line_gaussian):
    h = line_gaussian.grid.h
    u = line_gaussian.values
    finite_difference = (2 * u - np.roll(u, 1) - np.roll(u, -1)) / h**2
    spectral = fracops.frac_laplacian(line_gaussian, 1.0).values
    np.testing.assert_allclose(spectral, finite_difference, atol=1e-2)


def test_frac_laplacian_rejects_order():
    grid = field.make_grid(1, 8, 1.0)
    for s in [0.0, 1.5]:
        with pytest.raises(ValueError):
            fracops.frac_laplacian(field.zeros(grid), s)


def test_multipliers_compose(plane_gaussian):
    twice = fracops.frac_laplacian(fracops.frac_laplacian(plane_gaussian, 0.25), 0.5)
    once = fracops.frac_laplacian(plane_gaussian, 0.75)
    np.testing.assert_allclose(twice.values, once.values, atol=1e-10 * np.abs(once.values).max())


def test_self_adjoint_pairing(plane_grid, rng):
    for _ in range(5):
        f = field.random_smooth_field(plane_grid, rng)
        pairing = fracops.inner(fracops.frac_laplacian(f, 0.5), f)
        np.testing.assert_allclose(pairing, fracops.seminorm_squared(f, 0.5), rtol=1e-10)


def test_seminorm_spectral_of_constant(plane_grid):
    constant = field.from_function(plane_grid, lambda x, y: np.full_like(x, 2.0))
    assert fracops.seminorm_spectral(constant, 0.5) < 1e-10


def test_seminorm_spectral_of_gaussian(line_gaussian):
    # lattice sum of |xi| exp(-xi^2): the kink at xi = 0 shifts the continuum value 1
    # by -d^2/6 - d^4/60 with lattice spacing d = pi / L
    d = line_gaussian.grid.frequency_spacing
    T = fracops.seminorm_spectral(line_gaussian, 0.5) ** 2
    assert abs(T - (1 - d**2 / 6 - d**4 / 60)) < 1e-6
    assert abs(T - 1) < d**2 / 5


def test_seminorm_squared_matches_spectral(plane_gaussian):
    np.testing.assert_allclose(
        fracops.seminorm_squared(plane_gaussian, 0.3),
        fracops.seminorm_spectral(plane_gaussian, 0.3) ** 2,
        rtol=1e-14,
    )


def test_seminorm_direct_of_constant():
    grid = field.make_grid(1, 32, 4.0)
    constant = field.from_function(grid, np.ones_like)
    assert fracops.seminorm_direct(constant, 0.5, tail_correction=False) == 0.0


def test_seminorm_direct_rejects_large_grid(plane_grid):
    with pytest.raises(ValueError):
        fracops.seminorm_direct(field.zeros(plane_grid), 0.5)


def test_seminorm_direct_matches_equivalence_constant(line_gaussian):
    direct = fracops.seminorm_direct(line_gaussian, 0.5)
    spectral = fracops.seminorm_spectral(line_gaussian, 0.5)
    np.testing.assert_allclose(direct**2 / spectral**2, 2 * np.pi, rtol=5e-2)


def test_seminorm_direct_ratio_is_field_independent(rng):
    grid = field.make_grid(2, 64, 4.0)
    s = 0.5
    A = fracops.equivalence_constant(2, s).A
    ratios = []
    for _ in range(20):
        f = field.random_smooth_field(grid, rng, signed=False)
        ratios.append(fracops.seminorm_direct(f, s) ** 2 / fracops.seminorm_squared(f, s))
    ratios = np.array(ratios)
    assert ratios.std() <= 5e-2 * ratios.mean()
    np.testing.assert_allclose(ratios.mean(), 2 * A, rtol=1e-1)


def test_seminorm_direct_deterministic_flag(monkeypatch, rng):
    monkeypatch.setenv(field.THREADS_ENV, "3")
    grid = field.make_grid(1, 64, 4.0)
    f = field.random_smooth_field(grid, rng)
    ordered = fracops.seminorm_direct(f, 0.4)
    assert ordered == fracops.seminorm_direct(f, 0.4)
    np.testing.assert_allclose(fracops.seminorm_direct(f, 0.4, deterministic=False), ordered, rtol=1e-12)


def test_coarsen(plane_gaussian, line_gaussian):
    coarse = fracops.coarsen(plane_gaussian)
    assert coarse.grid == field.make_grid(2, 64, 8.0)
    np.testing.assert_allclose(coarse.values, field.gaussian(coarse.grid, amplitude=2.0).values, rtol=1e-12)
    assert fracops.coarsen(line_gaussian) is line_gaussian


def test_seminorm_calibration(line_gaussian, monkeypatch):
    calibration = fracops.seminorm_calibration(line_gaussian, 0.5)
    assert calibration["M"] == 256
    assert calibration["deterministic"]
    assert calibration["relative_gap"] < 5e-2

    flags = []
    direct = fracops.seminorm_direct

    def recording(f, s, **kwargs):
        flags.append(kwargs["deterministic"])
        return direct(f, s, **kwargs)

    monkeypatch.setattr(fracops, "seminorm_direct", recording)
    unordered = fracops.seminorm_calibration(line_gaussian, 0.5, deterministic=False)
    assert flags == [False]
    np.testing.assert_allclose(unordered["direct"], calibration["direct"], rtol=1e-12)


def test_absolute_value_lowers_direct_seminorm(rng):
    grid = field.make_grid(1, 64, 4.0)
    for _ in range(50):
        f = field.random_smooth_field(grid, rng)
        magnitude = f.with_values(np.abs(f.values))
        assert fracops.seminorm_direct(magnitude, 0.5) <= fracops.seminorm_direct(f, 0.5) * (1 + 1e-12)


def test_cube_tail():
    np.testing.assert_allclose(fracops.cube_tail(1, 0.5), 2.0)
    np.testing.assert_allclose(fracops.cube_tail(1, 0.25), 4.0)
    # the cube contains the unit ball, so its tail is below the ball tail 2 pi / 2s
    assert 0 < fracops.cube_tail(2, 0.5) < 2 * np.pi
    assert 0 < fracops.cube_tail(3, 0.5) < 4 * np.pi


def test_equivalence_constant():
    assert abs(fracops.equivalence_constant(1, 0.5).A - np.pi) < 1e-6
    assert abs(fracops.equivalence_constant(2, 0.5).A - 2 * np.pi) < 1e-6
    for N in [1, 2, 3]:
        for s in [0.1, 0.5, 0.9]:
            A = fracops.equivalence_constant(N, s).A
            assert 0 < A < np.inf


def test_equivalence_constant_blows_up_at_one():
    near = fracops.equivalence_constant(1, 0.99).A * 0.01
    farther = fracops.equivalence_constant(1, 0.95).A * 0.05
    np.testing.assert_allclose(near, farther, rtol=0.2)


def test_equivalence_constant_rejects():
    with pytest.raises(ValueError):
        fracops.equivalence_constant(1, 1.0)
    with pytest.raises(ValueError):
        fracops.equivalence_constant(4, 0.5)


def test_nonlinearity():
    assert fracops.G_value(0.0, 3.0) == 0.0
    assert fracops.g_value(0.0, 3.0) == 0.0
    assert fracops.G_value(2.0, 3.0) == 2.0
    assert fracops.zeta_min(3.0) == pytest.approx(np.sqrt(2))
    assert abs(fracops.G_value(np.sqrt(2), 3.0)) < 1e-12
    assert fracops.zeta_min(2.0) == 1.5


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_nonlinearity_decomposition(p):
    nonlinearity = fracops.Nonlinearity(p)
    t = np.linspace(-3, 3, 61)
    np.testing.assert_array_equal(nonlinearity.G(t), nonlinearity.G1(t) - nonlinearity.G2(t))
    np.testing.assert_array_equal(nonlinearity.g(t), nonlinearity.g1(t) - nonlinearity.g2(t))
    step = 1e-6
    derivative = (nonlinearity.G(t + step) - nonlinearity.G(t - step)) / (2 * step)
    np.testing.assert_allclose(derivative, nonlinearity.g(t), atol=1e-6)

    t = np.linspace(0.01, 5, 500)
    t = t[np.abs(t - nonlinearity.zeta_min) > 1e-6]
    np.testing.assert_array_equal(nonlinearity.G(t) > 0, t > nonlinearity.zeta_min)


def test_nonlinearity_rejects():
    with pytest.raises(ValueError):
        fracops.Nonlinearity(1.0)


def test_constraint_V(plane_gaussian):
    assert fracops.constraint_V(field.zeros(plane_gaussian.grid), 2.0) == 0.0
    expected = field.integrate(plane_gaussian.with_values(fracops.G_value(plane_gaussian.values, 2.0)))
    assert fracops.constraint_V(plane_gaussian, 2.0) == expected


def test_energy(plane_gaussian):
    s, p = 0.5, 2.0
    assert fracops.energy(field.zeros(plane_gaussian.grid), s, p) == 0.0
    T = fracops.seminorm_squared(plane_gaussian, s)
    V = fracops.constraint_V(plane_gaussian, p)
    assert fracops.energy(plane_gaussian, s, p) == 0.5 * T - V
    A = fracops.equivalence_constant(2, s).A
    np.testing.assert_allclose(fracops.energy(plane_gaussian, s, p, normalization="gagliardo"), A * T - V)
    with pytest.raises(ValueError):
        fracops.energy(plane_gaussian, s, p, normalization="weird")


def test_hs_norm(plane_gaussian):
    s = 0.5
    T = fracops.seminorm_squared(plane_gaussian, s)
    l2 = fracops.lp_norm(plane_gaussian, 2)
    np.testing.assert_allclose(fracops.hs_norm(plane_gaussian, s), np.sqrt(l2**2 + T))
    A = fracops.equivalence_constant(2, s).A
    np.testing.assert_allclose(
        fracops.hs_norm(plane_gaussian, s, normalization="gagliardo"), np.sqrt(l2**2 + 2 * A * T)
    )


def test_lp_norm(line_gaussian):
    np.testing.assert_allclose(fracops.lp_norm(line_gaussian, 2) ** 2, np.sqrt(np.pi), rtol=1e-10)
    np.testing.assert_allclose(fracops.lp_norm(line_gaussian, 1), np.sqrt(2 * np.pi), rtol=1e-10)
    with pytest.raises(ValueError):
        fracops.lp_norm(line_gaussian, np.inf)
    with pytest.raises(ValueError):
        fracops.lp_norm(line_gaussian, 0.5)


def test_critical_exponent():
    assert fracops.critical_exponent(2, 0.5) == 4.0
    assert field.ProblemParams(N=2, s=0.5, p=2.0).p_crit == 3.0
    with pytest.raises(ValueError):
        fracops.critical_exponent(1, 0.5)


def test_sobolev_ratio(plane_grid, rng):
    with pytest.raises(ValueError):
        fracops.sobolev_ratio(field.zeros(plane_grid), 0.5)
    with pytest.raises(ValueError):
        fracops.sobolev_ratio(field.gaussian(field.make_grid(1, 64, 8.0)), 0.5)
    ratio = fracops.sobolev_ratio(field.random_smooth_field(plane_grid, rng), 0.5)
    assert 0 < ratio < np.inf


def test_sobolev_corpus_ratio_is_stable_under_refinement():
    coarse = fracops.sobolev_corpus_ratio(
        field.make_grid(2, 64, 8.0), 0.5, np.random.default_rng(3), n_fields=10
    )
    fine = fracops.sobolev_corpus_ratio(
        field.make_grid(2, 128, 8.0), 0.5, np.random.default_rng(3), n_fields=10
    )
    assert np.isfinite(coarse) and np.isfinite(fine)
    assert 0.5 < fine / coarse < 2.0


def test_interpolation_bound(plane_grid, rng):
    for _ in range(50):
        f = field.random_smooth_field(plane_grid, rng)
        bound = fracops.interpolation_bound(f, 3.0, 0.5)
        assert bound["lhs"] <= bound["rhs"] * (1 + 1e-12)
        assert bound["alpha"] == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        fracops.interpolation_bound(f, 5.0, 0.5)


def test_growth_constant():
    # N=2, s=0.5, p=2: f(z) = 1/(3z) - 1/(4z^2) peaks at z = 3/2 with value 1/9
    C = fracops.growth_constant(2.0, 2, 0.5)
    assert C == pytest.approx(1 / 9)
    z = np.geomspace(1e-3, 1e3, 2001)
    nonlinearity = fracops.Nonlinearity(2.0)
    assert np.all(nonlinearity.G1(z) <= C * z**4 + nonlinearity.G2(z) / 2 + 1e-12)
    with pytest.raises(ValueError):
        fracops.growth_constant(3.0, 2, 0.5)


def test_growth_ratio_vanishes_at_both_ends():
    ratios = fracops.growth_ratio(np.array([1e-6, 1.0, 1e6]), 2.0, 2, 0.5)
    assert ratios[0] < 1e-5 and ratios[2] < 1e-5
    assert ratios[1] == pytest.approx(1 / 6)
    # at the critical exponent the ratio stays bounded away from zero at infinity
    assert fracops.growth_ratio(1e6, 3.0, 2, 0.5) > 0.2
