"""Fractional Laplacian, H^s seminorms and the functionals built on them.

Spectral normalization is canonical: (-Delta)^s is the Fourier multiplier |xi|^(2s)
and the seminorm is

    T(u) = [u]^2 = integral |xi|^(2s) |Fu(xi)|^2 dxi.

The Gagliardo double integral

    integral integral |u(x) - u(y)|^2 / |x - y|^(N + 2s) dx dy

equals 2 A(N, s) T(u) with A(N, s) = integral (1 - cos z_1) / |z|^(N + 2s) dz, which
`equivalence_constant` evaluates by quadrature.
"""
import concurrent.futures
import dataclasses
import functools
import itertools
import logging

import numpy as np
import scipy.integrate
import scipy.special

from . import field

DIRECT_MAX_POINTS = 2**13
NORMALIZATIONS = ("spectral", "gagliardo")

_logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class EquivalenceConstant:
    """A(N, s) such that the Gagliardo seminorm squared is 2 A times the spectral one."""

    N: int
    s: float
    A: float


@dataclasses.dataclass(frozen=True)
class Nonlinearity:
    """G(t) = G1(t) - G2(t) and its derivative g = g1 - g2 for exponent p."""

    p: float

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"exponent p={self.p} must be greater than 1")

    def G1(self, t):
        return np.abs(t) ** (self.p + 1) / (self.p + 1)

    def G2(self, t):
        return np.square(t) / 2

    def g1(self, t):
        return np.abs(t) ** (self.p - 1) * t

    def g2(self, t):
        return np.asarray(t, dtype=float)

    def G(self, t):
        return self.G1(t) - self.G2(t)

    def g(self, t):
        return self.g1(t) - self.g2(t)

    @property
    def zeta_min(self):
        return ((self.p + 1) / 2) ** (1 / (self.p - 1))


def _check_order(s, allow_one=False):
    upper_ok = s <= 1 if allow_one else s < 1
    if not (s > 0 and upper_ok):
        bound = "(0, 1]" if allow_one else "(0, 1)"
        raise ValueError(f"fractional order s={s} is outside {bound}")


def symbol(grid, s):
    """Multiplier |xi|^(2s) on the frequency lattice, in FFT order (0 at xi = 0)."""
    return grid.frequency_norm() ** (2 * s)


def apply_multiplier(f, multiplier):
    """Multiply the Fourier coefficients of `f` by `multiplier` and transform back."""
    F = field.forward_transform(f)
    return field.inverse_transform(field.SpectralField(grid=F.grid, coeffs=F.coeffs * multiplier))


def frac_laplacian(f, s):
    """Apply (-Delta)^s spectrally.

    Parameters
    ----------
    f : field.ScalarField
    s : float
        Order in (0, 1]; s = 1 is the classical negative Laplacian.

    Returns
    -------
    field.ScalarField
    """
    _check_order(s, allow_one=True)
    return apply_multiplier(f, symbol(f.grid, s))


def spectral_energy(F, s):
    """sum |xi|^(2s) |coeff|^2 (pi/L)^N for precomputed coefficients."""
    weights = symbol(F.grid, s) * np.abs(F.coeffs) ** 2
    return float(np.sum(weights) * F.grid.frequency_spacing**F.grid.N)


def seminorm_spectral(f, s):
    """Spectral H^s seminorm [f].

    Formula: [f]^2 = sum_k |xi_k|^(2s) |Ff(xi_k)|^2 (pi / L)^N

    Parameters
    ----------
    f : field.ScalarField
    s : float

    Returns
    -------
    float
    """
    return np.sqrt(spectral_energy(field.forward_transform(f), s))


def seminorm_squared(f, s):
    """T(f) = seminorm_spectral(f)^2 without the square root round trip."""
    return spectral_energy(field.forward_transform(f), s)


def _sphere_area(n):
    """Measure of the unit sphere S^(n-1) in R^n."""
    return 2 * np.pi ** (n / 2) / scipy.special.gamma(n / 2)


@functools.lru_cache(maxsize=None)
def cube_tail(N, s):
    """integral over |z|_inf > 1 of |z|^(-N - 2s) dz.

    Formula: (1 / 2s) * integral over S^(N-1) of |theta|_inf^(2s) dtheta
    """
    if N == 1:
        angular = 2.0
    elif N == 2:
        angular = 8 * scipy.integrate.quad(lambda phi: np.cos(phi) ** (2 * s), 0, np.pi / 4)[0]
    else:
        # six faces, eight azimuthal octants each; the polar integral is closed form
        def polar(phi):
            c = np.cos(phi)
            return 1 - (c / np.sqrt(1 + c**2)) ** (2 * s + 1)

        angular = 48 / (2 * s + 1) * scipy.integrate.quad(polar, 0, np.pi / 4)[0]
    return angular / (2 * s)


def seminorm_direct(f, s, tail_correction=True, deterministic=True):
    """Gagliardo seminorm by a double rectangle rule over cell pairs.

    The sum runs over ordered pairs of distinct cells with the nearest-image periodic
    distance. With `tail_correction` the separations outside the periodic cube are
    added analytically as 2 ||f||^2 L^(-2s) cube_tail(N, s), which is exact for fields
    concentrated well inside the box.

    Parameters
    ----------
    f : field.ScalarField
        At most 2^13 grid points in total.
    s : float
    tail_correction : bool
    deterministic : bool
        Reduce the per-offset partial sums in a fixed order; otherwise in completion
        order.

    Returns
    -------
    float
        The Gagliardo seminorm, approximately sqrt(2 A(N, s)) * seminorm_spectral(f).
    """
    _check_order(s)
    grid = f.grid
    if grid.size > DIRECT_MAX_POINTS:
        raise ValueError(
            f"direct quadrature on {grid.size} points exceeds the {DIRECT_MAX_POINTS} point limit"
        )

    half = grid.M // 2
    offsets = [
        offset
        for offset in itertools.product(range(-half, half), repeat=grid.N)
        if any(offset)
    ]
    exponent = -(grid.N + 2 * s) / 2

    def partial(chunk):
        total = 0.0
        for offset in chunk:
            shifted = np.roll(f.values, shift=offset, axis=tuple(range(grid.N)))
            distance2 = sum(d**2 for d in offset) * grid.h**2
            total += np.sum((f.values - shifted) ** 2) * distance2**exponent
        return total

    workers = field.thread_cap()
    chunk_size = max(1, len(offsets) // (4 * workers))
    chunks = [offsets[start : start + chunk_size] for start in range(0, len(offsets), chunk_size)]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        if deterministic:
            partials = list(pool.map(partial, chunks))
        else:
            futures = [pool.submit(partial, chunk) for chunk in chunks]
            partials = [future.result() for future in concurrent.futures.as_completed(futures)]
    total = float(np.sum(partials)) * grid.cell_volume**2

    if tail_correction:
        l2_squared = field.integrate(f.with_values(f.values**2))
        total += 2 * l2_squared * grid.L ** (-2 * s) * cube_tail(grid.N, s)
    _logger.debug("(N=%s, M=%s, s=%s): Direct seminorm squared %s", grid.N, grid.M, s, total)
    return np.sqrt(total)


@functools.lru_cache(maxsize=None)
def equivalence_constant(N, s):
    """A(N, s) = integral (1 - cos z_1) / |z|^(N + 2s) dz over R^N.

    In polar coordinates the integral factors into a radial and an angular part:

        A = c(s) * S(N, s)
        c(s) = integral_0^inf (1 - cos t) t^(-1 - 2s) dt
        S(N, s) = integral over S^(N-1) of |theta_1|^(2s) dtheta

    The radial integral is split at t = 1. Near 0 the algebraic weight t^(1 - 2s)
    carries the singularity; beyond 1 the cosine part is a Fourier integral and the
    rest is closed form.

    Parameters
    ----------
    N : int
    s : float
        Order in (0, 1).

    Returns
    -------
    EquivalenceConstant
    """
    _check_order(s)
    if N not in field.SUPPORTED_DIMENSIONS:
        raise ValueError(f"dimension N={N} is not one of {field.SUPPORTED_DIMENSIONS}")

    # (1 - cos t) / t^2 without cancellation
    def near_zero(t):
        return 0.5 * np.sinc(t / (2 * np.pi)) ** 2

    head = scipy.integrate.quad(
        near_zero, 0, 1, weight="alg", wvar=(1 - 2 * s, 0), epsabs=1e-14, epsrel=1e-12
    )[0]
    oscillating = scipy.integrate.quad(
        lambda t: t ** (-1 - 2 * s), 1, np.inf, weight="cos", wvar=1.0, epsabs=1e-14
    )[0]
    radial = head + 1 / (2 * s) - oscillating

    if N == 1:
        angular = 2.0
    else:
        beta = (N - 3) / 2
        # t = theta_1 on S^(N-1): measure |S^(N-2)| (1 - t^2)^((N-3)/2) dt
        half_line = scipy.integrate.quad(
            lambda t: (1 + t) ** beta,
            0,
            1,
            weight="alg",
            wvar=(2 * s, beta),
            epsabs=1e-14,
            epsrel=1e-12,
        )[0]
        angular = _sphere_area(N - 1) * 2 * half_line

    A = radial * angular
    _logger.debug("(N=%s, s=%s): Equivalence constant A=%s", N, s, A)
    return EquivalenceConstant(N=N, s=s, A=float(A))


def coarsen(f, max_points=DIRECT_MAX_POINTS):
    """Keep every other sample per axis until the grid has at most `max_points` points.

    Even indices contain the origin, so the coarse grid is `make_grid(N, M / 2, L)`.
    """
    while f.grid.size > max_points and f.grid.M // 2 >= field.MIN_POINTS:
        grid = field.make_grid(f.grid.N, f.grid.M // 2, f.grid.L)
        f = field.ScalarField(grid=grid, values=f.values[(slice(None, None, 2),) * f.grid.N])
    return f


def seminorm_calibration(f, s, deterministic=True):
    """Compare the direct Gagliardo quadrature with sqrt(2 A) times the spectral seminorm.

    The field is coarsened to fit the direct quadrature; both seminorms are taken on
    the coarse field.

    Parameters
    ----------
    f : field.ScalarField
    s : float
    deterministic : bool
        Passed to `seminorm_direct`.

    Returns
    -------
    dict
        {"M": 64, "direct": 5.1, "spectral": 5.0, "relative_gap": 0.02, "deterministic": True}
    """
    coarse = coarsen(f)
    direct = seminorm_direct(coarse, s, deterministic=deterministic)
    spectral = np.sqrt(2 * equivalence_constant(coarse.grid.N, s).A) * seminorm_spectral(coarse, s)
    gap = abs(direct - spectral) / spectral if spectral > 0 else 0.0
    _logger.info(
        "(N=%s, M=%s, s=%s): Direct seminorm %.6g against spectral %.6g (gap %.2e)",
        coarse.grid.N,
        coarse.grid.M,
        s,
        direct,
        spectral,
        gap,
    )
    return {
        "M": coarse.grid.M,
        "direct": float(direct),
        "spectral": float(spectral),
        "relative_gap": float(gap),
        "deterministic": deterministic,
    }


def G_value(t, p):
    """G(t) = |t|^(p+1) / (p+1) - t^2 / 2."""
    return Nonlinearity(p).G(t)


def g_value(t, p):
    """g(t) = G'(t) = |t|^(p-1) t - t."""
    return Nonlinearity(p).g(t)


def zeta_min(p):
    """Positive root ((p+1)/2)^(1/(p-1)) of G; G(t) > 0 exactly when |t| > zeta_min."""
    return Nonlinearity(p).zeta_min


def constraint_V(f, p):
    """V(f) = integral G(f)."""
    return field.integrate(f.with_values(G_value(f.values, p)))


def inner(f, g):
    """L^2 inner product on the box."""
    return float(f.grid.cell_volume * np.sum(f.values * g.values))


def lp_norm(f, q):
    """Discrete L^q norm (cell_volume * sum |f|^q)^(1/q) for q in [1, inf)."""
    if not (1 <= q < np.inf):
        raise ValueError(f"exponent q={q} is outside [1, inf)")
    return float((f.grid.cell_volume * np.sum(np.abs(f.values) ** q)) ** (1 / q))


def _normalization_factor(N, s, normalization):
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization {normalization!r} is not one of {NORMALIZATIONS}")
    if normalization == "spectral":
        return 1.0
    return 2 * equivalence_constant(N, s).A


def energy(f, s, p, normalization="spectral"):
    """Energy 1/2 c T(f) - V(f), with c = 1 (spectral) or 2 A(N, s) (Gagliardo).

    Parameters
    ----------
    f : field.ScalarField
    s : float
    p : float
    normalization : {"spectral", "gagliardo"}

    Returns
    -------
    float
    """
    factor = _normalization_factor(f.grid.N, s, normalization)
    return 0.5 * factor * seminorm_squared(f, s) - constraint_V(f, p)


def hs_norm(f, s, normalization="spectral"):
    """Full H^s norm (||f||^2 + c T(f))^(1/2)."""
    factor = _normalization_factor(f.grid.N, s, normalization)
    return float(np.sqrt(lp_norm(f, 2) ** 2 + factor * seminorm_squared(f, s)))


def critical_exponent(N, s):
    """2N / (N - 2s), the critical Sobolev exponent; requires N > 2s."""
    if not N > 2 * s:
        raise ValueError(f"critical Sobolev exponent is infinite for N={N} <= 2s={2 * s}")
    return 2 * N / (N - 2 * s)


def sobolev_ratio(f, s):
    """Embedding ratio ||f||_{L^(2N/(N-2s))} / [f].

    Raises
    ------
    ValueError
        When N <= 2s or the seminorm of `f` vanishes.
    """
    q = critical_exponent(f.grid.N, s)
    seminorm = seminorm_spectral(f, s)
    if seminorm == 0:
        raise ValueError("sobolev ratio of a field with zero seminorm is undefined")
    return lp_norm(f, q) / seminorm


def sobolev_corpus_ratio(grid, s, rng, n_fields=100):
    """Largest embedding ratio over `n_fields` random smooth fields."""
    ratios = [
        sobolev_ratio(field.random_smooth_field(grid, rng), s) for _ in range(n_fields)
    ]
    return float(np.max(ratios))


def interpolation_bound(f, q, s):
    """Both sides of ||f||_q <= ||f||_2^(1 - alpha) ||f||_(2*)^alpha.

    Parameters
    ----------
    f : field.ScalarField
    q : float
        In [2, 2N/(N-2s)].
    s : float

    Returns
    -------
    dict
        {"lhs": float, "rhs": float, "alpha": float}
    """
    critical = critical_exponent(f.grid.N, s)
    if not 2 <= q <= critical:
        raise ValueError(f"q={q} is outside [2, {critical}]")
    alpha = (0.5 - 1 / q) / (0.5 - 1 / critical)
    lhs = lp_norm(f, q)
    rhs = lp_norm(f, 2) ** (1 - alpha) * lp_norm(f, critical) ** alpha
    return {"lhs": lhs, "rhs": rhs, "alpha": alpha}


def growth_constant(p, N, s):
    """Smallest C with G1(z) <= C |z|^(2*) + G2(z) / 2 for every z.

    Formula:
        f(z) = z^(p+1-q) / (p+1) - z^(2-q) / 4,  q = 2N / (N - 2s)
        z*^(p-1) = (q - 2)(p + 1) / (4 (q - p - 1))
        C = f(z*)

    Requires subcritical p, i.e. p + 1 < q.
    """
    q = critical_exponent(N, s)
    if not p + 1 < q:
        raise ValueError(f"p={p} is not subcritical: p + 1 must be below {q}")
    z_star = ((q - 2) * (p + 1) / (4 * (q - p - 1))) ** (1 / (p - 1))
    return float(z_star ** (p + 1 - q) / (p + 1) - z_star ** (2 - q) / 4)


def growth_ratio(t, p, N, s):
    """G1(t) / (t^2 + |t|^(2*)); tends to 0 at both ends for subcritical p."""
    q = critical_exponent(N, s)
    t = np.asarray(t, dtype=float)
    return Nonlinearity(p).G1(t) / (t**2 + np.abs(t) ** q)
