"""Symmetric decreasing rearrangement and radial checks on the box grid."""
import dataclasses
import logging

import numpy as np
import scipy.special

from . import fracops

POLYA_SZEGO_SLACK = 1e-3
RADIAL_TOLERANCE = 1e-3

_logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True, eq=False)
class RadialProfile:
    """Shell-wise description of a radial field inside the inscribed ball |x| < L.

    Shells group grid cells with exactly the same squared radius.
    """

    N: int
    radii: np.ndarray
    values: np.ndarray
    maxima: np.ndarray
    spread: np.ndarray


def rearrange_decreasing(f):
    """Symmetric radial decreasing rearrangement of |f| on the grid.

    The absolute values are sorted in descending order and assigned to the cells in
    ascending order of distance from the origin. Cells at equal distance keep their
    row-major order.

    Parameters
    ----------
    f : field.ScalarField

    Returns
    -------
    field.ScalarField
        Equimeasurable with |f|.
    """
    magnitude = np.abs(f.values).ravel()
    cell_order = np.argsort(f.grid.radius_squared().ravel(), kind="stable")
    values = np.empty_like(magnitude)
    values[cell_order] = np.sort(magnitude)[::-1]
    return f.with_values(values.reshape(f.grid.shape))


def polya_szego_gap(f, s):
    """T(f) - T(f*), nonnegative in the continuum and up to a grid slack on the box."""
    return fracops.seminorm_squared(f, s) - fracops.seminorm_squared(rearrange_decreasing(f), s)


def polya_szego_holds(f, s, slack=POLYA_SZEGO_SLACK):
    """Whether the gap clears -slack * T(f)."""
    return polya_szego_gap(f, s) >= -slack * fracops.seminorm_squared(f, s)


def monotonicity_defect(f):
    """Largest increase of f along an outward lattice step inside the box.

    An outward step moves one cell away from the origin along a single axis and never
    wraps around the periodic boundary. A field that is non-increasing in |x| has
    defect 0.
    """
    defect = 0.0
    M = f.grid.M
    half = M // 2
    for axis in range(f.grid.N):
        steps = np.diff(f.values, axis=axis)
        # steps[j] = f[j + 1] - f[j]; j >= M/2 is outward to the right,
        # j < M/2 steps inward so its negative is the outward increase
        right = np.take(steps, np.arange(half, M - 1), axis=axis)
        left = -np.take(steps, np.arange(0, half), axis=axis)
        defect = max(defect, float(right.max(initial=0)), float(left.max(initial=0)))
    return defect


def radial_profile(f, radial_tol=RADIAL_TOLERANCE, check=True):
    """Extract the shell profile of a nonnegative radial non-increasing field.

    Parameters
    ----------
    f : field.ScalarField
    radial_tol : float
        Relative tolerance (to max |f|) for negativity, shell overlap and outward increases.
    check : bool
        Reject fields that are not nonnegative, radial and non-increasing.

    Returns
    -------
    RadialProfile

    Raises
    ------
    ValueError
        When `check` is set and the field fails one of the conditions.
    """
    r2 = f.grid.radius_squared().ravel()
    values = f.values.ravel()
    inside = r2 < f.grid.L**2
    r2, values = r2[inside], values[inside]

    order = np.argsort(r2, kind="stable")
    r2, values = r2[order], values[order]
    shells, starts, counts = np.unique(r2, return_index=True, return_counts=True)
    means = np.add.reduceat(values, starts) / counts
    maxima = np.maximum.reduceat(values, starts)
    minima = np.minimum.reduceat(values, starts)

    profile = RadialProfile(
        N=f.grid.N, radii=np.sqrt(shells), values=means, maxima=maxima, spread=maxima - minima
    )
    if check:
        scale = radial_tol * float(np.abs(f.values).max())
        if f.values.min() < -scale:
            raise ValueError(f"field is negative (min {f.values.min():.3e})")
        # every value of a shell dominates every value of the next shell out
        overlap = float(np.max(maxima[1:] - minima[:-1], initial=0))
        if overlap > scale:
            raise ValueError(f"field is not radial decreasing (shell overlap {overlap:.3e})")
        defect = monotonicity_defect(f)
        if defect > scale:
            raise ValueError(f"field increases outward (defect {defect:.3e})")
    return profile


def sphere_measure(N):
    """omega_(N-1) = 2 pi^(N/2) / Gamma(N/2), the measure of the unit sphere in R^N."""
    return 2 * np.pi ** (N / 2) / scipy.special.gamma(N / 2)


def radial_bound_coefficient(N):
    return float(np.sqrt(N / sphere_measure(N)))


def radial_bound_check(f, tol=1e-6, radial_tol=RADIAL_TOLERANCE):
    """Compare a radial decreasing field with its pointwise L^2 decay bound.

    Formula: f(r) <= (N / omega_(N-1))^(1/2) r^(-N/2) ||f||_2

    Parameters
    ----------
    f : field.ScalarField
        Nonnegative, radial, non-increasing.
    tol : float
        Margins may dip to -tol * ||f||_2.

    Returns
    -------
    dict
        {
            "coefficient": 0.564,
            "l2_norm": 2.4,
            "radii": [...],
            "bounds": [...],
            "values": [...],
            "margins": [...],
            "min_margin": 0.2,
            "passed": True,
        }
    """
    profile = radial_profile(f, radial_tol=radial_tol)
    outer = profile.radii > 0
    radii, values = profile.radii[outer], profile.maxima[outer]
    coefficient = radial_bound_coefficient(f.grid.N)
    l2_norm = fracops.lp_norm(f, 2)
    bounds = coefficient * radii ** (-f.grid.N / 2) * l2_norm
    margins = bounds - values
    min_margin = float(margins.min(initial=np.inf))
    passed = bool(min_margin >= -tol * l2_norm)
    if not passed:
        _logger.warning("(N=%s): Radial decay bound violated by %.3e", f.grid.N, -min_margin)
    return {
        "coefficient": coefficient,
        "l2_norm": l2_norm,
        "radii": radii,
        "bounds": bounds,
        "values": values,
        "margins": margins,
        "min_margin": min_margin,
        "passed": passed,
    }


def decay_margin(f):
    """Smallest radial decay margin relative to ||f||_2 (0 for a zero field)."""
    report = radial_bound_check(f)
    if report["l2_norm"] == 0:
        return 0.0
    return report["min_margin"] / report["l2_norm"]

