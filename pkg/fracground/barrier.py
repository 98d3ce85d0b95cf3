"""The plateau-collar competitor w_R and the normalization that makes it feasible.

w_R(x) = zeta            for |x| <= R
       = zeta (R+1-|x|)  for R < |x| < R + 1
       = 0               beyond

A large enough plateau has V(w_R) > 0, and the dilation x -> w_R(x / sigma) scales V
by sigma^N, so sigma = V^(-1/N) lands on the constraint V = 1.
"""
import dataclasses
import logging

import numpy as np
import scipy.optimize

from . import field, fracops

NORMALIZATION_TOL = 1e-10

_logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class BarrierSpec:
    """Plateau height `zeta`, plateau radius `R` and optional dilation `sigma`."""

    zeta: float
    R: float
    sigma: float = None

    def __post_init__(self):
        if not self.zeta > 0:
            raise ValueError(f"plateau height zeta={self.zeta} must be positive")
        if not self.R > 0:
            raise ValueError(f"plateau radius R={self.R} must be positive")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"dilation sigma={self.sigma} must be positive")

    @property
    def support_radius(self):
        return (self.R + 1) * (1.0 if self.sigma is None else self.sigma)


def barrier_profile(r, zeta, R):
    """Radial profile of w_R at radii `r`."""
    return zeta * np.clip(R + 1 - np.asarray(r, dtype=float), 0.0, 1.0)


def make_barrier(spec, grid):
    """Sample w_R(x / sigma) on the grid.

    Parameters
    ----------
    spec : BarrierSpec
    grid : field.BoxGrid

    Returns
    -------
    field.ScalarField

    Raises
    ------
    ValueError
        When the support radius sigma (R + 1) reaches the box half-width.
    """
    if not spec.support_radius < grid.L:
        raise ValueError(
            f"barrier support radius {spec.support_radius} does not fit in the box half-width {grid.L}"
        )
    sigma = 1.0 if spec.sigma is None else spec.sigma
    r = np.sqrt(grid.radius_squared()) / sigma
    return field.ScalarField(grid=grid, values=barrier_profile(r, spec.zeta, spec.R))


def default_R_list(grid):
    """Geometric scan 1, 2, 4, ... of plateau radii whose support fits in the box."""
    radii = []
    R = 1.0
    while R + 1 < grid.L:
        radii.append(R)
        R *= 2
    return radii


def _refined(grid):
    return field.make_grid(grid.N, 2 * grid.M, grid.L)


def barrier_seminorm_scan(zeta, R_list, grid, s, refine=True):
    """Seminorm and H^s norm of w_R for every plateau radius.

    Parameters
    ----------
    zeta : float
    R_list : list(float)
    grid : field.BoxGrid
    s : float
    refine : bool
        Recompute the seminorm after one doubling of M and report the relative change.

    Returns
    -------
    list(dict)
        [
            {
                "R": 1.0,
                "seminorm2": 6.1,
                "l2norm2": 5.76,
                "hs_norm2": 11.9,
                "seminorm2_refined": 6.2,
                "refinement_change": 0.01,
            },
            ...
        ]
    """
    for R in R_list:
        if not R + 1 < grid.L:
            raise ValueError(f"plateau radius R={R} leaves no room for the collar in half-width {grid.L}")

    rows = []
    for R in R_list:
        spec = BarrierSpec(zeta=zeta, R=R)
        w = make_barrier(spec, grid)
        seminorm2 = fracops.seminorm_squared(w, s)
        l2norm2 = fracops.lp_norm(w, 2) ** 2
        row = {
            "R": float(R),
            "seminorm2": seminorm2,
            "l2norm2": l2norm2,
            "hs_norm2": seminorm2 + l2norm2,
        }
        if refine:
            refined = fracops.seminorm_squared(make_barrier(spec, _refined(grid)), s)
            row["seminorm2_refined"] = refined
            row["refinement_change"] = abs(refined - seminorm2) / seminorm2
        _logger.debug("(zeta=%s, R=%s, s=%s): Barrier seminorm squared %s", zeta, R, s, seminorm2)
        rows.append(row)
    return rows


def normalize_barrier(p, zeta, R, grid, tol=NORMALIZATION_TOL):
    """Dilation sigma such that V(w_R(x / sigma)) = 1 on the grid.

    The dilation estimate V(w_R)^(-1/N) is refined with Brent's method on the
    sampled constraint, so the result is feasible for the discrete problem.

    Parameters
    ----------
    p : float
    zeta : float
    R : float
    grid : field.BoxGrid
    tol : float
        Required |V - 1|.

    Returns
    -------
    dict
        {"sigma": 0.23, "sigma_estimate": 0.22, "V": 1.0}
    """
    N = grid.N
    V_R = fracops.constraint_V(make_barrier(BarrierSpec(zeta=zeta, R=R), grid), p)
    if not V_R > 0:
        raise ValueError(f"V(w_R)={V_R} is not positive for R={R}, zeta={zeta}")
    estimate = V_R ** (-1 / N)

    def excess(sigma):
        return fracops.constraint_V(make_barrier(BarrierSpec(zeta=zeta, R=R, sigma=sigma), grid), p) - 1

    sigma_max = (1 - 1e-9) * grid.L / (R + 1)
    lower, upper = estimate / 4, min(4 * estimate, sigma_max)
    if excess(upper) <= 0:
        raise ValueError(f"w_R with R={R} cannot reach V = 1 inside half-width {grid.L}")
    if excess(lower) >= 0:
        raise ValueError(f"grid spacing {grid.h} is too coarse to normalize w_R with R={R}")
    sigma = scipy.optimize.brentq(excess, lower, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    V = excess(sigma) + 1
    if abs(V - 1) > tol:
        _logger.warning("(R=%s, zeta=%s): Normalized barrier has V=%.12f", R, zeta, V)
    return {"sigma": float(sigma), "sigma_estimate": float(estimate), "V": float(V)}


def barrier_constraint_scan(p, zeta=None, grid=None, R_list=None, tol=NORMALIZATION_TOL):
    """Find the smallest scanned plateau radius with V(w_R) > 0 and normalize it.

    Parameters
    ----------
    p : float
    zeta : float, optional
        Plateau height, above zeta_min(p); 2 zeta_min(p) when omitted.
    grid : field.BoxGrid
        Grid the normalized barrier is sampled on.
    R_list : list(float), optional
        Scanned radii; `default_R_list(grid)` when omitted.
    tol : float

    Returns
    -------
    dict
        {
            "zeta": 3.0,
            "R_star": 1.0,
            "sigma_star": 0.23,
            "sigma_estimate": 0.22,
            "V": 1.0,
            "rows": [{"R": 1.0, "V": 19.2, "V_per_volume": ...}, ...],
            "fit": {"C1": 20.1, "C2": 0.9, "positive_leading": True},
        }
    """
    threshold = fracops.zeta_min(p)
    zeta = 2 * threshold if zeta is None else zeta
    if not zeta > threshold:
        raise ValueError(f"plateau height zeta={zeta} is not above zeta_min({p})={threshold}")
    R_list = default_R_list(grid) if R_list is None else list(R_list)

    rows = []
    for R in R_list:
        V = fracops.constraint_V(make_barrier(BarrierSpec(zeta=zeta, R=R), grid), p)
        rows.append({"R": float(R), "V": V, "V_per_volume": V / R**grid.N})
    positive = [row["R"] for row in rows if row["V"] > 0]
    if not positive:
        raise ValueError(f"no scanned plateau radius gives V > 0 inside half-width {grid.L}")
    R_star = positive[0]

    normalization = normalize_barrier(p, zeta, R_star, grid, tol=tol)
    _logger.info(
        "(p=%s, zeta=%s): R*=%s, sigma*=%s, V=%.12f",
        p,
        zeta,
        R_star,
        normalization["sigma"],
        normalization["V"],
    )
    return {
        "zeta": float(zeta),
        "R_star": R_star,
        "sigma_star": normalization["sigma"],
        "sigma_estimate": normalization["sigma_estimate"],
        "V": normalization["V"],
        "rows": rows,
        "fit": growth_fit(rows, grid.N),
    }


def growth_fit(rows, N):
    """Least-squares fit V(w_R) ~ C1 R^N - C2 R^(N-1) over the scan rows."""
    if len(rows) < 2:
        _logger.warning("Growth fit needs two scanned radii, got %s", len(rows))
        return {"C1": None, "C2": None, "positive_leading": None}
    R = np.array([row["R"] for row in rows])
    V = np.array([row["V"] for row in rows])
    design = np.stack([R**N, -(R ** (N - 1))], axis=1)
    (C1, C2), *_ = np.linalg.lstsq(design, V, rcond=None)
    return {"C1": float(C1), "C2": float(C2), "positive_leading": bool(C1 > 0)}


def resolution_violation(p, grid, zeta=None):
    """Why `grid` cannot carry the normalized seed barrier, or None when it can.

    The seed is w_R(x / sigma*) sampled on the grid; once the spacing h is comparable
    to the dilated support (R + 1) sigma*, the sampled constraint can no longer be
    brought to V = 1.
    """
    try:
        seed = barrier_constraint_scan(p, zeta=zeta, grid=grid)
    except ValueError as error:
        return f"grid.h={grid.h:g} cannot carry the normalized barrier: {error}"
    _logger.debug(
        "(p=%s): Seed support %.4g spans %.1f cells",
        p,
        (seed["R_star"] + 1) * seed["sigma_star"],
        (seed["R_star"] + 1) * seed["sigma_star"] / grid.h,
    )
    return None
