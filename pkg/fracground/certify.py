"""Residual certificates for candidate solutions and an independent fixed-point solver."""
import dataclasses
import logging

import numpy as np

from . import field, fracops, rearrange

PETVIASHVILI_TOL = 1e-10
POHOZAEV_EPS = 1e-30
BUMP_WIDTH_FRACTIONS = (1 / 16, 1 / 8, 1 / 4)
BUMP_OFFSET_FRACTIONS = (-1 / 4, -1 / 8, 0.0, 1 / 8, 1 / 4)
THRESHOLDS = {
    "strong_residual": 1e-2,
    "weak_residual": 1e-6,
    "pohozaev_residual": 1e-2,
    "positivity": 1e-8,
    "monotonicity": 1e-6,
}

_logger = logging.getLogger(__name__)


class PetviashviliError(RuntimeError):
    """The stabilized fixed-point iteration broke down or did not converge."""


@dataclasses.dataclass(frozen=True)
class SolutionCertificate:
    """Residuals of a candidate solution of (-Delta)^s v + v = |v|^(p-1) v."""

    strong_residual: float
    weak_residuals: list
    pohozaev_residual: float
    positivity_min: float
    monotonicity_defect: float
    max_value: float

    def checks(self, thresholds=None):
        """Pass/fail per criterion.

        Returns
        -------
        dict
            {"strong_residual": True, "weak_residual": True, ...}
        """
        thresholds = {**THRESHOLDS, **(thresholds or {})}
        scale = max(self.max_value, 0.0)
        return {
            "strong_residual": self.strong_residual < thresholds["strong_residual"],
            "weak_residual": all(
                bump["defect"] < thresholds["weak_residual"] * bump["bound_scale"]
                for bump in self.weak_residuals
            ),
            "pohozaev_residual": self.pohozaev_residual < thresholds["pohozaev_residual"],
            "positivity": self.positivity_min >= -thresholds["positivity"] * scale,
            "monotonicity": self.monotonicity_defect <= thresholds["monotonicity"] * scale,
        }

    def passed(self, thresholds=None):
        return all(self.checks(thresholds).values())

    def to_dict(self, thresholds=None):
        return {
            "strong_residual": self.strong_residual,
            "weak_residuals": self.weak_residuals,
            "pohozaev_residual": self.pohozaev_residual,
            "positivity_min": self.positivity_min,
            "monotonicity_defect": self.monotonicity_defect,
            "max_value": self.max_value,
            "checks": self.checks(thresholds),
            "passed": self.passed(thresholds),
        }


def _resolvent_multiplier(grid, s):
    return 1 / (fracops.symbol(grid, s) + 1)


def petviashvili_step(u, params):
    """One stabilized iteration u -> gamma^(p/(p-1)) K(|u|^(p-1) u).

    Returns
    -------
    tuple(field.ScalarField, float)
        The next iterate and the stabilizing factor gamma.
    """
    p, s = params.p, params.s
    power = u.with_values(np.abs(u.values) ** (p - 1) * u.values)
    linear = fracops.inner(u, fracops.frac_laplacian(u, s)) + fracops.inner(u, u)
    nonlinear = fracops.inner(u, power)
    if not (linear > 0 and nonlinear > 0):
        raise PetviashviliError(
            f"stabilizing factor undefined: <u, (L + 1) u>={linear}, <u, |u|^(p-1) u>={nonlinear}"
        )
    gamma = linear / nonlinear
    image = fracops.apply_multiplier(power, _resolvent_multiplier(u.grid, s))
    return image.with_values(gamma ** (p / (p - 1)) * image.values), gamma


def petviashvili_solve(init, params, max_iters=1000, tol=PETVIASHVILI_TOL):
    """Solve (-Delta)^s u + u = |u|^(p-1) u by Petviashvili iteration.

    Parameters
    ----------
    init : field.ScalarField
        Nonnegative and nonzero.
    params : field.ProblemParams
    max_iters : int
    tol : float
        Stop when ||u_next - u|| / ||u_next|| falls below `tol`.

    Returns
    -------
    field.ScalarField

    Raises
    ------
    PetviashviliError
        A nonpositive stabilizing factor, or no convergence within `max_iters`.
    """
    if init.values.min() < 0 or not np.any(init.values):
        raise ValueError("Petviashvili iteration needs a nonnegative, nonzero start")
    u = init
    change = np.inf
    for iteration in range(1, max_iters + 1):
        following, gamma = petviashvili_step(u, params)
        change = np.linalg.norm(following.values - u.values) / np.linalg.norm(following.values)
        u = following
        _logger.debug("(p=%s): Petviashvili %s gamma=%.15g change=%.3e", params.p, iteration, gamma, change)
        if change < tol:
            _logger.info("(p=%s): Petviashvili converged after %s iterations", params.p, iteration)
            return u
    raise PetviashviliError(
        f"no convergence after {max_iters} iterations (last relative change {change:.3e})"
    )


def recenter(f):
    """Roll the grid so the maximum of f sits at the origin cell."""
    peak = np.unravel_index(np.argmax(f.values), f.grid.shape)
    shift = tuple(f.grid.M // 2 - index for index in peak)
    return f.with_values(np.roll(f.values, shift=shift, axis=tuple(range(f.grid.N))))


def relative_l2_distance(a, b):
    """||a - b|| / ||b|| on a common grid."""
    if a.grid != b.grid:
        raise ValueError(f"fields live on different grids: {a.grid} and {b.grid}")
    return float(np.linalg.norm(a.values - b.values) / np.linalg.norm(b.values))


def strong_residual(v, params):
    """||(-Delta)^s v + v - |v|^(p-1) v|| / ||v||, and 0 for a zero field."""
    values = v.values
    defect = fracops.frac_laplacian(v, params.s).values + values - np.abs(values) ** (params.p - 1) * values
    norm = np.linalg.norm(values)
    if norm == 0:
        return float(np.linalg.norm(defect))
    return float(np.linalg.norm(defect) / norm)


def default_bumps(grid):
    """Gaussian test fields of widths L/16, L/8, L/4 at five offsets along the first axis."""
    bumps = []
    for width_fraction in BUMP_WIDTH_FRACTIONS:
        for offset_fraction in BUMP_OFFSET_FRACTIONS:
            center = np.zeros(grid.N)
            center[0] = offset_fraction * grid.L
            bump = field.gaussian(grid, width=width_fraction * grid.L, center=center)
            bumps.append({"width": width_fraction * grid.L, "offset": offset_fraction * grid.L, "field": bump})
    return bumps


def weak_residual(v, params, bumps=None):
    """Weak-form defects |B(v, phi) + <v, phi> - <|v|^(p-1) v, phi>| per test bump.

    B is the spectral pairing <(-Delta)^(s/2) v, (-Delta)^(s/2) phi>.

    Parameters
    ----------
    v : field.ScalarField
    params : field.ProblemParams
    bumps : list(dict), optional
        Dicts with a "field" entry; `default_bumps(v.grid)` when omitted.

    Returns
    -------
    list(dict)
        [{"width": 0.6, "offset": -2.5, "defect": 1e-12, "bound_scale": 40.1}, ...]
    """
    bumps = default_bumps(v.grid) if bumps is None else bumps
    s, p = params.s, params.p
    V_hat = field.forward_transform(v)
    weights = fracops.symbol(v.grid, s) * v.grid.frequency_spacing**v.grid.N
    power = v.with_values(np.abs(v.values) ** (p - 1) * v.values)
    v_norm = fracops.hs_norm(v, s)

    rows = []
    for bump in bumps:
        phi = bump["field"]
        pairing = float(np.sum(weights * (V_hat.coeffs * np.conj(field.forward_transform(phi).coeffs)).real))
        defect = abs(pairing + fracops.inner(v, phi) - fracops.inner(power, phi))
        rows.append(
            {
                "width": bump.get("width"),
                "offset": bump.get("offset"),
                "defect": defect,
                "bound_scale": fracops.hs_norm(phi, s) * v_norm,
            }
        )
    return rows


def pohozaev_residual(v, params, eps=POHOZAEV_EPS):
    """|(N - 2s)/2 T(v) - N V(v)| / max(T(v), |N V(v)|, eps)."""
    N, s = v.grid.N, params.s
    T = fracops.seminorm_squared(v, s)
    V = fracops.constraint_V(v, params.p)
    return abs((N - 2 * s) / 2 * T - N * V) / max(T, abs(N * V), eps)


def certify_solution(v, params, bumps=None):
    """Compute every residual of a candidate solution.

    Parameters
    ----------
    v : field.ScalarField
    params : field.ProblemParams
    bumps : list(dict), optional

    Returns
    -------
    SolutionCertificate
    """
    certificate = SolutionCertificate(
        strong_residual=strong_residual(v, params),
        weak_residuals=weak_residual(v, params, bumps),
        pohozaev_residual=pohozaev_residual(v, params),
        positivity_min=float(v.values.min()),
        monotonicity_defect=rearrange.monotonicity_defect(v),
        max_value=float(v.values.max()),
    )
    _logger.info(
        "(N=%s, s=%s, p=%s): strong=%.3e pohozaev=%.3e passed=%s",
        v.grid.N,
        params.s,
        params.p,
        certificate.strong_residual,
        certificate.pohozaev_residual,
        certificate.passed(),
    )
    return certificate


def ground_state_oracle(grid, params, width=None, max_iters=1000):
    """Recentered Petviashvili solution from a Gaussian start on `grid`."""
    width = grid.L / 8 if width is None else width
    return recenter(petviashvili_solve(field.gaussian(grid, width=width), params, max_iters=max_iters))
