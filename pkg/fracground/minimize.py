"""Minimize T(u) = [u]^2 over {V(u) = 1} and turn the minimizer into a solution.

Every accepted iterate satisfies V = 1: a step along the constrained gradient

    d = (-Delta)^s u - mu g(u),   mu = <(-Delta)^s u, g(u)> / <g(u), g(u)>

is followed by dilations x -> u(x / sigma) with sigma = V^(-1/N), and every few
iterations u is replaced by its symmetric decreasing rearrangement when that does not
raise T. At a stationary point 2 (-Delta)^s u = theta g(u), and the scale change
v(x) = u(x / lambda) with lambda = (theta / 2)^(1 / 2s) solves

    (-Delta)^s v + v = |v|^(p-1) v.
"""
import dataclasses
import logging

import numpy as np
import scipy.optimize

from . import barrier, field, fracops, rearrange

CONSTRAINT_TOL = 1e-6
PROJECTION_TOL = 1e-10
PROJECTION_PASSES = 8
MAX_HALVINGS = 20
MAX_ESCAPES = 50
STEP_GROWTH = 1.25
MONOTONE_SLACK = 1e-12
STALL_STEP = 1e-10
STALL_WINDOW = 200
MULTIPLIER_AGREEMENT = 0.05
RESCALE_MODES = ("relabel", "resample")
DEFAULT_PROBE_SIGMAS = tuple(np.geomspace(1.0, 1e-8, 17))

_logger = logging.getLogger(__name__)


class SupercriticalError(ValueError):
    """The exponent is at or above the critical value, so no minimizer exists."""


class DivergenceError(RuntimeError):
    """T kept increasing through the allowed number of step halvings."""


class ConstraintEscapeError(RuntimeError):
    """The constraint could not be restored within the dilation clip."""


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    """Parameters of the constrained gradient iteration."""

    params: field.ProblemParams
    grid: field.BoxGrid
    step_size: float = 1e-2
    symmetrize_every: int = 10
    max_iters: int = 20000
    tol_grad: float = 5e-7
    sigma_clip: tuple = (0.9, 1.1)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sigma_clip", tuple(float(c) for c in self.sigma_clip))
        if self.params.N != self.grid.N:
            raise ValueError(f"problem dimension {self.params.N} does not match grid dimension {self.grid.N}")
        if not self.step_size > 0:
            raise ValueError(f"step_size={self.step_size} must be positive")
        if not self.tol_grad > 0:
            raise ValueError(f"tol_grad={self.tol_grad} must be positive")
        if self.max_iters < 1:
            raise ValueError(f"max_iters={self.max_iters} must be at least 1")
        if self.symmetrize_every < 1:
            raise ValueError(f"symmetrize_every={self.symmetrize_every} must be at least 1")
        low, high = self.sigma_clip
        if not (field.DILATION_CLIP[0] <= low < 1 < high <= field.DILATION_CLIP[1]):
            raise ValueError(f"sigma_clip={self.sigma_clip} must straddle 1 inside {field.DILATION_CLIP}")


@dataclasses.dataclass(eq=False)
class MinimizerReport:
    """Outcome of `minimize_constrained`.

    `theta` is the dilation multiplier (N - 2s) T / N (None when N <= 2s),
    `theta_pairing` the Euler-Lagrange pairing 2 T / <g(u), u>, `lambda_` the scale
    factor derived from `theta_pairing` and `minimizer` the final iterate. `stalled` marks
    a run stopped because the step collapsed while T stood still; it is never converged.
    """

    T: float
    V: float
    converged: bool
    theta: float = None
    theta_pairing: float = None
    lambda_: float = None
    iterations: int = 0
    grad_norm: float = None
    stalled: bool = False
    boundary_ratio: float = None
    iterates: list = dataclasses.field(default_factory=list)
    a_priori: list = dataclasses.field(default_factory=list)
    symmetrizations: dict = dataclasses.field(default_factory=dict)
    minimizer: field.ScalarField = None

    def to_dict(self):
        """JSON-ready view without the field samples."""
        return {
            "T": self.T,
            "V": self.V,
            "converged": self.converged,
            "theta": self.theta,
            "theta_pairing": self.theta_pairing,
            "lambda": self.lambda_,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "stalled": self.stalled,
            "boundary_ratio": self.boundary_ratio,
            "iterates": self.iterates,
            "a_priori": self.a_priori,
            "symmetrizations": self.symmetrizations,
        }


def _check_subcritical(params):
    if not params.subcritical:
        raise SupercriticalError(
            f"p={params.p} is not below p_crit={params.p_crit:g} for N={params.N}, s={params.s}; "
            "no minimizer exists, use dilation_probe to examine the collapse"
        )


def _seminorm_and_operator(u, multiplier):
    """T(u) and (-Delta)^s u from a single forward transform."""
    F = field.forward_transform(u)
    T = float(np.sum(multiplier * np.abs(F.coeffs) ** 2) * u.grid.frequency_spacing**u.grid.N)
    Lu = field.inverse_transform(field.SpectralField(grid=u.grid, coeffs=F.coeffs * multiplier))
    return T, Lu


def project_constraint(u, p, sigma_clip=(0.9, 1.1), tol=PROJECTION_TOL, passes=PROJECTION_PASSES):
    """Dilate `u` back onto V = 1.

    Parameters
    ----------
    u : field.ScalarField
    p : float
    sigma_clip : tuple(float, float)
    tol : float
    passes : int

    Returns
    -------
    tuple(field.ScalarField, float, bool)
        The projected field, its V and whether the first pass needed a dilation
        outside the clip.
    """
    N = u.grid.N
    escaped = False
    V = fracops.constraint_V(u, p)
    for index in range(passes):
        if abs(V - 1) <= tol:
            break
        if not V > 0:
            return u, V, True
        sigma = V ** (-1 / N)
        clipped = float(np.clip(sigma, *sigma_clip))
        if index == 0 and clipped != sigma:
            escaped = True
        if abs(clipped - 1) < 1e-14:
            break
        u = field.resample_dilate(u, clipped, warn=False)
        V = fracops.constraint_V(u, p)
        _logger.debug("(p=%s): Projection pass %s with sigma %s gives V=%.14f", p, index, clipped, V)
    return u, V, escaped


def _a_priori(iteration, u, T, params, growth):
    """Step-2 bound structure for one accepted iterate."""
    l2_norm = fracops.lp_norm(u, 2)
    record = {
        "iteration": iteration,
        "l2_norm": l2_norm,
        "l2_ratio": l2_norm / (1 + np.sqrt(T)),
        "decay_margin": None,
    }
    if growth is None:
        record.update(
            {"critical_norm": None, "critical_ratio": None, "step2_bound": None, "step2_holds": None}
        )
        return record
    q = params.two_star_s
    critical_norm = fracops.lp_norm(u, q)
    # ||u||_2^2 <= 4 (C ||u||_q^q - 1) on V = 1, up to the constraint tolerance
    bound = 4 * (growth * critical_norm**q - 1)
    record.update(
        {
            "critical_norm": critical_norm,
            "critical_ratio": critical_norm / (1 + np.sqrt(T)),
            "step2_bound": bound,
            "step2_holds": bool(l2_norm**2 <= bound + 4 * CONSTRAINT_TOL),
        }
    )
    return record


def minimize_constrained(init, cfg):
    """Constrained gradient descent of T on {V = 1} with symmetrization.

    Parameters
    ----------
    init : field.ScalarField
        Feasible start, V(init) = 1 within 1e-6 (a normalized barrier).
    cfg : SolverConfig

    Returns
    -------
    MinimizerReport

    Raises
    ------
    SupercriticalError
        p is not below p_crit.
    DivergenceError
        T increased through more than 20 consecutive step halvings.
    ConstraintEscapeError
        More than 50 consecutive trial steps needed a dilation outside the clip.

    Notes
    -----
    The run stops unconverged, with `stalled` set, once the step has fallen below
    1e-10 and T has not moved over the last 200 iterations.
    """
    params, grid = cfg.params, cfg.grid
    N, s, p = params.N, params.s, params.p
    _check_subcritical(params)
    if init.grid != grid:
        raise ValueError(f"initial field lives on {init.grid}, solver grid is {grid}")
    V = fracops.constraint_V(init, p)
    if abs(V - 1) > CONSTRAINT_TOL:
        raise ValueError(f"initial field has V={V}, should be 1 within {CONSTRAINT_TOL}")

    nonlinearity = fracops.Nonlinearity(p)
    multiplier = fracops.symbol(grid, s)
    growth = fracops.growth_constant(p, N, s) if N > 2 * s else None
    context = f"N={N}, s={s}, p={p}"

    u = init
    T, Lu = _seminorm_and_operator(u, multiplier)
    step = cfg.step_size
    iterates = [{"iteration": 0, "T": T, "V": V, "step": step, "grad_norm": None, "symmetrized": False}]
    a_priori = [_a_priori(0, u, T, params, growth)]
    symmetrizations = {"accepted": 0, "rejected": 0}
    converged = False
    stalled = False
    grad_norm = None
    iteration = 0

    while iteration < cfg.max_iters:
        gu = nonlinearity.g(u.values)
        g_norm2 = float(np.sum(gu**2))
        mu = float(np.sum(Lu.values * gu)) / g_norm2 if g_norm2 > 0 else 0.0
        direction = Lu.values - mu * gu
        grad_norm = float(np.linalg.norm(direction) / np.linalg.norm(Lu.values))
        if grad_norm < cfg.tol_grad:
            converged = True
            break

        halvings = 0
        escapes = 0
        while True:
            trial = u.with_values(u.values - step * direction)
            trial, V_trial, escaped = project_constraint(trial, p, cfg.sigma_clip)
            if escaped or abs(V_trial - 1) > CONSTRAINT_TOL:
                escapes += 1
                step /= 2
                if escapes > MAX_ESCAPES:
                    raise ConstraintEscapeError(
                        f"({context}): constraint escaped the clip {cfg.sigma_clip} "
                        f"for {escapes} consecutive steps at iteration {iteration}"
                    )
                continue
            T_trial, Lu_trial = _seminorm_and_operator(trial, multiplier)
            if T_trial <= T * (1 + MONOTONE_SLACK):
                break
            halvings += 1
            step /= 2
            if halvings > MAX_HALVINGS:
                raise DivergenceError(
                    f"({context}): T increased through {halvings} consecutive halvings "
                    f"at iteration {iteration}"
                )

        iteration += 1
        u, T, V, Lu = trial, T_trial, V_trial, Lu_trial
        step *= STEP_GROWTH

        symmetrized = False
        if iteration % cfg.symmetrize_every == 0:
            rearranged = rearrange.rearrange_decreasing(u)
            T_rearranged, Lu_rearranged = _seminorm_and_operator(rearranged, multiplier)
            if T_rearranged <= T:
                u, T, Lu = rearranged, T_rearranged, Lu_rearranged
                V = fracops.constraint_V(u, p)
                symmetrized = True
                symmetrizations["accepted"] += 1
            else:
                symmetrizations["rejected"] += 1
                _logger.debug(
                    "(%s): Rearrangement rejected at iteration %s, T %.15g -> %.15g",
                    context,
                    iteration,
                    T,
                    T_rearranged,
                )

        _logger.debug(
            "(%s): iteration %s T=%.15g V=%.12f step=%.3e grad=%.3e",
            context,
            iteration,
            T,
            V,
            step,
            grad_norm,
        )
        iterates.append(
            {
                "iteration": iteration,
                "T": T,
                "V": V,
                "step": step,
                "grad_norm": grad_norm,
                "symmetrized": symmetrized,
            }
        )
        record = _a_priori(iteration, u, T, params, growth)
        if symmetrized:
            record["decay_margin"] = rearrange.decay_margin(u)
        a_priori.append(record)

        if step < STALL_STEP and iteration >= STALL_WINDOW:
            if iterates[-1 - STALL_WINDOW]["T"] - T <= MONOTONE_SLACK * T:
                stalled = True
                _logger.warning(
                    "(%s): Stalled at iteration %s with step %.3e, gradient norm %.3e "
                    "and T flat over %s iterations",
                    context,
                    iteration,
                    step,
                    grad_norm,
                    STALL_WINDOW,
                )
                break

    if converged:
        _logger.info("(%s): Converged after %s iterations with T=%.12g", context, iteration, T)
    elif not stalled:
        _logger.warning(
            "(%s): Stopped after %s iterations with gradient norm %.3e", context, iteration, grad_norm
        )
    ratio = field.boundary_ratio(u)
    if ratio > field.BOUNDARY_TOLERANCE:
        _logger.warning(
            "(%s): Minimizer boundary ratio %.3e is above %g; projections read its edge values",
            context,
            ratio,
            field.BOUNDARY_TOLERANCE,
        )

    theta = (N - 2 * s) * T / N if N > 2 * s else None
    theta_pairing = pairing_multiplier(u, params)
    return MinimizerReport(
        T=T,
        V=V,
        converged=converged,
        theta=theta,
        theta_pairing=theta_pairing,
        lambda_=rescale_factor(theta_pairing, s),
        iterations=iteration,
        grad_norm=grad_norm,
        stalled=stalled,
        boundary_ratio=ratio,
        iterates=iterates,
        a_priori=a_priori,
        symmetrizations=symmetrizations,
        minimizer=u,
    )


def pairing_multiplier(u, params):
    """theta_alt = 2 T(u) / <g(u), u>."""
    pairing = fracops.inner(u.with_values(fracops.g_value(u.values, params.p)), u)
    if not pairing > 0:
        raise ValueError(f"pairing <g(u), u>={pairing} is not positive")
    return 2 * fracops.seminorm_squared(u, params.s) / pairing


def lagrange_multiplier(report, params):
    """Multiplier theta = (N - 2s) T / N of a converged minimization.

    When the report carries the minimizer, theta is cross-checked against the pairing
    multiplier 2 T / <g(u), u>; a relative gap above 5% is logged.

    Parameters
    ----------
    report : MinimizerReport
    params : field.ProblemParams

    Returns
    -------
    float
    """
    N, s = params.N, params.s
    if not N > 2 * s:
        raise ValueError(f"multiplier (N - 2s) T / N degenerates for N={N} <= 2s={2 * s}")
    if not report.converged:
        raise ValueError("multiplier of an unconverged minimization is meaningless")
    theta = (N - 2 * s) * report.T / N
    if report.minimizer is not None:
        theta_pairing = pairing_multiplier(report.minimizer, params)
        gap = abs(theta - theta_pairing) / abs(theta_pairing)
        if gap > MULTIPLIER_AGREEMENT:
            _logger.warning(
                "(N=%s, s=%s): theta=%s and theta_pairing=%s differ by %.1f%%",
                N,
                s,
                theta,
                theta_pairing,
                100 * gap,
            )
        else:
            _logger.info("(N=%s, s=%s): theta=%s, theta_pairing=%s", N, s, theta, theta_pairing)
    return theta


def rescale_factor(theta, s):
    """lambda = (theta / 2)^(1 / 2s)."""
    if not theta > 0:
        raise ValueError(f"multiplier theta={theta} must be positive")
    return (theta / 2) ** (1 / (2 * s))


def rescale_to_solution(u, theta, params, mode="relabel"):
    """Scale change v(x) = u(x / lambda) with lambda = (theta / 2)^(1 / 2s).

    Parameters
    ----------
    u : field.ScalarField
    theta : float
        Multiplier of 2 (-Delta)^s u = theta g(u).
    params : field.ProblemParams
    mode : {"relabel", "resample"}
        "relabel" keeps the samples on a box of half-width lambda L (exact);
        "resample" interpolates onto the original grid in clipped stages.

    Returns
    -------
    field.ScalarField
    """
    if mode not in RESCALE_MODES:
        raise ValueError(f"rescale mode {mode!r} is not one of {RESCALE_MODES}")
    scale = rescale_factor(theta, params.s)
    _logger.info("(N=%s, s=%s): Rescaling by lambda=%s (%s)", params.N, params.s, scale, mode)
    if mode == "relabel":
        return field.relabel_dilate(u, scale)
    return field.staged_dilate(u, scale)


def renormalizing_amplitude(A1, A2, p):
    """Positive root a of a^(p+1) A1 - a^2 A2 = 1 above (A2 / A1)^(1/(p-1))."""
    if not A1 > 0:
        raise ValueError(f"integral of G1 must be positive, got {A1}")

    def excess(a):
        return a ** (p + 1) * A1 - a**2 * A2 - 1

    lower = (A2 / A1) ** (1 / (p - 1)) if A2 > 0 else 0.0
    upper = max(2 * lower, A1 ** (-1 / (p + 1)))
    while excess(upper) <= 0:
        upper *= 2
    return scipy.optimize.brentq(excess, lower, upper, xtol=np.finfo(float).tiny, rtol=4 * np.finfo(float).eps)


def dilation_probe(params, feasible, sigma_list=DEFAULT_PROBE_SIGMAS, mode="relabel"):
    """Record T along V-renormalized dilates a f(x / sigma) of a feasible field.

    For p above p_crit the recorded T collapse toward 0 as sigma shrinks; below it
    they stay above the minimum.

    Parameters
    ----------
    params : field.ProblemParams
        Any p > 1, supercritical included.
    feasible : field.ScalarField
        V(feasible) = 1 within 1e-6.
    sigma_list : iterable(float)
    mode : {"relabel", "resample"}

    Returns
    -------
    list(dict)
        [{"sigma": 1.0, "amplitude": 1.0, "T": 6.3, "V": 1.0}, ...]
    """
    p = params.p
    if mode not in RESCALE_MODES:
        raise ValueError(f"probe mode {mode!r} is not one of {RESCALE_MODES}")
    V = fracops.constraint_V(feasible, p)
    if abs(V - 1) > CONSTRAINT_TOL:
        raise ValueError(f"probe field has V={V}, should be 1 within {CONSTRAINT_TOL}")

    nonlinearity = fracops.Nonlinearity(p)
    rows = []
    for sigma in sigma_list:
        if mode == "relabel":
            dilated = field.relabel_dilate(feasible, sigma)
        else:
            dilated = field.staged_dilate(feasible, sigma)
            ratio = field.boundary_ratio(dilated)
            if ratio > field.BOUNDARY_TOLERANCE:
                raise ValueError(f"sigma={sigma} pushes the support to the box boundary (ratio {ratio:.3e})")
        A1 = field.integrate(dilated.with_values(nonlinearity.G1(dilated.values)))
        A2 = field.integrate(dilated.with_values(nonlinearity.G2(dilated.values)))
        amplitude = renormalizing_amplitude(A1, A2, p)
        T = amplitude**2 * fracops.seminorm_squared(dilated, params.s)
        rows.append(
            {
                "sigma": float(sigma),
                "amplitude": float(amplitude),
                "T": float(T),
                "V": float(amplitude ** (p + 1) * A1 - amplitude**2 * A2),
            }
        )
        _logger.debug("(p=%s): Probe sigma=%.3e amplitude=%.6g T=%.6g", p, sigma, amplitude, T)
    return rows


def probe_summary(rows):
    """Collapse ratio and monotonicity of a probe table."""
    T = np.array([row["T"] for row in rows])
    return {
        "T_first": float(T[0]),
        "T_last": float(T[-1]),
        "T_min": float(T.min()),
        "collapse_ratio": float(T[0] / T[-1]),
        "monotone_decreasing": bool(np.all(np.diff(T) < 0)),
    }


def find_ground_state(cfg, zeta=None, R=None, rescale_mode="relabel"):
    """Barrier seed, constrained minimization and rescale, end to end.

    Parameters
    ----------
    cfg : SolverConfig
    zeta : float, optional
        Barrier plateau height; 2 zeta_min(p) when omitted.
    R : float, optional
        Barrier plateau radius; the smallest feasible scanned radius when omitted.
    rescale_mode : {"relabel", "resample"}

    Returns
    -------
    tuple(MinimizerReport, field.ScalarField, dict)
        Report, candidate solution v and the barrier normalization used.
    """
    params, grid = cfg.params, cfg.grid
    _check_subcritical(params)
    zeta = 2 * fracops.zeta_min(params.p) if zeta is None else zeta
    if R is None:
        seed = barrier.barrier_constraint_scan(params.p, zeta=zeta, grid=grid)
        R, sigma = seed["R_star"], seed["sigma_star"]
    else:
        seed = barrier.normalize_barrier(params.p, zeta, R, grid)
        seed.update({"zeta": zeta, "R_star": R, "sigma_star": seed["sigma"]})
        sigma = seed["sigma"]
    init = barrier.make_barrier(barrier.BarrierSpec(zeta=zeta, R=R, sigma=sigma), grid)

    report = minimize_constrained(init, cfg)
    if report.converged and params.N > 2 * params.s:
        lagrange_multiplier(report, params)
    solution = rescale_to_solution(report.minimizer, report.theta_pairing, params, mode=rescale_mode)
    return report, solution, seed
