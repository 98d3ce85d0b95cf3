"""Run configuration: a JSON document, flag overrides and one aggregated validation pass."""
import copy
import dataclasses
import json
import logging

import numpy as np

from . import barrier, field, fracops, minimize

FORMATS = ("json", "csv")
DEFAULTS = {
    "problem": {"N": 2, "s": 0.5, "p": 2.0},
    "grid": {"M": 128, "L": 4.0},
    "solver": {
        "step_size": 1e-2,
        "symmetrize_every": 10,
        "max_iters": 20000,
        "tol_grad": 5e-7,
        "sigma_clip": [0.9, 1.1],
        "seed": 0,
    },
    "barrier": {"zeta": None},
    "output_dir": ".",
    "format": "json",
    "deterministic": True,
}

_logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """A configuration broke one or more rules; `violations` lists all of them."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration: " + "; ".join(self.violations))


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Validated configuration of one command."""

    problem: field.ProblemParams
    grid: field.BoxGrid
    solver: dict
    zeta: float
    output_dir: str
    format: str
    deterministic: bool

    def solver_config(self):
        return minimize.SolverConfig(params=self.problem, grid=self.grid, **self.solver)

    def to_dict(self):
        return {
            "problem": dataclasses.asdict(self.problem),
            "grid": {"M": self.grid.M, "L": self.grid.L},
            "solver": {**self.solver, "sigma_clip": list(self.solver["sigma_clip"])},
            "barrier": {"zeta": self.zeta},
            "output_dir": self.output_dir,
            "format": self.format,
            "deterministic": self.deterministic,
        }


def parse_override(assignment):
    """Split "section.key=value"; the value is a JSON literal, else a plain string.

    Returns
    -------
    tuple(list(str), object)
    """
    if "=" not in assignment:
        raise ConfigError([f"override {assignment!r} is not of the form key=value"])
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def _merge(document, violations):
    merged = copy.deepcopy(DEFAULTS)
    for key, value in document.items():
        if key not in DEFAULTS:
            violations.append(f"unknown key {key!r}")
        elif isinstance(DEFAULTS[key], dict):
            if not isinstance(value, dict):
                violations.append(f"section {key!r} should be an object")
                continue
            for inner_key, inner_value in value.items():
                if inner_key not in DEFAULTS[key]:
                    violations.append(f"unknown key {key}.{inner_key!r}")
                else:
                    merged[key][inner_key] = inner_value
        else:
            merged[key] = value
    return merged


def _apply_override(document, keys, value):
    target = document
    for key in keys[:-1]:
        target = target.setdefault(key, {})
        if not isinstance(target, dict):
            raise ConfigError([f"override path {'.'.join(keys)} crosses a non-object value"])
    target[keys[-1]] = value


def _number(violations, name, value, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        violations.append(f"{name}={value!r} is not a number")
        return None
    if kind is int and int(value) != value:
        violations.append(f"{name}={value!r} is not an integer")
        return None
    return kind(value)


def validate(document, command=None):
    """Check every rule and build a `RunConfig`.

    Parameters
    ----------
    document : dict
        Merged with `DEFAULTS`.
    command : str, optional
        "solve" additionally requires a subcritical exponent and a grid fine enough
        to normalize the seed barrier.

    Returns
    -------
    RunConfig

    Raises
    ------
    ConfigError
        Listing every violated rule.
    """
    violations = []
    merged = _merge(document, violations)
    problem, grid, solver = merged["problem"], merged["grid"], merged["solver"]

    N = _number(violations, "problem.N", problem["N"], int)
    s = _number(violations, "problem.s", problem["s"])
    p = _number(violations, "problem.p", problem["p"])
    M = _number(violations, "grid.M", grid["M"], int)
    L = _number(violations, "grid.L", grid["L"])

    if N is not None and N not in field.SUPPORTED_DIMENSIONS:
        violations.append(f"problem.N={N} is not one of {field.SUPPORTED_DIMENSIONS}")
    if s is not None and not 0 < s < 1:
        violations.append(f"problem.s={s} is outside (0, 1)")
    if p is not None and not p > 1:
        violations.append(f"problem.p={p} must be greater than 1")
    if M is not None and (M < field.MIN_POINTS or M & (M - 1)):
        violations.append(f"grid.M={M} is not a power of two >= {field.MIN_POINTS}")
    if L is not None and not (np.isfinite(L) and L > 0):
        violations.append(f"grid.L={L} must be positive and finite")

    step_size = _number(violations, "solver.step_size", solver["step_size"])
    tol_grad = _number(violations, "solver.tol_grad", solver["tol_grad"])
    max_iters = _number(violations, "solver.max_iters", solver["max_iters"], int)
    symmetrize_every = _number(violations, "solver.symmetrize_every", solver["symmetrize_every"], int)
    seed = _number(violations, "solver.seed", solver["seed"], int)
    if step_size is not None and not step_size > 0:
        violations.append(f"solver.step_size={step_size} must be positive")
    if tol_grad is not None and not tol_grad > 0:
        violations.append(f"solver.tol_grad={tol_grad} must be positive")
    if max_iters is not None and max_iters < 1:
        violations.append(f"solver.max_iters={max_iters} must be at least 1")
    if symmetrize_every is not None and symmetrize_every < 1:
        violations.append(f"solver.symmetrize_every={symmetrize_every} must be at least 1")
    if seed is not None and not 0 <= seed < 2**64:
        violations.append(f"solver.seed={seed} is not an unsigned 64-bit integer")

    clip = solver["sigma_clip"]
    if not (isinstance(clip, (list, tuple)) and len(clip) == 2):
        violations.append(f"solver.sigma_clip={clip!r} is not a pair")
        clip = None
    else:
        clip = [_number(violations, "solver.sigma_clip", c) for c in clip]
        if None in clip:
            clip = None
        elif not field.DILATION_CLIP[0] <= clip[0] < 1 < clip[1] <= field.DILATION_CLIP[1]:
            violations.append(f"solver.sigma_clip={clip} must straddle 1 inside {field.DILATION_CLIP}")

    zeta = merged["barrier"]["zeta"]
    if zeta is not None:
        zeta = _number(violations, "barrier.zeta", zeta)
        if zeta is not None and p is not None and p > 1 and not zeta > fracops.zeta_min(p):
            violations.append(f"barrier.zeta={zeta} is not above zeta_min({p})={fracops.zeta_min(p):g}")

    if merged["format"] not in FORMATS:
        violations.append(f"format={merged['format']!r} is not one of {FORMATS}")
    if not isinstance(merged["deterministic"], bool):
        violations.append(f"deterministic={merged['deterministic']!r} is not a boolean")
    if not isinstance(merged["output_dir"], str):
        violations.append(f"output_dir={merged['output_dir']!r} is not a path")

    params = None
    if not violations:
        params = field.ProblemParams(N=N, s=s, p=p)
        if command == "solve" and not params.subcritical:
            violations.append(
                f"problem.p={p} is not below p_crit={params.p_crit:g} for N={N}, s={s}"
            )
        elif command == "solve":
            unresolved = barrier.resolution_violation(p, field.make_grid(N, M, L), zeta=zeta)
            if unresolved is not None:
                violations.append(unresolved)
    if violations:
        raise ConfigError(violations)

    return RunConfig(
        problem=params,
        grid=field.make_grid(N, M, L),
        solver={
            "step_size": step_size,
            "symmetrize_every": symmetrize_every,
            "max_iters": max_iters,
            "tol_grad": tol_grad,
            "sigma_clip": tuple(clip),
            "seed": seed,
        },
        zeta=zeta,
        output_dir=merged["output_dir"],
        format=merged["format"],
        deterministic=merged["deterministic"],
    )


def load_config(path=None, overrides=(), command=None, **flags):
    """Read the JSON document at `path`, apply overrides and flags, then validate.

    Parameters
    ----------
    path : str, optional
        Config file; package defaults only when omitted.
    overrides : iterable(str)
        "section.key=value" assignments.
    command : str, optional
    **flags
        Top-level values (output_dir, format, deterministic) and "seed"; None skips.

    Returns
    -------
    RunConfig
    """
    document = {}
    if path is not None:
        try:
            with open(path) as stream:
                document = json.load(stream)
        except (OSError, json.JSONDecodeError) as error:
            raise ConfigError([f"cannot read config {path}: {error}"]) from error
        if not isinstance(document, dict):
            raise ConfigError([f"config {path} is not a JSON object"])

    for assignment in overrides:
        keys, value = parse_override(assignment)
        _apply_override(document, keys, value)
    for key, value in flags.items():
        if value is None:
            continue
        if key == "seed":
            _apply_override(document, ["solver", "seed"], value)
        else:
            document[key] = value

    config = validate(document, command=command)
    _logger.debug("Loaded configuration %s", json.dumps(config.to_dict(), sort_keys=True))
    return config
