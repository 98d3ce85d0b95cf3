"""Command-line entry point: `fracground {solve,verify,barrier,inspect}`.

Exit codes: 0 success, 1 configuration or input error, 2 solver failure, 3 certificate
failure. Every nonzero exit prints one JSON line {"error_code", "message"} to stderr.
"""
import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import barrier, certify, config, field, fracops, minimize, rearrange

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOLVER = 2
EXIT_CERTIFICATE = 3
CORPUS_SIZE = 20
PROFILE_SAMPLES = 64

_logger = logging.getLogger(__name__)


class CommandError(Exception):
    """A command failure carrying its exit code and machine-readable error code."""

    def __init__(self, exit_code, error_code, message):
        super().__init__(message)
        self.exit_code = exit_code
        self.error_code = error_code


def jsonable(value):
    """Convert numpy scalars and arrays to JSON types; non-finite floats become None."""
    if isinstance(value, dict):
        return {str(key): jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [jsonable(item) for item in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if np.isfinite(value) else None
    return value


def dumps(document):
    return json.dumps(jsonable(document), sort_keys=True, indent=2) + "\n"


def _write_text(path, text):
    with open(path, "w") as stream:
        stream.write(text)


def _write_csv(stream, rows, columns):
    writer = csv.DictWriter(stream, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({key: ("" if row.get(key) is None else row.get(key)) for key in columns})


def _read_field(path):
    try:
        return field.read_field(path, with_metadata=True)
    except field.BadMagicError as error:
        raise CommandError(EXIT_INPUT, "bad_magic", str(error)) from error
    except field.VersionMismatchError as error:
        raise CommandError(EXIT_INPUT, "version_mismatch", str(error)) from error
    except field.TruncatedFieldError as error:
        raise CommandError(EXIT_INPUT, "truncated_field", str(error)) from error
    except field.FieldFormatError as error:
        raise CommandError(EXIT_INPUT, "field_format", str(error)) from error
    except OSError as error:
        raise CommandError(EXIT_INPUT, "unreadable_field", str(error)) from error


def _oracle_check(solution, params):
    """Relative L^2 distance between the solution and a Petviashvili solve on its grid."""
    try:
        oracle = certify.ground_state_oracle(solution.grid, params)
    except certify.PetviashviliError as error:
        _logger.warning("(p=%s): Petviashvili oracle failed: %s", params.p, error)
        return {"distance": None, "error": str(error)}
    distance = certify.relative_l2_distance(certify.recenter(solution), oracle)
    return {"distance": distance, "error": None}


def _sobolev_monitor(minimizer, run_config):
    params = run_config.problem
    if not params.N > 2 * params.s:
        return {"minimizer_ratio": None, "corpus_max_ratio": None}
    rng = np.random.default_rng(run_config.solver["seed"])
    return {
        "minimizer_ratio": fracops.sobolev_ratio(minimizer, params.s),
        "corpus_max_ratio": fracops.sobolev_corpus_ratio(
            run_config.grid, params.s, rng, n_fields=CORPUS_SIZE
        ),
    }


def cmd_solve(run_config):
    """Barrier seed, minimization, rescale and certificate; writes three files.

    Writes `solution.fsf`, `minimizer_report.json` and `certificate.json` (plus
    `iterates.csv` in csv format) to the output directory. The report embeds the
    certificate; `certificate.json` is the same document on its own, as `verify` prints it.
    """
    params = run_config.problem
    try:
        report, solution, seed = minimize.find_ground_state(
            run_config.solver_config(), zeta=run_config.zeta
        )
    except (minimize.DivergenceError, minimize.ConstraintEscapeError) as error:
        code = "divergence" if isinstance(error, minimize.DivergenceError) else "constraint_escape"
        raise CommandError(EXIT_SOLVER, code, str(error)) from error

    certificate = certify.certify_solution(solution, params)
    out = run_config.output_dir
    os.makedirs(out, exist_ok=True)
    field.write_field(solution, os.path.join(out, "solution.fsf"), s=params.s)

    theta_gap = None
    if report.theta is not None:
        theta_gap = abs(report.theta - report.theta_pairing) / abs(report.theta_pairing)
    document = {
        "config": run_config.to_dict(),
        "barrier": seed,
        "minimizer": report.to_dict(),
        "multiplier_gap": theta_gap,
        "solution_grid": {"N": solution.grid.N, "M": solution.grid.M, "L": solution.grid.L},
        "oracle": _oracle_check(solution, params),
        "sobolev": _sobolev_monitor(report.minimizer, run_config),
        "boundary_ratio": {"minimizer": report.boundary_ratio, "solution": field.boundary_ratio(solution)},
        "calibration": fracops.seminorm_calibration(
            report.minimizer, params.s, deterministic=run_config.deterministic
        ),
        "certificate": certificate.to_dict(),
    }
    _write_text(os.path.join(out, "minimizer_report.json"), dumps(document))
    _write_text(os.path.join(out, "certificate.json"), dumps(certificate.to_dict()))
    if run_config.format == "csv":
        with open(os.path.join(out, "iterates.csv"), "w") as stream:
            _write_csv(stream, report.iterates, ["iteration", "T", "V", "step", "grad_norm", "symmetrized"])
    _logger.info("(N=%s, s=%s, p=%s): Wrote solution and reports to %s", params.N, params.s, params.p, out)

    if not report.converged:
        raise CommandError(
            EXIT_SOLVER,
            "not_converged",
            f"no convergence in {report.iterations} iterations (gradient norm {report.grad_norm:.3e})",
        )
    if not certificate.passed():
        failed = [name for name, ok in certificate.checks().items() if not ok]
        raise CommandError(EXIT_CERTIFICATE, "certificate_failure", f"failed checks: {failed}")
    return EXIT_OK


def cmd_verify(field_path, run_config, out=None):
    """Recompute the certificate of a stored field and log its seminorm calibration."""
    solution, metadata = _read_field(field_path)
    s = run_config.problem.s if metadata["s"] is None else metadata["s"]
    params = field.ProblemParams(N=solution.grid.N, s=s, p=run_config.problem.p)
    certificate = certify.certify_solution(solution, params)
    fracops.seminorm_calibration(solution, s, deterministic=run_config.deterministic)
    text = dumps(certificate.to_dict())
    sys.stdout.write(text)
    if out is not None:
        os.makedirs(out, exist_ok=True)
        _write_text(os.path.join(out, "certificate.json"), text)
    if not certificate.passed():
        failed = [name for name, ok in certificate.checks().items() if not ok]
        raise CommandError(EXIT_CERTIFICATE, "certificate_failure", f"failed checks: {failed}")
    return EXIT_OK


def barrier_table(run_config):
    """Seminorm and constraint scans of the barrier merged per plateau radius."""
    params, grid = run_config.problem, run_config.grid
    zeta = 2 * fracops.zeta_min(params.p) if run_config.zeta is None else run_config.zeta
    R_list = barrier.default_R_list(grid)
    if not R_list:
        raise CommandError(EXIT_INPUT, "config_error", f"no plateau radius fits in half-width {grid.L}")
    seminorms = barrier.barrier_seminorm_scan(zeta, R_list, grid, params.s)
    constraint_rows = [
        {"R": R, "V": fracops.constraint_V(barrier.make_barrier(barrier.BarrierSpec(zeta=zeta, R=R), grid), params.p)}
        for R in R_list
    ]
    rows = []
    for seminorm_row, constraint_row in zip(seminorms, constraint_rows):
        row = {**seminorm_row, "V": constraint_row["V"], "sigma_star": None}
        if row["V"] > 0:
            try:
                row["sigma_star"] = barrier.normalize_barrier(params.p, zeta, row["R"], grid)["sigma"]
            except ValueError as error:
                _logger.warning("(R=%s): %s", row["R"], error)
        rows.append(row)
    scan = None
    if any(row["V"] > 0 for row in rows):
        scan = barrier.barrier_constraint_scan(params.p, zeta=zeta, grid=grid, R_list=R_list)
    return rows, scan


def cmd_barrier(run_config, out=None):
    """Emit the barrier scan table (CSV columns R, seminorm2, l2norm2, V, sigma_star)."""
    rows, scan = barrier_table(run_config)
    columns = ["R", "seminorm2", "l2norm2", "V", "sigma_star", "hs_norm2", "refinement_change"]
    if run_config.format == "csv":
        _write_csv(sys.stdout, rows, columns)
    else:
        sys.stdout.write(dumps({"rows": rows, "constraint_scan": scan}))
    if out is not None:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "barrier_scan.csv"), "w") as stream:
            _write_csv(stream, rows, columns)
    if scan is None:
        raise CommandError(EXIT_INPUT, "no_feasible_barrier", "no scanned plateau radius gives V > 0")
    return EXIT_OK


def inspect_summary(f, metadata, s=None, deterministic=True):
    """Grid metadata, norms, boundary diagnostics and sampled radial profile of a field.

    The seminorm calibration uses the stored order, else `s`.
    """
    order = s if metadata["s"] is None else metadata["s"]
    calibration = None
    if order is not None:
        calibration = fracops.seminorm_calibration(f, order, deterministic=deterministic)
    profile = rearrange.radial_profile(f, check=False)
    stride = max(1, len(profile.radii) // PROFILE_SAMPLES)
    rows = [
        {"radius": r, "mean": mean, "max": peak, "spread": spread}
        for r, mean, peak, spread in zip(
            profile.radii[::stride], profile.values[::stride], profile.maxima[::stride], profile.spread[::stride]
        )
    ]
    return {
        "grid": {"N": f.grid.N, "M": f.grid.M, "L": f.grid.L, "h": f.grid.h},
        "s": metadata["s"],
        "version": metadata["version"],
        "norms": {
            "l2": fracops.lp_norm(f, 2),
            "max": float(f.values.max()),
            "min": float(f.values.min()),
            "integral": field.integrate(f),
        },
        "boundary_ratio": field.boundary_ratio(f),
        "monotonicity_defect": rearrange.monotonicity_defect(f),
        "calibration": calibration,
        "profile": rows,
    }


def cmd_inspect(field_path, run_config, out=None):
    """Print metadata, norms, the seminorm calibration and the radial profile of a stored field."""
    f, metadata = _read_field(field_path)
    summary = inspect_summary(f, metadata, s=run_config.problem.s, deterministic=run_config.deterministic)
    output_format = run_config.format
    columns = ["radius", "mean", "max", "spread"]
    if output_format == "csv":
        _write_csv(sys.stdout, summary["profile"], columns)
    else:
        sys.stdout.write(dumps(summary))
    if out is not None:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "profile.csv"), "w") as stream:
            _write_csv(stream, summary["profile"], columns)
    return EXIT_OK


def _boolean(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"{text!r} is not a boolean")


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed {value} is not an unsigned 64-bit integer")
    return value


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--set", action="append", default=[], metavar="K=V", help="override, e.g. grid.M=256")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=config.FORMATS, help="report format")
    common.add_argument("--deterministic", type=_boolean, metavar="BOOL", help="ordered reductions")
    common.add_argument("--seed", type=_seed, metavar="U64", help="corpus seed")
    common.add_argument("--log-level", default="INFO", help="logging level (default INFO)")

    parser = argparse.ArgumentParser(
        prog="fracground",
        description="Ground states of (-Delta)^s u + u = |u|^(p-1) u by constrained minimization.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("solve", parents=[common], help="minimize, rescale and certify")
    verify = commands.add_parser("verify", parents=[common], help="recompute the certificate of a field")
    verify.add_argument("field", help="FSF1 field file")
    commands.add_parser("barrier", parents=[common], help="barrier seminorm and constraint scans")
    inspect = commands.add_parser("inspect", parents=[common], help="describe an FSF1 field")
    inspect.add_argument("field", help="FSF1 field file")
    return parser


def _fail(error_code, message):
    sys.stderr.write(json.dumps({"error_code": error_code, "message": message}, sort_keys=True) + "\n")


def main(argv=None):
    """Run one command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        if exit_.code:
            _fail("usage", "invalid command line")
            return EXIT_INPUT
        return EXIT_OK

    level = getattr(logging, str(args.log_level).upper(), None)
    if not isinstance(level, int):
        _fail("config_error", f"unknown log level {args.log_level!r}")
        return EXIT_INPUT
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        force=True,
    )

    try:
        run_config = config.load_config(
            args.config,
            overrides=args.set,
            command=args.command,
            output_dir=args.out,
            format=args.format,
            deterministic=args.deterministic,
            seed=args.seed,
        )
        if args.command == "solve":
            return cmd_solve(run_config)
        if args.command == "verify":
            return cmd_verify(args.field, run_config, out=args.out)
        if args.command == "barrier":
            return cmd_barrier(run_config, out=args.out)
        return cmd_inspect(args.field, run_config, out=args.out)
    except config.ConfigError as error:
        _fail("config_error", str(error))
        return EXIT_INPUT
    except CommandError as error:
        _fail(error.error_code, str(error))
        return error.exit_code
    except (ValueError, OSError) as error:
        _fail("input_error", str(error))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
