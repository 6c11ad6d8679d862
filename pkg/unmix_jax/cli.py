"""Command line interface: `unmix-jax {simulate,unmix,benchmark,validate}`.

Results go to stdout and logs to stderr. Failures exit with the `exit_code`
of the raised error (see `unmix_jax.errors`); a failed validation exits 20.
"""
import argparse
import logging
import sys

from unmix_jax.benchmark import SWEEP_VARS, parse_values, run_benchmark
from unmix_jax.dykstra import DykstraConfig
from unmix_jax.errors import ConfigError, ShapeMismatch, UnmixError
from unmix_jax.io import (read_abundance, read_cube, read_library_csv, write_abundance, write_cube, write_curve_csv,
                          write_library_csv)
from unmix_jax.metrics import ConvergenceCurve, build_curve, nmse_db, objective, relative_error_db
from unmix_jax.model import EndmemberMatrix, column_feasibility
from unmix_jax.simdata import SpectralLibrary, measured_snr_db, simulate, synthetic_library
from unmix_jax.solver import solve
from unmix_jax.utils import resolve_threads
from unmix_jax.validation import run_validation

logger = logging.getLogger(__name__)

VALIDATION_FAILED = 20
SYNTHETIC_PREFIX = "synthetic:"
LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"


def load_library(spec) -> SpectralLibrary:
    """A library CSV path, or `synthetic:<L>` for L generated signatures."""
    if spec.startswith(SYNTHETIC_PREFIX):
        try:
            n_signatures = int(spec[len(SYNTHETIC_PREFIX):])
        except ValueError:
            raise ConfigError(f"expected synthetic:<count>, got {spec!r}")
        if n_signatures < 1:
            raise ConfigError(f"synthetic library needs at least one signature, got {n_signatures}")
        return synthetic_library(n_signatures=n_signatures)
    return read_library_csv(spec)


def load_endmembers(path) -> EndmemberMatrix:
    lib = read_library_csv(path)
    return EndmemberMatrix.from_array(lib.signatures, wavelengths=lib.wavelengths, names=lib.names)


def cmd_simulate(args):
    if args.rows < 1 or args.cols < 1:
        raise ConfigError("--rows and --cols must be >= 1")
    lib = load_library(args.library)
    E, A, X = simulate(lib, args.m, shape=(args.rows, args.cols), snr_db=args.snr_db,
                       min_angle_deg=args.min_angle, seed=args.seed)
    prefix = args.out_prefix
    write_cube(f"{prefix}.cube", X)
    write_abundance(f"{prefix}.truth", A)
    write_library_csv(SpectralLibrary.from_array(E.data, names=E.names, wavelengths=E.wavelengths),
                      f"{prefix}.endmembers.csv")
    print("endmembers: " + ", ".join(E.names))
    print(f"measured_snr_db: {measured_snr_db(E, A, X):.4f}")


def cmd_unmix(args):
    solver_id = args.solver.replace("-", "_")
    if args.curve is not None and solver_id != "sudap":
        raise ConfigError("--curve needs --solver sudap")
    if args.snapshot_every < 1:
        raise ConfigError("--snapshot-every must be >= 1")

    X = read_cube(args.cube)
    E = load_endmembers(args.endmembers)
    expected = (E.n_endmembers, X.n_pixels)
    refs = {}
    for name, path in (("A_star", args.reference), ("A_true", args.truth)):
        if path is not None:
            refs[name] = read_abundance(path)
            if refs[name].data.shape != expected:
                raise ShapeMismatch(expected, refs[name].data.shape)

    cfg = DykstraConfig(max_sweeps=args.max_sweeps,
                        rel_tol=args.rel_tol,
                        snapshot_every=args.snapshot_every if args.curve is not None else 0,
                        block_size=args.block_size,
                        threads=args.threads,
                        progress=args.progress)
    result = solve(E, X, solver_id, cfg, clip=args.clip)
    write_abundance(args.out, result.A_hat)
    if args.curve is not None:
        if result.transform is None:
            curve = ConvergenceCurve.empty()
        else:
            curve = build_curve(result.trace, result.transform, E, X, **refs)
        write_curve_csv(curve, args.curve)

    report = column_feasibility(result.A_hat)
    print(f"solver: {result.solver_id}")
    print(f"objective: {objective(E, X, result.A_hat):.17g}")
    print(f"wall_time_s: {result.wall_time:.6f}")
    if result.trace.num_sweeps:
        print(f"sweeps: {result.trace.num_sweeps} ({result.trace.stop_reason})")
    print(f"max_sum_violation: {report.max_sum_violation:.3e}")
    print(f"min_entry: {report.min_entry:.3e}")
    print(f"feasible: {report.feasible}")
    if "A_star" in refs:
        print(f"re_db: {relative_error_db(result.A_hat, refs['A_star']):.2f}")
    if "A_true" in refs:
        print(f"nmse_db: {nmse_db(result.A_hat, refs['A_true']):.2f}")


def cmd_benchmark(args):
    values = parse_values(args.sweep_var, args.values)
    lib = load_library(args.library)
    _, summary = run_benchmark(lib,
                               args.sweep_var,
                               values,
                               repeats=args.repeats,
                               stop_re_db=args.stop_re_db,
                               seed=args.seed,
                               out_dir=args.out_dir,
                               m=args.m,
                               n_pixels=args.pixels,
                               snr_db=args.snr_db,
                               min_angle_deg=args.min_angle,
                               max_sweeps=args.max_sweeps,
                               threads=args.threads)
    print(summary.to_string(index=False))


def cmd_validate(args):
    if args.instances < 1:
        raise ConfigError(f"--instances must be >= 1, got {args.instances}")
    report = run_validation(seed=args.seed,
                            num_instances=args.instances,
                            shape=(args.rows, args.cols),
                            num_triples=args.triples,
                            include_timing=not args.skip_timing,
                            threads=args.threads)
    print(report.format_table())
    print(f"elapsed_s: {report.elapsed:.2f}")
    if not report.passed:
        print("failed: " + ", ".join(report.failed()))
        return VALIDATION_FAILED
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="unmix-jax", description="Fully constrained spectral unmixing.")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default $UNMIX_JAX_THREADS or 1)")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cube with known abundances")
    p.add_argument("--library", required=True, help="library CSV or synthetic:<L>")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--min-angle", type=float, default=10.0)
    p.add_argument("--rows", type=int, default=100)
    p.add_argument("--cols", type=int, default=100)
    p.add_argument("--snr-db", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("unmix", help="estimate abundances")
    p.add_argument("--cube", required=True)
    p.add_argument("--endmembers", required=True)
    p.add_argument("--solver", choices=["sudap", "ls", "ls-sum1", "oracle"], default="sudap")
    p.add_argument("--out", required=True)
    p.add_argument("--rel-tol", type=float, default=1e-10)
    p.add_argument("--max-sweeps", type=int, default=2000)
    p.add_argument("--reference", help="exact abundances for RE")
    p.add_argument("--truth", help="true abundances for NMSE")
    p.add_argument("--curve", help="write the convergence curve CSV here")
    p.add_argument("--snapshot-every", type=int, default=1)
    p.add_argument("--block-size", type=int, default=4096)
    p.add_argument("--clip", action="store_true")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_unmix)

    p = sub.add_parser("benchmark", help="time SUDAP to a relative error threshold")
    p.add_argument("--library", required=True)
    p.add_argument("--sweep-var", choices=SWEEP_VARS, required=True)
    p.add_argument("--values", required=True, help="comma separated")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--stop-re-db", type=float, default=-100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--pixels", type=int, default=1024)
    p.add_argument("--snr-db", type=float, default=30.0)
    p.add_argument("--min-angle", type=float, default=10.0)
    p.add_argument("--max-sweeps", type=int, default=20000)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("validate", help="run the property suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--rows", type=int, default=32)
    p.add_argument("--cols", type=int, default=32)
    p.add_argument("--triples", type=int, default=1000)
    p.add_argument("--skip-timing", action="store_true")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, stream=sys.stderr)
    try:
        if args.threads is not None:
            resolve_threads(args.threads)
        return args.func(args) or 0
    except UnmixError as e:
        logger.debug("command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
