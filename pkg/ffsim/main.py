"""
Command-line front end: `run`, `fit` and `validate`.

Exit codes: 0 success, 2 config/validation error, 1 runtime failure.
"""
import argparse
import logging
import sys
from typing import List, Optional

from ffsim import __version__
from ffsim.config import settings
from ffsim.exceptions import EXIT_OK, EXIT_VALIDATION_ERROR
from ffsim.schemas import FitSettings
from ffsim.services.afm_fit import default_fit_settings
from ffsim.services.experiment_config import plan_conditions, validate_config
from ffsim.services.experiment_runner import fit_command, run_experiment
from ffsim.utils.error_handler import cli_error_handler

logger = logging.getLogger(__name__)


def configure_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _overrides(args: argparse.Namespace) -> dict:
    overrides = {
        "n_students": args.n_students,
        "master_seed": args.seed,
        "output_dir": args.out,
        "jobs": args.jobs,
    }
    if args.trace:
        overrides["trace"] = True
    return overrides


@cli_error_handler("run")
def run_verb(args: argparse.Namespace) -> int:
    config = validate_config(args.config, _overrides(args))
    result = run_experiment(config, xlsx=args.xlsx)

    print(f"✅ {len(result.conditions)} condition(s) x {config.n_students} students -> {result.output_dir}")
    for summary in result.summaries:
        label = f"{summary.selector.value}/{'ff' if summary.fast_forward else 'no_ff'}"
        print(
            f"  {label:<26} overpractice {summary.overpractice_mean:8.3f} (sd {summary.overpractice_sd:.3f})"
            f"  underpractice {summary.underpractice_mean:.3f}"
        )
    for reduction in result.reductions:
        if reduction.applicable:
            print(f"  📉 {reduction.selector.value}: FF reduces overpractice by {reduction.reduction_pct:.1f}%")
        else:
            print(f"  📉 {reduction.selector.value}: reduction not applicable ({'; '.join(reduction.notes)})")
    return EXIT_OK


@cli_error_handler("validate")
def validate_verb(args: argparse.Namespace) -> int:
    config = validate_config(args.config, _overrides(args))
    conditions = plan_conditions(config)
    print(f"✅ {args.config} is valid: {len(conditions)} condition(s) planned")
    for key, value in config.model_dump().items():
        print(f"  {key} = {value}")
    return EXIT_OK


@cli_error_handler("fit")
def fit_verb(args: argparse.Namespace) -> int:
    defaults = default_fit_settings()
    fit_settings = FitSettings(
        l2=defaults.l2 if args.l2 is None else args.l2,
        tol=defaults.tol if args.tol is None else args.tol,
        max_iterations=defaults.max_iterations if args.max_iterations is None else args.max_iterations,
    )
    result = fit_command(args.log, args.out, fit_settings, pool_path=args.pool)
    status = "converged" if result.converged else "did NOT converge"
    print(f"{'✅' if result.converged else '⚠️ '} AFM fit {status} after {result.iterations} iterations -> {args.out}")
    for name, beta, gamma in zip(result.params.skill_names, result.params.beta, result.params.gamma):
        print(f"  {name:<24} beta {beta:+.4f}  gamma {gamma:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ffsim", description="Fast-Forwarding mastery-learning simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="Logging level (default: FFSIM_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, handler, help_text in (
        ("run", run_verb, "Simulate every configured condition and write result files"),
        ("validate", validate_verb, "Check a config file and print the resolved values"),
    ):
        verb = sub.add_parser(name, help=help_text)
        verb.add_argument("--config", required=True, help="Experiment config file")
        verb.add_argument("--n-students", type=int, default=None)
        verb.add_argument("--seed", type=int, default=None, help="Master seed")
        verb.add_argument("--out", default=None, help="Output directory")
        verb.add_argument("--trace", action="store_true", help="Write the per-step trace.csv")
        verb.add_argument("--jobs", default=None, help="Worker processes (integer or 'auto')")
        verb.set_defaults(handler=handler)
    sub.choices["run"].add_argument("--xlsx", action="store_true", help="Also write summary.xlsx")

    fit = sub.add_parser("fit", help="Fit AFM parameters to a step log")
    fit.add_argument("log", help="Step-log CSV (student_id,skill,opportunity,correct)")
    fit.add_argument("--out", required=True, help="Where to write the AFM parameters JSON")
    fit.add_argument("--pool", default=None, help="Pool file whose skill order the parameters follow")
    fit.add_argument("--l2", type=float, default=None)
    fit.add_argument("--tol", type=float, default=None)
    fit.add_argument("--max-iterations", type=int, default=None)
    fit.set_defaults(handler=fit_verb)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad usage and 0 on --help/--version
        return EXIT_VALIDATION_ERROR if e.code not in (0, None) else EXIT_OK
    configure_logging(args.log_level)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
