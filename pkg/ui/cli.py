# ui/cli.py

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

# ---------------------------------------------------------------------
# 1. Make sure we can import from project root (.. = parent of ui/)
# ---------------------------------------------------------------------
PROJECT_ROOT = Path(__file__).parent.parent
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from config.config import (
    configure_logging,
    get_default_reps,
    get_default_seed,
    get_default_workers,
)
from orchestration.simulation import SeedPolicy, run_verification, simulate_dataset
from orchestration.state import SimReport
from stats.anova import attach_tests, decompose, estimate_components, power
from stats.designs import EffectKind, ModelParams, ModelSpec
from stats.errors import AnovaError, ParameterError, SingularSystemError
from stats.theory import ss_laws
from utils.data_loader import load_dataset, load_model, write_dataset
from utils.database import list_runs, record_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_VERIFY_FAILED = 3

# negative control for verify: every theoretical law is inflated by this factor
WRONG_LAW_FACTOR = 1.25


# ---------------------------------------------------------------------
# 2. Argument parsing
# ---------------------------------------------------------------------
def _add_param_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mu", type=float, default=0.0, help="overall mean")
    parser.add_argument("--sigma2", type=float, default=1.0, help="error variance")
    parser.add_argument(
        "--var",
        action="append",
        default=[],
        metavar="NAME=VALUE",
        help="variance component of a random term (repeatable)",
    )
    parser.add_argument(
        "--effect",
        action="append",
        default=[],
        metavar="NAME=v1,v2,...",
        help="fixed effects of a term, row-major for interactions (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vcanova",
        description="Balanced ANOVA with exact sum-of-squares laws and Monte Carlo verification.",
    )
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="ANOVA table for a CSV dataset")
    analyze.add_argument("--data", required=True, type=Path)
    analyze.add_argument("--model", required=True, type=Path)
    analyze.add_argument("--format", choices=["text", "csv", "json"], default="text")
    analyze.add_argument("--out", type=Path, default=None)

    simulate = sub.add_parser("simulate", help="draw one dataset as CSV")
    simulate.add_argument("--model", required=True, type=Path)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--out", type=Path, default=None)
    _add_param_flags(simulate)

    verify = sub.add_parser("verify", help="Monte Carlo check of the derived laws")
    verify.add_argument("--model", required=True, type=Path)
    verify.add_argument("--reps", type=int, default=None)
    verify.add_argument("--seed", type=int, default=None)
    verify.add_argument("--workers", type=int, default=None)
    verify.add_argument("--alpha", type=float, action="append", default=None)
    verify.add_argument("--format", choices=["text", "json"], default="text")
    verify.add_argument("--out", type=Path, default=None, help="write the JSON report here")
    verify.add_argument(
        "--inject-wrong-law",
        action="store_true",
        help=f"test against laws scaled by {WRONG_LAW_FACTOR} (must fail)",
    )
    verify.add_argument("--archive", action="store_true", help="store the report in the run archive")
    _add_param_flags(verify)

    power_cmd = sub.add_parser("power", help="power of every exact F test")
    power_cmd.add_argument("--model", required=True, type=Path)
    power_cmd.add_argument("--alpha", type=float, action="append", default=None)
    power_cmd.add_argument("--format", choices=["text", "csv", "json"], default="text")
    power_cmd.add_argument("--out", type=Path, default=None)
    _add_param_flags(power_cmd)

    runs = sub.add_parser("runs", help="list archived verification runs")
    runs.add_argument("--limit", type=int, default=20)

    return parser


def _split_assignment(raw: str, flag: str) -> List[str]:
    name, sep, value = raw.partition("=")
    if not sep or not name.strip() or not value.strip():
        raise ParameterError(f"{flag} expects NAME=VALUE, got {raw!r}")
    return [name.strip(), value.strip()]


def params_from_args(args: argparse.Namespace, spec: ModelSpec) -> ModelParams:
    """Build ModelParams from --mu/--sigma2/--var/--effect, routed by term kind."""
    variances: Dict[str, float] = {}
    for raw in args.var:
        name, value = _split_assignment(raw, "--var")
        try:
            variances[name] = float(value)
        except ValueError:
            raise ParameterError(f"--var {name} is not a number: {value!r}") from None
    effects: Dict[str, List[float]] = {}
    for raw in args.effect:
        name, value = _split_assignment(raw, "--effect")
        try:
            effects[name] = [float(v) for v in value.split(",")]
        except ValueError:
            raise ParameterError(f"--effect {name} has a non-numeric value: {value!r}") from None

    known = {t.name for t in spec.terms}
    for name in list(variances) + list(effects):
        if name not in known:
            raise ParameterError(f"unknown term {name!r}; model terms are {sorted(known)}")
    random_terms = {t.name for t in spec.terms if t.kind is EffectKind.RANDOM}
    for name in effects:
        if name in random_terms:
            raise ParameterError(f"term {name} is random; use --var {name}=VALUE")
    for name in variances:
        if name not in random_terms:
            raise ParameterError(f"term {name} is fixed; use --effect {name}=v1,v2,...")

    return ModelParams(
        mu=args.mu,
        sigma2=args.sigma2,
        fixed_effects=effects,
        variance_components=variances,
    )


# ---------------------------------------------------------------------
# 3. Rendering helpers
# ---------------------------------------------------------------------
def _fmt(value: Any) -> str:
    return f"{value:.6g}" if isinstance(value, float) else str(value)


def _frame_text(frame: pd.DataFrame) -> str:
    return frame.to_string(index=False, na_rep="", float_format=lambda v: f"{v:.6g}")


def _emit(text_out: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text_out if text_out.endswith("\n") else text_out + "\n")
    else:
        out.write_text(text_out if text_out.endswith("\n") else text_out + "\n", encoding="utf-8")


def _dumps(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True)


def render_summary(report: SimReport) -> str:
    """Human-readable summary of a verification report."""
    lines = [
        f"design={report['model']['design']} reps={report['reps']} "
        f"seed={report['seed']} workers={report['worker_count']}"
    ]
    if report["law_override"]:
        lines.append(f"law override: {report['law_override']}")

    sources = pd.DataFrame(
        [
            {
                "Source": c["source"],
                "Df": c["df"],
                "Mean": c["empirical_mean"],
                "E[SS]": c["theoretical_mean"],
                "Var": c["empirical_variance"],
                "Var[SS]": c["theoretical_variance"],
                "KS p": c["ks_p_value"],
                "ok": c["mean_ok"] and c["variance_ok"] and c["ks_ok"],
            }
            for c in report["sources"]
        ]
    )
    lines += ["", _frame_text(sources)]

    if report["correlations"]:
        worst = max(report["correlations"], key=lambda c: abs(c["correlation"]))
        lines.append(
            f"\nlargest |corr|: {worst['pair'][0]} vs {worst['pair'][1]} = "
            f"{_fmt(worst['correlation'])} (bound {_fmt(worst['bound'])})"
        )

    if report["rejections"]:
        rejections = pd.DataFrame(
            [
                {
                    "Source": c["source"],
                    "Denominator": c["denominator"],
                    "alpha": c["alpha"],
                    "null": c["null"],
                    "rate": c["rate"],
                    "expected": c["expected"],
                    "ok": c["ok"],
                }
                for c in report["rejections"]
            ]
        )
        lines += ["", _frame_text(rejections)]

    if report["noncentral_mixing_sources"]:
        lines.append(
            "\nnoncentral mixing law used for: " + ", ".join(report["noncentral_mixing_sources"])
        )
    for lemma in report["lemma"]:
        lines.append(
            f"compound check c1={_fmt(lemma['c1'])} p={lemma['p']} c2={_fmt(lemma['c2'])} "
            f"gamma2={_fmt(lemma['gamma2'])}: KS p={_fmt(lemma['ks_p_value'])} "
            f"mgf err={lemma['mgf_max_rel_error']:.2e} {'ok' if lemma['passed'] else 'FAILED'}"
        )
    lines.append("\nPASSED" if report["passed"] else "\nFAILED")
    return "\n".join(lines)


# ---------------------------------------------------------------------
# 4. Subcommands
# ---------------------------------------------------------------------
def cmd_analyze(args: argparse.Namespace) -> int:
    spec = load_model(args.model)
    data = load_dataset(args.data, spec)
    table = attach_tests(decompose(data), spec)

    components = {}
    if any(t.kind is EffectKind.RANDOM for t in spec.terms):
        try:
            components = estimate_components(table, spec)
        except SingularSystemError as e:
            logger.warning("variance components not estimated: %s", e)

    if args.format == "csv":
        _emit(table.to_frame().to_csv(index=False), args.out)
    elif args.format == "json":
        doc = table.to_dict()
        doc["components"] = {
            name: {"raw": c.raw, "estimate": c.estimate, "truncated": c.truncated}
            for name, c in components.items()
        }
        _emit(_dumps(doc), args.out)
    else:
        text_out = _frame_text(table.to_frame())
        if components:
            estimates = pd.DataFrame(
                [
                    {"Component": c.name, "Estimate": c.estimate, "Raw": c.raw, "Truncated": c.truncated}
                    for c in components.values()
                ]
            )
            text_out += "\n\nVariance components (method of moments)\n" + _frame_text(estimates)
        _emit(text_out, args.out)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = load_model(args.model)
    params = params_from_args(args, spec)
    seed = get_default_seed() if args.seed is None else args.seed
    data = simulate_dataset(spec, params, seed)
    write_dataset(data, args.out if args.out is not None else sys.stdout)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    spec = load_model(args.model)
    params = params_from_args(args, spec)
    policy = SeedPolicy(
        get_default_seed() if args.seed is None else args.seed,
        get_default_workers() if args.workers is None else args.workers,
    )
    reps = get_default_reps() if args.reps is None else args.reps
    laws = ss_laws(spec, params).scaled(WRONG_LAW_FACTOR) if args.inject_wrong_law else None

    report = run_verification(
        spec,
        params,
        reps,
        alphas=args.alpha or [0.05],
        policy=policy,
        laws=laws,
    )
    if laws is not None:
        report["law_override"] = f"every law scaled by {WRONG_LAW_FACTOR}"

    if args.out is not None:
        _emit(_dumps(report), args.out)
    if args.format == "json" and args.out is None:
        _emit(_dumps(report), None)
    else:
        _emit(render_summary(report), None)

    if args.archive:
        run_id = record_report(report)
        sys.stdout.write(f"archived as run {run_id}\n")
    return EXIT_OK if report["passed"] else EXIT_VERIFY_FAILED


def cmd_power(args: argparse.Namespace) -> int:
    spec = load_model(args.model)
    params = params_from_args(args, spec)
    records = []
    for alpha in args.alpha or [0.05]:
        for source, value in power(spec, params, alpha).items():
            records.append({"Source": source, "alpha": alpha, "power": value})
    frame = pd.DataFrame.from_records(records, columns=["Source", "alpha", "power"])

    if args.format == "csv":
        _emit(frame.to_csv(index=False), args.out)
    elif args.format == "json":
        _emit(_dumps(records), args.out)
    else:
        _emit(_frame_text(frame), args.out)
    return EXIT_OK


def cmd_runs(args: argparse.Namespace) -> int:
    rows = list_runs(limit=args.limit)
    if not rows:
        sys.stdout.write("no archived runs\n")
    else:
        _emit(_frame_text(pd.DataFrame(rows)), None)
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "power": cmd_power,
    "runs": cmd_runs,
}


# ---------------------------------------------------------------------
# 5. Entry point
# ---------------------------------------------------------------------
def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        configure_logging(args.log_level)
        return COMMANDS[args.command](args)
    except AnovaError as e:
        sys.stderr.write(f"error: {e}\n")
        logger.debug("Technical details: %s: %s", type(e).__name__, e)
        return EXIT_VALIDATION
    except OSError as e:
        sys.stderr.write(f"error: {e}\n")
        logger.debug("Technical details: %s: %s", type(e).__name__, e)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
