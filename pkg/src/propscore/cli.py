"""Command-line interface: ``propscore score|compare|simulate``.

Exit codes: 0 success (whatever the verdict), 2 invalid input or flags,
3 a requested test could not be computed (degenerate sample or infinite
losses).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .comparison import TESTS, compare_all, score_model, to_json_value
from .dataset import ZERO_POLICIES, ValidationPolicy, load_dataset
from .exceptions import DatasetError
from .scoring import RULES
from .simulator import load_config, run_experiment
from .stats import ALTERNATIVES

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGENERATE = 3

RULE_HELP = (
    "scoring rule (default: log). The log rule gives infinite loss to a model that "
    "assigns zero probability to an observed outcome; prefer 'quadratic' when such "
    "zeros are expected, e.g. for observed-frequency baselines"
)


class _InputError(Exception):
    pass


def _add_input_args(p):
    p.add_argument("input", help="prediction file (.jsonl or .csv)")
    p.add_argument("--input-format", choices=("auto", "jsonl", "csv"), default="auto",
                   help="input format (default: from the file extension)")
    p.add_argument("--rule", choices=sorted(RULES), default="log", help=RULE_HELP)
    p.add_argument("--renormalize", action=argparse.BooleanOptionalAction, default=True,
                   help="rescale vectors whose sum is within --sum-tolerance of 1 (default: on)")
    p.add_argument("--sum-tolerance", type=float, default=1e-6,
                   help="allowed deviation of a vector's sum from 1 (default: 1e-6)")
    p.add_argument("--zero-policy", choices=ZERO_POLICIES, default="allow_infinite_loss",
                   help="handling of zero probabilities (default: allow_infinite_loss)")
    p.add_argument("--clamp-epsilon", type=float, default=None,
                   help="floor used by --zero-policy clamp (default: 1e-10)")
    p.add_argument("--format", choices=("text", "json"), default="text", help="output format")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="propscore",
        description="Compare probabilistic models on held-out data with proper scoring rules "
                    "and paired significance tests. Lower losses are better.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="mean loss (and perplexity for the log rule) of every model")
    _add_input_args(p)
    p.add_argument("--per-observation", action="store_true",
                   help="include per-observation losses in JSON output")

    p = sub.add_parser("compare", help="pairwise paired tests between all models")
    _add_input_args(p)
    p.add_argument("--test", choices=TESTS, default="t", help="paired test (default: t)")
    p.add_argument("--alternative", choices=ALTERNATIVES, default="two_sided",
                   help="a_less: first model of a pair has lower loss (default: two_sided)")
    p.add_argument("--alpha", type=float, default=0.05, help="significance level (default: 0.05)")
    p.add_argument("--holm", action="store_true",
                   help="Holm-adjust p-values across all pairs (off by default)")

    p = sub.add_parser("simulate", help="validate comparisons on simulated data with known truth")
    p.add_argument("config", help="experiment config (JSON)")
    p.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    p.add_argument("--workers", type=int, default=1, help="threads for replications (default: 1)")
    p.add_argument("--format", choices=("text", "json"), default="json", help="output format")
    return parser


def _policy(args):
    if args.clamp_epsilon is not None and args.zero_policy != "clamp":
        raise _InputError("--clamp-epsilon requires --zero-policy clamp")
    try:
        return ValidationPolicy(
            sum_tolerance=args.sum_tolerance,
            renormalize=args.renormalize,
            zero_handling=args.zero_policy,
            epsilon=1e-10 if args.clamp_epsilon is None else args.clamp_epsilon,
        )
    except ValueError as exc:
        raise _InputError(str(exc)) from None


def _load(args, policy):
    fmt = None if args.input_format == "auto" else args.input_format
    try:
        return load_dataset(args.input, fmt, policy)
    except OSError as exc:
        raise _InputError(f"cannot read {args.input}: {exc.strerror}") from None
    except DatasetError as exc:
        raise _InputError(str(exc)) from None


def run_score(args):
    policy = _policy(args)
    ds = _load(args, policy)
    summaries = [score_model(ds, m, args.rule) for m in ds.models]
    if args.format == "json":
        doc = {"schema_version": 1, "rule": args.rule, "n": ds.n,
               "models": [s.to_dict(args.per_observation) for s in summaries]}
        out = json.dumps(to_json_value(doc), indent=2, allow_nan=False) + "\n"
    else:
        lines = [f"rule: {args.rule}  n: {ds.n}", "",
                 f"{'model':<20} {'mean_loss':>14} {'perplexity':>14} {'infinite':>9}"]
        for s in summaries:
            ppl = "-" if s.perplexity is None else f"{s.perplexity:.6g}"
            lines.append(f"{s.model:<20} {s.mean_loss:>14.8g} {ppl:>14} {s.infinite_count:>9d}")
        out = "\n".join(lines) + "\n"
    return EXIT_OK, out


def run_compare(args):
    policy = _policy(args)
    if not 0 < args.alpha < 1:
        raise _InputError("--alpha must lie in (0, 1)")
    ds = _load(args, policy)
    if len(ds.models) < 2:
        raise _InputError(f"need >= 2 models to compare, file declares {len(ds.models)}")
    report = compare_all(ds, args.rule, args.test, args.alternative, args.holm, args.alpha)
    out = report.to_json() if args.format == "json" else report.to_text()
    code = EXIT_DEGENERATE if report.errors else EXIT_OK
    return code, out, [f"{p.model_a} vs {p.model_b}: {p.error}" for p in report.errors]


def run_simulate(args):
    if args.workers < 1:
        raise _InputError("--workers must be >= 1")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = type(cfg).from_dict({**cfg.to_dict(), "seed": args.seed})
    except OSError as exc:
        raise _InputError(f"cannot read {args.config}: {exc.strerror}") from None
    except (ValueError, TypeError, KeyError) as exc:
        raise _InputError(f"invalid config: {exc}") from None
    result = run_experiment(cfg, workers=args.workers)
    if args.format == "json":
        return EXIT_OK, result.to_json()
    d = result.to_dict()
    lines = [f"{k}: {d[k]}" for k in ("rule", "test", "alternative", "alpha", "n", "replications",
                                       "true_gap", "true_gap_stderr", "mean_empirical_gap",
                                       "truly_better", "degenerate_count")]
    key = "false_positive_rate" if cfg.is_null else "recovery_rate"
    lines.append(f"{key}: {d[key]}")
    return EXIT_OK, "\n".join(lines) + "\n"


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"score": run_score, "compare": run_compare, "simulate": run_simulate}
    try:
        code, out, *rest = handlers[args.command](args)
    except _InputError as exc:
        print(f"propscore: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sys.stdout.write(out)
    sys.stdout.flush()
    for msg in rest[0] if rest else ():
        print(f"propscore: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
