"""Score every model on every held-out observation and compare them pairwise.

The figure of merit for a model is its mean loss over the observations;
lower means a smaller divergence from the (unobserved) true outcome
distributions.  Whether a difference in mean loss is more than noise is
decided by a paired test on the per-observation losses.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import align_models
from .exceptions import DegenerateTestError, InfiniteLossError
from .scoring import get_rule
from .stats import ALTERNATIVES, PairedSample, TestResult, holm_adjust, paired_t_test, wilcoxon_signed_rank

__all__ = [
    "SCHEMA_VERSION",
    "TESTS",
    "ModelScoreSummary",
    "PairComparison",
    "ComparisonReport",
    "perplexity",
    "score_model",
    "run_test",
    "compare_pair",
    "compare_all",
    "to_json_value",
]

SCHEMA_VERSION = 1
TESTS = ("t", "wilcoxon")
VERDICTS = ("first_better", "second_better", "inconclusive")


def to_json_value(x):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
    """
    if isinstance(x, dict):
        return {str(k): to_json_value(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [to_json_value(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def perplexity(mean_log_loss, rule="log"):
    """``exp`` of the mean log loss; defined only for the logarithmic rule.

    >>> perplexity(math.log(2.0))
    2.0
    """
    if not get_rule(rule).is_logarithmic:
        raise ValueError(f"perplexity is only defined for the log rule, not {get_rule(rule).name!r}")
    try:
        return math.exp(mean_log_loss)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class ModelScoreSummary:
    model: str
    rule: str
    losses: np.ndarray = field(repr=False)
    mean_loss: float
    perplexity: float | None
    infinite_count: int

    def to_dict(self, include_losses=False):
        d = {
            "model": self.model,
            "rule": self.rule,
            "n": int(len(self.losses)),
            "mean_loss": self.mean_loss,
            "perplexity": self.perplexity,
            "infinite_count": self.infinite_count,
        }
        if include_losses:
            d["losses"] = self.losses.tolist()
        return to_json_value(d)


def _mean(losses):
    if np.any(np.isinf(losses)):
        return math.inf
    return math.fsum(losses) / len(losses)


def score_model(ds, model, rule="log"):
    """Per-observation losses of ``model`` in record order, and their mean."""
    rule = get_rule(rule)
    losses = rule.loss(ds.predictions(model), ds.outcomes)
    losses.flags.writeable = False
    mean = _mean(losses)
    ppl = perplexity(mean, rule) if rule.is_logarithmic else None
    return ModelScoreSummary(model, rule.name, losses, mean, ppl, int(np.count_nonzero(np.isinf(losses))))


def run_test(sample, test="t", alternative="two_sided"):
    """Dispatch a :class:`PairedSample` to the named test."""
    if test == "t":
        return paired_t_test(sample.a, sample.b, alternative)
    if test == "wilcoxon":
        return wilcoxon_signed_rank(sample.a, sample.b, alternative)
    raise ValueError(f"unknown test {test!r}; choose from {TESTS}")


def compare_pair(ds, model_a, model_b, rule="log", test="t", alternative="two_sided"):
    """Paired test of ``model_a`` against ``model_b`` under ``rule``.

    ``direction == "a_lower"`` means model a had the lower losses, i.e. is
    the better model.  Raises :class:`InfiniteLossError` when either model
    has an infinite loss (switch to a bounded rule or the clamp policy) and
    :class:`DegenerateTestError` when the test is undefined.
    """
    pair = align_models(ds, model_a, model_b)
    la, lb = pair.losses(rule)
    bad = np.isinf(la) | np.isinf(lb)
    if np.any(bad):
        raise InfiniteLossError(
            f"{int(bad.sum())} observation(s) have infinite loss for {model_a!r} or {model_b!r}; "
            "use the quadratic rule or a clamp policy"
        )
    return run_test(PairedSample(la, lb), test, alternative)


@dataclass
class PairComparison:
    model_a: str
    model_b: str
    result: TestResult | None
    error: str | None = None
    error_kind: str | None = None
    adjusted_p: float | None = None
    verdict: str = "inconclusive"
    support_disagreements: list = field(default_factory=list)

    def to_dict(self):
        return to_json_value({
            "model_a": self.model_a,
            "model_b": self.model_b,
            "result": None if self.result is None else self.result.to_dict(),
            "error": self.error,
            "error_kind": self.error_kind,
            "adjusted_p": self.adjusted_p,
            "verdict": self.verdict,
            "support_disagreements": self.support_disagreements,
        })


@dataclass
class ComparisonReport:
    rule: str
    test: str
    alternative: str
    alpha: float
    holm: bool
    n: int
    summaries: dict
    pairs: list

    @property
    def errors(self):
        return [p for p in self.pairs if p.error is not None]

    def pair(self, model_a, model_b):
        for p in self.pairs:
            if (p.model_a, p.model_b) == (model_a, model_b):
                return p
        raise KeyError((model_a, model_b))

    def to_dict(self, include_losses=False):
        return {
            "schema_version": SCHEMA_VERSION,
            "rule": self.rule,
            "test": self.test,
            "alternative": self.alternative,
            "alpha": self.alpha,
            "holm": self.holm,
            "n": self.n,
            "models": [s.to_dict(include_losses) for s in self.summaries.values()],
            "pairs": [p.to_dict() for p in self.pairs],
        }

    def to_json(self, include_losses=False):
        return json.dumps(to_json_value(self.to_dict(include_losses)), indent=2, allow_nan=False) + "\n"

    def to_text(self):
        lines = [
            f"rule: {self.rule}  test: {self.test}  alternative: {self.alternative}  "
            f"alpha: {self.alpha:g}  holm: {'on' if self.holm else 'off'}  n: {self.n}",
            "",
            f"{'model':<20} {'mean_loss':>14} {'perplexity':>14} {'infinite':>9}",
        ]
        for s in self.summaries.values():
            ppl = "-" if s.perplexity is None else f"{s.perplexity:.6g}"
            lines.append(f"{s.model:<20} {s.mean_loss:>14.8g} {ppl:>14} {s.infinite_count:>9d}")
        lines += ["", f"{'pair':<30} {'statistic':>11} {'df/n':>7} {'p_one':>10} {'p_two':>10} "
                      f"{'p_holm':>10} {'direction':>9}  verdict"]
        for p in self.pairs:
            name = f"{p.model_a} vs {p.model_b}"
            if p.result is None:
                lines.append(f"{name:<30} error: {p.error}")
                continue
            r = p.result
            adj = "-" if p.adjusted_p is None else f"{p.adjusted_p:.4g}"
            lines.append(
                f"{name:<30} {r.statistic:>11.5g} {r.df_or_n:>7g} {r.p_one_sided:>10.4g} "
                f"{r.p_two_sided:>10.4g} {adj:>10} {r.direction:>9}  {p.verdict}"
            )
            if p.support_disagreements:
                lines.append(f"  note: {len(p.support_disagreements)} observation(s) where only one "
                             "model gives the outcome zero probability")
        return "\n".join(lines) + "\n"


def _verdict(result, p, alpha):
    if result is None or p is None or p > alpha:
        return "inconclusive"
    if result.direction == "a_lower" and result.alternative in ("two_sided", "a_less"):
        return "first_better"
    if result.direction == "b_lower" and result.alternative in ("two_sided", "b_less"):
        return "second_better"
    return "inconclusive"


def compare_all(ds, rule="log", test="t", alternative="two_sided", holm=False, alpha=0.05):
    """Score every model and test every unordered pair, in declared model order.

    Errors in one pair (degenerate samples, infinite losses) are recorded on
    that pair as an inconclusive result and never abort the others.  With
    ``holm=True`` the p-values of the requested alternative are adjusted by
    Holm's step-down method across the pairs that produced a result.
    """
    rule = get_rule(rule)
    if test not in TESTS:
        raise ValueError(f"unknown test {test!r}; choose from {TESTS}")
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if len(ds.models) < 2:
        raise ValueError("need >= 2 models to compare")
    summaries = {m: score_model(ds, m, rule) for m in ds.models}
    pairs = []
    for a, b in itertools.combinations(ds.models, 2):
        disagreements = align_models(ds, a, b).support_disagreements()
        try:
            result = compare_pair(ds, a, b, rule, test, alternative)
            pairs.append(PairComparison(a, b, result, support_disagreements=disagreements))
        except (DegenerateTestError, InfiniteLossError) as exc:
            kind = "degenerate" if isinstance(exc, DegenerateTestError) else "infinite_loss"
            pairs.append(PairComparison(a, b, None, str(exc), kind, support_disagreements=disagreements))
    done = [p for p in pairs if p.result is not None]
    if holm and done:
        for p, adj in zip(done, holm_adjust([p.result.p_value for p in done])):
            p.adjusted_p = float(adj)
    for p in done:
        p.verdict = _verdict(p.result, p.adjusted_p if holm else p.result.p_value, alpha)
    return ComparisonReport(rule.name, test, alternative, alpha, holm, ds.n, summaries, pairs)
