"""Monte-Carlo validation of model comparisons against known ground truth.

A state of the world is a true outcome distribution ``f`` drawn from a
family on the simplex.  One outcome is drawn from each ``f``, and every
model predicts a deterministic perturbation of ``f``, so which model is
truly better (lower expected divergence from ``f``) is known exactly.
:func:`run_experiment` then checks how often the paired comparison
recovers that ordering.

Random streams: an experiment with master seed ``s`` and ``R``
replications spawns ``numpy.random.SeedSequence(s).spawn(R + 1)``.  Child 0
drives the ground-truth estimate and child ``r + 1`` drives replication
``r``; each child seeds its own ``numpy.random.Generator(PCG64)``.  Results
therefore do not depend on how replications are scheduled.

States are drawn i.i.d.; repeated states are allowed by the framework but
would make the paired observations dependent, so they are never forced.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .comparison import SCHEMA_VERSION, TESTS, run_test, to_json_value
from .dataset import PredictionDataset
from .exceptions import DegenerateTestError, InfiniteLossError
from .scoring import compensated_sum, expected_loss, get_rule
from .stats import ALTERNATIVES, PairedSample

__all__ = [
    "DirichletFamily",
    "FixedFamily",
    "Perturbation",
    "GapEstimate",
    "ExperimentConfig",
    "RecoveryResult",
    "sample_state",
    "sample_states",
    "sample_outcome",
    "sample_outcomes",
    "true_expected_loss_gap",
    "run_experiment",
    "simulate_dataset",
    "load_config",
]

BOUNDARY = 1e-12


@dataclass(frozen=True)
class DirichletFamily:
    """Dirichlet distribution over true outcome distributions."""

    alpha: tuple

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        if len(alpha) < 2 or not all(a > 0 and math.isfinite(a) for a in alpha):
            raise ValueError("Dirichlet alpha needs >= 2 positive entries")
        object.__setattr__(self, "alpha", alpha)

    @property
    def K(self):
        return len(self.alpha)

    def sample(self, rng, size):
        # numpy's standard_gamma uses the Marsaglia-Tsang squeeze method
        g = rng.standard_gamma(np.array(self.alpha), size=(size, self.K))
        return g / compensated_sum(g)[:, None]

    def to_dict(self):
        return {"kind": "dirichlet", "alpha": list(self.alpha)}


@dataclass(frozen=True)
class FixedFamily:
    """Degenerate family: every state has the same true distribution."""

    f: tuple

    def __post_init__(self):
        f = tuple(float(v) for v in self.f)
        if len(f) < 2 or min(f) < 0 or abs(math.fsum(f) - 1.0) > 1e-9:
            raise ValueError("fixed state must be a probability vector")
        object.__setattr__(self, "f", f)

    @property
    def K(self):
        return len(self.f)

    def sample(self, rng, size):
        return np.tile(np.array(self.f), (size, 1))

    def to_dict(self):
        return {"kind": "fixed", "f": list(self.f)}


def family_from_dict(d):
    kind = d.get("kind")
    if kind == "dirichlet":
        return DirichletFamily(tuple(d["alpha"]))
    if kind == "fixed":
        return FixedFamily(tuple(d["f"]))
    raise ValueError(f"unknown state family {kind!r}")


@dataclass(frozen=True)
class Perturbation:
    """A model that maps each true distribution ``f`` to a prediction.

    kinds: ``truthful`` (f itself), ``uniform_mixture`` ((1-w) f + w/K),
    ``temperature`` (f**(1/tau) renormalized) and ``fixed`` (constant q).
    """

    kind: str = "truthful"
    w: float | None = None
    tau: float | None = None
    q: tuple | None = None

    def __post_init__(self):
        if self.kind == "uniform_mixture":
            if self.w is None or not 0 <= self.w <= 1:
                raise ValueError("uniform_mixture needs 0 <= w <= 1")
        elif self.kind == "temperature":
            if self.tau is None or not self.tau > 0:
                raise ValueError("temperature needs tau > 0")
        elif self.kind == "fixed":
            if self.q is None:
                raise ValueError("fixed needs q")
            q = tuple(float(v) for v in self.q)
            if min(q) < 0 or abs(math.fsum(q) - 1.0) > 1e-9:
                raise ValueError("fixed q must be a probability vector")
            object.__setattr__(self, "q", q)
        elif self.kind != "truthful":
            raise ValueError(f"unknown perturbation kind {self.kind!r}")

    @classmethod
    def truthful(cls):
        return cls("truthful")

    @classmethod
    def uniform_mixture(cls, w):
        return cls("uniform_mixture", w=float(w))

    @classmethod
    def temperature(cls, tau):
        return cls("temperature", tau=float(tau))

    @classmethod
    def fixed(cls, q):
        return cls("fixed", q=tuple(q))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind", "truthful")
        if "q" in d:
            d["q"] = tuple(d["q"])
        return cls(kind, **d)

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items() if v is not None}

    def apply(self, f):
        f = np.asarray(f, dtype=float)
        if self.kind == "truthful":
            return f.copy()
        K = f.shape[-1]
        if self.kind == "uniform_mixture":
            return (1.0 - self.w) * f + self.w / K
        if self.kind == "temperature":
            p = f ** (1.0 / self.tau)
            return p / compensated_sum(p)[..., None]
        q = np.array(self.q)
        if len(q) != K:
            raise ValueError(f"fixed q has K={len(q)}, states have K={K}")
        return np.broadcast_to(q, f.shape).copy()


def sample_states(family, rng, n, interior=False):
    """Draw ``n`` true distributions; returns ``(states, resampled_count)``.

    With ``interior=True`` draws with any coordinate below 1e-12 are redrawn.
    """
    F = family.sample(rng, n)
    resampled = 0
    if interior and isinstance(family, DirichletFamily):
        for _ in range(1000):
            bad = np.flatnonzero(np.any(F < BOUNDARY, axis=1))
            if len(bad) == 0:
                break
            resampled += len(bad)
            F[bad] = family.sample(rng, len(bad))
        else:
            raise RuntimeError("could not draw interior states; increase the Dirichlet concentration")
    elif interior and np.any(F < BOUNDARY):
        raise ValueError("fixed state has a coordinate on the simplex boundary")
    return F, resampled


def sample_state(family, rng):
    """Draw one true outcome distribution."""
    return family.sample(rng, 1)[0]


def sample_outcomes(F, rng):
    """Inverse-CDF categorical draw of one outcome index per row of ``F``."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    cum = np.cumsum(F, axis=1)
    u = rng.random(len(F)) * cum[:, -1]
    idx = np.count_nonzero(cum <= u[:, None], axis=1)
    return np.minimum(idx, F.shape[1] - 1)


def sample_outcome(f, rng):
    """Draw one outcome index from the distribution ``f``."""
    return int(sample_outcomes(np.asarray(f)[None, :], rng)[0])


def _needs_interior(rule, *perts):
    return get_rule(rule).generator.interior_only or any(p.kind == "temperature" for p in perts)


@dataclass(frozen=True)
class GapEstimate:
    gap: float
    stderr: float
    draws: int
    resampled: int = 0


def true_expected_loss_gap(family, pert_a, pert_b, rule="log", draws=20000, rng=None):
    """Monte-Carlo estimate of ``E_f[expected_loss(f, a(f))] - E_f[expected_loss(f, b(f))]``.

    The inner expectation over outcomes is exact; only the draw of states
    is random.  The entropy terms cancel, so this is also the gap in
    expected divergence.  For a fixed family the result is exact.
    """
    rule = get_rule(rule)
    if rng is None:
        rng = np.random.default_rng(0)
    if isinstance(family, FixedFamily):
        draws = 1
    F, resampled = sample_states(family, rng, draws, _needs_interior(rule, pert_a, pert_b))
    if pert_a == pert_b:
        return GapEstimate(0.0, 0.0, draws, resampled)
    per_state = expected_loss(rule, F, pert_a.apply(F)) - expected_loss(rule, F, pert_b.apply(F))
    per_state = np.atleast_1d(per_state)
    gap = math.fsum(per_state) / len(per_state)
    if len(per_state) > 1:
        se = math.sqrt(math.fsum((per_state - gap) ** 2) / (len(per_state) - 1) / len(per_state))
    else:
        se = 0.0
    return GapEstimate(gap, se, draws, resampled)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a recovery experiment.

    ``models`` maps two names to perturbations; the first is model a.
    ``null`` marks an experiment whose models are known to be equally good;
    left as None it is inferred from the two perturbations being equal.
    """

    family: DirichletFamily | FixedFamily
    models: dict
    n: int = 1000
    replications: int = 100
    rule: str = "log"
    test: str = "t"
    alternative: str = "two_sided"
    alpha: float = 0.05
    seed: int = 0
    truth_draws: int = 20000
    null: bool | None = None

    def __post_init__(self):
        if len(self.models) != 2:
            raise ValueError("an experiment compares exactly 2 models")
        models = {str(k): (v if isinstance(v, Perturbation) else Perturbation.from_dict(v))
                  for k, v in self.models.items()}
        object.__setattr__(self, "models", models)
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        get_rule(self.rule)
        if self.test not in TESTS:
            raise ValueError(f"test must be one of {TESTS}")
        if self.alternative not in ALTERNATIVES:
            raise ValueError(f"alternative must be one of {ALTERNATIVES}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.truth_draws < 1:
            raise ValueError("truth_draws must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        for p in models.values():
            if p.kind == "fixed" and len(p.q) != self.family.K:
                raise ValueError("fixed model q has the wrong number of outcomes")

    @property
    def model_names(self):
        return tuple(self.models)

    @property
    def is_null(self):
        if self.null is not None:
            return bool(self.null)
        a, b = self.models.values()
        return a == b

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown config key(s): {sorted(unknown)}")
        if "family" not in d or "models" not in d:
            raise ValueError("config needs 'family' and 'models'")
        d["family"] = family_from_dict(d["family"])
        return cls(**d)

    def to_dict(self):
        return {
            "family": self.family.to_dict(),
            "models": {k: v.to_dict() for k, v in self.models.items()},
            "n": self.n,
            "replications": self.replications,
            "rule": self.rule,
            "test": self.test,
            "alternative": self.alternative,
            "alpha": self.alpha,
            "seed": int(self.seed),
            "truth_draws": self.truth_draws,
            "null": self.null,
        }


def load_config(path):
    """Read an :class:`ExperimentConfig` from a JSON file."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"invalid JSON in config: {exc}") from None
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    return ExperimentConfig.from_dict(data)


@dataclass
class RecoveryResult:
    config: ExperimentConfig
    p_values: list
    directions: list
    empirical_gaps: list
    empirical_gap_stderrs: list
    degenerate_count: int
    resampled_states: int
    true_gap: GapEstimate
    recovery_rate: float | None = None
    false_positive_rate: float | None = None
    errors: list = field(default_factory=list)

    @property
    def mean_empirical_gap(self):
        return math.fsum(self.empirical_gaps) / len(self.empirical_gaps)

    def to_dict(self):
        cfg = self.config
        d = {
            "schema_version": SCHEMA_VERSION,
            "kind": "simulation",
            "rule": get_rule(cfg.rule).name,
            "test": cfg.test,
            "alternative": cfg.alternative,
            "alpha": cfg.alpha,
            "n": cfg.n,
            "config": cfg.to_dict(),
            "replications": cfg.replications,
            "null_experiment": cfg.is_null,
            "p_values": self.p_values,
            "directions": self.directions,
            "empirical_gaps": self.empirical_gaps,
            "empirical_gap_stderrs": self.empirical_gap_stderrs,
            "mean_empirical_gap": self.mean_empirical_gap,
            "true_gap": self.true_gap.gap,
            "true_gap_stderr": self.true_gap.stderr,
            "truly_better": _truly_better(cfg, self.true_gap),
            "degenerate_count": self.degenerate_count,
            "resampled_states": self.resampled_states,
            "errors": self.errors,
        }
        if cfg.is_null:
            d["false_positive_rate"] = self.false_positive_rate
        else:
            d["recovery_rate"] = self.recovery_rate
        return to_json_value(d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"


def _truly_better(cfg, gap):
    if cfg.is_null or gap.gap == 0:
        return None
    a, b = cfg.model_names
    return a if gap.gap < 0 else b


def _replicate(cfg, rule, seed_seq):
    rng = np.random.default_rng(seed_seq)
    pa, pb = cfg.models.values()
    F, resampled = sample_states(cfg.family, rng, cfg.n, _needs_interior(rule, pa, pb))
    x = sample_outcomes(F, rng)
    la = rule.loss(pa.apply(F), x)
    lb = rule.loss(pb.apply(F), x)
    d = la - lb
    if np.all(np.isfinite(d)):
        gap = math.fsum(d) / cfg.n
        se = math.sqrt(math.fsum((d - gap) ** 2) / (cfg.n - 1) / cfg.n)
    else:
        gap, se = math.nan, math.nan
    try:
        res = run_test(PairedSample(la, lb), cfg.test, cfg.alternative)
        return res, None, gap, se, resampled
    except (DegenerateTestError, InfiniteLossError) as exc:
        return None, str(exc), gap, se, resampled


def run_experiment(cfg, workers=1):
    """Run ``cfg.replications`` independent comparisons and score their verdicts.

    A replication recovers the truth when its p-value for the configured
    alternative is at most ``alpha`` and its direction points at the model
    with the lower true expected loss.  Degenerate replications count as
    non-recoveries (and as non-rejections under the null) and are reported
    in ``degenerate_count``.  The result is identical for any ``workers``.
    """
    rule = get_rule(cfg.rule)
    children = np.random.SeedSequence(int(cfg.seed)).spawn(cfg.replications + 1)
    a, b = cfg.models.values()
    truth = true_expected_loss_gap(cfg.family, a, b, rule, cfg.truth_draws, np.random.default_rng(children[0]))

    def job(child):
        return _replicate(cfg, rule, child)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(job, children[1:]))
    else:
        outs = [job(c) for c in children[1:]]

    p_values, directions, gaps, ses, errors = [], [], [], [], []
    degenerate = 0
    resampled = truth.resampled
    for res, err, gap, se, rs in outs:
        resampled += rs
        gaps.append(gap)
        ses.append(se)
        if res is None:
            degenerate += 1
            p_values.append(None)
            directions.append(None)
            if err not in errors:
                errors.append(err)
        else:
            p_values.append(res.p_value)
            directions.append(res.direction)

    result = RecoveryResult(cfg, p_values, directions, gaps, ses, degenerate, resampled, truth, errors=errors)
    R = cfg.replications
    if cfg.is_null:
        rejected = sum(1 for p in p_values if p is not None and p <= cfg.alpha)
        result.false_positive_rate = rejected / R
    else:
        better = _truly_better(cfg, truth)
        want = "a_lower" if better == cfg.model_names[0] else "b_lower"
        hits = sum(1 for p, d in zip(p_values, directions) if p is not None and p <= cfg.alpha and d == want)
        result.recovery_rate = hits / R if better is not None else None
    return result


def simulate_dataset(family, models, n, seed=0, labels=None):
    """Draw a synthetic held-out dataset with one prediction per model.

    ``models`` maps names to :class:`Perturbation` objects.  Returns the
    dataset together with the true distributions of its observations.
    """
    rng = np.random.default_rng(seed)
    perts = {k: (v if isinstance(v, Perturbation) else Perturbation.from_dict(v)) for k, v in models.items()}
    F, _ = sample_states(family, rng, n, interior=any(p.kind == "temperature" for p in perts.values()))
    x = sample_outcomes(F, rng)
    K = family.K
    labels = list(labels) if labels is not None else [f"o{j}" for j in range(K)]
    width = len(str(n))
    ids = [f"obs-{i:0{width}d}" for i in range(1, n + 1)]
    probs = {}
    for name, p in perts.items():
        q = p.apply(F)
        probs[name] = q / compensated_sum(q)[:, None]
    return PredictionDataset(labels, list(perts), ids, x, probs), F
