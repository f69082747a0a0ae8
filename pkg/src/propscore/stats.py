"""Paired significance tests on per-observation losses.

Both tests look only at the differences ``d_i = a_i - b_i``, so any
per-observation term shared by the two models cancels.  Alternatives are
named from the point of view of the losses: ``"a_less"`` asks whether
model a's losses are systematically lower (a is better), ``"b_less"`` the
reverse.

The Student-t tail is computed from the regularized incomplete beta
function, evaluated by its continued fraction.  The exact Wilcoxon null
distribution is obtained by dynamic programming over (possibly averaged)
ranks; :func:`exact_wilcoxon_tail` provides an independent brute-force
enumeration of the same distribution for untied ranks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .exceptions import ConvergenceError, DegenerateTestError, InfiniteLossError

__all__ = [
    "ALTERNATIVES",
    "PairedSample",
    "TestResult",
    "betainc",
    "student_t_sf",
    "normal_sf",
    "paired_t_test",
    "wilcoxon_signed_rank",
    "exact_wilcoxon_tail",
    "holm_adjust",
    "rank_with_ties",
]

ALTERNATIVES = ("two_sided", "a_less", "b_less")
WILCOXON_EXACT_MAX_N = 25

_CF_TOL = 1e-14
_CF_MAX_ITER = 300
_TINY = 1e-300


@dataclass(frozen=True)
class PairedSample:
    """Two loss sequences paired by observation."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 1 or a.shape != b.shape:
            raise ValueError(f"paired samples must be 1-D with equal length, got {a.shape} and {b.shape}")
        if len(a) < 1:
            raise ValueError("paired sample is empty")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise InfiniteLossError("paired sample contains non-finite losses")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self):
        return len(self.a)

    @property
    def differences(self):
        return self.a - self.b


@dataclass(frozen=True)
class TestResult:
    """Outcome of a paired test.

    ``p_one_sided`` is the p-value of the requested one-sided alternative;
    for a two-sided request it is the smaller of the two tails, i.e. the
    one-sided p-value in the observed direction.  ``direction`` says which
    model had the lower losses: ``"a_lower"``, ``"b_lower"`` or ``"tie"``.
    """

    __test__ = False  # keep pytest from collecting this class

    method: str
    statistic: float
    df_or_n: float
    p_one_sided: float
    p_two_sided: float
    direction: str
    alternative: str = "two_sided"
    notes: tuple = field(default_factory=tuple)

    @property
    def p_value(self):
        """p-value of the requested alternative."""
        return self.p_two_sided if self.alternative == "two_sided" else self.p_one_sided

    def mirrored(self):
        """The same result with the roles of a and b exchanged."""
        swap = {"a_lower": "b_lower", "b_lower": "a_lower", "tie": "tie",
                "a_less": "b_less", "b_less": "a_less", "two_sided": "two_sided"}
        stat = -self.statistic if self.method == "paired_t" else self.statistic
        return TestResult(self.method, stat, self.df_or_n, self.p_one_sided, self.p_two_sided,
                          swap[self.direction], swap[self.alternative], self.notes)

    def to_dict(self):
        return {
            "method": self.method,
            "statistic": self.statistic,
            "df_or_n": self.df_or_n,
            "p_one_sided": self.p_one_sided,
            "p_two_sided": self.p_two_sided,
            "direction": self.direction,
            "alternative": self.alternative,
            "notes": list(self.notes),
        }


def _check_alternative(alternative):
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")


def _pick(upper, lower, alternative):
    """Combine tails.  ``upper`` is the tail favouring b (large differences)."""
    two = min(1.0, 2.0 * min(upper, lower))
    if alternative == "b_less":
        return upper, two
    if alternative == "a_less":
        return lower, two
    return min(upper, lower), two


# Special functions ----------------------------------------------------------


def _betacf(a, b, x):
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) <= _CF_TOL:
            return h
    raise ConvergenceError(
        f"incomplete beta continued fraction did not converge in {_CF_MAX_ITER} iterations "
        f"(a={a}, b={b}, x={x})"
    )


def _stirling_tail(x):
    # lgamma(x) minus its Stirling leading terms, for x >= 10
    x2 = x * x
    return (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - (1.0 / 1680.0 - 1.0 / (1188.0 * x2)) / x2) / x2) / x2) / x


def _lgamma_shift(x, b):
    """``lgamma(x + b) - lgamma(x)`` without cancellation when ``x >> b``."""
    if x < 10.0:
        return math.lgamma(x + b) - math.lgamma(x)
    y = x + b
    return (x - 0.5) * math.log1p(b / x) + b * math.log(y) - b + _stirling_tail(y) - _stirling_tail(x)


def _log_beta(a, b):
    if a < b:
        a, b = b, a
    return math.lgamma(b) - _lgamma_shift(a, b)


def _betainc_pair(a, b, x, y=None, log_x=None):
    """Return ``(I_x(a, b), 1 - I_x(a, b))``, each computed without cancellation.

    ``y`` is ``1 - x`` and ``log_x`` is ``ln x`` when the caller can supply
    them more accurately.
    """
    if y is None:
        y = 1.0 - x
    if x <= 0.0:
        return 0.0, 1.0
    if y <= 0.0:
        return 1.0, 0.0
    if log_x is None:
        log_x = math.log(x)
    log_front = a * log_x + b * math.log(y) - _log_beta(a, b)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        lower = front * _betacf(a, b, x) / a
        return lower, 1.0 - lower
    upper = front * _betacf(b, a, y) / b
    return 1.0 - upper, upper


def betainc(a, b, x):
    """Regularized incomplete beta function ``I_x(a, b)`` for ``a, b > 0``."""
    if not (a > 0 and b > 0):
        raise ValueError("betainc requires a > 0 and b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError("betainc requires 0 <= x <= 1")
    return _betainc_pair(a, b, x)[0]


def student_t_sf(t, df):
    """Upper tail ``P(T >= t)`` of Student's t distribution with ``df`` degrees of freedom.

    >>> student_t_sf(0.0, 7.0)
    0.5
    """
    if df <= 0 or math.isnan(df):
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    if math.isnan(t):
        raise ValueError("t must not be nan")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    if t == 0:
        return 0.5
    # P(|T| >= |t|) = I_x(df/2, 1/2) with x = df / (df + t^2)
    t2 = t * t
    two_tail, _ = _betainc_pair(
        0.5 * df, 0.5, df / (df + t2), t2 / (df + t2), log_x=-math.log1p(t2 / df)
    )
    half = 0.5 * two_tail
    return half if t > 0 else 1.0 - half


def normal_sf(z):
    """Upper tail of the standard normal distribution."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


# Tests ----------------------------------------------------------------------


def _fmean(x):
    return math.fsum(x) / len(x)


def paired_t_test(a, b, alternative="two_sided"):
    """Paired Student t-test on the losses ``a`` and ``b``.

    Parameters
    ----------
    a, b : array_like
        Per-observation losses of the two models, paired by index.
    alternative : {"two_sided", "a_less", "b_less"}
        ``"a_less"`` tests whether a's expected loss is lower.

    Returns
    -------
    TestResult
        ``statistic`` is ``mean(d) / (sd(d) / sqrt(n))`` with ``df = n - 1``.

    Raises
    ------
    DegenerateTestError
        Fewer than two pairs, or all differences identical.
    """
    _check_alternative(alternative)
    s = PairedSample(a, b)
    d = s.differences
    n = s.n
    if n < 2:
        raise DegenerateTestError("paired t-test needs at least 2 pairs")
    if np.all(d == d[0]):
        common = "tie" if d[0] == 0 else ("b_lower" if d[0] > 0 else "a_lower")
        raise DegenerateTestError("zero-variance differences: t statistic undefined", common)
    mean = _fmean(d)
    var = math.fsum((d - mean) ** 2) / (n - 1)
    se = math.sqrt(var / n)
    if se == 0:
        common = "tie" if mean == 0 else ("b_lower" if mean > 0 else "a_lower")
        raise DegenerateTestError("variance of differences underflows: t statistic undefined", common)
    t = mean / se
    df = n - 1
    upper = student_t_sf(t, df)
    lower = student_t_sf(-t, df)
    p_one, p_two = _pick(upper, lower, alternative)
    direction = "tie" if mean == 0 else ("b_lower" if mean > 0 else "a_lower")
    return TestResult("paired_t", t, float(df), p_one, p_two, direction, alternative)


def rank_with_ties(x):
    """Ranks 1..n of ``x`` with tied values sharing their average rank."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    start = 0
    n = len(x)
    while start < n:
        stop = start + 1
        while stop < n and xs[stop] == xs[start]:
            stop += 1
        ranks[order[start:stop]] = 0.5 * (start + 1 + stop)
        start = stop
    return ranks


def _signed_rank_distribution(doubled_ranks):
    """Null probabilities of ``2 W+`` for the given doubled (integer) ranks."""
    total = int(sum(doubled_ranks))
    prob = np.zeros(total + 1)
    prob[0] = 1.0
    top = 0
    for r in doubled_ranks:
        r = int(r)
        shifted = np.zeros_like(prob)
        shifted[r:top + r + 1] = prob[:top + 1]
        prob = 0.5 * (prob + shifted)
        top += r
    return prob


def wilcoxon_signed_rank(a, b, alternative="two_sided", mode="auto"):
    """Wilcoxon signed-rank test on the paired losses ``a`` and ``b``.

    Zero differences are dropped and the remaining ``|d_i|`` ranked with
    average ranks for ties.  The statistic is ``W+``, the rank sum of the
    positive differences.  ``mode="auto"`` uses the exact null distribution
    when at most 25 nonzero differences remain and there are no ties, and
    the normal approximation (continuity-corrected, tie-adjusted variance)
    otherwise.  ``mode="exact"`` with tied ranks uses the exact conditional
    distribution of the averaged ranks.
    """
    _check_alternative(alternative)
    if mode not in ("auto", "exact", "normal_approx"):
        raise ValueError(f"unknown mode {mode!r}")
    s = PairedSample(a, b)
    d = s.differences
    notes = []
    nonzero = d[d != 0]
    dropped = len(d) - len(nonzero)
    if dropped:
        notes.append(f"dropped {dropped} zero difference(s)")
    n = len(nonzero)
    if n == 0:
        raise DegenerateTestError("all differences are zero: Wilcoxon statistic undefined")

    ranks = rank_with_ties(np.abs(nonzero))
    w_plus = math.fsum(ranks[nonzero > 0])
    mean_w = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    has_ties = bool(np.any(tie_counts > 1))
    if has_ties:
        notes.append("tied absolute differences given average ranks")

    use_exact = mode == "exact" or (mode == "auto" and n <= WILCOXON_EXACT_MAX_N and not has_ties)
    if use_exact:
        doubled = np.rint(2 * ranks).astype(np.int64)
        prob = _signed_rank_distribution(doubled)
        k = int(round(2 * w_plus))
        upper = min(1.0, math.fsum(prob[k:]))
        lower = min(1.0, math.fsum(prob[:k + 1]))
        method = "wilcoxon_exact"
    else:
        tie_term = math.fsum(float(t) ** 3 - t for t in tie_counts) / 48.0
        var_w = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
        sd = math.sqrt(var_w)
        upper = normal_sf((w_plus - mean_w - 0.5) / sd)
        lower = normal_sf((mean_w - w_plus - 0.5) / sd)
        method = "wilcoxon_normal"
        notes.append("normal approximation with continuity correction")
    p_one, p_two = _pick(upper, lower, alternative)
    direction = "tie" if w_plus == mean_w else ("b_lower" if w_plus > mean_w else "a_lower")
    return TestResult(method, w_plus, float(n), p_one, p_two, direction, alternative, tuple(notes))


@lru_cache(maxsize=32)
def _enumerated_counts(n):
    # every entry of `sums` is W+ for one of the 2**n sign assignments
    sums = np.zeros(1, dtype=np.int32)
    for r in range(1, n + 1):
        sums = np.concatenate((sums, sums + r))
    return np.bincount(sums, minlength=n * (n + 1) // 2 + 1)


def exact_wilcoxon_tail(n, w):
    """``P(W+ >= w)`` for ``n`` untied ranks, by enumerating all ``2**n`` sign patterns.

    Supported for ``1 <= n <= 25``.
    """
    if not 1 <= n <= WILCOXON_EXACT_MAX_N:
        raise ValueError(f"exact enumeration supports 1 <= n <= {WILCOXON_EXACT_MAX_N}, got {n}")
    counts = _enumerated_counts(int(n))
    k = max(0, math.ceil(w - 1e-9))
    return float(counts[k:].sum()) / 2.0 ** n


def holm_adjust(pvalues):
    """Holm step-down adjusted p-values, returned in the input order.

    >>> holm_adjust([0.01, 0.04]).tolist()
    [0.02, 0.04]
    """
    p = np.asarray(pvalues, dtype=float)
    m = len(p)
    if m == 0:
        return p.copy()
    order = np.argsort(p, kind="mergesort")
    scaled = p[order] * (m - np.arange(m))
    adjusted = np.minimum(1.0, np.maximum.accumulate(scaled))
    out = np.empty(m)
    out[order] = adjusted
    return out
