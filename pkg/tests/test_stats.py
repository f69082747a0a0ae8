import itertools
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from propscore.exceptions import ConvergenceError, DegenerateTestError, InfiniteLossError
from propscore.stats import (
    PairedSample,
    betainc,
    exact_wilcoxon_tail,
    holm_adjust,
    paired_t_test,
    rank_with_ties,
    student_t_sf,
    wilcoxon_signed_rank,
)


def t_sf_quadrature(t, df, dps=30):
    """Upper tail of Student's t by adaptive quadrature of its density."""
    with mpmath.workdps(dps):
        t, df = mpmath.mpf(t), mpmath.mpf(df)
        c = mpmath.gamma((df + 1) / 2) / (mpmath.sqrt(df * mpmath.pi) * mpmath.gamma(df / 2))
        density = lambda x: c * (1 + x * x / df) ** (-(df + 1) / 2)  # noqa: E731
        pts = [t, mpmath.inf] if t >= 0 else [t, 0, mpmath.inf]
        return float(mpmath.quad(density, pts))


def wilcoxon_brute_force(ranks):
    """All 2**n sign assignments of the given ranks -> list of W+ values."""
    return [sum(r for r, s in zip(ranks, signs) if s) for signs in itertools.product((0, 1), repeat=len(ranks))]


# Student t ------------------------------------------------------------------


def test_student_t_sf_examples():
    for df in (1, 3.5, 40):
        assert student_t_sf(0.0, df) == 0.5
    assert student_t_sf(math.inf, 4) == 0.0
    assert student_t_sf(-math.inf, 4) == 1.0
    # frozen from the quadrature oracle: 0.07234931295225475893
    assert student_t_sf(1.8091, 4) == pytest.approx(0.0723493129522547589, rel=1e-12)
    assert student_t_sf(1.8091, 4) == pytest.approx(0.0723, abs=5e-5)


def test_student_t_sf_errors():
    with pytest.raises(ValueError):
        student_t_sf(1.0, 0)
    with pytest.raises(ValueError):
        student_t_sf(1.0, -2)
    with pytest.raises(ValueError):
        student_t_sf(math.nan, 3)


@pytest.mark.parametrize("df", [1, 2, 4, 10, 30, 100])
def test_student_t_sf_matches_quadrature(df):
    for t in (-7.3, -1.0, 0.4, 2.5, 9.9):
        assert student_t_sf(t, df) == pytest.approx(t_sf_quadrature(t, df), rel=1e-12)


def test_student_t_sf_symmetry_and_large_df():
    for df in (3, 250, 4999, 1e5):
        for t in (0.3, 1.7, 4.0):
            assert student_t_sf(t, df) + student_t_sf(-t, df) == pytest.approx(1.0, abs=1e-15)
            assert student_t_sf(t, df) == pytest.approx(scipy.stats.t.sf(t, df), rel=1e-10)


def test_betainc_against_mpmath():
    for a, b, x in [(2, 3, 0.4), (0.5, 0.5, 0.1), (50, 0.5, 0.9), (0.3, 7, 0.01), (10, 10, 0.5)]:
        oracle = float(mpmath.betainc(a, b, 0, x, regularized=True))
        assert betainc(a, b, x) == pytest.approx(oracle, rel=1e-13)
    assert betainc(2, 3, 0) == 0.0 and betainc(2, 3, 1) == 1.0
    with pytest.raises(ValueError):
        betainc(0, 1, 0.5)


def test_betainc_reports_nonconvergence(monkeypatch):
    import propscore.stats as stats

    monkeypatch.setattr(stats, "_CF_MAX_ITER", 2)
    with pytest.raises(ConvergenceError):
        betainc(200.0, 300.0, 0.4)


# Paired t-test --------------------------------------------------------------


def test_paired_t_zero_variance():
    with pytest.raises(DegenerateTestError) as info:
        paired_t_test([1, 2, 3], [1, 2, 3])
    assert info.value.direction == "tie"
    with pytest.raises(DegenerateTestError) as info:
        paired_t_test([2, 3, 4], [1, 2, 3])
    assert info.value.direction == "b_lower"


def test_paired_t_needs_two_pairs():
    with pytest.raises(DegenerateTestError):
        paired_t_test([1.0], [2.0])


def test_paired_t_symmetric_differences():
    r = paired_t_test([1.0, -1.0], [0.0, 0.0])
    assert r.statistic == 0.0
    assert r.p_two_sided == 1.0
    assert r.direction == "tie"


def test_paired_t_worked_example():
    a = [1.1, 2.0, 3.2, 4.1, 5.3]
    b = [1.0, 2.1, 3.0, 4.0, 5.0]
    d = [Fraction(x) - Fraction(y) for x, y in zip(a, b)]
    mean = sum(d) / 5
    var = sum((x - mean) ** 2 for x in d) / 4
    t_exact = float(mean) / math.sqrt(float(var) / 5)
    r = paired_t_test(a, b)
    assert r.statistic == pytest.approx(t_exact, rel=1e-14)
    assert r.statistic == pytest.approx(1.8091, abs=1e-4)
    assert r.df_or_n == 4
    # 2 * quadrature tail at the exact t: 0.14470399860633064593
    assert r.p_two_sided == pytest.approx(0.144703998606330646, rel=1e-12)
    assert r.p_two_sided == pytest.approx(0.1446, abs=2e-4)
    assert r.direction == "b_lower"


def test_paired_t_alternatives():
    a = np.array([0.2, 0.5, 0.1, 0.4, 0.3, 0.6])
    b = a + np.array([0.3, 0.1, 0.2, 0.25, 0.05, 0.4])
    two = paired_t_test(a, b)
    less = paired_t_test(a, b, "a_less")
    more = paired_t_test(a, b, "b_less")
    assert two.direction == "a_lower"
    assert less.p_one_sided == pytest.approx(two.p_two_sided / 2, rel=1e-12)
    assert more.p_one_sided == pytest.approx(1 - less.p_one_sided, rel=1e-12)
    ref = scipy.stats.ttest_rel(a, b, alternative="less")
    assert less.p_one_sided == pytest.approx(ref.pvalue, rel=1e-10)
    assert less.p_value == less.p_one_sided and two.p_value == two.p_two_sided


def test_paired_t_rejects_bad_alternative():
    with pytest.raises(ValueError):
        paired_t_test([1, 2], [2, 1], "greater")


def test_paired_sample_validation():
    with pytest.raises(ValueError):
        PairedSample([1, 2], [1])
    with pytest.raises(InfiniteLossError):
        PairedSample([1, math.inf], [1, 2])


def test_paired_t_matches_scipy(rng):
    for _ in range(20):
        a = rng.normal(size=30)
        b = a + rng.normal(0.1, 1, size=30)
        r = paired_t_test(a, b)
        ref = scipy.stats.ttest_rel(a, b)
        assert r.statistic == pytest.approx(ref.statistic, rel=1e-12)
        assert r.p_two_sided == pytest.approx(ref.pvalue, rel=1e-10)


# Wilcoxon -------------------------------------------------------------------


def test_wilcoxon_symmetric_pair():
    r = wilcoxon_signed_rank([1.0, -1.0], [0.0, 0.0])
    assert r.statistic == 1.5
    assert r.p_two_sided == 1.0
    assert r.method == "wilcoxon_normal"  # tied ranks rule out exact mode in auto
    exact = wilcoxon_signed_rank([1.0, -1.0], [0.0, 0.0], mode="exact")
    assert exact.p_two_sided == 1.0


def test_wilcoxon_worked_example():
    r = wilcoxon_signed_rank([1, -2, 3, -4, 5], [0, 0, 0, 0, 0])
    assert r.statistic == 9
    assert r.method == "wilcoxon_exact"
    # 13 of the 32 sign assignments reach W+ >= 9
    assert sum(w >= 9 for w in wilcoxon_brute_force([1, 2, 3, 4, 5])) == 13
    assert r.p_two_sided == 0.8125
    assert r.p_one_sided == 13 / 32


def test_wilcoxon_all_zero():
    with pytest.raises(DegenerateTestError):
        wilcoxon_signed_rank([0, 0, 0], [0, 0, 0])


def test_wilcoxon_drops_zeros_with_note():
    r = wilcoxon_signed_rank([1, 2, 3, 0, -1.5], [0, 0, 0, 0, 0])
    assert r.df_or_n == 4
    assert any("dropped 1 zero" in n for n in r.notes)


def test_exact_wilcoxon_tail_examples():
    assert exact_wilcoxon_tail(1, 1) == 0.5
    assert exact_wilcoxon_tail(2, 3) == 0.25
    assert exact_wilcoxon_tail(5, 9) == 0.40625
    assert exact_wilcoxon_tail(5, 0) == 1.0
    assert exact_wilcoxon_tail(5, 16) == 0.0
    for bad in (0, 26):
        with pytest.raises(ValueError):
            exact_wilcoxon_tail(bad, 1)


def test_exact_wilcoxon_tail_against_itertools():
    for n in range(1, 11):
        sums = wilcoxon_brute_force(range(1, n + 1))
        for w in range(n * (n + 1) // 2 + 1):
            assert exact_wilcoxon_tail(n, w) == sum(s >= w for s in sums) / 2 ** n


def test_exact_mode_with_ties_matches_brute_force():
    d = np.array([1.0, -1.0, 2.0, 2.0, -3.0, 4.0, 4.0, 4.0])
    ranks = rank_with_ties(np.abs(d))
    r = wilcoxon_signed_rank(d, np.zeros_like(d), mode="exact")
    sums = wilcoxon_brute_force(ranks)
    w = r.statistic
    upper = sum(s >= w - 1e-9 for s in sums) / 2 ** len(d)
    lower = sum(s <= w + 1e-9 for s in sums) / 2 ** len(d)
    assert r.p_two_sided == pytest.approx(min(1, 2 * min(upper, lower)), abs=1e-15)


def test_wilcoxon_normal_matches_scipy(rng):
    for _ in range(10):
        d = rng.normal(0.2, 1, size=60)
        r = wilcoxon_signed_rank(d, np.zeros(60), mode="normal_approx")
        ref = scipy.stats.wilcoxon(d, zero_method="wilcox", correction=True, method="approx")
        assert r.p_two_sided == pytest.approx(ref.pvalue, rel=1e-9)


def test_wilcoxon_exact_matches_scipy_exact(rng):
    for n in (6, 11, 20):
        d = rng.normal(0.3, 1, size=n)
        r = wilcoxon_signed_rank(d, np.zeros(n))
        ref = scipy.stats.wilcoxon(d, method="exact")
        assert r.p_two_sided == pytest.approx(ref.pvalue, rel=1e-12)


def test_wilcoxon_auto_switches_to_normal_above_25(rng):
    d = rng.normal(size=26)
    assert wilcoxon_signed_rank(d, np.zeros(26)).method == "wilcoxon_normal"
    assert wilcoxon_signed_rank(d[:25], np.zeros(25)).method == "wilcoxon_exact"


def test_rank_with_ties():
    assert rank_with_ties([3.0, 1.0, 3.0, 2.0]).tolist() == [3.5, 1.0, 3.5, 2.0]


# Holm -----------------------------------------------------------------------


def test_holm_examples():
    np.testing.assert_allclose(holm_adjust([0.01, 0.04]), [0.02, 0.04])
    np.testing.assert_allclose(holm_adjust([0.04, 0.01]), [0.04, 0.02])
    # monotonicity enforced: 0.03*2 = 0.06 must not drop below 0.01*3
    np.testing.assert_allclose(holm_adjust([0.03, 0.5, 0.02]), [0.06, 0.5, 0.06])
    assert holm_adjust([0.9, 0.8]).max() <= 1.0
    assert len(holm_adjust([])) == 0


# Properties -----------------------------------------------------------------

finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=3, max_size=30))
def test_tests_depend_only_on_differences(rows):
    a = np.array([r[0] for r in rows])
    b = np.array([r[1] for r in rows])
    for fn in (paired_t_test, wilcoxon_signed_rank):
        try:
            base = fn(a, b)
        except DegenerateTestError:
            continue
        shifted = fn(a - b, np.zeros_like(a))
        assert shifted == base


@pytest.mark.xfail(
    reason="n=1000, shift 0.1, unit noise gives t ~ 3.2 on average (p ~ 1e-3); "
    "p < 1e-6 needs t > 4.75 and holds only for a few seeds",
    strict=False,
)
def test_shift_detection_at_n_1000():
    rng = np.random.default_rng(2016)
    d = 0.1 + rng.normal(size=1000)
    for fn in (paired_t_test, wilcoxon_signed_rank):
        r = fn(d, np.zeros(1000), "b_less")
        assert r.direction == "b_lower"
        assert r.p_one_sided < 1e-6


def test_shift_detection_p_vanishes_as_n_grows():
    rng = np.random.default_rng(2016)
    noise = rng.normal(size=10_000)
    for fn in (paired_t_test, wilcoxon_signed_rank):
        p = [fn(0.1 + noise[:n], np.zeros(n), "b_less").p_one_sided for n in (1000, 4000, 10_000)]
        assert p[-1] < 1e-6
        assert p[0] > p[1] > p[2]


@pytest.mark.slow
def test_null_calibration():
    rng = np.random.default_rng(99)
    hits = {"t": 0, "w": 0}
    for _ in range(2000):
        d = rng.normal(size=50)
        hits["t"] += paired_t_test(d, np.zeros(50)).p_two_sided <= 0.05
        hits["w"] += wilcoxon_signed_rank(d, np.zeros(50)).p_two_sided <= 0.05
    assert hits["t"] / 2000 <= 0.07
    assert hits["w"] / 2000 <= 0.07


def test_mirrored_result():
    a = [0.3, 0.5, 0.2, 0.9]
    b = [0.4, 0.7, 0.1, 1.2]
    r = paired_t_test(a, b)
    m = paired_t_test(b, a)
    assert r.mirrored().direction == m.direction
    assert r.mirrored().statistic == pytest.approx(m.statistic, rel=1e-15)
    assert r.p_two_sided == pytest.approx(m.p_two_sided, rel=1e-15)
