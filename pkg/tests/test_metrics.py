import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marketedge.errors import EmptyInputError, UndefinedCorrelationError
from marketedge.market_model import MarketSpec, TripleBatch, sample_correlated_beta
from marketedge.metrics import (
    Breakdown,
    EstimatorReport,
    ProbabilityClampWarning,
    accuracy,
    bias,
    breakdown,
    calibration_curve,
    cond_variance,
    kl,
    mse,
    partial_corr_tm_given_r,
    pearson,
    xent,
)
from oracles import kahan_sum, pearson_kahan


@st.composite
def prob_pairs(draw):
    n = draw(st.integers(2, 6))
    p = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n)))
    q = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n)))
    return p / p.sum(), q / q.sum()


class TestPointMetrics:
    def test_mse_examples(self):
        assert mse([1, 2, 3], [1, 2, 3]) == 0.0
        assert mse([0, 0], [1, -1]) == 1.0

    def test_mse_matches_kahan(self):
        g = np.random.default_rng(1)
        a, b = g.random(10_000), g.random(10_000)
        assert abs(mse(a, b) - kahan_sum((b - a) ** 2) / a.size) < 1e-12

    def test_length_mismatch_and_empty(self):
        with pytest.raises(ValueError):
            mse([1, 2], [1])
        with pytest.raises(EmptyInputError):
            mse([], [])

    @settings(max_examples=100)
    @given(st.floats(-5, 5), st.lists(st.floats(-5, 5), min_size=1, max_size=50))
    def test_bias_variance_decomposition(self, truth, est):
        truth = np.full(len(est), truth)
        assert abs(mse(truth, est) - (bias(truth, est) ** 2 + cond_variance(truth, est))) < 1e-10


class TestXent:
    def test_examples(self):
        assert abs(xent([1], [0.5]) - math.log(2)) < 1e-15
        assert abs(xent([1, 0], [0.9, 0.1]) + math.log(0.9)) < 1e-15

    def test_clamp_warning_counts(self):
        with pytest.warns(ProbabilityClampWarning) as rec:
            v = xent([1, 0, 1], [1.0, 0.0, 0.5])
        assert rec[0].message.count == 2
        assert np.isfinite(v)

    def test_no_warning_inside(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            xent([1, 0], [0.3, 0.6])

    def test_entropy_bound_and_kl_gap(self):
        g = np.random.default_rng(2)
        n = 1_000_000
        r = g.uniform(0.2, 0.8, n)
        y = (g.random(n) < r).astype(float)
        t = np.clip(r + 0.1, 0.01, 0.99)
        entropy = float(np.mean(-(r * np.log(r) + (1 - r) * np.log(1 - r))))
        assert abs(xent(y, r) - entropy) < 0.01
        mean_kl = float(np.mean(r * np.log(r / t) + (1 - r) * np.log((1 - r) / (1 - t))))
        assert abs((xent(y, t) - xent(y, r)) - mean_kl) < 0.01


class TestKl:
    def test_examples(self):
        assert kl([0.3, 0.7], [0.3, 0.7]) == 0.0
        expect = 0.5 * math.log(0.5 / 0.3) + 0.5 * math.log(0.5 / 0.7)
        assert abs(kl([0.5, 0.5], [0.3, 0.7]) - expect) < 1e-15
        assert kl([0.5, 0.5], [0.3, 0.7]) != kl([0.3, 0.7], [0.5, 0.5])

    @settings(max_examples=300)
    @given(prob_pairs())
    def test_nonnegative_zero_iff_equal(self, pq):
        p, q = pq
        d = kl(p, q)
        assert d >= -1e-15
        if np.max(np.abs(p - q)) > 1e-6:
            assert d > 0
        assert kl(p, p) == 0.0


class TestCorrelation:
    def test_pearson_matches_kahan(self):
        g = np.random.default_rng(3)
        x = g.normal(size=10_000)
        y = 0.3 * x + g.normal(size=10_000)
        assert abs(pearson(x, y) - pearson_kahan(x, y)) < 1e-12

    def test_pearson_constant(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson([1, 1, 1], [1, 2, 3])

    def test_partial_identical(self):
        g = np.random.default_rng(4)
        r, m = g.random(1000), g.random(1000)
        assert abs(partial_corr_tm_given_r(TripleBatch(r, m, m)) - 1.0) < 1e-12

    def test_partial_independent(self):
        g = np.random.default_rng(13)
        r = g.random(100_000)
        m = r + 0.2 * g.normal(size=r.size)
        t = r + 0.2 * g.normal(size=r.size)
        assert abs(partial_corr_tm_given_r(TripleBatch(r, m, t))) < 0.01

    def test_partial_mirror(self):
        g = np.random.default_rng(5)
        r = g.random(10_000)
        m = r + 0.1 * g.normal(size=r.size)
        t = 2 * r - m + 1e-9 * g.normal(size=r.size)
        assert abs(partial_corr_tm_given_r(TripleBatch(r, m, t)) + 1.0) < 1e-3

    @settings(max_examples=50)
    @given(st.floats(0.1, 10), st.floats(-5, 5), st.floats(0.1, 10), st.floats(-5, 5))
    def test_partial_affine_invariant(self, a, b, c, d):
        g = np.random.default_rng(6)
        r = g.random(500)
        m = r + g.normal(size=500)
        t = r + 0.5 * m + g.normal(size=500)
        base = partial_corr_tm_given_r(TripleBatch(r, m, t))
        scaled = partial_corr_tm_given_r(TripleBatch(r, c * m + d, a * t + b))
        assert abs(base - scaled) < 1e-9

    def test_partial_undefined(self):
        r = np.linspace(0, 1, 10)
        with pytest.raises(UndefinedCorrelationError):
            partial_corr_tm_given_r(TripleBatch(r, 2 * r + 1, r))


class TestBreakdown:
    def test_identical_predictors(self):
        g = np.random.default_rng(7)
        y, t = g.random(1000) < 0.5, g.random(1000)
        b = breakdown(y, t, t)
        assert b.missed == 0 and b.spotted == 0

    def test_spotted(self):
        y = np.array([1, 0, 1, 0])
        b = breakdown(y, [0.9, 0.1, 0.8, 0.2], [0.1, 0.9, 0.2, 0.8])
        assert b == Breakdown(0.0, 0.0, 0.0, 1.0)

    def test_reference_cell(self):
        spec = MarketSpec(corr_tr=0.85, corr_tm=0.85, corr_rm=0.9)
        b = sample_correlated_beta(spec, 300_000, seed=1)
        y = np.random.default_rng(8).random(len(b)) < b.r
        assert abs(100 * breakdown(y, b.t, b.m).spotted - 8.12) < 1.5

    @settings(max_examples=100)
    @given(st.integers(1, 200), st.integers(0, 1000))
    def test_sums_to_one(self, n, seed):
        g = np.random.default_rng(seed)
        b = breakdown(g.random(n) < 0.5, g.random(n), g.random(n))
        assert b.consensus + b.upset + b.missed + b.spotted == pytest.approx(1.0, abs=1e-12)

    def test_accuracy(self):
        assert accuracy([1, 0, 1, 0], [0.9, 0.4, 0.2, 0.6]) == 0.5


class TestCalibration:
    def test_calibrated(self):
        g = np.random.default_rng(9)
        p = g.random(1_000_000)
        y = g.random(p.size) < p
        c = calibration_curve(y, p)
        assert np.nanmax(np.abs(c.gap)) < 0.01
        assert c.weighted_gap < 0.01

    def test_shifted(self):
        g = np.random.default_rng(10)
        p = g.uniform(0.0, 0.95, 1_000_000)
        y = g.random(p.size) < p
        c = calibration_curve(y, p + 0.05)
        ok = c.count > 1000
        np.testing.assert_allclose(c.gap[ok], -0.05, atol=0.01)

    def test_small_sample_reports_counts(self):
        g = np.random.default_rng(11)
        p = g.beta(0.5, 4, 100)
        c = calibration_curve(g.random(100) < p, p)
        assert c.count.sum() == 100
        csv = c.to_csv()
        assert csv.startswith("bin_lo,bin_hi,mean_prob,emp_freq,count\n")
        assert len(csv.splitlines()) == 11

    def test_bins_validated(self):
        with pytest.raises(ValueError):
            calibration_curve([1], [0.5], bins=1)


class TestReport:
    def test_row(self):
        g = np.random.default_rng(12)
        r = g.uniform(0.1, 0.9, 1000)
        m = np.clip(r + 0.05 * g.normal(size=1000), 0.01, 0.99)
        t = np.clip(r + 0.05 * g.normal(size=1000), 0.01, 0.99)
        y = g.random(1000) < r
        rep = EstimatorReport.from_arrays(r, m, t, y)
        assert len(rep.to_csv_row().split(",")) == len(EstimatorReport.CSV_HEADER.split(","))
        assert rep.mse == pytest.approx(rep.bias**2 + rep.cond_variance, abs=1e-12)
