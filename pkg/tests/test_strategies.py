import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from marketedge.errors import BudgetError, DomainError, NoPositiveEdgeError, RuinDomainError
from marketedge.metrics import kl
from marketedge.strategies import (
    Allocation,
    StrategyConfig,
    allocate_fractional_kelly,
    allocate_kelly,
    allocate_mpt,
    allocate_sharpe,
    allocate_unif,
    bet_profit_moments,
    kelly_growth,
    kelly_taylor_mpt_check,
    kl_growth_identity,
    mpt_objective,
    project_simplex,
    sharpe_ratio,
)
from oracles import grid_maximize, mpt_values, sharpe_values


def _simplex_vec(draw, n):
    w = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n)))
    return w / w.sum()


@st.composite
def prob_triples(draw):
    n = draw(st.integers(2, 6))
    return _simplex_vec(draw, n), _simplex_vec(draw, n), _simplex_vec(draw, n)


class TestAllocation:
    def test_invariants(self):
        with pytest.raises(DomainError):
            Allocation(np.array([-0.1, 0.5]), 0.6)
        with pytest.raises(DomainError):
            Allocation(np.array([0.2, 0.2]), 0.5)
        with pytest.raises(BudgetError):
            Allocation.from_fractions([0.7, 0.6])

    def test_strategy_config_validation(self):
        with pytest.raises(DomainError):
            StrategyConfig("martingale")
        with pytest.raises(DomainError):
            StrategyConfig("fractional_kelly", kelly_fraction=1.5)
        with pytest.raises(DomainError):
            StrategyConfig(log_base="two")


class TestUnif:
    def test_examples(self):
        a = allocate_unif([0.2, -0.1, 0.05], 0.01)
        np.testing.assert_allclose(a.fractions, [0.01, 0, 0.01])
        np.testing.assert_allclose(a.cash, 0.98)
        a = allocate_unif([-0.2, 0.0], 0.01)
        assert a.cash == 1.0 and not a.fractions.any()

    def test_budget(self):
        with pytest.raises(BudgetError):
            allocate_unif([0.5] * 200, 0.01)


class TestKelly:
    @pytest.mark.parametrize("t", [[0.3, 0.7], [0.5, 0.5], [0.7, 0.3]])
    def test_bets_beliefs(self, t):
        a = allocate_kelly(t)
        np.testing.assert_array_equal(a.fractions, t)
        assert a.cash == 0.0

    def test_fractional(self):
        a = allocate_fractional_kelly([0.3, 0.7], 0.5)
        np.testing.assert_allclose(a.fractions, [0.15, 0.35])
        assert a.cash == 0.5
        a = allocate_fractional_kelly([0.7, 0.3], 0.5)
        np.testing.assert_allclose(a.fractions, [0.35, 0.15])
        full = allocate_fractional_kelly([0.3, 0.7], 1.0)
        np.testing.assert_array_equal(full.fractions, allocate_kelly([0.3, 0.7]).fractions)
        with pytest.raises(DomainError):
            allocate_fractional_kelly([0.3, 0.7], 0.0)

    def test_growth_examples(self):
        r, m = [0.5, 0.5], [0.3, 0.7]
        half_decorrelated = Allocation(np.array([0.35, 0.15]), 0.5)
        # frozen from direct evaluation: 0.5*log10(0.5+0.35/0.3) + 0.5*log10(0.5+0.15/0.7)
        assert abs(kelly_growth(r, half_decorrelated, m, "ten") - 0.037860356969059185) < 1e-15
        assert abs(kelly_growth(r, half_decorrelated, m, "ten") - 0.038) <= 0.001
        for base in ("natural", "ten"):
            assert abs(kelly_growth(r, Allocation(np.array([0.15, 0.35]), 0.5), m, base)) < 1e-15
            assert abs(kelly_growth(r, Allocation(np.array([0.3, 0.7]), 0.0), m, base)) < 1e-15

    def test_swap_keeps_full_kelly_growth(self):
        # reshuffling t that preserves KL(r||t) leaves full-Kelly growth unchanged
        r, m = [0.5, 0.5], [0.3, 0.7]
        g1 = kelly_growth(r, allocate_kelly([0.3, 0.7]), m)
        g2 = kelly_growth(r, allocate_kelly([0.7, 0.3]), m)
        assert abs(g1 - g2) < 1e-15 and abs(g1) < 1e-15

    def test_ruin(self):
        with pytest.raises(RuinDomainError):
            kelly_growth([0.5, 0.5], Allocation(np.array([1.0, 0.0]), 0.0), [0.5, 0.5])


class TestKlIdentity:
    def test_examples(self):
        r = np.array([0.3, 0.7])
        g, klm, klt = kl_growth_identity(r, r, [0.6, 0.4])
        assert abs(g - klm) < 1e-15 and klt == 0.0 and g > 0
        g, *_ = kl_growth_identity([0.2, 0.8], [0.6, 0.4], [0.6, 0.4])
        assert abs(g) < 1e-15
        g, klm, klt = kl_growth_identity([0.5, 0.5], [0.7, 0.3], [0.3, 0.7])
        expect = 0.5 * math.log(0.5 / 0.3) + 0.5 * math.log(0.5 / 0.7)
        np.testing.assert_allclose([klm, klt], [expect, expect], rtol=1e-15)
        assert abs(g) < 1e-15

    @settings(max_examples=300)
    @given(prob_triples(), st.sampled_from(["natural", "ten"]))
    def test_identity(self, rtm, base):
        r, t, m = rtm
        g, klm, klt = kl_growth_identity(r, t, m, base)
        assert abs(g - (klm - klt)) < 1e-12


class TestMoments:
    def test_examples(self):
        np.testing.assert_allclose(bet_profit_moments(0.5, 0.5, 0.1), (0.0, 0.01), atol=1e-15)
        assert bet_profit_moments(0.3, 0.4, 0.0) == (0.0, 0.0)
        mean, var = bet_profit_moments(0.5, 0.3, 0.1)
        np.testing.assert_allclose([mean, var], [0.0667, 0.02778], atol=5e-5)

    def test_monte_carlo_oracle(self):
        g = np.random.default_rng(0)
        win = g.random(2_000_000) < 0.5
        profit = np.where(win, 0.1 * (1 / 0.3 - 1), -0.1)
        mean, var = bet_profit_moments(0.5, 0.3, 0.1)
        assert abs(profit.mean() - mean) < 4 * math.sqrt(var / profit.size)
        assert abs(profit.var() - var) < 0.01 * var


class TestSharpe:
    def test_examples(self):
        np.testing.assert_allclose(allocate_sharpe([1, 1], [1, 1]).fractions, [0.5, 0.5])
        np.testing.assert_array_equal(allocate_sharpe([1, 0], [1, 1]).fractions, [1, 0])

    def test_two_to_one(self):
        # frozen from the grid oracle below: [2/3, 1/3] with ratio sqrt(5)
        f = allocate_sharpe([2, 1], [1, 1]).fractions
        np.testing.assert_allclose(f, [2 / 3, 1 / 3], atol=1e-3)
        best, value = grid_maximize(sharpe_values([2, 1], [1, 1]), 2)
        np.testing.assert_allclose(best, [2 / 3, 1 / 3], atol=1e-6)
        np.testing.assert_allclose(value, math.sqrt(5), rtol=1e-12)
        assert sharpe_ratio([2, 1], [1, 1], f) >= value - 1e-12

    def test_single_bet_full_stake(self):
        np.testing.assert_array_equal(allocate_sharpe([0.3, -0.1], [0.2, 0.2]).fractions, [1, 0])

    def test_no_edge(self):
        with pytest.raises(NoPositiveEdgeError):
            allocate_sharpe([-1, 0], [1, 1])

    @settings(max_examples=200)
    @given(
        arrays(float, 4, elements=st.floats(-1, 1)),
        arrays(float, 4, elements=st.floats(0.01, 2)),
        st.floats(0.01, 100),
    )
    def test_scale_invariance(self, mu, var, c):
        if not (mu > 0).any():
            return
        a = allocate_sharpe(mu, var).fractions
        b = allocate_sharpe(c * mu, c * c * var).fractions
        np.testing.assert_allclose(a, b, atol=1e-12)
        assert abs(a.sum() - 1) < 1e-12 and (a >= 0).all()


class TestMpt:
    def test_examples(self):
        np.testing.assert_allclose(allocate_mpt([1, 1], np.eye(2), 1.0).fractions, [0.5, 0.5], atol=1e-9)
        np.testing.assert_array_equal(allocate_mpt([0.1, 0.3, 0.2], np.eye(3), 0.0).fractions, [0, 1, 0])

    def test_corner_against_grid(self):
        mu, cov = [0.1, 0.05], np.diag([0.04, 0.01])
        best, value = grid_maximize(mpt_values(mu, cov, 0.5), 2)
        f = allocate_mpt(mu, cov, 0.5).fractions
        np.testing.assert_allclose(f, best, atol=1e-3)
        np.testing.assert_allclose(f, [1.0, 0.0], atol=1e-12)  # frozen: unconstrained optimum 1.2 clips to 1

    def test_interior_closed_form(self):
        # equal variances: f_1 - f_2 = (mu_1 - mu_2) / (2 gamma var)
        f = allocate_mpt([0.2, 0.1], np.diag([0.5, 0.5]), 0.5).fractions
        np.testing.assert_allclose(f, [0.6, 0.4], atol=1e-10)

    def test_validation(self):
        with pytest.raises(DomainError):
            allocate_mpt([1, 1], np.array([[1, 2], [2, 1]]), 1.0)
        with pytest.raises(DomainError):
            allocate_mpt([1, 1], np.array([[1, 0.1], [0.0, 1]]), 1.0)
        with pytest.raises(DomainError):
            allocate_mpt([1, 1], np.eye(2), -1.0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 3), st.integers(0, 2**32 - 1))
    def test_oracle(self, n, seed):
        g = np.random.default_rng(seed)
        mu = g.uniform(-0.5, 0.5, n)
        a = g.normal(size=(n, n))
        cov = a @ a.T / n
        gamma = g.uniform(0, 2)
        f = allocate_mpt(mu, cov, gamma).fractions
        _, value = grid_maximize(mpt_values(mu, cov, gamma), n)
        assert mpt_objective(mu, cov, gamma, f) >= value - 1e-4


class TestProjection:
    @settings(max_examples=200)
    @given(arrays(float, st.integers(1, 8), elements=st.floats(-5, 5)))
    def test_feasible_and_idempotent(self, v):
        p = project_simplex(v)
        assert (p >= 0).all() and abs(p.sum() - 1) < 1e-12
        np.testing.assert_allclose(project_simplex(p), p, atol=1e-12)


class TestTaylor:
    def test_zero_edge(self):
        c = kelly_taylor_mpt_check([0.4, 0.6], [0.4, 0.6])
        assert c.max_abs_diff < 1e-6 and c.in_regime
        np.testing.assert_allclose(c.mpt_half.fractions, [0.4, 0.6], atol=1e-6)

    def test_small_edge(self):
        c = kelly_taylor_mpt_check([0.52, 0.48], [0.5, 0.5])
        assert c.in_regime and c.max_abs_diff < 0.02

    def test_outside_regime(self):
        assert not kelly_taylor_mpt_check([0.7, 0.3], [0.3, 0.7]).in_regime

    def test_kl_of_kelly_is_growth(self):
        # with f = r, growth equals KL(r||m)
        r, m = np.array([0.52, 0.48]), np.array([0.5, 0.5])
        assert abs(kelly_growth(r, allocate_kelly(r), m) - kl(r, m)) < 1e-15
