import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import badgeforge as bf
from badgeforge.exceptions import DivisionDegenerate, DomainError, ShapeMismatch

from conftest import DISTRIBUTIONS, STATUSES

EULER_GAMMA = 0.5772156649015329
LONGTAIL3_OPT = 0.3030456975289132  # mpmath quadrature of R'(q)(1 - q) on [0, 1/3]


def simpson(f, a, b, n=200_000):
    x = np.linspace(a, b, n + 1)
    y = f(x)
    h = (b - a) / n
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def settings_matrix():
    for dn in sorted(DISTRIBUTIONS):
        for sn in sorted(STATUSES):
            s, n = STATUSES[sn]
            yield pytest.param(bf.Setting(DISTRIBUTIONS[dn], s, n), id=f"{dn}-{sn}")


MATRIX = list(settings_matrix())


class TestOptimal:
    def test_uniform_linear_matches_quadrature(self):
        oracle = simpson(lambda q: (1 - 2 * q) * (1 - q), 0.0, 0.5)
        assert oracle == pytest.approx(5 / 24, rel=1e-10)
        assert bf.optimal_contribution(bf.Uniform01(), bf.Linear()) == pytest.approx(5 / 24, rel=1e-9)

    @pytest.mark.parametrize("n", [2, 10, 1000, bf.LARGE])
    def test_uniform_linear_any_n(self, n):
        assert bf.optimal_contribution(bf.Uniform01(), bf.Linear(), n) == pytest.approx(5 / 24, rel=1e-9)

    def test_linear_shortcut(self):
        for d in DISTRIBUTIONS.values():
            assert bf.linear_optimal_contribution(d) == pytest.approx(
                bf.optimal_contribution(d, bf.Linear()), rel=1e-8
            )

    def test_longtail3(self):
        assert bf.optimal_contribution(bf.LongTail(3.0), bf.Linear()) == pytest.approx(LONGTAIL3_OPT, rel=1e-8)

    def test_longtail_large_H_near_one(self):
        assert abs(bf.optimal_contribution(bf.LongTail(1e4), bf.Linear()) - 1.0) <= 0.05

    def test_convex_1024_stated_bound(self):
        # Stated lower bound; the exact value is about 0.12 below it.
        opt = bf.optimal_contribution(bf.Uniform01(), bf.ConvexReciprocal(1024), 1024)
        assert opt >= 5.69

    @pytest.mark.parametrize("k", [6, 8, 10, 12])
    def test_convex_corrected_bound(self, k):
        n = 2**k
        opt = bf.optimal_contribution(bf.Uniform01(), bf.ConvexReciprocal(n), n)
        assert opt >= math.log(n) + EULER_GAMMA - 1.25 - math.log(2)


class TestCutoffAndBid:
    @pytest.mark.parametrize("n", [5, 100, bf.LARGE])
    def test_uniform(self, n):
        assert bf.optimal_cutoff(bf.Uniform01(), bf.Linear(), n) == pytest.approx((0.25, 0.5), abs=1e-10)

    def test_longtail3(self):
        assert bf.optimal_cutoff(bf.LongTail(3.0), bf.Linear()) == pytest.approx((2 / 3, 1 / 3), abs=1e-9)

    @pytest.mark.parametrize("ctx", MATRIX)
    def test_cutoff_positive(self, ctx):
        theta, _ = bf.optimal_cutoff(ctx.dist, ctx.status, ctx.n)
        assert theta > 0

    @pytest.mark.parametrize("q, expected", [(0.5, 0.25), (0.0, 0.625), (0.7, 0.0), (1.0, 0.0)])
    def test_uniform_bids(self, q, expected):
        assert bf.optimal_bid(bf.Uniform01(), bf.Linear(), bf.LARGE, q) == pytest.approx(expected, abs=1e-10)

    def test_bid_at_zero_matches_quadrature(self):
        oracle = 0.25 + simpson(lambda z: 1 - z, 0.0, 0.5)
        assert bf.optimal_bid(bf.Uniform01(), bf.Linear(), bf.LARGE, 0.0) == pytest.approx(oracle, rel=1e-9)

    @pytest.mark.parametrize("ctx", MATRIX)
    def test_bid_monotone_and_continuous_at_cutoff(self, ctx):
        d, s, n = ctx.dist, ctx.status, ctx.n
        bids = [bf.optimal_bid(d, s, n, q) for q in np.linspace(0, 1, 200)]
        assert np.all(np.diff(bids) <= 1e-12)
        theta, kappa = bf.optimal_cutoff(d, s, n)
        assert bf.optimal_bid(d, s, n, kappa) == pytest.approx(theta, abs=1e-9)

    def test_leaderboard_bid_no_cutoff_positive_everywhere_below_one(self):
        assert bf.leaderboard_bid(bf.Uniform01(), bf.Linear(), bf.LARGE, 0.9) > 0


class TestLeaderboard:
    @pytest.mark.parametrize("ctx", MATRIX)
    def test_cutoff_at_monopoly_is_optimal(self, ctx):
        k = bf.monopoly_quantile(ctx.dist)
        got = bf.leaderboard_contribution(ctx.dist, ctx.status, ctx.n, cutoff=k)
        assert got == pytest.approx(bf.optimal_contribution(ctx.dist, ctx.status, ctx.n), rel=1e-8)

    def test_concave_closed_forms(self):
        a = 0.01
        d = a * a + 3 * a + 2
        s = bf.ConcavePower(a)
        assert bf.leaderboard_contribution(bf.Uniform01(), s) == pytest.approx(a / d, abs=1e-4)
        assert bf.leaderboard_contribution(bf.Uniform01(), s, cutoff=0.5) == pytest.approx(
            (a + 2 ** (-a - 1)) / d, abs=1e-4
        )
        assert bf.leaderboard_contribution(bf.Uniform01(), s) == pytest.approx(0.004926, abs=1e-4)
        assert bf.leaderboard_contribution(bf.Uniform01(), s, cutoff=0.5) == pytest.approx(0.24947, abs=1e-4)

    def test_uniform_linear_full(self):
        assert bf.leaderboard_contribution(bf.Uniform01(), bf.Linear()) == pytest.approx(1 / 6, rel=1e-9)


class TestThresholds:
    def test_single(self, uniform_linear):
        assert bf.thresholds_from_quantiles(uniform_linear, [0.5]).thetas == pytest.approx((0.25,))

    def test_two_badges_exact(self, uniform_linear):
        # theta_2 = 1/4 + v(1/4)(S(1/4) - S(1/2)) with exact rationals.
        half, quarter = Fraction(1, 2), Fraction(1, 4)
        t2 = (1 - half) * (1 - half) + (1 - quarter) * ((1 - quarter) - (1 - half))
        assert t2 == Fraction(7, 16)
        got = bf.thresholds_from_quantiles(uniform_linear, [0.5, 0.25]).thetas
        assert got == pytest.approx((0.25, float(t2)), abs=1e-14)

    def test_empty(self, uniform_linear):
        assert bf.thresholds_from_quantiles(uniform_linear, []).thetas == ()

    def test_inverse_two_badges(self, uniform_linear):
        sol = bf.quantiles_from_thresholds(uniform_linear, [0.25, 0.4375])
        assert sol.p == 2
        assert sol.kappas.kappas == pytest.approx((0.5, 0.25), abs=1e-10)

    def test_inverse_unreachable(self, uniform_linear):
        assert bf.quantiles_from_thresholds(uniform_linear, [2.0]).p == 0

    def test_inverse_early_stop(self, uniform_linear):
        sol = bf.quantiles_from_thresholds(uniform_linear, [0.25, 100.0])
        assert sol.p == 1
        assert sol.kappas.kappas == pytest.approx((0.5,), abs=1e-10)
        # Second increment exceeds v(0)(S(0) - S(1/2)) = 1/2.
        assert 100.0 - 0.25 >= 1.0 * (1.0 - 0.5)

    @pytest.mark.parametrize("kappas", [(1.2,), (-0.1,), (math.nan,)])
    def test_invalid_quantiles(self, kappas):
        with pytest.raises(DomainError):
            bf.QuantileThresholds(kappas)

    def test_quantiles_normalised(self):
        # Sorted, deduplicated, and the everyone-wins level at 1 dropped.
        assert bf.QuantileThresholds((0.25, 0.5, 0.5, 1.0)).kappas == (0.5, 0.25)

    @pytest.mark.parametrize("thetas", [(0.3, 0.2), (-1.0,), (0.0, 1.0)])
    def test_invalid_thresholds(self, thetas):
        with pytest.raises(DomainError):
            bf.ContributionThresholds(thetas)

    @pytest.mark.parametrize("ctx", MATRIX)
    @settings(max_examples=8, deadline=None)
    @given(data=st.data())
    def test_round_trip(self, ctx, data):
        m = data.draw(st.integers(1, 6))
        ks = data.draw(st.lists(st.floats(0.005, 0.995), min_size=m, max_size=m, unique=True))
        ks = sorted(ks, reverse=True)
        assume(all(a - b > 1e-3 for a, b in zip(ks, ks[1:])))
        ct = bf.thresholds_from_quantiles(ctx, ks)
        sol = bf.quantiles_from_thresholds(ctx, ct)
        assert sol.p == m
        np.testing.assert_allclose(sol.kappas.kappas, ks, atol=1e-8)

    @settings(max_examples=60, deadline=None)
    @given(
        st.sampled_from(MATRIX),
        st.lists(st.floats(0.01, 3.0), min_size=1, max_size=5),
    )
    def test_early_termination_inequality(self, param, increments):
        ctx = param.values[0]
        scale = ctx.dist.v_bar * ctx.status.S0
        thetas = np.cumsum(np.asarray(increments) * scale)
        sol = bf.quantiles_from_thresholds(ctx, tuple(thetas))
        prev_theta = 0.0 if sol.p == 0 else thetas[sol.p - 1]
        prev_s = 0.0 if sol.p == 0 else float(ctx.Sn(sol.kappas.kappas[-1]))
        if sol.p < len(thetas):
            assert thetas[sol.p] - prev_theta >= ctx.dist.v_bar * (ctx.status.S0 - prev_s) - 1e-12
        else:
            back = bf.thresholds_from_quantiles(ctx, sol.kappas)
            np.testing.assert_allclose(back.thetas, thetas, rtol=1e-8)

    @pytest.mark.parametrize("alpha", [1.0, 2.0, 3.0])
    @pytest.mark.parametrize("ctx", MATRIX[:5])
    def test_cost_exponent_identity(self, ctx, alpha):
        c = ctx.with_cost(alpha)
        ks = (0.6, 0.3, 0.1)
        th = bf.thresholds_from_quantiles(c, ks).thetas
        acc, prev = 0.0, 0.0
        for k, t in zip(ks, th):
            s = float(c.Sn(k))
            acc += float(bf.value_at(c.dist, k)) ** alpha * (s - prev)
            prev = s
            assert t**alpha == pytest.approx(acc, rel=1e-12)
        sol = bf.quantiles_from_thresholds(c, th)
        np.testing.assert_allclose(sol.kappas.kappas, ks, atol=1e-8)

    def test_cost_exponent_one_is_bitwise_base(self):
        base = bf.Setting(bf.LongTail(3.0), bf.ConcavePower(0.5), 40)
        ks = (0.7, 0.2, 0.05)
        assert bf.thresholds_from_quantiles(base, ks).thetas == bf.thresholds_from_quantiles(base.with_cost(1.0), ks).thetas

    def test_cost_indifference(self):
        # The marginal type is indifferent between adjacent levels under v^a x - b^a.
        c = bf.Setting(bf.Uniform01(), bf.Linear(), bf.LARGE, alpha_cost=2.0)
        t1, t2 = bf.thresholds_from_quantiles(c, (0.5, 0.25)).thetas
        v = 0.75
        assert v**2 * 0.75 - t2**2 == pytest.approx(v**2 * 0.5 - t1**2, abs=1e-14)


class TestEquilibriumSolution:
    def test_levels_bids_interim(self, uniform_linear):
        sol = bf.quantiles_from_thresholds(uniform_linear, [0.25, 0.4375])
        q = np.array([0.1, 0.25, 0.3, 0.5, 0.6])
        np.testing.assert_array_equal(sol.level(q), [2, 2, 1, 1, 0])
        np.testing.assert_allclose(sol.bid(q), [0.4375, 0.4375, 0.25, 0.25, 0.0])
        np.testing.assert_allclose(sol.interim(q), [0.75, 0.75, 0.5, 0.5, 0.0])

    @pytest.mark.parametrize("ctx", MATRIX)
    def test_interim_steps(self, ctx):
        ks = (0.7, 0.4, 0.15)
        sol = bf.quantiles_from_thresholds(ctx, bf.thresholds_from_quantiles(ctx, ks))
        q = np.linspace(0, 1, 301)
        x = sol.interim(q)
        assert np.all(np.diff(x) <= 0)
        for k, lvl in zip(sol.kappas.kappas, sol.interim_levels):
            assert lvl == float(ctx.Sn(k))
            assert float(sol.interim(k)) == lvl


class TestAbsoluteContribution:
    def test_median(self, uniform_linear):
        assert bf.absolute_contribution(uniform_linear, [0.5]) == pytest.approx(1 / 8, rel=1e-12)

    def test_two_badges(self, uniform_linear):
        # Step integral: S(k1)(R(k1) - R(k2)) + S(k2) R(k2)
        oracle = Fraction(3, 4) * Fraction(3, 16) + Fraction(1, 2) * (Fraction(1, 4) - Fraction(3, 16))
        assert oracle == Fraction(11, 64)
        assert bf.absolute_contribution(uniform_linear, [0.5, 0.25]) == pytest.approx(11 / 64, rel=1e-12)

    def test_empty(self, uniform_linear):
        assert bf.absolute_contribution(uniform_linear, []) == 0.0

    @pytest.mark.parametrize("ctx", MATRIX)
    def test_step_sum_equals_virtual_surplus(self, ctx):
        ks = (0.8, 0.5, 0.2, 0.05)
        step = bf.absolute_contribution(ctx, ks, verify=True)
        sol = bf.quantiles_from_thresholds(ctx, bf.thresholds_from_quantiles(ctx, ks))
        grid = sorted({0.0, 1.0, *ks})
        total = sum(
            bf.integrate(lambda q: float(bf.virtual_at(ctx.dist, q)) * float(sol.interim(q)), a, b)
            for a, b in zip(grid, grid[1:])
        )
        assert step == pytest.approx(total, abs=1e-7)

    @pytest.mark.parametrize("alpha", [2.0, 3.0])
    def test_cost_exponent_contribution(self, alpha):
        c = bf.Setting(bf.Uniform01(), bf.Linear(), bf.LARGE, alpha)
        ks = (0.5, 0.25)
        th = bf.thresholds_from_quantiles(c, ks).thetas
        expected = (0.5 - 0.25) * th[0] + 0.25 * th[1]
        assert bf.absolute_contribution(c, ks) == pytest.approx(expected, rel=1e-12)


class TestConstructions:
    def test_median(self):
        assert bf.construct_median().kappas == (0.5,)

    @pytest.mark.parametrize("d, expected", [(bf.Uniform01(), 0.5), (bf.LongTail(3.0), 1 / 3), (bf.Power(5.0), 0.5)])
    def test_improved_single(self, d, expected):
        assert bf.construct_single_improved(d).kappas == pytest.approx((expected,), abs=1e-9)

    def test_concave_m_uniform(self):
        kq = bf.construct_concave_m(bf.Uniform01(), bf.Linear(), bf.LARGE, 4)
        assert kq.kappas == pytest.approx((0.5, 0.375, 0.25, 0.125), abs=1e-10)

    def test_concave_m_three(self):
        assert len(bf.construct_concave_m(bf.Uniform01(), bf.ConcavePower(0.5), bf.LARGE, 3)) == 3

    @pytest.mark.parametrize("m", [0, 2])
    def test_concave_m_rejects_small(self, m):
        with pytest.raises(DomainError):
            bf.construct_concave_m(bf.Uniform01(), bf.Linear(), bf.LARGE, m)

    def test_concave_m_rejects_convex(self):
        with pytest.raises(ShapeMismatch):
            bf.construct_concave_m(bf.Uniform01(), bf.ConvexReciprocal(10), 10, 4)

    def test_convex_log_count(self):
        n = 1023
        s_half = (1 - 2.0**-1023) / 0.5 - 1
        expected = math.ceil(math.log2((n - 2) / s_half))
        kq = bf.construct_convex_logH(bf.Uniform01(), bf.ConvexReciprocal(n), n)
        assert len(kq) == expected == 10

    def test_convex_log_rejects_linear(self):
        with pytest.raises(ShapeMismatch):
            bf.construct_convex_logH(bf.Uniform01(), bf.Linear(), bf.LARGE)

    def test_linear_m_one(self, uniform_linear):
        kq = bf.construct_linear_m(bf.Uniform01(), 1)
        assert kq.kappas == (0.5,)
        assert bf.absolute_contribution(uniform_linear, kq) == pytest.approx(1 / 8)

    def test_linear_m_three(self, uniform_linear):
        kq = bf.construct_linear_m(bf.Uniform01(), 3)
        gaps = -np.diff((1.0,) + kq.kappas + (0.0,))
        assert np.allclose(gaps[1:], gaps[1])
        assert bf.absolute_contribution(uniform_linear, kq) / (5 / 24) >= 0.6

    def test_linear_m_fine_limit(self, uniform_linear):
        kq = bf.construct_linear_m(bf.Uniform01(), 256)
        apx = bf.absolute_contribution(uniform_linear, kq)
        assert apx >= 0.99 * 5 / 24

    def test_linear_m_rejects_concave(self):
        with pytest.raises(ShapeMismatch):
            bf.construct_linear_m(bf.Uniform01(), 3, bf.ConcavePower(0.5))


def _bound_cases():
    for p in MATRIX:
        ctx = p.values[0]
        shape = ctx.status.shape
        tag = p.id
        if shape in ("linear", "concave"):
            yield pytest.param(ctx, "median", None, 4.0, id=f"{tag}-median")
            yield pytest.param(ctx, "single", None, 2.0 if shape == "linear" else 3.0, id=f"{tag}-single")
            for m in (3, 4, 8, 16):
                yield pytest.param(ctx, "concave_m", m, m / (m - 2), id=f"{tag}-concave{m}")
        if shape == "linear":
            for m in (1, 2, 3, 4, 8, 16):
                yield pytest.param(ctx, "linear_m", m, (m + 2) / m, id=f"{tag}-linear{m}")
        if shape == "convex":
            yield pytest.param(ctx, "convex_logH", None, 4.0, id=f"{tag}-logH")
            yield pytest.param(ctx, "leaderboard", None, 2.0, id=f"{tag}-leaderboard")


def build(ctx, name, m):
    d, s, n = ctx.dist, ctx.status, ctx.n
    return {
        "median": lambda: bf.construct_median(),
        "single": lambda: bf.construct_single_improved(d),
        "concave_m": lambda: bf.construct_concave_m(d, s, n, m),
        "linear_m": lambda: bf.construct_linear_m(d, m, s),
        "convex_logH": lambda: bf.construct_convex_logH(d, s, n),
        "leaderboard": lambda: bf.Leaderboard(),
    }[name]()


@pytest.mark.parametrize("ctx, name, m, bound", list(_bound_cases()))
def test_bound_suite(ctx, name, m, bound):
    assert bf.approximation_ratio(ctx, build(ctx, name, m)) <= bound + 1e-9


class TestAddBadge:
    def test_second_badge(self, uniform_linear):
        assert bf.add_badge_delta(uniform_linear, [0.5], 0.25) == pytest.approx(3 / 64, rel=1e-12)

    def test_duplicate(self, uniform_linear):
        assert bf.add_badge_delta(uniform_linear, [0.5], 0.5) == 0.0

    def test_continuity(self, uniform_linear):
        for eps in (1e-3, 1e-5):
            assert abs(bf.add_badge_delta(uniform_linear, [0.5], 0.5 - eps)) <= 2 * eps

    @pytest.mark.parametrize("ctx", MATRIX)
    @settings(max_examples=10, deadline=None)
    @given(data=st.data())
    def test_adding_above_monopoly_never_hurts(self, ctx, data):
        k_star = bf.monopoly_quantile(ctx.dist)
        base = sorted(data.draw(st.lists(st.floats(0.01, 0.99), min_size=0, max_size=4, unique=True)), reverse=True)
        new = data.draw(st.floats(0.001, k_star))
        assume(all(abs(new - b) > 1e-6 for b in base) and all(a - b > 1e-6 for a, b in zip(base, base[1:])))
        assert bf.add_badge_delta(ctx, base, new) >= -1e-9


class TestRatio:
    def test_median_uniform(self, uniform_linear):
        assert bf.approximation_ratio(uniform_linear, bf.construct_median()) == pytest.approx(5 / 3, rel=1e-9)

    def test_median_longtail(self):
        ctx = bf.Setting(bf.LongTail(1e4), bf.Linear())
        assert abs(bf.approximation_ratio(ctx, bf.construct_median()) - 4) <= 0.1

    def test_best_single_power64(self):
        ctx = bf.Setting(bf.Power(64.0), bf.Linear())
        k, apx = bf.best_single_badge(ctx)
        assert bf.optimal_contribution(ctx.dist, ctx.status) / apx >= 1.9

    def test_optimal_variant(self, uniform_linear):
        assert bf.approximation_ratio(uniform_linear, bf.OptimalLeaderboardCutoff()) == pytest.approx(1.0)

    def test_degenerate(self, uniform_linear):
        with pytest.raises(DivisionDegenerate):
            bf.approximation_ratio(uniform_linear, bf.AbsoluteThreshold(bf.ContributionThresholds((5.0,))))


class TestMechanismContribution:
    @pytest.mark.parametrize(
        "variant, expected",
        [
            (bf.OptimalLeaderboardCutoff(), 5 / 24),
            (bf.Leaderboard(), 1 / 6),
            (bf.Leaderboard(0.5), 5 / 24),
            (bf.AbsoluteThreshold(bf.QuantileThresholds((0.5, 0.25))), 11 / 64),
            (bf.AbsoluteThreshold(bf.ContributionThresholds((0.25, 0.4375))), 11 / 64),
        ],
    )
    def test_uniform(self, uniform_linear, variant, expected):
        mech = bf.Mechanism(variant, uniform_linear)
        assert bf.mechanism_contribution(mech) == pytest.approx(expected, rel=1e-9)
