"""Badge mechanisms, their equilibria and their expected contributions.

Conventions: quantile thresholds are listed from the lowest badge to the
highest, ``kappa_1 >= kappa_2 >= ... >= kappa_m``, with ``kappa_0 = 1`` and
``kappa_{m+1} = 0``. A user at quantile ``q`` in ``(kappa_{t+1}, kappa_t]``
earns badge ``t`` and bids ``theta_t``; users above ``kappa_1`` bid nothing.
All contributions are per user.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np
from scipy.optimize import minimize_scalar

from .abilities import (
    AbilityDistribution,
    monopoly_quantile,
    revenue_at,
    value_at,
    value_derivative,
    virtual_at,
)
from .exceptions import DivisionDegenerate, DomainError, ShapeMismatch
from .numerics import DEFAULT_TOL, Tolerance, find_root, integrate
from .status import LARGE, InterimStatus, PopSize, StatusFunction, parse_n

_DEDUP = 1e-12
_QUAD_TOL = Tolerance(abs_tol=1e-12, rel_tol=1e-10, max_iter=400)
_ROOT_TOL = Tolerance(abs_tol=1e-13, rel_tol=1e-12, max_iter=400)


@lru_cache(maxsize=256)
def _interim(status: StatusFunction, n: PopSize) -> InterimStatus:
    return InterimStatus(status, n)


@dataclass(frozen=True, eq=False)
class Setting:
    """Environment shared by all mechanisms: abilities, status law and population.

    Attributes:
        dist: Ability distribution.
        status: Status value function.
        n: Population size, or ``LARGE`` for the large-market limit.
        alpha_cost: Exponent of the effort cost (1 for linear cost).
    """

    dist: AbilityDistribution
    status: StatusFunction
    n: PopSize = LARGE
    alpha_cost: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "n", parse_n(self.n))
        if not self.alpha_cost >= 1.0:
            raise DomainError(f"cost exponent must be >= 1, got {self.alpha_cost}")

    @property
    def Sn(self) -> InterimStatus:
        return _interim(self.status, self.n)

    def with_cost(self, alpha_cost: float) -> "Setting":
        return Setting(self.dist, self.status, self.n, alpha_cost)


@dataclass(frozen=True)
class QuantileThresholds:
    """Quantile thresholds ``kappa_1 > ... > kappa_m`` of an absolute-threshold mechanism.

    Inputs are sorted in decreasing order and deduplicated. A threshold at
    ``kappa = 1`` gives the badge to everyone, which conveys no status, and is
    dropped.
    """

    kappas: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        ks = sorted((float(k) for k in self.kappas), reverse=True)
        for k in ks:
            if not 0.0 <= k <= 1.0 or math.isnan(k):
                raise DomainError(f"quantile thresholds must lie in [0, 1], got {k}")
        out: list[float] = []
        for k in ks:
            if k >= 1.0:
                continue
            if not out or out[-1] - k > _DEDUP:
                out.append(k)
        object.__setattr__(self, "kappas", tuple(out))

    def __len__(self) -> int:
        return len(self.kappas)

    def __iter__(self):
        return iter(self.kappas)

    def __getitem__(self, i: int) -> float:
        return self.kappas[i]


@dataclass(frozen=True)
class ContributionThresholds:
    """Contribution thresholds ``0 < theta_1 < ... < theta_m``."""

    thetas: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        ts = tuple(float(t) for t in self.thetas)
        if any(not (t > 0.0 and math.isfinite(t)) for t in ts):
            raise DomainError(f"contribution thresholds must be positive and finite, got {ts}")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise DomainError(f"contribution thresholds must be strictly increasing, got {ts}")
        object.__setattr__(self, "thetas", ts)

    def __len__(self) -> int:
        return len(self.thetas)

    def __iter__(self):
        return iter(self.thetas)

    def __getitem__(self, i: int) -> float:
        return self.thetas[i]


@dataclass(frozen=True)
class OptimalLeaderboardCutoff:
    """Rank users by contribution above the optimal cutoff; pool the rest."""

    name: str = field(default="optimal", init=False)


@dataclass(frozen=True)
class AbsoluteThreshold:
    """Badges awarded by fixed thresholds, given in either parametrisation."""

    thresholds: Union[QuantileThresholds, ContributionThresholds]
    name: str = field(default="absolute", init=False)


@dataclass(frozen=True)
class Leaderboard:
    """Full ranking, optionally restricted to users above a quantile cutoff."""

    cutoff: float | None = None
    name: str = field(default="leaderboard", init=False)


Variant = Union[OptimalLeaderboardCutoff, AbsoluteThreshold, Leaderboard]


@dataclass(frozen=True)
class Mechanism:
    """A badge mechanism in a given setting."""

    variant: Variant
    setting: Setting

    @property
    def dist(self) -> AbilityDistribution:
        return self.setting.dist

    @property
    def status(self) -> StatusFunction:
        return self.setting.status

    @property
    def n(self) -> PopSize:
        return self.setting.n


@dataclass(frozen=True)
class EquilibriumSolution:
    """Unique symmetric equilibrium of an absolute-threshold mechanism.

    Attributes:
        p: Number of badge levels that some type is willing to reach.
        kappas: Realised quantile thresholds (length ``p``).
        thetas: Contribution thresholds as posted (length ``m >= p``).
        interim_levels: ``S_n(kappa_t)`` for each realised level.
        stop_margin: For ``p < m``, the slack in the top type's preference for
            staying at level ``p`` over level ``p + 1`` (non-negative).
    """

    p: int
    kappas: QuantileThresholds
    thetas: ContributionThresholds
    interim_levels: tuple[float, ...]
    stop_margin: float | None = None

    def level(self, q: float | np.ndarray) -> np.ndarray:
        """Badge level (0 = none) for each quantile."""
        ks = np.asarray(self.kappas.kappas, dtype=float)
        qa = np.asarray(q, dtype=float)
        # Level t holds users with q <= kappa_t.
        return np.sum(qa[..., None] <= ks, axis=-1) if ks.size else np.zeros(qa.shape, dtype=int)

    def bid(self, q: float | np.ndarray) -> float | np.ndarray:
        """Equilibrium bid: ``theta_t`` on ``(kappa_{t+1}, kappa_t]``, zero above ``kappa_1``."""
        lv = self.level(q)
        table = np.concatenate([[0.0], np.asarray(self.thetas.thetas[: self.p], dtype=float)])
        out = table[lv]
        return float(out) if np.ndim(out) == 0 else out

    def interim(self, q: float | np.ndarray) -> float | np.ndarray:
        """Interim status ``x(q)``: ``S_n(kappa_t)`` on each step."""
        lv = self.level(q)
        table = np.concatenate([[0.0], np.asarray(self.interim_levels, dtype=float)])
        out = table[lv]
        return float(out) if np.ndim(out) == 0 else out


def _split_points(a: float, b: float) -> list[float]:
    # Geometric breakpoints near a resolve sharply peaked integrands.
    w = b - a
    return [a + w * 10.0 ** (-k) for k in range(1, 9)] + [a + 0.5 * w]


def _qint(f, a: float, b: float, extra: Sequence[float] = ()) -> float:
    if b <= a:
        return 0.0
    return integrate(f, a, b, _QUAD_TOL, points=_split_points(a, b) + list(extra))


def optimal_cutoff(dist: AbilityDistribution, status: StatusFunction, n: PopSize = LARGE) -> tuple[float, float]:
    """Contribution cutoff ``theta* = v(kappa*) S_n(kappa*)`` of the optimal mechanism.

    Returns:
        ``(theta_star, kappa_star)``.

    Raises:
        NotRegular: If ``dist`` is not regular.
    """
    k = monopoly_quantile(dist)
    return float(value_at(dist, k)) * float(_interim(status, parse_n(n))(k)), k


def leaderboard_bid(
    dist: AbilityDistribution,
    status: StatusFunction,
    n: PopSize,
    q: float,
    cutoff: float | None = None,
) -> float:
    """Equilibrium bid under a leaderboard that ranks users with quantile at most ``cutoff``.

    ``b(q) = v(q) S_n(q) + integral_q^cutoff S_n(z) v'(z) dz`` for ``q <= cutoff``.
    """
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q must lie in [0, 1], got {q}")
    c = 1.0 if cutoff is None else float(cutoff)
    if q > c:
        return 0.0
    sn = _interim(status, parse_n(n))
    head = float(value_at(dist, q)) * float(sn(q))
    tail = _qint(lambda z: float(sn(z)) * float(value_derivative(dist, z)), q, c)
    return head + tail


def optimal_bid(dist: AbilityDistribution, status: StatusFunction, n: PopSize, q: float) -> float:
    """Equilibrium bid under the optimal leaderboard with cutoff.

    Raises:
        NotRegular: If ``dist`` is not regular.
    """
    return leaderboard_bid(dist, status, n, q, monopoly_quantile(dist))


def leaderboard_contribution(
    dist: AbilityDistribution,
    status: StatusFunction,
    n: PopSize = LARGE,
    cutoff: float | None = None,
) -> float:
    """Per-user contribution ``integral_0^c R'(q) S_n(q) dq`` of a (cutoff) leaderboard."""
    c = 1.0 if cutoff is None else float(cutoff)
    if not 0.0 <= c <= 1.0:
        raise DomainError(f"cutoff must lie in [0, 1], got {cutoff}")
    sn = _interim(status, parse_n(n))
    return _qint(lambda q: float(virtual_at(dist, q)) * float(sn(q)), 0.0, c)


def optimal_contribution(dist: AbilityDistribution, status: StatusFunction, n: PopSize = LARGE) -> float:
    """Per-user contribution of the optimal mechanism, ``integral_0^kappa* R' S_n``.

    Raises:
        NotRegular: If ``dist`` is not regular.
    """
    return leaderboard_contribution(dist, status, n, monopoly_quantile(dist))


def linear_optimal_contribution(dist: AbilityDistribution) -> float:
    """Linear-status optimum in integrated form ``R(k*)(1 - k*) + integral_0^k* R``."""
    k = monopoly_quantile(dist)
    return float(revenue_at(dist, k)) * (1.0 - k) + _qint(lambda q: float(revenue_at(dist, q)), 0.0, k)


def _as_kq(kq: QuantileThresholds | Sequence[float]) -> QuantileThresholds:
    return kq if isinstance(kq, QuantileThresholds) else QuantileThresholds(tuple(kq))


def _as_ct(ct: ContributionThresholds | Sequence[float]) -> ContributionThresholds:
    return ct if isinstance(ct, ContributionThresholds) else ContributionThresholds(tuple(ct))


def thresholds_from_quantiles(ctx: Setting, kq: QuantileThresholds | Sequence[float]) -> ContributionThresholds:
    """Contribution thresholds that implement ``kq`` as the unique symmetric equilibrium.

    ``theta_t^a = sum_{j<=t} v(kappa_j)^a (S_n(kappa_j) - S_n(kappa_{j-1}))`` with
    ``S_n(kappa_0) = 0`` and ``a`` the cost exponent.
    """
    kq = _as_kq(kq)
    a = ctx.alpha_cost
    acc = 0.0
    prev = 0.0
    out = []
    for k in kq.kappas:
        s = float(ctx.Sn(k))
        v = float(value_at(ctx.dist, k))
        acc += (v if a == 1.0 else v ** a) * (s - prev)
        prev = s
        out.append(acc if a == 1.0 else acc ** (1.0 / a))
    return ContributionThresholds(tuple(out))


def quantiles_from_thresholds(ctx: Setting, ct: ContributionThresholds | Sequence[float]) -> EquilibriumSolution:
    """Solve the unique symmetric equilibrium for posted contribution thresholds.

    Level ``t`` is reached by the types that satisfy
    ``v(kappa)^a (S_n(kappa) - S_n(kappa_{t-1})) = theta_t^a - theta_{t-1}^a``. The
    recursion stops once even the top type prefers to stay where it is.
    """
    ct = _as_ct(ct)
    a = ctx.alpha_cost
    sn = ctx.Sn
    vbar = ctx.dist.v_bar
    s0 = sn.S0
    w = (lambda t: t) if a == 1.0 else (lambda t: t ** a)
    vw = (lambda x: x) if a == 1.0 else (lambda x: x ** a)
    kappas: list[float] = []
    levels: list[float] = []
    k_prev, s_prev, w_prev = 1.0, 0.0, 0.0
    stop_margin = None
    for theta in ct.thetas:
        delta = w(theta) - w_prev
        top_gain = vw(vbar) * (s0 - s_prev)
        if delta >= top_gain:
            stop_margin = delta - top_gain
            break

        def lhs(k: float) -> float:
            return vw(float(value_at(ctx.dist, k))) * (float(sn(k)) - s_prev) - delta

        k = find_root(lhs, 0.0, k_prev, _ROOT_TOL)
        kappas.append(k)
        s_prev = float(sn(k))
        levels.append(s_prev)
        k_prev, w_prev = k, w(theta)
    return EquilibriumSolution(
        p=len(kappas),
        kappas=QuantileThresholds(tuple(kappas)),
        thetas=ct,
        interim_levels=tuple(levels),
        stop_margin=stop_margin,
    )


def absolute_contribution(
    ctx: Setting, kq: QuantileThresholds | Sequence[float], verify: bool = False
) -> float:
    """Per-user contribution of an absolute-threshold mechanism at its equilibrium.

    With linear cost this is ``R(k_1) S_n(k_1) + sum_{t>=2} R(k_t)(S_n(k_t) - S_n(k_{t-1}))``.
    With a convex cost it is the mass-weighted threshold sum
    ``sum_t (k_t - k_{t+1}) theta_t``.

    Args:
        ctx: Setting.
        kq: Quantile thresholds.
        verify: Also evaluate ``integral_0^1 R'(q) x(q) dq`` by quadrature and
            assert agreement with the step sum.
    """
    kq = _as_kq(kq)
    if len(kq) == 0:
        return 0.0
    ks = kq.kappas
    if ctx.alpha_cost != 1.0:
        th = thresholds_from_quantiles(ctx, kq).thetas
        nxt = ks[1:] + (0.0,)
        return float(sum((k - k1) * t for k, k1, t in zip(ks, nxt, th)))
    total = 0.0
    prev = 0.0
    levels = []
    for k in ks:
        s = float(ctx.Sn(k))
        total += float(revenue_at(ctx.dist, k)) * (s - prev)
        prev = s
        levels.append(s)
    if verify:
        bounds = (1.0,) + ks + (0.0,)
        via_int = 0.0
        for t, s in enumerate(levels, start=1):
            hi, lo = bounds[t], bounds[t + 1]
            via_int += s * _qint(lambda q: float(virtual_at(ctx.dist, q)), lo, hi)
        scale = max(1.0, abs(total))
        if abs(via_int - total) > 1e-7 * scale:
            raise AssertionError(f"step sum {total!r} disagrees with integral {via_int!r}")
    return total


def construct_median() -> QuantileThresholds:
    """Single badge held by the top half of users."""
    return QuantileThresholds((0.5,))


def construct_single_improved(dist: AbilityDistribution) -> QuantileThresholds:
    """Single badge at ``min(kappa*, 1/2)``.

    Raises:
        NotRegular: If ``dist`` is not regular.
    """
    return QuantileThresholds((min(monopoly_quantile(dist), 0.5),))


def _require_shape(status: StatusFunction, allowed: tuple[str, ...], what: str) -> None:
    if status.shape not in allowed:
        raise ShapeMismatch(f"{what} requires a {' or '.join(allowed)} status function, got {status.shape}")


def construct_concave_m(
    dist: AbilityDistribution, status: StatusFunction, n: PopSize, m: int
) -> QuantileThresholds:
    """``m`` badges with interim-status levels evenly spaced above ``S_n(kappa*)``.

    ``kappa_1 = kappa*`` and ``S_n(kappa_t) = S_n(kappa*) + (t - 1) dx`` with
    ``dx = (S_n(0) - S_n(kappa*)) / m``.
    """
    _require_shape(status, ("concave", "linear"), "the concave m-badge construction")
    if int(m) != m or m < 3:
        raise DomainError(f"m must be an integer >= 3, got {m}")
    sn = _interim(status, parse_n(n))
    k1 = monopoly_quantile(dist)
    base = float(sn(k1))
    dx = (sn.S0 - base) / m
    ks = [k1] + [sn.inverse(base + (t - 1) * dx) for t in range(2, m + 1)]
    return QuantileThresholds(tuple(ks))


def construct_convex_logH(dist: AbilityDistribution, status: StatusFunction, n: PopSize) -> QuantileThresholds:
    """Logarithmic ladder for convex status.

    ``kappa_1 = lambda = min(kappa*, 1/2)`` and, for ``t = 2..m``,
    ``S_n(kappa_t) = S(0) / 2^(m - t + 1)`` with ``m = ceil(log2(S(0) / S_n(lambda)))``.
    Levels that fall at or below ``S_n(lambda)`` are dropped.
    """
    _require_shape(status, ("convex",), "the logarithmic ladder")
    sn = _interim(status, parse_n(n))
    lam = min(monopoly_quantile(dist), 0.5)
    s_lam = float(sn(lam))
    s0 = sn.S0
    m = max(1, math.ceil(math.log2(s0 / s_lam) - 1e-12))
    ks = [lam]
    for t in range(2, m + 1):
        level = s0 / 2.0 ** (m - t + 1)
        if level <= s_lam:
            continue
        ks.append(sn.inverse(level))
    return QuantileThresholds(tuple(ks))


def construct_linear_m(dist: AbilityDistribution, m: int, status: StatusFunction | None = None) -> QuantileThresholds:
    """``m`` badges for linear status with equally populated status classes.

    A single badge sits at ``min(kappa*, 1/2)``. For ``m >= 2`` the thresholds
    split ``[0, kappa*]`` into ``m`` cells of equal width:
    ``kappa_t = kappa* (m - t + 1) / m``.
    """
    if status is not None:
        _require_shape(status, ("linear",), "the linear m-badge construction")
    if int(m) != m or m < 1:
        raise DomainError(f"m must be a positive integer, got {m}")
    k = monopoly_quantile(dist)
    if m == 1:
        return QuantileThresholds((min(k, 0.5),))
    return QuantileThresholds(tuple(k * (m - t + 1) / m for t in range(1, m + 1)))


def add_badge_delta(ctx: Setting, kq: QuantileThresholds | Sequence[float], kappa_new: float) -> float:
    """Change in contribution from adding one more quantile threshold."""
    kq = _as_kq(kq)
    if not 0.0 <= kappa_new <= 1.0:
        raise DomainError(f"kappa_new must lie in [0, 1], got {kappa_new}")
    aug = QuantileThresholds(kq.kappas + (kappa_new,))
    return absolute_contribution(ctx, aug) - absolute_contribution(ctx, kq)


def mechanism_contribution(mech: Mechanism) -> float:
    """Per-user equilibrium contribution of any mechanism variant."""
    ctx, var = mech.setting, mech.variant
    if isinstance(var, OptimalLeaderboardCutoff):
        return optimal_contribution(ctx.dist, ctx.status, ctx.n)
    if isinstance(var, Leaderboard):
        return leaderboard_contribution(ctx.dist, ctx.status, ctx.n, var.cutoff)
    if isinstance(var, AbsoluteThreshold):
        th = var.thresholds
        if isinstance(th, ContributionThresholds):
            th = quantiles_from_thresholds(ctx, th).kappas
        return absolute_contribution(ctx, th)
    raise DomainError(f"unknown mechanism variant {var!r}")


def approximation_ratio(
    ctx: Setting, kq_or_variant: QuantileThresholds | Sequence[float] | Variant
) -> float:
    """Optimal contribution divided by the mechanism's contribution.

    Raises:
        DivisionDegenerate: If the mechanism raises no contribution.
        NotRegular: If the distribution is not regular.
    """
    opt = optimal_contribution(ctx.dist, ctx.status, ctx.n)
    if isinstance(kq_or_variant, (OptimalLeaderboardCutoff, Leaderboard, AbsoluteThreshold)):
        apx = mechanism_contribution(Mechanism(kq_or_variant, ctx))
    else:
        apx = absolute_contribution(ctx, kq_or_variant)
    if apx <= 0.0:
        raise DivisionDegenerate("mechanism contribution is zero")
    return opt / apx


def best_single_badge(ctx: Setting, grid: int = 2000) -> tuple[float, float]:
    """Best single-badge threshold on a quantile grid, refined locally.

    Returns:
        ``(kappa, contribution)``.
    """
    qs = np.linspace(0.0, 1.0, grid + 1)[1:-1]
    vals = np.array([absolute_contribution(ctx, (k,)) for k in qs])
    i = int(np.argmax(vals))
    lo, hi = qs[max(i - 1, 0)], qs[min(i + 1, len(qs) - 1)]
    res = minimize_scalar(lambda k: -absolute_contribution(ctx, (k,)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    if -res.fun >= vals[i]:
        return float(res.x), float(-res.fun)
    return float(qs[i]), float(vals[i])
