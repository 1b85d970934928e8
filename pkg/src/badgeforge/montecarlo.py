"""Finite-population simulation of badge mechanisms.

Each trial draws ``n`` i.i.d. uniform quantiles, lets every user play the
analytic symmetric equilibrium and assigns badges. A user's realised status is
``S(t)`` where ``t`` is the fraction of the ``n - 1`` opponents holding a
weakly higher badge.

Randomness comes from numpy's PCG64 generator. Trial ``k`` of a run seeded
with ``s`` uses the stream ``default_rng([s, k])`` for quantiles and
``default_rng([s, k, 1])`` for tie-breaking, so results do not depend on the
order in which trials are executed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .abilities import AbilityDistribution, monopoly_quantile, value_at, value_derivative, virtual_at
from .exceptions import DomainError, TooLarge
from .mechanisms import (
    AbsoluteThreshold,
    ContributionThresholds,
    Leaderboard,
    Mechanism,
    OptimalLeaderboardCutoff,
    QuantileThresholds,
    Setting,
    _qint,
    quantiles_from_thresholds,
    thresholds_from_quantiles,
)
from .numerics import find_root, integrate
from .status import LARGE, StatusFunction, status_at

BRUTE_FORCE_MAX = 6
_BID_GRID = 257
_TIE_STREAM = 1


@dataclass(frozen=True)
class Population:
    """Sampled user quantiles.

    Attributes:
        quantiles: Array of ``n`` quantiles in ``[0, 1]``.
        seed: Seed (or seed sequence entropy) that produced them.
    """

    quantiles: np.ndarray
    seed: int | tuple[int, ...] = 0

    @property
    def n(self) -> int:
        return int(self.quantiles.size)


@dataclass(frozen=True)
class ExPostOutcome:
    """Realised play of one population."""

    bids: np.ndarray
    badges: np.ndarray
    statuses: np.ndarray
    total_contribution: float


@dataclass
class SimulationReport:
    """Monte Carlo summary for one mechanism.

    Attributes:
        mean_contribution: Mean per-user contribution across trials.
        stderr: Standard error of that mean.
        trials: Number of trials.
        interim_regret: Largest estimated interim utility gain from deviating.
        interim_regret_stderr: Standard error of that gain.
        expost_regret_freq: Fraction of realisations in which some user gains
            more than ``epsilon`` by switching badge.
        vs_residual: Normalised gap between mean payments and mean virtual surplus.
        vs_stderr: Standard error of ``vs_residual``.
    """

    mean_contribution: float = float("nan")
    stderr: float = float("nan")
    trials: int = 0
    interim_regret: float = float("nan")
    interim_regret_stderr: float = float("nan")
    expost_regret_freq: float = float("nan")
    vs_residual: float = float("nan")
    vs_stderr: float = float("nan")
    extra: dict = field(default_factory=dict)


def _rng(seed: int, trial: int, stream: int | None = None) -> np.random.Generator:
    key = [int(seed), int(trial)] if stream is None else [int(seed), int(trial), int(stream)]
    return np.random.default_rng(key)


def sample_population(n: int, seed: int | Sequence[int]) -> Population:
    """Draw ``n`` i.i.d. uniform quantiles from a PCG64 stream seeded with ``seed``."""
    if n < 2:
        raise DomainError(f"population size must be >= 2, got {n}")
    rng = np.random.default_rng(seed if isinstance(seed, int) else list(seed))
    key = seed if isinstance(seed, int) else tuple(seed)
    return Population(quantiles=rng.random(n), seed=key)


class _Strategy:
    """Equilibrium strategy of a mechanism, ready for vectorised play."""

    def __init__(self, mech: Mechanism, played: QuantileThresholds | None = None) -> None:
        ctx = mech.setting
        if ctx.n is LARGE:
            raise DomainError("simulation requires a finite population size")
        self.ctx = ctx
        self.n = int(ctx.n)
        self.S = ctx.status
        self.alpha = ctx.alpha_cost
        var = mech.variant
        if isinstance(var, AbsoluteThreshold):
            self.kind = "absolute"
            th = var.thresholds
            if isinstance(th, QuantileThresholds):
                ct = thresholds_from_quantiles(ctx, th) if len(th) else ContributionThresholds(())
                kq = th
            else:
                ct = th
                kq = quantiles_from_thresholds(ctx, th).kappas
            if played is not None:
                kq = played
            self.thetas = np.asarray(ct.thetas, dtype=float)
            self.kappas = np.asarray(kq.kappas, dtype=float)
            self.cutoff_bid = None
        elif isinstance(var, (OptimalLeaderboardCutoff, Leaderboard)):
            self.kind = "rank"
            if isinstance(var, OptimalLeaderboardCutoff):
                c = monopoly_quantile(ctx.dist)
            else:
                c = 1.0 if var.cutoff is None else float(var.cutoff)
            self.cutoff = c
            self._build_rank_bids(c)
        else:
            raise DomainError(f"unsupported mechanism variant {var!r}")

    def _build_rank_bids(self, c: float) -> None:
        ctx = self.ctx
        sn = ctx.Sn
        if c <= 0.0:
            self._interp = None
            self.cutoff_bid = 0.0
            self.top_bid = 0.0
            return
        qs = np.union1d(np.linspace(0.0, c, _BID_GRID), c * np.geomspace(1e-6, 1.0, 64))
        # Cumulative tail integral of S_n v' from each node to the cutoff.
        seg = np.array([
            _qint(lambda z: float(sn(z)) * float(value_derivative(ctx.dist, z)), a, b)
            for a, b in zip(qs[:-1], qs[1:])
        ])
        tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        head = np.asarray(value_at(ctx.dist, qs), dtype=float) * np.asarray(sn(qs), dtype=float)
        bids = head + tail
        self._interp = PchipInterpolator(qs, bids, extrapolate=False)
        self.cutoff_bid = float(bids[-1])
        self.top_bid = float(bids[0])

    def bid(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.kind == "absolute":
            lv = self.level_of_quantile(q)
            table = np.concatenate([[0.0], self.thetas[: len(self.kappas)]])
            return table[lv]
        if self._interp is None:
            return np.zeros_like(q)
        out = np.zeros_like(q)
        mask = q <= self.cutoff
        out[mask] = self._interp(q[mask])
        return out

    def level_of_quantile(self, q: np.ndarray) -> np.ndarray:
        if self.kappas.size == 0:
            return np.zeros(np.shape(q), dtype=int)
        return np.sum(np.asarray(q)[..., None] <= self.kappas, axis=-1)

    def level_of_bid(self, b: np.ndarray) -> np.ndarray:
        """Absolute mechanisms: number of posted thresholds met by each bid."""
        return np.searchsorted(self.thetas, np.asarray(b, dtype=float), side="right")

    def max_bid(self) -> float:
        if self.kind == "absolute":
            return float(self.thetas[-1]) if self.thetas.size else 0.0
        return self.top_bid

    def utility(self, v: np.ndarray, status: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.alpha == 1.0:
            return v * status - b
        return v ** self.alpha * status - b ** self.alpha


def _badges(strat: _Strategy, bids: np.ndarray, tie_rng: np.random.Generator) -> np.ndarray:
    if strat.kind == "absolute":
        return strat.level_of_bid(bids)
    n = bids.size
    badges = np.zeros(n, dtype=int)
    elig = np.flatnonzero(bids >= strat.cutoff_bid) if strat.cutoff < 1.0 else np.arange(n)
    if elig.size:
        # Random secondary key breaks ties uniformly.
        order = np.lexsort((tie_rng.random(elig.size), bids[elig]))
        badges[elig[order]] = np.arange(1, elig.size + 1)
    return badges


def _opponent_fraction(badges: np.ndarray) -> np.ndarray:
    n = badges.size
    srt = np.sort(badges)
    ge = n - np.searchsorted(srt, badges, side="left")
    return (ge - 1) / (n - 1)


def _play(strat: _Strategy, q: np.ndarray, tie_rng: np.random.Generator) -> ExPostOutcome:
    bids = strat.bid(q)
    badges = _badges(strat, bids, tie_rng)
    t = _opponent_fraction(badges)
    statuses = np.asarray(strat.S._S(t), dtype=float)
    return ExPostOutcome(bids=bids, badges=badges, statuses=statuses, total_contribution=float(bids.sum()))


def play(mech: Mechanism, pop: Population, tie_seed: int = 0) -> ExPostOutcome:
    """Play the symmetric equilibrium of ``mech`` on a sampled population.

    Args:
        mech: Mechanism with a finite population size equal to ``pop.n``.
        pop: Sampled quantiles.
        tie_seed: Seed for the uniform random order among equal bids.
    """
    ctx = mech.setting
    if ctx.n is LARGE or int(ctx.n) != pop.n:
        mech = Mechanism(mech.variant, Setting(ctx.dist, ctx.status, pop.n, ctx.alpha_cost))
    strat = _Strategy(mech)
    return _play(strat, pop.quantiles, np.random.default_rng([int(tie_seed), _TIE_STREAM]))


def _with_n(mech: Mechanism, n: int) -> Mechanism:
    ctx = mech.setting
    if ctx.n is not LARGE and int(ctx.n) == n:
        return mech
    return Mechanism(mech.variant, Setting(ctx.dist, ctx.status, n, ctx.alpha_cost))


def estimate_contribution(mech: Mechanism, n: int, trials: int, seed: int) -> SimulationReport:
    """Sample mean and standard error of the per-user contribution."""
    if trials < 2:
        raise DomainError(f"trials must be >= 2, got {trials}")
    strat = _Strategy(_with_n(mech, n))
    per_user = np.empty(trials)
    for k in range(trials):
        q = _rng(seed, k).random(n)
        per_user[k] = _play(strat, q, _rng(seed, k, _TIE_STREAM)).total_contribution / n
    return SimulationReport(
        mean_contribution=float(per_user.mean()),
        stderr=float(per_user.std(ddof=1) / np.sqrt(trials)),
        trials=trials,
    )


def virtual_surplus_identity(mech: Mechanism, n: int, trials: int, seed: int) -> SimulationReport:
    """Compare mean payments with mean realised virtual surplus on common draws.

    The returned report carries ``vs_residual = |E[sum b] - E[sum R' x]| / E[sum b]``
    and its standard error; a null mechanism yields zero for both.
    """
    if trials < 2:
        raise DomainError(f"trials must be >= 2, got {trials}")
    strat = _Strategy(_with_n(mech, n))
    pay = np.empty(trials)
    vs = np.empty(trials)
    for k in range(trials):
        q = _rng(seed, k).random(n)
        out = _play(strat, q, _rng(seed, k, _TIE_STREAM))
        pay[k] = out.total_contribution
        vs[k] = float(np.dot(np.asarray(virtual_at(strat.ctx.dist, q)), out.statuses))
    mp = float(pay.mean())
    rep = SimulationReport(
        mean_contribution=mp / n,
        stderr=float(pay.std(ddof=1) / np.sqrt(trials)) / n,
        trials=trials,
    )
    if mp == 0.0:
        rep.vs_residual, rep.vs_stderr = 0.0, 0.0
        return rep
    diff = pay - vs
    rep.vs_residual = abs(float(diff.mean())) / mp
    rep.vs_stderr = float(diff.std(ddof=1) / np.sqrt(trials)) / mp
    return rep


def _deviation_bids(strat: _Strategy, grid: int) -> np.ndarray:
    extra = [0.0]
    if strat.kind == "absolute":
        extra += list(strat.thetas)
    else:
        extra.append(strat.cutoff_bid)
    top = strat.max_bid()
    return np.unique(np.concatenate([np.linspace(0.0, top * 1.05, grid), extra]))


def _status_for_bids(strat: _Strategy, opp_q: np.ndarray, bids: np.ndarray) -> np.ndarray:
    """Realised status of a user bidding each of ``bids`` against fixed opponents."""
    n1 = opp_q.size
    opp_bids = strat.bid(opp_q)
    if strat.kind == "absolute":
        opp_lv = np.sort(strat.level_of_bid(opp_bids))
        my_lv = strat.level_of_bid(bids)
        ge = n1 - np.searchsorted(opp_lv, my_lv, side="left")
        t = np.where(my_lv == 0, 1.0, ge / n1)
    else:
        srt = np.sort(opp_bids)
        ge = n1 - np.searchsorted(srt, bids, side="left")
        below_cut = (bids < strat.cutoff_bid) if strat.cutoff < 1.0 else np.zeros(bids.shape, bool)
        t = np.where(below_cut, 1.0, ge / n1)
    return np.asarray(strat.S._S(t), dtype=float)


def verify_bne(
    mech: Mechanism,
    n: int,
    deviation_grid: int = 32,
    type_grid: int = 9,
    trials: int = 400,
    seed: int = 0,
    played: QuantileThresholds | Sequence[float] | None = None,
) -> SimulationReport:
    """Estimate the largest interim gain from a unilateral deviation.

    For each tested type, every deviation bid is evaluated against the same
    resampled opponents (common random numbers), so the reported gain is a
    paired difference with a meaningful standard error.

    Args:
        mech: Mechanism to test.
        n: Population size.
        deviation_grid: Number of interstitial deviation bids (at least 3).
        type_grid: Number of tested quantile types (at least 3).
        trials: Opponent profiles per type.
        seed: Base seed.
        played: For absolute mechanisms, quantile thresholds that players
            actually use in place of the equilibrium ones.
    """
    if deviation_grid < 3 or type_grid < 3:
        raise DomainError("deviation and type grids must have at least 3 points")
    if played is not None and not isinstance(played, QuantileThresholds):
        played = QuantileThresholds(tuple(played))
    strat = _Strategy(_with_n(mech, n), played)
    types = (np.arange(type_grid) + 0.5) / type_grid
    devs = _deviation_bids(strat, deviation_grid)
    v = np.asarray(value_at(strat.ctx.dist, types), dtype=float)
    eq_bids = strat.bid(types)
    st_dev = np.zeros((type_grid, devs.size, trials))
    st_eq = np.zeros((type_grid, trials))
    for k in range(trials):
        opp = _rng(seed, k).random(n - 1)
        sd = _status_for_bids(strat, opp, devs)
        st_dev[:, :, k] = sd[None, :]
        st_eq[:, k] = _status_for_bids(strat, opp, eq_bids)
    u_dev = strat.utility(v[:, None, None], st_dev, devs[None, :, None])
    u_eq = strat.utility(v[:, None], st_eq, eq_bids[:, None])
    gain = u_dev - u_eq[:, None, :]
    mean_gain = gain.mean(axis=2)
    se_gain = gain.std(axis=2, ddof=1) / np.sqrt(trials)
    i, j = np.unravel_index(int(np.argmax(mean_gain)), mean_gain.shape)
    return SimulationReport(
        trials=trials,
        interim_regret=float(mean_gain[i, j]),
        interim_regret_stderr=float(se_gain[i, j]),
        extra={"type": float(types[i]), "deviation": float(devs[j])},
    )


def verify_bne_two_player(mech: Mechanism, deviation_grid: int = 64, type_grid: int = 33) -> float:
    """Exact interim regret for ``n = 2`` by integrating over the opponent's quantile.

    The opponent's badge is a step function of its quantile, so the
    quadrature uses the step locations as breakpoints and is exact.
    """
    strat = _Strategy(_with_n(mech, 2))
    S0, S1 = float(strat.S.S0), float(status_at(strat.S, 1.0))
    types = (np.arange(type_grid) + 0.5) / type_grid
    devs = _deviation_bids(strat, deviation_grid)

    def expected_status(b: float) -> float:
        if strat.kind == "absolute":
            my = int(strat.level_of_bid(np.array([b]))[0])
            if my == 0:
                return S1
            ind = lambda q: float(strat.level_of_bid(strat.bid(np.array([q])))[0] >= my)  # noqa: E731
            pts = list(strat.kappas)
        else:
            if strat.cutoff < 1.0 and b < strat.cutoff_bid:
                return S1
            ind = lambda q: float(strat.bid(np.array([q]))[0] >= b)  # noqa: E731
            f = lambda q: float(strat.bid(np.array([q]))[0]) - b  # noqa: E731
            pts = [strat.cutoff]
            if f(0.0) > 0.0 > f(strat.cutoff):
                pts.append(find_root(f, 0.0, strat.cutoff))
        p_ge = integrate(ind, 0.0, 1.0, points=pts)
        return p_ge * S1 + (1.0 - p_ge) * S0

    st_dev = np.array([expected_status(b) for b in devs])
    worst = -np.inf
    for q in types:
        vq = float(value_at(strat.ctx.dist, q))
        beq = float(strat.bid(np.array([q]))[0])
        u_eq = float(strat.utility(vq, expected_status(beq), beq))
        u_dev = strat.utility(vq, st_dev, devs)
        worst = max(worst, float(np.max(u_dev)) - u_eq)
    return worst


def expost_regret(mech: Mechanism, pop: Population, epsilon: float, tie_seed: int = 0) -> np.ndarray:
    """Flag users who could gain more than ``epsilon`` by switching badge ex post.

    Only absolute-threshold mechanisms are supported: a user may move to any
    posted level by bidding its threshold (or zero), given realised opponents.
    """
    if not epsilon > 0.0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    strat = _Strategy(_with_n(mech, pop.n))
    return _expost_flags(strat, pop.quantiles, epsilon)


def _expost_flags(strat: _Strategy, q: np.ndarray, epsilon: float) -> np.ndarray:
    if strat.kind != "absolute":
        raise DomainError("ex-post regret is defined for absolute-threshold mechanisms")
    n = q.size
    lv = strat.level_of_quantile(q)
    levels = np.arange(strat.thetas.size + 1)
    costs = np.concatenate([[0.0], strat.thetas])
    # counts[l] = number of users at level >= l
    counts = np.array([(lv >= l).sum() for l in levels])
    others_ge = counts[None, :] - (lv[:, None] >= levels[None, :])
    t = np.where(levels[None, :] == 0, 1.0, others_ge / (n - 1))
    st = np.asarray(strat.S._S(t), dtype=float)
    v = np.asarray(value_at(strat.ctx.dist, q), dtype=float)
    u_alt = strat.utility(v[:, None], st, costs[None, :])
    u_cur = u_alt[np.arange(n), lv]
    return (u_alt.max(axis=1) - u_cur) > epsilon


def expost_regret_frequency(mech: Mechanism, n: int, epsilon: float, trials: int, seed: int) -> float:
    """Fraction of sampled populations in which some user has ex-post regret above ``epsilon``."""
    if not epsilon > 0.0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    strat = _Strategy(_with_n(mech, n))
    hits = 0
    for k in range(trials):
        q = _rng(seed, k).random(n)
        hits += bool(_expost_flags(strat, q, epsilon).any())
    return hits / trials


def empirical_interim(
    mech: Mechanism, n: int, trials: int, seed: int, buckets: int = 20
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Average realised status by quantile bucket, with the analytic interim status.

    Returns:
        ``(bucket_centres, empirical_mean_status, analytic_interim)``.
    """
    strat = _Strategy(_with_n(mech, n))
    if strat.kind != "absolute":
        raise DomainError("bucketed interim status is defined for absolute-threshold mechanisms")
    edges = np.linspace(0.0, 1.0, buckets + 1)
    sums = np.zeros(buckets)
    cnts = np.zeros(buckets)
    for k in range(trials):
        q = _rng(seed, k).random(n)
        out = _play(strat, q, _rng(seed, k, _TIE_STREAM))
        idx = np.minimum((q * buckets).astype(int), buckets - 1)
        sums += np.bincount(idx, weights=out.statuses, minlength=buckets)
        cnts += np.bincount(idx, minlength=buckets)
    centres = 0.5 * (edges[:-1] + edges[1:])
    sn = strat.ctx.Sn
    lv = strat.level_of_quantile(centres)
    table = np.concatenate([[0.0], [float(sn(k)) for k in strat.kappas]])
    return centres, sums / np.maximum(cnts, 1), table[lv]


def _weak_orderings(n: int):
    """All assignments of ``n`` players to contiguous badge levels ``0..k-1``."""
    for a in itertools.product(range(n), repeat=n):
        used = set(a)
        if used == set(range(len(used))):
            yield a


def assignment_surplus(levels: Sequence[int], virt: Sequence[float], status: StatusFunction) -> float:
    """Virtual surplus ``sum_i R'(q_i) S(t_i)`` of a badge assignment."""
    lv = np.asarray(levels)
    n = lv.size
    if n == 1:
        t = np.zeros(1)
    else:
        t = np.array([(np.sum(lv >= lv[i]) - 1) / (n - 1) for i in range(n)])
    return float(np.dot(np.asarray(virt, dtype=float), np.asarray(status._S(t), dtype=float)))


def ranking_assignment(quantiles: Sequence[float], dist: AbilityDistribution) -> tuple[int, ...]:
    """Distinct badges in decreasing order of quantile for non-negative virtual ability, badge 0 otherwise."""
    q = np.asarray(quantiles, dtype=float)
    virt = np.asarray(virtual_at(dist, q), dtype=float)
    pos = np.flatnonzero(virt >= 0.0)
    neg_exists = pos.size < q.size
    out = [0] * q.size
    base = 1 if neg_exists else 0
    for rank, i in enumerate(sorted(pos, key=lambda i: -q[i])):
        out[i] = base + rank
    return tuple(out)


def brute_force_virtual_surplus(
    quantiles: Sequence[float], dist: AbilityDistribution, status: StatusFunction
) -> tuple[tuple[int, ...], float]:
    """Maximise virtual surplus over every weak ordering of at most six players.

    Returns:
        ``(best_assignment, best_value)``; the first maximiser found is returned.

    Raises:
        TooLarge: For more than six players.
    """
    n = len(quantiles)
    if n > BRUTE_FORCE_MAX:
        raise TooLarge(f"brute force is limited to {BRUTE_FORCE_MAX} players, got {n}")
    if n == 0:
        return (), 0.0
    virt = np.asarray(virtual_at(dist, np.asarray(quantiles, dtype=float)), dtype=float)
    best, best_val = None, -np.inf
    for a in _weak_orderings(n):
        val = assignment_surplus(a, virt, status)
        if val > best_val + 1e-15:
            best, best_val = a, val
    return tuple(best), float(best_val)
