"""Badge mechanisms when ties earn partial status.

An opponent with an equal badge counts as beating a user with probability
``beta``, so status is ``1 - beta * t_e - t_g``. All results here are for
linear status in the large-market limit.
"""

from __future__ import annotations

from dataclasses import dataclass

from .abilities import AbilityDistribution, monopoly_quantile, revenue_at, value_at
from .exceptions import DomainError, UnsupportedBeta
from .mechanisms import _qint, optimal_contribution
from .numerics import Tolerance, find_all_roots
from .status import LARGE, Linear, StatusFunction

_SCAN_GRID = 10_000
_ROOT_TOL = Tolerance(abs_tol=1e-13, rel_tol=1e-12, max_iter=400)


@dataclass(frozen=True)
class TieBreakModel:
    """Tie-breaking parameter together with the ability distribution.

    Attributes:
        beta: Probability that an equally ranked opponent counts as higher.
        dist: Ability distribution.
        status: Must be linear; other status laws are rejected.
    """

    beta: float
    dist: AbilityDistribution
    status: StatusFunction | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise DomainError(f"beta must lie in [0, 1], got {self.beta}")
        if self.status is not None and self.status.shape != "linear":
            raise DomainError("tie-breaking analysis is defined for linear status only")


@dataclass(frozen=True)
class MedianTieBreak:
    """Contribution of the median badge and the optimum's upper bound ``R(kappa*)``."""

    contribution: float
    opt_upper_bound: float

    @property
    def ratio_bound(self) -> float:
        return self.opt_upper_bound / self.contribution


@dataclass(frozen=True)
class OptimalTieBreak:
    """Structure and value of the optimal mechanism at ``beta`` in ``{0, 1/2, 1}``.

    Attributes:
        structure: ``"leaderboard_cutoff"``, ``"full_leaderboard"`` or
            ``"top_pool_then_leaderboard"``.
        theta: Contribution threshold of the top group (``None`` when the
            mechanism has no threshold).
        kappa: Quantile of the marginal top-group member.
        opt: Per-user contribution.
    """

    structure: str
    theta: float | None
    kappa: float | None
    opt: float


def indifference_gap(model: TieBreakModel, kappa: float, theta: float) -> float:
    """``v(kappa) (kappa (1 - 2 beta) + beta) - theta``."""
    b = model.beta
    return float(value_at(model.dist, kappa)) * (kappa * (1.0 - 2.0 * b) + b) - theta


def single_badge_equilibria(model: TieBreakModel, theta: float, grid: int = _SCAN_GRID) -> list[float]:
    """All interior quantile thresholds consistent with a single badge at ``theta``.

    For ``beta >= 1/2`` there is at most one; smaller ``beta`` can yield several.
    """
    if not theta > 0.0:
        raise DomainError(f"theta must be positive, got {theta}")
    roots = find_all_roots(lambda k: indifference_gap(model, k, theta), 0.0, 1.0, grid, _ROOT_TOL)
    return [float(r) for r in roots if 0.0 < r < 1.0]


def median_threshold(model: TieBreakModel) -> float:
    """Robust median threshold ``v(1/2) / 2``."""
    return float(value_at(model.dist, 0.5)) / 2.0


def median_tiebreak_contribution(model: TieBreakModel) -> MedianTieBreak:
    """Median badge contribution ``R(1/2) / 2``, independent of ``beta``.

    Raises:
        NotRegular: If the distribution is not regular.
    """
    k = monopoly_quantile(model.dist)
    return MedianTieBreak(
        contribution=float(revenue_at(model.dist, 0.5)) / 2.0,
        opt_upper_bound=float(revenue_at(model.dist, k)),
    )


def leaderboard_tiebreak_contribution(model: TieBreakModel) -> float:
    """Full-leaderboard contribution ``integral_0^1 R(q) dq``.

    Raises:
        NotRegular: If the distribution is not regular.
    """
    monopoly_quantile(model.dist)
    return _qint(lambda q: float(revenue_at(model.dist, q)), 0.0, 1.0)


def optimal_tiebreak(model: TieBreakModel) -> OptimalTieBreak:
    """Optimal mechanism for ``beta`` in ``{0, 1/2, 1}``.

    Raises:
        UnsupportedBeta: For any other ``beta``.
        NotRegular: If the distribution is not regular.
    """
    d = model.dist
    b = model.beta
    if b == 1.0:
        k = monopoly_quantile(d)
        theta = float(value_at(d, k)) * (1.0 - k)
        return OptimalTieBreak("leaderboard_cutoff", theta, k, optimal_contribution(d, Linear(), LARGE))
    if b == 0.5:
        return OptimalTieBreak("full_leaderboard", None, None, leaderboard_tiebreak_contribution(model))
    if b == 0.0:
        k = monopoly_quantile(d)
        theta = float(value_at(d, k)) * k + _qint(lambda q: float(value_at(d, q)), k, 1.0)
        opt = float(revenue_at(d, k)) * k + _qint(lambda q: float(revenue_at(d, q)), k, 1.0)
        return OptimalTieBreak("top_pool_then_leaderboard", theta, k, opt)
    raise UnsupportedBeta(f"no structured optimal mechanism is known for beta={b}")


def everyone_wins_single_badge(model: TieBreakModel) -> OptimalTieBreak:
    """Variant where users without a badge keep status ``1 - t_g``: one badge at ``kappa*``.

    The threshold is ``R(kappa*)``. This normalisation differs from the
    ``beta = 0`` model, where the lowest ranked users are separated.
    """
    k = monopoly_quantile(model.dist)
    r = float(revenue_at(model.dist, k))
    return OptimalTieBreak("single_badge", r, k, r * k)


def random_winner_single_badge(model: TieBreakModel, kappa: float) -> tuple[float, float]:
    """Single badge when ties are split evenly: ``(v(kappa) / 2, R(kappa) / 2)``."""
    if model.beta != 0.5:
        raise DomainError(f"random-winner analysis requires beta = 1/2, got {model.beta}")
    if not 0.0 < kappa < 1.0:
        raise DomainError(f"kappa must lie in (0, 1), got {kappa}")
    return float(value_at(model.dist, kappa)) / 2.0, float(revenue_at(model.dist, kappa)) / 2.0
