"""Ability distributions in quantile space.

A distribution is represented by its value curve ``v(q) = F^{-1}(1 - q)``, where
``q`` is the probability that a random user has higher ability. Everything else
(revenue curve, virtual ability, monopoly quantile) is derived from ``v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .exceptions import DomainError, NotRegular
from .numerics import DEFAULT_TOL, Tolerance, find_root

FD_STEP = 1e-6
REGULARITY_SLACK = 1e-8
_DIAG_GRID = 2000

ArrayLike = float | np.ndarray


@dataclass(frozen=True, eq=False)
class AbilityDistribution:
    """Base class for ability distributions.

    Subclasses implement :meth:`_v` and optionally :meth:`_dv` (analytic
    derivative of the value curve). Both must accept numpy arrays.
    """

    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    kind: str = field(default="abstract", init=False)

    def _v(self, q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _dv(self, q: np.ndarray) -> np.ndarray | None:
        return None

    @property
    def analytic_derivative(self) -> bool:
        return type(self)._dv is not AbilityDistribution._dv

    @property
    def v_bar(self) -> float:
        """Highest ability ``v(0)``."""
        return float(self._v(np.array(0.0)))

    def cdf(self, a: ArrayLike) -> ArrayLike:
        """CDF of abilities, obtained by inverting the value curve numerically."""
        vb = self.v_bar
        v1 = float(self._v(np.array(1.0)))

        def one(x: float) -> float:
            if x >= vb:
                return 1.0
            if x <= v1:
                return 0.0
            q = find_root(lambda s: float(self._v(np.array(s))) - x, 0.0, 1.0)
            return 1.0 - q

        arr = np.asarray(a, dtype=float)
        out = np.vectorize(one, otypes=[float])(arr)
        return float(out) if out.ndim == 0 else out

    def describe(self) -> str:
        return self.kind


@dataclass(frozen=True, eq=False)
class Uniform01(AbilityDistribution):
    """Abilities uniform on ``[0, 1]``: ``v(q) = 1 - q``."""

    kind: str = field(default="uniform", init=False)

    def _v(self, q):
        return 1.0 - q

    def _dv(self, q):
        return -np.ones_like(q, dtype=float)

    def cdf(self, a):
        return np.clip(a, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class Power(AbilityDistribution):
    """``F(a) = a^alpha`` on ``[0, 1]``: ``v(q) = (1 - q)^(1/alpha)``."""

    alpha: float = 1.0
    kind: str = field(default="power", init=False)

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise DomainError(f"Power alpha must be positive, got {self.alpha}")

    def _v(self, q):
        return np.power(1.0 - q, 1.0 / self.alpha)

    def _dv(self, q):
        with np.errstate(divide="ignore"):
            return -np.power(1.0 - q, 1.0 / self.alpha - 1.0) / self.alpha

    def cdf(self, a):
        return np.power(np.clip(a, 0.0, 1.0), self.alpha)

    def describe(self) -> str:
        return f"power(alpha={self.alpha:g})"


@dataclass(frozen=True, eq=False)
class LongTail(AbilityDistribution):
    """Long-tailed family ``v(q) = (1 - q) / (1/H + q)`` with support ``[0, H]``."""

    H: float = 1.0
    kind: str = field(default="longtail", init=False)

    def __post_init__(self) -> None:
        if not (self.H > 0 and math.isfinite(self.H)):
            raise DomainError(f"LongTail H must be positive and finite, got {self.H}")

    def _v(self, q):
        return (1.0 - q) / (1.0 / self.H + q)

    def _dv(self, q):
        c = 1.0 / self.H
        return -(1.0 + c) / (c + q) ** 2

    def cdf(self, a):
        a = np.clip(a, 0.0, self.H)
        return (self.H + 1.0) / self.H * a / (a + 1.0)

    def describe(self) -> str:
        return f"longtail(H={self.H:g})"


@dataclass(frozen=True, eq=False)
class EmpiricalQuantile(AbilityDistribution):
    """Piecewise-linear value curve through the order statistics of a sample.

    The ``i``-th largest of ``N`` samples sits at quantile ``i / (N - 1)``.
    The lowest sample is clamped to zero if negative.
    """

    samples: tuple[float, ...] = ()
    kind: str = field(default="empirical", init=False)

    def __post_init__(self) -> None:
        if len(self.samples) < 2:
            raise DomainError("an empirical distribution needs at least two samples")
        xs = np.sort(np.asarray(self.samples, dtype=float))[::-1]
        if not np.all(np.isfinite(xs)):
            raise DomainError("samples must be finite")
        xs = np.maximum(xs, 0.0)
        object.__setattr__(self, "samples", tuple(xs.tolist()))
        self._cache["nodes"] = np.linspace(0.0, 1.0, len(xs))
        self._cache["vals"] = xs

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "EmpiricalQuantile":
        return cls(samples=tuple(float(s) for s in samples))

    @classmethod
    def from_file(cls, path: str | Path) -> "EmpiricalQuantile":
        """Read one ability per line; blank lines and ``#`` comments are skipped."""
        vals = []
        for line in Path(path).read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                vals.append(float(line))
        return cls.from_samples(vals)

    def _v(self, q):
        return np.interp(q, self._cache["nodes"], self._cache["vals"])

    def describe(self) -> str:
        return f"empirical(N={len(self.samples)})"


@dataclass(frozen=True, eq=False)
class Custom(AbilityDistribution):
    """User-supplied value curve; the derivative is taken by finite differences."""

    v: Callable[[float], float] | None = None
    kind: str = field(default="custom", init=False)

    def __post_init__(self) -> None:
        if self.v is None:
            raise DomainError("Custom distribution requires a value function")

    def _v(self, q):
        arr = np.asarray(q, dtype=float)
        try:
            out = np.asarray(self.v(arr), dtype=float)
            if out.shape == arr.shape:
                return out
        except (TypeError, ValueError):
            pass
        out = np.vectorize(lambda x: float(self.v(float(x))), otypes=[float])(arr)
        return out


@dataclass(frozen=True)
class PopulationMix:
    """Weighted mixture of ability distributions.

    Attributes:
        components: ``(weight, distribution)`` pairs with weights summing to one.
    """

    components: tuple[tuple[float, AbilityDistribution], ...]

    def __post_init__(self) -> None:
        if not self.components:
            raise DomainError("a population mix needs at least one component")
        ws = [w for w, _ in self.components]
        if any(not 0.0 < w <= 1.0 for w in ws):
            raise DomainError(f"mixture weights must lie in (0, 1], got {ws}")
        if abs(sum(ws) - 1.0) > 1e-12:
            raise DomainError(f"mixture weights must sum to 1, got {sum(ws)!r}")


@dataclass(frozen=True, eq=False)
class Mixture(AbilityDistribution):
    """Aggregate distribution whose CDF is the weighted mixture of component CDFs."""

    mix: PopulationMix | None = None
    kind: str = field(default="mixture", init=False)

    def cdf(self, a):
        return sum(w * np.asarray(d.cdf(a), dtype=float) for w, d in self.mix.components)

    @property
    def v_bar(self) -> float:
        return max(d.v_bar for _, d in self.mix.components)

    def _v(self, q):
        vb = self.v_bar

        def one(s: float) -> float:
            if s <= 0.0:
                return vb
            if s >= 1.0:
                return 0.0
            return find_root(lambda a: float(self.cdf(a)) - (1.0 - s), 0.0, vb, Tolerance(abs_tol=1e-13))

        arr = np.asarray(q, dtype=float)
        return np.vectorize(one, otypes=[float])(arr)

    def describe(self) -> str:
        parts = ", ".join(f"{w:g}*{d.describe()}" for w, d in self.mix.components)
        return f"mixture({parts})"


@dataclass(frozen=True)
class RegularityReport:
    """Outcome of a regularity scan.

    Attributes:
        regular: Whether the virtual ability is non-increasing on the grid.
        worst_violation: Largest increase of the virtual ability between grid points.
    """

    regular: bool
    worst_violation: float


def _check_q(q: ArrayLike) -> np.ndarray:
    arr = np.asarray(q, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f"quantile must lie in [0, 1], got {q}")
    return arr


def _out(x: np.ndarray) -> ArrayLike:
    return float(x) if np.ndim(x) == 0 else x


def value_at(dist: AbilityDistribution, q: ArrayLike) -> ArrayLike:
    """Ability ``v(q)`` at quantile ``q``.

    Raises:
        DomainError: If ``q`` lies outside ``[0, 1]``.
    """
    return _out(np.asarray(dist._v(_check_q(q)), dtype=float))


def revenue_at(dist: AbilityDistribution, q: ArrayLike) -> ArrayLike:
    """Revenue curve ``R(q) = q * v(q)``."""
    arr = _check_q(q)
    return _out(arr * np.asarray(dist._v(arr), dtype=float))


def _fd(f: Callable, x: np.ndarray) -> np.ndarray:
    """Central difference, with second-order one-sided stencils near the endpoints."""
    h = FD_STEP
    x = np.asarray(x, dtype=float)
    left = x < h
    right = x > 1.0 - h
    xc = np.clip(x, h, 1.0 - h)
    out = (f(xc + h) - f(xc - h)) / (2.0 * h)
    if np.any(left):
        xl = np.where(left, x, 0.0)
        out = np.where(left, (-3.0 * f(xl) + 4.0 * f(xl + h) - f(xl + 2.0 * h)) / (2.0 * h), out)
    if np.any(right):
        xr = np.where(right, x, 1.0)
        out = np.where(right, (3.0 * f(xr) - 4.0 * f(xr - h) + f(xr - 2.0 * h)) / (2.0 * h), out)
    return out


def value_derivative(dist: AbilityDistribution, q: ArrayLike) -> ArrayLike:
    """Derivative ``v'(q)``: analytic when available, else finite differences."""
    arr = _check_q(q)
    d = dist._dv(arr)
    if d is not None:
        return _out(np.asarray(d, dtype=float))
    return _out(_fd(lambda s: np.asarray(dist._v(s), dtype=float), arr))


def virtual_at(dist: AbilityDistribution, q: ArrayLike) -> ArrayLike:
    """Virtual ability ``R'(q) = v(q) + q v'(q)``.

    Uses the analytic derivative when the distribution supplies one, otherwise
    a central difference with step ``1e-6`` (second-order one-sided at the endpoints).
    """
    arr = _check_q(q)
    d = dist._dv(arr)
    with np.errstate(invalid="ignore"):
        if d is not None:
            prod = np.where(arr == 0.0, 0.0, arr * np.asarray(d, dtype=float))
            return _out(np.asarray(dist._v(arr), dtype=float) + prod)
        return _out(_fd(lambda s: s * np.asarray(dist._v(s), dtype=float), arr))


def check_regularity(dist: AbilityDistribution, grid: int = _DIAG_GRID) -> RegularityReport:
    """Scan ``R'`` on a uniform grid and report whether it is non-increasing.

    Args:
        dist: Distribution to test.
        grid: Number of grid cells (at least 10).
    """
    if grid < 10:
        raise DomainError(f"regularity grid must be >= 10, got {grid}")
    key = ("regularity", grid)
    if key in dist._cache:
        return dist._cache[key]
    qs = np.linspace(0.0, 1.0, grid + 1)
    rp = np.asarray(virtual_at(dist, qs), dtype=float)
    finite = np.isfinite(rp)
    rp = rp[finite]
    inc = np.diff(rp)
    slack = REGULARITY_SLACK * (1.0 + np.maximum(np.abs(rp[:-1]), np.abs(rp[1:])))
    worst = float(np.max(inc - slack, initial=-np.inf))
    report = RegularityReport(regular=bool(worst <= 0.0), worst_violation=max(0.0, float(np.max(inc, initial=0.0))))
    dist._cache[key] = report
    return report


def monopoly_quantile(dist: AbilityDistribution, trusted: bool = False, tol: Tolerance = DEFAULT_TOL) -> float:
    """Quantile ``kappa*`` at which the revenue curve peaks (``R'(kappa*) = 0``).

    Args:
        dist: A regular distribution.
        trusted: Skip the regularity scan.
        tol: Root-finding tolerances.

    Raises:
        NotRegular: If the virtual ability is not monotone on the diagnostic grid.
    """
    if "kappa_star" in dist._cache:
        return dist._cache["kappa_star"]
    if not trusted:
        rep = check_regularity(dist)
        if not rep.regular:
            raise NotRegular(
                f"{dist.describe()} is not regular (virtual ability increases by {rep.worst_violation:.3g})"
            )
    f = lambda s: float(virtual_at(dist, s))  # noqa: E731
    # Bracket the first sign change; R' may touch zero only at q = 1.
    qs = np.linspace(0.0, 1.0, 201)
    rp = np.asarray(virtual_at(dist, qs), dtype=float)
    idx = np.flatnonzero(rp <= 0.0)
    if idx.size == 0:
        k = 1.0
    elif idx[0] == 0:
        k = 0.0
    elif rp[idx[0]] == 0.0:
        k = float(qs[idx[0]])
    else:
        k = find_root(f, float(qs[idx[0] - 1]), float(qs[idx[0]]), tol)
    dist._cache["kappa_star"] = k
    return k


def aggregate(mix: PopulationMix) -> AbilityDistribution:
    """Aggregate distribution of a heterogeneous population.

    The returned distribution has CDF ``sum_j p_j F_j``; its value curve is
    obtained by numerically inverting that CDF.
    """
    return Mixture(mix=mix)
