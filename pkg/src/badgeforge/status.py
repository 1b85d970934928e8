"""Status value functions and their interim (Bernstein) transforms.

``S(t)`` is the value of status to a user who is beaten by a fraction ``t`` of
opponents. Under a full ranking, a user at quantile ``q`` among ``n`` players
expects ``S_n(q) = E[S(K / (n - 1))]`` with ``K ~ Binomial(n - 1, q)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .exceptions import DomainError, OutOfRange
from .numerics import DEFAULT_TOL, SUMMATION_CAP, Tolerance, bernstein_weights, find_root

SHAPES = ("concave", "linear", "convex", "unknown")
_SHAPE_SLACK = 1e-10


class Market(enum.Enum):
    """Population-size sentinel for the large-market limit."""

    LARGE = "large"

    def __repr__(self) -> str:
        return "LARGE"


LARGE = Market.LARGE
PopSize = Union[int, Market]


def parse_n(n: PopSize | str) -> PopSize:
    """Normalise a population size given as an int, ``"large"`` or :data:`LARGE`."""
    if n is LARGE or (isinstance(n, str) and n.strip().lower() in ("large", "inf", "infinity")):
        return LARGE
    try:
        k = int(n)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"population size must be an integer or 'large', got {n!r}") from exc
    if k != n and not isinstance(n, str):
        raise DomainError(f"population size must be integral, got {n!r}")
    if k < 2:
        raise DomainError(f"population size must be >= 2, got {k}")
    return k


@dataclass(frozen=True, eq=False)
class StatusFunction:
    """Base class for status value functions on ``[0, 1]``."""

    kind: str = field(default="abstract", init=False)

    def _S(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def shape(self) -> str:
        return "unknown"

    @property
    def S0(self) -> float:
        """Status of the top-ranked user, ``S(0)``."""
        return float(self._S(np.array(0.0)))

    def describe(self) -> str:
        return self.kind


@dataclass(frozen=True, eq=False)
class Linear(StatusFunction):
    """``S(t) = 1 - t``."""

    kind: str = field(default="linear", init=False)

    def _S(self, t):
        return 1.0 - t

    @property
    def shape(self) -> str:
        return "linear"


@dataclass(frozen=True, eq=False)
class ConcavePower(StatusFunction):
    """``S(t) = (1 - t)^alpha`` with ``0 < alpha <= 1``."""

    alpha: float = 1.0
    kind: str = field(default="concave_power", init=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError(f"ConcavePower alpha must lie in (0, 1], got {self.alpha}")

    def _S(self, t):
        return np.power(np.maximum(1.0 - t, 0.0), self.alpha)

    @property
    def shape(self) -> str:
        return "linear" if self.alpha == 1.0 else "concave"

    def describe(self) -> str:
        return f"concave_power(alpha={self.alpha:g})"


@dataclass(frozen=True, eq=False)
class ConvexReciprocal(StatusFunction):
    """``S(t) = n_ref / ((n_ref - 1) t + 1) - 1``; ``S(0) = n_ref - 1``."""

    n_ref: int = 2
    kind: str = field(default="convex_reciprocal", init=False)

    def __post_init__(self) -> None:
        if int(self.n_ref) != self.n_ref or self.n_ref < 2:
            raise DomainError(f"ConvexReciprocal n_ref must be an integer >= 2, got {self.n_ref}")

    def _S(self, t):
        n = float(self.n_ref)
        return n / ((n - 1.0) * t + 1.0) - 1.0

    @property
    def shape(self) -> str:
        return "convex"

    def describe(self) -> str:
        return f"convex_reciprocal(n_ref={self.n_ref})"


@dataclass(frozen=True, eq=False)
class CustomStatus(StatusFunction):
    """User-supplied status function with a declared (or scanned) shape class."""

    S: Callable | None = None
    declared_shape: str = "unknown"
    kind: str = field(default="custom", init=False)

    def __post_init__(self) -> None:
        if self.S is None:
            raise DomainError("CustomStatus requires a status function")
        if self.declared_shape not in SHAPES:
            raise DomainError(f"shape must be one of {SHAPES}, got {self.declared_shape!r}")

    def _S(self, t):
        arr = np.asarray(t, dtype=float)
        try:
            out = np.asarray(self.S(arr), dtype=float)
            if out.shape == arr.shape:
                return out
        except (TypeError, ValueError):
            pass
        return np.vectorize(lambda x: float(self.S(float(x))), otypes=[float])(arr)

    @property
    def shape(self) -> str:
        if self.declared_shape != "unknown":
            return self.declared_shape
        return classify_shape(self)


def classify_shape(s: StatusFunction, grid: int = 200) -> str:
    """Classify a status function by the sign of its second differences."""
    t = np.linspace(0.0, 1.0, grid + 1)
    d2 = np.diff(np.asarray(s._S(t), dtype=float), 2)
    scale = _SHAPE_SLACK * max(1.0, float(np.max(np.abs(s._S(t)))))
    if np.all(np.abs(d2) <= scale):
        return "linear"
    if np.all(d2 <= scale):
        return "concave"
    if np.all(d2 >= -scale):
        return "convex"
    return "unknown"


def status_at(s: StatusFunction, t: float | np.ndarray) -> float | np.ndarray:
    """Status value ``S(t)``.

    Raises:
        DomainError: If ``t`` lies outside ``[0, 1]``.
    """
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f"t must lie in [0, 1], got {t}")
    out = np.asarray(s._S(arr), dtype=float)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class InterimStatus:
    """Interim status ``S_n`` for a population of ``n`` users.

    In large-market mode (``n = LARGE``) the interim status equals ``S``.

    Attributes:
        status: Underlying status function.
        n: Population size or :data:`LARGE`.
    """

    status: StatusFunction
    n: PopSize = LARGE
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "n", parse_n(self.n))

    @property
    def large(self) -> bool:
        return self.n is LARGE

    @property
    def S0(self) -> float:
        return self.status.S0

    def _nodes(self) -> np.ndarray:
        vals = self._cache.get("nodes")
        if vals is None:
            if self.n > SUMMATION_CAP:
                # Delegate the error message to the kernel.
                bernstein_weights(self.n, 0.5)
            t = np.arange(self.n) / (self.n - 1)
            vals = np.asarray(self.status._S(t), dtype=float)
            self._cache["nodes"] = vals
        return vals

    def _one(self, q: float) -> float:
        if self.large:
            return float(self.status._S(np.array(q)))
        if isinstance(self.status, Linear):
            # Bernstein operators reproduce linear functions exactly.
            return 1.0 - q
        k0, w = bernstein_weights(self.n, q)
        g = self._nodes()[k0:k0 + len(w)]
        return float(np.dot(w, g))

    def __call__(self, q: float | np.ndarray) -> float | np.ndarray:
        arr = np.asarray(q, dtype=float)
        if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
            raise DomainError(f"q must lie in [0, 1], got {q}")
        if arr.ndim == 0:
            return self._one(float(arr))
        if self.large:
            return np.asarray(self.status._S(arr), dtype=float)
        return np.array([self._one(float(x)) for x in arr.ravel()]).reshape(arr.shape)

    def inverse(self, target: float, tol: Tolerance = DEFAULT_TOL) -> float:
        """Quantile ``q`` with ``S_n(q) = target``.

        Raises:
            OutOfRange: If ``target`` lies outside ``[0, S(0)]``.
        """
        s0 = self.S0
        if target < 0.0 or target > s0 * (1.0 + 1e-14):
            raise OutOfRange(f"target {target} outside [0, {s0}]")
        if target <= 0.0:
            return 1.0
        if target >= s0:
            return 0.0
        # Resolve to float precision: S can be steep near q = 1 (e.g. sqrt).
        tight = Tolerance(abs_tol=min(tol.abs_tol, 1e-300), rel_tol=tol.rel_tol, max_iter=max(tol.max_iter, 400))
        return find_root(lambda q: self._one(q) - target, 0.0, 1.0, tight)

    def describe(self) -> str:
        return f"{self.status.describe()}, n={'large' if self.large else self.n}"


def interim_status(is_: InterimStatus, q: float | np.ndarray) -> float | np.ndarray:
    """Interim status ``S_n(q)`` (``S(q)`` in large-market mode)."""
    return is_(q)


def interim_status_inverse(is_: InterimStatus, target: float) -> float:
    """Quantile at which the interim status equals ``target``."""
    return is_.inverse(target)


@dataclass(frozen=True)
class BetaStatus:
    """Status with partial credit for ties: ``S(t_e, t_g) = 1 - beta * t_e - t_g``.

    ``t_g`` is the fraction of opponents with a strictly higher badge and
    ``t_e`` the fraction with an equal badge.
    """

    beta: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise DomainError(f"beta must lie in [0, 1], got {self.beta}")

    def value(self, t_e: float, t_g: float) -> float:
        if t_e < 0.0 or t_g < 0.0 or t_e + t_g > 1.0 + 1e-12:
            raise DomainError(f"invalid tie fractions t_e={t_e}, t_g={t_g}")
        return 1.0 - self.beta * t_e - t_g


def beta_interim_single(b: BetaStatus, kappa: float, side: str) -> float:
    """Large-market interim status under a single badge held by the top ``kappa``.

    Args:
        b: Tie-breaking model.
        kappa: Fraction of users holding the badge.
        side: ``"earned"`` or ``"not_earned"``.
    """
    if not 0.0 <= kappa <= 1.0:
        raise DomainError(f"kappa must lie in [0, 1], got {kappa}")
    if side == "earned":
        return b.value(kappa, 0.0)
    if side == "not_earned":
        return b.value(1.0 - kappa, kappa)
    raise DomainError(f"side must be 'earned' or 'not_earned', got {side!r}")
