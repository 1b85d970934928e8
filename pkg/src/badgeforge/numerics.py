"""Shared numerical kernels: quadrature, bracketed root finding and Bernstein sums.

All routines are pure functions of their arguments. Tolerances are carried in a
small frozen dataclass so that every caller states explicitly how accurate it
needs to be.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _spi
from scipy import optimize as _spo
from scipy.stats import binom

from .exceptions import DomainError, NoBracket, NonConvergence, SummationOverflow

ScalarFn = Callable[[float], float]

#: Largest population for which Bernstein sums are evaluated exactly.
SUMMATION_CAP = 100_000

# Half-width of the summation window in standard deviations of Binomial(n-1, q).
_WINDOW_SIGMAS = 40.0
_WINDOW_PAD = 50


@dataclass(frozen=True)
class Tolerance:
    """Accuracy targets for iterative kernels.

    Attributes:
        abs_tol: Absolute error target.
        rel_tol: Relative error target.
        max_iter: Iteration budget (subdivisions for quadrature, steps for root finding).
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-9
    max_iter: int = 200

    def __post_init__(self) -> None:
        if not self.abs_tol > 0:
            raise DomainError(f"abs_tol must be positive, got {self.abs_tol}")
        if not self.rel_tol > 0:
            raise DomainError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_iter < 1:
            raise DomainError(f"max_iter must be >= 1, got {self.max_iter}")


DEFAULT_TOL = Tolerance()


def integrate(
    f: ScalarFn,
    a: float,
    b: float,
    tol: Tolerance = DEFAULT_TOL,
    points: Sequence[float] | None = None,
) -> float:
    """Integrate ``f`` over ``[a, b]`` with adaptive Gauss-Kronrod quadrature.

    The underlying rule never evaluates ``f`` at the interval endpoints, so
    integrable endpoint singularities are tolerated.

    Args:
        f: Scalar integrand.
        a: Lower limit.
        b: Upper limit, ``b >= a``.
        tol: Accuracy targets; ``max_iter`` bounds the number of subintervals.
        points: Optional interior breakpoints (kinks or jumps of ``f``).

    Returns:
        The integral estimate.

    Raises:
        DomainError: If ``a > b``.
        NonConvergence: If the subdivision budget is exhausted.
    """
    if a > b:
        raise DomainError(f"integration limits out of order: {a} > {b}")
    if a == b:
        return 0.0
    brk = None
    if points is not None:
        brk = sorted({float(p) for p in points if a < p < b}) or None
    limit = max(tol.max_iter, 4 * len(brk) + 50) if brk else tol.max_iter
    with np.errstate(all="ignore"):
        out = _spi.quad(
            f, a, b, epsabs=tol.abs_tol, epsrel=tol.rel_tol,
            limit=limit, points=brk, full_output=1,
        )
    val, err = float(out[0]), float(out[1])
    if not math.isfinite(val):
        raise NonConvergence(f"quadrature produced a non-finite value ({val})")
    # A trailing message signals trouble; only give up if the error is also large.
    if len(out) > 3:
        target = max(tol.abs_tol, tol.rel_tol * abs(val))
        if err > 1e3 * target and err > 1e-7 * max(1.0, abs(val)):
            raise NonConvergence(f"quadrature error {err:.3g} exceeds target {target:.3g}: {out[3]}")
    return val


def find_root(f: ScalarFn, lo: float, hi: float, tol: Tolerance = DEFAULT_TOL) -> float:
    """Find a root of ``f`` in ``[lo, hi]`` by bisection with Illinois acceleration.

    The bracket is maintained at every step, so convergence is guaranteed for
    any continuous ``f`` with a sign change. Infinite endpoint values are
    accepted; the secant step is skipped while an endpoint value is infinite.

    Args:
        f: Scalar function.
        lo: Left end of the bracket.
        hi: Right end of the bracket.
        tol: ``abs_tol`` is the final bracket width. Iteration also stops
            once the bracket ends are adjacent floats.

    Returns:
        A point ``x`` within ``abs_tol`` of a sign change of ``f``; at float
        resolution, the bracket end with the smaller residual.

    Raises:
        NoBracket: If ``f(lo)`` and ``f(hi)`` have the same strict sign.
        NonConvergence: If ``max_iter`` steps do not shrink the bracket enough.
    """
    if lo > hi:
        lo, hi = hi, lo
    flo, fhi = float(f(lo)), float(f(hi))
    if math.isnan(flo) or math.isnan(fhi):
        raise NoBracket(f"f is undefined at a bracket endpoint: f({lo})={flo}, f({hi})={fhi}")
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if (flo > 0) == (fhi > 0):
        raise NoBracket(f"no sign change on [{lo}, {hi}]: f(lo)={flo:.3g}, f(hi)={fhi:.3g}")

    side = 0  # which endpoint was retained last (-1 left, +1 right)
    width_prev = hi - lo
    for it in range(tol.max_iter):
        width = hi - lo
        if width <= tol.abs_tol:
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return lo if abs(float(f(lo))) <= abs(float(f(hi))) else hi
        use_bisect = (
            not (math.isfinite(flo) and math.isfinite(fhi))
            or it % 3 == 2 and width > 0.5 * width_prev
        )
        if it % 3 == 2:
            width_prev = width
        if use_bisect:
            x = 0.5 * (lo + hi)
        else:
            x = (lo * fhi - hi * flo) / (fhi - flo)
            if not lo < x < hi:
                x = 0.5 * (lo + hi)
        fx = float(f(x))
        if fx == 0.0:
            return x
        if math.isnan(fx):
            raise NonConvergence(f"f({x}) is NaN during root refinement")
        if (fx > 0) == (flo > 0):
            lo, flo = x, fx
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = x, fx
            if side == 1:
                flo *= 0.5
            side = 1
    if hi - lo <= tol.abs_tol:
        return 0.5 * (lo + hi)
    raise NonConvergence(f"root bracket [{lo}, {hi}] not resolved in {tol.max_iter} steps")


def find_all_roots(
    f: ScalarFn,
    lo: float,
    hi: float,
    grid: int = 10_000,
    tol: Tolerance = DEFAULT_TOL,
) -> list[float]:
    """Locate all roots of ``f`` on ``[lo, hi]`` resolvable on an equispaced grid.

    Sign changes between neighbouring grid points are refined with
    :func:`find_root`. Exact zeros at grid points are reported directly, and
    interior local minima of ``|f|`` that touch zero (tangential roots) are
    detected by a bounded minimisation.

    Args:
        f: Scalar function.
        lo: Left end of the scan.
        hi: Right end of the scan.
        grid: Number of grid cells; ``grid + 1`` points are evaluated.
        tol: Tolerances passed to the refinement step.

    Returns:
        Ascending list of distinct roots (possibly empty).
    """
    if grid < 2:
        raise DomainError(f"grid must be >= 2, got {grid}")
    xs = np.linspace(lo, hi, grid + 1)
    fs = np.array([float(f(x)) for x in xs])
    roots: list[float] = []
    for i in range(grid + 1):
        if fs[i] == 0.0:
            roots.append(float(xs[i]))
    for i in range(grid):
        a, b = fs[i], fs[i + 1]
        if a == 0.0 or b == 0.0 or not (np.isfinite(a) or np.isfinite(b)):
            continue
        if (a > 0) != (b > 0):
            roots.append(find_root(f, xs[i], xs[i + 1], tol))
    # Tangential roots: local minima of |f| without a sign change.
    af = np.abs(fs)
    touch = 1e-12
    for i in range(1, grid):
        if af[i] == 0.0 or not np.isfinite(af[i]):
            continue
        if af[i] <= af[i - 1] and af[i] <= af[i + 1] and (fs[i - 1] > 0) == (fs[i + 1] > 0):
            res = _spo.minimize_scalar(
                lambda x: abs(float(f(x))), bounds=(xs[i - 1], xs[i + 1]),
                method="bounded", options={"xatol": tol.abs_tol},
            )
            if res.fun <= touch:
                roots.append(float(res.x))
    roots.sort()
    out: list[float] = []
    for r in roots:
        if not out or r - out[-1] > 1e-9:
            out.append(r)
    return out


def bernstein_weights(n: int, q: float) -> tuple[int, np.ndarray]:
    """Binomial(n-1, q) probabilities on the window that carries their mass.

    Terms come from scipy's binomial pmf, which stays accurate for large
    ``n`` where log-gamma differences lose about ``1e-10`` relative precision.

    Args:
        n: Population size; the binomial has ``n - 1`` trials.
        q: Success probability in ``[0, 1]``.

    Returns:
        ``(k0, w)`` where ``w[j]`` is the probability of ``k0 + j`` successes.

    Raises:
        DomainError: If ``n < 2`` or ``q`` lies outside ``[0, 1]``.
        SummationOverflow: If ``n`` exceeds :data:`SUMMATION_CAP`.
    """
    if n < 2:
        raise DomainError(f"population size must be >= 2, got {n}")
    if n > SUMMATION_CAP:
        raise SummationOverflow(f"n={n} exceeds the summation cap {SUMMATION_CAP}; use large-market mode")
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q must lie in [0, 1], got {q}")
    d = n - 1
    if q == 0.0:
        return 0, np.ones(1)
    if q == 1.0:
        return d, np.ones(1)
    mode = min(d, max(0, int(math.floor((d + 1) * q))))
    half = int(_WINDOW_SIGMAS * math.sqrt(d * q * (1.0 - q))) + _WINDOW_PAD
    k_lo, k_hi = max(0, mode - half), min(d, mode + half)
    return k_lo, binom.pmf(np.arange(k_lo, k_hi + 1), d, q)


def binomial_expect(g: Callable, n: int, q: float) -> float:
    """Expectation of ``g(K / (n - 1))`` for ``K ~ Binomial(n - 1, q)``.

    This is the Bernstein polynomial of degree ``n - 1`` of ``g`` evaluated at
    ``q``. ``g`` is called once on a numpy array of grid nodes; scalar-only
    callables are vectorised automatically.

    Args:
        g: Function on ``[0, 1]``.
        n: Population size (``n >= 2``).
        q: Evaluation point in ``[0, 1]``.

    Returns:
        The Bernstein sum.
    """
    k0, w = bernstein_weights(n, q)
    nodes = (k0 + np.arange(len(w))) / (n - 1)
    return float(np.dot(w, _eval_vector(g, nodes)))


def _eval_vector(g: Callable, xs: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(g(xs), dtype=float)
        if vals.shape == xs.shape:
            return vals
    except (TypeError, ValueError):
        pass
    return np.array([float(g(x)) for x in xs])
