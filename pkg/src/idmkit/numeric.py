"""Small numeric helpers: bracketed root finding and difference quotients.

The solvers here are deliberately plain (bisection plus a Newton/secant
polish) because every equation in this package is scalar, monotone on the
bracket, and cheap to evaluate.
"""

import math

from .errors import InvalidArgument


def bisect(f, lo: float, hi: float, *, xtol: float = 1e-12, max_iter: int = 200) -> float:
    """Root of f on [lo, hi] by bisection; f(lo) and f(hi) must differ in sign."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise InvalidArgument(f"no sign change on bracket [{lo}, {hi}]: f={flo}, {fhi}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi or hi - lo <= xtol:
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return 0.5 * (lo + hi)


def newton_polish(f, df, x0: float, lo: float, hi: float, *,
                  tol: float = 1e-9, max_iter: int = 12) -> float:
    """Refine a bisection estimate with Newton steps clamped to [lo, hi].

    Falls back to the incoming estimate whenever a step misbehaves, so the
    result is never worse than plain bisection.
    """
    x = x0
    for _ in range(max_iter):
        fx = f(x)
        if abs(fx) <= tol:
            return x
        d = df(x)
        if d == 0.0 or not math.isfinite(d):
            return x
        step = fx / d
        nxt = x - step
        if not (lo <= nxt <= hi) or not math.isfinite(nxt):
            return x
        if nxt == x:
            return x
        x = nxt
    return x


def expand_bracket_down(f, hi: float, *, start_step: float = 1.0,
                        factor: float = 4.0, max_iter: int = 200) -> float:
    """Find lo < hi with f(lo) < 0 assuming f is increasing and f(hi) > 0."""
    step = start_step
    lo = hi - step
    for _ in range(max_iter):
        if f(lo) < 0:
            return lo
        step *= factor
        lo = hi - step
    raise InvalidArgument("could not bracket root: function never goes negative")


def central_diff(f, x: float, h: float) -> float:
    """Symmetric difference quotient with step h."""
    return (f(x + h) - f(x - h)) / (2.0 * h)


def log_grid(lo: float, hi: float, *, per_decade: int = 512) -> list[float]:
    """Grid on [lo, hi] whose offsets from lo are logarithmically spaced.

    Handles negative lo by gridding the offset range (hi - lo).  The point
    count scales with the number of decades the offsets span, at
    ``per_decade`` points each, capped to keep property sweeps fast.
    """
    if not (hi > lo):
        raise InvalidArgument(f"empty grid range [{lo}, {hi}]")
    span = hi - lo
    eps = span * 1e-9
    decades = math.log10(span / eps)
    n = min(int(per_decade * decades), 8192)
    pts = [lo]
    for i in range(n + 1):
        off = eps * (span / eps) ** (i / n)
        pts.append(lo + off)
    return pts
