"""Bracket expansion and bisection for scalar roots of monotone-sign functions."""

import math


class BracketError(RuntimeError):
    pass


def expand_bracket(func, start, max_steps=200):
    """Find ``lo < hi`` around `start` with ``func(lo) < 0 < func(hi)``.

    `func` must be negative to the left of its root and positive to the right.
    The lower end is halved and the upper end doubled until the signs separate.
    """
    if not start > 0:
        raise ValueError("start must be positive")
    lo = hi = float(start)
    f_lo = f_hi = func(lo)
    for _ in range(max_steps):
        if f_lo == 0:
            return lo, lo
        if f_lo < 0:
            break
        hi, f_hi = lo, f_lo
        lo *= 0.5
        f_lo = func(lo)
    else:
        raise BracketError(f"no negative value found below {start}")
    for _ in range(max_steps):
        if f_hi == 0:
            return hi, hi
        if f_hi > 0:
            break
        lo, f_lo = hi, f_hi
        hi *= 2.0
        f_hi = func(hi)
    else:
        raise BracketError(f"no positive value found above {start}")
    return lo, hi


def bisect(func, lo, hi, rtol=1e-12, atol=0.0, max_iter=400):
    """Bisection on ``[lo, hi]`` where ``func(lo) < 0 < func(hi)``.

    Stops once the bracket width is below ``atol + rtol * |midpoint|`` or a
    midpoint evaluates to exactly zero.
    """
    f_lo, f_hi = func(lo), func(hi)
    if not (f_lo < 0 < f_hi):
        raise BracketError(f"root not bracketed: f({lo})={f_lo}, f({hi})={f_hi}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= atol + rtol * abs(mid) or mid in (lo, hi):
            return mid
        f_mid = func(mid)
        if f_mid == 0:
            return mid
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_increasing(func, start, rtol=1e-12, atol=0.0):
    """Root of a function that changes sign once from negative to positive on (0, inf)."""
    lo, hi = expand_bracket(func, start)
    if lo == hi:
        return lo
    root = bisect(func, lo, hi, rtol=rtol, atol=atol)
    if not math.isfinite(root):
        raise BracketError("bisection diverged")
    return root
