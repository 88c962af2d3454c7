"""Independent brute-force oracles used to freeze expected test values.

Everything here deliberately avoids the package's own numerics: fixed-step
classic RK4, plain bisection, no adaptive machinery.
"""

from __future__ import annotations

import math


def rk4_shot(q0: float, p: float, d: int, r_max: float, h: float) -> int:
    """Integrate one shot with fixed-step RK4; -1 overshoot, +1 undershoot."""
    r = 1e-6
    curv = (q0 - q0 ** p) / d
    q = q0 + 0.5 * curv * r * r
    w = curv * r

    def f(r, q, w):
        return w, q - math.copysign(abs(q) ** p, q) - (d - 1) / r * w

    while r < r_max:
        k1q, k1w = f(r, q, w)
        k2q, k2w = f(r + 0.5 * h, q + 0.5 * h * k1q, w + 0.5 * h * k1w)
        k3q, k3w = f(r + 0.5 * h, q + 0.5 * h * k2q, w + 0.5 * h * k2w)
        k4q, k4w = f(r + h, q + h * k3q, w + h * k3w)
        q += h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
        w += h / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
        r += h
        if q <= 0.0:
            return -1
        if w > 0.0:
            return +1
    return +1


def shoot_q0(p: float, d: int, h: float = 1e-3, bracket_width: float = 1e-8,
             lo: float = 1.0, hi: float = 8.0, r_max: float = 20.0) -> float:
    """Bisection on q(0) with the fixed-step integrator."""
    assert rk4_shot(lo, p, d, r_max, h) == +1
    assert rk4_shot(hi, p, d, r_max, h) == -1
    while hi - lo > bracket_width:
        mid = 0.5 * (lo + hi)
        if rk4_shot(mid, p, d, r_max, h) == -1:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


if __name__ == "__main__":
    import sys

    p = float(sys.argv[1]) if len(sys.argv) > 1 else 3.0
    d = int(sys.argv[2]) if len(sys.argv) > 2 else 2
    h = float(sys.argv[3]) if len(sys.argv) > 3 else 1e-5
    width = float(sys.argv[4]) if len(sys.argv) > 4 else 1e-10
    print(f"q0({p=}, {d=}, {h=}) = {shoot_q0(p, d, h=h, bracket_width=width):.12f}")
