"""Stability of BDF-k convolution quadrature for diffusion-wave problems.

For alpha below the critical order alpha*(k) = pi / (pi - theta_k) the
scheme is unconditionally stable.  Above it, stability requires
tau^alpha r(A) <= c(alpha, k), where c is the distance from the origin to
the nearest point at which the curve {delta(zeta)^alpha : |zeta| = 1}
crosses the negative real axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .cq_weights import bdf_difference_weights
from .series import _check_bdf_order

__all__ = [
    "A_STABILITY_ANGLES_DEG",
    "StabilityReport",
    "alpha_star",
    "cfl_constant",
    "tau_threshold",
    "check_condition",
]

# A(theta)-stability angles of BDF1..BDF6 in degrees
A_STABILITY_ANGLES_DEG = {1: 90.0, 2: 90.0, 3: 86.03, 4: 73.35, 5: 51.84, 6: 17.84}

DEFAULT_GRID = 10_000


@dataclass(frozen=True)
class StabilityReport:
    k: int
    alpha: float
    regime: str  # "unconditional" | "conditional"
    alpha_star: float
    cfl_constant: float | None
    tau_threshold: float | None = None


def alpha_star(k: int) -> float:
    _check_bdf_order(k)
    theta = math.radians(A_STABILITY_ANGLES_DEG[k])
    return math.pi / (math.pi - theta)


def _delta_on_circle(k: int, theta):
    p = bdf_difference_weights(k).p
    return np.polynomial.polynomial.polyval(np.exp(-1j * np.asarray(theta)), p)


def cfl_constant(alpha: float, k: int, grid: int = DEFAULT_GRID) -> float | None:
    """c(alpha, k), or None when the boundary curve never meets the negative axis.

    The argument of delta(e^{-i theta}) is unwrapped along theta in (0, pi]
    starting from its limit pi/2 at theta -> 0+, so delta^alpha is the
    continuous branch.  Crossings of alpha*arg with odd multiples of pi are
    bracketed on the grid and refined by Brent's method.  By conjugate
    symmetry the branch theta in (-pi, 0) gives the same moduli.
    """
    _check_bdf_order(k)
    if not 0 < alpha < 2:
        raise ValueError(f"alpha={alpha!r} outside (0, 2)")
    theta = np.linspace(0.0, np.pi, grid + 1)[1:]
    d = _delta_on_circle(k, theta)
    arg = np.unwrap(np.angle(d))
    # pin the branch: arg -> +pi/2 as theta -> 0+
    arg += 2 * np.pi * np.round((np.pi / 2 - arg[0]) / (2 * np.pi))
    phase = alpha * arg
    top = int(np.ceil(np.max(np.abs(phase)) / np.pi)) + 1
    found = []
    for m in range(-top, top + 1):
        target = (2 * m + 1) * np.pi
        diff = phase - target
        idx = np.nonzero(np.sign(diff[:-1]) * np.sign(diff[1:]) <= 0)[0]
        for i in idx:
            lo, hi = theta[i], theta[i + 1]
            if diff[i] == 0:
                th = lo
            else:
                # local unwrapped argument: continue from the grid value
                base = arg[i]

                def f(t, base=base):
                    a = np.angle(_delta_on_circle(k, t))
                    a += 2 * np.pi * np.round((base - a) / (2 * np.pi))
                    return alpha * a - target

                th = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            val = abs(_delta_on_circle(k, th)) ** alpha * np.cos(target)
            found.append(abs(val))
    return float(min(found)) if found else None


def tau_threshold(alpha: float, k: int, rA: float) -> float | None:
    """(c(alpha,k)/rA)^(1/alpha), or None when no step restriction applies."""
    if alpha < alpha_star(k):
        return None
    c = cfl_constant(alpha, k)
    if c is None:
        return None
    if rA <= 0:
        return math.inf
    return float((c / rA) ** (1.0 / alpha))


def check_condition(alpha: float, k: int, tau: float, rA: float,
                    safety: float = 1.0) -> tuple[bool, StabilityReport]:
    """Whether the step tau satisfies the stability condition.

    In the conditional regime the step must satisfy tau < safety * tau0.
    """
    astar = alpha_star(k)
    if alpha < astar:
        return True, StabilityReport(k, alpha, "unconditional", astar, None, None)
    c = cfl_constant(alpha, k)
    t0 = tau_threshold(alpha, k, rA)
    ok = t0 is None or tau < safety * t0
    return ok, StabilityReport(k, alpha, "conditional", astar, c, t0)
