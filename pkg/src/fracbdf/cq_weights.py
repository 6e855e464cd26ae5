"""Convolution-quadrature weights of delta(zeta)^alpha for BDF-k.

Weights are stored tau-free: the quadrature reads
tau^{-alpha} * sum_j b_j phi^{n-j}.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np

from .series import poly_in_s_from_bdf, substitute_zeta, _check_bdf_order

__all__ = [
    "WeightTable",
    "BdfDifferenceWeights",
    "DomainError",
    "bdf_zeta_coefficients",
    "cq_weights",
    "bdf_difference_weights",
    "cq_weights_fft_oracle",
]

# digits carried through the power recurrence
_WORKING_DPS = 34


class DomainError(ValueError):
    """Fractional order outside (0, 2)."""


@dataclass(frozen=True)
class WeightTable:
    alpha: float
    k: int
    weights: np.ndarray
    tau: float | None = None
    partial_sums: np.ndarray | None = None  # B_n = sum_{j<=n} b_j, summed before rounding

    def __post_init__(self):
        self.weights.setflags(write=False)
        if self.partial_sums is not None:
            self.partial_sums.setflags(write=False)

    def __len__(self):
        return len(self.weights)

    def scaled(self, tau: float) -> np.ndarray:
        """Weights including the tau^{-alpha} factor."""
        return self.weights * tau ** (-self.alpha)

    def scaled_partial_sums(self, tau: float) -> np.ndarray:
        """Partial sums B_n including the tau^{-alpha} factor."""
        if self.partial_sums is None:
            raise ValueError("this table carries no partial sums")
        return self.partial_sums * tau ** (-self.alpha)


@dataclass(frozen=True)
class BdfDifferenceWeights:
    k: int
    p: np.ndarray
    exact: tuple[Fraction, ...]
    # P_i = p_0 + ... + p_i for i < k, from exact sums (P_k = 0 exactly)
    partial: np.ndarray | None = None


def bdf_zeta_coefficients(k: int) -> list[Fraction]:
    """Exact zeta-coefficients p_0..p_k of delta(zeta) = sum_{j=1}^k (1-zeta)^j / j."""
    coeffs = substitute_zeta(poly_in_s_from_bdf(k))
    return coeffs + [Fraction(0)] * (k + 1 - len(coeffs))


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 2:
        raise DomainError(f"alpha={alpha!r} outside (0, 2)")


def bdf_difference_weights(k: int) -> BdfDifferenceWeights:
    _check_bdf_order(k)
    return _bdf_difference_weights(k)


@lru_cache(maxsize=None)
def _bdf_difference_weights(k: int) -> BdfDifferenceWeights:
    exact = tuple(bdf_zeta_coefficients(k))
    p = np.array([float(c) for c in exact])
    p.setflags(write=False)
    partial = np.array([float(sum(exact[:i + 1])) for i in range(k)])
    partial.setflags(write=False)
    return BdfDifferenceWeights(k, p, exact, partial)


_cache: dict[tuple[float, int], tuple[np.ndarray, np.ndarray]] = {}
_cache_lock = threading.Lock()


def _power_recurrence(alpha: float, k: int, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Weights q_n and their partial sums, both rounded to double only at the end."""
    # n p_0 q_n = sum_{i=1}^{min(n,k)} ((alpha+1) i - n) p_i q_{n-i}
    # a private context: mpmath's global precision is shared by all threads,
    # and workdps() in a concurrent caller would reset it mid-recurrence
    ctx = mpmath.MPContext()
    ctx.dps = _WORKING_DPS
    p = [ctx.mpf(c.numerator) / c.denominator for c in bdf_zeta_coefficients(k)]
    a = ctx.mpf(alpha)
    q = [p[0] ** a]
    for n in range(1, count):
        acc = ctx.mpf(0)
        for i in range(1, min(n, k) + 1):
            acc += ((a + 1) * i - n) * p[i] * q[n - i]
        q.append(acc / (n * p[0]))
    partial, run = [], ctx.mpf(0)
    for x in q:
        run += x
        partial.append(run)
    return np.array([float(x) for x in q]), np.array([float(x) for x in partial])


def cq_weights(alpha: float, k: int, count: int) -> WeightTable:
    """First ``count`` Taylor coefficients of delta(zeta)^alpha.

    Uses the power-of-a-polynomial recurrence, carried out in extended
    precision from the exact rational BDF coefficients and rounded once.
    Rounding p_j to double first would move the root of delta off
    zeta = 1 and leave an O(N * eps)-driven error floor in long runs.
    The table also carries the partial sums of the weights, accumulated
    in the same extended precision.
    """
    _check_alpha(alpha)
    _check_bdf_order(k)
    if count < 1:
        raise ValueError("count must be >= 1")
    key = (float(alpha), k)
    with _cache_lock:
        cached = _cache.get(key)
    if cached is None or len(cached[0]) < count:
        w, ws = _power_recurrence(alpha, k, count)
        with _cache_lock:
            prev = _cache.get(key)
            if prev is None or len(prev[0]) < len(w):
                _cache[key] = (w, ws)
    else:
        w, ws = cached
    return WeightTable(float(alpha), k, w[:count].copy(), partial_sums=ws[:count].copy())


def cq_weights_fft_oracle(alpha: float, k: int, count: int) -> WeightTable:
    """Same coefficients via sampling delta^alpha on a circle and an inverse FFT.

    The circle has radius rho < 1: on |zeta| = 1 the branch point at
    zeta = 1 makes aliasing decay only algebraically.
    """
    _check_alpha(alpha)
    _check_bdf_order(k)
    if count < 1:
        raise ValueError("count must be >= 1")
    L = 1 << max(4, int(np.ceil(np.log2(4 * count))))
    # balance aliasing rho^L against roundoff amplification rho^{-count}
    rho = (1e-14) ** (1.0 / L)
    p = bdf_difference_weights(k).p
    zeta = rho * np.exp(2j * np.pi * np.arange(L) / L)
    delta = np.polynomial.polynomial.polyval(zeta, p)
    vals = np.exp(alpha * np.log(delta))
    coeffs = np.fft.fft(vals) / L
    # fft uses exp(-2 pi i j m / L), i.e. extracts the zeta^j coefficient
    b = (coeffs[:count] * rho ** (-np.arange(count))).real
    return WeightTable(float(alpha), k, b)

