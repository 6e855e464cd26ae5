"""Exact truncated Laurent series in the variable s = 1 - zeta.

Coefficients are :class:`fractions.Fraction`.  Every series carries the
highest exponent whose coefficient is known (``order``); polynomials and
finite Laurent polynomials are exact and have ``order = math.inf``.
Operations never invent coefficients past the known range: asking for them
raises :class:`TruncationError`.
"""

from __future__ import annotations

import math
from fractions import Fraction
from math import comb, factorial
from typing import Iterable, Sequence

__all__ = [
    "Rational",
    "LaurentSeries",
    "InvalidOrderError",
    "TruncationError",
    "NotAPolynomialError",
    "poly_in_s_from_bdf",
    "mul",
    "invert",
    "substitute_zeta",
    "zeta_to_s",
    "gamma_ell",
]

Rational = Fraction

MAX_BDF_ORDER = 6


class InvalidOrderError(ValueError):
    """BDF order outside the supported range."""


class TruncationError(ArithmeticError):
    """A coefficient outside the known range of a truncated series was requested."""


class NotAPolynomialError(ValueError):
    """A finite polynomial in s was required."""


def _check_bdf_order(k: int, lo: int = 1, hi: int = MAX_BDF_ORDER) -> None:
    if not isinstance(k, int) or isinstance(k, bool) or not lo <= k <= hi:
        raise InvalidOrderError(f"BDF order k={k!r} outside {lo}..{hi}")


class LaurentSeries:
    """Laurent series sum_{e >= low} c_e s^e known through exponent ``order``.

    Stored coefficients are normalized: the leading stored coefficient is
    nonzero (trailing zeros up to ``order`` are implicit), so the zero
    series has no coefficients and ``low`` equal to ``order`` + 1 (or 0 if
    exact).
    """

    __slots__ = ("low", "coeffs", "order")

    def __init__(self, low: int, coeffs: Iterable, order: float = math.inf):
        cs = [Fraction(c) for c in coeffs]
        if order != math.inf:
            order = int(order)
            keep = max(0, order - low + 1)
            cs = cs[:keep]
        # strip leading zeros
        i = 0
        while i < len(cs) and cs[i] == 0:
            i += 1
        low += i
        cs = cs[i:]
        while cs and cs[-1] == 0:
            cs.pop()
        if not cs:
            low = 0 if order == math.inf else order + 1
        self.low = low
        self.coeffs = tuple(cs)
        self.order = order

    # -- construction helpers -------------------------------------------------
    @classmethod
    def monomial(cls, exponent: int, coeff=1) -> "LaurentSeries":
        return cls(exponent, [coeff])

    @classmethod
    def zero(cls, order: float = math.inf) -> "LaurentSeries":
        return cls(0, [], order)

    @classmethod
    def polynomial(cls, coeffs: Sequence) -> "LaurentSeries":
        return cls(0, coeffs)

    # -- inspection -------------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def is_exact(self) -> bool:
        return self.order == math.inf

    @property
    def high(self) -> int:
        """Largest exponent with a stored (nonzero) coefficient."""
        return self.low + len(self.coeffs) - 1

    def __getitem__(self, e: int) -> Fraction:
        if e > self.order:
            raise TruncationError(f"coefficient of s^{e} unknown (series known through s^{self.order})")
        i = e - self.low
        if 0 <= i < len(self.coeffs):
            return self.coeffs[i]
        return Fraction(0)

    def coefficient_range(self, lo: int, hi: int) -> list[Fraction]:
        return [self[e] for e in range(lo, hi + 1)]

    def items(self):
        for i, c in enumerate(self.coeffs):
            if c:
                yield self.low + i, c

    def truncate(self, order: int) -> "LaurentSeries":
        """Forget coefficients beyond ``order``; cannot extend a truncated series."""
        if order > self.order:
            raise TruncationError(f"cannot extend series known through s^{self.order} to s^{order}")
        return LaurentSeries(self.low, self.coeffs, order)

    # -- arithmetic ----------------------------------------------------------
    def __add__(self, other) -> "LaurentSeries":
        other = _coerce(other)
        order = min(self.order, other.order)
        if self.is_zero and other.is_zero:
            return LaurentSeries.zero(order)
        lows = [s.low for s in (self, other) if not s.is_zero]
        low = min(lows)
        highs = [s.high for s in (self, other) if not s.is_zero]
        high = max(highs)
        if order != math.inf:
            high = min(high, int(order))
        cs = []
        for e in range(low, high + 1):
            c = Fraction(0)
            for s in (self, other):
                i = e - s.low
                if 0 <= i < len(s.coeffs):
                    c += s.coeffs[i]
            cs.append(c)
        return LaurentSeries(low, cs, order)

    __radd__ = __add__

    def __neg__(self) -> "LaurentSeries":
        return LaurentSeries(self.low, [-c for c in self.coeffs], self.order)

    def __sub__(self, other) -> "LaurentSeries":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "LaurentSeries":
        return _coerce(other) - self

    def __mul__(self, other) -> "LaurentSeries":
        return mul(self, _coerce(other))

    __rmul__ = __mul__

    def scale(self, c) -> "LaurentSeries":
        c = Fraction(c)
        return LaurentSeries(self.low, [c * x for x in self.coeffs], self.order)

    def shift(self, n: int) -> "LaurentSeries":
        """Multiply by s**n."""
        return LaurentSeries(self.low + n, self.coeffs, self.order + n)

    def derivative(self) -> "LaurentSeries":
        """d/ds."""
        cs = [(self.low + i) * c for i, c in enumerate(self.coeffs)]
        return LaurentSeries(self.low - 1, cs, self.order - 1)

    def __pow__(self, n: int) -> "LaurentSeries":
        if not isinstance(n, int):
            return NotImplemented
        if n < 0:
            base = invert(self)
            n = -n
        else:
            base = self
        result = LaurentSeries.monomial(0)
        while n:
            if n & 1:
                result = mul(result, base)
            base = mul(base, base)
            n >>= 1
        return result

    def __eq__(self, other) -> bool:
        if not isinstance(other, LaurentSeries):
            try:
                other = _coerce(other)
            except TypeError:
                return NotImplemented
        return (self.low, self.coeffs, self.order) == (other.low, other.coeffs, other.order)

    def __hash__(self):
        return hash((self.low, self.coeffs, self.order))

    def __repr__(self) -> str:
        terms = [f"({c})*s^{e}" for e, c in self.items()] or ["0"]
        tail = "" if self.is_exact else f" + O(s^{self.order + 1})"
        return "LaurentSeries(" + " + ".join(terms) + tail + ")"


def _coerce(x) -> LaurentSeries:
    if isinstance(x, LaurentSeries):
        return x
    if isinstance(x, (int, Fraction)):
        return LaurentSeries.monomial(0, x)
    raise TypeError(f"cannot treat {type(x).__name__} as a Laurent series")


def poly_in_s_from_bdf(k: int) -> LaurentSeries:
    """The BDF generating polynomial delta = sum_{j=1}^k s^j / j, s = 1 - zeta."""
    _check_bdf_order(k)
    return LaurentSeries(1, [Fraction(1, j) for j in range(1, k + 1)])


def mul(a: LaurentSeries, b: LaurentSeries) -> LaurentSeries:
    """Exact product; known through min(a.order + b.low, b.order + a.low)."""
    if a.is_zero or b.is_zero:
        if a.is_zero and b.is_zero:
            order = a.order + b.order if math.inf not in (a.order, b.order) else min(a.order, b.order)
        elif a.is_zero:
            order = a.order + b.low
        else:
            order = b.order + a.low
        return LaurentSeries.zero(order)
    order = min(a.order + b.low, b.order + a.low)
    n = len(a.coeffs) + len(b.coeffs) - 1
    if order != math.inf:
        n = min(n, int(order) - (a.low + b.low) + 1)
    cs = [Fraction(0)] * max(n, 0)
    for i, x in enumerate(a.coeffs):
        if not x:
            continue
        for j, y in enumerate(b.coeffs):
            if i + j >= n:
                break
            cs[i + j] += x * y
    return LaurentSeries(a.low + b.low, cs, order)


def invert(a: LaurentSeries, order: int | None = None) -> LaurentSeries:
    """Multiplicative inverse, known through exponent ``order``.

    ``order`` defaults to the largest exponent determined by ``a`` (for an
    exact input the caller must supply it unless ``a`` is a monomial).
    """
    if a.is_zero:
        raise ZeroDivisionError("inverse of the zero series")
    low = -a.low
    if len(a.coeffs) == 1 and a.is_exact:
        inv = LaurentSeries.monomial(low, 1 / a.coeffs[0])
        return inv if order is None else inv.truncate(order) if order != math.inf else inv
    reachable = a.order - 2 * a.low  # known range of 1/a
    if order is None:
        if reachable == math.inf:
            raise ValueError("an order is required to invert a non-monomial exact series")
        order = reachable
    if order > reachable:
        raise TruncationError(f"inverse known only through s^{reachable}, requested s^{order}")
    n = int(order) - low + 1
    if n <= 0:
        return LaurentSeries.zero(order)
    c0 = a.coeffs[0]
    out = [Fraction(0)] * n
    out[0] = 1 / c0
    for m in range(1, n):
        acc = Fraction(0)
        for i in range(1, min(m, len(a.coeffs) - 1) + 1):
            acc += a.coeffs[i] * out[m - i]
        out[m] = -acc / c0
    return LaurentSeries(low, out, order)


def substitute_zeta(a: LaurentSeries) -> list[Fraction]:
    """Coefficients (constant term first) in zeta of the polynomial a(1 - zeta)."""
    if not a.is_exact:
        raise NotAPolynomialError("series is truncated, not a polynomial")
    if a.is_zero:
        return [Fraction(0)]
    if a.low < 0:
        raise NotAPolynomialError(f"negative exponent s^{a.low}")
    out = [Fraction(0)] * (a.high + 1)
    for e, c in a.items():
        for i in range(e + 1):
            out[i] += c * comb(e, i) * (-1) ** i
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return out


def zeta_to_s(coeffs: Sequence) -> LaurentSeries:
    """Inverse of :func:`substitute_zeta`: re-expand sum c_i zeta^i in s."""
    out = [Fraction(0)] * len(coeffs)
    for i, c in enumerate(coeffs):
        c = Fraction(c)
        for e in range(i + 1):
            out[e] += c * comb(i, e) * (-1) ** e
    return LaurentSeries(0, out)


def gamma_ell(ell: int, order: float = math.inf) -> LaurentSeries:
    """(zeta d/dzeta)^ell 1/(1 - zeta) as a finite Laurent series in s.

    zeta d/dzeta = -(1 - s) d/ds; applied ell times to 1/s it yields a pole
    of order ell + 1 with leading coefficient ell!.
    """
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    g = LaurentSeries.monomial(-1)
    one_minus_s = LaurentSeries(0, [1, -1])
    for _ in range(ell):
        g = -mul(one_minus_s, g.derivative())
    assert g.low == -(ell + 1) and g.coeffs[0] == factorial(ell)
    return g if order == math.inf else g.truncate(order)
