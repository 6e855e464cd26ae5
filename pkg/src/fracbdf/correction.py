"""Starting-step correction coefficients, derived over exact rationals.

Everything here is computed from the BDF generating polynomial; nothing is
tabulated.  ``certify`` re-forms each residual series and checks that the
coefficients demanded by the order conditions vanish exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

from .series import (
    LaurentSeries,
    _check_bdf_order,
    gamma_ell,
    invert,
    mul,
    poly_in_s_from_bdf,
    substitute_zeta,
    zeta_to_s,
)

__all__ = [
    "SUBDIFFUSION",
    "DIFFUSION_WAVE",
    "CorrectionSet",
    "ResidualCertificate",
    "CertificationError",
    "InternalInconsistencyError",
    "derive_a",
    "derive_b_subdiffusion",
    "derive_b_diffusion_wave",
    "derive_c",
    "correction_set",
    "certify",
]

SUBDIFFUSION = "subdiffusion"
DIFFUSION_WAVE = "diffusion_wave"

# residuals are expanded this far past the order condition to catch the
# leading error constant
_DIAGNOSTIC_EXTRA = 2


class CertificationError(AssertionError):
    def __init__(self, criterion, k, ell, exponent, value):
        self.criterion, self.k, self.ell, self.exponent, self.value = criterion, k, ell, exponent, value
        where = f"k={k}" + (f", ell={ell}" if ell is not None else "")
        super().__init__(f"{criterion} ({where}): coefficient of s^{exponent} is {value}, expected 0")


class InternalInconsistencyError(RuntimeError):
    """Two derivations that must agree did not; indicates a bug, not bad input."""


@dataclass(frozen=True)
class ResidualCertificate:
    criterion: str
    k: int
    ell: int | None
    verified_zero_range: tuple[int, int]
    first_nonzero: tuple[int, Fraction] | None


@dataclass(frozen=True)
class CorrectionSet:
    k: int
    regime: str
    a: tuple[Fraction, ...] = ()
    b: tuple[tuple[Fraction, ...], ...] = ()  # b[ell-1][j-1]
    c: tuple[Fraction, ...] = ()
    intermediates: dict = field(default_factory=dict, compare=False, repr=False)

    def a_n(self, n: int) -> Fraction:
        return self.a[n - 1] if 1 <= n <= len(self.a) else Fraction(0)

    def b_n(self, ell: int, n: int) -> Fraction:
        if 1 <= ell <= len(self.b) and 1 <= n <= len(self.b[ell - 1]):
            return self.b[ell - 1][n - 1]
        return Fraction(0)

    def c_n(self, n: int) -> Fraction:
        return self.c[n - 1] if 1 <= n <= len(self.c) else Fraction(0)


# -- building blocks ----------------------------------------------------------

def _delta(k: int) -> LaurentSeries:
    return poly_in_s_from_bdf(k)


def _delta_power(k: int, n: int, order: int) -> LaurentSeries:
    """delta^n (n may be negative), known through s^order."""
    d = _delta(k)
    if n >= 0:
        return (d ** n).truncate(order) if order < (d ** n).high else d ** n
    inv = invert(d, order + n + 1 + max(0, -n - 1))  # enough terms for the power
    out = inv ** (-n)
    return out.truncate(order)


def _inverse_delta_power(k: int, n: int, order: int) -> LaurentSeries:
    """delta^{-n} for n >= 1, known through s^order."""
    d = _delta(k)
    # delta^{-1} = s^{-1} (1 + s/2 + ...)^{-1}; delta^{-n} needs delta^{-1}
    # through s^{order + n - 1}
    inv = invert(d, order + n - 1)
    out = inv
    for _ in range(n - 1):
        out = mul(out, inv)
    return out.truncate(order)


def _zeta_series(coeffs_by_j: dict[int, Fraction] | list[Fraction]) -> LaurentSeries:
    """sum_j c_j zeta^j (keys are zeta powers) re-expanded in s."""
    if isinstance(coeffs_by_j, dict):
        n = max(coeffs_by_j, default=0) + 1
        cs = [coeffs_by_j.get(j, Fraction(0)) for j in range(n)]
    else:
        cs = list(coeffs_by_j)
    return zeta_to_s(cs)


def _from_d(d: list[Fraction], k: int) -> tuple[Fraction, ...]:
    """b_1..b_{k-1} from sum b_j zeta^j = zeta * sum_j d_j (1 - zeta)^j."""
    poly = mul(LaurentSeries(0, [1, -1]), LaurentSeries(0, d))
    z = substitute_zeta(poly)
    z = z + [Fraction(0)] * (k - len(z))
    if z[0] != 0:
        raise InternalInconsistencyError("zeta factor lost in re-expansion")
    return tuple(z[1:k])


def _d_recursion(g: list[Fraction], k: int) -> list[Fraction]:
    # d_0 = -g_0; d_j = d_{j-1} - g_j; zero past the last g
    d: list[Fraction] = []
    for j, gj in enumerate(g):
        d.append(-gj if j == 0 else d[j - 1] - gj)
    return d + [Fraction(0)] * (k - 1 - len(d))


# -- a_j ---------------------------------------------------------------------

@lru_cache(maxsize=None)
def _derive_a(k: int):
    # sum_{l=0}^{j-1} c_l / (j - l) = 1/(j(j+1)) + sum_{l=1}^{j-1} c_{l-1} / (j - l)
    c: list[Fraction] = []
    for j in range(1, k):
        rhs = Fraction(1, j * (j + 1))
        rhs += sum((c[l - 1] / (j - l) for l in range(1, j)), Fraction(0))
        rhs -= sum((c[l] / (j - l) for l in range(0, j - 1)), Fraction(0))
        c.append(rhs)  # the l = j-1 term has weight 1/(j - (j-1)) = 1
    a = _from_d(c, k) if k >= 2 else ()
    return tuple(a), tuple(c)


def derive_a(k: int) -> tuple[Fraction, ...]:
    """a_1..a_{k-1}; empty for k = 1."""
    _check_bdf_order(k)
    return _derive_a(k)[0]


# -- b_{l,j} -----------------------------------------------------------------

def _target_subdiffusion(k: int, ell: int, order: int) -> LaurentSeries:
    """gamma_l / l! - delta^{-(l+1)} through s^order."""
    gam = gamma_ell(ell).scale(Fraction(1, factorial(ell)))
    return gam - _inverse_delta_power(k, ell + 1, order)


def _target_wave(k: int, ell: int, order: int) -> LaurentSeries:
    """delta gamma_l / l! - delta^{-l} through s^order."""
    gam = gamma_ell(ell).scale(Fraction(1, factorial(ell)))
    return mul(_delta(k), gam) - _inverse_delta_power(k, ell, order)


def _b_rows(k: int, target, last_g: int):
    rows, gs, ds = [], [], []
    for ell in range(1, k - 1):
        top = last_g(ell)
        t = target(k, ell, top)
        if not t.is_zero and t.low < 0:
            raise InternalInconsistencyError(
                f"pole s^{t.low} does not cancel (k={k}, ell={ell})")
        g = [t[j] for j in range(0, top + 1)]
        d = _d_recursion(g, k)
        rows.append(_from_d(d, k))
        gs.append(tuple(g))
        ds.append(tuple(d))
    return tuple(rows), tuple(gs), tuple(ds)


@lru_cache(maxsize=None)
def _derive_b_sub(k: int):
    return _b_rows(k, _target_subdiffusion, lambda ell: k - ell - 2)


@lru_cache(maxsize=None)
def _derive_b_wave(k: int):
    return _b_rows(k, _target_wave, lambda ell: k - ell - 1)


def derive_b_subdiffusion(k: int) -> tuple[tuple[Fraction, ...], ...]:
    """Rows ell = 1..k-2 of b_{l,j}, j = 1..k-1 (empty for k <= 2)."""
    _check_bdf_order(k)
    return _derive_b_sub(k)[0]


def derive_b_diffusion_wave(k: int) -> tuple[tuple[Fraction, ...], ...]:
    _check_bdf_order(k)
    return _derive_b_wave(k)[0]


def _solve_exact(A: list[list[Fraction]], y: list[Fraction]) -> list[Fraction]:
    n = len(y)
    M = [row[:] + [y[i]] for i, row in enumerate(A)]
    for col in range(n):
        piv = next(r for r in range(col, n) if M[r][col] != 0)
        M[col], M[piv] = M[piv], M[col]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col] / M[col][col]
                M[r] = [x - f * z for x, z in zip(M[r], M[col])]
    return [M[i][n] / M[i][i] for i in range(n)]


def _derive_c_direct(k: int) -> tuple[Fraction, ...]:
    # unknowns c_1..c_{k-2} (c_{k-1} = 0); match s^0..s^{k-3} of
    # sum_j c_j (1-s)^j = -(gamma_1 - delta^{-2})
    m = k - 2
    target = gamma_ell(1) - _inverse_delta_power(k, 2, m - 1)
    A = [[Fraction(comb(j, i) * (-1) ** i) for j in range(1, m + 1)] for i in range(m)]
    y = [-target[i] for i in range(m)]
    sol = _solve_exact(A, y)
    return tuple(sol) + (Fraction(0),)


def derive_c(k: int) -> tuple[Fraction, ...]:
    """c_1..c_{k-1} for the diffusion-wave initial-velocity correction."""
    _check_bdf_order(k, 3)
    via_b = derive_b_subdiffusion(k)[0]
    direct = _derive_c_direct(k)
    if tuple(via_b) != tuple(direct):
        raise InternalInconsistencyError(f"c^({k}) mismatch: {via_b} vs {direct}")
    return tuple(via_b)


def correction_set(k: int, regime: str = SUBDIFFUSION) -> CorrectionSet:
    _check_bdf_order(k)
    if regime not in (SUBDIFFUSION, DIFFUSION_WAVE):
        raise ValueError(f"unknown regime {regime!r}")
    a, cs = _derive_a(k)
    inter = {"c_ell": cs}
    if regime == SUBDIFFUSION:
        b, g, d = _derive_b_sub(k) if k >= 3 else ((), (), ())
        c = ()
    else:
        b, g, d = _derive_b_wave(k) if k >= 3 else ((), (), ())
        c = derive_c(k) if k >= 3 else ()
    inter.update(g=g, d=d)
    return CorrectionSet(k, regime, a, b, c, inter)


# -- certification -------------------------------------------------------------

def _zeta_poly(coeffs: tuple[Fraction, ...]) -> LaurentSeries:
    """sum_{j>=1} coeffs[j-1] zeta^j in s."""
    return zeta_to_s([Fraction(0)] + list(coeffs))


def _check(name, k, ell, residual: LaurentSeries, lo: int, hi: int) -> ResidualCertificate:
    for e in range(lo, hi + 1):
        v = residual[e]
        if v != 0:
            raise CertificationError(name, k, ell, e, v)
    first = None
    top = residual.order if not residual.is_exact else residual.high
    for e in range(hi + 1, int(top) + 1):
        if residual[e] != 0:
            first = (e, residual[e])
            break
    return ResidualCertificate(name, k, ell, (lo, hi), first)


def _mu_residual(k: int, a: tuple[Fraction, ...], order: int) -> LaurentSeries:
    # mu = delta (zeta/(1-zeta) + sum a_j zeta^j); zeta/(1-zeta) = (1-s)/s
    d = _delta(k)
    frac = LaurentSeries(-1, [1, -1])
    return (mul(d, frac + _zeta_poly(a)) - 1).truncate(order)


def certify(cs: CorrectionSet) -> list[ResidualCertificate]:
    """Verify every order condition for ``cs`` exactly; raise on failure."""
    k = cs.k
    top = k + _DIAGNOSTIC_EXTRA
    certs = []
    if k == 1:
        return certs
    mu_name = "crit:mu" if cs.regime == SUBDIFFUSION else "crit:mu-dw"
    certs.append(_check(mu_name, k, None, _mu_residual(k, cs.a, top), 0, k - 1))
    if cs.regime == SUBDIFFUSION:
        for ell in range(1, k - 1):
            gam = gamma_ell(ell).scale(Fraction(1, factorial(ell)))
            r = gam + _zeta_poly(cs.b[ell - 1]) - _inverse_delta_power(k, ell + 1, top)
            certs.append(_check("crit:b", k, ell, r.truncate(top), -(ell + 1), k - ell - 2))
    else:
        if k >= 3:
            r = gamma_ell(1) + _zeta_poly(cs.c) - _inverse_delta_power(k, 2, top)
            certs.append(_check("crit:c-dw", k, None, r.truncate(top), -2, k - 3))
        for ell in range(1, k - 1):
            gam = gamma_ell(ell).scale(Fraction(1, factorial(ell)))
            r = mul(_delta(k), gam) + _zeta_poly(cs.b[ell - 1]) - _inverse_delta_power(k, ell, top)
            certs.append(_check("crit:b-dw", k, ell, r.truncate(top), -ell, k - ell - 1))
    return certs
