"""Piecewise-linear Galerkin FEM on (0, 1) with homogeneous Dirichlet conditions.

Matrices are kept in tridiagonal form (diagonal, off-diagonal); only the
M - 1 interior nodes carry unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.linalg.lapack import dpttrs

__all__ = [
    "InvalidMeshError",
    "SpatialSystem",
    "ShiftedSolver",
    "assemble",
    "eigenvalues",
    "numerical_radius",
    "solve_shifted",
    "l2_norm",
    "project_load",
    "interpolate",
]

# 3-point Gauss-Legendre on [0, 1]
_GAUSS_X = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GAUSS_W = np.array([5.0, 8.0, 5.0]) / 18.0


class InvalidMeshError(ValueError):
    pass


@dataclass(frozen=True)
class SpatialSystem:
    M: int
    h: float
    nodes: np.ndarray  # interior nodes x_i = i h, i = 1..M-1

    @property
    def size(self) -> int:
        return self.M - 1

    # tridiagonal bands
    @property
    def mass_diag(self) -> float:
        return 2.0 * self.h / 3.0

    @property
    def mass_off(self) -> float:
        return self.h / 6.0

    @property
    def stiff_diag(self) -> float:
        return 2.0 / self.h

    @property
    def stiff_off(self) -> float:
        return -1.0 / self.h

    def mass_matvec(self, u: np.ndarray) -> np.ndarray:
        return _tri_matvec(self.mass_diag, self.mass_off, u)

    def stiffness_matvec(self, u: np.ndarray) -> np.ndarray:
        return _tri_matvec(self.stiff_diag, self.stiff_off, u)

    def mass(self) -> np.ndarray:
        return _tri_dense(self.mass_diag, self.mass_off, self.size)

    def stiffness(self) -> np.ndarray:
        return _tri_dense(self.stiff_diag, self.stiff_off, self.size)


def _tri_matvec(d: float, o: float, u: np.ndarray) -> np.ndarray:
    r = d * u
    r[:-1] += o * u[1:]
    r[1:] += o * u[:-1]
    return r


def _tri_dense(d: float, o: float, n: int) -> np.ndarray:
    return d * np.eye(n) + o * (np.eye(n, k=1) + np.eye(n, k=-1))


def assemble(M: int) -> SpatialSystem:
    if int(M) != M or M < 2:
        raise InvalidMeshError(f"need at least 2 subintervals, got M={M!r}")
    M = int(M)
    h = 1.0 / M
    nodes = np.arange(1, M) * h
    nodes.setflags(write=False)
    return SpatialSystem(M, h, nodes)


def eigenvalues(sys: SpatialSystem) -> np.ndarray:
    """Generalized eigenvalues of (-stiffness, mass), i.e. of the discrete Laplacian.

    lambda_j = lbar_j / (1 + h^2 lbar_j / 6) with lbar_j = -(4/h^2) sin^2(pi j / (2M)),
    all negative and increasing in magnitude with j.
    """
    h = sys.h
    j = np.arange(1, sys.M)
    lbar = -(4.0 / h**2) * np.sin(np.pi * j / (2 * sys.M)) ** 2
    return lbar / (1.0 + h**2 * lbar / 6.0)


def numerical_radius(sys: SpatialSystem) -> float:
    return float(np.max(np.abs(eigenvalues(sys))))


class ShiftedSolver:
    """Factor sigma*mass + stiffness once, then solve for many right-hand sides.

    The pivots are formed as excess over the off-diagonal magnitude,
    e_i = pivot_i - |offdiag|, which obeys a recursion without subtraction.
    The textbook pivot recursion loses about log10(1/(sigma h^2)) digits
    when the stiffness part dominates.
    """

    def __init__(self, sys: SpatialSystem, sigma: float):
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        h, n = sys.h, sys.size
        off = 1.0 / h - sigma * h / 6.0   # minus the off-diagonal entry
        excess = sigma * h                 # diagonal minus 2|offdiag|
        self.sigma = float(sigma)
        self._sys = sys
        if off <= 0:
            # mass-dominated: diagonally dominant, plain recursion is benign
            diag = sigma * sys.mass_diag + sys.stiff_diag
            sub = sigma * sys.mass_off + sys.stiff_off
            d = np.empty(n)
            d[0] = diag
            for i in range(1, n):
                d[i] = diag - sub * sub / d[i - 1]
            self._d = d
            self._l = sub / d[:-1]
            return
        e = np.empty(n)
        e[0] = off + excess
        for i in range(1, n):
            e[i] = excess + off * e[i - 1] / (off + e[i - 1])
        d = off + e
        self._d = d
        self._l = -off / d[:-1]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if len(self._d) == 1:
            return rhs / self._d[0]
        x, info = dpttrs(self._d, self._l, rhs)
        if info != 0:
            raise np.linalg.LinAlgError(f"dpttrs failed with info={info}")
        return x

    __call__ = solve


def solve_shifted(sys: SpatialSystem, sigma: float, rhs: np.ndarray) -> np.ndarray:
    """Solve (sigma * mass + stiffness) u = rhs."""
    return ShiftedSolver(sys, sigma).solve(rhs)


def l2_norm(sys: SpatialSystem, u: np.ndarray) -> float:
    u = np.asarray(u, dtype=float)
    return float(np.sqrt(max(u @ sys.mass_matvec(u), 0.0)))


def interpolate(sys: SpatialSystem, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Nodal interpolant at the interior nodes."""
    return np.asarray(fn(sys.nodes), dtype=float) * np.ones(sys.size)


@lru_cache(maxsize=64)
def _load_layout(M: int, breakpoints: tuple[float, ...]):
    """Quadrature points and hat-function weights for every (sub)element."""
    h = 1.0 / M
    edges = np.arange(M + 1) * h
    lefts, rights, elem = [], [], []
    for e in range(M):
        cuts = [edges[e]] + sorted(
            b for b in breakpoints if edges[e] < b < edges[e + 1]
            and min(b - edges[e], edges[e + 1] - b) > 1e-14 * h
        ) + [edges[e + 1]]
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            lefts.append(lo)
            rights.append(hi)
            elem.append(e)
    lefts, rights, elem = np.array(lefts), np.array(rights), np.array(elem)
    width = rights - lefts
    xq = lefts[:, None] + width[:, None] * _GAUSS_X[None, :]
    # local coordinate within the parent element
    xi = (xq - edges[elem][:, None]) / h
    wq = width[:, None] * _GAUSS_W[None, :]
    for a in (xq, xi, wq, elem):
        a.setflags(write=False)
    return xq, xi, wq, elem


def project_load(
    sys: SpatialSystem,
    fn: Callable[[np.ndarray], np.ndarray],
    breakpoints: tuple[float, ...] = (0.5,),
) -> np.ndarray:
    """Load vector (integral of fn times each hat function).

    Elementwise 3-point Gauss quadrature; elements containing a breakpoint
    in their interior are split there so a jump of fn is integrated
    exactly.
    """
    M = sys.M
    xq, xi, wq, elem = _load_layout(M, tuple(breakpoints))
    fq = wq * (np.asarray(fn(xq), dtype=float) * np.ones_like(xq))
    right_part = np.sum(fq * xi, axis=1)          # against hat of node e+1
    left_part = np.sum(fq * (1.0 - xi), axis=1)  # against hat of node e
    load = np.bincount(elem + 1, right_part, minlength=M + 1)
    load += np.bincount(elem, left_part, minlength=M + 1)
    return load[1:M]
