"""Time stepping for the fractional evolution equation d_t^alpha (u - v) - A u = f.

All schemes advance a shifted unknown with W^0 = 0:

* subdiffusion, alpha in (0, 1): W = U - v;
* diffusion-wave, alpha in (1, 2): W = U - v - t b.

The fractional derivative is a discrete convolution
tau^{-alpha} sum_j w_j W^{n-j} with BDF-k convolution-quadrature weights,
or with L1 weights for the L1 baseline.  Steps are taken in increment
form: since W^0 = 0, the convolution equals sum_j B_j (W^{n-j} - W^{n-j-1})
with partial sums B_j of the weights, and each step solves for the
increment.  For alpha near 2 the weights nearly cancel and their rounding
errors would otherwise pollute the smooth modes at small tau.  The corrected schemes modify the
right-hand side at steps n = 1..k-1 with the rational coefficients from
:mod:`fracbdf.correction`.  Every term involving A v or A b is applied in
weak form (stiffness times the nodal interpolant).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np
import scipy.fft
from scipy.integrate import quad_vec
from scipy.special import gamma as gamma_fn

from . import correction as corr
from .cq_weights import bdf_difference_weights, cq_weights
from .fem1d import ShiftedSolver, SpatialSystem, assemble, interpolate, numerical_radius, project_load
from .stability import check_condition

__all__ = [
    "CORRECTED",
    "UNCORRECTED",
    "L1",
    "ProblemSpec",
    "SolverRun",
    "ConfigurationError",
    "StabilityRefusedError",
    "UnsupportedSchemeError",
    "InstabilityMonitor",
    "step_subdiffusion",
    "step_diffusion_wave",
    "step_l1",
    "finite_difference_weights",
    "finite_difference_f_derivs",
    "l1_weights",
    "l1_partial_sums",
    "solve",
]

CORRECTED = "corrected"
UNCORRECTED = "uncorrected"
L1 = "L1"
SCHEMES = (CORRECTED, UNCORRECTED, L1)

# tolerance of the adaptive quadrature producing g = int_0^t f
G_QUAD_TOL = 1e-13

# steps sharing one pass over the stored history
HISTORY_BLOCK = 64


class ConfigurationError(ValueError):
    pass


class UnsupportedSchemeError(ValueError):
    pass


class StabilityRefusedError(RuntimeError):
    def __init__(self, alpha, k, tau, tau0):
        self.alpha, self.k, self.tau, self.tau0 = alpha, k, tau, tau0
        super().__init__(
            f"BDF{k} with alpha={alpha} needs tau < tau0 = {tau0:.4g}, got tau = {tau:.4g}; "
            "pass override_stability to run anyway")


Spatial = Callable[[np.ndarray], np.ndarray]
SpaceTime = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class ProblemSpec:
    """Data of one model problem on (0, 1) x (0, T].

    ``f_time_derivs_at_0`` maps a derivative order m >= 1 to x -> d_t^m f(x, 0).
    ``g`` is the time antiderivative of f with g(x, 0) = 0 (diffusion-wave);
    if absent it is obtained by adaptive quadrature of f.
    ``breakpoints`` are points where the data may jump; load quadrature splits
    elements there.
    """

    regime: str
    alpha: float
    v: Spatial | None = None
    b_init: Spatial | None = None
    f: SpaceTime | None = None
    g: SpaceTime | None = None
    f_time_derivs_at_0: Mapping[int, Spatial] = field(default_factory=dict)
    T: float = 1.0
    breakpoints: tuple[float, ...] = (0.5,)
    fd_fallback: bool = False

    def __post_init__(self):
        if self.regime == corr.SUBDIFFUSION:
            if not 0 < self.alpha < 1:
                raise ConfigurationError(f"subdiffusion needs alpha in (0, 1), got {self.alpha}")
            if self.b_init is not None:
                raise ConfigurationError("an initial velocity only applies to diffusion-wave problems")
        elif self.regime == corr.DIFFUSION_WAVE:
            if not 1 < self.alpha < 2:
                raise ConfigurationError(f"diffusion-wave needs alpha in (1, 2), got {self.alpha}")
        else:
            raise ConfigurationError(f"unknown regime {self.regime!r}")
        if not self.T > 0:
            raise ConfigurationError("T must be positive")


def l1_weights(alpha: float, count: int) -> np.ndarray:
    """tau-free convolution weights of the L1 scheme acting on W with W^0 = 0.

    L1: tau^{-alpha}/Gamma(2-alpha) sum_{j<n} d_j (W^{n-j} - W^{n-j-1}),
    d_j = (j+1)^{1-alpha} - j^{1-alpha}; summation by parts gives
    w_0 = d_0, w_j = d_j - d_{j-1}.
    """
    j = np.arange(count, dtype=float)
    d = (j + 1) ** (1 - alpha) - j ** (1 - alpha)
    w = np.empty(count)
    w[0] = d[0]
    w[1:] = np.diff(d)
    return w / gamma_fn(2 - alpha)


def l1_partial_sums(alpha: float, count: int) -> np.ndarray:
    """Partial sums of :func:`l1_weights`, i.e. d_j / Gamma(2 - alpha)."""
    j = np.arange(count, dtype=float)
    return ((j + 1) ** (1 - alpha) - j ** (1 - alpha)) / gamma_fn(2 - alpha)


def finite_difference_weights(m: int, accuracy: int) -> tuple[Fraction, ...]:
    """One-sided stencil c_0..c_{m+accuracy-1} with sum_i c_i phi(i) = phi^{(m)}(0) + O(h^accuracy) for unit spacing."""
    if m < 0 or accuracy < 1:
        raise ValueError("need m >= 0 and accuracy >= 1")
    n = m + accuracy
    # sum_i c_i i^r = r! [r == m], r = 0..n-1
    A = [[Fraction(i) ** r for i in range(n)] for r in range(n)]
    y = [Fraction(math.factorial(m)) if r == m else Fraction(0) for r in range(n)]
    return tuple(corr._solve_exact(A, y))


def finite_difference_f_derivs(samples, m: int, k: int, tau: float) -> np.ndarray:
    """Approximate d_t^m f(0) from samples f(t_0), f(t_1), ... (vectors or scalars).

    The stencil is one-sided of order k - m - 1.
    """
    acc = k - m - 1
    if acc < 1:
        raise ValueError(f"no finite-difference order left for m={m}, k={k}")
    c = finite_difference_weights(m, acc)
    if len(samples) < len(c):
        raise ValueError(f"need {len(c)} samples, got {len(samples)}")
    out = sum(float(ci) * np.asarray(samples[i], dtype=float) for i, ci in enumerate(c))
    return out / tau**m


class InstabilityMonitor:
    """Flags runs whose solution is blowing up.

    Two tests, either of which marks a run unstable:

    * the nodal max norm of U exceeds ``growth`` times the initial data scale;
    * the amplitude of the high-frequency part of W (discrete sine modes
      j >= ``hf_fraction``*M, which are exact eigenvectors of the mesh
      operator) grows by ``growth`` relative to the early-time window.

    The second test catches growth that has not yet reached the data scale
    by the final time.
    """

    def __init__(self, M: int, N: int, k: int, initial_scale: float,
                 growth: float = 1e3, hf_fraction: float = 0.75):
        self.M, self.N = M, N
        self.growth = growth
        self.initial_scale = max(initial_scale, np.finfo(float).tiny)
        self.first_hf = max(1, int(math.ceil(hf_fraction * M)) - 1)  # 0-based mode index
        self.window = max(k, N // 20)
        self.hf = np.zeros(N + 1)
        self.max_norm = np.zeros(N + 1)
        self.blowup_step: int | None = None

    def observe(self, n: int, W: np.ndarray, U: np.ndarray) -> None:
        modes = scipy.fft.dst(W, type=1)
        self.hf[n] = np.max(np.abs(modes[self.first_hf:])) if len(modes) > self.first_hf else 0.0
        self.max_norm[n] = np.max(np.abs(U))
        if self.blowup_step is None and self.max_norm[n] > self.growth * self.initial_scale:
            self.blowup_step = n

    @property
    def early_hf(self) -> float:
        return float(np.max(self.hf[1:self.window + 1]))

    @property
    def late_hf(self) -> float:
        return float(np.max(self.hf[-self.window:]))

    @property
    def unstable(self) -> bool:
        if self.blowup_step is not None:
            return True
        early = self.early_hf
        if early == 0.0:
            return self.late_hf > 0.0 and self.late_hf > self.growth * np.finfo(float).eps
        return self.late_hf > self.growth * early


class SolverRun:
    """State of one time integration; owns the full history of W."""

    def __init__(self, spec: ProblemSpec, k: int, N: int, M: int | SpatialSystem = 100,
                 scheme: str = CORRECTED, override_stability: bool = False,
                 monitor: bool = False, corrections: corr.CorrectionSet | None = None):
        if scheme not in SCHEMES:
            raise UnsupportedSchemeError(f"unknown scheme {scheme!r}")
        if scheme == L1 and spec.regime != corr.SUBDIFFUSION:
            raise UnsupportedSchemeError("the L1 scheme is implemented for subdiffusion only")
        if N < 1:
            raise ConfigurationError("N must be >= 1")
        self.spec, self.k, self.N, self.scheme = spec, k, int(N), scheme
        self.sys = M if isinstance(M, SpatialSystem) else assemble(M)
        self.tau = spec.T / self.N
        alpha = spec.alpha

        if spec.regime == corr.DIFFUSION_WAVE and scheme != L1:
            ok, report = check_condition(alpha, k, self.tau, numerical_radius(self.sys))
            self.stability = report
            if not ok and not override_stability:
                raise StabilityRefusedError(alpha, k, self.tau, report.tau_threshold)
        else:
            self.stability = None

        if scheme == L1:
            self.weights = l1_weights(alpha, self.N + 1) * self.tau ** (-alpha)
            self._partial = l1_partial_sums(alpha, self.N + 1) * self.tau ** (-alpha)
            self.corrections = corr.correction_set(1, corr.SUBDIFFUSION)
        else:
            table = cq_weights(alpha, k, self.N + 1)
            self.weights = table.scaled(self.tau)
            self._partial = table.scaled_partial_sums(self.tau)
            if corrections is not None:
                self.corrections = corrections
            elif scheme == CORRECTED:
                self.corrections = corr.correction_set(k, spec.regime)
            else:
                self.corrections = corr.correction_set(1, spec.regime)
        self.solver = ShiftedSolver(self.sys, self.weights[0])

        sys = self.sys
        self.v = interpolate(sys, spec.v) if spec.v is not None else np.zeros(sys.size)
        self.b = interpolate(sys, spec.b_init) if spec.b_init is not None else np.zeros(sys.size)
        self.Kv = sys.stiffness_matvec(self.v)
        self.Kb = sys.stiffness_matvec(self.b)
        self.W = np.zeros((self.N + 1, sys.size))
        self.D = np.zeros((self.N + 1, sys.size))  # D^n = W^n - W^{n-1}
        self._far: np.ndarray | None = None   # older-history contributions for the current block
        self._far_start = 0
        self.n = 0
        self._g_cache: dict[int, np.ndarray] = {0: np.zeros(sys.size)}
        self._deriv_loads = self._correction_loads()
        self.monitor = None
        if monitor:
            scale = max(np.max(np.abs(self.v), initial=0.0), np.max(np.abs(self.b), initial=0.0), 1.0)
            self.monitor = InstabilityMonitor(sys.M, self.N, k, scale)

    # -- data -------------------------------------------------------------
    def _load(self, fn: Spatial) -> np.ndarray:
        return project_load(self.sys, fn, self.spec.breakpoints)

    def load_f(self, t: float) -> np.ndarray:
        if self.spec.f is None:
            return np.zeros(self.sys.size)
        f = self.spec.f
        return self._load(lambda x: f(x, t))

    def load_g(self, m: int) -> np.ndarray:
        """Load of g(t_m) = int_0^{t_m} f, built up interval by interval if no closed form."""
        if m in self._g_cache:
            return self._g_cache[m]
        spec = self.spec
        if spec.g is not None:
            val = self._load(lambda x: spec.g(x, m * self.tau))
        elif spec.f is None:
            val = np.zeros(self.sys.size)
        else:
            prev = self.load_g(m - 1)
            inc, _ = quad_vec(self.load_f, (m - 1) * self.tau, m * self.tau,
                              epsabs=G_QUAD_TOL, epsrel=G_QUAD_TOL)
            val = prev + inc
        self._g_cache[m] = val
        return val

    def _correction_loads(self) -> dict[int, np.ndarray]:
        """Loads of d_t^m f(0) for the derivative orders the corrections use."""
        cs, spec = self.corrections, self.spec
        if spec.regime == corr.SUBDIFFUSION:
            orders = range(1, len(cs.b) + 1)          # b_{l,n} tau^l d^l f(0)
        else:
            orders = range(0, len(cs.b))              # b_{l,n} tau^{l-1} d^{l-1} f(0)
        out = {}
        for m in orders:
            if m == 0:
                out[0] = self.load_f(0.0)
            elif spec.f is None:
                out[m] = np.zeros(self.sys.size)
            elif m in spec.f_time_derivs_at_0:
                out[m] = self._load(spec.f_time_derivs_at_0[m])
            elif spec.fd_fallback:
                samples = [self.load_f(i * self.tau) for i in range(self.k + 1)]
                out[m] = finite_difference_f_derivs(samples, m, self.k, self.tau)
            else:
                raise ConfigurationError(
                    f"d^{m}f/dt^{m} at t=0 is needed by the BDF{self.k} correction; "
                    "supply it or enable the finite-difference fallback")
        return out

    # -- stepping -------------------------------------------------------------
    def history(self, n: int) -> np.ndarray:
        """sum_{j=1}^n w_j W^{n-j} (already scaled by tau^{-alpha})."""
        return self.weights[n:0:-1] @ self.W[:n]

    def increment_history(self, n: int) -> np.ndarray:
        """sum_{i=1}^{n-1} B_{n-i} D^i, equal to history(n) + w_0 W^{n-1} in exact arithmetic."""
        top = len(self._rev)
        return self._rev[top - n:top - 1] @ self.D[1:n]

    @property
    def partial_sums(self) -> np.ndarray:
        """Partial sums B_j of the scaled weights."""
        return self._partial

    @partial_sums.setter
    def partial_sums(self, value: np.ndarray) -> None:
        self._partial = np.asarray(value, dtype=float)
        self._rev_cache = None
        self._far = None

    @property
    def _rev(self) -> np.ndarray:
        # contiguous reversed copy; negative-stride slices make the products several times slower
        if getattr(self, "_rev_cache", None) is None:
            self._rev_cache = np.ascontiguousarray(self._partial[::-1])
        return self._rev_cache

    def _blocked_increment_history(self, n: int) -> np.ndarray:
        """increment_history(n) during a forward sweep, streaming the history once per block.

        At the first step n0 of each block, one matrix product gives the
        contribution of D^1..D^{n0-1} to every step of the block; each step
        then adds only the terms from inside the block.
        """
        rev, top = self._rev, len(self._rev)
        if self._far is None or not self._far_start <= n < self._far_start + len(self._far):
            n0, size = n, min(HISTORY_BLOCK, self.N + 1 - n)
            if n0 > 1:
                windows = np.lib.stride_tricks.sliding_window_view(rev, n0 - 1)
                # row r holds B_{n0+r-1}, ..., B_{r+1}
                coeffs = np.ascontiguousarray(windows[top - n0 - size + 1:top - n0 + 1][::-1])
                self._far = coeffs @ self.D[1:n0]
            else:
                self._far = np.zeros((size, self.sys.size))
            self._far_start = n0
        n0 = self._far_start
        near = rev[top - n + n0 - 1:top - 1] @ self.D[n0:n]
        return self._far[n - n0] + near

    def advance(self, n: int, load: np.ndarray) -> np.ndarray:
        """Solve for W^n given every right-hand-side term except the convolution.

        (w_0 M + K) D^n = load - M sum_i B_{n-i} D^i - K W^{n-1}.
        """
        sys = self.sys
        rhs = load - sys.mass_matvec(self._blocked_increment_history(n)) - sys.stiffness_matvec(self.W[n - 1])
        self.D[n] = self.solver.solve(rhs)
        self.W[n] = self.W[n - 1] + self.D[n]
        return self.W[n]

    def solution(self, n: int | None = None) -> np.ndarray:
        """Nodal values of U^n."""
        n = self.n if n is None else n
        U = self.W[n] + self.v
        if self.spec.regime == corr.DIFFUSION_WAVE:
            U = U + n * self.tau * self.b
        return U

    def step(self) -> np.ndarray:
        n = self.n + 1
        if n > self.N:
            raise IndexError("run already complete")
        if self.scheme == L1:
            step_l1(self, n)
        elif self.spec.regime == corr.SUBDIFFUSION:
            step_subdiffusion(self, n)
        else:
            step_diffusion_wave(self, n)
        self.n = n
        if self.monitor is not None:
            self.monitor.observe(n, self.W[n], self.solution(n))
        return self.W[n]

    def run(self) -> "SolverRun":
        while self.n < self.N:
            self.step()
        return self


def _subdiffusion_load(run: SolverRun, n: int) -> np.ndarray:
    """Right-hand side of step n without the convolution term."""
    cs, tau = run.corrections, run.tau
    rhs = -run.Kv + run.load_f(n * tau)
    a = cs.a_n(n)
    if a:
        rhs += float(a) * (run.load_f(0.0) - run.Kv)
    for ell in range(1, len(cs.b) + 1):
        bl = cs.b_n(ell, n)
        if bl:
            rhs += float(bl) * tau**ell * run._deriv_loads[ell]
    return rhs


def step_subdiffusion(run: SolverRun, n: int) -> np.ndarray:
    """One step of the corrected (or plain) BDF-k CQ scheme for alpha in (0, 1)."""
    run.advance(n, _subdiffusion_load(run, n))
    return run.W[n] + run.v


def step_l1(run: SolverRun, n: int) -> np.ndarray:
    if run.scheme != L1 or run.spec.regime != corr.SUBDIFFUSION:
        raise UnsupportedSchemeError("step_l1 needs an L1 subdiffusion run")
    run.advance(n, _subdiffusion_load(run, n))
    return run.W[n] + run.v


def step_diffusion_wave(run: SolverRun, n: int) -> np.ndarray:
    """One step of the corrected (or plain) BDF-k CQ scheme for alpha in (1, 2)."""
    cs, tau, k = run.corrections, run.tau, run.k
    tn = n * tau
    rhs = -run.Kv - tn * run.Kb
    # sum_j p_j G(t_{n-j}) in the form sum_i P_i (G(t_{n-i}) - G(t_{n-i-1})): the rounded
    # p_j do not sum to zero, which would add a bias growing like eps/tau
    P = bdf_difference_weights(k).partial
    dg = sum(P[i] * (run.load_g(n - i) - run.load_g(n - i - 1)) for i in range(0, min(n, k)))
    rhs += dg / tau
    a = cs.a_n(n)
    if a:
        rhs -= float(a) * run.Kv
    c = cs.c_n(n)
    if c:
        rhs -= float(c) * tau * run.Kb
    for ell in range(1, len(cs.b) + 1):
        bl = cs.b_n(ell, n)
        if bl:
            rhs += float(bl) * tau ** (ell - 1) * run._deriv_loads[ell - 1]
    run.advance(n, rhs)
    return run.solution(n)


def solve(spec: ProblemSpec, k: int, N: int, M: int = 100, scheme: str = CORRECTED,
          override_stability: bool = False, monitor: bool = False) -> SolverRun:
    """Run to the final time and return the completed run."""
    return SolverRun(spec, k, N, M, scheme, override_stability, monitor).run()
