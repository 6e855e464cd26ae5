"""Convergence studies, stability-flip experiments and table dumps.

Errors are normalized L2 errors at the final time against a reference
computed by the same scheme with R times more steps on the same mesh, so
they measure the time-discretization error of the semidiscrete solution.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import correction as corr
from .cq_weights import cq_weights
from .fem1d import assemble, l2_norm, numerical_radius
from .stability import alpha_star, cfl_constant, tau_threshold
from .stepper import (
    CORRECTED,
    L1,
    SCHEMES,
    UNCORRECTED,
    ConfigurationError,
    ProblemSpec,
    SolverRun,
)

__all__ = [
    "CASES",
    "make_case",
    "ExperimentConfig",
    "ErrorRow",
    "ErrorReport",
    "FlipResult",
    "run_convergence",
    "run_stability_flip",
    "dump_coeffs",
    "dump_cfl_sweep",
    "dump_weights",
    "observed_rates",
    "format_sci",
]

CASES = ("a", "b", "c", "zero")
CASE_REGIME = {"a": corr.SUBDIFFUSION, "b": corr.SUBDIFFUSION, "c": corr.DIFFUSION_WAVE}

# the L1 baseline has no BDF order; its reference uses this corrected BDF order
L1_REFERENCE_ORDER = 4


def _one_plus_chi(x):
    return 1.0 + (np.asarray(x) < 0.5)


def _hump(x):
    return x * (1.0 - x)


def make_case(case: str, alpha: float, T: float = 1.0) -> ProblemSpec:
    """Problem data for the benchmark cases.

    a: v = x(1-x), f = 0 (subdiffusion).
    b: v = 0, f = cos(t)(1 + chi_(0,1/2)) (subdiffusion); time derivatives
       of f at 0 are replaced by one-sided finite differences.
    c: v = x(1-x), b = sin(2 pi x), f = e^t (1 + chi_(0,1/2)) (diffusion-wave).
    zero: all data zero, regime chosen from alpha.
    """
    if case == "a":
        return ProblemSpec(corr.SUBDIFFUSION, alpha, v=_hump, T=T)
    if case == "b":
        return ProblemSpec(
            corr.SUBDIFFUSION, alpha,
            f=lambda x, t: np.cos(t) * _one_plus_chi(x),
            fd_fallback=True, T=T)
    if case == "c":
        return ProblemSpec(
            corr.DIFFUSION_WAVE, alpha, v=_hump,
            b_init=lambda x: np.sin(2 * np.pi * x),
            f=lambda x, t: np.exp(t) * _one_plus_chi(x),
            g=lambda x, t: np.expm1(t) * _one_plus_chi(x),
            f_time_derivs_at_0={m: _one_plus_chi for m in range(1, 6)},
            T=T)
    if case == "zero":
        regime = corr.SUBDIFFUSION if alpha < 1 else corr.DIFFUSION_WAVE
        return ProblemSpec(regime, alpha, T=T)
    raise ConfigurationError(f"unknown case {case!r}; choose from {', '.join(CASES)}")


@dataclass
class ExperimentConfig:
    case: str = "a"
    alpha: list[float] = field(default_factory=lambda: [0.5])
    k: list[int] = field(default_factory=lambda: [2])
    N: list[int] = field(default_factory=lambda: [50, 100, 200, 400, 800])
    M: int = 100
    scheme: list[str] = field(default_factory=lambda: [CORRECTED])
    ref_factor: int = 16
    T: float = 1.0
    format: str = "csv"
    out: str | None = None
    override_stability: bool = False
    trace: bool = False
    check_reference: bool = False
    workers: int | None = None

    def validate(self) -> None:
        if self.case not in CASES:
            raise ConfigurationError(f"unknown case {self.case!r}")
        if not self.N or any(b <= a for a, b in zip(self.N, self.N[1:])):
            raise ConfigurationError("N list must be non-empty and strictly increasing")
        if any(n < 1 for n in self.N):
            raise ConfigurationError("every N must be positive")
        for s in self.scheme:
            if s not in SCHEMES:
                raise ConfigurationError(f"unknown scheme {s!r}")
        for k in self.k:
            if not isinstance(k, int) or not 1 <= k <= 6:
                raise ConfigurationError(f"BDF order {k!r} outside 1..6")
        if self.ref_factor < 2:
            raise ConfigurationError("reference refinement factor must be >= 2")
        if self.M < 2:
            raise ConfigurationError("M must be >= 2")
        if self.format not in ("csv", "json"):
            raise ConfigurationError(f"unknown format {self.format!r}")
        for a in self.alpha:
            regime = CASE_REGIME.get(self.case)
            if regime == corr.SUBDIFFUSION and not 0 < a < 1:
                raise ConfigurationError(f"case {self.case} is subdiffusion; alpha={a} not in (0, 1)")
            if regime == corr.DIFFUSION_WAVE and not 1 < a < 2:
                raise ConfigurationError(f"case {self.case} is diffusion-wave; alpha={a} not in (1, 2)")
            if self.case == "zero" and not (0 < a < 1 or 1 < a < 2):
                raise ConfigurationError(f"alpha={a} must lie in (0, 1) or (1, 2)")
        if L1 in self.scheme and CASE_REGIME.get(self.case) == corr.DIFFUSION_WAVE:
            raise ConfigurationError("the L1 scheme is subdiffusion-only")


def observed_rates(Ns: Sequence[int], errors: Sequence[float]) -> list[float | None]:
    """log(e_i / e_{i+1}) / log(N_{i+1} / N_i); None where an error is zero or missing."""
    out = []
    for (n0, e0), (n1, e1) in zip(zip(Ns, errors), zip(Ns[1:], errors[1:])):
        if not e0 or not e1 or not (math.isfinite(e0) and math.isfinite(e1)):
            out.append(None)
        else:
            out.append(math.log(e0 / e1) / math.log(n1 / n0))
    return out


@dataclass
class ErrorRow:
    case: str
    scheme: str
    alpha: float
    k: int | None
    N: list[int]
    errors: list[float]
    rates: list[float | None]
    theoretical_rate: int
    warnings: list[str] = field(default_factory=list)
    trace: dict[int, list[float]] | None = None

    @property
    def headline_rate(self) -> float | None:
        return self.rates[-1] if self.rates else None


@dataclass
class ErrorReport:
    rows: list[ErrorRow]
    h: float
    T: float
    ref_factor: int
    wall_time: float = 0.0

    def row(self, alpha: float, k: int | None, scheme: str = CORRECTED) -> ErrorRow:
        for r in self.rows:
            if r.alpha == alpha and r.k == k and r.scheme == scheme:
                return r
        raise KeyError((alpha, k, scheme))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# h={self.h!r} T={self.T!r} ref_factor={self.ref_factor}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["case", "scheme", "alpha", "k", "N", "error", "rate", "theoretical_rate"])
        for r in self.rows:
            for i, (n, e) in enumerate(zip(r.N, r.errors)):
                rate = r.rates[i - 1] if i > 0 else None
                w.writerow([r.case, r.scheme, repr(r.alpha), "" if r.k is None else r.k, n,
                            format_sci(e), "" if rate is None else f"{rate:.2f}",
                            r.theoretical_rate])
            for msg in r.warnings:
                buf.write(f"# warning alpha={r.alpha!r} k={r.k} {r.scheme}: {msg}\n")
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "h": self.h, "T": self.T, "ref_factor": self.ref_factor, "wall_time": self.wall_time,
            "rows": [
                {**{k: v for k, v in asdict(r).items() if k != "trace"},
                 "headline_rate": r.headline_rate,
                 **({"trace": {str(n): t for n, t in r.trace.items()}} if r.trace else {})}
                for r in self.rows
            ],
        }
        return json.dumps(doc, indent=2)

    def traces_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["case", "scheme", "alpha", "k", "N", "n", "t", "error"])
        for r in self.rows:
            for n_steps, tr in (r.trace or {}).items():
                for n, e in enumerate(tr, start=1):
                    w.writerow([r.case, r.scheme, repr(r.alpha), "" if r.k is None else r.k,
                                n_steps, n, repr(n * self.T / n_steps), format_sci(e)])
        return buf.getvalue()


def format_sci(x: float | None) -> str:
    if x is None:
        return ""
    return f"{x:.2e}"


def _rel_error(sys, u, ref) -> float:
    nrm = l2_norm(sys, ref)
    diff = l2_norm(sys, u - ref)
    return diff / nrm if nrm > 0 else diff


def run_convergence(config: ExperimentConfig) -> ErrorReport:
    """Errors at the final time and observed rates for every (scheme, alpha, k)."""
    config.validate()
    start = time.perf_counter()
    sys = assemble(config.M)
    n_ref = config.N[-1] * config.ref_factor

    jobs = []  # (scheme, alpha, k_row, k_run)
    for scheme in config.scheme:
        for alpha in config.alpha:
            if scheme == L1:
                jobs.append((scheme, alpha, None, L1_REFERENCE_ORDER))
            else:
                for k in config.k:
                    jobs.append((scheme, alpha, k, k))

    ref_keys = sorted({(alpha, max(kr, 2) if scheme != CORRECTED else kr)
                       for scheme, alpha, _, kr in jobs})

    def reference(key, factor=1):
        alpha, k = key
        spec = make_case(config.case, alpha, config.T)
        return SolverRun(spec, k, n_ref * factor, sys, CORRECTED,
                         override_stability=config.override_stability).run()

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        refs = dict(zip(ref_keys, pool.map(reference, ref_keys)))

        def run_one(item):
            scheme, alpha, k_row, k_run, N = item
            spec = make_case(config.case, alpha, config.T)
            return SolverRun(spec, k_run, N, sys, scheme,
                             override_stability=config.override_stability).run()

        items = [(s, a, kr, kk, N) for (s, a, kr, kk) in jobs for N in config.N]
        runs = list(pool.map(run_one, items))

        checks = {}
        if config.check_reference:
            checks = dict(zip(ref_keys, pool.map(lambda key: reference(key, 2), ref_keys)))

    rows = []
    it = iter(runs)
    for scheme, alpha, k_row, k_run in jobs:
        key = (alpha, max(k_run, 2) if scheme != CORRECTED else k_run)
        ref = refs[key]
        u_ref = ref.solution()
        errors, trace = [], {} if config.trace else None
        for N in config.N:
            run = next(it)
            errors.append(_rel_error(sys, run.solution(), u_ref))
            if trace is not None:
                step = n_ref // N
                trace[N] = [_rel_error(sys, run.solution(n), ref.solution(n * step))
                            for n in range(1, N + 1)]
        theory = k_run if scheme == CORRECTED else 1
        row = ErrorRow(config.case, scheme, alpha, k_row, list(config.N), errors,
                       observed_rates(config.N, errors), theory, trace=trace)
        if key in checks:
            drift = _rel_error(sys, u_ref, checks[key].solution())
            smallest = min((e for e in errors if e > 0), default=0.0)
            if smallest and drift > 0.01 * smallest:
                row.warnings.append(
                    f"reference changes by {drift:.2e} under a further 2x refinement, "
                    f"more than 1% of the smallest error {smallest:.2e}")
        rows.append(row)
    return ErrorReport(rows, sys.h, config.T, config.ref_factor, time.perf_counter() - start)


@dataclass
class FlipResult:
    N: int
    tau: float
    tau0: float | None
    condition_satisfied: bool
    unstable: bool
    max_norm: float
    hf_growth: float
    profile: np.ndarray = field(repr=False)


def run_stability_flip(alpha: float, k: int, M: int, N_list: Sequence[int],
                       case: str = "c", T: float = 1.0) -> list[FlipResult]:
    """Run the diffusion-wave problem past the stability limit and classify each N."""
    spec = make_case(case, alpha, T)
    if spec.regime != corr.DIFFUSION_WAVE:
        raise ConfigurationError("stability flips are a diffusion-wave experiment")
    sys = assemble(M)
    t0 = tau_threshold(alpha, k, numerical_radius(sys))
    out = []
    for N in N_list:
        run = SolverRun(spec, k, N, sys, CORRECTED, override_stability=True, monitor=True).run()
        mon = run.monitor
        tau = T / N
        growth = mon.late_hf / mon.early_hf if mon.early_hf > 0 else math.inf
        out.append(FlipResult(N, tau, t0, bool(t0 is None or tau < t0), bool(mon.unstable),
                              float(np.max(mon.max_norm)), growth, run.solution()))
    return out


def flip_csv(results: Sequence[FlipResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "tau", "tau0", "condition_satisfied", "verdict", "max_norm", "hf_growth"])
    for r in results:
        w.writerow([r.N, format_sci(r.tau), format_sci(r.tau0), r.condition_satisfied,
                    "unstable" if r.unstable else "stable", format_sci(r.max_norm),
                    format_sci(r.hf_growth)])
    return buf.getvalue()


def _frac(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def dump_coeffs(k: int, regime: str, fmt: str = "json") -> str:
    """Correction coefficients as JSON (exact "num/den" strings) or decimal CSV.

    CSV columns: regime, k, name (a, b, c), ell (b only), j, exact, value.
    """
    cs = corr.correction_set(k, regime)
    entries = [("a", None, j, x) for j, x in enumerate(cs.a, start=1)]
    entries += [("b", ell, j, x) for ell, row in enumerate(cs.b, start=1)
                for j, x in enumerate(row, start=1)]
    entries += [("c", None, j, x) for j, x in enumerate(cs.c, start=1)]
    if fmt == "json":
        doc = {"k": k, "regime": regime,
               "a": [_frac(x) for x in cs.a],
               "b": [[_frac(x) for x in row] for row in cs.b],
               "c": [_frac(x) for x in cs.c]}
        return json.dumps(doc, indent=2)
    if fmt != "csv":
        raise ConfigurationError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["regime", "k", "name", "ell", "j", "exact", "value"])
    for name, ell, j, x in entries:
        w.writerow([regime, k, name, "" if ell is None else ell, j, _frac(x), repr(float(x))])
    return buf.getvalue()


def dump_cfl_sweep(ks: Sequence[int], alphas: Sequence[float]) -> str:
    """CSV columns: alpha, k, alpha_star, cfl_constant (empty where the curve misses the negative axis)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "k", "alpha_star", "cfl_constant"])
    for k in ks:
        astar = alpha_star(k)
        for a in alphas:
            c = cfl_constant(a, k)
            w.writerow([repr(float(a)), k, f"{astar:.4f}", "" if c is None else f"{c:.6f}"])
    return buf.getvalue()


def dump_weights(alpha: float, k: int, count: int) -> str:
    """CSV columns: j, b_j (tau-free weights at full precision)."""
    table = cq_weights(alpha, k, count)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["j", "weight"])
    for j, b in enumerate(table.weights):
        w.writerow([j, repr(float(b))])
    return buf.getvalue()
