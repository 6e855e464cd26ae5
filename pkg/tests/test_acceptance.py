"""Acceptance criteria 1-10.

Each criterion is one test that records a PASS/FAIL line (printed in the
terminal summary) with its runtime against the budget.  Sub-checks that
cannot pass as stated are collected under the same criterion, counted
against its verdict, and asserted in separate strict expected-failure
tests, so an unexpected pass surfaces as an error.

Reference values are the published errors at t=1; a headline rate is the
last pairwise rate over the step counts a criterion admits.
"""

from __future__ import annotations

import math
import subprocess
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy.special import binom

import golden
from acceptance_record import Checks
from fracbdf import correction as corr
from fracbdf.cq_weights import cq_weights, cq_weights_fft_oracle
from fracbdf.fem1d import assemble, numerical_radius
from fracbdf.harness import ExperimentConfig, run_convergence, run_stability_flip
from fracbdf.stability import alpha_star, cfl_constant, tau_threshold

N5 = [50, 100, 200, 400, 800]
N_WAVE = [100, 200, 400, 800, 1600]

# case (a), corrected, h = 1/100: errors on N5 and the quoted rate
CASE_A = {
    (0.25, 2): ([5.66e-5, 1.39e-5, 3.46e-6, 8.64e-7, 2.16e-7], 2.00),
    (0.25, 3): ([2.29e-6, 2.76e-7, 3.39e-8, 4.20e-9, 5.23e-10], 3.01),
    (0.25, 4): ([1.42e-7, 8.33e-9, 5.04e-10, 3.10e-11, 1.91e-12], 4.02),
    (0.25, 5): ([1.26e-8, 3.41e-10, 1.01e-11, 3.07e-13, 9.45e-15], 5.03),
    (0.5, 2): ([1.74e-4, 4.30e-5, 1.07e-5, 2.65e-6, 6.62e-7], 2.00),
    (0.5, 3): ([7.73e-6, 9.29e-7, 1.14e-7, 1.41e-8, 1.76e-9], 3.01),
    (0.5, 4): ([5.12e-7, 2.98e-8, 1.80e-9, 1.10e-10, 6.83e-12], 4.02),
    (0.5, 5): ([4.75e-8, 1.27e-9, 3.76e-11, 1.14e-12, 3.52e-14], 5.03),
    (0.5, 6): ([3.01e-5, 2.79e-9, 9.85e-13, 1.47e-14, 2.25e-16], 6.05),
    (0.75, 2): ([4.84e-4, 1.19e-4, 2.93e-5, 7.30e-6, 1.82e-6], 2.00),
    (0.75, 3): ([2.55e-5, 3.04e-6, 3.72e-7, 4.60e-8, 5.71e-9], 3.01),
    (0.75, 4): ([1.94e-6, 1.11e-7, 6.68e-9, 4.09e-10, 2.53e-11], 4.02),
    (0.75, 5): ([2.95e-7, 5.30e-9, 1.55e-10, 4.70e-12, 1.45e-13], 5.03),
}

# case (b), corrected, alpha = 0.5
CASE_B = {
    2: ([1.76e-5, 4.35e-6, 1.08e-6, 2.70e-7, 6.62e-8], 2.00),
    3: ([6.35e-7, 7.56e-8, 9.22e-9, 1.14e-9, 1.42e-10], 3.01),
    4: ([5.23e-8, 3.03e-9, 1.83e-10, 1.12e-11, 6.95e-13], 4.02),
}

# case (a), alpha = 0.5, error at N = 800 of the uncorrected and L1 schemes
BASELINE_E800 = {"uncorrected": 3.09e-4, "L1": 3.11e-4}

# case (c), h = 1/100, on N_WAVE
CASE_C = {
    (1.5, 2): ([6.87e-5, 1.69e-5, 4.18e-6, 1.04e-6, 2.59e-7], 2.00),
    (1.5, 3): ([4.22e-6, 5.12e-7, 6.30e-8, 7.82e-9, 9.74e-10], 3.00),
    (1.25, 4): ([2.74e-8, 1.64e-9, 1.00e-10, 6.20e-12, 3.63e-13], 4.00),
    (1.1, 5): ([3.32e-10, 9.52e-12, 2.85e-13, 8.71e-15, 2.69e-16], 5.00),
    (1.3, 5): ([2.38e-7, 1.28e-10, 1.08e-12, 3.40e-14, 1.06e-15], 5.00),
    (1.05, 6): ([3.31e-5, 1.94e-7, 1.28e-10, 7.58e-17, 7.39e-19], 6.68),
}
# case (c), h = 1/10, conditional regime
CASE_C_COARSE = {
    (1.95, 3): ([2.96e-5, 3.84e-6, 5.00e-7, 6.40e-8, 8.27e-9], 2.96),
    (1.5, 5): ([7.29e-8, 2.49e-10, 6.22e-12, 1.72e-13, 5.05e-15], 5.14),
    (1.5, 6): ([5.67e-2, 2.56e-10, 6.88e-13, 1.05e-14, 1.62e-16], 6.03),
}

ERROR_FLOOR = 1e-12
REL_TOL = 0.05
RATE_TOL = 0.1


def rate(e1, e2):
    return math.log2(e1 / e2)


def clock():
    return time.perf_counter()


# Shared state so the strict expected-failure tests reuse computed results.
_CHECKS: dict[int, Checks] = {}


def compare_row(checks, label, Ns, errors, expected_errors, expected_rate, tol=RATE_TOL,
                check_errors=True, known: dict[int, str] | None = None):
    """Errors within REL_TOL and headline rate within tol; ``known`` maps N to a documented reason."""
    known = known or {}
    if check_errors:
        for N, e, ref in zip(Ns, errors, expected_errors):
            detail = f"error {e:.3e} vs {ref:.2e} ({(e / ref - 1) * 100:+.1f}%)"
            if N in known:
                detail += f"; {known[N]}"
            checks.add(f"{label} N={N}", abs(e - ref) <= REL_TOL * ref, detail, known=N in known)
    head = rate(errors[-2], errors[-1])
    checks.add(f"{label} rate", abs(head - expected_rate) <= tol,
               f"rate {head:.3f} vs {expected_rate:.2f} +- {tol}")
    return head


def cold_corrections():
    """Drop memoized derivations so the runtime budget covers the derivation itself."""
    for obj in vars(corr).values():
        if callable(getattr(obj, "cache_clear", None)):
            obj.cache_clear()


def convergence(case, alpha, k, Ns, M=100, scheme="corrected"):
    cfg = ExperimentConfig(case=case, alpha=[alpha], k=[k], N=list(Ns), M=M, scheme=[scheme])
    return run_convergence(cfg).rows[0].errors


def test_criterion_01_coefficient_exactness():
    checks = Checks(1, "correction coefficients equal the tabulated rationals", budget=1.0)
    cold_corrections()
    start = clock()
    for k, expected in golden.A.items():
        got = list(corr.derive_a(k))
        checks.add(f"a k={k}", got == expected, f"{got} != {expected}")
    for k, expected in golden.B_SUB.items():
        got = [list(row) for row in corr.derive_b_subdiffusion(k)]
        checks.add(f"b subdiffusion k={k}", got == [[Fraction(x) for x in r] for r in expected], str(got))
    for k, expected in golden.B_WAVE.items():
        got = [list(row) for row in corr.derive_b_diffusion_wave(k)]
        checks.add(f"b diffusion-wave k={k}", got == [[Fraction(x) for x in r] for r in expected], str(got))
    for k, expected in golden.C_WAVE.items():
        got = list(corr.derive_c(k))
        checks.add(f"c k={k}", got == [Fraction(x) for x in expected], str(got))
    checks.finish(clock() - start)
    assert not checks.failures(), checks.failures()


def test_criterion_02_certification():
    checks = Checks(2, "every required residual coefficient vanishes exactly", budget=1.0)
    cold_corrections()
    start = clock()
    for regime in (corr.SUBDIFFUSION, corr.DIFFUSION_WAVE):
        for k in range(1, 7):
            try:
                certs = corr.certify(corr.correction_set(k, regime))
            except corr.CertificationError as exc:
                checks.add(f"{regime} k={k}", False, str(exc))
                continue
            for cert in certs:
                lo, hi = cert.verified_zero_range
                need = {"crit:mu": k - 1, "crit:mu-dw": k - 1, "crit:c-dw": k - 3,
                        "crit:b": k - (cert.ell or 0) - 2, "crit:b-dw": k - (cert.ell or 0) - 1}[cert.criterion]
                checks.add(f"{regime} k={k} {cert.criterion} ell={cert.ell}", hi >= need,
                           f"verified through s^{hi}, need s^{need}")
    checks.finish(clock() - start)
    assert not checks.failures(), checks.failures()


def test_criterion_03_weight_oracles():
    checks = Checks(3, "recurrence and FFT weights agree; BDF1 is binomial", budget=10.0)
    start = clock()
    for alpha in (0.25, 0.5, 0.75, 1.25, 1.5, 1.75):
        for k in range(1, 7):
            rec = cq_weights(alpha, k, 1024).weights
            fft = cq_weights_fft_oracle(alpha, k, 1024).weights
            dev = np.max(np.abs(rec - fft)) / np.max(np.abs(rec))
            checks.add(f"alpha={alpha} k={k} fft", dev <= 1e-12, f"relative deviation {dev:.2e}")
        j = np.arange(1024)
        gl = (-1.0) ** j * binom(alpha, j)
        rec = cq_weights(alpha, 1, 1024).weights
        dev = np.max(np.abs(rec - gl)) / np.max(np.abs(gl))
        checks.add(f"alpha={alpha} binomial", dev <= 1e-13, f"relative deviation {dev:.2e}")
    checks.finish(clock() - start)
    assert not checks.failures(), checks.failures()


def _criterion_04():
    if 4 in _CHECKS:
        return _CHECKS[4]
    checks = Checks(4, "subdiffusion convergence, case (a)", budget=300.0)
    start = clock()
    cfg = ExperimentConfig(case="a", alpha=[0.25, 0.5, 0.75], k=[2, 3, 4], N=N5)
    for row in run_convergence(cfg).rows:
        ref, quoted = CASE_A[(row.alpha, row.k)]
        compare_row(checks, f"alpha={row.alpha} k={row.k}", N5, row.errors, ref, quoted)
    cfg = ExperimentConfig(case="a", alpha=[0.25, 0.5, 0.75], k=[5], N=N5[:3])
    for row in run_convergence(cfg).rows:
        ref, quoted = CASE_A[(row.alpha, 5)]
        compare_row(checks, f"alpha={row.alpha} k=5", N5[:3], row.errors, ref[:3], quoted)
    errors = convergence("a", 0.5, 6, [100, 200])
    ref, quoted = CASE_A[(0.5, 6)]
    head = rate(*errors)
    published = rate(ref[1], ref[2])
    checks.add("alpha=0.5 k=6 rate on N=100,200 vs the same pair of published errors",
               abs(head - published) <= RATE_TOL, f"rate {head:.3f} vs {published:.3f}")
    checks.add("alpha=0.5 k=6 rate on N=100,200 vs quoted", abs(head - quoted) <= RATE_TOL,
               f"rate {head:.3f} vs {quoted} +- {RATE_TOL}; the published errors on this pair "
               f"give {published:.2f} (pre-asymptotic)", known=True)
    checks.finish(clock() - start)
    _CHECKS[4] = checks
    return checks


def test_criterion_04_subdiffusion_convergence():
    checks = _criterion_04()
    assert not checks.failures(known=False), checks.failures(known=False)


@pytest.mark.xfail(strict=True, reason="pre-asymptotic pair: the published errors give a rate near 11.5, not 6.05")
def test_criterion_04_k6_rate_against_quoted_value():
    checks = _criterion_04()
    assert not checks.failures(known=True), checks.failures(known=True)


def test_criterion_05_inhomogeneous_convergence():
    checks = Checks(5, "subdiffusion convergence, case (b)", budget=180.0)
    start = clock()
    cfg = ExperimentConfig(case="b", alpha=[0.5], k=[2, 3, 4], N=N5)
    for row in run_convergence(cfg).rows:
        ref, quoted = CASE_B[row.k]
        compare_row(checks, f"k={row.k}", N5, row.errors, ref, quoted)
    checks.finish(clock() - start)
    assert not checks.failures(), checks.failures()


def test_criterion_06_uncorrected_baselines():
    checks = Checks(6, "uncorrected BDF-k and L1 stay first order", budget=120.0)
    start = clock()
    cfg = ExperimentConfig(case="a", alpha=[0.5], k=[3, 4, 5, 6], N=N5, scheme=["uncorrected", "L1"])
    for row in run_convergence(cfg).rows:
        label = f"{row.scheme} k={row.k}" if row.k else row.scheme
        head = row.headline_rate
        checks.add(f"{label} rate", 0.9 <= head <= 1.1, f"rate {head:.3f} outside [0.9, 1.1]")
        ref = BASELINE_E800[row.scheme]
        e = row.errors[-1]
        checks.add(f"{label} N=800", abs(e - ref) <= REL_TOL * ref, f"error {e:.3e} vs {ref:.2e}")
    checks.finish(clock() - start)
    assert not checks.failures(), checks.failures()


def _rate_only(checks, label, Ns, errors, expected_errors, quoted):
    """Rate check restricted to the leading N whose published errors exceed the floor."""
    keep = [i for i, e in enumerate(expected_errors) if e > ERROR_FLOOR]
    Ns_in = [Ns[i] for i in keep]
    ours = [errors[i] for i in keep]
    theirs = [expected_errors[i] for i in keep]
    head = rate(ours[-2], ours[-1])
    published = rate(theirs[-2], theirs[-1])
    pair = f"N={Ns_in[-2]},{Ns_in[-1]}"
    checks.add(f"{label} rate on {pair} vs the same pair of published errors",
               abs(head - published) <= RATE_TOL, f"rate {head:.3f} vs {published:.3f}")
    consistent = abs(published - quoted) <= RATE_TOL
    checks.add(f"{label} rate on {pair} vs quoted", abs(head - quoted) <= RATE_TOL,
               f"rate {head:.3f} vs {quoted} +- {RATE_TOL}" +
               ("" if consistent else f"; the published errors on this pair give {published:.2f}"),
               known=not consistent)


def _criterion_07():
    if 7 in _CHECKS:
        return _CHECKS[7]
    checks = Checks(7, "diffusion-wave convergence, case (c)", budget=300.0)
    start = clock()
    # The published ratios e(N)/e(2N) of this row are 16.7, 16.4, 16.1 and then 17.1; the
    # computed sequence is converged to about 2e-15 (successive differences shrink by 16x).
    anomaly = {1600: "the published entry breaks the row's own fourth-order ratio"}
    for (alpha, k) in [(1.5, 2), (1.5, 3), (1.25, 4)]:
        ref, quoted = CASE_C[(alpha, k)]
        compare_row(checks, f"h=1/100 alpha={alpha} k={k}", N_WAVE, convergence("c", alpha, k, N_WAVE), ref, quoted,
                    known=anomaly if (alpha, k) == (1.25, 4) else None)

    ref, _ = CASE_C_COARSE[(1.95, 3)]
    errors = convergence("c", 1.95, 3, N_WAVE, M=10)
    compare_row(checks, "h=1/10 alpha=1.95 k=3", N_WAVE, errors, ref, 3.00, tol=0.15, check_errors=False)

    for (alpha, k) in [(1.1, 5), (1.3, 5), (1.05, 6)]:
        ref, quoted = CASE_C[(alpha, k)]
        Ns = [N for N, e in zip(N_WAVE, ref) if e > ERROR_FLOOR]
        _rate_only(checks, f"h=1/100 alpha={alpha} k={k}", Ns, convergence("c", alpha, k, Ns), ref, quoted)
    for (alpha, k) in [(1.5, 5), (1.5, 6)]:
        ref, quoted = CASE_C_COARSE[(alpha, k)]
        Ns = [N for N, e in zip(N_WAVE, ref) if e > ERROR_FLOOR]
        cfg = ExperimentConfig(case="c", alpha=[alpha], k=[k], N=Ns, M=10, override_stability=True)
        _rate_only(checks, f"h=1/10 alpha={alpha} k={k}", Ns, run_convergence(cfg).rows[0].errors, ref, quoted)
    checks.finish(clock() - start)
    _CHECKS[7] = checks
    return checks


def test_criterion_07_diffusion_wave_convergence():
    checks = _criterion_07()
    assert not checks.failures(known=False), checks.failures(known=False)


@pytest.mark.xfail(strict=True, reason="pre-asymptotic pairs whose published errors miss the quoted rates, "
                                        "and one published entry off its row's convergence ratio")
def test_criterion_07_high_order_rates_against_quoted_values():
    checks = _criterion_07()
    assert not checks.failures(known=True), checks.failures(known=True)


ALPHA_STAR_QUOTED = {3: 1.91, 4: 1.68, 5: 1.40, 6: 1.11}


def _criterion_08():
    if 8 in _CHECKS:
        return _CHECKS[8]
    checks = Checks(8, "CFL constant and critical orders", budget=5.0)
    start = clock()
    c = cfl_constant(1.5, 5)
    checks.add("c(1.5, 5)", abs(c - 1.58) <= 0.01, f"{c:.5f} vs 1.58 +- 0.01")
    for k, quoted in ALPHA_STAR_QUOTED.items():
        got = alpha_star(k)
        checks.add(f"alpha* k={k}", abs(got - quoted) <= 0.005,
                   f"pi/(pi - theta_k) = {got:.4f} vs {quoted} +- 0.005 (quoted value is truncated)",
                   known=k in (3, 4))
    checks.finish(clock() - start)
    _CHECKS[8] = checks
    return checks


def test_criterion_08_cfl_constant():
    checks = _criterion_08()
    assert not checks.failures(known=False), checks.failures(known=False)


@pytest.mark.xfail(strict=True, reason="quoted alpha* for k=3, 4 are truncated; the formula gives 1.9155 and 1.6878")
def test_criterion_08_alpha_star_k3_k4():
    checks = _criterion_08()
    assert not checks.failures(known=True), checks.failures(known=True)


def test_criterion_09_stability_flip():
    checks = Checks(9, "stability flip between N=1700 and N=1800", budget=120.0)
    start = clock()
    rA = numerical_radius(assemble(100))
    checks.add("r(A)", 1.1e5 <= rA <= 1.3e5, f"{rA:.4g} outside [1.1e5, 1.3e5]")
    tau0 = tau_threshold(1.5, 5, rA)
    checks.add("tau0", tau0 is not None and 5.5e-4 <= tau0 <= 5.7e-4, f"{tau0} outside [5.5e-4, 5.7e-4]")
    unstable, stable = run_stability_flip(1.5, 5, 100, [1700, 1800])
    checks.add("N=1700 unstable", unstable.unstable,
               f"growth {unstable.hf_growth:.2e}, max|U| {unstable.max_norm:.3g}")
    checks.add("N=1800 stable", not stable.unstable,
               f"growth {stable.hf_growth:.2e}, max|U| {stable.max_norm:.3g}")
    checks.add("condition agrees", (not unstable.condition_satisfied) and stable.condition_satisfied,
               f"condition {unstable.condition_satisfied}, {stable.condition_satisfied}")
    checks.finish(clock() - start)
    assert not checks.failures(), checks.failures()


PROPERTY_SUITES = ["test_series.py", "test_cq_weights.py", "test_correction.py", "test_fem1d.py",
                   "test_stability.py", "test_stepper.py", "test_harness.py"]


def test_criterion_10_property_suites():
    checks = Checks(10, "module property and invariant suites", budget=60.0)
    here = Path(__file__).parent
    start = clock()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *[str(here / f) for f in PROPERTY_SUITES]],
        capture_output=True, text=True, cwd=here.parent)
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-500:]
    checks.add("suites", proc.returncode == 0, tail)
    checks.finish(clock() - start)
    assert not checks.failures(), checks.failures()
