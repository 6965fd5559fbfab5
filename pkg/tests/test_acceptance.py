"""Acceptance checks, one test per numbered criterion.

Each test prints a single PASS/FAIL line (plus indented evidence) before
asserting, so the verdict for every criterion is visible even when a later
assertion stops the run. Statistical criteria reuse the verification suites
with their default seeds and budgets; the cheap closed-form and determinism
criteria run inline.
"""

import time

import numpy as np
import pytest

from sketchavg import moments, verify
from sketchavg.experiments import config_from_dict, run_experiment
from sketchavg.linalg import RngStream
from sketchavg.problems import generate_problem


def _emit(tag, ok, elapsed, checks=(), note=""):
    status = "PASS" if ok else "FAIL"
    extra = f" {note}" if note else ""
    print(f"\n{tag} {status} ({elapsed:.1f}s){extra}")
    for c in checks:
        print("    " + c.line())


def _run_tagged(tag, checks, elapsed, note=""):
    ok = all(c.passed for c in checks)
    _emit(tag, ok, elapsed, checks, note)
    assert ok, f"{tag}: failing checks: " + ", ".join(
        c.name for c in checks if not c.passed)


def _timed_suite(fn):
    t0 = time.perf_counter()
    results = fn()
    return {r.name: r for r in results}, time.perf_counter() - t0


@pytest.fixture(scope="module")
def ihs_suite():
    return _timed_suite(verify.suite_ihs)


@pytest.fixture(scope="module")
def ridge_suite():
    return _timed_suite(verify.suite_ridge)


@pytest.fixture(scope="module")
def newton_reg_suite():
    return _timed_suite(verify.suite_newton_reg)


def test_ac01_inverse_moments():
    t0 = time.perf_counter()
    results = verify.suite_moments()
    _run_tagged("AC01 inverse-gram-moments", results,
                time.perf_counter() - t0)


def test_ac02_regularized_resolvent():
    t0 = time.perf_counter()
    results = verify.suite_theta3()
    _run_tagged("AC02 resolvent-limit", results, time.perf_counter() - t0)


def test_ac03_one_step_contraction(ihs_suite):
    results, suite_s = ihs_suite
    names = ["ihs-one-step-contraction-q1", "ihs-one-step-contraction-q4",
             "ihs-one-step-contraction-q8", "ihs-worker-independence-q4",
             "ihs-worker-independence-q8"]
    _run_tagged("AC03 ihs-contraction", [results[n] for n in names], suite_s,
                note="(suite shared with AC04)")


def test_ac04_iteration_prediction(ihs_suite):
    results, suite_s = ihs_suite
    names = ["ihs-iterations-q1", "ihs-iterations-q4", "ihs-iterations-q8"]
    _run_tagged("AC04 ihs-iteration-count", [results[n] for n in names],
                suite_s, note="(suite shared with AC03)")


def test_ac05_averaged_ridge_error_ratios(ridge_suite):
    results, suite_s = ridge_suite
    support = [results["ridge-single-sketch-unbiased"],
               results["ridge-single-sketch-vanilla-bias"]]
    criterion = [results["ridge-avg-zb-vs-vanilla-q100"],
                 results["ridge-avg-vanilla-floor"],
                 results["ridge-avg-zb-decay"]]
    ok = all(c.passed for c in criterion)
    _emit("AC05 averaged-ridge-bias", ok, suite_s, criterion + support,
          note="(suite shared with AC09)")
    for c in support:
        assert c.passed, f"AC05 supporting check broke: {c.line()}"
    assert ok, "AC05: failing checks: " + ", ".join(
        c.name for c in criterion if not c.passed)


def test_ac06_correction_closed_forms():
    t0 = time.perf_counter()
    rng = RngStream(66, 0).generator()
    worst_ridge = 0.0
    draws = 0
    while draws < 1000:
        lam1 = rng.uniform(0.05, 10.0)
        gamma = rng.uniform(0.1, 5.0)
        sigma = rng.uniform(0.5, 2.0)
        if gamma > 1 and lam1 < sigma ** 2 * (gamma - 1.0):
            continue
        lam2 = moments.lambda2_star_ridge(lam1, gamma, sigma)
        worst_ridge = max(worst_ridge, abs(
            moments.zero_bias_residual_ridge(lam1, lam2, gamma, sigma)))
        draws += 1
    worst_newton = 0.0
    for _ in range(1000):
        lam1 = rng.uniform(0.0, 10.0)
        gamma = rng.uniform(0.1, 5.0)
        sigma = rng.uniform(0.5, 2.0)
        lam2 = moments.lambda2_star_newton(lam1, gamma, sigma)
        worst_newton = max(worst_newton, abs(
            moments.theta3(gamma, lam2 / sigma ** 2)
            - 1.0 / (1.0 + lam1 / sigma ** 2)))
    anchor = moments.lambda2_star_ridge(5.0, 5.0, 1.0)
    anchor_err = abs(anchor - 5.0 / 6.0)
    elapsed = time.perf_counter() - t0
    ok = worst_ridge <= 1e-10 and worst_newton <= 1e-10 and anchor_err <= 1e-12
    _emit("AC06 correction-closed-forms", ok, elapsed,
          note=(f"ridge residual {worst_ridge:.3g}, newton condition gap "
                f"{worst_newton:.3g}, anchor |lam2*-5/6|={anchor_err:.3g}, "
                "1000 draws each"))
    assert worst_ridge <= 1e-10
    assert worst_newton <= 1e-10
    assert anchor_err <= 1e-12
    assert elapsed < 1.0


def test_ac07_step_scalings():
    t0 = time.perf_counter()
    results = verify.suite_newton_step()
    _run_tagged("AC07 step-scalings", results, time.perf_counter() - t0)


def test_ac08_barrier_dominance(newton_reg_suite):
    results, suite_s = newton_reg_suite
    setup = [results["newton-reg-uses-effective-lambda1"],
             results["newton-reg-bias-improvement"]]
    criterion = [results["newton-reg-barrier-dominance-gaussian"],
                 results["newton-reg-barrier-dominance-sjlt"]]
    ok = all(c.passed for c in criterion)
    _emit("AC08 barrier-dominance", ok, suite_s, criterion + setup)
    for c in setup:
        assert c.passed, f"AC08 setup check broke: {c.line()}"
    assert ok, "AC08: failing checks: " + ", ".join(
        c.name for c in criterion if not c.passed)


def test_ac09_heterogeneous_corrections(ridge_suite):
    results, suite_s = ridge_suite
    names = ["hetero-corrections-anchor", "ridge-hetero-bias-m2d",
             "ridge-hetero-bias-m4d", "ridge-hetero-bias-m8d"]
    _run_tagged("AC09 heterogeneous-workers", [results[n] for n in names],
                suite_s, note="(suite shared with AC05)")


def test_ac10_sketch_identities():
    t0 = time.perf_counter()
    results = verify.suite_sketches()
    _run_tagged("AC10 sketch-identities", results, time.perf_counter() - t0)


def test_ac11_derivative_checks():
    t0 = time.perf_counter()
    cases = [("lstsq", {"noise": 0.5}),
             ("ridge", {"noise": 0.5, "lambda1": 0.8}),
             ("logistic", {"lambda1": 0.3}),
             ("barrier", {"lambda1": 2.0, "bound": 5.0})]
    h = 1e-5
    worst_g = 0.0
    worst_h = 0.0
    point_rng = RngStream(1111, 1).generator()
    for kind, kwargs in cases:
        p = generate_problem(kind, 40, 8, RngStream(1111, 0).generator(),
                             **kwargs)
        eye = np.eye(p.d)
        for _ in range(20):
            x = 0.02 * point_rng.standard_normal(p.d)
            g = p.gradient(x)
            g_fd = np.array([
                (p.objective(x + h * eye[i]) - p.objective(x - h * eye[i]))
                / (2 * h) for i in range(p.d)])
            worst_g = max(worst_g, float(
                np.linalg.norm(g - g_fd) / np.linalg.norm(g_fd)))
            fac = p.hessian_factor(x)
            hess = fac.half.T @ fac.half + fac.lambda1_eff * eye
            h_fd = np.column_stack([
                (p.gradient(x + h * eye[i]) - p.gradient(x - h * eye[i]))
                / (2 * h) for i in range(p.d)])
            worst_h = max(worst_h, float(
                np.linalg.norm(hess - h_fd) / np.linalg.norm(h_fd)))
    ok = worst_g <= 1e-4 and worst_h <= 1e-4
    _emit("AC11 derivative-checks", ok, time.perf_counter() - t0,
          note=(f"worst gradient rel err {worst_g:.3g}, worst hessian rel "
                f"err {worst_h:.3g} over 4 kinds x 20 points, tol 1e-4"))
    assert ok


def test_ac12_run_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = config_from_dict({
        "trials": 3,
        "master_seed": 12,
        "problem": {"kind": "lstsq", "n": 300, "d": 20, "noise": 0.5},
        "cluster": {"q": 6, "m": 60},
        "solver": {"algorithm": "ihs", "T": 5},
        "variants": [
            {"label": "ihs"},
            {"label": "avg", "problem": {"kind": "ridge", "lambda1": 2.0},
             "solver": {"algorithm": "ridge-average",
                        "correction": "zero-bias"}},
            {"label": "ns", "solver": {"algorithm": "newton-sketch",
                                       "steps": "unbiased", "eps": 0.0,
                                       "max_iters": 5}},
        ],
    })
    out1, out2 = tmp_path / "serial", tmp_path / "threaded"
    run_experiment(cfg, str(out1), threads=1)
    run_experiment(cfg, str(out2), threads=3)
    agg1 = (out1 / "aggregate.csv").read_bytes()
    agg2 = (out2 / "aggregate.csv").read_bytes()
    sum1 = (out1 / "summary.json").read_bytes()
    sum2 = (out2 / "summary.json").read_bytes()
    ok = agg1 == agg2 and sum1 == sum2
    _emit("AC12 run-determinism", ok, time.perf_counter() - t0,
          note=(f"aggregate identical: {agg1 == agg2}, summary identical: "
                f"{sum1 == sum2}, 3 algorithms x 3 trials, threads 1 vs 3"))
    assert agg1 == agg2
    assert sum1 == sum2
