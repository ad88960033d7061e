"""Acceptance criteria, one test per criterion; each records a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary lists
every criterion with the measured numbers behind its verdict.
"""

import math
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest
import sympy

from interpolab.bounds import lemma5_sweep, lemma6_lipschitz_sweep, lemma6_sup_sweep
from interpolab.cli import run_experiment
from interpolab.config import EXPERIMENTS, default_config, validate_text
from interpolab.core_net import Architecture
from interpolab.descent import theoretical_schedule
from interpolab.experiments import planted_run, run_gradcheck, run_indicator, run_lower_bound, run_planted_train
from interpolab.lower_bound import binomial_identity, lemma9_check
from interpolab.core_net import predict

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def indicator_result():
    return run_indicator(default_config("indicator"))


def test_criterion_01_gradient_correctness(record):
    start = time.perf_counter()
    result = run_gradcheck(default_config("gradcheck"))
    elapsed = time.perf_counter() - start
    m = result.metrics
    ok = m["passed"] == m["configurations"] == 100 and elapsed < 30
    record("1", ok, f"{m['passed']}/{m['configurations']} configs within rtol 1e-6 / atol 1e-10, "
                    f"worst err/tol {m['worst_err_over_tolerance']:.2e}, {elapsed:.1f} s")
    assert ok


def test_criterion_02_weight_lipschitz_sweep(record):
    rows = lemma5_sweep(1000, seed=0)
    bad = [r for r in rows if r.violated]
    record("2", not bad and len(rows) == 1000,
           f"{len(bad)} violations in {len(rows)} triples; max lhs/rhs {max(r.lhs / r.rhs for r in rows if r.rhs > 0):.3g}")
    assert not bad


def test_criterion_03_gradient_bound_sweeps(record):
    sup = lemma6_sup_sweep(1000, seed=0)
    lip = lemma6_lipschitz_sweep(500, seed=0)
    bad_sup = [r.trial for r in sup if r.violated]
    bad_lip = [r.trial for r in lip if r.violated]
    ok = not bad_sup and not bad_lip
    record("3", ok, f"sup-norm: {len(bad_sup)}/1000 violations; Lipschitz: {len(bad_lip)}/500 violations")
    assert ok


def test_criterion_04_indicator_construction(record, indicator_result):
    r = indicator_result
    bounds, control = r.verdict("indicator_bounds"), r.verdict("negative_control_detected")
    cfg = default_config("indicator")
    ok = bounds.passed and control.passed and r.metrics["rectangles"] == 50 and cfg.probes == 10_000
    record("4", ok, f"{bounds.detail}; control: {r.metrics['negative_control_violations']} violations flagged")
    assert ok


def test_criterion_05_perturbation_robustness(record, indicator_result):
    r = indicator_result
    v = r.verdict("perturbation_robustness")
    ok = v.passed and r.metrics["perturbation_trials"] == 1000
    record("5", ok, v.detail)
    assert ok


def test_criterion_06_planted_training_at_bound_step(record):
    # literal step size: lambda = 1 / L_hat with L_hat from the smoothness formula at the run's norms
    cfg = default_config("planted-train")
    assert cfg.step_rule == "lemma6" and cfg.n == 10
    result = run_planted_train(cfg)
    m = result.metrics
    parts = {name: result.verdict(name) for name in ("risk_monotone", "lemma2_gradient_bound", "final_risk", "runtime")}
    ok = all(v.passed for v in parts.values())
    record("6", ok,
           f"monotone {parts['risk_monotone'].status}, gradient lower bound {parts['lemma2_gradient_bound'].status} "
           f"({m['lemma2_steps_checked']} steps), final F_n {m['risk_final']:.4g} vs optimum+1e-3 "
           f"{m['optimum'] + 1e-3:.4g} [{parts['final_risk'].status}] with lambda {m['step_size']:.3g} "
           f"(log10 L_hat {m['log10_Ln']:.1f}; contraction needs ~10^{m['log10_steps_needed_at_bound']:.0f} steps), "
           f"{m['runtime_seconds']:.2f} s")
    assert parts["risk_monotone"].passed and parts["lemma2_gradient_bound"].passed and parts["runtime"].passed
    assert parts["final_risk"].passed, parts["final_risk"].detail


def test_criterion_06_desk_scale_companion(record):
    # same pipeline with lambda = 1 / (measured curvature at c^(0)); not a substitute for criterion 6
    cfg = validate_text("experiment = planted-train\n[run]\nlambda = empirical\n")
    result = run_planted_train(cfg)
    m = result.metrics
    ok = all(result.verdict(n).passed for n in ("risk_monotone", "lemma2_gradient_bound", "final_risk", "runtime"))
    record("6-desk", ok, f"lambda {m['step_size']:.4g}: final gap {m['final_gap']:.3g}, "
                         f"{m['monotone_violations']} increases, {m['lemma2_violations']} gradient-bound violations")
    assert ok


def test_criterion_07_schedule(record):
    n = sympy.Symbol("n", positive=True)
    s = theoretical_schedule(Architecture(1, 2, 2, 1), 10)
    exps = (s.kn_exponent, s.lambda_exponent, s.tn_exponent, s.Ln_exponent)
    tn = 2 * n ** s.tn_exponent
    lam = n ** s.lambda_exponent
    Ln = n ** s.Ln_exponent
    id1 = sympy.simplify(tn * lam - 2 * n ** 2) == 0
    id2 = sympy.simplify(tn / (2 * n * Ln) - n) == 0
    ok = exps == (37, -95, 97, 95) and id1 and id2
    record("7", ok, f"exponents {exps}; t_n*lambda_n = 2n^2: {id1}; t_n/(2nL_n) = n: {id2}")
    assert ok


def test_criterion_08_binomial_identity(record):
    broken = [n for n in range(10, 1001) if not binomial_identity(n).chain_ok]
    exact10 = binomial_identity(10).exact
    with mpmath.workdps(60):
        p = mpmath.mpf(1) / 10
        oracle = mpmath.fsum(mpmath.binomial(10, i) * p ** i * (1 - p) ** (10 - i) / i for i in range(1, 11))
    ok = not broken and abs(exact10 - 0.5065) <= 5e-4 and abs(exact10 - float(oracle)) < 1e-14
    record("8", ok, f"chain broken at {len(broken)} of 991 n; n=10 exact {exact10:.10f} "
                    f"(60-digit recomputation {mpmath.nstr(oracle, 12)})")
    assert ok


def test_criterion_09_lower_bound_reproduction(record):
    cfg = default_config("lower-bound")
    assert cfg.estimator == "conditional-mean" and cfg.replications == 1000 and cfg.n == 10
    result = run_lower_bound(cfg)
    m = result.metrics
    names = ("mc_matches_exact", "mean_risk_above_fifth", "composed_bound_above_sixth", "runtime")
    statuses = {k: result.verdict(k).status for k in names}
    ok = all(s == "pass" for s in statuses.values()) and m["kappa_hat"] <= 1 / (10 * math.log(10))
    record("9", ok, f"mean {m['risk_mean']:.5f} +- {m['risk_stderr']:.5f} vs exact {m['exact_reference']:.5f}; "
                    f"composed bound {m['paper_bound']:.4f} (kappa_hat {m['kappa_hat']:.3g}, "
                    f"failure {m['failure_rate']:.3g}); {m['runtime_seconds']:.1f} s")
    assert ok, statuses


def test_criterion_10_closeness_of_trained_network(record):
    cfg = validate_text("experiment = planted-train\n[run]\nlambda = empirical\n")
    pr = planted_run(cfg)
    kappa = 1e-3
    rep = lemma9_check(lambda xs: predict(pr.run.final, xs), pr.data, kappa)
    ok = rep.holds and rep.bound == pytest.approx(0.1)
    record("10", ok, f"max |f(X_i) - mbar(X_i)| = {rep.deviations.max():.3g} <= sqrt(n kappa) = {rep.bound:.3g} "
                     f"(desk-scale run, gap {pr.gap:.3g})")
    assert ok


SMALL = {
    "gradcheck": "[run]\ntrials = 5\n",
    "bounds-sweep": "[run]\ntrials = 50\npairs = 25\n",
    "indicator": "[run]\nrectangles = 3\nprobes = 400\nperturbations = 20\n",
    "planted-train": "[run]\nlambda = empirical\nsteps = 40\n",
    "schedule": "",
    "lower-bound": "[run]\nreplications = 50\nbinomial_max = 40\n",
    "corollary": "[run]\nreplications = 5\nsteps = 60\n",
}


def _artifacts(out: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.suffix in (".csv", ".txt") and p.name != "summary.txt"}


def test_criterion_11_determinism(record, tmp_path):
    mismatched = []
    counted = 0
    for name in EXPERIMENTS:
        runs = []
        for rep in range(2):
            cfg = validate_text(f"experiment = {name}\n{SMALL[name]}").with_overrides(seed=7, out_dir=tmp_path / f"{name}-{rep}")
            run_experiment(cfg)
            runs.append(_artifacts(cfg.out_dir))
        assert runs[0], name
        counted += len(runs[0])
        if runs[0] != runs[1]:
            mismatched.append(name)
    other = validate_text("experiment = gradcheck\n[run]\ntrials = 5\n").with_overrides(seed=8, out_dir=tmp_path / "other")
    run_experiment(other)
    seed_matters = _artifacts(other.out_dir) != _artifacts(tmp_path / "gradcheck-0")
    ok = not mismatched and seed_matters
    record("11", ok, f"{counted} artifacts across {len(EXPERIMENTS)} experiments byte-identical on rerun"
                     + (f"; mismatched: {mismatched}" if mismatched else "") + f"; different seed changes output: {seed_matters}")
    assert ok
