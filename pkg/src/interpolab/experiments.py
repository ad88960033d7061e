"""Named experiments: each takes a validated config and returns tables, metrics and verdicts."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import seeding
from .bounds import (
    SweepRow,
    check_indicator_condition,
    empirical_smoothness,
    lemma2_lower_bound_check,
    lemma3_steps_needed,
    lemma5_sweep,
    lemma6_for_run,
    lemma6_lipschitz_sweep,
    lemma6_sup_sweep,
    product_lipschitz_bound,
    random_architecture,
)
from .config import ExperimentConfig
from .constructor import (
    IndicatorWeights,
    RectangleSpec,
    build_indicator,
    check_hypotheses,
    perturb,
    perturbation_radius,
    verify_indicator,
)
from .core_net import Architecture, WeightVector, predict
from .descent import InitSpec, initialize, theoretical_schedule, train
from .lower_bound import (
    AdversarialDistribution,
    ConditionalMeanInterpolator,
    PlantedNetworkEstimator,
    ZeroEstimator,
    binomial_identity,
    lemma9_check,
    mc_lower_bound_experiment,
    sample,
)
from .risk import (
    Dataset,
    analytic_gradient,
    conditional_mean_at_samples,
    finite_difference_gradient,
    interpolation_gap,
    interpolation_optimum,
    load_dataset_csv,
)

Row = tuple[Any, ...]


@dataclass
class Verdict:
    name: str
    status: str  # "pass", "fail" or "skip"
    detail: str

    @property
    def passed(self) -> bool:
        return self.status != "fail"


def check(name: str, ok: bool, detail: str) -> Verdict:
    return Verdict(name, "pass" if ok else "fail", detail)


@dataclass
class ExperimentResult:
    metrics: dict[str, Any] = field(default_factory=dict)
    verdicts: list[Verdict] = field(default_factory=list)
    tables: dict[str, tuple[list[str], list[Row]]] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    weights: WeightVector | None = None

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)


def _time_verdict(result: ExperimentResult, cfg: ExperimentConfig, elapsed: float) -> None:
    result.metrics["runtime_seconds"] = round(elapsed, 3)
    if cfg.time_limit is not None:
        result.verdicts.append(check("runtime", elapsed <= cfg.time_limit, f"{elapsed:.1f} s (limit {cfg.time_limit:g} s)"))


SWEEP_HEADER = ["trial", "lhs", "rhs", "margin", "violated"]


def _sweep_verdict(name: str, rows: list[SweepRow]) -> Verdict:
    bad = [r for r in rows if r.violated]
    if bad:
        w = bad[0]
        return check(name, False, f"{len(bad)}/{len(rows)} violations; first at trial {w.trial}: lhs={w.lhs!r} > rhs={w.rhs!r}")
    worst = min(rows, key=lambda r: r.margin / max(abs(r.rhs), 1e-300))
    return check(name, True, f"0/{len(rows)} violations; tightest trial {worst.trial} lhs/rhs={worst.lhs / worst.rhs:.3g}")


# -- gradcheck ----------------------------------------------------------------------

def run_gradcheck(cfg: ExperimentConfig) -> ExperimentResult:
    result = ExperimentResult()
    start = time.perf_counter()
    rows = []
    for t in range(cfg.trials):
        rng = seeding.derive_rng(cfg.seed, seeding.SWEEP, 1, t)
        arch = random_architecture(rng, cfg.d, cfg.k0, cfg.L, cfg.kn or 8, require_lemma5=False)
        m = int(rng.integers(1, 6))
        data = Dataset(rng.uniform(-1, 1, (m, arch.d)), rng.uniform(-1, 1, m))
        w = WeightVector(arch, rng.uniform(-2, 2, arch.n_weights))
        g = analytic_gradient(w, data)
        fd = finite_difference_gradient(w, data)
        err = np.abs(g - fd)
        allowed = np.maximum(cfg.rtol * np.maximum(np.abs(g), np.abs(fd)), cfg.atol)
        ratio = float(np.max(err / allowed))
        rows.append((t, arch.d, arch.k0, arch.L, arch.kn, m, arch.n_weights,
                     float(err.max()), ratio, int(ratio <= 1.0)))
    elapsed = time.perf_counter() - start
    passed = sum(r[-1] for r in rows)
    result.tables["gradcheck.csv"] = (
        ["trial", "d", "k0", "L", "kn", "samples", "weights", "max_abs_err", "worst_err_over_tolerance", "passed"], rows)
    result.metrics.update(configurations=len(rows), passed=passed,
                          worst_err_over_tolerance=max(r[8] for r in rows),
                          max_abs_err=max(r[7] for r in rows))
    result.verdicts.append(check(
        "gradient_agreement", passed == len(rows),
        f"{passed}/{len(rows)} configurations within rtol={cfg.rtol:g}, atol={cfg.atol:g}"))
    _time_verdict(result, cfg, elapsed)
    return result


# -- bounds sweep -------------------------------------------------------------------

def _product_rule_rows(trials: int, seed: int) -> list[SweepRow]:
    """Empirical Lipschitz constant of a product of sinusoids against the composition rule."""
    rows = []
    grid = np.linspace(-3, 3, 2001)
    for t in range(trials):
        rng = seeding.derive_rng(seed, seeding.SWEEP, 7, t)
        s = int(rng.integers(1, 5))
        amp = rng.uniform(0.2, 2.0, s)
        freq = rng.uniform(0.1, 3.0, s)
        phase = rng.uniform(0, 2 * np.pi, s)
        values = np.prod(amp[:, None] * np.sin(freq[:, None] * grid + phase[:, None]), axis=0)
        slope = float(np.max(np.abs(np.diff(values) / np.diff(grid))))
        _, relaxed = product_lipschitz_bound(list(amp * freq), list(amp))
        rows.append(SweepRow(t, slope, relaxed))
    return rows


def run_bounds_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    result = ExperimentResult()
    start = time.perf_counter()
    sweeps = {
        "lemma5_lipschitz": ("lemma5.csv", lemma5_sweep(cfg.trials, cfg.seed)),
        "lemma6_gradient_sup": ("lemma6_sup.csv", lemma6_sup_sweep(cfg.trials, cfg.seed)),
        "lemma6_gradient_lipschitz": ("lemma6_lipschitz.csv", lemma6_lipschitz_sweep(cfg.pairs, cfg.seed)),
        "product_rule": ("product_rule.csv", _product_rule_rows(cfg.trials, cfg.seed)),
    }
    for name, (csv_name, rows) in sweeps.items():
        result.tables[csv_name] = (SWEEP_HEADER, [r.as_tuple() for r in rows])
        result.metrics[f"{name}_violations"] = sum(r.violated for r in rows)
        result.verdicts.append(_sweep_verdict(name, rows))
    _time_verdict(result, cfg, time.perf_counter() - start)
    return result


# -- indicator and perturbation robustness -------------------------------------------

def _random_box(rng: np.random.Generator, d: int, n: float, robust: bool) -> RectangleSpec:
    delta = float(rng.uniform(0.02, 0.1))
    width = rng.uniform(2 * delta, 1.0, d)
    a = rng.uniform(-1, 1 - width)
    return RectangleSpec(a=a, b=a + width, delta=delta, n=n, robust=robust)


def _probes(rng: np.random.Generator, spec: RectangleSpec, count: int) -> np.ndarray:
    """A quarter inside the shrunk box, a quarter around its boundary, the rest uniform."""
    d = spec.d
    q = count // 4
    inner = rng.uniform(spec.a + spec.delta, spec.b - spec.delta, (q, d))
    near = rng.uniform(spec.a - 2 * spec.delta, spec.b + 2 * spec.delta, (q, d))
    rest = rng.uniform(-1, 1, (count - 2 * q, d))
    return np.clip(np.vstack([inner, near, rest]), -1, 1)


def _trial_shape(rng: np.random.Generator, cfg: ExperimentConfig) -> tuple[int, int, int]:
    # dimension and depth vary per trial; spare neurons beyond 2d are kept
    d = int(rng.integers(1, cfg.d + 1))
    L = int(rng.integers(2, cfg.L + 1))
    return d, 2 * d + (cfg.k0 - 2 * cfg.d), L


def run_indicator(cfg: ExperimentConfig) -> ExperimentResult:
    result = ExperimentResult()
    start = time.perf_counter()
    n = cfg.saturation
    eps = math.exp(-n)
    rows = []
    first: tuple[IndicatorWeights, RectangleSpec, np.ndarray] | None = None
    for r in range(cfg.rectangles):
        rng = seeding.derive_rng(cfg.seed, seeding.PROBE, r)
        d, k0, L = _trial_shape(rng, cfg)
        spec = _random_box(rng, d, n, robust=False)
        w = build_indicator(Architecture(d, k0, L, 1), spec)
        probes = _probes(rng, spec, cfg.probes)
        rep = verify_indicator(w, spec, probes)
        inside, outside = rep.values[rep.classes == 1], rep.values[rep.classes == -1]
        hyp = all(c.holds for c in check_hypotheses(w, spec))
        rows.append((r, d, k0, L, spec.delta, int(hyp), int(inside.size), int(outside.size),
                     float(inside.min()) if inside.size else 1.0,
                     float(outside.max()) if outside.size else 0.0, rep.n_violations))
        if first is None:
            first = (w, spec, probes)
    result.tables["indicator.csv"] = (
        ["rectangle", "d", "k0", "L", "delta", "hypotheses_hold", "inside", "outside",
         "min_inside", "max_outside", "violations"], rows)
    total = sum(r[-1] for r in rows)
    result.metrics.update(rectangles=len(rows), indicator_violations=total,
                          min_inside=min(r[8] for r in rows), max_outside=max(r[9] for r in rows))
    result.verdicts.append(check(
        "indicator_bounds", total == 0 and all(r[5] for r in rows),
        f"{total} violations over {len(rows)} rectangles x {cfg.probes} probes; "
        f"min inside {result.metrics['min_inside']:.6f} (need >= {1 - eps:.6f}), "
        f"max outside {result.metrics['max_outside']:.3g} (need <= {eps:.3g})"))

    # negative control: flip the last unit so it fires outside the box
    w, spec, probes = first
    bad = w.copy()
    bad.levels[-1] = -bad.levels[-1]
    rep = verify_indicator(bad, spec, probes)
    failing = [c.label for c in check_hypotheses(bad, spec) if not c.holds]
    result.metrics["negative_control_violations"] = rep.n_violations
    result.verdicts.append(check(
        "negative_control_detected", rep.n_violations > 0 and bool(failing),
        f"corrupted weights: {rep.n_violations} probe violations, failing conditions {failing}"))

    prow = []
    for t in range(cfg.perturbations):
        rng = seeding.derive_rng(cfg.seed, seeding.PERTURB, t)
        d, k0, L = _trial_shape(rng, cfg)
        spec = _random_box(rng, d, n, robust=True)
        w = build_indicator(Architecture(d, k0, L, 1), spec)
        radius = perturbation_radius(d, k0)
        moved = perturb(perturb(w, radius, rng), radius, rng)
        conds = check_hypotheses(moved, spec, robust=False)
        rep = verify_indicator(moved, spec, _probes(rng, spec, 1000))
        prow.append((t, d, k0, L, radius, float(np.max(np.abs(moved.flat() - w.flat()))),
                     int(all(c.holds for c in conds)), min(c.worst for c in conds), rep.n_violations))
    result.tables["perturbation.csv"] = (
        ["trial", "d", "k0", "L", "radius", "total_move", "hypotheses_hold", "min_slack", "violations"], prow)
    pv = sum(r[-1] for r in prow)
    hyp_fail = sum(1 - r[6] for r in prow)
    result.metrics.update(perturbation_trials=len(prow), perturbation_violations=pv, perturbation_hypothesis_failures=hyp_fail)
    result.verdicts.append(check(
        "perturbation_robustness", pv == 0 and hyp_fail == 0,
        f"{len(prow)} double perturbations: {pv} probe violations, {hyp_fail} hypothesis failures"))
    _time_verdict(result, cfg, time.perf_counter() - start)
    return result


# -- planted-init training ------------------------------------------------------------

def make_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.generator == "file":
        return load_dataset_csv(cfg.file)
    if cfg.generator == "adversarial":
        return sample(AdversarialDistribution(cfg.n, cfg.d), cfg.seed)
    rng = seeding.derive_rng(cfg.seed, seeding.DATA)
    xs = np.zeros((cfg.n, cfg.d))
    xs[:, 0] = np.arange(1, cfg.n + 1) / cfg.n
    return Dataset(xs, rng.choice(np.array([-1.0, 1.0]), size=cfg.n))


def resolve_step(rule: str | float, w0: WeightVector, data: Dataset, seed: int) -> tuple[float, str]:
    if rule == "lemma6":
        c = lemma6_for_run(w0, data)
        return math.exp(-c.log_Ln), f"1/L_n from the smoothness bound (log10 L_n = {c.log_Ln / math.log(10):.2f})"
    if rule == "empirical":
        top = empirical_smoothness(w0, data, seed=seed)
        return 1.0 / top, f"1/(largest Hessian eigenvalue at init = {top:.4g})"
    return float(rule), "fixed"


@dataclass
class PlantedRun:
    data: Dataset
    w0: WeightVector
    lam: float
    lam_source: str
    run: Any
    trace: list[Row]
    gap: float
    optimum: float


def planted_run(cfg: ExperimentConfig, step_rule: str | float | None = None) -> PlantedRun:
    data = make_dataset(cfg)
    n = data.n
    distinct = len(np.unique(data.xs, axis=0))
    arch = Architecture(data.d, cfg.k0, cfg.L, cfg.kn or distinct)
    w0 = initialize(arch, InitSpec(bound=float(n) ** 4, seed=cfg.seed, mode="planted", saturation=cfg.saturation), data)
    lam, source = resolve_step(cfg.step_rule if step_rule is None else step_rule, w0, data, cfg.seed)
    trace: list[Row] = []

    def observe(t: int, w: WeightVector, risk: float, grad: np.ndarray) -> None:
        cond = check_indicator_condition(w, data)
        row: list[Any] = [t, risk, float(np.linalg.norm(grad)), w.sup_norm(), int(cond.holds)]
        if cond.holds and n >= 5:
            rep = lemma2_lower_bound_check(w, data)
            row += [rep.grad_sq, rep.rhs, rep.margin, int(rep.holds)]
        else:
            row += ["", "", "", ""]
        trace.append(tuple(row))

    run = train(w0, data, lam, cfg.steps, observer=observe)
    gap = interpolation_gap(predict(run.final, data.xs), data)
    return PlantedRun(data, w0, lam, source, run, trace, gap, interpolation_optimum(data))


TRACE_HEADER = ["step", "risk", "grad_norm", "max_abs_weight", "indicator_condition",
                "grad_sq", "gap_over_n", "lemma2_margin", "lemma2_holds"]


def run_planted_train(cfg: ExperimentConfig) -> ExperimentResult:
    result = ExperimentResult()
    start = time.perf_counter()
    pr = planted_run(cfg)
    elapsed = time.perf_counter() - start
    data, run = pr.data, pr.run
    n = data.n
    result.tables["trace.csv"] = (TRACE_HEADER, pr.trace)
    checked = [r for r in pr.trace if r[5] != ""]
    l2_bad = [r[0] for r in checked if not r[8]]
    c = lemma6_for_run(pr.w0, data)
    gap0 = float(run.risks[0] - pr.optimum)
    result.metrics.update(
        n=n, kn=pr.w0.arch.kn, weights=pr.w0.arch.n_weights, max_abs_init=pr.w0.sup_norm(),
        step_size=pr.lam, step_size_source=pr.lam_source, log10_Ln=c.log_Ln / math.log(10),
        risk_initial=float(run.risks[0]), risk_final=float(run.risks[-1]), optimum=pr.optimum,
        final_gap=pr.gap, monotone_violations=len(run.monotone_violations),
        lemma2_steps_checked=len(checked), lemma2_violations=len(l2_bad),
        log10_steps_needed_at_bound=lemma3_steps_needed(gap0, cfg.kappa, n, c.log_Ln) if gap0 > cfg.kappa else 0.0,
    )
    result.verdicts.append(check(
        "risk_monotone", not run.monotone_violations,
        f"{len(run.monotone_violations)} increases over {run.steps} steps"
        + (f", first at step {run.monotone_violations[0]}" if run.monotone_violations else "")))
    if n >= 5:
        result.verdicts.append(check(
            "lemma2_gradient_bound", not l2_bad,
            f"checked at {len(checked)}/{run.steps + 1} steps where the indicator condition holds; "
            f"{len(l2_bad)} violations" + (f", first at step {l2_bad[0]}" if l2_bad else "")))
    result.verdicts.append(check(
        "final_risk", run.risks[-1] <= pr.optimum + cfg.kappa,
        f"F_n = {run.risks[-1]:.6g} vs optimum + kappa = {pr.optimum + cfg.kappa:.6g} (step size {pr.lam:.3g})"))

    header = ["sample", "x", "y", "prediction", "conditional_mean", "deviation", "bound"]
    if pr.gap <= cfg.kappa:
        rep = lemma9_check(lambda xs: predict(run.final, xs), data, cfg.kappa)
        preds = predict(run.final, data.xs)
        mbar = conditional_mean_at_samples(data)
        rows = [(i, float(data.xs[i, 0]), float(data.ys[i]), float(preds[i]), float(mbar[i]),
                 float(rep.deviations[i]), rep.bound) for i in range(n)]
        result.tables["lemma9.csv"] = (header, rows)
        result.metrics["lemma9_max_deviation"] = float(rep.deviations.max())
        result.verdicts.append(check(
            "lemma9_closeness", rep.holds,
            f"max |f - mbar| = {rep.deviations.max():.3g} <= sqrt(n kappa) = {rep.bound:.3g}"))
    else:
        result.tables["lemma9.csv"] = (header, [])
        result.verdicts.append(check(
            "lemma9_closeness", False,
            f"precondition fails: interpolation gap {pr.gap:.3g} > kappa = {cfg.kappa:g}"))
    result.notes.append(f"final weights written to weights.txt ({pr.w0.arch.n_weights} values)")
    result.weights = run.final
    _time_verdict(result, cfg, elapsed)
    return result


# -- schedule -------------------------------------------------------------------------

def run_schedule(cfg: ExperimentConfig) -> ExperimentResult:
    result = ExperimentResult()
    arch = Architecture(cfg.d, cfg.k0, cfg.L, 1)
    s = theoretical_schedule(arch, cfg.n)
    log10 = math.log(10)
    rows = [
        ("k_n", 1, s.kn_exponent, s.log_kn / log10),
        ("lambda_n", 1, s.lambda_exponent, s.log_lambda_n / log10),
        ("t_n", 2, s.tn_exponent, s.log_tn / log10),
        ("L_n", 1, s.Ln_exponent, s.log_Ln / log10),
    ]
    result.tables["schedule.csv"] = (["quantity", "coefficient", "exponent_of_n", "log10_value"], rows)
    result.metrics.update(kn_exponent=s.kn_exponent, lambda_exponent=s.lambda_exponent,
                          tn_exponent=s.tn_exponent, Ln_exponent=s.Ln_exponent)
    coef, exp = s.tn_lambda()
    result.verdicts.append(check("tn_times_lambda", (coef, exp) == (2, 2), f"t_n * lambda_n = {coef} n^{exp}"))
    coef, exp = s.contraction_exponent()
    result.verdicts.append(check("tn_over_2nLn", (coef, exp) == (1, 1), f"t_n / (2 n L_n) = {coef} n^{exp}"))
    result.notes.append(
        f"exponents (k_n, lambda_n, t_n = 2 n^e, L_n) = "
        f"({s.kn_exponent}, {s.lambda_exponent}, {s.tn_exponent}, {s.Ln_exponent})")
    return result


# -- Monte Carlo lower bound ----------------------------------------------------------

def _estimator(cfg: ExperimentConfig, n: int):
    if cfg.estimator == "conditional-mean":
        return ConditionalMeanInterpolator()
    if cfg.estimator == "zero":
        return ZeroEstimator()
    return PlantedNetworkEstimator(k0=cfg.k0, L=cfg.L, kn=cfg.kn, steps=cfg.steps,
                                   lam=cfg.step_rule, kappa_target=1 / (n * math.log(n)))


def run_lower_bound(cfg: ExperimentConfig, corollary: bool = False) -> ExperimentResult:
    result = ExperimentResult()
    start = time.perf_counter()
    n = cfg.n
    dist = AdversarialDistribution(n, cfg.d)
    report = mc_lower_bound_experiment(dist, _estimator(cfg, n), cfg.replications, cfg.seed)
    elapsed = time.perf_counter() - start
    result.tables["replications.csv"] = (
        ["replication", "risk", "kappa_attained", "success"], [r.as_tuple() for r in report.rows])
    summary = report.summary()
    result.tables["risk_summary.csv"] = (["key", "value"], [(k, "" if v is None else v) for k, v in summary.items()])
    result.metrics.update({f"risk_{k}" if k in ("mean", "stderr") else k: v for k, v in summary.items()})

    mean, se, exact = report.mean_risk, report.stderr, report.exact_reference
    if not corollary:
        ns = sorted(set(range(10, max(cfg.binomial_max, 10) + 1)) | {n})
        brows, broken = [], []
        for m in ns:
            b = binomial_identity(m)
            brows.append((m, b.exact, b.closed_form, b.intermediate, b.final, int(b.chain_ok)))
            if m >= 10 and not b.chain_ok:
                broken.append(m)
        result.tables["binomial.csv"] = (["n", "exact", "closed_form", "intermediate", "final", "chain_ok"], brows)
        result.verdicts.append(check(
            "binomial_chain", not broken,
            f"exact >= intermediate >= final for n in 10..{ns[-1]}" + (f"; broken at {broken[:5]}" if broken else "")))
        b10 = binomial_identity(10).exact
        result.metrics["binomial_exact_n10"] = b10
        result.verdicts.append(check("binomial_n10", abs(b10 - 0.5065) <= 5e-4, f"exact sum at n=10 is {b10:.10f}"))
        if se is None:
            result.verdicts.append(Verdict("mc_matches_exact", "skip", "single replication, no standard error"))
        else:
            result.verdicts.append(check(
                "mc_matches_exact", abs(mean - exact) <= 3 * se,
                f"mean {mean:.5f} vs exact {exact:.5f}: {abs(mean - exact) / se if se else math.inf:.2f} standard errors"))
    result.verdicts.append(check("mean_risk_above_fifth", mean >= 0.2, f"mean risk {mean:.5f}"))
    threshold = 1 / (n * math.log(n)) if n > 1 else 0.0
    bound = report.paper_bound
    detail = (f"1/5 - n*kappa_hat - P(failure)/2 = {bound:.5f} with kappa_hat = {report.kappa_hat:.3g}, "
              f"failure rate {report.failure_rate:.3g}")
    if report.kappa_hat <= threshold:
        result.verdicts.append(check("composed_bound_above_sixth", bound >= 1 / 6, detail))
    elif corollary:
        result.verdicts.append(check("composed_bound_above_sixth", False, detail + f" (kappa_hat > 1/(n log n) = {threshold:.3g})"))
    else:
        result.verdicts.append(Verdict("composed_bound_above_sixth", "skip",
                                       detail + f"; not a near-interpolator (kappa_hat > {threshold:.3g})"))
    _time_verdict(result, cfg, elapsed)
    return result


EXPERIMENTS: dict[str, Callable[[ExperimentConfig], ExperimentResult]] = {
    "gradcheck": run_gradcheck,
    "bounds-sweep": run_bounds_sweep,
    "indicator": run_indicator,
    "planted-train": run_planted_train,
    "schedule": run_schedule,
    "lower-bound": run_lower_bound,
    "corollary": lambda cfg: run_lower_bound(cfg, corollary=True),
}
