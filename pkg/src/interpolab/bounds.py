"""Computable constants and empirical checkers for the convergence argument.

Constants that overflow a double are carried as natural logarithms; the
linear value is ``None`` whenever it would not fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import seeding
from .core_net import Architecture, WeightVector, forward_batch
from .risk import (
    Dataset,
    analytic_gradient,
    conditional_mean_at_samples,
    empirical_risk,
    interpolation_gap,
    interpolation_optimum,
    risk_and_gradient,
)

_LOG_DOUBLE_MAX = 709.0


def _linear(log_value: float) -> float | None:
    return math.exp(log_value) if log_value < _LOG_DOUBLE_MAX else None


@dataclass(frozen=True)
class SmoothnessConstants:
    arch: Architecture
    n: float
    c3: float
    c4: float
    log_Ln: float
    log_Lbar_n: float

    @property
    def log_scale(self) -> float:
        """log(c3 * n**c4), the common norm ceiling."""
        return math.log(self.c3) + self.c4 * math.log(self.n)

    @property
    def Ln(self) -> float | None:
        return _linear(self.log_Ln)

    @property
    def Lbar_n(self) -> float | None:
        return _linear(self.log_Lbar_n)

    @property
    def log_grad_sup_bound(self) -> float:
        return self.log_Ln + self.log_scale

    @property
    def grad_sup_bound(self) -> float | None:
        """L_n * c3 * n**c4, the ceiling on the gradient sup-norm."""
        return _linear(self.log_grad_sup_bound)

    def describe(self, name: str) -> str:
        value = getattr(self, name)
        log_value = getattr(self, f"log_{name}")
        return f"{value!r}" if value is not None else f"overflow, log value provided: {log_value!r}"


def lemma6_constant(arch: Architecture, n: float, c3: float = 1.0, c4: float = 1.0) -> SmoothnessConstants:
    """Gradient smoothness constant L_n and the per-partial constant Lbar_n."""
    if c3 < 1 or c4 < 1:
        raise ValueError(f"c3 and c4 must be >= 1, got c3={c3}, c4={c4}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    L, k0, d, kn = arch.L, arch.k0, arch.d, arch.kn
    log_s = math.log(c3) + c4 * math.log(n)
    log_Ln = (
        math.log(45 * L)
        + L * math.log(3)
        + 1.5 * math.log(max(k0, L, d))
        + 2 * L * math.log(k0)
        + 1.5 * math.log(kn)
        + (4 * L + 1) * log_s
    )
    log_Lbar = math.log(4 * L) + L * math.log(3) + (2 * L - 2) * math.log(k0) + 4 * L * log_s
    return SmoothnessConstants(arch, n, c3, c4, log_Ln, log_Lbar)


def norm_scale(w: WeightVector, data: Dataset, headroom: float = 1.0) -> float:
    """Smallest admissible c3 * n**c4 covering the weights, inputs and responses."""
    return max(
        headroom * w.sup_norm(),
        float(np.max(np.abs(data.xs))),
        float(np.max(np.abs(data.ys))),
        float(data.n),
        1.0,
    )


def lemma6_for_run(w: WeightVector, data: Dataset, headroom: float = 3.0) -> SmoothnessConstants:
    """L_n at the norms of a run started from ``w``.

    Uses c4 = 1 and c3 = scale / n, so c3 * n**c4 equals the norm scale.  The
    default headroom of 3 covers the iterate ceiling that the smoothness bound
    has to hold on.
    """
    scale = norm_scale(w, data, headroom)
    n = max(data.n, 1)
    return lemma6_constant(w.arch, n, c3=scale / n, c4=1.0)


def lemma6_step_size(w: WeightVector, data: Dataset, headroom: float = 3.0) -> float:
    consts = lemma6_for_run(w, data, headroom)
    return math.exp(-consts.log_Ln)


# -- Lipschitz continuity in the weights -------------------------------

def lemma5_bound(w: WeightVector, w_bar: WeightVector, x) -> float:
    """Ceiling on |f_w(x) - f_wbar(x)| in terms of the sup-norm weight distance."""
    if w.arch != w_bar.arch:
        raise ValueError("weight vectors have different architectures")
    a = w.arch
    m = max(w.sup_norm(), float(np.max(np.abs(x))), 1.0)
    diff = float(np.max(np.abs(w.values - w_bar.values)))
    return (2 * a.kn + 1) * (2 * a.k0 + 1) ** a.L * m ** (a.L + 1) * diff


def lemma5a_bound(w: WeightVector, w_bar: WeightVector, x, k: int) -> float:
    """Ceiling on |f_{k,k}^{(L)}(x) - fbar_{k,k}^{(L)}(x)| for one subnetwork."""
    a = w.arch
    m = max(w.sup_norm(), float(np.max(np.abs(x))), 1.0)
    idx = a.subnetwork_indices(k)
    diff = float(np.max(np.abs(w.values[idx] - w_bar.values[idx])))
    return (2 * a.k0 + 1) ** a.L * m ** a.L * diff


@dataclass
class SweepRow:
    trial: int
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def violated(self) -> bool:
        return self.lhs > self.rhs

    def as_tuple(self) -> tuple[int, float, float, float, int]:
        return (self.trial, self.lhs, self.rhs, self.margin, int(self.violated))


def random_architecture(
    rng: np.random.Generator, max_d: int = 3, max_k0: int = 4, max_L: int = 4, max_kn: int = 8,
    require_lemma5: bool = True,
) -> Architecture:
    while True:
        arch = Architecture(
            int(rng.integers(1, max_d + 1)),
            int(rng.integers(1, max_k0 + 1)),
            int(rng.integers(2, max_L + 1)),
            int(rng.integers(1, max_kn + 1)),
        )
        if not require_lemma5 or arch.lemma5_ok:
            return arch


def lemma5_sweep(trials: int, seed: int) -> list[SweepRow]:
    rows = []
    for t in range(trials):
        rng = seeding.derive_rng(seed, seeding.SWEEP, 5, t)
        arch = random_architecture(rng)
        scale = rng.uniform(0.5, 3.0)
        w = WeightVector(arch, rng.uniform(-scale, scale, arch.n_weights))
        eps = 10 ** rng.uniform(-6, 0)
        w_bar = WeightVector(arch, w.values + eps * rng.uniform(-1, 1, arch.n_weights))
        x = rng.uniform(-2, 2, arch.d)
        lhs = abs(float(forward_batch(arch, w.values, x).output[0] - forward_batch(arch, w_bar.values, x).output[0]))
        rows.append(SweepRow(t, lhs, lemma5_bound(w, w_bar, x)))
    return rows


# -- gradient sup-norm and gradient Lipschitz bounds -----------------

def _lemma6_instance(rng: np.random.Generator):
    arch = random_architecture(rng)
    n_samples = int(rng.integers(1, 8))
    c3 = float(rng.uniform(1.0, 1.5))
    c4 = 1.0
    n = float(n_samples)
    scale = c3 * n ** c4
    # rejection-free: draw in [-1, 1] and scale into the admissible ball
    data = Dataset(scale * rng.uniform(-1, 1, (n_samples, arch.d)), scale * rng.uniform(-1, 1, n_samples))
    return arch, data, n, c3, c4, scale


def lemma6_sup_sweep(trials: int, seed: int) -> list[SweepRow]:
    rows = []
    for t in range(trials):
        rng = seeding.derive_rng(seed, seeding.SWEEP, 61, t)
        arch, data, n, c3, c4, scale = _lemma6_instance(rng)
        w = WeightVector(arch, scale * rng.uniform(-1, 1, arch.n_weights))
        g = analytic_gradient(w, data)
        consts = lemma6_constant(arch, n, c3, c4)
        rows.append(SweepRow(t, float(np.max(np.abs(g))), float(consts.grad_sup_bound)))
    return rows


def lemma6_lipschitz_sweep(trials: int, seed: int) -> list[SweepRow]:
    rows = []
    for t in range(trials):
        rng = seeding.derive_rng(seed, seeding.SWEEP, 62, t)
        arch, data, n, c3, c4, scale = _lemma6_instance(rng)
        w1 = scale * rng.uniform(-1, 1, arch.n_weights)
        # nearby and far-apart pairs, both kept inside the ball
        mix = 10 ** rng.uniform(-6, 0)
        w2 = np.clip(w1 + mix * scale * rng.uniform(-1, 1, arch.n_weights), -scale, scale)
        g1 = analytic_gradient(WeightVector(arch, w1), data)
        g2 = analytic_gradient(WeightVector(arch, w2), data)
        consts = lemma6_constant(arch, n, c3, c4)
        rows.append(SweepRow(t, float(np.linalg.norm(g1 - g2)), float(consts.Ln) * float(np.linalg.norm(w1 - w2))))
    return rows


def product_lipschitz_bound(lipschitz: Sequence[float], sups: Sequence[float]) -> tuple[float, float]:
    """Lipschitz constant of a product of functions: exact sum form and its relaxation."""
    s = len(lipschitz)
    exact = 0.0
    for l in range(s):
        others = [sups[k] for k in range(s) if k != l]
        exact += lipschitz[l] * float(np.prod(others)) if others else lipschitz[l]
    relaxed = s * max(lipschitz) * max(sups) ** (s - 1)
    return exact, relaxed


# -- indicator condition and the gradient lower bound -------------------------

@dataclass
class IndicatorConditionReport:
    holds: bool
    assignment: np.ndarray | None
    own: np.ndarray  # f_{j_i}(X_i)
    others: np.ndarray  # sup over X_t != X_i of f_{j_i}(X_t)
    upper: float  # 2 / n**2

    @property
    def failing(self) -> np.ndarray:
        return np.flatnonzero((self.own < 1 - self.upper) | (self.others > self.upper))


def _indicator_matrix(w: WeightVector, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    last = forward_batch(w.arch, w.values, data.xs).last  # (n, kn)
    keys = np.ascontiguousarray(data.xs + 0.0).view(np.uint64)
    same = np.all(keys[:, None, :] == keys[None, :, :], axis=2)
    return last, same


def check_indicator_condition(
    w: WeightVector, data: Dataset, assignment=None, n: float | None = None
) -> IndicatorConditionReport:
    """Every sample has a subnetwork near 1 on it and near 0 on all other inputs.

    ``assignment`` maps sample index to subnetwork (array) or point bytes to
    subnetwork (dict).  Without it the best subnetwork is searched per sample.
    """
    n = data.n if n is None else n
    upper = 2.0 / n ** 2
    last, same = _indicator_matrix(w, data)
    # off[i, k]: largest value of subnetwork k at samples whose input differs from X_i
    masked = np.where(same[:, :, None], -np.inf, last[None, :, :])
    off = masked.max(axis=1)
    off = np.where(np.isfinite(off), off, 0.0)

    if assignment is None:
        score = np.minimum(last - (1 - upper), upper - off)
        chosen = np.argmax(score, axis=1)
    elif isinstance(assignment, dict):
        chosen = np.array([assignment[(x + 0.0).tobytes()] for x in data.xs], dtype=int)
    else:
        chosen = np.asarray(assignment, dtype=int)
    rows = np.arange(data.n)
    own = last[rows, chosen]
    others = off[rows, chosen]
    holds = bool(np.all(own >= 1 - upper) and np.all(others <= upper))
    return IndicatorConditionReport(holds, chosen, own, others, upper)


@dataclass
class GradientLowerBoundReport:
    grad_sq: float
    gap: float
    n: float

    @property
    def rhs(self) -> float:
        return self.gap / self.n

    @property
    def margin(self) -> float:
        return self.grad_sq - self.rhs

    @property
    def holds(self) -> bool:
        return self.grad_sq >= self.rhs


def lemma2_lower_bound_check(w: WeightVector, data: Dataset, n: float | None = None, assignment=None) -> GradientLowerBoundReport:
    """Compare ||grad F_n||^2 with (F_n - optimum) / n under the indicator condition."""
    n = data.n if n is None else n
    if n < 5:
        raise ValueError("the gradient lower bound is stated for n >= 5")
    cond = check_indicator_condition(w, data, assignment, n)
    if not cond.holds:
        raise ValueError(f"indicator condition fails at samples {cond.failing.tolist()}")
    g = analytic_gradient(w, data)
    preds = forward_batch(w.arch, w.values, data.xs).output
    return GradientLowerBoundReport(grad_sq=float(g @ g), gap=interpolation_gap(preds, data), n=n)


def lemma2_constant(n: float) -> float:
    """2/n - 8/n^3 + 8/n^5 - 16/n^3, which must dominate 1/n for n >= 5."""
    return 2 / n - 8 / n ** 3 + 8 / n ** 5 - 16 / n ** 3


# -- geometric contraction ------------------------------------------

@dataclass(frozen=True)
class ContractionPrediction:
    geometric: float
    exponential: float


def lemma3_contraction_predict(F0: float, optimum: float, n: float, Ln: float, t: float) -> ContractionPrediction:
    if not Ln > 0 or t < 0:
        raise ValueError("need Ln > 0 and t >= 0")
    gap = F0 - optimum
    rate = 1.0 / (2.0 * n * Ln)
    geometric = math.exp(t * math.log1p(-rate)) * gap if rate < 1 else (gap if t == 0 else 0.0)
    return ContractionPrediction(geometric, math.exp(-t * rate) * gap)


def lemma3_steps_needed(gap0: float, target: float, n: float, log_Ln: float) -> float:
    """Log10 of the number of steps the contraction needs to bring gap0 to target."""
    if target >= gap0:
        return -math.inf
    return (math.log(2 * n) + log_Ln + math.log(math.log(gap0 / target))) / math.log(10)


# -- saturated subnetworks have tiny inner gradients -----------------

@dataclass
class SaturationReport:
    bound: float
    max_partial: float
    saturation: float

    @property
    def holds(self) -> bool:
        return self.max_partial <= self.bound


def lemma8_saturation_bound(
    w: WeightVector, data: Dataset, k: int, n: float, c3: float = 1.0, c4: float = 1.0
) -> SaturationReport:
    a = w.arch
    scale = c3 * n ** c4
    last = forward_batch(a, w.values, data.xs).last[:, k]
    saturation = float(np.max(last * (1 - last)))
    if saturation > math.exp(-n):
        raise ValueError(f"subnetwork {k} is not saturated: max f(1-f) = {saturation:.3g} > e^-n")
    if w.sup_norm() > scale or np.max(np.abs(data.xs)) > scale or np.max(np.abs(data.ys)) > scale:
        raise ValueError("norm preconditions fail: weights, inputs or responses exceed c3*n**c4")
    risk = empirical_risk(w, data)
    bound = 2 * math.sqrt(risk) * a.k0 ** a.L * scale ** (a.L + 1) * math.exp(-n)
    g = analytic_gradient(w, data)
    inner = np.abs(g[a.subnetwork_indices(k)])
    return SaturationReport(bound=bound, max_partial=float(inner.max()), saturation=saturation)


# -- local curvature ------------------------------------------------------------

def empirical_smoothness(w: WeightVector, data: Dataset, iters: int = 50, seed: int = 0, eps: float = 1e-5) -> float:
    """Largest |eigenvalue| of the Hessian of F_n at w, by power iteration.

    Hessian-vector products are central differences of the analytic gradient.
    """
    rng = seeding.derive_rng(seed, seeding.SWEEP, 99)
    v = rng.standard_normal(w.arch.n_weights)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        hv = (
            analytic_gradient(w.replace(w.values + eps * v), data)
            - analytic_gradient(w.replace(w.values - eps * v), data)
        ) / (2 * eps)
        norm = float(np.linalg.norm(hv))
        if norm == 0:
            return 0.0
        lam = norm
        v = hv / norm
    return lam


__all__ = [
    "SmoothnessConstants",
    "lemma6_constant",
    "lemma6_for_run",
    "lemma6_step_size",
    "lemma5_bound",
    "lemma5a_bound",
    "lemma5_sweep",
    "lemma6_sup_sweep",
    "lemma6_lipschitz_sweep",
    "product_lipschitz_bound",
    "check_indicator_condition",
    "lemma2_lower_bound_check",
    "lemma2_constant",
    "lemma3_contraction_predict",
    "lemma3_steps_needed",
    "lemma8_saturation_bound",
    "empirical_smoothness",
    "norm_scale",
    "interpolation_optimum",
    "conditional_mean_at_samples",
    "risk_and_gradient",
]
