"""Indicator subnetworks: weights whose last unit is ~1 on a box and ~0 off it.

A subnetwork built here outputs at least ``1 - exp(-n)`` on the shrunk box
``[a + delta, b - delta]`` and at most ``exp(-n)`` outside the expanded box
``[a - delta, b + delta]``, for inputs in ``[-1, 1]^d``.

Neuron roles inside the subnetwork (1-based in the comments, 0-based in code):

* first layer, neuron ``k <= d``: fires when ``x_k < a_k``
* first layer, neuron ``d + k``:  fires when ``x_k > b_k``
* middle layers: neurons ``1..2d`` copy their own previous value (sharpened)
* last unit: fires when none of the ``2d`` detectors fire

The robust variant doubles every slope and halves every tolerance, so that
the weights can be moved twice by less than :func:`perturbation_radius` and
still satisfy the plain hypotheses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core_net import Architecture, WeightVector, forward_batch, unpack


@dataclass(frozen=True, eq=False)
class RectangleSpec:
    a: np.ndarray
    b: np.ndarray
    delta: float
    n: float
    robust: bool = False

    def __post_init__(self) -> None:
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("corners a and b must be vectors of the same length")
        if not self.delta > 0:
            raise ValueError(f"margin delta must be positive, got {self.delta}")
        if self.n < 0:
            raise ValueError(f"saturation parameter n must be >= 0, got {self.n}")
        if np.any(b - a < 2 * self.delta):
            raise ValueError(f"degenerate rectangle: need b - a >= 2*delta, got a={a}, b={b}, delta={self.delta}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return self.a.shape[0]

    def classify(self, x: np.ndarray) -> np.ndarray:
        """1 = inside the shrunk box, -1 = outside the expanded box, 0 = margin."""
        x = np.atleast_2d(x)
        inside = np.all((x >= self.a + self.delta) & (x <= self.b - self.delta), axis=1)
        in_outer = np.all((x >= self.a - self.delta) & (x <= self.b + self.delta), axis=1)
        return np.where(inside, 1, np.where(in_outer, 0, -1))


@dataclass(eq=False)
class IndicatorWeights:
    """Weights of a single subnetwork (levels 0..L-1) in the core-net layout."""

    arch: Architecture  # kn == 1
    levels: list[np.ndarray] = field(repr=False)

    @classmethod
    def from_flat(cls, arch: Architecture, flat: np.ndarray) -> "IndicatorWeights":
        one = _single(arch)
        full = np.concatenate([np.asarray(flat, dtype=float), np.zeros(one.kn + 1)])
        return cls(one, [lv[0].copy() for lv in unpack(one, full)[:-1]])

    def flat(self) -> np.ndarray:
        return np.concatenate([lv.ravel() for lv in self.levels])

    def copy(self) -> "IndicatorWeights":
        return IndicatorWeights(self.arch, [lv.copy() for lv in self.levels])

    def as_network(self) -> WeightVector:
        """kn = 1 network whose output is exactly the last hidden unit."""
        return WeightVector(self.arch, np.concatenate([self.flat(), [0.0, 1.0]]))

    def evaluate(self, xs) -> np.ndarray:
        values = np.concatenate([self.flat(), [0.0, 1.0]])
        return forward_batch(self.arch, values, xs).last[:, 0]

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.flat())))


def _single(arch: Architecture) -> Architecture:
    return Architecture(arch.d, arch.k0, arch.L, 1)


def _log_term(d: int) -> float:
    return math.log(8 * d - 1)


def build_indicator(arch: Architecture, spec: RectangleSpec) -> IndicatorWeights:
    """Canonical indicator weights: every bias at the centre of its allowed interval."""
    if arch.kn != 1:
        raise ValueError("build_indicator expects an architecture with kn == 1")
    d, k0, L = arch.d, arch.k0, arch.L
    if spec.d != d:
        raise ValueError(f"rectangle dimension {spec.d} does not match arch.d={d}")
    if k0 < 2 * d:
        raise ValueError(f"indicator construction needs k0 >= 2d, got k0={k0}, d={d}")
    lg = _log_term(d)
    scale = 2.0 if spec.robust else 1.0
    n = spec.n

    w0 = np.zeros((k0, d + 1))
    slope = scale * (2.0 / spec.delta) * lg
    for k in range(d):
        w0[k, k + 1] = -slope
        w0[k, 0] = spec.a[k] * slope
        w0[d + k, k + 1] = slope
        w0[d + k, 0] = -spec.b[k] * slope
    levels = [w0]

    for _ in range(1, L - 1):
        w = np.zeros((k0, k0 + 1))
        for k in range(2 * d):
            w[k, k + 1] = scale * 8.0 * lg
            w[k, 0] = -0.5 * w[k, k + 1]
        levels.append(w)

    last = np.zeros(k0 + 1)
    last[1:2 * d + 1] = -scale * 4.0 * (n + 1)
    last[0] = -0.5 * last[1]
    levels.append(last)
    return IndicatorWeights(arch, levels)


@dataclass
class Condition:
    label: str
    holds: bool
    worst: float  # signed slack of the tightest instance; negative means violated


def check_hypotheses(w: IndicatorWeights, spec: RectangleSpec, robust: bool | None = None) -> list[Condition]:
    """Evaluate every weight condition of the indicator lemma as a predicate.

    ``robust=True`` checks the tightened list (doubled slopes, halved
    tolerances).  The pass-through condition on the last unit is enforced
    for sources 2..2d, the range the indicator argument actually sums over.
    """
    robust = spec.robust if robust is None else robust
    d, k0, L = w.arch.d, w.arch.k0, w.arch.L
    lg = _log_term(d)
    n = spec.n
    scale = 2.0 if robust else 1.0
    levels = w.levels
    last = levels[-1]
    conds: list[Condition] = []

    def add(label: str, slacks: list[float]) -> None:
        worst = min(slacks) if slacks else math.inf
        conds.append(Condition(label, worst >= 0, worst))

    c11 = last[1]
    add("le7eq1", [-scale * 4 * (n + 1) - c11])
    add("le7eq2", [1 / (2 * k0 * scale) - abs(last[j] - c11) for j in range(2, 2 * d + 1)])
    add("le7eq2b", [1 / (2 * k0 * scale) - abs(last[j]) for j in range(2 * d + 1, k0 + 1)])
    add("le7eq3", [0.5 / scale - abs(last[0] + 0.5 * c11)])

    eq4, eq5, eq6 = [], [], []
    for s in range(1, L - 1):
        m = levels[s]
        for k in range(2 * d):
            eq4.append(m[k, k + 1] - scale * 8 * lg)
            eq5.append(lg / (k0 * scale) - abs(m[k, 0] + 0.5 * m[k, k + 1]))
            eq6 += [lg / (k0 * scale) - abs(m[k, j + 1]) for j in range(k0) if j != k]
    add("le7eq4", eq4)
    add("le7eq5", eq5)
    add("le7eq6", eq6)

    w0 = levels[0]
    slope = scale * (2.0 / spec.delta) * lg
    tol = lg / (d * scale)
    add("le7eq7", [-slope - w0[k, k + 1] for k in range(d)])
    add("le7eq8", [tol - abs(w0[k, 0] + spec.a[k] * w0[k, k + 1]) for k in range(d)])
    add("le7eq8b", [tol - abs(w0[k, j + 1]) for k in range(d) for j in range(d) if j != k])
    add("le7eq9", [w0[d + k, k + 1] - slope for k in range(d)])
    add("le7eq10", [tol - abs(w0[d + k, 0] + spec.b[k] * w0[d + k, k + 1]) for k in range(d)])
    add("le7eq10b", [tol - abs(w0[d + k, j + 1]) for k in range(d) for j in range(d) if j != k])
    return conds


def hypotheses_hold(w: IndicatorWeights, spec: RectangleSpec, robust: bool | None = None) -> bool:
    return all(c.holds for c in check_hypotheses(w, spec, robust))


@dataclass
class IndicatorReport:
    classes: np.ndarray
    values: np.ndarray
    violated: np.ndarray
    n: float

    @property
    def n_violations(self) -> int:
        return int(self.violated.sum())

    @property
    def ok(self) -> bool:
        return self.n_violations == 0

    def witnesses(self, probes: np.ndarray, limit: int = 5) -> list[tuple[np.ndarray, float, int]]:
        idx = np.flatnonzero(self.violated)[:limit]
        return [(probes[i], float(self.values[i]), int(self.classes[i])) for i in idx]


def verify_indicator(w: IndicatorWeights, spec: RectangleSpec, probes) -> IndicatorReport:
    """Check the indicator bounds at every probe; margin-zone probes are unconstrained."""
    pts = np.atleast_2d(np.asarray(probes, dtype=float))
    if pts.shape[1] != w.arch.d:
        raise ValueError(f"probe dimension {pts.shape[1]} does not match d={w.arch.d}")
    if np.any(np.abs(pts) > 1):
        raise ValueError("probes must lie in [-1, 1]^d")
    values = w.evaluate(pts)
    classes = spec.classify(pts)
    eps = math.exp(-spec.n)
    violated = ((classes == 1) & (values < 1 - eps)) | ((classes == -1) & (values > eps))
    return IndicatorReport(classes=classes, values=values, violated=violated, n=spec.n)


def perturbation_radius(d: int, k0: int, n: float | None = None) -> float:
    """Largest sup-norm move that robust weights tolerate twice over."""
    if d < 1 or k0 < 2 * d:
        raise ValueError(f"need d >= 1 and k0 >= 2d, got d={d}, k0={k0}")
    candidates = [1 / (16 * k0), 1 / 16, _log_term(d) / (24 * k0)]
    if n is not None:
        candidates.append(2 * (n + 1))
    return min(candidates)


def magnitude_ceiling(spec: RectangleSpec) -> float:
    """Upper bound on |weight| for the canonical construction."""
    lg = _log_term(spec.d)
    corner = max(float(np.max(np.abs(spec.a))), float(np.max(np.abs(spec.b))))
    return max(8 * (spec.n + 1), (4 / spec.delta) * lg * (1 + corner), 16 * lg)


def perturb(w: IndicatorWeights, radius: float, rng: np.random.Generator, fraction: float = 0.9) -> IndicatorWeights:
    """Move every coordinate uniformly within ``fraction * radius``."""
    flat = w.flat()
    moved = flat + rng.uniform(-fraction * radius, fraction * radius, size=flat.size)
    return IndicatorWeights.from_flat(w.arch, moved)


def embed(w: WeightVector, k: int, sub: IndicatorWeights) -> WeightVector:
    """Copy a single-subnetwork assignment into slot ``k`` of a larger network."""
    a = w.arch
    if (sub.arch.d, sub.arch.k0, sub.arch.L) != (a.d, a.k0, a.L):
        raise ValueError("subnetwork shape does not match the target architecture")
    values = w.values.copy()
    values[a.subnetwork_indices(k)] = sub.flat()
    return WeightVector(a, values)


def extract(w: WeightVector, k: int) -> IndicatorWeights:
    return IndicatorWeights.from_flat(w.arch, w.values[w.arch.subnetwork_indices(k)])
