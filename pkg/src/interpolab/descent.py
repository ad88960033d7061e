"""Initialization, full-batch gradient descent, and the interpolation schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from . import seeding
from .constructor import RectangleSpec, build_indicator, embed, perturb, perturbation_radius
from .core_net import Architecture, WeightVector
from .risk import Dataset, group_index, risk_and_gradient


class DivergenceError(FloatingPointError):
    def __init__(self, step: int, what: str):
        super().__init__(f"non-finite {what} at step {step}")
        self.step = step


# -- event conditions ----------------------------------------------------------

@dataclass
class EventReport:
    separation: float
    max_norm_x: float
    max_abs_y: float
    separation_bound: float
    response_bound: float

    @property
    def separation_ok(self) -> bool:
        return self.separation >= self.separation_bound

    @property
    def domain_ok(self) -> bool:
        return self.max_norm_x <= 1.0

    @property
    def response_ok(self) -> bool:
        return self.max_abs_y <= self.response_bound

    @property
    def all_ok(self) -> bool:
        return self.separation_ok and self.domain_ok and self.response_ok


def distinct_points(data: Dataset) -> np.ndarray:
    """Distinct sample inputs, sorted lexicographically by coordinate."""
    first, _ = group_index(data.xs)
    pts = data.xs[first]
    order = np.lexsort(pts.T[::-1])
    return pts[order]


def min_separation(data: Dataset) -> float:
    """Smallest sup-norm distance between two distinct inputs (inf if fewer than two)."""
    pts = distinct_points(data)
    if len(pts) < 2:
        return math.inf
    diff = np.max(np.abs(pts[:, None, :] - pts[None, :, :]), axis=2)
    np.fill_diagonal(diff, np.inf)
    return float(diff.min())


def validate_event(data: Dataset, n: int | None = None) -> EventReport:
    """Check the three data conditions under which interpolation is guaranteed."""
    n = data.n if n is None else n
    return EventReport(
        separation=min_separation(data),
        max_norm_x=float(np.max(np.abs(data.xs))) if data.n else 0.0,
        max_abs_y=float(np.max(np.abs(data.ys))) if data.n else 0.0,
        separation_bound=1.0 / (n + 1) ** 3,
        response_bound=float(n) ** 2,
    )


# -- initialization ------------------------------------------------------------

@dataclass(frozen=True)
class InitSpec:
    """How to draw c^(0).

    ``bound`` is the half-width of the uniform law for hidden weights (the
    theory uses n**4).  In ``planted`` mode each distinct sample point gets
    its own robust indicator subnetwork; ``margin`` is the half-width of its
    box (default: a quarter of the data's minimum separation), ``saturation``
    the sharpness parameter (default: the sample size), and ``jitter`` moves
    planted weights randomly by that fraction of the perturbation radius.
    """

    bound: float
    seed: int = 0
    mode: Literal["paper-random", "planted"] = "paper-random"
    margin: float | None = None
    saturation: float | None = None
    jitter: float = 0.0

    def __post_init__(self) -> None:
        if not self.bound > 0:
            raise ValueError(f"init bound must be positive, got {self.bound}")
        if self.mode not in ("paper-random", "planted"):
            raise ValueError(f"unknown init mode {self.mode!r}")
        if not 0 <= self.jitter < 1:
            raise ValueError("jitter must be in [0, 1)")


def plant_assignment(data: Dataset) -> np.ndarray:
    """Subnetwork index carrying each sample's indicator (shared by duplicates)."""
    first, inverse = group_index(data.xs)
    order = np.lexsort(data.xs[first].T[::-1])
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[inverse]


def planted_box(x: np.ndarray, margin: float, saturation: float) -> RectangleSpec:
    a, b = x - margin, x + margin
    # take the margin from the realized width so rounding cannot break b - a >= 2*delta
    return RectangleSpec(a=a, b=b, delta=float(np.min(b - a)) / 2, n=saturation, robust=True)


def initialize(arch: Architecture, init: InitSpec, data: Dataset | None = None) -> WeightVector:
    values = np.zeros(arch.n_weights)
    for k in range(arch.kn):
        rng = seeding.derive_rng(init.seed, seeding.INIT, k)
        idx = arch.subnetwork_indices(k)
        values[idx] = rng.uniform(-init.bound, init.bound, size=idx.size)
    w = WeightVector(arch, values)
    if init.mode == "paper-random":
        return w

    if data is None:
        raise ValueError("planted initialization needs the training data")
    event = validate_event(data)
    if not event.separation_ok:
        raise ValueError(
            f"planted mode needs separated inputs: min separation {event.separation:.3g} "
            f"< {event.separation_bound:.3g}"
        )
    pts = distinct_points(data)
    if len(pts) > arch.kn:
        raise ValueError(f"{len(pts)} distinct points but only kn={arch.kn} subnetworks")
    margin = init.margin
    if margin is None:
        sep = event.separation if math.isfinite(event.separation) else 1.0
        margin = sep / 4
    saturation = float(data.n) if init.saturation is None else init.saturation
    one = Architecture(arch.d, arch.k0, arch.L, 1)
    radius = perturbation_radius(arch.d, arch.k0)
    for k, x in enumerate(pts):
        sub = build_indicator(one, planted_box(x, margin, saturation))
        if init.jitter > 0:
            sub = perturb(sub, radius, seeding.derive_rng(init.seed, seeding.PLANT, k), init.jitter)
        w = embed(w, k, sub)
    return w


# -- gradient descent ----------------------------------------------------------

@dataclass
class TrainRun:
    lam: float
    risks: np.ndarray
    grad_norms: np.ndarray
    maxabs: np.ndarray
    checkpoints: dict[int, WeightVector] = field(repr=False)
    final: WeightVector = field(repr=False)
    monotone_violations: list[int] = field(default_factory=list)
    bound_violations: list[int] = field(default_factory=list)
    iterate_bound: float | None = None

    @property
    def steps(self) -> int:
        return len(self.risks) - 1

    def trace_rows(self) -> list[tuple[int, float, float, float]]:
        return [
            (t, float(r), float(g), float(m))
            for t, (r, g, m) in enumerate(zip(self.risks, self.grad_norms, self.maxabs))
        ]


# relative tolerance for the monotonicity monitor: four units in the last place
ROUNDING_SLACK = 4 * float(np.finfo(float).eps)

Observer = Callable[[int, WeightVector, float, np.ndarray], None]


def train(
    w0: WeightVector,
    data: Dataset,
    lam: float,
    steps: int,
    monitors: bool = True,
    iterate_bound: float | None = None,
    checkpoint_every: int | None = None,
    observer: Observer | None = None,
    monotone_slack: float = ROUNDING_SLACK,
) -> TrainRun:
    """Run ``steps`` full-batch updates c <- c - lam * grad F_n(c).

    With monitors on, a step counts as non-monotone when
    ``F(c_{t+1}) > F(c_t) + monotone_slack * max(1, F(c_t))``; the default
    slack of a few ulps ignores changes that are pure rounding.  Iterates with
    sup-norm above ``iterate_bound`` are recorded.  ``observer`` sees every
    iterate (including the last) together with its risk and gradient.
    """
    if not lam > 0:
        raise ValueError(f"step size must be positive, got {lam}")
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    every = checkpoint_every or max(1, steps // 100)
    arch = w0.arch
    values = w0.values.copy()
    risks = np.empty(steps + 1)
    gnorms = np.empty(steps + 1)
    maxabs = np.empty(steps + 1)
    checkpoints: dict[int, WeightVector] = {}
    mono: list[int] = []
    bound_hits: list[int] = []

    for t in range(steps + 1):
        # overflow is detected below and reported as DivergenceError
        with np.errstate(over="ignore", invalid="ignore"):
            risk, grad = risk_and_gradient(_View(arch, values), data)
        if not math.isfinite(risk):
            raise DivergenceError(t, "risk")
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(t, "gradient")
        risks[t] = risk
        gnorms[t] = float(np.linalg.norm(grad))
        maxabs[t] = float(np.max(np.abs(values)))
        if t % every == 0 or t == steps:
            checkpoints[t] = WeightVector(arch, values)
        if observer is not None:
            observer(t, WeightVector(arch, values), risk, grad)
        if monitors:
            if t > 0 and risk > risks[t - 1] + monotone_slack * max(1.0, risks[t - 1]):
                mono.append(t)
            if iterate_bound is not None and maxabs[t] > iterate_bound:
                bound_hits.append(t)
        if t < steps:
            values = values - lam * grad

    return TrainRun(
        lam=lam,
        risks=risks,
        grad_norms=gnorms,
        maxabs=maxabs,
        checkpoints=checkpoints,
        final=WeightVector(arch, values),
        monotone_violations=mono,
        bound_violations=bound_hits,
        iterate_bound=iterate_bound,
    )


class _View:
    """Minimal stand-in for WeightVector that skips validation in the hot loop."""

    __slots__ = ("arch", "values")

    def __init__(self, arch: Architecture, values: np.ndarray):
        self.arch = arch
        self.values = values


# -- theoretical schedule --------------------------------------------------------

@dataclass(frozen=True)
class TheoreticalSchedule:
    """Exponents of n in the interpolation schedule; t_n = 2 * n**tn_exponent."""

    n: int
    kn_exponent: int
    lambda_exponent: int
    tn_exponent: int
    Ln_exponent: int
    c3: float = 1.0
    c4: float = 4.0

    @property
    def log_kn(self) -> float:
        return self.kn_exponent * math.log(self.n)

    @property
    def log_lambda_n(self) -> float:
        return self.lambda_exponent * math.log(self.n)

    @property
    def log_tn(self) -> float:
        return math.log(2) + self.tn_exponent * math.log(self.n)

    @property
    def log_Ln(self) -> float:
        return self.Ln_exponent * math.log(self.n)

    def tn_lambda(self) -> tuple[int, int]:
        """t_n * lambda_n as (coefficient, exponent of n)."""
        return 2, self.tn_exponent + self.lambda_exponent

    def contraction_exponent(self) -> tuple[int, int]:
        """t_n / (2 n L_n) as (coefficient, exponent of n)."""
        return 1, self.tn_exponent - 1 - self.Ln_exponent

    def linear(self, name: str) -> float | None:
        """Linear-domain value if it fits in a double, else None."""
        log_value = getattr(self, f"log_{name}")
        return math.exp(log_value) if abs(log_value) < 700 else None


def theoretical_schedule(arch: Architecture, n: int) -> TheoreticalSchedule:
    if arch.k0 < 2 * arch.d:
        raise ValueError(f"schedule requires k0 >= 2d, got k0={arch.k0}, d={arch.d}")
    if n < 1:
        raise ValueError("schedule needs n >= 1")
    L, k0, d = arch.L, arch.k0, arch.d
    core = (L - 2) * (k0 * k0 + k0) + k0 * (d + 2)
    return TheoreticalSchedule(
        n=n,
        kn_exponent=5 * core + 7,
        lambda_exponent=-(8 * core + 16 * L + 15),
        tn_exponent=8 * core + 16 * L + 17,
        Ln_exponent=8 * core + 16 * L + 15,
    )
