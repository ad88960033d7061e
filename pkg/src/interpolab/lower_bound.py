"""Adversarial design distribution and the generalization risk of near-interpolators.

The design puts mass 1/n on each of the grid points x_k = (k/n, 0, ..., 0),
k = 1..n, with pure +-1 noise around the zero regression function.  Any
estimate that (nearly) reproduces the noisy labels at the sample points pays
a constant L2 risk, whatever n is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from . import seeding
from .bounds import empirical_smoothness, lemma6_step_size
from .core_net import Architecture, WeightVector, predict
from .descent import InitSpec, initialize, train
from .risk import (
    Dataset,
    conditional_mean,
    conditional_mean_at_samples,
    interpolation_gap,
)


@dataclass(frozen=True)
class AdversarialDistribution:
    n: int
    d: int = 1

    def __post_init__(self) -> None:
        if self.n < 1 or self.d < 1:
            raise ValueError("need n >= 1 and d >= 1")

    @property
    def support(self) -> np.ndarray:
        pts = np.zeros((self.n, self.d))
        pts[:, 0] = np.arange(1, self.n + 1) / self.n
        return pts

    @property
    def probabilities(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    @staticmethod
    def regression(xs) -> np.ndarray:
        return np.zeros(np.atleast_2d(xs).shape[0])


def sample(dist: AdversarialDistribution, seed: int, size: int | None = None) -> Dataset:
    """Draw ``size`` (default n) i.i.d. pairs from the design."""
    size = dist.n if size is None else size
    rng = seeding.derive_rng(seed, seeding.DATA)
    idx = rng.integers(0, dist.n, size=size)
    noise = rng.choice(np.array([-1.0, 1.0]), size=size)
    return Dataset(dist.support[idx], noise)


def sample_indices(dist: AdversarialDistribution, data: Dataset) -> np.ndarray:
    """Support index (0-based) of each sample point."""
    return np.rint(data.xs[:, 0] * dist.n).astype(int) - 1


def exact_risk(dist: AdversarialDistribution, m_hat: Callable[[np.ndarray], np.ndarray]) -> float:
    """Integral of |m_hat - m|^2 against the design law (m = 0 here)."""
    values = np.asarray(m_hat(dist.support), dtype=float).reshape(-1)
    if values.shape != (dist.n,):
        raise ValueError(f"estimate returned shape {values.shape} at {dist.n} support points")
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise ValueError(f"non-finite estimate at support point x_{bad + 1}")
    # uniform weights 1/n; fsum keeps m_hat == 1 at exactly 1
    return math.fsum(values * values) / dist.n


# -- estimators -----------------------------------------------------------------

@dataclass
class Fitted:
    predict: Callable[[np.ndarray], np.ndarray]
    success: bool = True

    def __call__(self, xs) -> np.ndarray:
        return self.predict(np.atleast_2d(xs))


class Estimator(Protocol):
    name: str

    def fit(self, data: Dataset, seed: int) -> Fitted: ...


class ConditionalMeanInterpolator:
    """Sample average at each seen input, zero everywhere else."""

    name = "conditional-mean"

    def fit(self, data: Dataset, seed: int) -> Fitted:
        cm = conditional_mean(data)
        return Fitted(cm.at)


class ZeroEstimator:
    name = "zero"

    def fit(self, data: Dataset, seed: int) -> Fitted:
        return Fitted(lambda xs: np.zeros(len(xs)))


@dataclass
class PlantedNetworkEstimator:
    """The network estimate: planted indicator init, then gradient descent.

    ``lam`` is a number, ``"empirical"`` (1 / largest Hessian eigenvalue at
    c^(0)) or ``"lemma6"`` (1 / the computable smoothness bound at the run's
    norms).  A fit is a success when its interpolation gap is at most
    ``kappa_target``.
    """

    k0: int = 2
    L: int = 2
    kn: int | None = None
    steps: int = 200
    lam: float | str = "empirical"
    kappa_target: float = 1e-3
    bound: float | None = None
    name: str = field(default="planted-network", init=False)

    def fit_network(self, data: Dataset, seed: int) -> tuple[WeightVector, float]:
        n = data.n
        arch = Architecture(data.d, self.k0, self.L, self.kn or n)
        bound = float(n) ** 4 if self.bound is None else self.bound
        w0 = initialize(arch, InitSpec(bound=bound, seed=seed, mode="planted"), data)
        if self.lam == "empirical":
            lam = 1.0 / empirical_smoothness(w0, data, iters=20, seed=seed)
        elif self.lam == "lemma6":
            lam = lemma6_step_size(w0, data)
        else:
            lam = float(self.lam)
        run = train(w0, data, lam, self.steps, monitors=False)
        return run.final, interpolation_gap(predict(run.final, data.xs), data)

    def fit(self, data: Dataset, seed: int) -> Fitted:
        w, gap = self.fit_network(data, seed)
        return Fitted(lambda xs: predict(w, xs), success=gap <= self.kappa_target)


# -- Monte Carlo experiment ---------------------------------------------------------

@dataclass
class ReplicationRow:
    replication: int
    risk: float
    kappa_attained: float
    success: bool

    def as_tuple(self) -> tuple[int, float, float, int]:
        return (self.replication, self.risk, self.kappa_attained, int(self.success))


@dataclass
class RiskReport:
    n: int
    estimator: str
    rows: list[ReplicationRow]
    exact_reference: float

    @property
    def replications(self) -> int:
        return len(self.rows)

    @property
    def risks(self) -> np.ndarray:
        return np.array([r.risk for r in self.rows])

    @property
    def mean_risk(self) -> float:
        return float(np.mean(self.risks))

    @property
    def stderr(self) -> float | None:
        if self.replications < 2:
            return None
        return float(np.std(self.risks, ddof=1) / math.sqrt(self.replications))

    @property
    def failure_rate(self) -> float:
        return float(np.mean([not r.success for r in self.rows]))

    @property
    def kappa_hat(self) -> float:
        """Largest interpolation gap among successful fits."""
        ok = [r.kappa_attained for r in self.rows if r.success]
        return max(ok) if ok else math.inf

    @property
    def paper_bound(self) -> float:
        """1/5 - n * kappa_hat - failure_rate / 2."""
        return 0.2 - self.n * self.kappa_hat - 0.5 * self.failure_rate

    def summary(self) -> dict[str, float | int | str | None]:
        return {
            "n": self.n,
            "estimator": self.estimator,
            "replications": self.replications,
            "mean": self.mean_risk,
            "stderr": self.stderr,
            "kappa_hat": self.kappa_hat,
            "failure_rate": self.failure_rate,
            "paper_bound": self.paper_bound,
            "exact_reference": self.exact_reference,
        }


def mc_lower_bound_experiment(
    dist: AdversarialDistribution, estimator: Estimator, replications: int, seed: int
) -> RiskReport:
    if replications < 1:
        raise ValueError("need at least one replication")
    rows = []
    for r in range(replications):
        rep_seed = int(seeding.derive_rng(seed, seeding.REPLICATION, r).integers(2 ** 63))
        data = sample(dist, rep_seed)
        fitted = estimator.fit(data, rep_seed)
        gap = interpolation_gap(fitted(data.xs), data)
        rows.append(ReplicationRow(r, exact_risk(dist, fitted), gap, bool(fitted.success)))
    if not any(row.success for row in rows):
        raise RuntimeError(f"estimator {estimator.name!r} failed on every replication")
    return RiskReport(dist.n, estimator.name, rows, binomial_identity(dist.n).exact)


# -- the binomial expectation chain ----------------------------------------------

@dataclass(frozen=True)
class BinomialIdentity:
    n: int
    exact: float  # sum_i (1/i) C(n,i) (1/n)^i (1-1/n)^(n-i)
    shifted: float  # same with 1/(i+1)
    closed_form: float  # n/(n+1) * (1 - (1-1/n)^(n+1) - (n+1)/n (1-1/n)^n)
    intermediate: float  # n/(n+1) * (1 - (2n+1)/n (1-1/n)^n)
    final: float  # 10/11 * (1 - 21/(10 e))

    @property
    def chain_ok(self) -> bool:
        return self.exact >= self.closed_form >= self.intermediate >= self.final


def _binomial_terms(n: int, shift: int) -> list[float]:
    if n == 1:
        return [1.0 / (1 + shift)]
    log_p, log_q = -math.log(n), math.log1p(-1.0 / n)
    terms = []
    for i in range(1, n + 1):
        log_c = math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1)
        terms.append(math.exp(log_c + i * log_p + (n - i) * log_q) / (i + shift))
    return terms


def binomial_identity(n: int) -> BinomialIdentity:
    """E[1{B>0}/B] for B ~ Bin(n, 1/n), together with the lower-bound chain."""
    if n < 1:
        raise ValueError("n must be >= 1")
    q = 1.0 - 1.0 / n
    ratio = n / (n + 1)
    return BinomialIdentity(
        n=n,
        exact=math.fsum(_binomial_terms(n, 0)),
        shifted=math.fsum(_binomial_terms(n, 1)),
        closed_form=ratio * (1 - q ** (n + 1) - (n + 1) / n * q ** n),
        intermediate=ratio * (1 - (2 * n + 1) / n * q ** n),
        final=10 / 11 * (1 - 21 / (10 * math.e)),
    )


# -- closeness of near-interpolators to the conditional mean ------------------------

@dataclass
class ClosenessReport:
    deviations: np.ndarray
    bound: float
    gap: float

    @property
    def holds(self) -> bool:
        return bool(np.all(self.deviations <= self.bound))


def lemma9_check(f: Callable[[np.ndarray], np.ndarray], data: Dataset, kappa: float) -> ClosenessReport:
    """Per-point distance to the conditional mean against sqrt(n * kappa).

    ``f`` must be a kappa-near-interpolator on ``data``; that is verified
    first, and a ValueError is raised if it is not.
    """
    preds = np.asarray(f(data.xs), dtype=float).reshape(-1)
    gap = interpolation_gap(preds, data)
    if gap > kappa:
        raise ValueError(f"not a {kappa:g}-near-interpolator: risk exceeds the optimum by {gap:.3g}")
    deviations = np.abs(preds - conditional_mean_at_samples(data))
    return ClosenessReport(deviations=deviations, bound=math.sqrt(data.n * kappa), gap=gap)
