"""Empirical L2 risk, its gradient, and the interpolation optimum."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .core_net import (
    Architecture,
    WeightVector,
    forward_batch,
    logistic_slope,
    unpack,
)


@dataclass(frozen=True, eq=False)
class Dataset:
    xs: np.ndarray = field(repr=False)
    ys: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        xs = np.array(self.xs, dtype=float)
        if xs.ndim == 1:
            xs = xs.reshape(-1, 1)
        ys = np.array(self.ys, dtype=float).reshape(-1)
        if xs.ndim != 2 or xs.shape[0] != ys.shape[0]:
            raise ValueError(f"xs {xs.shape} and ys {ys.shape} disagree on sample count")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("dataset contains non-finite values")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", np.ascontiguousarray(xs))
        object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return self.ys.shape[0]

    @property
    def d(self) -> int:
        return self.xs.shape[1]

    def __len__(self) -> int:
        return self.n


def _require_nonempty(data: Dataset) -> None:
    if data.n == 0:
        raise ValueError("dataset is empty")


def risk_from_values(arch: Architecture, values: np.ndarray, data: Dataset, dtype=float):
    """Risk for raw flat weights; ``dtype`` selects the working precision."""
    _require_nonempty(data)
    out = forward_batch(arch, values, data.xs, dtype=dtype).output
    resid = out - np.asarray(data.ys, dtype=dtype)
    return np.mean(resid * resid)


def empirical_risk(w: WeightVector, data: Dataset) -> float:
    """F_n(w) = (1/n) * sum_i (f_w(X_i) - Y_i)^2."""
    return float(risk_from_values(w.arch, w.values, data))


def _gradient_values(arch: Architecture, values: np.ndarray, data: Dataset) -> tuple[float, np.ndarray]:
    _require_nonempty(data)
    trace = forward_batch(arch, values, data.xs)
    levels = unpack(arch, np.asarray(values, dtype=float))
    grads = [np.zeros_like(lv) for lv in levels]
    resid = trace.output - data.ys
    risk = float(np.mean(resid * resid))
    r = (2.0 / data.n) * resid

    out = levels[arch.L]
    g_out = grads[arch.L]
    g_out[0] = r.sum()
    g_out[1:] = trace.last.T @ r

    # last hidden level: one neuron per subnetwork
    delta = r[:, None] * out[None, 1:] * logistic_slope(trace.pre[-1])
    wl = levels[arch.L - 1]
    g_wl = grads[arch.L - 1]
    g_wl[:, 0] = delta.sum(axis=0)
    g_wl[:, 1:] = np.einsum("mk,mkj->kj", delta, trace.hidden[-2])
    dh = delta[:, :, None] * wl[None, :, 1:]

    for s in range(arch.L - 2, 0, -1):
        delta = dh * logistic_slope(trace.pre[s])
        g = grads[s]
        g[:, :, 0] = delta.sum(axis=0)
        g[:, :, 1:] = np.einsum("mki,mkj->kij", delta, trace.hidden[s - 1])
        dh = np.einsum("mki,kij->mkj", delta, levels[s][:, :, 1:])

    delta = dh * logistic_slope(trace.pre[0])
    g0 = grads[0]
    g0[:, :, 0] = delta.sum(axis=0)
    g0[:, :, 1:] = np.einsum("mki,mj->kij", delta, trace.inputs)
    return risk, np.concatenate([g.ravel() for g in grads])


def risk_and_gradient(w: WeightVector, data: Dataset) -> tuple[float, np.ndarray]:
    return _gradient_values(w.arch, w.values, data)


def analytic_gradient(w: WeightVector, data: Dataset) -> np.ndarray:
    """Exact gradient of F_n, same flat layout as the weights.

    Reverse accumulation over one forward trace.  The logistic slope is taken
    from the pre-activations, so saturated units keep their tiny but nonzero
    derivatives instead of rounding ``s * (1 - s)`` to zero.
    """
    return _gradient_values(w.arch, w.values, data)[1]


def central_difference(
    func: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6, dtype=np.longdouble
) -> np.ndarray:
    """Coordinatewise (func(x + h_c e) - func(x - h_c e)) / (2 h_c), h_c = h * max(1, |x_c|)."""
    if not h > 0:
        raise ValueError(f"finite-difference step must be positive, got {h}")
    x = np.asarray(x, dtype=dtype)
    grad = np.empty(x.shape, dtype=dtype)
    for c in range(x.size):
        step = dtype(h) * max(dtype(1), abs(x[c]))
        up = x.copy()
        down = x.copy()
        up[c] += step
        down[c] -= step
        # the realized step, not the requested one, is what the difference sees
        grad[c] = (func(up) - func(down)) / (up[c] - down[c])
    return grad


def finite_difference_gradient(
    w: WeightVector, data: Dataset, h: float = 1e-6, dtype=np.longdouble
) -> np.ndarray:
    """Central-difference gradient of F_n, evaluated in extended precision by default."""
    _require_nonempty(data)

    def risk(v: np.ndarray):
        return risk_from_values(w.arch, v, data, dtype=dtype)

    return np.asarray(central_difference(risk, w.values, h=h, dtype=dtype), dtype=float)


def expansion_gradient(w: WeightVector, data: Dataset) -> np.ndarray:
    """Gradient by explicitly summing the chain-rule product over every path.

    Exponential in L; meant as a second oracle for small networks only.
    """
    _require_nonempty(data)
    arch = w.arch
    L, k0 = arch.L, arch.k0
    levels = w.levels()
    grad = np.zeros(arch.n_weights)
    for x, y in zip(data.xs, data.ys):
        tr = forward_batch(arch, w.values, x)
        resid = tr.output[0] - y
        hidden = [h[0] for h in tr.hidden]
        slopes = [logistic_slope(p[0]) for p in tr.pre]
        out = levels[L]

        def source(k: int, s: int, j: int) -> float:
            if j == 0:
                return 1.0
            return x[j - 1] if s == 0 else hidden[s - 1][k, j - 1]

        def path_factor(k: int, s: int, i: int) -> float:
            # d f_{k,k}^{(L)} / d (pre-activation of neuron i at hidden level s+1), times c_out
            tail = slopes[L - 1][k] * out[k + 1]
            if s == L - 1:
                return tail
            total = 0.0
            for path in itertools.product(range(k0), repeat=L - 2 - s):
                nodes = (i,) + path
                prod = slopes[s][k, i]
                for q in range(1, len(nodes)):
                    prod *= levels[s + q][k, nodes[q], nodes[q - 1] + 1] * slopes[s + q][k, nodes[q]]
                prod *= levels[L - 1][k, nodes[-1] + 1]
                total += prod
            return total * tail

        g = np.zeros(arch.n_weights)
        for j in range(arch.kn + 1):
            g[arch.flat_index(L, 0, 0, j)] = 1.0 if j == 0 else hidden[L - 1][j - 1]
        for k in range(arch.kn):
            for s in range(L):
                n_dest = 1 if s == L - 1 else k0
                n_src = (arch.d if s == 0 else k0) + 1
                for i in range(n_dest):
                    pf = path_factor(k, s, i)
                    for j in range(n_src):
                        g[arch.flat_index(s, k, i, j)] = source(k, s, j) * pf
        grad += (2.0 / data.n) * resid * g
    return grad


# -- conditional mean and interpolation optimum -------------------------------

def _canonical(xs) -> np.ndarray:
    # adding 0.0 maps -0.0 to +0.0, so equal inputs share one bit pattern
    return np.ascontiguousarray(np.asarray(xs, dtype=float) + 0.0)


def _row_keys(xs: np.ndarray) -> np.ndarray:
    return _canonical(xs).view(np.uint64)


def group_index(xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Group rows by bitwise equality; returns (unique row indices, inverse)."""
    keys = _row_keys(xs)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    return first, inverse.reshape(-1)


@dataclass(frozen=True)
class ConditionalMean:
    """Per-distinct-input average response; 0 at inputs not in the sample."""

    table: dict[bytes, float]
    counts: dict[bytes, int]
    d: int

    def __call__(self, x) -> float:
        key = _canonical(np.asarray(x, dtype=float).reshape(self.d)).tobytes()
        return self.table.get(key, 0.0)

    def at(self, xs) -> np.ndarray:
        pts = np.asarray(xs, dtype=float).reshape(-1, self.d)
        return np.array([self(p) for p in pts])

    def points(self) -> list[tuple[float, ...]]:
        return [tuple(np.frombuffer(k, dtype=float)) for k in self.table]


def _group_means(data: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    first, inverse = group_index(data.xs)
    counts = np.bincount(inverse, minlength=first.size)
    sums = np.bincount(inverse, weights=data.ys, minlength=first.size)
    return first, inverse, sums / counts


def conditional_mean(data: Dataset) -> ConditionalMean:
    if data.n == 0:
        return ConditionalMean({}, {}, data.d)
    first, inverse, means = _group_means(data)
    counts = np.bincount(inverse, minlength=first.size)
    keys = _canonical(data.xs)
    table = {keys[i].tobytes(): float(means[g]) for g, i in enumerate(first)}
    cnt = {keys[i].tobytes(): int(counts[g]) for g, i in enumerate(first)}
    return ConditionalMean(table, cnt, data.d)


def conditional_mean_at_samples(data: Dataset) -> np.ndarray:
    """m_bar_n(X_i) for every sample, vectorized."""
    _require_nonempty(data)
    _, inverse, means = _group_means(data)
    return means[inverse]


def interpolation_optimum(data: Dataset) -> float:
    """min over all g of (1/n) sum (g(X_i) - Y_i)^2, attained by the conditional mean."""
    _require_nonempty(data)
    resid = conditional_mean_at_samples(data) - data.ys
    return float(np.mean(resid * resid))


def interpolation_gap(predictions: np.ndarray, data: Dataset) -> float:
    """(1/n) sum (f(X_i) - m_bar_n(X_i))^2, which equals risk minus optimum.

    Computed directly rather than by subtraction so it stays accurate when
    the risk is already close to the optimum.
    """
    diff = np.asarray(predictions, dtype=float) - conditional_mean_at_samples(data)
    return float(np.mean(diff * diff))


# -- file format ---------------------------------------------------------------

def load_dataset_csv(path: str | Path, header: bool = False) -> Dataset:
    """CSV with d feature columns followed by one response column."""
    with open(path, newline="") as fh:
        numbered = list(enumerate(csv.reader(fh), start=1))
    if header:
        numbered = numbered[1:]
    numbered = [(i, r) for i, r in numbered if r and any(c.strip() for c in r)]
    if not numbered:
        raise ValueError(f"{path}: no data rows")
    width = len(numbered[0][1])
    if width < 2:
        raise ValueError(f"{path}:{numbered[0][0]}: need at least one feature and one response column")
    values = []
    for lineno, r in numbered:
        if len(r) != width:
            raise ValueError(f"{path}:{lineno}: expected {width} columns, got {len(r)}")
        try:
            values.append([float(c) for c in r])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric entry in {r}") from None
    arr = np.array(values)
    if not np.all(np.isfinite(arr)):
        bad = numbered[int(np.flatnonzero(~np.all(np.isfinite(arr), axis=1))[0])][0]
        raise ValueError(f"{path}:{bad}: non-finite value")
    return Dataset(arr[:, :-1], arr[:, -1])


def save_dataset_csv(data: Dataset, path: str | Path, header: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow([f"x{j + 1}" for j in range(data.d)] + ["y"])
        for x, y in zip(data.xs, data.ys):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(y))])
