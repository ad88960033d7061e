"""Parallel-subnetwork logistic network: topology, weight layout, forward pass.

The network is a linear combination of ``kn`` fully connected subnetworks.
Each subnetwork has ``L`` hidden levels with ``k0`` neurons, except the last
level which holds a single neuron (labelled ``(k, k)`` for subnetwork ``k``).

Flat weight layout, in order:

* level 0:        ``(kn, k0, d + 1)``   first layer, column 0 is the bias
* level 1..L-2:   ``(kn, k0, k0 + 1)``  middle layers
* level L-1:      ``(kn, k0 + 1)``      the single last-level neuron
* level L:        ``(kn + 1,)``         output weights, entry 0 is the constant

Within a level the order is subnetwork, destination neuron, source index
(source 0 is the bias).  Subnetwork and neuron indices are 0-based here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class Architecture:
    d: int
    k0: int
    L: int
    kn: int

    def __post_init__(self) -> None:
        if self.d < 1 or self.k0 < 1 or self.kn < 1:
            raise ValueError(f"d, k0, kn must be >= 1, got {self}")
        if self.L < 2:
            raise ValueError(f"L must be >= 2, got L={self.L}")

    @property
    def per_subnetwork(self) -> int:
        """Weights of one subnetwork (levels 0..L-1)."""
        k0, d, L = self.k0, self.d, self.L
        return (L - 2) * (k0 * k0 + k0) + k0 * (d + 2) + 1

    @property
    def n_weights(self) -> int:
        return count_weights(self)

    @property
    def lemma5_ok(self) -> bool:
        """Width condition 2*k0 >= d used by the Lipschitz-in-weights bound."""
        return 2 * self.k0 >= self.d

    @property
    def indicator_ok(self) -> bool:
        """Width condition k0 >= 2*d needed by the indicator construction."""
        return self.k0 >= 2 * self.d

    def level_shapes(self) -> list[tuple[int, ...]]:
        kn, k0, d, L = self.kn, self.k0, self.d, self.L
        shapes: list[tuple[int, ...]] = [(kn, k0, d + 1)]
        shapes += [(kn, k0, k0 + 1)] * (L - 2)
        shapes.append((kn, k0 + 1))
        shapes.append((kn + 1,))
        return shapes

    def level_offsets(self) -> list[int]:
        offsets = [0]
        for shape in self.level_shapes():
            offsets.append(offsets[-1] + int(np.prod(shape)))
        return offsets

    def subnetwork_indices(self, k: int) -> np.ndarray:
        """Flat indices of every level < L weight belonging to subnetwork ``k``."""
        if not 0 <= k < self.kn:
            raise IndexError(f"subnetwork {k} out of range for kn={self.kn}")
        idx = np.arange(self.n_weights).reshape(-1)
        parts = []
        offsets = self.level_offsets()
        for s, shape in enumerate(self.level_shapes()[:-1]):
            block = idx[offsets[s]:offsets[s + 1]].reshape(shape)
            parts.append(block[k].ravel())
        return np.concatenate(parts)

    def output_indices(self) -> np.ndarray:
        offsets = self.level_offsets()
        return np.arange(offsets[-2], offsets[-1])

    def flat_index(self, s: int, k: int, i: int, j: int) -> int:
        """Flat position of c_{k,i,j}^{(s)} (0-based k, i; j=0 is the bias).

        For ``s == L - 1`` only ``i == 0`` exists.  For ``s == L`` the weight is
        addressed by ``j`` alone (``k`` and ``i`` must be 0).
        """
        shapes = self.level_shapes()
        offsets = self.level_offsets()
        if s == self.L:
            if k or i:
                raise IndexError("output level is addressed by j only")
            return offsets[s] + int(np.ravel_multi_index((j,), shapes[s]))
        if s == self.L - 1:
            if i:
                raise IndexError("last hidden level has a single neuron per subnetwork")
            return offsets[s] + int(np.ravel_multi_index((k, j), shapes[s]))
        return offsets[s] + int(np.ravel_multi_index((k, i, j), shapes[s]))


def count_weights(arch: Architecture) -> int:
    return arch.kn * arch.per_subnetwork + arch.kn + 1


@dataclass(frozen=True, eq=False)
class WeightVector:
    arch: Architecture
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.shape != (self.arch.n_weights,):
            raise ValueError(
                f"expected {self.arch.n_weights} weights for {self.arch}, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("weights must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, arch: Architecture) -> "WeightVector":
        return cls(arch, np.zeros(arch.n_weights))

    def levels(self) -> list[np.ndarray]:
        """Read-only views of the flat vector, one array per level 0..L."""
        return unpack(self.arch, self.values)

    @property
    def output(self) -> np.ndarray:
        return self.levels()[-1]

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def replace(self, values: np.ndarray) -> "WeightVector":
        return WeightVector(self.arch, values)

    def with_output(self, output: Iterable[float]) -> "WeightVector":
        values = self.values.copy()
        values[self.arch.output_indices()] = np.asarray(list(output), dtype=float)
        return WeightVector(self.arch, values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WeightVector):
            return NotImplemented
        return self.arch == other.arch and np.array_equal(self.values, other.values)

    __hash__ = None  # type: ignore[assignment]


def unpack(arch: Architecture, values: np.ndarray) -> list[np.ndarray]:
    offsets = arch.level_offsets()
    return [
        values[offsets[s]:offsets[s + 1]].reshape(shape)
        for s, shape in enumerate(arch.level_shapes())
    ]


def logistic(x):
    """Logistic squasher 1 / (1 + exp(-x)), overflow-free for any finite input.

    Accepts scalars or arrays; the dtype of array input is preserved so the
    same code runs in extended precision.
    """
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(float)
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return out[()] if out.ndim == 0 else out


def logistic_slope(x):
    """Derivative sigma(x) * (1 - sigma(x)), accurate deep in saturation."""
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(float)
    z = np.exp(-np.abs(x))
    out = z / (1.0 + z) ** 2
    return out[()] if out.ndim == 0 else out


@dataclass
class ActivationTrace:
    """All intermediate quantities of a forward pass over a batch of points.

    ``hidden[r-1]`` holds f_{k,i}^{(r)} for r = 1..L with shape
    ``(m, kn, k0)`` for r < L and ``(m, kn)`` for r = L; ``pre`` holds the
    matching pre-activations.  ``output`` has shape ``(m,)``.
    """

    inputs: np.ndarray
    pre: list[np.ndarray]
    hidden: list[np.ndarray]
    output: np.ndarray

    @property
    def last(self) -> np.ndarray:
        """f_{k,k}^{(L)} for every point and subnetwork, shape ``(m, kn)``."""
        return self.hidden[-1]


def _as_points(arch: Architecture, x, dtype) -> np.ndarray:
    pts = np.asarray(x, dtype=dtype)
    single = pts.ndim <= 1
    pts = np.atleast_2d(pts.reshape(1, -1) if single else pts)
    if pts.shape[1] != arch.d:
        raise ValueError(f"input dimension {pts.shape[1]} does not match arch.d={arch.d}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("inputs must be finite")
    return pts


def forward_batch(
    arch: Architecture, values: np.ndarray, xs, dtype=float
) -> ActivationTrace:
    """Forward pass on raw flat weights for ``m`` points at once."""
    values = np.asarray(values, dtype=dtype)
    pts = _as_points(arch, xs, dtype)
    levels = unpack(arch, values)
    pre: list[np.ndarray] = []
    hidden: list[np.ndarray] = []

    w0 = levels[0]
    z = np.einsum("kij,mj->mki", w0[:, :, 1:], pts) + w0[None, :, :, 0]
    pre.append(z)
    hidden.append(logistic(z))
    for s in range(1, arch.L - 1):
        w = levels[s]
        z = np.einsum("kij,mkj->mki", w[:, :, 1:], hidden[-1]) + w[None, :, :, 0]
        pre.append(z)
        hidden.append(logistic(z))
    wl = levels[arch.L - 1]
    z = np.einsum("kj,mkj->mk", wl[:, 1:], hidden[-1]) + wl[None, :, 0]
    pre.append(z)
    hidden.append(logistic(z))

    out = levels[arch.L]
    output = hidden[-1] @ out[1:] + out[0]
    return ActivationTrace(inputs=pts, pre=pre, hidden=hidden, output=output)


def forward(w: WeightVector, x) -> ActivationTrace:
    """Evaluate the network at one point ``x`` (or a batch of rows)."""
    return forward_batch(w.arch, w.values, x)


def predict(w: WeightVector, xs) -> np.ndarray:
    return forward_batch(w.arch, w.values, xs).output


# -- serialization -----------------------------------------------------------

def dumps_weights(w: WeightVector) -> str:
    a = w.arch
    lines = [f"arch {a.d} {a.k0} {a.L} {a.kn}"]
    lines += [repr(float(v)) for v in w.values]
    return "\n".join(lines) + "\n"


def loads_weights(text: str) -> WeightVector:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("arch "):
        raise ValueError("missing 'arch d k0 L kn' header line")
    parts = lines[0].split()
    if len(parts) != 5:
        raise ValueError(f"malformed header: {lines[0]!r}")
    arch = Architecture(*(int(p) for p in parts[1:]))
    values = np.array([float(v) for v in lines[1:]])
    return WeightVector(arch, values)


def save_weights(w: WeightVector, path: str | Path) -> None:
    Path(path).write_text(dumps_weights(w))


def load_weights(path: str | Path) -> WeightVector:
    return loads_weights(Path(path).read_text())
