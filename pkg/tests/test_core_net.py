import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_weights
from interpolab.core_net import (
    Architecture,
    WeightVector,
    count_weights,
    dumps_weights,
    forward,
    forward_batch,
    load_weights,
    loads_weights,
    logistic,
    logistic_slope,
    predict,
    save_weights,
)


def naive_forward(arch: Architecture, values: np.ndarray, x: np.ndarray) -> float:
    """Neuron-by-neuron evaluation reading weights in the documented flat order."""
    d, k0, L, kn = arch.d, arch.k0, arch.L, arch.kn
    sig = lambda z: 1 / (1 + math.exp(-z))
    pos = 0

    def take():
        nonlocal pos
        pos += 1
        return values[pos - 1]

    # level 0: (kn, k0, d+1)
    h = []
    for k in range(kn):
        row = []
        for i in range(k0):
            w = [take() for _ in range(d + 1)]
            row.append(sig(w[0] + sum(w[j + 1] * x[j] for j in range(d))))
        h.append(row)
    for _ in range(1, L - 1):
        new = []
        for k in range(kn):
            row = []
            for i in range(k0):
                w = [take() for _ in range(k0 + 1)]
                row.append(sig(w[0] + sum(w[j + 1] * h[k][j] for j in range(k0))))
            new.append(row)
        h = new
    last = []
    for k in range(kn):
        w = [take() for _ in range(k0 + 1)]
        last.append(sig(w[0] + sum(w[j + 1] * h[k][j] for j in range(k0))))
    out = take()
    for k in range(kn):
        out += take() * last[k]
    assert pos == len(values)
    return out


@pytest.mark.parametrize(
    "arch, expected",
    [
        (Architecture(1, 2, 2, 1), 9),
        (Architecture(1, 2, 3, 1), 15),
        (Architecture(2, 4, 2, 3), 55),
    ],
)
def test_count_weights_hand_enumerated(arch, expected):
    assert count_weights(arch) == expected
    assert sum(int(np.prod(s)) for s in arch.level_shapes()) == expected


@given(st.integers(1, 4), st.integers(1, 5), st.integers(2, 5), st.integers(1, 6))
def test_count_matches_closed_form(d, k0, L, kn):
    arch = Architecture(d, k0, L, kn)
    closed = kn * ((L - 2) * (k0 * k0 + k0) + k0 * (d + 2) + 1) + kn + 1
    assert count_weights(arch) == closed == arch.n_weights


def test_architecture_rejects_bad_shapes():
    for args in [(0, 2, 2, 1), (1, 0, 2, 1), (1, 2, 1, 1), (1, 2, 2, 0)]:
        with pytest.raises(ValueError):
            Architecture(*args)


def test_flat_index_round_trip():
    arch = Architecture(2, 3, 4, 2)
    seen = set()
    for s, shape in enumerate(arch.level_shapes()[:-1]):
        for k in range(arch.kn):
            if len(shape) == 3:
                for i in range(shape[1]):
                    for j in range(shape[2]):
                        seen.add(arch.flat_index(s, k, i, j))
            else:
                for j in range(shape[1]):
                    seen.add(arch.flat_index(s, k, 0, j))
    seen |= set(arch.output_indices().tolist())
    assert seen == set(range(arch.n_weights))


def test_logistic_reference_values():
    assert logistic(0.0) == 0.5
    assert logistic(math.log(7)) == pytest.approx(7 / 8, abs=1e-15)
    assert logistic(-math.log(7)) == pytest.approx(1 / 8, abs=1e-15)


def test_logistic_is_stable_at_extremes():
    x = np.array([-1e4, -800.0, 800.0, 1e4])
    with np.errstate(over="raise", invalid="raise"):
        y = logistic(x)
        s = logistic_slope(x)
    assert np.all(np.isfinite(y)) and y[0] == 0.0 and y[-1] == 1.0
    assert np.all(s >= 0) and np.all(s < 1e-300)


@given(st.floats(-700, 700))
def test_logistic_symmetry_and_slope(x):
    assert logistic(x) + logistic(-x) == pytest.approx(1.0, abs=1e-15)
    with mpmath.workdps(50):
        e = mpmath.exp(-mpmath.mpf(x))
        assert logistic(x) == pytest.approx(float(1 / (1 + e)), rel=1e-14, abs=1e-300)
        assert logistic_slope(x) == pytest.approx(float(e / (1 + e) ** 2), rel=1e-13, abs=1e-300)


def test_zero_output_layer_gives_zero(rng):
    arch = Architecture(2, 3, 3, 4)
    w = random_weights(rng, arch, 3.0).with_output(np.zeros(arch.kn + 1))
    assert np.all(predict(w, rng.uniform(-1, 1, (20, 2))) == 0.0)


def test_all_zero_weights_hidden_half():
    arch = Architecture(1, 2, 2, 1)
    trace = forward(WeightVector.zeros(arch), [0.3])
    assert np.all(trace.hidden[0] == 0.5)
    assert np.all(trace.last == 0.5)
    assert trace.output[0] == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(2, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_forward_matches_neuron_by_neuron(d, k0, L, kn, seed):
    rng = np.random.default_rng(seed)
    arch = Architecture(d, k0, L, kn)
    w = random_weights(rng, arch, 2.0)
    xs = rng.uniform(-1, 1, (3, d))
    got = predict(w, xs)
    want = [naive_forward(arch, w.values, x) for x in xs]
    np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-13)


def test_longdouble_forward_agrees(rng):
    arch = Architecture(2, 3, 3, 2)
    w = random_weights(rng, arch)
    xs = rng.uniform(-1, 1, (5, 2))
    hi = forward_batch(arch, w.values, xs, dtype=np.longdouble).output
    assert hi.dtype == np.longdouble
    np.testing.assert_allclose(hi.astype(float), predict(w, xs), rtol=1e-14)


def test_weight_vector_is_read_only_and_validated(rng):
    arch = Architecture(1, 2, 2, 2)
    w = random_weights(rng, arch)
    with pytest.raises(ValueError):
        w.values[0] = 1.0
    with pytest.raises(ValueError):
        WeightVector(arch, np.zeros(arch.n_weights + 1))
    bad = np.zeros(arch.n_weights)
    bad[0] = np.nan
    with pytest.raises(ValueError):
        WeightVector(arch, bad)


def test_serialization_round_trip_is_exact(tmp_path, rng):
    arch = Architecture(2, 4, 3, 3)
    w = random_weights(rng, arch, 1e3)
    assert loads_weights(dumps_weights(w)) == w
    path = tmp_path / "w.txt"
    save_weights(w, path)
    assert load_weights(path) == w
    assert path.read_text() == dumps_weights(w)
