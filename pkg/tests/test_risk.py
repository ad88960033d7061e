import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_data, random_weights
from interpolab.core_net import Architecture, WeightVector, predict
from interpolab.risk import (
    Dataset,
    analytic_gradient,
    central_difference,
    conditional_mean,
    conditional_mean_at_samples,
    empirical_risk,
    expansion_gradient,
    finite_difference_gradient,
    interpolation_gap,
    interpolation_optimum,
    load_dataset_csv,
    risk_and_gradient,
    save_dataset_csv,
)


def test_dataset_shapes_and_validation():
    data = Dataset([0.1, 0.2], [1, -1])
    assert data.xs.shape == (2, 1) and data.n == 2 and data.d == 1
    with pytest.raises(ValueError):
        Dataset([[0.1], [0.2]], [1.0])
    with pytest.raises(ValueError):
        Dataset([0.1], [np.inf])


def test_risk_with_zero_output_layer_is_mean_square_response(rng):
    arch = Architecture(2, 3, 3, 4)
    w = random_weights(rng, arch, 5).with_output(np.zeros(arch.kn + 1))
    data = random_data(rng, 2, 7)
    assert empirical_risk(w, data) == pytest.approx(np.mean(data.ys ** 2), rel=1e-15)


def test_risk_single_point_residual():
    arch = Architecture(1, 2, 2, 1)
    assert empirical_risk(WeightVector.zeros(arch), Dataset([0.5], [2.0])) == 4.0


def test_risk_of_exact_fit_is_zero(rng):
    arch = Architecture(1, 2, 2, 3)
    w = random_weights(rng, arch)
    xs = rng.uniform(-1, 1, (5, 1))
    assert empirical_risk(w, Dataset(xs, predict(w, xs))) == 0.0


def test_output_partials_are_the_features(rng):
    # d F / d c_i^{(L)} = (2/n) sum_l resid_l * f_i(X_l), with f_0 = 1
    arch = Architecture(2, 3, 2, 3)
    w = random_weights(rng, arch)
    data = random_data(rng, 2, 6)
    from interpolab.core_net import forward_batch

    trace = forward_batch(arch, w.values, data.xs)
    resid = trace.output - data.ys
    feats = np.hstack([np.ones((data.n, 1)), trace.last])
    want = 2 / data.n * feats.T @ resid
    np.testing.assert_allclose(analytic_gradient(w, data)[arch.output_indices()], want, rtol=1e-13)


def test_zero_output_layer_kills_inner_gradient(rng):
    arch = Architecture(1, 3, 3, 2)
    w = random_weights(rng, arch).with_output(np.zeros(arch.kn + 1))
    g = analytic_gradient(w, random_data(rng, 1, 4))
    inner = np.setdiff1d(np.arange(arch.n_weights), arch.output_indices())
    assert np.all(g[inner] == 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(2, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_gradient_three_way_agreement(d, k0, L, kn, seed):
    rng = np.random.default_rng(seed)
    arch = Architecture(d, k0, L, kn)
    w = random_weights(rng, arch, 2.0)
    data = random_data(rng, d, int(rng.integers(1, 5)))
    g = analytic_gradient(w, data)
    fd = finite_difference_gradient(w, data)
    ex = expansion_gradient(w, data)
    np.testing.assert_allclose(g, ex, rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(g, fd, rtol=1e-7, atol=1e-10)


def test_gradient_in_saturation_is_tiny_but_consistent():
    arch = Architecture(1, 2, 2, 1)
    values = np.full(arch.n_weights, 40.0)
    w = WeightVector(arch, values)
    data = Dataset([0.5, -0.5], [0.3, -0.2])
    g = analytic_gradient(w, data)
    ex = expansion_gradient(w, data)
    np.testing.assert_allclose(g, ex, rtol=1e-10, atol=0)


def test_risk_and_gradient_consistent(rng):
    arch = Architecture(2, 2, 3, 2)
    w = random_weights(rng, arch)
    data = random_data(rng, 2, 4)
    r, g = risk_and_gradient(w, data)
    assert r == pytest.approx(empirical_risk(w, data), rel=1e-15)
    np.testing.assert_array_equal(g, analytic_gradient(w, data))


def test_central_difference_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        central_difference(lambda v: float(v @ v), np.ones(2), h=0.0)
    with pytest.raises(ValueError):
        finite_difference_gradient(WeightVector.zeros(Architecture(1, 2, 2, 1)), Dataset([0.1], [1.0]), h=-1e-6)


def test_central_difference_on_quadratic():
    x = np.array([0.3, -2.0, 5.0])
    got = central_difference(lambda v: (v * v).sum() * np.longdouble(0.5), x)
    np.testing.assert_allclose(got.astype(float), x, rtol=1e-12)


TOY = Dataset([0.3, 0.3, 0.7], [1.0, -1.0, 1.0])


def test_conditional_mean_examples():
    cm = conditional_mean(TOY)
    assert cm(0.3) == 0.0 and cm(0.7) == 1.0
    assert cm(0.5) == 0.0
    assert cm.counts[np.array([0.3]).tobytes()] == 2
    np.testing.assert_array_equal(conditional_mean_at_samples(TOY), [0.0, 0.0, 1.0])


def test_interpolation_optimum_examples():
    assert interpolation_optimum(TOY) == pytest.approx(2 / 3, abs=1e-15)
    assert interpolation_optimum(Dataset([0.1, 0.2, 0.3], [1, -1, 5])) == 0.0
    assert interpolation_optimum(Dataset([0.4] * 6, [1, -1] * 3)) == 1.0


def test_signed_zero_inputs_are_one_group():
    data = Dataset([0.0, -0.0], [1.0, -1.0])
    assert interpolation_optimum(data) == 1.0
    assert conditional_mean(data)(-0.0) == 0.0


def test_distinct_inputs_mean_is_response(rng):
    data = random_data(rng, 2, 9)
    np.testing.assert_array_equal(conditional_mean_at_samples(data), data.ys)


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.int64, st.integers(1, 12), elements=st.integers(0, 3)),
    st.integers(0, 2**32 - 1),
)
def test_risk_decomposes_into_optimum_plus_gap(groups, seed):
    # Pythagorean split: (1/n)|f - Y|^2 = optimum + (1/n)|f - mbar|^2
    rng = np.random.default_rng(seed)
    xs = groups.astype(float) / 4
    data = Dataset(xs, rng.choice([-1.0, 1.0], size=xs.size))
    preds = rng.normal(size=4)[groups]  # a function of x, as the split requires
    risk = float(np.mean((preds - data.ys) ** 2))
    assert risk == pytest.approx(interpolation_optimum(data) + interpolation_gap(preds, data), abs=1e-10)
    assert interpolation_gap(preds, data) >= 0


def test_csv_round_trip(tmp_path, rng):
    data = random_data(rng, 3, 6)
    for header in (False, True):
        path = tmp_path / f"d{header}.csv"
        save_dataset_csv(data, path, header=header)
        back = load_dataset_csv(path, header=header)
        np.testing.assert_array_equal(back.xs, data.xs)
        np.testing.assert_array_equal(back.ys, data.ys)


@pytest.mark.parametrize(
    "text, line",
    [("0.1,1\n0.2\n", 2), ("0.1,1\n\n0.2,abc\n", 3), ("0.1,1\nnan,1\n", 2)],
)
def test_csv_errors_name_the_line(tmp_path, text, line):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ValueError, match=f"bad.csv:{line}:"):
        load_dataset_csv(path)
