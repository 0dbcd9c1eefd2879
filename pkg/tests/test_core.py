import numpy as np
import pytest
from hypothesis import given, strategies as st

from spectrec.core import (
    GradientOperator,
    SamplingMask,
    SpectrumImage,
    apply_gradient,
    apply_gradient_adjoint,
    apply_laplacian,
    make_random_mask,
    restrict,
    scatter,
)
from spectrec.errors import DataError, IncompatibleMaskError


def dense_gradient(h, w):
    """Independent construction of D as explicit (Np, 2Np) matrix."""
    n = h * w
    d = np.zeros((n, 2 * n))
    for y in range(h):
        for x in range(w):
            p = y * w + x
            if x + 1 < w:
                d[p + 1, p] += 1.0
                d[p, p] -= 1.0
            if y + 1 < h:
                d[p + w, n + p] += 1.0
                d[p, n + p] -= 1.0
    return d


def test_spectrum_image_validation():
    img = SpectrumImage(np.zeros((3, 6)), 2, 3)
    assert img.shape == (3, 2, 3)
    assert img.pixel_coords(4) == (1, 1)
    with pytest.raises(DataError):
        SpectrumImage(np.zeros((3, 5)), 2, 3)
    with pytest.raises(DataError):
        SpectrumImage(np.full((1, 1), np.nan), 1, 1)
    with pytest.raises(DataError):
        SpectrumImage(np.zeros(4), 2, 2)


def test_cube_round_trip(rng):
    cube = rng.normal(size=(4, 3, 5))
    img = SpectrumImage.from_cube(cube)
    assert np.array_equal(img.to_cube(), cube)
    # row-major pixel order
    assert img.data[2, 1 * 5 + 3] == cube[2, 1, 3]


def test_pixel_mapping_is_bijection():
    img = SpectrumImage(np.zeros((1, 12)), 3, 4)
    coords = {img.pixel_coords(p) for p in range(12)}
    assert coords == {(y, x) for y in range(3) for x in range(4)}


@pytest.mark.parametrize("idx", [[0, 0, 1], [2, 1], [-1, 2], [0, 4]])
def test_mask_rejects_bad_indices(idx):
    with pytest.raises(DataError):
        SamplingMask(np.array(idx), 4)


def test_mask_basics():
    m = SamplingMask(np.array([1, 3]), 4)
    assert m.ns == 2 and m.ratio == 0.5
    assert m == SamplingMask([1, 3], 4)
    assert list(m.boolean()) == [False, True, False, True]
    with pytest.raises(ValueError):
        m.indices[0] = 2


def test_restrict_full_mask_is_identity(rng):
    x = rng.normal(size=(3, 6))
    assert np.array_equal(restrict(x, SamplingMask.full(6)), x)


def test_restrict_selects_columns():
    data = np.tile(np.arange(4.0), (2, 1))
    out = restrict(SpectrumImage(data, 2, 2), SamplingMask([0, 2], 4))
    assert np.array_equal(out, [[0, 2], [0, 2]])


def test_restrict_scatter_round_trip(rng):
    x = rng.normal(size=(5, 100))
    m = make_random_mask(100, 20, seed=3)
    xi = restrict(x, m)
    assert xi.shape == (5, 20)
    assert np.array_equal(restrict(scatter(xi, m), m), xi)


def test_restrict_scatter_adjoint(rng):
    m = make_random_mask(30, 7, seed=1)
    x = rng.normal(size=(2, 30))
    c = rng.normal(size=(2, 7))
    assert np.isclose(np.vdot(restrict(x, m), c), np.vdot(x, scatter(c, m)))


def test_restrict_mismatch():
    with pytest.raises(IncompatibleMaskError):
        restrict(np.zeros((2, 5)), SamplingMask.full(4))


def test_gradient_constant_image():
    op = GradientOperator(3, 4)
    assert not np.any(apply_gradient(np.full((2, 12), 7.0), op))
    assert not np.any(apply_laplacian(np.full((2, 12), 7.0), op))


def test_gradient_two_pixels():
    g = apply_gradient(np.array([[0.0, 1.0]]), GradientOperator(1, 2))
    assert np.array_equal(g, [[1.0, 0.0, 0.0, 0.0]])
    assert np.sum(g**2) == 1.0


@pytest.mark.parametrize("h,w", [(5, 5), (1, 4), (3, 1), (2, 7)])
def test_gradient_matches_dense_oracle(rng, h, w):
    x = rng.normal(size=(3, h * w))
    d = dense_gradient(h, w)
    op = GradientOperator(h, w)
    np.testing.assert_allclose(apply_gradient(x, op), x @ d, atol=1e-12)
    v = rng.normal(size=(3, 2 * h * w))
    np.testing.assert_allclose(apply_gradient_adjoint(v, op), v @ d.T, atol=1e-12)
    np.testing.assert_allclose(op.dense(), d, atol=0)
    np.testing.assert_array_equal(op.sparse_gradient.toarray(), d)
    np.testing.assert_array_equal(op.sparse_laplacian.toarray(), -d @ d.T)


def test_laplacian_matches_dense_oracle(rng):
    d = dense_gradient(4, 4)
    x = rng.normal(size=(1, 16))
    np.testing.assert_allclose(apply_laplacian(x, GradientOperator(4, 4)), -x @ d @ d.T,
                               atol=1e-12)
    lap = -d @ d.T
    assert np.allclose(lap, lap.T)
    assert np.linalg.eigvalsh(lap).max() <= 1e-12


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 3), st.integers(0, 2**31))
def test_gradient_adjoint_identity(h, w, k, seed):
    rng = np.random.default_rng(seed)
    op = GradientOperator(h, w)
    u = rng.normal(size=(k, h * w))
    v = rng.normal(size=(k, 2 * h * w))
    lhs = np.vdot(apply_gradient(u, op), v)
    rhs = np.vdot(u, apply_gradient_adjoint(v, op))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
def test_laplacian_is_minus_ddt(h, w, seed):
    rng = np.random.default_rng(seed)
    op = GradientOperator(h, w)
    x = rng.normal(size=(2, h * w))
    np.testing.assert_allclose(
        apply_laplacian(x, op), -apply_gradient_adjoint(apply_gradient(x, op), op), atol=1e-12
    )


@pytest.mark.parametrize("h,w", [(2, 2), (3, 5), (8, 8), (16, 9)])
def test_laplacian_norm_below_eight(h, w):
    op = GradientOperator(h, w)
    v = np.random.default_rng(0).normal(size=(1, h * w))
    est = 0.0
    for _ in range(500):
        v = apply_laplacian(v, op)
        est = np.linalg.norm(v)
        v /= est
    assert est <= 8.0 + 1e-9


def test_random_unit_vectors_laplacian_bound(rng):
    op = GradientOperator(10, 10)
    v = rng.normal(size=(200, 100))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    assert np.linalg.norm(apply_laplacian(v, op), axis=1).max() <= 8.0


def test_make_random_mask():
    assert np.array_equal(make_random_mask(10, 10, seed=0).indices, np.arange(10))
    one = make_random_mask(10, 1, seed=4)
    assert one.ns == 1 and 0 <= one.indices[0] < 10
    m = make_random_mask(10000, 2000, seed=7)
    assert m.ratio == 0.2
    assert make_random_mask(10000, 2000, seed=7) == m
    assert make_random_mask(10000, 2000, seed=8) != m
    for ns in (0, 11):
        with pytest.raises(DataError):
            make_random_mask(10, ns, seed=0)
