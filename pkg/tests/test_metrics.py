import numpy as np
import pytest
from hypothesis import given, strategies as st

from spectrec.errors import DataError
from spectrec.metrics import EvalReport, asad, invert_abundances, match_columns, nmse
from spectrec.phantom import make_abundance_maps, make_endmembers


def test_nmse_examples(rng):
    x = rng.normal(size=(4, 9))
    assert nmse(x, x) == 0.0
    assert nmse(x, np.zeros_like(x)) == 1.0
    assert nmse(x, 2 * x) == pytest.approx(1.0)
    with pytest.raises(DataError):
        nmse(np.zeros((2, 2)), np.ones((2, 2)))
    with pytest.raises(DataError):
        nmse(x, x[:, :3])


@given(st.integers(0, 2**31))
def test_nmse_pixel_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    x, e = rng.normal(size=(2, 3, 10))
    p = rng.permutation(10)
    assert nmse(x[:, p], e[:, p]) == pytest.approx(nmse(x, e), rel=1e-12)


def test_asad_examples(rng):
    m = rng.random((20, 3)) + 0.1
    assert asad(m, m) == pytest.approx(0.0, abs=1e-7)
    assert asad(m, 2 * m) == pytest.approx(0.0, abs=1e-7)
    assert asad(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])) == pytest.approx(np.pi / 2)
    with pytest.raises(DataError):
        asad(np.zeros((3, 1)), np.ones((3, 1)))


@given(st.integers(0, 2**31))
def test_asad_scale_and_order_invariant(seed):
    rng = np.random.default_rng(seed)
    m = rng.random((15, 4)) + 0.05
    e = m + 0.05 * rng.random((15, 4))
    base = asad(m, e)
    scaled = e * rng.uniform(0.1, 10, size=4)
    assert asad(m, scaled) == pytest.approx(base, abs=1e-9)
    assert asad(m, e[:, rng.permutation(4)]) == pytest.approx(base, abs=1e-9)
    assert 0 <= base <= np.pi


def test_match_columns_pairs_permutation(rng):
    m = make_endmembers(60, 4, seed=2)
    perm = [2, 0, 3, 1]
    pairs, angles = match_columns(m, m[:, perm])
    assert pairs == [(perm[j], j) for j in range(4)][::1] or sorted(pairs) == pairs
    assert {i: j for i, j in pairs} == {perm[j]: j for j in range(4)}
    assert np.allclose(angles, 0, atol=1e-7)


def test_invert_exact_recovery():
    m = make_endmembers(60, 4, seed=0)
    a = make_abundance_maps(8, 8, 4, seed=1)
    got = invert_abundances(m @ a, m)
    assert np.max(np.abs(got - a)) < 1e-6


def test_invert_one_hot():
    m = make_endmembers(40, 3, seed=5)
    got = invert_abundances(m[:, [1]] * 2.0, m, sum_to_one=True)
    np.testing.assert_allclose(got[:, 0], [0, 1, 0], atol=1e-6)


def test_invert_nonnegative_and_monotone(rng):
    m = rng.random((30, 5))
    x = rng.normal(size=(30, 40))
    a, trace = invert_abundances(x, m, return_trace=True)
    assert np.all(a >= 0)
    assert np.all(np.diff(trace) <= 1e-10 * max(trace))


def test_invert_matches_scipy_nnls(rng):
    from scipy.optimize import nnls

    m = rng.random((25, 4))
    x = rng.random((25, 6))
    got = invert_abundances(x, m, max_iters=20000, tol=1e-14)
    for p in range(6):
        np.testing.assert_allclose(got[:, p], nnls(m, x[:, p])[0], atol=1e-6)


def test_invert_rejects_rank_deficient(rng):
    m = rng.random((10, 2))
    with pytest.raises(DataError, match="rank"):
        invert_abundances(rng.random((10, 3)), np.hstack([m, m[:, :1]]))


def test_eval_report():
    m = make_endmembers(50, 3, seed=0)
    a = make_abundance_maps(6, 6, 3, seed=0)
    x = m @ a
    rep = EvalReport.evaluate(x, x, m, a)
    assert rep.nmse_image == 0 and rep.nmse_abundance < 1e-12
    assert rep.asad < 1e-6 and len(rep.sad_per_component) == 3
    assert set(rep.to_dict()) == {"nmse_image", "asad", "nmse_abundance", "sad_per_component"}
    only = EvalReport.evaluate(x, 0.5 * x)
    assert only.asad is None and only.nmse_image == pytest.approx(0.25)
    with pytest.raises(DataError):
        EvalReport(-1.0)
