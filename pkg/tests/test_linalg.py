import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetattn.errors import InvalidInput
from hetattn.linalg import eigh_symmetric, softmax_rows


def path3_laplacian():
    s = 1.0 / np.sqrt(2.0)
    return np.array([[1.0, -s, 0.0], [-s, 1.0, -s], [0.0, -s, 1.0]])


def test_identity_eigenvalues():
    dec = eigh_symmetric(np.eye(2))
    np.testing.assert_allclose(dec.eigenvalues, [1.0, 1.0])
    np.testing.assert_allclose(dec.eigenvectors.T @ dec.eigenvectors, np.eye(2), atol=1e-12)


def test_zero_matrix():
    dec = eigh_symmetric(np.zeros((2, 2)))
    np.testing.assert_allclose(dec.eigenvalues, [0.0, 0.0])


def test_path3_spectrum_and_residual():
    # Characteristic polynomial of the 3-node path Laplacian gives 0, 1, 2.
    lap = path3_laplacian()
    dec = eigh_symmetric(lap)
    np.testing.assert_allclose(dec.eigenvalues, [0.0, 1.0, 2.0], atol=1e-10)
    assert dec.residual(lap).max() <= 1e-10


def test_rejects_nonsquare_and_asymmetric():
    with pytest.raises(InvalidInput):
        eigh_symmetric(np.ones((2, 3)))
    bad = np.array([[1.0, 2.0], [1.0, 1.0]])
    with pytest.raises(InvalidInput):
        eigh_symmetric(bad)
    with pytest.raises(InvalidInput):
        eigh_symmetric(np.array([[np.nan, 0.0], [0.0, 1.0]]))
    with pytest.raises(InvalidInput):
        eigh_symmetric(np.eye(2), tol=0.0)


def test_deterministic_for_fixed_input():
    a = np.random.default_rng(3).normal(size=(10, 10))
    a = (a + a.T) / 2
    d1 = eigh_symmetric(a)
    d2 = eigh_symmetric(a)
    assert np.array_equal(d1.eigenvalues, d2.eigenvalues)
    assert np.array_equal(d1.eigenvectors, d2.eigenvectors)


@pytest.mark.parametrize("seed", range(8))
def test_random_20x20_reconstruction(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(20, 20))
    a = (a + a.T) / 2
    dec = eigh_symmetric(a)
    rec = dec.eigenvectors @ np.diag(dec.eigenvalues) @ dec.eigenvectors.T
    assert np.linalg.norm(rec - a) <= 1e-8 * np.linalg.norm(a)
    gram = dec.eigenvectors.T @ dec.eigenvectors
    assert np.abs(gram - np.eye(20)).max() <= 1e-8
    assert np.all(np.diff(dec.eigenvalues) >= -1e-12)


def test_softmax_rows_examples():
    out, empty = softmax_rows(np.array([[0.0, 0.0]]))
    np.testing.assert_allclose(out, [[0.5, 0.5]])
    assert not empty[0]

    out, _ = softmax_rows(np.array([[7.3]]))
    np.testing.assert_allclose(out, [[1.0]])

    out, _ = softmax_rows(np.array([[np.log(2.0), 0.0]]))
    np.testing.assert_allclose(out, [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-15)


def test_softmax_rows_masked_and_empty_signal():
    m = np.array([[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]])
    mask = np.array([[True, False, True], [False, False, False]])
    out, empty = softmax_rows(m, mask)
    assert out[0, 1] == 0.0
    assert abs(out[0].sum() - 1.0) < 1e-9
    assert np.all(out[1] == 0.0)
    assert list(empty) == [False, True]


def test_softmax_rows_rejects_bad_shapes():
    with pytest.raises(InvalidInput):
        softmax_rows(np.zeros(3))
    with pytest.raises(InvalidInput):
        softmax_rows(np.zeros((2, 2)), np.zeros((2, 3), dtype=bool))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=1, max_size=6), st.floats(-100, 100))
def test_softmax_shift_invariance(row, shift):
    base, _ = softmax_rows(np.array([row]))
    shifted, _ = softmax_rows(np.array([row]) + shift)
    assert np.abs(base - shifted).max() <= 1e-12
