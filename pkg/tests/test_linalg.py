import numpy as np
import pytest

from rankprune import linalg


def test_matvec_hand_values():
    m = linalg.as_matrix([[1, 2], [3, 4]])
    assert np.array_equal(linalg.matvec(m, linalg.as_vector([1, 1])), [3, 7])


def test_matvec_identity():
    assert np.array_equal(linalg.matvec(np.eye(3, dtype=np.float32),
                                        linalg.as_vector([5, 6, 7])), [5, 6, 7])


def test_matvec_worked_example_first_layer():
    w0 = linalg.as_matrix([[1, 2], [3, 4]])
    assert np.array_equal(linalg.matvec(w0, linalg.as_vector([1, 0])), [1, 3])


def test_matvec_shape_mismatch():
    with pytest.raises(linalg.ShapeError):
        linalg.matvec(linalg.as_matrix([[1, 2]]), linalg.as_vector([1, 2, 3]))


def test_col_abs_sums():
    assert np.array_equal(linalg.col_abs_sums(np.array([[1, 2], [3, 4]])), [4, 6])
    assert np.array_equal(linalg.col_abs_sums(np.zeros((2, 2))), [0, 0])
    assert np.array_equal(linalg.col_abs_sums(np.array([[1, -2], [-3, 4]])), [4, 6])


def test_delete_row_col():
    m = np.array([[1, 2], [3, 4]], dtype=np.float32)
    assert np.array_equal(linalg.delete_row(m, 0), [[3, 4]])
    assert np.array_equal(linalg.delete_col(m, 1), [[1], [3]])
    with pytest.raises(IndexError):
        linalg.delete_row(m, 2)
    with pytest.raises(IndexError):
        linalg.delete_col(m, -1)


def test_l2_norm():
    assert linalg.l2_norm(np.array([3.0, 4.0])) == 5.0


def test_rejects_non_finite():
    with pytest.raises(ValueError):
        linalg.as_matrix([[1.0, np.nan]])
    with pytest.raises(ValueError):
        linalg.as_vector([np.inf])


def test_matvec_linearity():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((5, 4)).astype(np.float32)
    u, v = rng.standard_normal(4), rng.standard_normal(4)
    a, b = 2.5, -1.25
    lhs = linalg.matvec(m, (a * u + b * v).astype(np.float32))
    rhs = a * linalg.matvec(m, u.astype(np.float32)) \
        + b * linalg.matvec(m, v.astype(np.float32))
    assert np.allclose(lhs, rhs, rtol=1e-6)


def test_delete_commutes_on_distinct_indices():
    rng = np.random.default_rng(1)
    m = rng.standard_normal((4, 4)).astype(np.float32)
    a = linalg.delete_col(linalg.delete_row(m, 1), 2)
    b = linalg.delete_row(linalg.delete_col(m, 2), 1)
    assert np.array_equal(a, b)
