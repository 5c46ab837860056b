"""Tests for dense linear-algebra primitives and seeded randomness."""

import numpy as np
import pytest

from spal.core import (
    OperatorNormError,
    SeededRng,
    as_matrix,
    as_vector,
    check_finite,
    kron_identity,
    operator_norm,
)


def _norm_oracle(A):
    # Independent route: largest eigenvalue of the Gram matrix via LAPACK.
    A = np.atleast_2d(np.asarray(A, dtype=float))
    w = np.linalg.eigvalsh(A.T @ A)
    return float(np.sqrt(max(w[-1], 0.0)))


def test_operator_norm_identity():
    assert operator_norm(np.eye(3)) == pytest.approx(1.0, abs=1e-8)


def test_operator_norm_diagonal():
    assert operator_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0, abs=1e-8)


def test_operator_norm_shear_is_golden_ratio():
    # Largest singular value of [[1,1],[0,1]] is the golden ratio.
    got = operator_norm(np.array([[1.0, 1.0], [0.0, 1.0]]))
    assert got == pytest.approx(1.6180339887, abs=1e-6)
    assert got == pytest.approx(_norm_oracle([[1.0, 1.0], [0.0, 1.0]]), abs=1e-8)


def test_operator_norm_zero_matrix():
    assert operator_norm(np.zeros((3, 2))) == 0.0


def test_operator_norm_vs_eigh_random():
    rng = np.random.default_rng(42)
    for k in range(25):
        m = int(rng.integers(1, 7))
        n = int(rng.integers(1, 7))
        A = rng.standard_normal((m, n)) * 10.0 ** rng.integers(-2, 3)
        assert operator_norm(A) == pytest.approx(_norm_oracle(A), rel=1e-6, abs=1e-10)


def test_operator_norm_transpose_invariant():
    rng = np.random.default_rng(7)
    for _ in range(10):
        A = rng.standard_normal((4, 9))
        assert operator_norm(A) == pytest.approx(operator_norm(A.T), rel=1e-7)


def test_operator_norm_rank_deficient():
    # One nonzero singular value, the rest exactly zero.
    u = np.array([1.0, 2.0, 2.0]) / 3.0
    v = np.array([0.0, 1.0])
    A = 5.0 * np.outer(u, v)
    assert operator_norm(A) == pytest.approx(5.0, rel=1e-7)


def test_operator_norm_iteration_cap():
    with pytest.raises(OperatorNormError) as exc:
        operator_norm(np.diag([1.0, 1.0 - 1e-12]), tol=1e-300, max_iter=5)
    assert exc.value.iterations == 5
    assert exc.value.estimate > 0.9


def test_operator_norm_vector_input():
    # 1-D input is promoted to a single-row matrix.
    assert operator_norm([3.0, 4.0]) == pytest.approx(5.0, abs=1e-8)


def test_kron_identity_difference_row():
    W = np.array([[1.0, -1.0]])
    got = kron_identity(W, 2)
    want = np.array(
        [
            [1.0, 0.0, -1.0, 0.0],
            [0.0, 1.0, 0.0, -1.0],
        ]
    )
    np.testing.assert_array_equal(got, want)


def test_kron_identity_scalar_block():
    got = kron_identity(np.array([[2.0]]), 2)
    np.testing.assert_array_equal(got, np.array([[2.0, 0.0], [0.0, 2.0]]))


def test_kron_identity_blockwise_action():
    # (W (x) I_n) applied to stacked vectors acts blockwise: row i of the
    # result is sum_j W[i, j] * x_j for per-node vectors x_j.
    rng = np.random.default_rng(3)
    W = rng.standard_normal((4, 5))
    n = 3
    X = rng.standard_normal((5, n))  # five stacked node vectors
    out = kron_identity(W, n) @ X.reshape(-1)
    want = (W @ X).reshape(-1)
    np.testing.assert_allclose(out, want, atol=1e-12)


def test_kron_identity_rejects_bad_n():
    with pytest.raises(ValueError):
        kron_identity(np.eye(2), 0)


def test_as_vector_coercions():
    v = as_vector([1, 2, 3], "v")
    assert v.dtype == np.float64 and v.shape == (3,)
    s = as_vector(2.5, "s")
    assert s.shape == (1,) and s[0] == 2.5
    with pytest.raises(ValueError):
        as_vector(np.ones((2, 2)), "m")


def test_as_matrix_coercions():
    m = as_matrix([[1, 2], [3, 4]], "m")
    assert m.dtype == np.float64 and m.shape == (2, 2)
    row = as_matrix([1.0, 2.0], "row")
    assert row.shape == (1, 2)
    with pytest.raises(ValueError):
        as_matrix(np.ones((2, 2, 2)), "cube")


def test_check_finite():
    check_finite(np.ones(3), "ok")
    with pytest.raises(ValueError, match="bad"):
        check_finite(np.array([1.0, np.nan]), "bad")
    with pytest.raises(ValueError):
        check_finite(np.array([np.inf]), "inf")


def test_seeded_rng_reproducible():
    a = SeededRng(123).standard_normal(8)
    b = SeededRng(123).standard_normal(8)
    np.testing.assert_array_equal(a, b)


def test_seeded_rng_child_streams_differ():
    root = SeededRng(9)
    c0 = root.child(0).standard_normal(6)
    c1 = root.child(1).standard_normal(6)
    again = SeededRng(9).child(0).standard_normal(6)
    assert not np.array_equal(c0, c1)
    np.testing.assert_array_equal(c0, again)


def test_seeded_rng_nested_children():
    a = SeededRng(5).child(2).child(7).uniform(size=4)
    b = SeededRng(5, stream=(2, 7)).uniform(size=4)
    np.testing.assert_array_equal(a, b)
