import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from core.errors import DimensionError, NonFiniteError
from core.numerics import frobenius_norm, hermitian, is_semi_unitary, matmul, svd


def _naive_product(A, B):
    out = np.zeros((A.shape[0], B.shape[1]), dtype=complex)
    for i in range(A.shape[0]):
        for j in range(B.shape[1]):
            for k in range(A.shape[1]):
                out[i, j] += A[i, k] * B[k, j]
    return out


class TestMatmul:

    def test_identity(self):
        A = np.array([[1 + 2j, 3], [4j, -1]])
        assert_array_equal(matmul(np.eye(2), A), A)

    def test_imaginary_unit_squares_to_minus_one(self):
        D = np.diag([1j, 1j])
        assert_array_equal(matmul(D, D), np.diag([-1, -1]))

    def test_matches_triple_loop(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
        B = rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4))
        assert_allclose(matmul(A, B), _naive_product(A, B), atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))


class TestHermitian:

    def test_real_symmetric_is_unchanged(self):
        A = np.array([[2.0, 1.0], [1.0, 3.0]])
        assert_array_equal(hermitian(A), A)

    def test_scalar_conjugate(self):
        assert_array_equal(hermitian(np.array([[1j]])), np.array([[-1j]]))

    def test_involution(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
        assert_array_equal(hermitian(hermitian(A)), A)
        assert hermitian(A).shape == (5, 3)


class TestSvd:

    def test_identity(self):
        assert_allclose(svd(np.eye(2)).sigma, [1.0, 1.0])

    def test_diagonal(self):
        assert_allclose(svd(np.diag([3.0, 1.0])).sigma, [3.0, 1.0])

    def test_singular_values_match_gram_eigenvalues(self):
        rng = np.random.default_rng(2)
        A = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
        factors = svd(A)
        eig = np.sort(np.linalg.eigvalsh(hermitian(A) @ A))[::-1]
        assert_allclose(factors.sigma ** 2, eig, rtol=1e-10)

    @pytest.mark.parametrize("shape", [(2, 4), (4, 2), (3, 3), (1, 5)])
    def test_reconstruction_and_orthogonality(self, shape):
        rng = np.random.default_rng(3)
        A = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        f = svd(A)
        assert frobenius_norm(f.reconstruct() - A) <= 1e-10 * frobenius_norm(A)
        assert is_semi_unitary(f.U) and is_semi_unitary(f.V)
        assert np.all(np.diff(f.sigma) <= 0)
        assert f.rank_dim == min(shape)

    def test_non_finite_input(self):
        with pytest.raises(NonFiniteError):
            svd(np.array([[1.0, np.nan], [0.0, 1.0]]))


class TestFrobeniusNorm:

    def test_identity(self):
        assert_allclose(frobenius_norm(np.eye(3)), np.sqrt(3))

    def test_zero(self):
        assert frobenius_norm(np.zeros((2, 2))) == 0.0

    def test_batched(self):
        stack = np.stack([np.eye(2), 2 * np.eye(2)])
        assert_allclose(frobenius_norm(stack), [np.sqrt(2), 2 * np.sqrt(2)])
