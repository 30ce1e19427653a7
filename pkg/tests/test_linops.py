import numpy as np
import pytest

from stmp.linops import (
    DenseOperator,
    PartialOrthogonalOperator,
    SvdOperator,
    build_partial_orthogonal,
)
from stmp.harness.verify import naive_dct2


def naive_matvec(a, x):
    """Triple-loop reference, independent of numpy's matmul."""
    m, n = a.shape
    out = np.zeros(m)
    for i in range(m):
        acc = 0.0
        for j in range(n):
            acc += a[i][j] * x[j]
        out[i] = acc
    return out


class TestDenseOperator:
    def test_diagonal_apply(self):
        op = DenseOperator([[1.0, 0.0], [0.0, 2.0]])
        np.testing.assert_array_equal(op.apply([3.0, 4.0]), [3.0, 8.0])

    def test_diagonal_adjoint(self):
        op = DenseOperator([[1.0, 0.0], [0.0, 2.0]])
        np.testing.assert_array_equal(op.apply_adjoint([3.0, 8.0]), [3.0, 16.0])

    def test_apply_matches_naive_matvec(self):
        rng = np.random.Generator(np.random.Philox(1))
        a = rng.standard_normal((8, 16))
        x = rng.standard_normal(16)
        op = DenseOperator(a)
        np.testing.assert_allclose(op.apply(x), naive_matvec(a, x), atol=1e-12)

    def test_diagonal_spectrum(self):
        op = DenseOperator([[2.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(op.gram_spectrum(), [4.0, 1.0], atol=1e-12)

    def test_spectrum_sums_to_frobenius_norm(self):
        rng = np.random.Generator(np.random.Philox(2))
        a = rng.standard_normal((8, 16))
        op = DenseOperator(a)
        assert op.gram_spectrum().sum() == pytest.approx(np.sum(a * a), rel=1e-10)

    def test_spectrum_cached(self):
        op = DenseOperator(np.eye(3))
        assert op.gram_spectrum() is op.gram_spectrum()

    def test_dimension_mismatch_reports_both(self):
        op = DenseOperator(np.ones((3, 5)))
        with pytest.raises(ValueError, match="length-5.*\\(4,\\)"):
            op.apply(np.ones(4))
        with pytest.raises(ValueError, match="length-3.*\\(5,\\)"):
            op.apply_adjoint(np.ones(5))

    def test_rejects_nonfinite_entries(self):
        with pytest.raises(ValueError, match="finite"):
            DenseOperator([[1.0, np.inf]])


class TestSvdOperator:
    @staticmethod
    def random_svd_op(m, n, seed):
        rng = np.random.Generator(np.random.Philox(seed))
        u, s, vt = np.linalg.svd(rng.standard_normal((m, n)), full_matrices=True)
        return SvdOperator(u, s, vt.T), u @ np.hstack([np.diag(s), np.zeros((m, n - m))]) @ vt

    def test_apply_matches_dense(self):
        op, a = self.random_svd_op(6, 10, 3)
        rng = np.random.Generator(np.random.Philox(4))
        x = rng.standard_normal(10)
        np.testing.assert_allclose(op.apply(x), a @ x, atol=1e-12)
        r = rng.standard_normal(6)
        np.testing.assert_allclose(op.apply_adjoint(r), a.T @ r, atol=1e-12)

    def test_spectrum_is_squared_singular_values(self):
        op, a = self.random_svd_op(6, 10, 5)
        np.testing.assert_allclose(op.gram_spectrum(), np.linalg.svd(a, compute_uv=False) ** 2, atol=1e-10)

    def test_rejects_non_orthogonal_factor(self):
        with pytest.raises(ValueError, match="orthogonal"):
            SvdOperator(np.ones((2, 2)), np.array([1.0, 0.5]), np.eye(2))

    def test_rejects_unsorted_singular_values(self):
        with pytest.raises(ValueError, match="nonincreasing"):
            SvdOperator(np.eye(2), np.array([0.5, 1.0]), np.eye(2))

    def test_rejects_negative_singular_values(self):
        with pytest.raises(ValueError, match="nonnegative"):
            SvdOperator(np.eye(2), np.array([1.0, -0.5]), np.eye(2))


class TestPartialOrthogonal:
    def test_first_dct_row_is_scaled_average(self):
        # orthonormal DCT-II row 0 is 1/sqrt(N), so selecting it sums/sqrt(N)
        op = PartialOrthogonalOperator([0], np.ones(4))
        np.testing.assert_allclose(op.apply(np.ones(4)), [2.0], atol=1e-12)

    def test_full_square_case_inverts(self):
        op = build_partial_orthogonal(32, 32, 9)
        rng = np.random.Generator(np.random.Philox(10))
        x = rng.standard_normal(32)
        np.testing.assert_allclose(op.apply_adjoint(op.apply(x)), x, atol=1e-10)

    def test_gram_spectrum_exactly_ones(self):
        op = build_partial_orthogonal(16, 3, 1)
        assert (op.gram_spectrum() == np.ones(3)).all()

    def test_row_gram_is_identity(self):
        op = build_partial_orthogonal(4, 4, 123)
        a = op.to_dense()
        np.testing.assert_allclose(a @ a.T, np.eye(4), atol=1e-12)

    def test_row_gram_large(self):
        op = build_partial_orthogonal(256, 128, 7)
        a = op.to_dense()
        assert np.abs(a @ a.T - np.eye(128)).max() < 1e-10

    def test_seed_determinism(self):
        op1 = build_partial_orthogonal(64, 20, 42)
        op2 = build_partial_orthogonal(64, 20, 42)
        assert (op1.selection == op2.selection).all()
        assert (op1.signs == op2.signs).all()

    def test_different_seeds_differ(self):
        op1 = build_partial_orthogonal(64, 20, 42)
        op2 = build_partial_orthogonal(64, 20, 43)
        assert (op1.selection != op2.selection).any() or (op1.signs != op2.signs).any()

    def test_isometry_contraction(self):
        op = build_partial_orthogonal(50, 20, 8)
        rng = np.random.Generator(np.random.Philox(11))
        for _ in range(20):
            x = rng.standard_normal(50)
            assert np.linalg.norm(op.apply(x)) <= np.linalg.norm(x) * (1 + 1e-12)

    def test_isometry_on_row_space(self):
        op = build_partial_orthogonal(50, 20, 8)
        rng = np.random.Generator(np.random.Philox(12))
        r = rng.standard_normal(20)
        x = op.apply_adjoint(r)  # lies in span(A^T)
        assert np.linalg.norm(op.apply(x)) == pytest.approx(np.linalg.norm(x), rel=1e-12)

    def test_m_greater_than_n_rejected(self):
        with pytest.raises(ValueError, match="1 <= M <= N"):
            build_partial_orthogonal(4, 5, 0)

    def test_duplicate_selection_rejected(self):
        with pytest.raises(ValueError, match="distinct"):
            PartialOrthogonalOperator([1, 1], np.ones(4))

    def test_bad_signs_rejected(self):
        with pytest.raises(ValueError, match=r"\+-1"):
            PartialOrthogonalOperator([0], np.array([1.0, 2.0, 1.0, 1.0]))


@pytest.mark.parametrize("n", [2, 3, 8, 100, 256])
def test_fast_dct_matches_naive_reference(n):
    rng = np.random.Generator(np.random.Philox(n))
    op = build_partial_orthogonal(n, max(1, n // 2), 3)
    x = rng.standard_normal(n)
    fast = op.apply(x)
    slow = naive_dct2(op.signs * x)[op.selection]
    np.testing.assert_allclose(fast, slow, atol=1e-10)


@pytest.mark.parametrize("make_op", [
    lambda: DenseOperator(np.random.Generator(np.random.Philox(21)).standard_normal((8, 16))),
    lambda: TestSvdOperator.random_svd_op(8, 16, 22)[0],
    lambda: build_partial_orthogonal(16, 8, 23),
])
def test_adjoint_identity(make_op):
    op = make_op()
    m, n = op.shape
    rng = np.random.Generator(np.random.Philox(24))
    for _ in range(100):
        x = rng.standard_normal(n)
        r = rng.standard_normal(m)
        lhs = float(op.apply(x) @ r)
        rhs = float(x @ op.apply_adjoint(r))
        assert abs(lhs - rhs) <= 1e-10 * (np.linalg.norm(x) * np.linalg.norm(r) + 1.0)
