import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from butterfly_app.exceptions import DimensionError, InputError
from butterfly_app.linalg import (
    chebyshev_nodes,
    cid,
    column_id,
    mock_chebyshev_points,
    mock_chebyshev_rows,
    pivoted_qr,
    rid,
    rsvd,
    truncated_svd,
)

# --- Test Constants ---
SEED = 20240601
RANK_TOL = 1e-10
EXACT_TOL = 1e-10


def random_low_rank(m, n, rank, seed=SEED, complex_valued=False):
    rng = np.random.default_rng(seed)
    left = rng.standard_normal((m, rank))
    right = rng.standard_normal((rank, n))
    if complex_valued:
        left = left + 1j * rng.standard_normal((m, rank))
        right = right + 1j * rng.standard_normal((rank, n))
    return left @ right


# ----------------------------------------------------------------------
# 1. Pivoted QR and truncated SVD
# ----------------------------------------------------------------------

class PivotedQRTest(SimpleTestCase):

    def test_identity_keeps_natural_order(self):
        """The identity has equal column norms, so pivots keep the natural order and R = Q = I."""
        qr = pivoted_qr(np.eye(3))
        assert_array_equal(qr.perm, [0, 1, 2])
        assert_allclose(qr.r, np.eye(3), atol=1e-14)
        assert_allclose(qr.q, np.eye(3), atol=1e-14)

    def test_pivots_follow_column_norms(self):
        """diag(1, 3, 2) is pivoted by decreasing norm and R keeps a non-negative diagonal."""
        qr = pivoted_qr(np.diag([1.0, 3.0, 2.0]))
        assert_array_equal(qr.perm, [1, 2, 0])
        assert_allclose(qr.diagonal, [3.0, 2.0, 1.0])

    def test_rank_revealing_diagonal(self):
        """A rank-3 8x8 matrix shows a negligible fourth diagonal entry."""
        a = random_low_rank(8, 8, 3)
        diag = pivoted_qr(a).diagonal
        self.assertTrue(np.all(np.diff(diag) <= 1e-12 * diag[0]))
        self.assertLessEqual(diag[3], RANK_TOL * diag[0])

    def test_reconstructs_permuted_matrix(self):
        """A[:, perm] = Q R holds for a complex input."""
        a = random_low_rank(6, 5, 5, complex_valued=True)
        qr = pivoted_qr(a)
        assert_allclose(qr.q @ qr.r, a[:, qr.perm], atol=1e-12)

    def test_rejects_bad_input(self):
        """Empty and non-finite matrices are refused with domain errors."""
        with self.assertRaises(DimensionError):
            pivoted_qr(np.zeros((0, 3)))
        with self.assertRaises(InputError):
            pivoted_qr(np.array([[1.0, np.nan], [0.0, 1.0]]))


class TruncatedSVDTest(SimpleTestCase):

    def test_keeps_leading_singular_values(self):
        """diag(3, 2, 1) truncated to rank 2 keeps (3, 2)."""
        svd = truncated_svd(np.diag([3.0, 2.0, 1.0]), 2)
        assert_allclose(svd.s, [3.0, 2.0])
        assert_allclose(svd.to_dense(), np.diag([3.0, 2.0, 0.0]), atol=1e-14)

    def test_complex_plain_transpose_convention(self):
        """A complex matrix is reproduced as U diag(s) Vᵀ without conjugation."""
        a = random_low_rank(7, 5, 5, complex_valued=True)
        svd = truncated_svd(a, 5)
        assert_allclose(svd.to_dense(), a, atol=1e-12)
        assert_allclose(svd.v.conj().T @ svd.v, np.eye(5), atol=1e-12)

    def test_rank_out_of_range(self):
        """A rank above min(m, n) is a dimension error."""
        with self.assertRaises(DimensionError):
            truncated_svd(np.eye(3), 4)


# ----------------------------------------------------------------------
# 2. Randomized SVD from row and column access
# ----------------------------------------------------------------------

class RandomizedSVDTest(SimpleTestCase):

    def test_all_ones_matrix(self):
        """The all-ones 64x64 matrix is recovered with a single singular value 64."""
        a = np.ones((64, 64))
        svd = rsvd(lambda i: a[i, :], lambda j: a[:, j], [3, 40], [7, 50], rank=1, oversample=2, rng=SEED)
        assert_allclose(svd.s, [64.0], rtol=1e-10)
        assert_allclose(svd.to_dense(), a, atol=EXACT_TOL)

    def test_exact_on_complex_low_rank(self):
        """A rank-2 complex matrix is reproduced from four sampled rows and columns."""
        a = random_low_rank(96, 80, 2, complex_valued=True)
        rng = np.random.default_rng(SEED)
        rows = rng.choice(96, 4, replace=False)
        cols = rng.choice(80, 4, replace=False)
        svd = rsvd(lambda i: a[i, :], lambda j: a[:, j], rows, cols, rank=2, oversample=2, rng=SEED)
        self.assertFalse(svd.ill_conditioned)
        error = np.linalg.norm(svd.to_dense() - a) / np.linalg.norm(a)
        self.assertLess(error, EXACT_TOL)

    def test_requires_enough_samples(self):
        """Fewer than rank*oversample sampled rows is a dimension error."""
        a = np.ones((10, 10))
        with self.assertRaises(DimensionError):
            rsvd(lambda i: a[i, :], lambda j: a[:, j], [0], [0, 1, 2, 3], rank=2, oversample=2)


# ----------------------------------------------------------------------
# 3. Interpolative decompositions
# ----------------------------------------------------------------------

class InterpolativeDecompositionTest(SimpleTestCase):

    def test_column_id_rank_one(self):
        """A rank-1 block is reproduced from one skeleton column and the interpolation is I on it."""
        rng = np.random.default_rng(SEED)
        k = np.outer(rng.standard_normal(32), rng.standard_normal(24))
        decomp = column_id(k, 3)
        self.assertEqual(decomp.rank, 1)
        assert_allclose(decomp.interp[:, decomp.skeleton], np.eye(1))
        assert_allclose(k[:, decomp.skeleton] @ decomp.interp, k, atol=EXACT_TOL)

    def test_column_id_eps_shrinks_rank(self):
        """The adaptive rank stops at the first pivot at or below eps times the leading one."""
        decomp = column_id(np.diag([1.0, 1e-8, 1e-9, 1e-10]), 4, eps=1e-6)
        self.assertEqual(decomp.rank, 2)

    def test_column_id_of_empty_block(self):
        """An empty block yields an empty decomposition rather than an error."""
        decomp = column_id(np.zeros((0, 5)), 2)
        self.assertEqual(decomp.rank, 0)
        self.assertEqual(decomp.interp.shape, (0, 5))

    def test_cid_from_sampled_rows(self):
        """cid sees only t*rank rows yet reproduces the full rank-3 matrix."""
        k = random_low_rank(40, 30, 3)
        decomp = cid(lambda s: k[s, :], 40, 30, rank=3, t=4, rng=SEED)
        self.assertEqual(decomp.side, 'column')
        assert_allclose(k[:, decomp.skeleton] @ decomp.interp, k, atol=1e-8)

    def test_rid_is_transpose_of_cid(self):
        """rid on K matches cid on Kᵀ for the same seed."""
        k = random_low_rank(20, 24, 3)
        row = rid(lambda s: k[:, s], 20, 24, rank=3, t=2, rng=7)
        col = cid(lambda s: k.T[s, :], 24, 20, rank=3, t=2, rng=7)
        assert_array_equal(row.skeleton, col.skeleton)
        assert_allclose(row.interp, col.interp.T, atol=1e-12)
        assert_allclose(row.interp @ k[row.skeleton, :], k, atol=1e-8)

    def test_max_coefficient(self):
        """The interpolation coefficients of a well-pivoted ID stay bounded."""
        k = random_low_rank(50, 50, 5)
        decomp = column_id(k, 5)
        self.assertLessEqual(decomp.max_coefficient, 10.0)


# ----------------------------------------------------------------------
# 4. Chebyshev sampling
# ----------------------------------------------------------------------

class MockChebyshevTest(SimpleTestCase):

    def test_nodes_are_first_kind(self):
        """Two first-kind nodes on [0, 1] sit at 1/2 ± cos(π/4)/2."""
        offset = 0.5 * np.cos(np.pi / 4)
        assert_allclose(chebyshev_nodes(0.0, 1.0, 2), [0.5 + offset, 0.5 - offset])

    def test_small_grid_takes_everything(self):
        """Three nodes on a three point grid pick every point."""
        assert_array_equal(mock_chebyshev_rows([0.0, 0.5, 1.0], 3), [0, 1, 2])

    def test_snaps_to_nearest_grid_point(self):
        """On the grid i/10, two nodes snap to indices 1 and 8."""
        grid = np.arange(10) / 10.0
        assert_array_equal(mock_chebyshev_rows(grid, 2), [1, 8])

    def test_too_many_points(self):
        """Asking for more points than the grid holds is a dimension error."""
        with self.assertRaises(DimensionError):
            mock_chebyshev_rows([0.0, 1.0], 3)

    def test_multidimensional_count_is_exact(self):
        """Collisions are topped up so exactly the requested number of distinct points comes back."""
        coords = np.random.default_rng(SEED).random((200, 2))
        chosen = mock_chebyshev_points(coords, 10, rng=SEED)
        self.assertEqual(chosen.size, 10)
        self.assertEqual(np.unique(chosen).size, 10)
