import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from butterfly_app.exceptions import ConfigurationError, DimensionError
from butterfly_app.kernels import (
    fio2d_phase,
    helmholtz_phase,
    icosahedron,
    jittered_grid,
    make_accessor,
    nufft_phase,
    random_points,
    sphere_mesh,
    sphere_points,
    uniform_grid,
)
from butterfly_app.phase_md import LowRankPhase

# --- Test Constants ---
SEED = 17
FIO_N = 8


# ----------------------------------------------------------------------
# 1. Phase functions
# ----------------------------------------------------------------------

class PhaseFunctionTest(SimpleTestCase):

    def test_fio_values(self):
        """x = 0 gives c1 = 1/8; x = (1/4, 1/4) gives c1 = 3/16 and c2 = 1/8."""
        assert_allclose(fio2d_phase([[0.0, 0.0]], [[0.0, 0.0]]), [[0.0]])
        assert_allclose(fio2d_phase([[0.0, 0.0]], [[1.0, 0.0]]), [[0.125]])
        assert_allclose(fio2d_phase([[0.25, 0.25]], [[1.0, 0.0]]), [[0.25 + 0.1875]])
        assert_allclose(fio2d_phase([[0.25, 0.25]], [[0.0, 1.0]]), [[0.25 + 0.125]], atol=1e-15)

    def test_fio_rejects_3d_points(self):
        """The FIO phase is two-dimensional only."""
        with self.assertRaises(DimensionError):
            fio2d_phase(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_nufft_dot_product(self):
        """x·ξ for x = (1, 1, 1), ξ = (1, 2, 3) is 6, and the phase matrix has rank 3."""
        assert_allclose(nufft_phase([[1.0, 1.0, 1.0]], [[1.0, 2.0, 3.0]]), [[6.0]])
        rng = np.random.default_rng(SEED)
        s = np.linalg.svd(nufft_phase(rng.random((60, 3)), rng.random((50, 3))), compute_uv=False)
        self.assertLessEqual(s[3] / s[0], 1e-12)

    def test_helmholtz_antipodal_and_symmetric(self):
        """Antipodal points at N = 100 sit at phase 2, and the phase is symmetric."""
        north, south = np.array([[0.0, 0.0, 1.0]]), np.array([[0.0, 0.0, -1.0]])
        assert_allclose(helmholtz_phase(north, south, 100), [[2.0]])
        assert_allclose(helmholtz_phase(north, north, 100), [[0.0]])
        a, b = random_points(5, 3, SEED), random_points(5, 3, SEED + 1)
        assert_allclose(helmholtz_phase(a, b, 64), helmholtz_phase(b, a, 64).T)


# ----------------------------------------------------------------------
# 2. Point sets and sphere meshes
# ----------------------------------------------------------------------

class PointGeneratorTest(SimpleTestCase):

    def test_uniform_grid_row_major(self):
        """The 2x2 grid lists (0,0), (0,1/2), (1/2,0), (1/2,1/2)."""
        assert_allclose(uniform_grid(2), [[0.0, 0.0], [0.0, 0.5], [0.5, 0.0], [0.5, 0.5]])

    def test_jittered_grid_stays_near_cell_centres(self):
        """Each point lies within the jitter of its own cell centre."""
        points = jittered_grid(4, 3, SEED, jitter=0.1)
        self.assertEqual(points.shape, (64, 3))
        assert_array_equal(np.floor(points * 4), uniform_grid(4, 3) * 4)
        self.assertLessEqual(np.max(np.abs(points - uniform_grid(4, 3) - 0.125)), 0.1 / 4 + 1e-12)

    def test_jittered_grid_rejects_half_a_cell(self):
        """A jitter of half a spacing or more would let points leave their cell."""
        with self.assertRaises(ConfigurationError):
            jittered_grid(4, 3, SEED, jitter=0.5)

    def test_nufft_points_are_jittered(self):
        """The built-in NUFFT point sets hold one point per cell of the n^3 grid."""
        accessor = make_accessor('nufft', n=3, seed=SEED)
        for points in (accessor.x_points, accessor.xi_points):
            self.assertEqual(np.unique(np.floor(points * 3), axis=0).shape[0], 27)

    def test_icosahedron(self):
        """The base mesh has 12 unit vertices and 20 faces."""
        mesh = icosahedron()
        self.assertEqual((mesh.vertex_count, mesh.face_count), (12, 20))
        assert_allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0)

    def test_refinement_counts(self):
        """Level k has 10·4^k + 2 vertices, 20·4^k faces and Euler characteristic 2."""
        for level in range(4):
            mesh = sphere_mesh(level)
            self.assertEqual(mesh.vertex_count, 10 * 4 ** level + 2)
            self.assertEqual(mesh.face_count, 20 * 4 ** level)
            self.assertEqual(mesh.euler_characteristic, 2)
            assert_allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0)

    def test_face_centres_split_evenly(self):
        """At level 3 the face centres split 640/640 between the hemispheres."""
        x, xi = sphere_points(3)
        self.assertEqual((x.shape[0], xi.shape[0]), (640, 640))
        self.assertTrue(np.all(x[:, 2] >= 0))
        self.assertTrue(np.all(xi[:, 2] < 0))

    def test_vertex_source_keeps_equator_in_x(self):
        """With vertices as points, the equator belongs to X and every vertex is used once."""
        x, xi = sphere_points(1, source='vertices')
        self.assertEqual(x.shape[0] + xi.shape[0], 42)
        self.assertGreater(x.shape[0], xi.shape[0])

    def test_bad_mesh_arguments(self):
        """A negative level or unknown point source is a configuration error."""
        with self.assertRaises(ConfigurationError):
            sphere_mesh(-1)
        with self.assertRaises(ConfigurationError):
            sphere_points(1, source='edges')


# ----------------------------------------------------------------------
# 3. Kernel accessors
# ----------------------------------------------------------------------

class KernelAccessorTest(SimpleTestCase):

    def test_entry_access(self):
        """Scenario 1 entries are exp(2πi Φ)."""
        accessor = make_accessor('fio2d', scenario=1, n=FIO_N)
        grid = uniform_grid(FIO_N)
        rows, cols = np.array([0, 5, 9]), np.array([1, 63])
        expected = np.exp(2j * np.pi * fio2d_phase(grid[rows], grid[cols]))
        assert_allclose(accessor.entries(rows, cols), expected)
        self.assertEqual(accessor.shape, (64, 64))

    def test_matvec_rows_match_entries(self):
        """Scenario 2 rows and columns obtained from basis vectors equal the true kernel rows and columns."""
        accessor = make_accessor('fio2d', scenario=2, n=FIO_N)
        self.assertFalse(accessor.uses_factorization_oracle)
        rows = np.array([3, 40])
        assert_allclose(accessor.rows(rows), accessor.reference_entries(rows, np.arange(64)), atol=1e-12)
        assert_allclose(accessor.cols(rows), accessor.reference_entries(np.arange(64), rows), atol=1e-12)

    def test_matvec_only_hides_entries(self):
        """A scenario 2 accessor refuses entry access."""
        accessor = make_accessor('nufft', scenario=2, n=4, seed=SEED)
        with self.assertRaises(ConfigurationError):
            accessor.entries([0], [0])

    def test_reference_matvec_skips_zero_support(self):
        """Direct summation agrees with the dense product, including on sampled rows."""
        accessor = make_accessor('nufft', scenario=1, n=4, seed=SEED)
        m, n = accessor.shape
        f = np.zeros(n, dtype=complex)
        f[[2, 7, 30]] = [1.0, -2.0, 0.5j]
        dense = accessor.reference_entries(np.arange(m), np.arange(n)) @ f
        assert_allclose(accessor.reference_matvec(f), dense, atol=1e-12)
        assert_allclose(accessor.reference_matvec(f, rows=[1, 4]), dense[[1, 4]], atol=1e-12)
        g = np.ones(m)
        assert_allclose(accessor.reference_rmatvec(g), accessor.reference_entries(np.arange(m), np.arange(n)).T @ g, atol=1e-10)

    def test_factorization_oracle_above_dense_limit(self):
        """Past the dense limit, products go through a butterfly oracle that still matches the kernel."""
        accessor = make_accessor('fio2d', scenario=2, n=16, dense_limit=0)
        self.assertTrue(accessor.uses_factorization_oracle)
        f = np.random.default_rng(SEED).standard_normal(256)
        exact = accessor.reference_matvec(f)
        error = np.linalg.norm(accessor.matvec(f) - exact) / np.linalg.norm(exact)
        self.assertLess(error, 1e-6)

    def test_phase_access(self):
        """Scenario 3 exposes exact phase rows."""
        accessor = make_accessor('nufft', scenario=3, n=3, seed=SEED)
        assert_allclose(
            accessor.phase_rows([0]),
            nufft_phase(accessor.x_points[[0]], accessor.xi_points),
        )

    def test_custom_low_rank(self):
        """A custom kernel is driven by a given U Vᵀ phase."""
        points = random_points(10, 3, SEED)
        low_rank = LowRankPhase(u=np.ones((10, 1)), v=np.full((10, 1), 0.25))
        accessor = make_accessor('custom-lowrank', scenario=1, x_points=points, xi_points=points, low_rank=low_rank)
        assert_allclose(accessor.entries([0], [1]), [[1j]], atol=1e-15)

    def test_bad_accessor_requests(self):
        """Unknown kernels, scenarios and a custom kernel without a phase are rejected."""
        with self.assertRaises(ConfigurationError):
            make_accessor('laplace', n=4)
        with self.assertRaises(ConfigurationError):
            make_accessor('fio2d', scenario=4, n=4)
        with self.assertRaises(ConfigurationError):
            make_accessor('custom-lowrank', x_points=np.zeros((2, 3)), xi_points=np.zeros((2, 3)))
        assert_array_equal(make_accessor('nufft', n=2, seed=SEED).x_points.shape, (8, 3))
