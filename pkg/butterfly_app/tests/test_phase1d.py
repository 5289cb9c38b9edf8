import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from butterfly_app.exceptions import DimensionError, InputError
from butterfly_app.phase1d import recover_matrix_1d, recover_vector_1d, round_half_away
from butterfly_app.phase_md import PhaseAccessor

# --- Test Constants ---
TAU = 1.0 / 16.0
GRID = 48
MOD_TOL = 1e-12


def smooth_phase(rows, cols, size=GRID):
    """f(i) + g(j) + f(i)g(j) with f = g = 1.5 x³ on x = index/size."""
    f = 1.5 * (np.asarray(rows, dtype=float) / size) ** 3
    g = 1.5 * (np.asarray(cols, dtype=float) / size) ** 3
    return f[:, None] + g[None, :] + f[:, None] * g[None, :]


# ----------------------------------------------------------------------
# 1. Vector recovery
# ----------------------------------------------------------------------

class RecoverVector1DTest(SimpleTestCase):

    def test_round_half_away_from_zero(self):
        """Exact halves round away from zero in both directions."""
        self.assertEqual(round_half_away(0.5), 1.0)
        self.assertEqual(round_half_away(-0.5), -1.0)
        self.assertEqual(round_half_away(2.4), 2.0)

    def test_linear_vector_is_unchanged(self):
        """A linear vector has zero third differences and is returned as is."""
        result = recover_vector_1d([0.1, 0.2, 0.3, 0.4], TAU)
        assert_allclose(result.values, [0.1, 0.2, 0.3, 0.4])
        self.assertEqual(result.discontinuities, [0])

    def test_unwraps_across_integer(self):
        """(0.6, 0.8, 0.0, 0.2) is unwrapped to (0.6, 0.8, 1.0, 1.2)."""
        result = recover_vector_1d([0.6, 0.8, 0.0, 0.2], TAU)
        assert_allclose(result.values, [0.6, 0.8, 1.0, 1.2], atol=MOD_TOL)
        self.assertEqual(result.discontinuities, [0])

    def test_detects_jump(self):
        """A jump of 0.4 at index 3 is reported and recovery restarts there."""
        result = recover_vector_1d([0, 0, 0, 0.4, 0.4, 0.4, 0.4, 0.4], TAU)
        self.assertEqual(result.discontinuities, [0, 3])
        assert_allclose(result.values[3:], 0.4)

    def test_short_vectors_pass_through(self):
        """Fewer than four entries cannot carry a third difference and come back unchanged."""
        result = recover_vector_1d([0.9, 0.1, 0.3], TAU)
        assert_allclose(result.values, [0.9, 0.1, 0.3])
        self.assertEqual(result.discontinuities, [0])

    def test_mod_consistency_and_linear_cost(self):
        """Recovered values agree with the input mod 1 and each entry is visited once."""
        x = np.linspace(0.0, 1.0, 500)
        truth = 12.0 * x ** 2 + 3.0 * x
        wrapped = np.mod(truth, 1.0)
        result = recover_vector_1d(wrapped, TAU)
        assert_allclose(np.mod(result.values, 1.0), wrapped, atol=MOD_TOL)
        assert_allclose(result.values, truth, atol=1e-9)
        self.assertLessEqual(result.evaluations, 2 * truth.size)

    def test_rejects_values_outside_unit_interval(self):
        """Wrapped inputs must lie in [0, 1)."""
        with self.assertRaises(InputError):
            recover_vector_1d([0.1, 1.0, 0.2, 0.3], TAU)
        with self.assertRaises(InputError):
            recover_vector_1d([0.1, -0.2, 0.2, 0.3], TAU)


# ----------------------------------------------------------------------
# 2. Matrix recovery
# ----------------------------------------------------------------------

class RecoverMatrix1DTest(SimpleTestCase):

    def setUp(self):
        self.rng = np.random.default_rng(11)
        self.rows = sorted(self.rng.choice(GRID, 6, replace=False).tolist())
        self.cols = sorted(self.rng.choice(GRID, 6, replace=False).tolist())

    def assert_intersections_agree(self, result):
        for i, row in result.recovered_rows.items():
            for j, col in result.recovered_cols.items():
                self.assertEqual(row[j], col[i], msg=f"row {i} and column {j} disagree")

    def test_linear_phase_single_block(self):
        """(i + j)/N has no discontinuity: one block and consistent intersections."""
        phase = PhaseAccessor.from_phase_function(lambda r, c: (r[:, None] + c[None, :]) / GRID, (GRID, GRID))
        result = recover_matrix_1d(phase, self.rows, self.cols, TAU)
        self.assertEqual(result.partition.row_ranges, [(0, GRID)])
        self.assertEqual(result.partition.col_ranges, [(0, GRID)])
        self.assert_intersections_agree(result)

    def test_jump_along_rows_splits_columns(self):
        """A jump of 0.5 at column 20 yields column breaks [0, 20] and two column blocks."""
        jump = 20

        def phase_fn(r, c):
            return (r[:, None] + c[None, :]) / GRID + 0.5 * (c[None, :] >= jump)

        phase = PhaseAccessor.from_phase_function(phase_fn, (GRID, GRID))
        result = recover_matrix_1d(phase, self.rows, self.cols, TAU)
        assert_array_equal(result.partition.col_breaks, [0, jump])
        assert_array_equal(result.partition.row_breaks, [0])
        self.assertEqual(result.partition.col_ranges, [(0, jump), (jump, GRID)])

    def test_smooth_phase_intersections_match_exactly(self):
        """Smooth rows and columns are recovered to the true phase and share every intersection value."""
        phase = PhaseAccessor.from_phase_function(smooth_phase, (GRID, GRID))
        result = recover_matrix_1d(phase, self.rows, self.cols, TAU)
        self.assert_intersections_agree(result)
        for i, row in result.recovered_rows.items():
            assert_allclose(row, smooth_phase([i], np.arange(GRID))[0], atol=1e-9)

    def test_sampled_indices_belong_to_one_block(self):
        """Every sampled row, plus the block start 0, lands in exactly one row block."""
        phase = PhaseAccessor.from_phase_function(smooth_phase, (GRID, GRID))
        result = recover_matrix_1d(phase, self.rows, self.cols, TAU)
        sampled = np.concatenate(result.partition.sampled_rows)
        self.assertEqual(sorted(sampled.tolist()), sorted(set(self.rows) | {0}))

    def test_empty_samples(self):
        """At least one row and one column must be sampled."""
        phase = PhaseAccessor.from_phase_function(smooth_phase, (GRID, GRID))
        with self.assertRaises(DimensionError):
            recover_matrix_1d(phase, [], self.cols, TAU)


# ----------------------------------------------------------------------
# 3. Consistency over random smooth matrices
# ----------------------------------------------------------------------

def third_difference_walk(size, rng, bound):
    """A sequence with |first| < 1/2 and |second| < 1/2 at the start and random third differences below `bound`."""
    walk = np.empty(size)
    walk[0] = rng.uniform(-5.0, 5.0)
    first, second = rng.uniform(-0.4, 0.4), rng.uniform(-0.2, 0.2)
    for i in range(1, size):
        walk[i] = walk[i - 1] + first
        first += second
        second += rng.uniform(-bound, bound)
    return walk


class RandomSmoothMatrixTest(SimpleTestCase):

    def test_intersections_identical_on_hundred_matrices(self):
        """Rows and columns recovered from matrices whose third differences stay below 1/16 agree bitwise."""
        rng = np.random.default_rng(2024)
        size = 40
        for trial in range(100):
            f = third_difference_walk(size, rng, 1.0 / 48.0)
            g = third_difference_walk(size, rng, 1.0 / 48.0)
            a = np.sin(np.linspace(0.0, rng.uniform(0.5, 2.0), size))
            b = np.cos(np.linspace(0.0, rng.uniform(0.5, 2.0), size))
            scale = rng.uniform(0.0, 1.0)

            def phase_fn(r, c):
                return f[r][:, None] + g[c][None, :] + scale * a[r][:, None] * b[c][None, :]

            phase = PhaseAccessor.from_phase_function(phase_fn, (size, size))
            rows = rng.choice(size, 5, replace=False).tolist()
            cols = rng.choice(size, 5, replace=False).tolist()
            result = recover_matrix_1d(phase, rows, cols, TAU)
            self.assertEqual(result.partition.row_ranges, [(0, size)], msg=f"trial {trial}")
            self.assertEqual(result.partition.col_ranges, [(0, size)], msg=f"trial {trial}")
            for i, row in result.recovered_rows.items():
                for j, col in result.recovered_cols.items():
                    self.assertEqual(row[j], col[i], msg=f"trial {trial}: row {i}, column {j}")
