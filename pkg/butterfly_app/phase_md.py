import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from butterfly_app.exceptions import DimensionError
from butterfly_app.geometry import PointsLike, RecoveryPath, recovery_path, split_path
from butterfly_app.linalg import SeedLike, make_rng, rsvd
from butterfly_app.phase1d import round_half_away

logger = logging.getLogger(__name__)


def wrap_phase(kernel_values) -> np.ndarray:
    """(1/2π)·Im(log K) on the principal branch, mapped into [0, 1)."""
    wrapped = np.mod(np.angle(np.asarray(kernel_values)) / (2.0 * np.pi), 1.0)
    wrapped[wrapped >= 1.0] = 0.0
    return wrapped


# --- ACCESS ---
@dataclass(frozen=True)
class PhaseAccessor:
    """Wrapped rows and columns of an m×n phase matrix: row_eval(I) -> |I|×n, col_eval(J) -> m×|J|."""
    shape: Tuple[int, int]
    row_eval: Callable[[np.ndarray], np.ndarray]
    col_eval: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def from_kernel(cls, kernel) -> 'PhaseAccessor':
        return cls(
            shape=tuple(kernel.shape),
            row_eval=lambda idx: wrap_phase(kernel.rows(idx)),
            col_eval=lambda idx: wrap_phase(kernel.cols(idx)),
        )

    @classmethod
    def from_phase_function(cls, phase_fn, shape) -> 'PhaseAccessor':
        """Wraps an exact phase `phase_fn(rows, cols)`; handy for synthetic phases."""
        m, n = shape
        return cls(
            shape=(m, n),
            row_eval=lambda idx: _mod_one(phase_fn(np.asarray(idx), np.arange(n))),
            col_eval=lambda idx: _mod_one(phase_fn(np.arange(m), np.asarray(idx))),
        )


def _mod_one(values) -> np.ndarray:
    wrapped = np.mod(np.asarray(values, dtype=float), 1.0)
    wrapped[wrapped >= 1.0] = 0.0
    return wrapped


# --- VECTOR RECOVERY ALONG A PATH ---
@dataclass(frozen=True)
class RecoveredMD:
    values: np.ndarray
    discontinuities: List[int]


def recover_vector_md(u, tau: Optional[float], path: RecoveryPath) -> RecoveredMD:
    """
    Unwraps `u` along the path rows with first-difference rounding, anchored at
    the path root. Nodes whose recovered step reaches `tau` are reported.
    """
    tau = tau if tau is not None else settings.PHASE_TAU
    u = np.asarray(u, dtype=float).ravel()
    if path.pairs.size and u.size <= int(path.pairs.max()):
        raise DimensionError(f"Vector of length {u.size} does not cover the recovery path nodes.")

    wrapped = u.tolist()
    v = list(wrapped)
    breaks = [path.root]
    for bg, ed in path.pairs.tolist():
        v[ed] = wrapped[ed] - round_half_away(wrapped[ed] - v[bg])
        if abs(v[ed] - v[bg]) >= tau:
            breaks.append(ed)
    return RecoveredMD(np.asarray(v), breaks)


def _unwrap_along(values: np.ndarray, wrapped: np.ndarray, path: RecoveryPath) -> None:
    """Batched path recovery on node-major arrays; the anchors at the root must already be in `values`."""
    for bg, ed in path.pairs.tolist():
        step = wrapped[ed] - values[bg]
        values[ed] = wrapped[ed] - np.copysign(np.floor(np.abs(step) + 0.5), step)


def count_discontinuities(
    phase: PhaseAccessor,
    rows: Sequence[int],
    cols: Sequence[int],
    row_path: RecoveryPath,
    col_path: RecoveryPath,
    tau: Optional[float] = None,
) -> Tuple[List[int], List[int]]:
    """Row breaks from probing column cols[0] along the row path, column breaks from row rows[0]."""
    sample_col = np.asarray(phase.col_eval(np.asarray([cols[0]])))[:, 0]
    sample_row = np.asarray(phase.row_eval(np.asarray([rows[0]])))[0]
    row_breaks = recover_vector_md(sample_col, tau, row_path).discontinuities
    col_breaks = recover_vector_md(sample_row, tau, col_path).discontinuities
    return row_breaks, col_breaks


def escalate_tau(
    phase: PhaseAccessor,
    rows: Sequence[int],
    cols: Sequence[int],
    row_path: RecoveryPath,
    col_path: RecoveryPath,
    tau: Optional[float] = None,
    cap: Optional[int] = None,
    step: Optional[float] = None,
    tau_max: Optional[float] = None,
) -> float:
    """Raises tau by `step` while either sampled path reports more than `cap` discontinuities, up to `tau_max`."""
    tau = tau if tau is not None else settings.PHASE_TAU
    cap = cap if cap is not None else settings.DISCONTINUITY_CAP
    step = step if step is not None else settings.TAU_STEP
    tau_max = tau_max if tau_max is not None else settings.TAU_MAX

    start = tau
    escalations = 0
    while True:
        row_breaks, col_breaks = count_discontinuities(phase, rows, cols, row_path, col_path, tau)
        detected = max(len(row_breaks), len(col_breaks)) - 1
        if detected <= cap or tau >= tau_max:
            break
        escalations += 1
        tau = start + escalations * step
        if tau >= tau_max - 1e-12:
            tau = tau_max
    if escalations:
        logger.warning(f"escalate_tau: raised tau from {start} to {tau} after {escalations} steps ({detected} discontinuities left)")
    return tau


# --- MATRIX RECOVERY ---
@dataclass
class BlockPartitionMD:
    row_paths: List[RecoveryPath]
    col_paths: List[RecoveryPath]
    row_breaks: List[int]
    col_breaks: List[int]
    row_block: np.ndarray
    col_block: np.ndarray
    sampled_rows: List[np.ndarray] = field(default_factory=list)
    sampled_cols: List[np.ndarray] = field(default_factory=list)


class RecoveredPhase:
    """
    Recovered phase Ψ on a block partition of the two recovery paths.

    Sub-root rows and columns are fixed at construction; any other row or column
    can then be recovered on demand with `rows()` / `cols()`, which is what lets
    the randomized SVD query pivots that were not in the initial sample.
    """

    def __init__(self, phase: PhaseAccessor, row_path: RecoveryPath, col_path: RecoveryPath,
                 row_breaks: List[int], col_breaks: List[int], rows: Sequence[int], cols: Sequence[int], tau: float):
        self.phase = phase
        self.shape = tuple(phase.shape)
        self.tau = tau
        m, n = self.shape

        row_paths = split_path(row_path, row_breaks)
        col_paths = split_path(col_path, col_breaks)
        row_block = np.full(m, -1, dtype=np.intp)
        col_block = np.full(n, -1, dtype=np.intp)
        for s, sub in enumerate(row_paths):
            row_block[sub.nodes] = s
        for t, sub in enumerate(col_paths):
            col_block[sub.nodes] = t

        self.sampled_rows = np.asarray(list(dict.fromkeys([int(i) for i in rows] + list(row_breaks))), dtype=np.intp)
        self.sampled_cols = np.asarray(list(dict.fromkeys([int(j) for j in cols] + list(col_breaks))), dtype=np.intp)
        self.partition = BlockPartitionMD(
            row_paths=row_paths,
            col_paths=col_paths,
            row_breaks=list(row_breaks),
            col_breaks=list(col_breaks),
            row_block=row_block,
            col_block=col_block,
            sampled_rows=[self.sampled_rows[row_block[self.sampled_rows] == s] for s in range(len(row_paths))],
            sampled_cols=[self.sampled_cols[col_block[self.sampled_cols] == t] for t in range(len(col_paths))],
        )
        self._root_rows = np.asarray([p.root for p in row_paths], dtype=np.intp)
        self._root_cols = np.asarray([p.root for p in col_paths], dtype=np.intp)

        # Sub-root rows, each column block anchored at its wrapped corner value.
        wrapped = np.asarray(phase.row_eval(self._root_rows), dtype=float).T.copy()
        values = wrapped.copy()
        for sub in col_paths:
            _unwrap_along(values, wrapped, sub)
        self._root_row_values = values.T.copy()

        # Sub-root columns, anchored on the recovered sub-root rows.
        wrapped = np.asarray(phase.col_eval(self._root_cols), dtype=float)
        values = wrapped.copy()
        for s, sub in enumerate(row_paths):
            values[sub.root, :] = self._root_row_values[s, self._root_cols]
            _unwrap_along(values, wrapped, sub)
        self._root_col_values = values

        self.recovered_rows = self.rows(self.sampled_rows)
        self.recovered_cols = self.cols(self.sampled_cols)

    @property
    def row_discontinuities(self) -> int:
        return len(self.partition.row_breaks) - 1

    @property
    def col_discontinuities(self) -> int:
        return len(self.partition.col_breaks) - 1

    def rows(self, idx) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(idx, dtype=np.intp))
        wrapped = np.asarray(self.phase.row_eval(idx), dtype=float).T.copy()
        values = wrapped.copy()
        values[self._root_cols, :] = self._root_col_values[idx, :].T
        for sub in self.partition.col_paths:
            _unwrap_along(values, wrapped, sub)
        return values.T

    def cols(self, idx) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(idx, dtype=np.intp))
        wrapped = np.asarray(self.phase.col_eval(idx), dtype=float)
        values = wrapped.copy()
        values[self._root_rows, :] = self._root_row_values[:, idx]
        for sub in self.partition.row_paths:
            _unwrap_along(values, wrapped, sub)
        return values


def recover_matrix_md(
    phase: PhaseAccessor,
    rows: Sequence[int],
    cols: Sequence[int],
    x_points: PointsLike,
    xi_points: PointsLike,
    tau: Optional[float] = None,
    paths: Optional[Tuple[RecoveryPath, RecoveryPath]] = None,
) -> RecoveredPhase:
    """
    Recovers the sampled rows and columns of a multidimensional phase matrix.
    Rows live on `x_points`, columns on `xi_points`; precomputed recovery paths
    may be passed to keep path construction out of the timed recovery.
    """
    tau = tau if tau is not None else settings.PHASE_TAU
    rows = [int(i) for i in np.atleast_1d(rows)]
    cols = [int(j) for j in np.atleast_1d(cols)]
    if not rows or not cols:
        raise DimensionError("recover_matrix_md needs at least one sampled row and one sampled column.")
    if paths is None:
        paths = (recovery_path(x_points), recovery_path(xi_points))
    row_path, col_path = paths
    if row_path.size != phase.shape[0] or col_path.size != phase.shape[1]:
        raise DimensionError(
            f"Recovery paths cover {row_path.size}x{col_path.size} points but the phase is {phase.shape}."
        )

    row_breaks, col_breaks = count_discontinuities(phase, rows, cols, row_path, col_path, tau)
    logger.info(f"recover_matrix_md: {len(row_breaks) - 1} row and {len(col_breaks) - 1} column discontinuities at tau={tau}")
    return RecoveredPhase(phase, row_path, col_path, row_breaks, col_breaks, rows, cols, tau)


# --- LOW-RANK PHASE FACTORIZATION ---
@dataclass(frozen=True)
class RecoveryDiagnostics:
    tau: Optional[float]
    row_discontinuities: int
    col_discontinuities: int
    ill_conditioned: bool = False


@dataclass(frozen=True)
class LowRankPhase:
    """Ψ ≈ U Vᵀ with Σ folded into V; e^{2πi U Vᵀ} approximates the kernel."""
    u: np.ndarray
    v: np.ndarray
    diagnostics: Optional[RecoveryDiagnostics] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.u.shape[0], self.v.shape[0]

    @property
    def rank(self) -> int:
        return self.u.shape[1]

    def phase(self, rows, cols) -> np.ndarray:
        return self.u[np.asarray(rows)] @ self.v[np.asarray(cols)].T

    def kernel_entries(self, rows, cols) -> np.ndarray:
        return np.exp(2j * np.pi * self.phase(rows, cols))


def low_rank_phase_factorization(
    kernel,
    x_points: PointsLike,
    xi_points: PointsLike,
    rank: int,
    oversample: Optional[int] = None,
    tau: Optional[float] = None,
    rng: SeedLike = None,
    paths: Optional[Tuple[RecoveryPath, RecoveryPath]] = None,
    escalate: bool = False,
    cap: Optional[int] = None,
) -> LowRankPhase:
    """
    Samples rank*oversample rows and columns, recovers their phase and compresses
    it with the sampled randomized SVD. Accessors that serve exact phase rows skip
    the recovery.
    """
    oversample = oversample if oversample is not None else settings.PHASE_OVERSAMPLE_Q
    rng = make_rng(rng)
    m, n = kernel.shape
    count = rank * oversample
    if count > min(m, n):
        raise DimensionError(f"Cannot sample {count} rows/columns from a {m}x{n} kernel.")
    rows = rng.choice(m, size=count, replace=False)
    cols = rng.choice(n, size=count, replace=False)

    if getattr(kernel, 'mode', None) == 'phase':
        svd = rsvd(kernel.phase_rows, kernel.phase_cols, rows, cols, rank, oversample, rng)
        diagnostics = RecoveryDiagnostics(None, 0, 0, svd.ill_conditioned)
    else:
        phase = PhaseAccessor.from_kernel(kernel)
        if paths is None:
            paths = (recovery_path(x_points), recovery_path(xi_points))
        if escalate:
            tau = escalate_tau(phase, rows, cols, paths[0], paths[1], tau=tau, cap=cap)
        recovered = recover_matrix_md(phase, rows, cols, x_points, xi_points, tau=tau, paths=paths)
        svd = rsvd(recovered.rows, recovered.cols, recovered.sampled_rows, recovered.sampled_cols, rank, oversample, rng)
        diagnostics = RecoveryDiagnostics(
            recovered.tau, recovered.row_discontinuities, recovered.col_discontinuities, svd.ill_conditioned
        )

    logger.info(f"low_rank_phase_factorization: rank {rank} phase for a {m}x{n} kernel")
    return LowRankPhase(u=svd.u, v=svd.v * svd.s, diagnostics=diagnostics)
