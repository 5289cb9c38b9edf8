import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from django.conf import settings
from scipy import linalg as sla
from scipy.spatial import cKDTree

from butterfly_app.exceptions import DimensionError, InputError, NumericalFailure

logger = logging.getLogger(__name__)

IndexEval = Callable[[np.ndarray], np.ndarray]
SeedLike = Union[None, int, np.random.Generator]

# Diagonal entries of R below this fraction of |R(1,1)| are treated as exact zeros.
ZERO_PIVOT_TOL = 1e-14


def make_rng(seed: SeedLike = None) -> np.random.Generator:
    """Returns a numpy Generator, seeding from settings.DEFAULT_SEED when nothing is given."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        seed = getattr(settings, 'DEFAULT_SEED', 0)
    return np.random.default_rng(seed)


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2:
        raise DimensionError(f"Expected a 2D matrix, got an array with {a.ndim} dimensions.")
    if a.size == 0:
        raise DimensionError(f"Matrix of shape {a.shape} is empty.")
    if not np.all(np.isfinite(a)):
        raise InputError("Matrix contains non-finite entries.")
    return a


def _ordered_union(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    joined = np.concatenate([np.asarray(first, dtype=np.intp), np.asarray(second, dtype=np.intp)])
    _, where = np.unique(joined, return_index=True)
    return joined[np.sort(where)]


# --- DECOMPOSITION RESULTS ---
@dataclass(frozen=True)
class PivotedQR:
    """A(:, perm) = q @ r with a real, non-negative, non-increasing diagonal on r."""
    q: np.ndarray
    r: np.ndarray
    perm: np.ndarray

    @property
    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.r))


@dataclass(frozen=True)
class LowRankSVD:
    """
    A ≈ U diag(s) Vᵀ (plain transpose). U and V have orthonormal columns in the
    conjugate-transpose sense. `ill_conditioned` is set when a sampled block had
    to be pseudo-inverted below full rank.
    """
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    ill_conditioned: bool = False

    @property
    def rank(self) -> int:
        return int(self.s.size)

    def to_dense(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T

    def entries(self, rows, cols) -> np.ndarray:
        return (self.u[np.asarray(rows)] * self.s) @ self.v[np.asarray(cols)].T


@dataclass(frozen=True)
class InterpDecomp:
    """
    Interpolative decomposition.

    side='column': K ≈ K[:, skeleton] @ interp, interp is k×n.
    side='row':    K ≈ interp @ K[skeleton, :], interp is m×k.
    """
    skeleton: np.ndarray
    interp: np.ndarray
    side: str

    @property
    def rank(self) -> int:
        return int(self.skeleton.size)

    @property
    def max_coefficient(self) -> float:
        return float(np.max(np.abs(self.interp))) if self.interp.size else 0.0

    def transpose(self) -> 'InterpDecomp':
        side = 'row' if self.side == 'column' else 'column'
        return InterpDecomp(skeleton=self.skeleton, interp=self.interp.T, side=side)


# --- DENSE PRIMITIVES ---
def pivoted_qr(a, max_rank: Optional[int] = None) -> PivotedQR:
    """Column-pivoted QR via LAPACK geqp3 (ties resolve to the lowest column index)."""
    a = _as_matrix(a)
    q, r, perm = sla.qr(a, mode='economic', pivoting=True)

    diag = np.diag(r)
    magnitude = np.abs(diag)
    phase = np.ones_like(diag)
    nonzero = magnitude > 0
    phase[nonzero] = diag[nonzero] / magnitude[nonzero]
    r = np.conj(phase)[:, None] * r
    q = q * phase[None, :]
    idx = np.arange(diag.size)
    r[idx, idx] = magnitude

    if max_rank is not None:
        keep = min(int(max_rank), r.shape[0])
        q, r = q[:, :keep], r[:keep, :]
    return PivotedQR(q=q, r=r, perm=perm.astype(np.intp))


def truncated_svd(m, rank: int) -> LowRankSVD:
    m = _as_matrix(m)
    if rank < 0 or rank > min(m.shape):
        raise DimensionError(f"Rank {rank} is outside [0, {min(m.shape)}] for a {m.shape} matrix.")
    try:
        u, s, vh = sla.svd(m, full_matrices=False)
    except sla.LinAlgError as e:
        logger.error(f"SVD failed to converge on a {m.shape} matrix: {e}")
        raise NumericalFailure(f"SVD did not converge on a {m.shape} matrix.") from e
    return LowRankSVD(u=u[:, :rank], s=s[:rank], v=vh[:rank].T)


def rsvd(
    row_eval: IndexEval,
    col_eval: IndexEval,
    rows: Sequence[int],
    cols: Sequence[int],
    rank: int,
    oversample: Optional[int] = None,
    rng: SeedLike = None,
    rtol: Optional[float] = None,
) -> LowRankSVD:
    """
    Sampled randomized SVD from row and column access only.

    `row_eval(I)` returns A[I, :] and `col_eval(J)` returns A[:, J]. Skeletons of
    size rank*oversample are picked by pivoted QR on the sampled rows/columns,
    the middle matrix is fitted on a random row/column cross through two
    pseudo-inverses and truncated back to `rank`.
    """
    oversample = oversample if oversample is not None else settings.PHASE_OVERSAMPLE_Q
    rtol = rtol if rtol is not None else settings.PINV_RTOL
    rng = make_rng(rng)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)

    if rank < 1:
        raise DimensionError(f"rsvd needs rank >= 1, got {rank}.")
    needed = rank * oversample
    if rows.size < needed or cols.size < needed:
        raise DimensionError(
            f"rsvd with rank {rank} and oversampling {oversample} needs {needed} sampled rows and "
            f"columns, got {rows.size} and {cols.size}."
        )

    a_rows = np.atleast_2d(row_eval(rows))
    a_cols = np.asarray(col_eval(cols))
    if a_cols.ndim == 1:
        a_cols = a_cols[:, None]
    m, n = a_cols.shape[0], a_rows.shape[1]
    if rank > min(m, n):
        raise DimensionError(f"Rank {rank} exceeds the matrix dimensions {m}x{n}.")

    p_col = min(needed, a_rows.shape[0], n)
    p_row = min(needed, a_cols.shape[1], m)
    pivot_cols = pivoted_qr(a_rows).perm[:p_col]
    pivot_rows = pivoted_qr(a_cols.T).perm[:p_row]

    q_col = pivoted_qr(col_eval(pivot_cols)).q
    q_row = pivoted_qr(np.atleast_2d(row_eval(pivot_rows)).T).q

    cross_rows = _ordered_union(pivot_rows, rng.permutation(m)[:p_row])
    cross_cols = _ordered_union(pivot_cols, rng.permutation(n)[:p_col])
    a_cross = np.atleast_2d(row_eval(cross_rows))[:, cross_cols]

    left, left_rank = sla.pinv(q_col[cross_rows], atol=0.0, rtol=rtol, return_rank=True)
    right, right_rank = sla.pinv(q_row[cross_cols].T, atol=0.0, rtol=rtol, return_rank=True)
    ill_conditioned = left_rank < q_col.shape[1] or right_rank < q_row.shape[1]
    if ill_conditioned:
        logger.warning(
            f"rsvd: sampled block is rank deficient (left {left_rank}/{q_col.shape[1]}, "
            f"right {right_rank}/{q_row.shape[1]}); consider a larger oversampling factor."
        )

    middle = left @ a_cross @ right
    core = truncated_svd(middle, min(rank, *middle.shape))
    return LowRankSVD(
        u=q_col @ core.u,
        s=core.s,
        v=q_row @ core.v,
        ill_conditioned=ill_conditioned,
    )


# --- INTERPOLATIVE DECOMPOSITIONS ---
def column_id(block, rank: int, eps: Optional[float] = None) -> InterpDecomp:
    """
    Column ID of an already sampled block B ≈ B[:, q] V.

    With `eps`, the rank shrinks to the first k with R(k,k) <= eps*R(1,1); it
    never grows past `rank`. Trailing pivots that are numerically zero are dropped.
    """
    block = np.asarray(block)
    n = block.shape[1] if block.ndim == 2 else 0
    dtype = np.result_type(block.dtype, np.float64)
    if block.ndim != 2 or block.size == 0:
        return InterpDecomp(np.empty(0, dtype=np.intp), np.zeros((0, n), dtype=dtype), 'column')

    qr = pivoted_qr(block)
    diag = qr.diagonal
    k = min(int(rank), diag.size)
    if eps is not None and diag[0] > 0:
        small = np.flatnonzero(diag <= eps * diag[0])
        if small.size:
            k = min(k, int(small[0]) + 1)
    while k > 0 and diag[k - 1] <= ZERO_PIVOT_TOL * diag[0]:
        k -= 1

    interp = np.zeros((k, n), dtype=dtype)
    if k:
        interp[:, qr.perm[:k]] = np.eye(k)
        if k < n:
            interp[:, qr.perm[k:]] = sla.solve_triangular(qr.r[:k, :k], qr.r[:k, k:])
    return InterpDecomp(skeleton=qr.perm[:k].copy(), interp=interp, side='column')


def cid(
    row_block_eval: IndexEval,
    m: int,
    n: int,
    rank: int,
    t: Optional[int] = None,
    grid=None,
    eps: Optional[float] = None,
    rng: SeedLike = None,
) -> InterpDecomp:
    """Column ID of an m×n matrix seen through `row_block_eval(s) = K[s, :]` on t*rank sampled rows."""
    t = t if t is not None else settings.ID_OVERSAMPLE_T
    count = min(t * rank, m)
    if grid is not None:
        sampled = mock_chebyshev_rows(grid, count)
    else:
        sampled = np.sort(make_rng(rng).choice(m, size=count, replace=False))
    block = np.atleast_2d(row_block_eval(sampled))
    if block.shape[1] != n:
        raise DimensionError(f"Row evaluator returned {block.shape[1]} columns, expected {n}.")
    return column_id(block, rank, eps)


def rid(
    col_block_eval: IndexEval,
    m: int,
    n: int,
    rank: int,
    t: Optional[int] = None,
    grid=None,
    eps: Optional[float] = None,
    rng: SeedLike = None,
) -> InterpDecomp:
    """Row ID K ≈ U K[q, :]; the transpose dual of `cid`."""
    t = t if t is not None else settings.ID_OVERSAMPLE_T
    count = min(t * rank, n)
    if grid is not None:
        sampled = mock_chebyshev_rows(grid, count)
    else:
        sampled = np.sort(make_rng(rng).choice(n, size=count, replace=False))
    block = np.asarray(col_block_eval(sampled))
    if block.ndim == 1:
        block = block[:, None]
    if block.shape[0] != m:
        raise DimensionError(f"Column evaluator returned {block.shape[0]} rows, expected {m}.")
    return column_id(block.T, rank, eps).transpose()


# --- SAMPLING ---
def chebyshev_nodes(lo: float, hi: float, count: int) -> np.ndarray:
    j = np.arange(1, count + 1)
    return (lo + hi) / 2.0 + (hi - lo) / 2.0 * np.cos((2 * j - 1) * np.pi / (2 * count))


def mock_chebyshev_rows(grid, count: int) -> np.ndarray:
    """
    Indices of the grid points nearest to the `count` first-kind Chebyshev nodes
    of the grid's bounding interval. Ties go to the lower index; a node whose
    nearest point is taken moves on to the next nearest free point.
    """
    grid = np.asarray(grid, dtype=float).ravel()
    m = grid.size
    if count > m:
        raise DimensionError(f"Cannot pick {count} mock-Chebyshev points from a grid of {m}.")
    if count <= 0:
        return np.empty(0, dtype=np.intp)

    taken = np.zeros(m, dtype=bool)
    chosen = []
    for node in chebyshev_nodes(grid.min(), grid.max(), count):
        for idx in np.argsort(np.abs(grid - node), kind='stable'):
            if not taken[idx]:
                taken[idx] = True
                chosen.append(idx)
                break
    return np.sort(np.asarray(chosen, dtype=np.intp))


def mock_chebyshev_points(coords, count: int, rng: SeedLike = None) -> np.ndarray:
    """
    Multi-dimensional mock-Chebyshev selection: a tensor grid of Chebyshev nodes
    over the bounding box, snapped to the nearest input point. Collisions are
    topped up uniformly at random so exactly `count` distinct indices come back.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    size, dim = coords.shape
    if count >= size:
        return np.arange(size, dtype=np.intp)
    if count <= 0:
        return np.empty(0, dtype=np.intp)

    per_axis = max(1, int(np.floor(count ** (1.0 / dim) + 1e-9)))
    lo, hi = coords.min(axis=0), coords.max(axis=0)
    axes = [chebyshev_nodes(lo[i], hi[i], per_axis) for i in range(dim)]
    nodes = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, dim)
    _, nearest = cKDTree(coords).query(nodes)
    chosen = _ordered_union(nearest, np.empty(0, dtype=np.intp))[:count]

    if chosen.size < count:
        free = np.setdiff1d(np.arange(size), chosen)
        extra = make_rng(rng).permutation(free)[:count - chosen.size]
        chosen = np.concatenate([chosen, extra])
    return np.sort(chosen.astype(np.intp))
