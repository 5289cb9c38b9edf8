import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings
from scipy.sparse import coo_matrix, csr_matrix

from butterfly_app.exceptions import ConfigurationError, DimensionError
from butterfly_app.linalg import SeedLike, column_id, make_rng, mock_chebyshev_points
from butterfly_app.tree import ComplementaryTree

logger = logging.getLogger(__name__)

EntryEval = Callable[[np.ndarray, np.ndarray], np.ndarray]
Block = Tuple[int, int, np.ndarray]

SAMPLING_STRATEGIES = ('chebyshev', 'random')
# nnz(F) <= NNZ_CONSTANT * k^2 / n0 * N for two-dimensional trees with n0 <= 4k.
NNZ_CONSTANT = 4


@dataclass(frozen=True)
class IDBFConfig:
    rank: int
    oversample: int
    leaf_size: Optional[int] = None
    eps: Optional[float] = None
    sampling: str = 'chebyshev'
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigurationError(f"IDBF rank must be positive, got {self.rank}.")
        if self.oversample < 1:
            raise ConfigurationError(f"ID oversampling must be positive, got {self.oversample}.")
        if self.leaf_size is not None and self.leaf_size < self.rank:
            raise ConfigurationError(f"Leaf size {self.leaf_size} is smaller than the rank {self.rank}.")
        if self.sampling not in SAMPLING_STRATEGIES:
            raise ConfigurationError(f"Unknown sampling strategy '{self.sampling}'; use one of {SAMPLING_STRATEGIES}.")

    @classmethod
    def defaults(cls, rank: int, **overrides) -> 'IDBFConfig':
        params = {
            'oversample': settings.ID_OVERSAMPLE_T,
            'eps': settings.ADAPTIVE_EPS,
            'seed': settings.DEFAULT_SEED,
        }
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(rank=rank, **params)

    def as_dict(self) -> dict:
        return {
            'rank': self.rank,
            'oversample': self.oversample,
            'leaf_size': self.leaf_size,
            'eps': self.eps,
            'sampling': self.sampling,
            'seed': self.seed,
        }


# --- SPARSE FACTORS ---
@dataclass
class ButterflyFactor:
    """Block-sparse factor; blocks are (row_start, col_start, dense block) and never overlap."""
    shape: Tuple[int, int]
    blocks: List[Block] = field(default_factory=list)

    @property
    def nnz(self) -> int:
        return int(sum(block.size for _, _, block in self.blocks))

    @property
    def ranges(self) -> List[Tuple[range, range]]:
        return [
            (range(r0, r0 + b.shape[0]), range(c0, c0 + b.shape[1]))
            for r0, c0, b in self.blocks
        ]

    @cached_property
    def sparse(self) -> csr_matrix:
        rows, cols, data = [], [], []
        for r0, c0, block in self.blocks:
            if not block.size:
                continue
            ii, jj = np.meshgrid(np.arange(block.shape[0]), np.arange(block.shape[1]), indexing='ij')
            rows.append((ii + r0).ravel())
            cols.append((jj + c0).ravel())
            data.append(block.ravel())
        if not data:
            return csr_matrix(self.shape, dtype=complex)
        return coo_matrix(
            (np.concatenate(data).astype(complex), (np.concatenate(rows), np.concatenate(cols))),
            shape=self.shape,
        ).tocsr()

    def to_dense(self) -> np.ndarray:
        return self.sparse.toarray()


@dataclass
class ButterflyFactorization:
    """
    K ≈ P_rᵀ U^0 … U^J S V^J … V^0 P_c, stored as the factor list in that order.
    `row_order` / `col_order` map leaf-ordered positions back to point indices.
    """
    shape: Tuple[int, int]
    factors: List[ButterflyFactor]
    row_order: np.ndarray
    col_order: np.ndarray
    depth: int
    middle_level: int
    config: Optional[IDBFConfig] = None
    max_rank: int = 0
    max_coefficient: float = 0.0

    @property
    def nnz_per_factor(self) -> List[int]:
        return [f.nnz for f in self.factors]

    @property
    def nnz(self) -> int:
        return sum(self.nnz_per_factor)

    def nnz_bound(self) -> float:
        if self.config is None or not self.config.leaf_size:
            return float('inf')
        k, n0 = self.config.rank, self.config.leaf_size
        return NNZ_CONSTANT * k * k / n0 * max(self.shape)

    def within_nnz_bound(self) -> bool:
        """Every factor, not their sum, must stay under the bound."""
        return max(self.nnz_per_factor, default=0) <= self.nnz_bound()

    def apply(self, f) -> np.ndarray:
        return apply(self, f)

    def apply_transpose(self, g) -> np.ndarray:
        return apply_transpose(self, g)

    def to_dense(self) -> np.ndarray:
        return self.apply(np.eye(self.shape[1]))


def _as_columns(x, size: int) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x)
    vector = x.ndim == 1
    x = x.reshape(x.shape[0], -1) if x.ndim else x.reshape(1, 1)
    if x.shape[0] != size:
        raise DimensionError(f"Input has {x.shape[0]} rows, expected {size}.")
    return x, vector


def apply(factorization: ButterflyFactorization, f) -> np.ndarray:
    """g = K f for a vector or a block of column vectors."""
    m, n = factorization.shape
    x, vector = _as_columns(f, n)
    y = x[factorization.col_order].astype(complex)
    for factor in reversed(factorization.factors):
        y = factor.sparse @ y
    out = np.empty((m, y.shape[1]), dtype=complex)
    out[factorization.row_order] = y
    return out[:, 0] if vector else out


def apply_transpose(factorization: ButterflyFactorization, g) -> np.ndarray:
    """f = Kᵀ g (plain transpose, no conjugation)."""
    m, n = factorization.shape
    y, vector = _as_columns(g, m)
    x = y[factorization.row_order].astype(complex)
    for factor in factorization.factors:
        x = factor.sparse.T @ x
    out = np.empty((n, x.shape[1]), dtype=complex)
    out[factorization.col_order] = x
    return out[:, 0] if vector else out


# --- SAMPLING ---
class _Sampler:
    """Caches the t*k rows (or columns) sampled from each tree node."""

    def __init__(self, tree: ComplementaryTree, count: int, strategy: str, rng: np.random.Generator):
        self.tree = tree
        self.count = count
        self.strategy = strategy
        self.rng = rng
        self._cache: Dict[Tuple[int, int], np.ndarray] = {}

    def __call__(self, level: int, pos: int) -> np.ndarray:
        key = (level, pos)
        if key not in self._cache:
            self._cache[key] = sample_indices(
                self.tree.members(level, pos), self.tree.coords, self.count, self.strategy, self.rng
            )
        return self._cache[key]


def sample_indices(indices: np.ndarray, coords: Optional[np.ndarray], count: int,
                   strategy: str = 'chebyshev', rng: SeedLike = None) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.intp)
    if indices.size <= count:
        return indices
    if strategy == 'chebyshev' and coords is not None:
        local = mock_chebyshev_points(coords[indices], count, rng)
    else:
        local = np.sort(make_rng(rng).choice(indices.size, size=count, replace=False))
    return indices[local]


@dataclass
class _SkeletonLevel:
    skeleton: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)
    offset: Dict[Tuple[int, int], int] = field(default_factory=dict)
    size: int = 0
    max_rank: int = 0
    max_coefficient: float = 0.0

    def add(self, key: Tuple[int, int], skeleton: np.ndarray, coefficient: float) -> int:
        start = self.size
        self.skeleton[key] = skeleton
        self.offset[key] = start
        self.size += skeleton.size
        self.max_rank = max(self.max_rank, skeleton.size)
        self.max_coefficient = max(self.max_coefficient, coefficient)
        return start


# --- IDBF ---
def idbf_factorize(entry_eval: EntryEval, tree_x: ComplementaryTree, tree_xi: ComplementaryTree,
                   config: IDBFConfig) -> ButterflyFactorization:
    """
    Interpolative-decomposition butterfly factorization of K(X, Ω).

    Column IDs sweep T_X top-down against T_Ω bottom-up, row IDs do the opposite;
    both stop at level J = floor(L/2) and the middle factor couples them at
    h = L - J. Only `entry_eval(rows, cols)` is ever called.
    """
    if tree_x.depth != tree_xi.depth:
        raise ConfigurationError(
            f"Complementary trees need equal depth, got {tree_x.depth} and {tree_xi.depth}."
        )
    if config.leaf_size is None:
        config = replace(config, leaf_size=max(tree_x.leaf_size, tree_xi.leaf_size))
    depth = tree_x.depth
    half = depth // 2
    middle = depth - half
    count = config.oversample * config.rank
    rng = make_rng(config.seed)
    row_sampler = _Sampler(tree_x, count, config.sampling, rng)
    col_sampler = _Sampler(tree_xi, count, config.sampling, rng)
    m, n = tree_x.size, tree_xi.size

    levels_seen: List[_SkeletonLevel] = []

    # Column side: pairs (A at level j of T_X, B at level L-j of T_Ω), A-major.
    v_factors: List[ButterflyFactor] = []
    prev: Optional[_SkeletonLevel] = None
    leaf_offsets = tree_xi.leaf_offsets
    for j in range(half + 1):
        level = _SkeletonLevel()
        blocks: List[Block] = []
        b_level = depth - j
        for a in range(tree_x.count(j)):
            for b in range(tree_xi.count(b_level)):
                if j == 0:
                    cand = tree_xi.members(depth, b)
                    col_start = int(leaf_offsets[b])
                else:
                    keys = [(tree_x.parent(j, a), int(bc)) for bc in tree_xi.children(b_level, b)]
                    cand = np.concatenate([prev.skeleton[key] for key in keys])
                    col_start = prev.offset[keys[0]]
                rows = row_sampler(j, a)
                dec = column_id(entry_eval(rows, cand), config.rank, config.eps)
                start = level.add((a, b), cand[dec.skeleton], dec.max_coefficient)
                if dec.rank:
                    blocks.append((start, col_start, dec.interp))
        v_factors.append(ButterflyFactor((level.size, n if j == 0 else prev.size), blocks))
        levels_seen.append(level)
        prev = level
    col_final = prev

    # Row side: pairs (A at level L-j of T_X, B at level j of T_Ω), B-major.
    u_factors: List[ButterflyFactor] = []
    prev = None
    leaf_offsets = tree_x.leaf_offsets
    for j in range(half + 1):
        level = _SkeletonLevel()
        blocks = []
        a_level = depth - j
        for b in range(tree_xi.count(j)):
            for a in range(tree_x.count(a_level)):
                if j == 0:
                    cand = tree_x.members(depth, a)
                    row_start = int(leaf_offsets[a])
                else:
                    keys = [(int(ac), tree_xi.parent(j, b)) for ac in tree_x.children(a_level, a)]
                    cand = np.concatenate([prev.skeleton[key] for key in keys])
                    row_start = prev.offset[keys[0]]
                cols = col_sampler(j, b)
                dec = column_id(entry_eval(cand, cols).T, config.rank, config.eps).transpose()
                start = level.add((a, b), cand[dec.skeleton], dec.max_coefficient)
                if dec.rank:
                    blocks.append((row_start, start, dec.interp))
        u_factors.append(ButterflyFactor((m if j == 0 else prev.size, level.size), blocks))
        levels_seen.append(level)
        prev = level
    row_final = prev

    # Middle factor: one block per (A, B') at level h.
    blocks = []
    for a in range(tree_x.count(middle)):
        a_anc = tree_x.ancestor(middle, a, half)
        for bp in range(tree_xi.count(middle)):
            b_anc = tree_xi.ancestor(middle, bp, half)
            row_key, col_key = (a, b_anc), (a_anc, bp)
            rs, cs = row_final.skeleton[row_key], col_final.skeleton[col_key]
            if rs.size and cs.size:
                blocks.append((row_final.offset[row_key], col_final.offset[col_key], np.asarray(entry_eval(rs, cs))))
    s_factor = ButterflyFactor((row_final.size, col_final.size), blocks)

    factorization = ButterflyFactorization(
        shape=(m, n),
        factors=u_factors + [s_factor] + v_factors[::-1],
        row_order=tree_x.leaf_order,
        col_order=tree_xi.leaf_order,
        depth=depth,
        middle_level=middle,
        config=config,
        max_rank=max(lvl.max_rank for lvl in levels_seen),
        max_coefficient=max(lvl.max_coefficient for lvl in levels_seen),
    )
    logger.info(
        f"idbf_factorize: {m}x{n}, depth {depth}, {len(factorization.factors)} factors, nnz {factorization.nnz}"
    )
    if tree_x.dim == 2 and config.leaf_size <= 4 * config.rank and not factorization.within_nnz_bound():
        logger.warning(
            f"idbf_factorize: largest factor nnz {max(factorization.nnz_per_factor)} "
            f"exceeds the per-factor bound {factorization.nnz_bound():.0f}"
        )
    return factorization


# --- LOW-RANK COMPRESSION WITH SHARED SKELETONS ---
@dataclass
class LRCSResult:
    """K(R, C) ≈ U K(r̂, ĉ) V with one row skeleton per row leaf and one column skeleton per column leaf."""
    u: ButterflyFactor
    v: ButterflyFactor
    row_skeletons: List[np.ndarray]
    col_skeletons: List[np.ndarray]
    row_order: np.ndarray
    col_order: np.ndarray

    def middle_factor(self, entry_eval: EntryEval) -> ButterflyFactor:
        blocks: List[Block] = []
        r0 = 0
        for rs in self.row_skeletons:
            c0 = 0
            for cs in self.col_skeletons:
                if rs.size and cs.size:
                    blocks.append((r0, c0, np.asarray(entry_eval(rs, cs))))
                c0 += cs.size
            r0 += rs.size
        return ButterflyFactor((self.u.shape[1], self.v.shape[0]), blocks)


def lrcs(entry_eval: EntryEval, row_leaves: Sequence[np.ndarray], col_leaves: Sequence[np.ndarray],
         config: IDBFConfig, row_coords: Optional[np.ndarray] = None,
         col_coords: Optional[np.ndarray] = None, rng: SeedLike = None) -> LRCSResult:
    """
    Row ID per row leaf against sampled columns of the whole column set, then a
    column ID per column leaf against rows sampled from the joint row skeleton.
    Factors are expressed in leaf order: rows as the concatenated `row_leaves`.
    """
    rng = make_rng(config.seed if rng is None else rng)
    count = config.oversample * config.rank
    row_leaves = [np.asarray(r, dtype=np.intp) for r in row_leaves]
    col_leaves = [np.asarray(c, dtype=np.intp) for c in col_leaves]
    row_order = np.concatenate(row_leaves)
    col_order = np.concatenate(col_leaves)

    col_sample = sample_indices(col_order, col_coords, count, config.sampling, rng)
    u_blocks, row_skeletons = [], []
    row_start = offset = 0
    for leaf in row_leaves:
        dec = column_id(entry_eval(leaf, col_sample).T, config.rank, config.eps).transpose()
        row_skeletons.append(leaf[dec.skeleton])
        if dec.rank:
            u_blocks.append((row_start, offset, dec.interp))
        row_start += leaf.size
        offset += dec.rank
    u = ButterflyFactor((row_order.size, offset), u_blocks)

    row_hat = np.concatenate(row_skeletons)
    row_sample = sample_indices(row_hat, row_coords, count, config.sampling, rng)
    v_blocks, col_skeletons = [], []
    col_start = offset = 0
    for leaf in col_leaves:
        dec = column_id(entry_eval(row_sample, leaf), config.rank, config.eps)
        col_skeletons.append(leaf[dec.skeleton])
        if dec.rank:
            v_blocks.append((offset, col_start, dec.interp))
        col_start += leaf.size
        offset += dec.rank
    v = ButterflyFactor((offset, col_order.size), v_blocks)
    return LRCSResult(u, v, row_skeletons, col_skeletons, row_order, col_order)


@dataclass
class MSCSResult:
    """K ≈ P_rᵀ U S V P_c from one LRCS per pair of level-`level` nodes."""
    shape: Tuple[int, int]
    u: ButterflyFactor
    s: ButterflyFactor
    v: ButterflyFactor
    row_order: np.ndarray
    col_order: np.ndarray

    def as_factorization(self) -> ButterflyFactorization:
        return ButterflyFactorization(
            shape=self.shape,
            factors=[self.u, self.s, self.v],
            row_order=self.row_order,
            col_order=self.col_order,
            depth=1,
            middle_level=1,
        )


def mscs(entry_eval: EntryEval, tree_x: ComplementaryTree, tree_xi: ComplementaryTree,
         config: IDBFConfig, level: int = 1) -> MSCSResult:
    """
    Splits both trees at `level` and runs `lrcs` on every (A_i, B_j) block.

    U columns are grouped B-major (slot (j, i)), V rows A-major (slot (i, j));
    S maps V slot (i, j) onto U slot (j, i).
    """
    if tree_x.depth != tree_xi.depth:
        raise ConfigurationError(
            f"Complementary trees need equal depth, got {tree_x.depth} and {tree_xi.depth}."
        )
    depth = tree_x.depth
    if not 0 <= level <= depth:
        raise ConfigurationError(f"MSCS level {level} is outside the tree depth {depth}.")
    rng = make_rng(config.seed)

    def leaves(tree: ComplementaryTree, pos: int) -> List[np.ndarray]:
        return [tree.members(depth, leaf) for leaf in tree.descendants(level, pos, depth)]

    row_offsets, col_offsets = tree_x.leaf_offsets, tree_xi.leaf_offsets
    nx, nxi = tree_x.count(level), tree_xi.count(level)
    results: Dict[Tuple[int, int], LRCSResult] = {}
    for i in range(nx):
        row_leaves = leaves(tree_x, i)
        for j in range(nxi):
            results[(i, j)] = lrcs(entry_eval, row_leaves, leaves(tree_xi, j), config,
                                   row_coords=tree_x.coords, col_coords=tree_xi.coords, rng=rng)

    u_slot, offset = {}, 0
    for j in range(nxi):
        for i in range(nx):
            u_slot[(i, j)] = offset
            offset += results[(i, j)].u.shape[1]
    u_width = offset
    v_slot, offset = {}, 0
    for i in range(nx):
        for j in range(nxi):
            v_slot[(i, j)] = offset
            offset += results[(i, j)].v.shape[0]
    v_height = offset

    u_blocks, s_blocks, v_blocks = [], [], []
    for (i, j), res in results.items():
        row_base = int(row_offsets[tree_x.descendants(level, i, depth)[0]])
        col_base = int(col_offsets[tree_xi.descendants(level, j, depth)[0]])
        u_blocks.extend((row_base + r0, u_slot[(i, j)] + c0, b) for r0, c0, b in res.u.blocks)
        v_blocks.extend((v_slot[(i, j)] + r0, col_base + c0, b) for r0, c0, b in res.v.blocks)
        s_blocks.extend(
            (u_slot[(i, j)] + r0, v_slot[(i, j)] + c0, b) for r0, c0, b in res.middle_factor(entry_eval).blocks
        )

    m, n = tree_x.size, tree_xi.size
    logger.info(f"mscs: {nx}x{nxi} blocks at level {level}, inner sizes {u_width}/{v_height}")
    return MSCSResult(
        shape=(m, n),
        u=ButterflyFactor((m, u_width), u_blocks),
        s=ButterflyFactor((u_width, v_height), s_blocks),
        v=ButterflyFactor((v_height, n), v_blocks),
        row_order=tree_x.leaf_order,
        col_order=tree_xi.leaf_order,
    )
