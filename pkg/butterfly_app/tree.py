import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from butterfly_app.exceptions import ConfigurationError
from butterfly_app.geometry import PointsLike, as_point_set

logger = logging.getLogger(__name__)

MAX_DEPTH = 20


@dataclass(frozen=True)
class TreeLevel:
    codes: np.ndarray
    members: List[np.ndarray]
    parent: np.ndarray
    children: List[np.ndarray]

    @property
    def count(self) -> int:
        return self.codes.size


@dataclass(frozen=True)
class ComplementaryTree:
    """
    Quadtree (2D) or octree (3D) over a point set, nodes Morton-ordered per level.

    The child index of a node is t = Σ_i bit_i·2^(d-1-i) with the first coordinate
    as the most significant bit, so in 2D the level-1 order is (low x1, low x2),
    (low x1, high x2), (high x1, low x2), (high x1, high x2). Empty nodes are dropped.
    """
    coords: np.ndarray
    leaf_size: int
    levels: List[TreeLevel]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    def count(self, level: int) -> int:
        return self.levels[level].count

    def members(self, level: int, pos: int) -> np.ndarray:
        return self.levels[level].members[pos]

    def parent(self, level: int, pos: int) -> int:
        return int(self.levels[level].parent[pos])

    def children(self, level: int, pos: int) -> np.ndarray:
        return self.levels[level].children[pos]

    def ancestor(self, level: int, pos: int, target: int) -> int:
        while level > target:
            pos = self.parent(level, pos)
            level -= 1
        return pos

    def descendants(self, level: int, pos: int, target: int) -> np.ndarray:
        """Positions at level `target` below node (level, pos); contiguous by Morton order."""
        shift = self.dim * (target - level)
        code = int(self.levels[level].codes[pos])
        target_codes = self.levels[target].codes
        lo = np.searchsorted(target_codes, code << shift, side='left')
        hi = np.searchsorted(target_codes, (code + 1) << shift, side='left')
        return np.arange(lo, hi)

    @property
    def leaf_order(self) -> np.ndarray:
        return np.concatenate(self.levels[-1].members)

    @property
    def leaf_offsets(self) -> np.ndarray:
        sizes = np.asarray([m.size for m in self.levels[-1].members], dtype=np.intp)
        return np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.intp)


def _cells(scaled: np.ndarray, level: int) -> np.ndarray:
    side = 1 << level
    return np.minimum((scaled * side).astype(np.int64), side - 1)


def _morton(cells: np.ndarray, level: int) -> np.ndarray:
    dim = cells.shape[1]
    code = np.zeros(cells.shape[0], dtype=np.int64)
    for bit in range(level - 1, -1, -1):
        digit = np.zeros_like(code)
        for axis in range(dim):
            digit = (digit << 1) | ((cells[:, axis] >> bit) & 1)
        code = (code << dim) | digit
    return code


def build_tree(points: PointsLike, leaf_size: Optional[int] = None, depth: Optional[int] = None) -> ComplementaryTree:
    """
    Bisects the bounding cube of the points until every leaf holds at most
    `leaf_size` points (default 8^d), or to an explicit `depth`.
    """
    coords = as_point_set(points).coords
    size, dim = coords.shape
    leaf_size = leaf_size if leaf_size is not None else 8 ** dim
    if leaf_size < 1:
        raise ConfigurationError(f"Leaf size must be positive, got {leaf_size}.")

    lo = coords.min(axis=0)
    extent = float((coords.max(axis=0) - lo).max())
    scaled = (coords - lo) / (extent if extent > 0 else 1.0)

    if depth is None:
        depth = 0
        while depth < MAX_DEPTH:
            _, counts = np.unique(_morton(_cells(scaled, depth), depth), return_counts=True)
            if counts.max() <= leaf_size:
                break
            depth += 1
    elif not 0 <= depth <= MAX_DEPTH:
        raise ConfigurationError(f"Tree depth must lie in [0, {MAX_DEPTH}], got {depth}.")

    levels: List[TreeLevel] = []
    for level in range(depth + 1):
        codes = _morton(_cells(scaled, level), level)
        order = np.argsort(codes, kind='stable')
        unique, starts = np.unique(codes[order], return_index=True)
        members = np.split(order.astype(np.intp), starts[1:])
        if level == 0:
            parent = np.full(unique.size, -1, dtype=np.intp)
        else:
            parent = np.searchsorted(levels[-1].codes, unique >> dim).astype(np.intp)
            prev = levels[-1]
            bounds = np.searchsorted(parent, np.arange(prev.count + 1))
            prev.children.extend(
                np.arange(bounds[p], bounds[p + 1], dtype=np.intp) for p in range(prev.count)
            )
        levels.append(TreeLevel(codes=unique, members=members, parent=parent, children=[]))
    leaves = levels[-1]
    leaves.children.extend(np.empty(0, dtype=np.intp) for _ in range(leaves.count))

    logger.debug(f"build_tree: {size} points, depth {depth}, {leaves.count} leaves (leaf size {leaf_size})")
    return ComplementaryTree(coords=coords, leaf_size=leaf_size, levels=levels)


def complementary_trees(x_points: PointsLike, xi_points: PointsLike, leaf_size: Optional[int] = None,
                        depth: Optional[int] = None) -> Tuple[ComplementaryTree, ComplementaryTree]:
    """T_X and T_Ω of a common depth: the deeper of the two automatic depths unless `depth` is given."""
    if depth is None:
        depth = max(build_tree(x_points, leaf_size).depth, build_tree(xi_points, leaf_size).depth)
    return build_tree(x_points, leaf_size, depth=depth), build_tree(xi_points, leaf_size, depth=depth)
