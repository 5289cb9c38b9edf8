import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, List, Optional, Union

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components, minimum_spanning_tree
from scipy.spatial import Delaunay, QhullError, cKDTree

from butterfly_app.exceptions import DimensionError, DisconnectedGraphError, InputError

logger = logging.getLogger(__name__)

# Degenerate point sets up to this size fall back to the complete graph.
COMPLETE_GRAPH_LIMIT = 64
DUPLICATE_TOL = 1e-12
QHULL_OPTIONS = 'Qbb Qc Qz Q12'


# --- POINT SETS ---
@dataclass(frozen=True)
class PointSet:
    """N distinct points in d dimensions (d = 2 or 3), stored as an N×d float array."""
    coords: np.ndarray

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        if coords.ndim != 2 or coords.shape[0] < 1:
            raise DimensionError(f"PointSet needs an N×d array with N >= 1, got shape {coords.shape}.")
        if coords.shape[1] not in (2, 3):
            raise DimensionError(f"PointSet supports d = 2 or 3, got d = {coords.shape[1]}.")
        if not np.all(np.isfinite(coords)):
            raise InputError("PointSet coordinates must be finite.")
        if coords.shape[0] > 1 and cKDTree(coords).query_pairs(DUPLICATE_TOL):
            raise InputError("PointSet contains duplicate points.")
        object.__setattr__(self, 'coords', coords)

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @classmethod
    def from_csv(cls, path) -> 'PointSet':
        """Reads "x1,x2[,x3]" lines."""
        return cls(np.loadtxt(path, delimiter=',', ndmin=2))

    def to_csv(self, path) -> None:
        np.savetxt(path, self.coords, delimiter=',', fmt='%.17g')


PointsLike = Union[PointSet, np.ndarray]


def as_point_set(points: PointsLike) -> PointSet:
    return points if isinstance(points, PointSet) else PointSet(points)


# --- GRAPHS AND TREES ---
@dataclass(frozen=True)
class WeightedGraph:
    vertex_count: int
    edges: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_edges(cls, vertex_count: int, edges, weights) -> 'WeightedGraph':
        edges = np.sort(np.asarray(edges, dtype=np.intp).reshape(-1, 2), axis=1)
        weights = np.asarray(weights, dtype=float).ravel()
        if np.any(edges[:, 0] == edges[:, 1]):
            raise InputError("Graph edges may not be self-loops.")
        if np.any(weights <= 0):
            raise InputError("Graph edge weights must be positive.")
        return cls(vertex_count=int(vertex_count), edges=edges, weights=weights)

    @property
    def edge_count(self) -> int:
        return self.edges.shape[0]

    def to_csgraph(self) -> csr_matrix:
        n = self.vertex_count
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        data = np.concatenate([self.weights, self.weights])
        graph = coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
        graph.sort_indices()
        return graph


@dataclass(frozen=True)
class SpanningTree:
    root: int
    parent: np.ndarray
    depth: np.ndarray

    @property
    def size(self) -> int:
        return self.parent.size

    def edges(self) -> np.ndarray:
        children = np.flatnonzero(self.parent >= 0)
        return np.column_stack([self.parent[children], children])


@dataclass(frozen=True)
class RecoveryPath:
    """
    Rows (parent, child) in breadth-first order starting from `root`.
    A path over a single node has no rows.
    """
    pairs: np.ndarray
    root: int

    @property
    def nodes(self) -> np.ndarray:
        return np.concatenate([[self.root], self.pairs[:, 1]]).astype(np.intp)

    @property
    def size(self) -> int:
        return self.pairs.shape[0] + 1


def _complete_graph(coords: np.ndarray) -> WeightedGraph:
    n = coords.shape[0]
    edges = np.asarray(list(combinations(range(n), 2)), dtype=np.intp).reshape(-1, 2)
    weights = np.linalg.norm(coords[edges[:, 0]] - coords[edges[:, 1]], axis=1)
    return WeightedGraph.from_edges(n, edges, weights)


def _triangulation(coords: np.ndarray) -> Optional[Delaunay]:
    """qhull triangulation, or None when the caller should fall back to the complete graph."""
    n, dim = coords.shape
    if n <= dim:
        logger.info(f"delaunay: {n} points cannot span a {dim}D simplex; using the complete graph.")
        return None
    try:
        return Delaunay(coords, qhull_options=QHULL_OPTIONS)
    except QhullError as e:
        if n <= COMPLETE_GRAPH_LIMIT:
            logger.warning(f"delaunay: degenerate configuration of {n} points ({e.__class__.__name__}); using the complete graph.")
            return None
        logger.warning(f"delaunay: degenerate configuration of {n} points; retrying with joggled input.")
        try:
            return Delaunay(coords, qhull_options=QHULL_OPTIONS + ' QJ')
        except QhullError as e2:
            logger.error(f"delaunay: qhull failed on {n} points even with joggle: {e2}")
            raise InputError(f"Cannot triangulate the point set: {e2}") from e2


def delaunay_simplices(points: PointsLike) -> np.ndarray:
    """Vertex indices of the Delaunay simplices, one row of d + 1 indices per simplex."""
    coords = as_point_set(points).coords
    tri = _triangulation(coords) if coords.shape[0] > 1 else None
    if tri is None:
        raise InputError(f"{coords.shape[0]} points do not form a {coords.shape[1]}D triangulation.")
    return tri.simplices


def delaunay(points: PointsLike) -> WeightedGraph:
    """Edge graph of the Delaunay triangulation (qhull), weighted by Euclidean length."""
    coords = as_point_set(points).coords
    n = coords.shape[0]
    if n == 1:
        return WeightedGraph(1, np.empty((0, 2), dtype=np.intp), np.empty(0))
    tri = _triangulation(coords)
    if tri is None:
        return _complete_graph(coords)

    simplices = tri.simplices
    pairs = [simplices[:, [a, b]] for a, b in combinations(range(simplices.shape[1]), 2)]
    # Points qhull kept out of the triangulation hang off their nearest vertex.
    if len(tri.coplanar):
        pairs.append(tri.coplanar[:, [0, 2]])
    edges = np.unique(np.sort(np.concatenate(pairs), axis=1), axis=0)
    edges = edges[edges[:, 0] != edges[:, 1]]
    weights = np.linalg.norm(coords[edges[:, 0]] - coords[edges[:, 1]], axis=1)
    logger.debug(f"delaunay: {n} points, {len(simplices)} simplices, {len(edges)} edges")
    return WeightedGraph.from_edges(n, edges, weights)


def _bfs(adjacency: csr_matrix, root: int):
    order, pred = breadth_first_order(adjacency, root, directed=False, return_predecessors=True)
    return order, pred


def mst(graph: WeightedGraph, root: int = 0) -> SpanningTree:
    """Minimum spanning tree rooted at `root`, with parent links and BFS depths."""
    if not 0 <= root < graph.vertex_count:
        raise DimensionError(f"Root {root} is outside a graph of {graph.vertex_count} vertices.")
    adjacency = graph.to_csgraph()
    components, _ = connected_components(adjacency, directed=False)
    if components > 1:
        logger.error(f"mst: graph with {graph.vertex_count} vertices has {components} components")
        raise DisconnectedGraphError(components)

    tree = minimum_spanning_tree(adjacency)
    tree = (tree + tree.T).tocsr()
    tree.sort_indices()
    order, pred = _bfs(tree, root)

    parent = np.where(pred < 0, -1, pred).astype(np.intp)
    parent[root] = -1
    depth = np.zeros(graph.vertex_count, dtype=np.intp)
    for v in order[1:]:
        depth[v] = depth[parent[v]] + 1
    return SpanningTree(root=int(root), parent=parent, depth=depth)


def bfs_path(tree: SpanningTree) -> RecoveryPath:
    """Breadth-first path rows: depth-major, then parent order, then ascending child index."""
    n = tree.size
    children = np.flatnonzero(tree.parent >= 0)
    if children.size != n - 1:
        raise InputError(f"Invalid spanning tree: {children.size} parent links for {n} nodes.")
    if n == 1:
        return RecoveryPath(np.empty((0, 2), dtype=np.intp), tree.root)

    parents = tree.parent[children]
    adjacency = coo_matrix(
        (np.ones(2 * children.size), (np.concatenate([parents, children]), np.concatenate([children, parents]))),
        shape=(n, n),
    ).tocsr()
    adjacency.sort_indices()
    order, pred = _bfs(adjacency, tree.root)
    if order.size != n:
        raise InputError(f"Invalid spanning tree: only {order.size} of {n} nodes reachable from the root.")
    pairs = np.column_stack([pred[order[1:]], order[1:]]).astype(np.intp)
    return RecoveryPath(pairs=pairs, root=tree.root)


def recovery_path(points: PointsLike, root: int = 0) -> RecoveryPath:
    point_set = as_point_set(points)
    path = bfs_path(mst(delaunay(point_set), root=root))
    logger.info(f"recovery_path: built path over {point_set.size} points in {point_set.dim}D")
    return path


def split_path(path: RecoveryPath, breaks: Iterable[int]) -> List[RecoveryPath]:
    """
    Cuts the parent edge of every node in `breaks` and returns one sub-path per
    break node (the root is always a break), in the order the breaks are given.
    """
    nodes = path.nodes
    ordered = list(dict.fromkeys([path.root] + [int(d) for d in breaks]))
    size = int(nodes.max()) + 1
    is_break = np.zeros(size, dtype=bool)
    on_path = np.zeros(size, dtype=bool)
    on_path[nodes] = True
    for d in ordered:
        if not 0 <= d < size or not on_path[d]:
            raise InputError(f"Break node {d} is not on the recovery path.")
        is_break[d] = True

    component = np.full(size, -1, dtype=np.intp)
    component[path.root] = path.root
    rows = {d: [] for d in ordered}
    for bg, ed in path.pairs:
        if is_break[ed]:
            component[ed] = ed
        else:
            component[ed] = component[bg]
            rows[component[ed]].append((bg, ed))
    return [
        RecoveryPath(np.asarray(rows[d], dtype=np.intp).reshape(-1, 2), d)
        for d in ordered
    ]
