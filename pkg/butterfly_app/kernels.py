import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from django.conf import settings
from scipy.spatial.distance import cdist

from butterfly_app.exceptions import ConfigurationError, DimensionError
from butterfly_app.linalg import SeedLike, make_rng

logger = logging.getLogger(__name__)

KERNEL_KINDS = ('fio2d', 'nufft', 'helmholtz', 'custom-lowrank')
SCENARIO_MODES = {1: 'entry', 2: 'matvec', 3: 'phase'}
SPHERE_SOURCES = ('faces', 'vertices')
# Entries evaluated per chunk by the direct-summation oracle.
CHUNK_ENTRIES = 1 << 22
ORACLE_RANK = 30


# --- PHASE FUNCTIONS ---
def _points(a, dim: Optional[int] = None) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if dim is not None and a.shape[1] != dim:
        raise DimensionError(f"Expected {dim}D points, got shape {a.shape}.")
    return a


def fio2d_phase(x, xi) -> np.ndarray:
    """
    Generalized Radon transform phase x·ξ + sqrt(c1(x)²ξ1² + c2(x)²ξ2²) with
    c1 = (2 + sin 2πx1 sin 2πx2)/16 and c2 = (2 + cos 2πx1 cos 2πx2)/16.
    Returns the |x|×|ξ| phase matrix.
    """
    x, xi = _points(x, 2), _points(xi, 2)
    s = np.sin(2 * np.pi * x)
    c = np.cos(2 * np.pi * x)
    c1 = (2 + s[:, 0] * s[:, 1]) / 16
    c2 = (2 + c[:, 0] * c[:, 1]) / 16
    radial = np.sqrt(np.outer(c1 ** 2, xi[:, 0] ** 2) + np.outer(c2 ** 2, xi[:, 1] ** 2))
    return x @ xi.T + radial


def nufft_phase(x, xi) -> np.ndarray:
    return _points(x) @ _points(xi).T


def helmholtz_phase(x, xi, size: int) -> np.ndarray:
    """h·|x − ξ| with h = sqrt(size)/10."""
    return np.sqrt(size) / 10.0 * cdist(_points(x, 3), _points(xi, 3))


# --- POINT GENERATORS ---
def uniform_grid(n: int, dim: int = 2) -> np.ndarray:
    """{(i1/n, ..., id/n)} in row-major index order."""
    axes = [np.arange(n) / n] * dim
    return np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, dim)


def random_points(count: int, dim: int = 3, rng: SeedLike = None) -> np.ndarray:
    return make_rng(rng).random((count, dim))


def jittered_grid(n: int, dim: int = 3, rng: SeedLike = None, jitter: Optional[float] = None) -> np.ndarray:
    """
    Cell centres of the n^dim grid over [0, 1)^dim, each moved by up to `jitter`
    grid spacings per coordinate, in row-major cell order.
    """
    jitter = jitter if jitter is not None else settings.NUFFT_JITTER
    if not 0 <= jitter < 0.5:
        raise ConfigurationError(f"Jitter must lie in [0, 1/2) grid spacings, got {jitter}.")
    offsets = (2.0 * make_rng(rng).random((n ** dim, dim)) - 1.0) * jitter
    return uniform_grid(n, dim) + (0.5 + offsets) / n


@dataclass(frozen=True)
class SphereMesh:
    vertices: np.ndarray
    faces: np.ndarray
    level: int

    @property
    def vertex_count(self) -> int:
        return self.vertices.shape[0]

    @property
    def face_count(self) -> int:
        return self.faces.shape[0]

    @property
    def edge_count(self) -> int:
        edges = np.sort(np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]), axis=1)
        return np.unique(edges, axis=0).shape[0]

    @property
    def euler_characteristic(self) -> int:
        return self.vertex_count - self.edge_count + self.face_count

    @property
    def face_centers(self) -> np.ndarray:
        centers = self.vertices[self.faces].mean(axis=1)
        return centers / np.linalg.norm(centers, axis=1, keepdims=True)


def icosahedron() -> SphereMesh:
    """Unit icosahedron with vertices at both poles and two staggered rings at z = ±1/√5."""
    z = 1 / np.sqrt(5)
    rho = 2 / np.sqrt(5)
    upper = [(rho * np.cos(2 * np.pi * k / 5), rho * np.sin(2 * np.pi * k / 5), z) for k in range(5)]
    lower = [(rho * np.cos(2 * np.pi * k / 5 + np.pi / 5), rho * np.sin(2 * np.pi * k / 5 + np.pi / 5), -z) for k in range(5)]
    vertices = np.asarray([(0.0, 0.0, 1.0)] + upper + lower + [(0.0, 0.0, -1.0)])

    faces = []
    for k in range(5):
        u0, u1 = 1 + k, 1 + (k + 1) % 5
        l0, l1 = 6 + k, 6 + (k + 1) % 5
        faces.append((0, u0, u1))
        faces.append((u0, l0, u1))
        faces.append((u1, l0, l1))
        faces.append((11, l1, l0))
    return SphereMesh(vertices=vertices, faces=np.asarray(faces, dtype=np.intp), level=0)


def sphere_mesh(level: int) -> SphereMesh:
    """Icosahedron refined `level` times; edge midpoints are projected onto the unit sphere."""
    if level < 0:
        raise ConfigurationError(f"Mesh level must be non-negative, got {level}.")
    mesh = icosahedron()
    vertices = list(mesh.vertices)
    faces = mesh.faces
    for _ in range(level):
        midpoint: Dict[Tuple[int, int], int] = {}

        def middle(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                p = (vertices[a] + vertices[b]) / 2
                vertices.append(p / np.linalg.norm(p))
                midpoint[key] = len(vertices) - 1
            return midpoint[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = middle(a, b), middle(b, c), middle(c, a)
            refined.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
        faces = np.asarray(refined, dtype=np.intp)
    mesh = SphereMesh(vertices=np.asarray(vertices), faces=faces, level=level)
    logger.debug(f"sphere_mesh: level {level}, {mesh.vertex_count} vertices, {mesh.face_count} faces")
    return mesh


def sphere_points(level: int, source: str = 'faces') -> Tuple[np.ndarray, np.ndarray]:
    """
    Splits the refined sphere into X (z >= 0, equator included) and Ω (z < 0).
    Face centres give 10·4^level points per hemisphere; vertices put the equator in X.
    """
    if source not in SPHERE_SOURCES:
        raise ConfigurationError(f"Unknown sphere point source '{source}'; use one of {SPHERE_SOURCES}.")
    mesh = sphere_mesh(level)
    points = mesh.face_centers if source == 'faces' else mesh.vertices
    upper = points[:, 2] >= 0
    return points[upper], points[~upper]


def kernel_points(kind: str, n: Optional[int] = None, mesh_level: Optional[int] = None,
                  rng: SeedLike = None, sphere_source: str = 'faces') -> Tuple[np.ndarray, np.ndarray]:
    """Default X and Ω for the built-in experiments."""
    if kind == 'fio2d':
        grid = uniform_grid(n, 2)
        return grid, grid.copy()
    if kind == 'nufft':
        rng = make_rng(rng)
        return jittered_grid(n, 3, rng), jittered_grid(n, 3, rng)
    if kind == 'helmholtz':
        return sphere_points(mesh_level, sphere_source)
    raise ConfigurationError(f"Kernel kind '{kind}' has no default point sets.")


# --- INDIRECT ACCESS ---
PhaseEval = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class KernelAccessor:
    """
    Indirect access to K = exp(2πi Φ(X, Ω)).

    mode 'entry'  (scenario 1): entries, rows and columns of K.
    mode 'matvec' (scenario 2): only K f and Kᵀ g; rows and columns come from basis vectors.
    mode 'phase'  (scenario 3): exact rows and columns of Φ.

    `reference_*` methods are the hidden ground truth used by the metrics; the
    recovery and factorization code never calls them.
    """
    kind: str
    mode: str
    x_points: np.ndarray
    xi_points: np.ndarray
    phase_eval: PhaseEval = field(repr=False)
    dense_limit: int = 0
    _oracle: object = field(default=None, repr=False)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.x_points.shape[0], self.xi_points.shape[0]

    def _require(self, *modes: str) -> None:
        if self.mode not in modes:
            raise ConfigurationError(f"A '{self.mode}' accessor does not provide this access; needs {modes}.")

    # Ground truth
    def reference_phase(self, rows, cols) -> np.ndarray:
        return self.phase_eval(np.atleast_1d(np.asarray(rows, dtype=np.intp)), np.atleast_1d(np.asarray(cols, dtype=np.intp)))

    def reference_entries(self, rows, cols) -> np.ndarray:
        return np.exp(2j * np.pi * self.reference_phase(rows, cols))

    def reference_matvec(self, f, rows=None) -> np.ndarray:
        """Direct summation of (K f)[rows], skipping zero entries of f."""
        m, n = self.shape
        f = np.asarray(f)
        vector = f.ndim == 1
        f = f.reshape(n, -1)
        rows = np.arange(m) if rows is None else np.atleast_1d(np.asarray(rows, dtype=np.intp))
        support = np.flatnonzero(np.any(f != 0, axis=1))
        out = np.zeros((rows.size, f.shape[1]), dtype=complex)
        if support.size:
            step = max(1, CHUNK_ENTRIES // support.size)
            for start in range(0, rows.size, step):
                chunk = rows[start:start + step]
                out[start:start + step] = self.reference_entries(chunk, support) @ f[support]
        return out[:, 0] if vector else out

    def reference_rmatvec(self, g, cols=None) -> np.ndarray:
        """Direct summation of (Kᵀ g)[cols], skipping zero entries of g."""
        m, n = self.shape
        g = np.asarray(g)
        vector = g.ndim == 1
        g = g.reshape(m, -1)
        cols = np.arange(n) if cols is None else np.atleast_1d(np.asarray(cols, dtype=np.intp))
        support = np.flatnonzero(np.any(g != 0, axis=1))
        out = np.zeros((cols.size, g.shape[1]), dtype=complex)
        if support.size:
            step = max(1, CHUNK_ENTRIES // support.size)
            for start in range(0, cols.size, step):
                chunk = cols[start:start + step]
                out[start:start + step] = self.reference_entries(support, chunk).T @ g[support]
        return out[:, 0] if vector else out

    # Products
    @property
    def uses_factorization_oracle(self) -> bool:
        return self.mode == 'matvec' and max(self.shape) > self.dense_limit

    def _factorization_oracle(self):
        if self._oracle is None:
            from butterfly_app.idbf import IDBFConfig, idbf_factorize
            from butterfly_app.tree import complementary_trees

            dim = self.x_points.shape[1]
            config = IDBFConfig.defaults(ORACLE_RANK, leaf_size=8 ** dim)
            tree_x, tree_xi = complementary_trees(self.x_points, self.xi_points, config.leaf_size)
            logger.info(f"KernelAccessor: building a factorization oracle for a {self.shape} '{self.kind}' kernel")
            self._oracle = idbf_factorize(self.reference_entries, tree_x, tree_xi, config)
        return self._oracle

    def matvec(self, f) -> np.ndarray:
        if self.uses_factorization_oracle:
            return self._factorization_oracle().apply(f)
        return self.reference_matvec(f)

    def rmatvec(self, g) -> np.ndarray:
        """Kᵀ g (plain transpose)."""
        if self.uses_factorization_oracle:
            return self._factorization_oracle().apply_transpose(g)
        return self.reference_rmatvec(g)

    # Entry-level access
    def entries(self, rows, cols) -> np.ndarray:
        self._require('entry', 'phase')
        return self.reference_entries(rows, cols)

    def rows(self, idx) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(idx, dtype=np.intp))
        m, n = self.shape
        if self.mode == 'matvec':
            basis = np.zeros((m, idx.size))
            basis[idx, np.arange(idx.size)] = 1.0
            return np.asarray(self.rmatvec(basis)).T
        return self.entries(idx, np.arange(n))

    def cols(self, idx) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(idx, dtype=np.intp))
        m, n = self.shape
        if self.mode == 'matvec':
            basis = np.zeros((n, idx.size))
            basis[idx, np.arange(idx.size)] = 1.0
            return np.asarray(self.matvec(basis))
        return self.entries(np.arange(m), idx)

    def phase_rows(self, idx) -> np.ndarray:
        self._require('phase')
        return self.reference_phase(idx, np.arange(self.shape[1]))

    def phase_cols(self, idx) -> np.ndarray:
        self._require('phase')
        return self.reference_phase(np.arange(self.shape[0]), idx)


def make_accessor(kind: str, scenario: int = 1, x_points=None, xi_points=None, n: Optional[int] = None,
                  mesh_level: Optional[int] = None, seed: SeedLike = None, low_rank=None,
                  dense_limit: Optional[int] = None, sphere_source: str = 'faces') -> KernelAccessor:
    """
    Builds a kernel accessor simulating one of the three access scenarios.
    Point sets default to the built-in experiment geometry for `kind`.
    """
    if kind not in KERNEL_KINDS:
        raise ConfigurationError(f"Unknown kernel kind '{kind}'; use one of {KERNEL_KINDS}.")
    if scenario not in SCENARIO_MODES:
        raise ConfigurationError(f"Scenario must be one of {sorted(SCENARIO_MODES)}, got {scenario}.")

    if kind == 'custom-lowrank':
        if low_rank is None:
            raise ConfigurationError("A custom-lowrank accessor needs a LowRankPhase.")
        if x_points is None or xi_points is None:
            raise ConfigurationError("A custom-lowrank accessor needs explicit point sets.")
    elif x_points is None or xi_points is None:
        x_points, xi_points = kernel_points(kind, n=n, mesh_level=mesh_level, rng=seed, sphere_source=sphere_source)
    x_points = _points(x_points)
    xi_points = _points(xi_points)

    if kind == 'fio2d':
        def phase_eval(rows, cols):
            return fio2d_phase(x_points[rows], xi_points[cols])
    elif kind == 'nufft':
        def phase_eval(rows, cols):
            return nufft_phase(x_points[rows], xi_points[cols])
    elif kind == 'helmholtz':
        size = x_points.shape[0]

        def phase_eval(rows, cols):
            return helmholtz_phase(x_points[rows], xi_points[cols], size)
    else:
        if low_rank.shape != (x_points.shape[0], xi_points.shape[0]):
            raise DimensionError(
                f"LowRankPhase shape {low_rank.shape} does not match {x_points.shape[0]}x{xi_points.shape[0]} points."
            )
        phase_eval = low_rank.phase

    accessor = KernelAccessor(
        kind=kind,
        mode=SCENARIO_MODES[scenario],
        x_points=x_points,
        xi_points=xi_points,
        phase_eval=phase_eval,
        dense_limit=dense_limit if dense_limit is not None else settings.SCENARIO2_DENSE_LIMIT,
    )
    logger.info(f"make_accessor: '{kind}' kernel {accessor.shape}, scenario {scenario} ({accessor.mode})")
    return accessor
