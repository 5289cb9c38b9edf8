import logging
import time
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, Optional, Sequence

import numpy as np
from django.conf import settings

from butterfly_app.exceptions import DimensionError
from butterfly_app.linalg import SeedLike, make_rng

logger = logging.getLogger(__name__)

RowProduct = Callable[[np.ndarray, np.ndarray], np.ndarray]
EntryEval = Callable[[np.ndarray, np.ndarray], np.ndarray]

# Times below this are clamped before taking logarithms.
MIN_TIME = 1e-9


def sample_indices(size: int, count: Optional[int] = None, rng: SeedLike = None) -> np.ndarray:
    """Sorted uniform sample of min(count, size) distinct indices."""
    count = count if count is not None else settings.METRIC_SAMPLE_SIZE
    return np.sort(make_rng(rng).choice(size, size=min(count, size), replace=False))


def relative_error(approx, exact, ord=None) -> float:
    approx, exact = np.asarray(approx), np.asarray(exact)
    denom = np.linalg.norm(exact, ord)
    diff = np.linalg.norm(approx - exact, ord)
    return float(diff / denom) if denom > 0 else float(diff)


def metric_eps_b(factorization, dense_rows: RowProduct, f, rows=None, seed: SeedLike = None,
                 g_fast: Optional[np.ndarray] = None) -> float:
    """
    Relative error of the fast matvec on sampled rows:
    sqrt(Σ_S |g_b − g_d|² / Σ_S |g_d|²), where `dense_rows(rows, f)` sums only those rows directly.
    """
    f = np.asarray(f)
    if g_fast is None:
        g_fast = factorization.apply(f)
    rows = sample_indices(g_fast.shape[0], rng=seed) if rows is None else np.asarray(rows, dtype=np.intp)
    g_direct = dense_rows(rows, f)
    return relative_error(np.asarray(g_fast)[rows], g_direct)


def metric_eps_K(phase, true_entries: EntryEval, rows=None, cols=None, seed: SeedLike = None) -> float:
    """Spectral-norm relative error of exp(2πi U Vᵀ) against the true kernel on a sampled block."""
    rng = make_rng(seed)
    m, n = phase.shape
    rows = sample_indices(m, rng=rng) if rows is None else np.asarray(rows, dtype=np.intp)
    cols = sample_indices(n, rng=rng) if cols is None else np.asarray(cols, dtype=np.intp)
    return relative_error(phase.kernel_entries(rows, cols), true_entries(rows, cols), ord=2)


def fit_slope(sizes: Sequence[float], times: Sequence[float]) -> float:
    """Least-squares slope of log T against log N."""
    sizes = np.asarray(sizes, dtype=float)
    times = np.maximum(np.asarray(times, dtype=float), MIN_TIME)
    if sizes.size < 2 or sizes.size != times.size:
        raise DimensionError(f"A slope needs at least two (N, T) pairs, got {sizes.size} sizes and {times.size} times.")
    slope, _ = np.polyfit(np.log(sizes), np.log(times), 1)
    return float(slope)


class StageTimer:
    """Monotonic wall-clock timings keyed by stage name."""

    def __init__(self):
        self.timings: Dict[str, float] = {}

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start
            logger.debug(f"stage {name}: {self.timings[name]:.4f}s")

    def get(self, name: str) -> float:
        return self.timings.get(name, 0.0)
