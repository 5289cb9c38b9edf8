import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from butterfly_app.exceptions import DimensionError, InputError

logger = logging.getLogger(__name__)


def round_half_away(x: float) -> float:
    """Rounds to the nearest integer, halves away from zero."""
    return math.copysign(math.floor(abs(x) + 0.5), x)


def check_wrapped(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise InputError("Wrapped phase contains non-finite values.")
    if values.size and (values.min() < 0.0 or values.max() >= 1.0):
        raise InputError(
            f"Wrapped phase values must lie in [0, 1); got range [{values.min()}, {values.max()}]."
        )


@dataclass(frozen=True)
class Recovered1D:
    """Unwrapped vector and the block starts where a discontinuity was declared (always starts at 0)."""
    values: np.ndarray
    discontinuities: List[int]
    evaluations: int = 0


def _recover_1d(u: Sequence[float], tau: float, flag: int) -> Recovered1D:
    u = [float(x) for x in u]
    size = len(u)
    v = list(u)
    breaks = [0]
    evaluations = 0
    if size < 4:
        return Recovered1D(np.asarray(v), breaks, evaluations)

    c = 0
    while c < len(breaks):
        st = breaks[c]
        if flag != 1 or st != 0:
            v[st + 1] = u[st + 1] - round_half_away(u[st + 1] - v[st])
            v[st + 2] = u[st + 2] - round_half_away(u[st + 2] - 2.0 * v[st + 1] + v[st])
            evaluations += 2
        for a in range(st + 3, size):
            v[a] = u[a] - round_half_away(u[a] - 3.0 * v[a - 1] + 3.0 * v[a - 2] - v[a - 3])
            evaluations += 1
            third = v[a] - 3.0 * v[a - 1] + 3.0 * v[a - 2] - v[a - 3]
            # a restart needs two more entries after the new block start
            if abs(third) >= tau and a <= size - 4:
                breaks.append(a)
                v[a] = u[a] - round_half_away(u[a] - v[a - 1])
                break
        c += 1
    return Recovered1D(np.asarray(v), breaks, evaluations)


def recover_vector_1d(u, tau: Optional[float] = None, flag: int = 0) -> Recovered1D:
    """
    Unwraps a mod-1 vector by rounding third differences to the nearest integer.

    A position is declared a discontinuity when its third difference reaches `tau`;
    recovery restarts there with a first-difference anchor. With `flag=1` the
    first three entries are taken as already recovered.
    """
    tau = tau if tau is not None else settings.RECOVERY_TAU_1D
    values = np.asarray(u, dtype=float).ravel()
    check_wrapped(values)
    return _recover_1d(values, tau, flag)


# --- MATRIX RECOVERY ---
@dataclass
class BlockPartition1D:
    shape: Tuple[int, int]
    row_breaks: np.ndarray
    col_breaks: np.ndarray
    sampled_rows: List[np.ndarray] = field(default_factory=list)
    sampled_cols: List[np.ndarray] = field(default_factory=list)

    @property
    def row_ranges(self) -> List[Tuple[int, int]]:
        return _ranges(self.row_breaks, self.shape[0])

    @property
    def col_ranges(self) -> List[Tuple[int, int]]:
        return _ranges(self.col_breaks, self.shape[1])

    def row_block_of(self, i: int) -> int:
        return int(np.searchsorted(self.row_breaks, i, side='right') - 1)

    def col_block_of(self, j: int) -> int:
        return int(np.searchsorted(self.col_breaks, j, side='right') - 1)


def _ranges(breaks: np.ndarray, size: int) -> List[Tuple[int, int]]:
    stops = list(breaks[1:]) + [size]
    return [(int(a), int(b)) for a, b in zip(breaks, stops) if b > a]


@dataclass
class RecoveredMatrix1D:
    partition: BlockPartition1D
    rows: Dict[int, np.ndarray]
    cols: Dict[int, np.ndarray]

    @property
    def recovered_rows(self) -> Dict[int, np.ndarray]:
        return self.rows

    @property
    def recovered_cols(self) -> Dict[int, np.ndarray]:
        return self.cols


def recover_matrix_1d(phase, rows: Sequence[int], cols: Sequence[int], tau: Optional[float] = None) -> RecoveredMatrix1D:
    """
    Recovers sampled rows and columns of a 1D phase matrix block by block.

    `phase` exposes `shape`, `row_eval(I)` and `col_eval(J)` returning wrapped values.
    Inside every block the order is: first row, first three columns, rows two and
    three, then the sampled rows and the sampled columns, all with threshold 1.
    """
    tau = tau if tau is not None else settings.RECOVERY_TAU_1D
    rows = [int(i) for i in rows]
    cols = [int(j) for j in cols]
    if not rows or not cols:
        raise DimensionError("recover_matrix_1d needs at least one sampled row and one sampled column.")
    m, n = phase.shape

    sample_col = np.asarray(phase.col_eval(np.asarray([cols[0]])))[:, 0]
    sample_row = np.asarray(phase.row_eval(np.asarray([rows[0]])))[0]
    row_breaks = recover_vector_1d(sample_col, tau).discontinuities
    col_breaks = recover_vector_1d(sample_row, tau).discontinuities
    logger.info(f"1D recovery: {len(row_breaks) - 1} row and {len(col_breaks) - 1} column discontinuities at tau={tau}")

    rows = list(dict.fromkeys(rows + row_breaks))
    cols = list(dict.fromkeys(cols + col_breaks))
    partition = BlockPartition1D(
        shape=(m, n),
        row_breaks=np.asarray(sorted(row_breaks), dtype=np.intp),
        col_breaks=np.asarray(sorted(col_breaks), dtype=np.intp),
    )
    row_ranges, col_ranges = partition.row_ranges, partition.col_ranges
    partition.sampled_rows = [np.asarray([i for i in rows if a <= i < b], dtype=np.intp) for a, b in row_ranges]
    partition.sampled_cols = [np.asarray([j for j in cols if a <= j < b], dtype=np.intp) for a, b in col_ranges]

    head_rows = [i for a, b in row_ranges for i in range(a, min(a + 3, b))]
    head_cols = [j for a, b in col_ranges for j in range(a, min(a + 3, b))]
    all_rows = list(dict.fromkeys(rows + head_rows))
    all_cols = list(dict.fromkeys(cols + head_cols))
    wrapped_rows = dict(zip(all_rows, np.asarray(phase.row_eval(np.asarray(all_rows)), dtype=float)))
    wrapped_cols = dict(zip(all_cols, np.asarray(phase.col_eval(np.asarray(all_cols)), dtype=float).T))
    rec_rows = {i: wrapped_rows[i].copy() for i in all_rows}
    rec_cols = {j: wrapped_cols[j].copy() for j in all_cols}

    for (r0, r1), block_rows in zip(row_ranges, partition.sampled_rows):
        block_heads = list(range(r0, min(r0 + 3, r1)))
        for (c0, c1), block_cols in zip(col_ranges, partition.sampled_cols):
            col_heads = list(range(c0, min(c0 + 3, c1)))

            rec_rows[r0][c0:c1] = _recover_1d(wrapped_rows[r0][c0:c1], 1.0, 0).values

            for j in col_heads:
                u = wrapped_cols[j][r0:r1].copy()
                u[0] = rec_rows[r0][j]
                rec_cols[j][r0:r1] = _recover_1d(u, 1.0, 0).values

            for i in block_heads[1:]:
                u = wrapped_rows[i][c0:c1].copy()
                u[:len(col_heads)] = [rec_cols[j][i] for j in col_heads]
                rec_rows[i][c0:c1] = _recover_1d(u, 1.0, 1).values

            for i in block_rows:
                if i in block_heads:
                    continue
                u = wrapped_rows[i][c0:c1].copy()
                u[:len(col_heads)] = [rec_cols[j][i] for j in col_heads]
                rec_rows[i][c0:c1] = _recover_1d(u, 1.0, 1).values

            for j in block_cols:
                if j in col_heads:
                    continue
                u = wrapped_cols[j][r0:r1].copy()
                u[:len(block_heads)] = [rec_rows[i][j] for i in block_heads]
                rec_cols[j][r0:r1] = _recover_1d(u, 1.0, 1).values

    return RecoveredMatrix1D(
        partition=partition,
        rows={i: rec_rows[i] for i in rows},
        cols={j: rec_cols[j] for j in cols},
    )
