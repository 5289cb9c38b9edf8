import json
import logging
import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from butterfly_app.exceptions import ConfigurationError, InputError
from butterfly_app.idbf import ButterflyFactor, ButterflyFactorization, IDBFConfig

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# --- MATRIX FILES ---
# magic, flags (bit 0: complex), rows, cols; then little-endian float64 payload.
MATRIX_MAGIC = b'BFMX'
MATRIX_HEADER = struct.Struct('<4sIII')
FLAG_COMPLEX = 1

# --- FACTORIZATION CONTAINER ---
# magic, version, rows, cols, depth, middle level, factor count, metadata length.
FACTORIZATION_MAGIC = b'BFLY'
FACTORIZATION_VERSION = 1
FACTORIZATION_HEADER = struct.Struct('<4sIQQIIII')
FACTOR_HEADER = struct.Struct('<QQQ')
BLOCK_ENTRY = struct.Struct('<QQQQ')


def _read_exact(handle: BinaryIO, size: int, what: str) -> bytes:
    data = handle.read(size)
    if len(data) != size:
        raise InputError(f"Truncated file while reading {what}: expected {size} bytes, got {len(data)}.")
    return data


def _is_csv(path: PathLike) -> bool:
    return Path(path).suffix.lower() == '.csv'


def write_matrix(path: PathLike, array) -> None:
    """
    Writes a vector (as a single column) or a matrix. `.csv` paths get text with
    complex entries as adjacent re,im columns; anything else gets the binary format.
    """
    a = np.asarray(array)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise InputError(f"Only vectors and matrices can be written, got {a.ndim} dimensions.")
    is_complex = np.iscomplexobj(a)

    if _is_csv(path):
        body = np.stack([a.real, a.imag], axis=-1).reshape(a.shape[0], -1) if is_complex else a.real
        np.savetxt(path, body, delimiter=',', fmt='%.17g')
        return

    with open(path, 'wb') as handle:
        handle.write(MATRIX_HEADER.pack(MATRIX_MAGIC, FLAG_COMPLEX if is_complex else 0, a.shape[0], a.shape[1]))
        payload = a.astype('<c16') if is_complex else a.astype('<f8')
        handle.write(np.ascontiguousarray(payload).tobytes())


def read_matrix(path: PathLike, complex_csv: bool = False) -> np.ndarray:
    """
    Reads a file written by `write_matrix`. CSV input is real unless `complex_csv`
    is set, in which case columns are read as re,im pairs.
    """
    if _is_csv(path):
        data = np.loadtxt(path, delimiter=',', ndmin=2)
        if not complex_csv:
            return data
        if data.shape[1] % 2:
            raise InputError(f"Complex CSV needs an even number of columns, got {data.shape[1]}.")
        return data[:, 0::2] + 1j * data[:, 1::2]

    with open(path, 'rb') as handle:
        magic, flags, rows, cols = MATRIX_HEADER.unpack(_read_exact(handle, MATRIX_HEADER.size, 'matrix header'))
        if magic != MATRIX_MAGIC:
            raise InputError(f"{path} is not a matrix file (magic {magic!r}).")
        dtype = np.dtype('<c16') if flags & FLAG_COMPLEX else np.dtype('<f8')
        payload = _read_exact(handle, rows * cols * dtype.itemsize, 'matrix payload')
    return np.frombuffer(payload, dtype=dtype).reshape(rows, cols).copy()


def read_vector(path: PathLike) -> np.ndarray:
    """A single-column matrix file as a 1D array; a two-column CSV is read as re,im."""
    if _is_csv(path):
        data = np.loadtxt(path, delimiter=',', ndmin=2)
        if data.shape[1] == 2:
            return data[:, 0] + 1j * data[:, 1]
        if data.shape[1] != 1:
            raise InputError(f"A vector CSV has one (real) or two (re,im) columns, got {data.shape[1]}.")
        return data[:, 0]
    a = read_matrix(path)
    if a.shape[1] != 1:
        raise InputError(f"Expected a single column in {path}, got shape {a.shape}.")
    return a[:, 0]


# --- FACTORIZATIONS ---
def save_factorization(path: PathLike, factorization: ButterflyFactorization) -> None:
    """
    Container layout: header, JSON metadata, row and column orders (int64), then per
    factor its shape, block count, block table (row, col, rows, cols) and the
    complex128 payload of all blocks in table order.
    """
    meta = {
        'config': factorization.config.as_dict() if factorization.config else None,
        'max_rank': factorization.max_rank,
        'max_coefficient': factorization.max_coefficient,
    }
    meta_bytes = json.dumps(meta).encode('utf-8')
    m, n = factorization.shape
    with open(path, 'wb') as handle:
        handle.write(FACTORIZATION_HEADER.pack(
            FACTORIZATION_MAGIC, FACTORIZATION_VERSION, m, n,
            factorization.depth, factorization.middle_level, len(factorization.factors), len(meta_bytes),
        ))
        handle.write(meta_bytes)
        handle.write(np.asarray(factorization.row_order, dtype='<i8').tobytes())
        handle.write(np.asarray(factorization.col_order, dtype='<i8').tobytes())
        for factor in factorization.factors:
            handle.write(FACTOR_HEADER.pack(factor.shape[0], factor.shape[1], len(factor.blocks)))
            for r0, c0, block in factor.blocks:
                handle.write(BLOCK_ENTRY.pack(r0, c0, block.shape[0], block.shape[1]))
            for _, _, block in factor.blocks:
                handle.write(np.ascontiguousarray(block, dtype='<c16').tobytes())
    logger.info(f"save_factorization: {len(factorization.factors)} factors, nnz {factorization.nnz} -> {path}")


def load_factorization(path: PathLike) -> ButterflyFactorization:
    with open(path, 'rb') as handle:
        header = FACTORIZATION_HEADER.unpack(_read_exact(handle, FACTORIZATION_HEADER.size, 'container header'))
        magic, version, m, n, depth, middle, factor_count, meta_size = header
        if magic != FACTORIZATION_MAGIC:
            raise InputError(f"{path} is not a factorization container (magic {magic!r}).")
        if version != FACTORIZATION_VERSION:
            raise InputError(f"Unsupported factorization container version {version}.")
        meta = json.loads(_read_exact(handle, meta_size, 'metadata').decode('utf-8'))
        row_order = np.frombuffer(_read_exact(handle, 8 * m, 'row order'), dtype='<i8').astype(np.intp)
        col_order = np.frombuffer(_read_exact(handle, 8 * n, 'column order'), dtype='<i8').astype(np.intp)

        factors = []
        for _ in range(factor_count):
            rows, cols, block_count = FACTOR_HEADER.unpack(_read_exact(handle, FACTOR_HEADER.size, 'factor header'))
            table = [BLOCK_ENTRY.unpack(_read_exact(handle, BLOCK_ENTRY.size, 'block table')) for _ in range(block_count)]
            blocks = []
            for r0, c0, br, bc in table:
                data = _read_exact(handle, 16 * br * bc, 'block payload')
                blocks.append((int(r0), int(c0), np.frombuffer(data, dtype='<c16').reshape(br, bc).copy()))
            factors.append(ButterflyFactor((int(rows), int(cols)), blocks))

    config = None
    if meta.get('config'):
        try:
            config = IDBFConfig(**meta['config'])
        except (TypeError, ConfigurationError) as e:
            logger.warning(f"load_factorization: ignoring unreadable metadata in {path}: {e}")
    return ButterflyFactorization(
        shape=(int(m), int(n)),
        factors=factors,
        row_order=row_order,
        col_order=col_order,
        depth=int(depth),
        middle_level=int(middle),
        config=config,
        max_rank=int(meta.get('max_rank', 0)),
        max_coefficient=float(meta.get('max_coefficient', 0.0)),
    )
