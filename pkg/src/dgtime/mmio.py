"""Reader and writer for the real subset of the Matrix Market text format.

Supported headers are ``%%MatrixMarket matrix {coordinate|array}
{real|integer} {general|symmetric}``.  Coordinate files load as CSR matrices,
array files as dense ndarrays.  Values are written with 17 significant
digits so a write/read round trip is lossless.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import MatrixMarketError

_FORMATS = ("coordinate", "array")
_FIELDS = ("real", "integer", "double")
_SYMMETRIES = ("general", "symmetric")


def _content_lines(lines, start):
    """Yield ``(lineno, tokens)`` for non-blank, non-comment lines."""
    for lineno, line in enumerate(lines[start:], start=start + 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        yield lineno, stripped.split()


def _parse_header(line, path):
    tokens = line.strip().split()
    if len(tokens) != 5 or tokens[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("missing or malformed '%%MatrixMarket' header", 1, path)
    obj, fmt, fld, sym = (t.lower() for t in tokens[1:])
    if obj != "matrix":
        raise MatrixMarketError(f"unsupported object {obj!r}", 1, path)
    if fmt not in _FORMATS:
        raise MatrixMarketError(f"unsupported format {fmt!r}", 1, path)
    if fld not in _FIELDS:
        raise MatrixMarketError(f"unsupported field {fld!r}; only real matrices are read", 1, path)
    if sym not in _SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry {sym!r}", 1, path)
    return fmt, sym


def _ints(tokens, count, lineno, path, what):
    if len(tokens) != count:
        raise MatrixMarketError(f"expected {count} integers on the {what} line", lineno, path)
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise MatrixMarketError(f"non-integer value on the {what} line", lineno, path) from None


def _real(token, lineno, path):
    try:
        return float(token)
    except ValueError:
        raise MatrixMarketError(f"cannot parse {token!r} as a real number", lineno, path) from None


def load_matrix_market(path):
    """Read a real Matrix Market file.

    Symmetric storage is expanded and 1-based indices are converted.

    Returns
    -------
    scipy.sparse.csr_matrix or numpy.ndarray
        CSR for coordinate files, a dense ``(rows, cols)`` array otherwise.

    Raises
    ------
    MatrixMarketError
        Malformed header or size line, unparsable entries, out-of-range
        indices or a wrong number of entries; the message carries the path
        and one-based line number.
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except UnicodeDecodeError:
        raise MatrixMarketError("file is not valid text", None, path) from None
    if not lines:
        raise MatrixMarketError("empty file", 1, path)
    fmt, sym = _parse_header(lines[0], path)
    body = _content_lines(lines, 1)
    try:
        lineno, tokens = next(body)
    except StopIteration:
        raise MatrixMarketError("missing size line", len(lines), path) from None

    if fmt == "coordinate":
        nrows, ncols, nnz = _ints(tokens, 3, lineno, path, "size")
        if sym == "symmetric" and nrows != ncols:
            raise MatrixMarketError("symmetric matrix must be square", lineno, path)
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        k = 0
        for lineno, tokens in body:
            if k >= nnz:
                raise MatrixMarketError(f"more than the declared {nnz} entries", lineno, path)
            if len(tokens) != 3:
                raise MatrixMarketError("coordinate entry needs 'row col value'", lineno, path)
            i, j = _ints(tokens[:2], 2, lineno, path, "entry")
            if not (1 <= i <= nrows and 1 <= j <= ncols):
                raise MatrixMarketError(
                    f"index ({i}, {j}) out of bounds for a {nrows}x{ncols} matrix", lineno, path
                )
            if sym == "symmetric" and j > i:
                raise MatrixMarketError("symmetric storage must hold the lower triangle", lineno, path)
            rows[k], cols[k], vals[k] = i - 1, j - 1, _real(tokens[2], lineno, path)
            k += 1
        if k != nnz:
            raise MatrixMarketError(f"expected {nnz} entries, found {k}", len(lines), path)
        if sym == "symmetric":
            off = rows != cols
            rows, cols, vals = (
                np.concatenate([rows, cols[off]]),
                np.concatenate([cols, rows[off]]),
                np.concatenate([vals, vals[off]]),
            )
        return sp.csr_matrix((vals, (rows, cols)), shape=(nrows, ncols))

    nrows, ncols = _ints(tokens, 2, lineno, path, "size")
    if sym == "symmetric":
        if nrows != ncols:
            raise MatrixMarketError("symmetric matrix must be square", lineno, path)
        expected = nrows * (nrows + 1) // 2
    else:
        expected = nrows * ncols
    values = []
    for lineno, tokens in body:
        if len(tokens) != 1:
            raise MatrixMarketError("array entry must be a single value", lineno, path)
        if len(values) >= expected:
            raise MatrixMarketError(f"more than the expected {expected} values", lineno, path)
        values.append(_real(tokens[0], lineno, path))
    if len(values) != expected:
        raise MatrixMarketError(f"expected {expected} values, found {len(values)}", len(lines), path)
    out = np.zeros((nrows, ncols))
    if sym == "symmetric":
        k = 0
        for j in range(ncols):
            for i in range(j, nrows):
                out[i, j] = out[j, i] = values[k]
                k += 1
    else:
        out[:] = np.asarray(values).reshape(ncols, nrows).T
    return out


def write_matrix_market(path, A, symmetric=None, comment=None):
    """Write ``A`` as a real Matrix Market file.

    Sparse inputs use coordinate format and dense inputs array format; 1-D
    arrays are written as a single column.  ``symmetric=None`` picks
    symmetric storage when ``A`` is exactly symmetric.
    """
    path = Path(path)
    if sp.issparse(A):
        A = sp.coo_matrix(A)
        is_sym = A.shape[0] == A.shape[1] and (abs(A - A.T)).nnz == 0
    else:
        A = np.asarray(A, dtype=float)
        if A.ndim == 1:
            A = A[:, None]
        is_sym = A.shape[0] == A.shape[1] and np.array_equal(A, A.T)
    if symmetric is None:
        symmetric = is_sym
    elif symmetric and not is_sym:
        raise ValueError("symmetric storage requested for a non-symmetric matrix")
    sym = "symmetric" if symmetric else "general"
    nrows, ncols = A.shape
    out = []
    if sp.issparse(A):
        out.append(f"%%MatrixMarket matrix coordinate real {sym}")
        if comment:
            out.extend(f"% {c}" for c in comment.splitlines())
        A = sp.coo_matrix(A)
        A.sum_duplicates()
        keep = A.row >= A.col if symmetric else np.ones(A.nnz, dtype=bool)
        rows, cols, vals = A.row[keep], A.col[keep], A.data[keep]
        order = np.lexsort((rows, cols))
        out.append(f"{nrows} {ncols} {rows.size}")
        out.extend(f"{rows[k] + 1} {cols[k] + 1} {vals[k]:.17g}" for k in order)
    else:
        out.append(f"%%MatrixMarket matrix array real {sym}")
        if comment:
            out.extend(f"% {c}" for c in comment.splitlines())
        out.append(f"{nrows} {ncols}")
        for j in range(ncols):
            start = j if symmetric else 0
            out.extend(f"{A[i, j]:.17g}" for i in range(start, nrows))
    path.write_text("\n".join(out) + "\n")
    return path
