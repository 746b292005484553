"""Kronecker-sum kernels with a compiled core and a pure-Python fallback.

The compiled extension ``_kron`` is used when it was built and importable;
set ``DGTIME_PURE_PYTHON=1`` to force the SciPy fallback.  ``BACKEND`` names
the active implementation.
"""
import os

import numpy as np
import scipy.sparse as sp

from . import _fallback

_ext = None
if os.environ.get("DGTIME_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kron as _ext
    except ImportError:
        _ext = None

BACKEND = "compiled" if _ext is not None else "python"


def _accumulate_compiled(S, Y, out):
    if S.indices.dtype != np.int32 or S.indptr.dtype != np.int32:
        out += S @ Y
        return
    _ext.csr_accumulate(S.data, S.indices, S.indptr, Y, out)


def get_accumulator(backend=None):
    """Return the ``out += S @ Y`` kernel for ``backend`` (default: active one)."""
    backend = backend or BACKEND
    if backend == "compiled":
        if _ext is None:
            raise ImportError("the compiled dgtime kernel is not available")
        return _accumulate_compiled
    if backend == "python":
        return _fallback.csr_accumulate
    raise ValueError(f"unknown kernel backend {backend!r}")


def kron_sum_apply(terms, X, backend=None):
    """Evaluate ``sum_k S_k X T_k^T``, i.e. ``(sum_k S_k (x) T_k) vec(X)``.

    Parameters
    ----------
    terms : sequence of (S, T)
        Spatial matrices ``S`` (dense or CSR, ``d x d``; ``None`` skips the
        term) paired with dense time matrices ``T`` of size ``q x q``.
    X : ndarray, shape (d, q)
        Row-major coefficient block, time index fastest.
    """
    X = np.ascontiguousarray(X, dtype=float)
    out = np.zeros_like(X)
    accumulate = get_accumulator(backend)
    for S, T in terms:
        if S is None:
            continue
        Y = np.ascontiguousarray(X @ T.T)
        if sp.issparse(S):
            accumulate(S, Y, out)
        else:
            out += S @ Y
    return out
