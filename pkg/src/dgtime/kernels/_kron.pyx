# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR times dense-block accumulation."""


def csr_accumulate(const double[::1] data, const int[::1] indices, const int[::1] indptr,
                   const double[:, ::1] Y, double[:, ::1] out):
    """``out += S @ Y`` for CSR ``S`` given by ``(data, indices, indptr)``."""
    cdef Py_ssize_t nrows = indptr.shape[0] - 1
    cdef Py_ssize_t ncols = Y.shape[1]
    cdef Py_ssize_t i, p, a, j
    cdef double s
    with nogil:
        for i in range(nrows):
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                s = data[p]
                for a in range(ncols):
                    out[i, a] += s * Y[j, a]
