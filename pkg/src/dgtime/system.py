"""Linear second-order systems ``P u'' + L u' + K u = f`` and their first-order view.

With ``z = [u, w]`` and ``w = u'`` the system becomes ``Kt z' + A z = F`` where
``Kt = diag(K, P)``, ``A = [[0, -K], [K, L]]`` and ``F = [0, f]``.  Using ``K``
(rather than the identity) in the kinematic row makes ``Kt`` symmetric
positive definite and the skew part of ``A`` cancel in ``<A z, z>``.

``L`` is admitted positive *semi*-definite, including ``L = 0``, because
undamped benchmarks need it; the energy norm then loses its damping term.
"""
from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError, ValidationError

#: Systems with more unknowns than this are stored in CSR format.
DENSE_THRESHOLD = 200

SYMMETRY_TOL = 1e-10

FORCING_KINDS = ("closure", "zero", "manufactured-1d", "sampled")


def matvec(A, x):
    """``A @ x`` for dense arrays and scipy sparse matrices alike."""
    return A @ x


def to_dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


# ----------------------------------------------------------------------------
# Forcing
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ForcingSpec:
    """Right-hand side ``f(t)`` of the second-order system.

    ``kind`` is one of ``closure`` (payload: callable ``t -> R^d``), ``zero``
    (payload ignored), ``manufactured-1d`` (payload: callable, usually built
    by :func:`dgtime.wave1d.manufactured_case`) or ``sampled`` (payload:
    ``(times, values)`` with ``values`` of shape ``(len(times), d)``).
    Sampled data are interpolated with a cubic spline.
    """

    kind: str = "zero"
    payload: object = None
    _fn: Callable = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.kind not in FORCING_KINDS:
            raise ConfigurationError(
                f"unknown forcing kind {self.kind!r}; expected one of {FORCING_KINDS}"
            )
        if self.kind in ("closure", "manufactured-1d"):
            if not callable(self.payload):
                raise ConfigurationError(f"{self.kind} forcing needs a callable payload")
            fn = self.payload
        elif self.kind == "sampled":
            times, values = self.payload
            times = np.asarray(times, dtype=float)
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                values = values[:, None]
            if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
                raise ConfigurationError("sampled forcing needs strictly increasing sample times")
            if values.shape[0] != times.size:
                raise ConfigurationError("sampled forcing: one row of values per sample time")
            warnings.warn(
                "sampled forcing is interpolated with cubic splines; the "
                "interpolation error can dominate for high temporal degrees",
                stacklevel=3,
            )
            spline = CubicSpline(times, values, axis=0)
            fn = spline
            object.__setattr__(self, "payload", (times, values))
        else:
            fn = None
        object.__setattr__(self, "_fn", fn)

    @property
    def is_zero(self):
        return self.kind == "zero"

    def sample(self, times, dim):
        """Forcing at every ``times[k]`` as an array ``(len(times), dim)``."""
        times = np.asarray(times, dtype=float).ravel()
        if self.kind == "zero":
            return np.zeros((times.size, dim))
        if self.kind == "sampled":
            out = self._fn(times)
        else:
            out = np.array([np.asarray(self._fn(t), dtype=float).reshape(-1) for t in times])
        out = np.asarray(out, dtype=float).reshape(times.size, -1)
        if out.shape[1] != dim:
            raise ValidationError(f"forcing returned vectors of size {out.shape[1]}, expected {dim}")
        return out

    def __call__(self, t, dim):
        return self.sample([t], dim)[0]

    def check_covers(self, t0, T):
        """Raise unless sampled data span ``[t0, T]``; other kinds always pass."""
        if self.kind != "sampled":
            return
        times = self.payload[0]
        eps = 1e-12 * max(1.0, abs(T))
        if times[0] > t0 + eps or times[-1] < T - eps:
            raise ConfigurationError(
                f"sampled forcing covers [{times[0]}, {times[-1]}], mesh needs [{t0}, {T}]"
            )


# ----------------------------------------------------------------------------
# Validation helpers
# ----------------------------------------------------------------------------


def _asymmetry(A):
    """Relative max asymmetry ``max|A - A^T| / max|A|``."""
    D = A - A.T
    if sp.issparse(D):
        num = abs(D).max() if D.nnz else 0.0
        den = abs(A).max() if A.nnz else 0.0
    else:
        num = np.abs(D).max(initial=0.0)
        den = np.abs(A).max(initial=0.0)
    return float(num / den) if den > 0 else float(num)


class _Factor:
    """SPD factorization used for repeated solves with ``P``, ``K`` or ``L``."""

    def __init__(self, A):
        self.sparse = sp.issparse(A)
        if self.sparse:
            self._lu = spla.splu(sp.csc_matrix(A))
        else:
            self._cho = scipy.linalg.cho_factor(A, lower=True)

    def solve(self, b):
        if self.sparse:
            return self._lu.solve(np.asarray(b, dtype=float))
        return scipy.linalg.cho_solve(self._cho, b)


def _spd_pivot_failure(A):
    """Index (one-based) of the first non-positive Cholesky pivot, or 0."""
    if sp.issparse(A):
        lu = spla.splu(
            sp.csc_matrix(A),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True),
        )
        piv = lu.U.diagonal()
        bad = np.flatnonzero(~(piv > 0))
        return int(bad[0]) + 1 if bad.size else 0
    _, info = scipy.linalg.lapack.dpotrf(np.asarray(A, dtype=float), lower=1)
    return int(info) if info > 0 else 0


def _is_psd(A):
    n = A.shape[0]
    if sp.issparse(A) and A.nnz == 0:
        return True
    scale = abs(A).max() if sp.issparse(A) else np.abs(A).max(initial=0.0)
    if scale == 0:
        return True
    if n <= 2000:
        lam = np.linalg.eigvalsh(to_dense(A))
        return bool(lam.min() >= -1e-10 * scale)
    shifted = A + 1e-10 * scale * sp.identity(n, format="csr")
    return _spd_pivot_failure(shifted) == 0


def _prepare_matrix(name, A, dim, dense_threshold):
    if sp.issparse(A):
        A = sp.csr_matrix(A, dtype=float)
    else:
        A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape != (dim, dim):
        raise ValidationError(f"{name} has shape {A.shape}, expected {(dim, dim)}")
    if dim > dense_threshold:
        A = sp.csr_matrix(A)
    elif sp.issparse(A):
        A = A.toarray()
    asym = _asymmetry(A)
    if asym > SYMMETRY_TOL:
        raise ValidationError(f"{name} is not symmetric: relative max asymmetry {asym:.3e}")
    return A


# ----------------------------------------------------------------------------
# Systems
# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SecondOrderSystem:
    """Validated data of ``P u'' + L u' + K u = f``, ``u(0) = u0``, ``u'(0) = u1``.

    Construct through :func:`build_system`.  Cholesky factors of ``P`` and
    ``K`` (and of ``L`` when it is definite) are cached on first use.
    """

    P: object
    L: object
    K: object
    forcing: ForcingSpec
    u0: np.ndarray
    u1: np.ndarray

    @property
    def dim(self):
        return self.u0.size

    @property
    def is_sparse(self):
        return sp.issparse(self.K)

    @functools.cached_property
    def k_factor(self):
        return _Factor(self.K)

    @functools.cached_property
    def p_factor(self):
        return _Factor(self.P)

    @functools.cached_property
    def l_factor(self):
        """Cholesky factor of ``L`` or None when ``L`` is only semi-definite."""
        if _spd_pivot_failure(self.L) != 0:
            return None
        return _Factor(self.L)

    @property
    def l_is_definite(self):
        return self.l_factor is not None

    @property
    def z0(self):
        return np.concatenate([self.u0, self.u1])

    def replace(self, **changes):
        """Copy with some fields replaced, re-validated."""
        data = dict(P=self.P, L=self.L, K=self.K, forcing=self.forcing, u0=self.u0, u1=self.u1)
        data.update(changes)
        threshold = 0 if self.is_sparse else self.dim
        return build_system(**data, dense_threshold=threshold)


def build_system(P, L, K, forcing=None, u0=None, u1=None, dense_threshold=DENSE_THRESHOLD):
    """Validate ``(P, L, K, f, u0, u1)`` and return a :class:`SecondOrderSystem`.

    ``P`` and ``K`` must be symmetric positive definite and ``L`` symmetric
    positive semi-definite, symmetry being checked to 1e-10 relative.
    Matrices are stored dense up to ``dense_threshold`` unknowns and in CSR
    format above it.  ``forcing`` defaults to zero, ``u0``/``u1`` to zero
    vectors.

    Raises
    ------
    ValidationError
        On shape mismatch, asymmetry (message carries the asymmetry) or an
        indefinite matrix (message names the failing pivot).
    """
    dim = P.shape[0] if sp.issparse(P) else np.atleast_2d(P).shape[0]
    P = _prepare_matrix("P", P, dim, dense_threshold)
    L = _prepare_matrix("L", L, dim, dense_threshold)
    K = _prepare_matrix("K", K, dim, dense_threshold)
    for name, A in (("P", P), ("K", K)):
        pivot = _spd_pivot_failure(A)
        if pivot:
            raise ValidationError(
                f"{name} is not positive definite: Cholesky pivot {pivot} is not positive"
            )
    if not _is_psd(L):
        raise ValidationError("L is not positive semi-definite")
    u0 = np.zeros(dim) if u0 is None else np.asarray(u0, dtype=float).reshape(-1)
    u1 = np.zeros(dim) if u1 is None else np.asarray(u1, dtype=float).reshape(-1)
    for name, v in (("u0", u0), ("u1", u1)):
        if v.size != dim:
            raise ValidationError(f"{name} has length {v.size}, expected {dim}")
    u0.setflags(write=False)
    u1.setflags(write=False)
    if forcing is None:
        forcing = ForcingSpec("zero")
    elif callable(forcing) and not isinstance(forcing, ForcingSpec):
        forcing = ForcingSpec("closure", forcing)
    return SecondOrderSystem(P, L, K, forcing, u0, u1)


# ----------------------------------------------------------------------------
# First-order view
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockSystemView:
    """Matrix-free actions of ``Kt = diag(K, P)`` and ``A = [[0, -K], [K, L]]``."""

    system: SecondOrderSystem

    @property
    def dim(self):
        return 2 * self.system.dim

    @property
    def z0(self):
        return self.system.z0

    def _split(self, z):
        z = np.asarray(z, dtype=float)
        d = self.system.dim
        return z[:d], z[d:]

    def ktilde_apply(self, z):
        u, w = self._split(z)
        s = self.system
        return np.concatenate([matvec(s.K, u), matvec(s.P, w)])

    def a_apply(self, z):
        u, w = self._split(z)
        s = self.system
        return np.concatenate([-matvec(s.K, w), matvec(s.K, u) + matvec(s.L, w)])

    def ktilde_dense(self):
        s = self.system
        d = s.dim
        out = np.zeros((2 * d, 2 * d))
        out[:d, :d] = to_dense(s.K)
        out[d:, d:] = to_dense(s.P)
        return out

    def a_dense(self):
        s = self.system
        d = s.dim
        K = to_dense(s.K)
        out = np.zeros((2 * d, 2 * d))
        out[:d, d:] = -K
        out[d:, :d] = K
        out[d:, d:] = to_dense(s.L)
        return out


def first_order_view(system):
    """Return the :class:`BlockSystemView` of ``system``."""
    return BlockSystemView(system)


def ktilde_quadratic(system, u, w):
    """``u^T K u + w^T P w`` evaluated row-wise for stacked ``u``, ``w``.

    ``u`` and ``w`` have shape ``(m, d)`` or ``(d,)``.
    """
    u = np.atleast_2d(u)
    w = np.atleast_2d(w)
    Ku = (system.K @ u.T).T
    Pw = (system.P @ w.T).T
    return np.einsum("ij,ij->i", u, Ku) + np.einsum("ij,ij->i", w, Pw)
