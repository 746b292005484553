"""Per-slab operators and right-hand sides of the DG-in-time scheme.

Unknowns of one slab are laid out with the time index fastest: spatial
component ``i`` and time mode ``l`` sit at position ``i * (r + 1) + l``, so a
coefficient vector reshapes to a ``(d, r + 1)`` block ``X`` and
``(S (x) T) vec(X) = vec(S X T^T)``.

The monolithic slab matrix is ``M = Kt (x) (N1 + N3) + A (x) N2`` acting on
``[U, W]``.  Eliminating ``U`` leaves the velocity system

    Mhat W = Ghat,   Mhat = P (x) (N1 + N3) + L (x) N2 + K (x) N7,
                     Ghat = G^w - (I (x) N6) G^u,

after which ``U = (I (x) N5) W + (I (x) N4) Gbar^u``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AssemblyError, ConfigurationError, SolverError
from .kernels import kron_sum_apply
from .system import first_order_view, to_dense


@dataclass(frozen=True, eq=False)
class SlabOperators:
    """Matrix-free actions of ``M`` and ``Mhat`` for one slab."""

    system: object
    time_mats: object

    @property
    def degree(self):
        return self.time_mats.degree

    @property
    def dim(self):
        return self.system.dim

    @property
    def size(self):
        """Length ``d (r + 1)`` of the velocity system."""
        return self.dim * (self.degree + 1)

    def _block(self, x):
        return np.asarray(x, dtype=float).reshape(self.dim, self.degree + 1)

    def m_hat_apply(self, x):
        s, tm = self.system, self.time_mats
        X = self._block(x)
        return kron_sum_apply([(s.P, tm.n13), (s.L, tm.n2), (s.K, tm.n7)], X).ravel()

    def m_hat_t_apply(self, x):
        """Action of ``Mhat^T`` (spatial matrices are symmetric)."""
        s, tm = self.system, self.time_mats
        X = self._block(x)
        return kron_sum_apply([(s.P, tm.n13.T), (s.L, tm.n2.T), (s.K, tm.n7.T)], X).ravel()

    def m_full_apply(self, z):
        s, tm = self.system, self.time_mats
        z = np.asarray(z, dtype=float)
        n = self.size
        U, W = self._block(z[:n]), self._block(z[n:])
        top = kron_sum_apply([(s.K, tm.n13)], U) - kron_sum_apply([(s.K, tm.n2)], W)
        bottom = kron_sum_apply([(s.K, tm.n2)], U) + kron_sum_apply(
            [(s.P, tm.n13), (s.L, tm.n2)], W
        )
        return np.concatenate([top.ravel(), bottom.ravel()])

    def m_full_t_apply(self, z):
        s, tm = self.system, self.time_mats
        z = np.asarray(z, dtype=float)
        n = self.size
        U, W = self._block(z[:n]), self._block(z[n:])
        top = kron_sum_apply([(s.K, tm.n13.T)], U) + kron_sum_apply([(s.K, tm.n2.T)], W)
        bottom = -kron_sum_apply([(s.K, tm.n2.T)], U) + kron_sum_apply(
            [(s.P, tm.n13.T), (s.L, tm.n2.T)], W
        )
        return np.concatenate([top.ravel(), bottom.ravel()])

    def m_hat_dense(self):
        s, tm = self.system, self.time_mats
        return (
            np.kron(to_dense(s.P), tm.n13)
            + np.kron(to_dense(s.L), tm.n2)
            + np.kron(to_dense(s.K), tm.n7)
        )

    def m_hat_sparse(self):
        s, tm = self.system, self.time_mats
        return sp.csc_matrix(
            sp.kron(s.P, tm.n13) + sp.kron(s.L, tm.n2) + sp.kron(s.K, tm.n7)
        )

    def m_full_dense(self):
        view = first_order_view(self.system)
        tm = self.time_mats
        return np.kron(view.ktilde_dense(), tm.n13) + np.kron(view.a_dense(), tm.n2)

    @functools.cached_property
    def _m_hat_factor(self):
        try:
            if self.system.is_sparse:
                lu = spla.splu(self.m_hat_sparse())
                return lu.solve
            lu = scipy.linalg.lu_factor(self.m_hat_dense(), check_finite=True)
        except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
            raise SolverError(f"factorization of the velocity system failed: {exc}") from exc
        if np.any(np.diag(lu[0]) == 0.0):
            raise SolverError("the velocity system matrix is singular")
        return functools.partial(scipy.linalg.lu_solve, lu)

    def m_hat_solve(self, b):
        """Direct solve with the cached factorization of ``Mhat``."""
        return self._m_hat_factor(np.asarray(b, dtype=float))


def assemble_slab_operators(system, time_mats):
    """Bundle ``system`` and ``time_mats`` into :class:`SlabOperators`."""
    if time_mats.n1.shape[0] != time_mats.degree + 1:
        raise AssemblyError("time matrices do not match their declared degree")
    if system.P.shape[0] != system.dim:
        raise AssemblyError("system matrices do not match the initial data size")
    return SlabOperators(system, time_mats)


@dataclass(frozen=True)
class SlabRhs:
    """Right-hand side blocks of one slab, each a flat ``d (r + 1)`` vector."""

    g_u: np.ndarray
    g_w: np.ndarray
    g_u_bar: np.ndarray
    g_hat: np.ndarray


def forcing_moments(system, basis, slab, quad):
    """``int_slab f_i psi^l dt`` as a ``(d, r + 1)`` block."""
    if system.forcing.is_zero:
        return np.zeros((system.dim, basis.size))
    a, b = slab
    times, weights = quad.on_interval(a, b)
    F = system.forcing.sample(times, system.dim)
    psi = basis.values(quad.nodes)
    return F.T @ (psi * weights[:, None])


def assemble_slab_rhs(system, time_mats, basis, z_minus, slab, quad):
    """Assemble :class:`SlabRhs` from the incoming trace ``z(t_{n-1}^-)``.

    Parameters
    ----------
    z_minus : array, shape (2 d,)
        ``[u, w]`` at the left end of the slab, taken from the previous slab
        (or the initial data for the first one).
    slab : (float, float)
        Physical endpoints of the slab.
    quad : QuadratureRule
        Rule for the forcing integrals; needs at least ``r + 1`` nodes.
    """
    r = basis.degree
    if quad.size < r + 1:
        raise ConfigurationError(
            f"forcing quadrature with {quad.size} nodes is too coarse for degree {r}"
        )
    if time_mats.degree != r:
        raise AssemblyError("basis and time matrices have different degrees")
    d = system.dim
    z_minus = np.asarray(z_minus, dtype=float)
    if z_minus.size != 2 * d:
        raise AssemblyError(f"incoming trace has length {z_minus.size}, expected {2 * d}")
    u_minus, w_minus = z_minus[:d], z_minus[d:]
    left = basis.values([0.0])[0]
    g_u_bar = np.outer(u_minus, left)
    g_u = np.outer(system.K @ u_minus, left)
    g_w = forcing_moments(system, basis, slab, quad) + np.outer(system.P @ w_minus, left)
    g_hat = g_w - g_u @ time_mats.n6.T
    return SlabRhs(g_u.ravel(), g_w.ravel(), g_u_bar.ravel(), g_hat.ravel())


def displacement_update(time_mats, W, g_u_bar):
    """``U = (I (x) N5) W + (I (x) N4) Gbar^u``; flat vectors in and out."""
    q = time_mats.degree + 1
    W = np.asarray(W).reshape(-1, q)
    Gb = np.asarray(g_u_bar).reshape(-1, q)
    return (W @ time_mats.n5.T + Gb @ time_mats.n4.T).ravel()


def displacement_update_kinv(system, time_mats, W, g_u):
    """``U = (I (x) N5) W + (K^-1 (x) N4) G^u`` using the cached factor of ``K``."""
    q = time_mats.degree + 1
    W = np.asarray(W).reshape(-1, q)
    Gu = np.asarray(g_u).reshape(-1, q)
    KinvGu = system.k_factor.solve(Gu @ time_mats.n4.T)
    return (W @ time_mats.n5.T + KinvGu).ravel()


def solve_monolithic(ops, rhs):
    """Dense solve of ``M [U, W] = [G^u, G^w]``; returns ``(U, W)``.

    Reference path for small systems only.
    """
    M = ops.m_full_dense()
    Z = scipy.linalg.solve(M, np.concatenate([rhs.g_u, rhs.g_w]))
    n = ops.size
    return Z[:n], Z[n:]
