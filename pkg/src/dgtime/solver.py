"""Slab solves, time marching and discontinuous trajectories."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .basis import LEGENDRE, build_basis, gauss_rule, normalize_kind, time_matrices, _length_key
from .errors import ConfigurationError, SolverError
from .slab import assemble_slab_operators, assemble_slab_rhs, displacement_update

_METHODS = {"direct": "direct", "direct-dense": "direct", "gmres": "gmres"}


@dataclass(frozen=True)
class SolverOptions:
    """How each slab's velocity system is solved.

    ``gmres_restart=None`` runs unrestarted GMRES with a Krylov space of up to
    ``gmres_max_iter`` vectors.  ``extrapolate_guess`` seeds GMRES on slab
    ``n > 1`` with the previous terminal velocity held constant in time;
    switch it off for reproducible iteration counts.  ``forcing_extra_nodes``
    is added to ``r + 1`` to size the forcing quadrature.
    """

    method: str = "direct"
    gmres_rel_tol: float = 1e-12
    gmres_max_iter: int = 2000
    gmres_restart: int | None = None
    extrapolate_guess: bool = True
    basis: str = LEGENDRE
    forcing_extra_nodes: int = 4

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ConfigurationError(f"unknown solver method {self.method!r}")
        object.__setattr__(self, "method", _METHODS[self.method])
        object.__setattr__(self, "basis", normalize_kind(self.basis))
        if not self.gmres_rel_tol > 0:
            raise ConfigurationError("gmres_rel_tol must be positive")
        if int(self.gmres_max_iter) < 1:
            raise ConfigurationError("gmres_max_iter must be at least 1")
        if self.gmres_restart is not None and int(self.gmres_restart) < 1:
            raise ConfigurationError("gmres_restart must be at least 1")
        if int(self.forcing_extra_nodes) < 0:
            raise ConfigurationError("forcing_extra_nodes must be non-negative")


@dataclass
class SlabDiagnostics:
    method: str
    iterations: int = 0
    residual: float = 0.0
    residual_history: list = field(default_factory=list)
    wall_time: float = 0.0


@dataclass(frozen=True, eq=False)
class SlabSolution:
    """Coefficients of ``u`` and ``w`` on one slab, shape ``(d, r + 1)`` each."""

    degree: int
    coeffs_u: np.ndarray
    coeffs_w: np.ndarray
    interval: tuple
    kind: str = LEGENDRE
    diagnostics: SlabDiagnostics | None = None

    @property
    def basis(self):
        return build_basis(self.degree, self.kind)

    @property
    def length(self):
        return self.interval[1] - self.interval[0]

    def values(self, tau):
        """``(u, w)`` at reference points ``tau``, each ``(len(tau), d)``."""
        psi = self.basis.values(np.atleast_1d(tau))
        return psi @ self.coeffs_u.T, psi @ self.coeffs_w.T

    def time_derivatives(self, tau):
        """``(du/dt, dw/dt)`` at reference points ``tau``."""
        dpsi = self.basis.derivatives(np.atleast_1d(tau)) / self.length
        return dpsi @ self.coeffs_u.T, dpsi @ self.coeffs_w.T

    def left_trace(self):
        u, w = self.values([0.0])
        return np.concatenate([u[0], w[0]])

    def right_trace(self):
        u, w = self.values([1.0])
        return np.concatenate([u[0], w[0]])


def _true_residual(apply, x, b):
    bn = np.linalg.norm(b)
    if bn == 0.0:
        return float(np.linalg.norm(apply(x)))
    return float(np.linalg.norm(b - apply(x)) / bn)


def solve_slab(ops, rhs, options=None, x0=None, interval=None, kind=None):
    """Solve ``Mhat W = Ghat`` and recover ``U`` with the ``K``-free update.

    Parameters
    ----------
    ops, rhs : SlabOperators, SlabRhs
        Operators and right-hand side of the same slab.
    options : SolverOptions
    x0 : array, optional
        GMRES initial guess (flat ``d (r + 1)`` vector); zero by default.
    interval : (float, float), optional
        Physical slab endpoints stored on the solution; ``(0, dt)`` if omitted.
    kind : str, optional
        Basis kind of the time matrices; taken from them when omitted.

    Raises
    ------
    SolverError
        On GMRES stagnation within ``gmres_max_iter`` (carrying the final
        relative residual) or a singular direct factorization.
    """
    options = options or SolverOptions()
    tm = ops.time_mats
    b = rhs.g_hat
    diag = SlabDiagnostics(options.method)
    start = time.perf_counter()
    if options.method == "direct":
        W = ops.m_hat_solve(b)
        diag.residual = _true_residual(ops.m_hat_apply, W, b)
    else:
        n = ops.size
        A = LinearOperator((n, n), matvec=ops.m_hat_apply, dtype=float)
        history = diag.residual_history
        restart = int(options.gmres_restart or options.gmres_max_iter)
        cycles = max(1, math.ceil(options.gmres_max_iter / restart))
        W, info = gmres(
            A,
            b,
            x0=None if x0 is None else np.asarray(x0, dtype=float),
            rtol=options.gmres_rel_tol,
            atol=0.0,
            restart=restart,
            maxiter=cycles,
            callback=history.append,
            callback_type="pr_norm",
        )
        diag.iterations = len(history)
        diag.residual = _true_residual(ops.m_hat_apply, W, b)
        if info != 0:
            raise SolverError(
                f"GMRES did not converge in {diag.iterations} iterations "
                f"(relative residual {diag.residual:.3e})",
                residual=diag.residual,
            )
    diag.wall_time = time.perf_counter() - start
    U = displacement_update(tm, W, rhs.g_u_bar)
    q = tm.degree + 1
    if interval is None:
        interval = (0.0, tm.slab_length)
    return SlabSolution(
        degree=tm.degree,
        coeffs_u=U.reshape(-1, q),
        coeffs_w=W.reshape(-1, q),
        interval=tuple(float(t) for t in interval),
        kind=kind or tm.kind,
        diagnostics=diag,
    )


class Trajectory:
    """Piecewise-polynomial ``z = [u, w]`` on a :class:`~dgtime.basis.TimeMesh`.

    Evaluation inside slab ``n`` uses that slab's coefficients only.  At an
    interior node the ``left`` side reads the slab ending there and the
    ``right`` side the slab starting there.  ``z0`` is returned for ``t_0``
    from the left, matching ``z(0^-) = z_0``.
    """

    def __init__(self, mesh, slabs, z0=None):
        if len(slabs) != mesh.n_slabs:
            raise ValueError(f"{len(slabs)} slab solutions for {mesh.n_slabs} slabs")
        self.mesh = mesh
        self.slabs = tuple(slabs)
        d = self.slabs[0].coeffs_u.shape[0]
        self.z0 = np.zeros(2 * d) if z0 is None else np.asarray(z0, dtype=float)

    @classmethod
    def from_coefficients(cls, mesh, coeffs_u, coeffs_w, kind=LEGENDRE, z0=None):
        """Build a discrete function from per-slab ``(d, r_n + 1)`` blocks."""
        kind = normalize_kind(kind)
        slabs = [
            SlabSolution(int(mesh.degrees[n]), np.asarray(cu, dtype=float),
                         np.asarray(cw, dtype=float), mesh.slab(n), kind)
            for n, (cu, cw) in enumerate(zip(coeffs_u, coeffs_w))
        ]
        return cls(mesh, slabs, z0)

    @property
    def dim(self):
        return self.slabs[0].coeffs_u.shape[0]

    @property
    def diagnostics(self):
        return [s.diagnostics for s in self.slabs]

    def slab_values(self, n, tau):
        return self.slabs[n].values(tau)

    def slab_derivatives(self, n, tau):
        return self.slabs[n].time_derivatives(tau)

    def evaluate(self, t, side="right"):
        """``(u, w)`` at ``t`` from ``side``; raises ValueError outside the mesh."""
        mesh = self.mesh
        if side not in ("left", "right"):
            raise ConfigurationError(f"side must be 'left' or 'right', got {side!r}")
        if not (mesh.t0 <= t <= mesh.T):
            raise ValueError(f"t={t} outside [{mesh.t0}, {mesh.T}]")
        if t == mesh.t0 and side == "left":
            d = self.dim
            return self.z0[:d].copy(), self.z0[d:].copy()
        n = mesh.locate(t, side)
        a, b = mesh.slab(n)
        tau = min(max((t - a) / (b - a), 0.0), 1.0)
        u, w = self.slabs[n].values([tau])
        return u[0], w[0]

    def jump(self, node):
        """``z(t_node^+) - z(t_node^-)`` at the interior node ``1 <= node <= N - 1``."""
        if not 1 <= node <= self.mesh.n_slabs - 1:
            raise ValueError(f"node {node} is not an interior node")
        return self.slabs[node].left_trace() - self.slabs[node - 1].right_trace()

    def jumps(self):
        """Array ``(N - 1, 2 d)`` of all interior jumps."""
        if self.mesh.n_slabs == 1:
            return np.zeros((0, 2 * self.dim))
        return np.array([self.jump(n) for n in range(1, self.mesh.n_slabs)])

    # linear-space operations on discrete functions of one mesh and basis
    def _combine(self, other, a, b):
        if other.mesh is not self.mesh and not (
            np.array_equal(other.mesh.boundaries, self.mesh.boundaries)
            and np.array_equal(other.mesh.degrees, self.mesh.degrees)
        ):
            raise ValueError("discrete functions live on different meshes")
        slabs = []
        for s, o in zip(self.slabs, other.slabs):
            if s.kind != o.kind:
                raise ValueError("discrete functions use different bases")
            slabs.append(SlabSolution(s.degree, a * s.coeffs_u + b * o.coeffs_u,
                                      a * s.coeffs_w + b * o.coeffs_w, s.interval, s.kind))
        return Trajectory(self.mesh, slabs, a * self.z0 + b * other.z0)

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, alpha):
        alpha = float(alpha)
        slabs = [SlabSolution(s.degree, alpha * s.coeffs_u, alpha * s.coeffs_w, s.interval, s.kind)
                 for s in self.slabs]
        return Trajectory(self.mesh, slabs, alpha * self.z0)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


def evaluate(trajectory, t, side="right"):
    """Module-level alias of :meth:`Trajectory.evaluate`."""
    return trajectory.evaluate(t, side)


def march(system, mesh, options=None):
    """Solve all slabs in order and return the :class:`Trajectory`.

    Slab ``n`` starts from the right trace of slab ``n - 1`` and slab 1 from
    the initial data.  Slab operators (and their factorizations for the
    direct method) are reused across slabs with equal degree and length.

    Raises
    ------
    SolverError
        Annotated with the one-based slab index in ``.slab``.
    """
    options = options or SolverOptions()
    system.forcing.check_covers(mesh.t0, mesh.T)
    kind = options.basis
    d = system.dim
    z = system.z0.copy()
    ops_cache = {}
    slabs = []
    for n in range(mesh.n_slabs):
        r = int(mesh.degrees[n])
        a, b = mesh.slab(n)
        key = (r, _length_key(b - a))
        basis = build_basis(r, kind)
        tm = time_matrices(r, kind, b - a)
        ops = ops_cache.get(key)
        if ops is None:
            ops = ops_cache[key] = assemble_slab_operators(system, tm)
        quad = gauss_rule(r + 1 + options.forcing_extra_nodes)
        rhs = assemble_slab_rhs(system, tm, basis, z, (a, b), quad)
        x0 = None
        if options.method == "gmres" and options.extrapolate_guess and n > 0:
            x0 = np.outer(z[d:], basis.constant_coeffs).ravel()
        try:
            sol = solve_slab(ops, rhs, options, x0=x0, interval=(a, b), kind=kind)
        except SolverError as exc:
            raise SolverError(f"slab {n + 1}: {exc}", residual=exc.residual, slab=n + 1) from exc
        slabs.append(sol)
        z = sol.right_trace()
    return Trajectory(mesh, slabs, system.z0)


def sample_points(mesh, times=None, per_slab=None):
    """``[(t, side), ...]`` for CSV export.

    Interior mesh nodes yield both one-sided rows.  Without explicit
    ``times``, ``per_slab`` equispaced points per slab are used (default 1,
    i.e. the mesh nodes only).
    """
    nodes = mesh.boundaries
    if times is None:
        k = 1 if per_slab is None else int(per_slab)
        pts = [nodes[0]]
        for n in range(mesh.n_slabs):
            a, b = mesh.slab(n)
            pts.extend(a + (b - a) * np.arange(1, k + 1) / k)
        times = pts
    out = []
    node_set = {float(t): i for i, t in enumerate(nodes)}
    for t in times:
        t = float(t)
        i = node_set.get(t)
        if i is None:
            out.append((t, "right"))
        elif i == 0:
            out.append((t, "right"))
        elif i == mesh.n_slabs:
            out.append((t, "left"))
        else:
            out.append((t, "left"))
            out.append((t, "right"))
    return out


def write_trajectory_csv(trajectory, path, points=None, header=None):
    """Write ``t, side, u_1..u_d, w_1..w_d`` rows; ``header`` becomes a ``#`` line."""
    points = points if points is not None else sample_points(trajectory.mesh)
    d = trajectory.dim
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "side"] + [f"u_{i + 1}" for i in range(d)]
                        + [f"w_{i + 1}" for i in range(d)])
        for t, side in points:
            u, w = trajectory.evaluate(t, side)
            writer.writerow([repr(float(t)), side] + [repr(float(x)) for x in u]
                            + [repr(float(x)) for x in w])
    return path


def write_diagnostics_csv(trajectory, path, header=None):
    """Per-slab ``slab, t_start, t_end, method, iterations, residual, wall_time``."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        writer.writerow(["slab", "t_start", "t_end", "method", "iterations", "residual", "wall_time"])
        for n, s in enumerate(trajectory.slabs, start=1):
            dg = s.diagnostics or SlabDiagnostics("none")
            writer.writerow([n, repr(s.interval[0]), repr(s.interval[1]), dg.method,
                             dg.iterations, f"{dg.residual:.6e}", f"{dg.wall_time:.6e}"])
    return path
