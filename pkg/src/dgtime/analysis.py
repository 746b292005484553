"""Energy norm, bilinear form, convergence and stability studies, conditioning.

The mesh-dependent energy norm of a piecewise-smooth ``z = [u, w]`` is

    |||z|||^2 = sum_n int_{I_n} w^T L w
                + 1/2 q(z(t_0^+)) + 1/2 sum_{n=1}^{N-1} q([z]_n) + 1/2 q(z(T^-)),

with ``q(z) = u^T K u + w^T P w``.  Square roots of matrices are never formed.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import gauss_rule
from .errors import ConfigurationError, ValidationError
from .solver import SolverOptions, march
from .system import ktilde_quadratic, to_dense

#: Extra Gauss points, beyond the degree, used when integrating errors.
ERROR_EXTRA_NODES = 10

#: Levels whose error is below ``FLOOR_FACTOR * tol * |||z_DG|||`` are "floor".
FLOOR_FACTOR = 100.0

DENSE_SVD_LIMIT = 2000


# ----------------------------------------------------------------------------
# Exact solutions and evaluable functions
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form ``u(t)`` and ``w(t) = u'(t)``.

    ``smoothness`` is the Sobolev index ``s`` used to predict the rate
    ``min(r, s) + 1/2``; ``math.inf`` for analytic solutions.
    """

    u: Callable
    w: Callable
    smoothness: float = math.inf

    def values(self, times):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        u = np.array([np.atleast_1d(self.u(t)) for t in times], dtype=float)
        w = np.array([np.atleast_1d(self.w(t)) for t in times], dtype=float)
        return u, w

    def check_derivative(self, t0, T, n=20, rtol=1e-6, seed=0):
        """Compare ``w`` with central differences of ``u`` at ``n`` random times.

        Returns the largest relative discrepancy and raises ValidationError
        when it exceeds ``rtol``.
        """
        rng = np.random.default_rng(seed)
        h = 1e-5 * max(1.0, T - t0)
        times = rng.uniform(t0 + h, T - h, size=n)
        worst = 0.0
        for t in times:
            fd = (np.atleast_1d(self.u(t + h)) - np.atleast_1d(self.u(t - h))) / (2 * h)
            w = np.atleast_1d(self.w(t))
            scale = max(np.linalg.norm(w), np.linalg.norm(self.u(t)), 1e-300)
            worst = max(worst, float(np.linalg.norm(fd - w) / scale))
        if worst > rtol:
            raise ValidationError(f"w is not the derivative of u (relative mismatch {worst:.3e})")
        return worst

    def residual(self, system, times, h=None):
        """Relative residual of ``P w' + L w + K u - f`` at ``times``."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.empty(times.size)
        for k, t in enumerate(times):
            hh = h or 1e-4 * max(1.0, abs(t))
            dw = (np.atleast_1d(self.w(t + hh)) - np.atleast_1d(self.w(t - hh))) / (2 * hh)
            u = np.atleast_1d(self.u(t))
            w = np.atleast_1d(self.w(t))
            f = system.forcing(t, system.dim)
            terms = [system.P @ dw, system.L @ w, system.K @ u, f]
            res = terms[0] + terms[1] + terms[2] - terms[3]
            scale = sum(np.linalg.norm(x) for x in terms) or 1.0
            out[k] = np.linalg.norm(res) / scale
        return out

    def on_mesh(self, mesh):
        return _ExactOnMesh(self, mesh)


class _ExactOnMesh:
    def __init__(self, exact, mesh):
        self.exact = exact
        self.mesh = mesh

    def slab_values(self, n, tau):
        a, b = self.mesh.slab(n)
        return self.exact.values(a + (b - a) * np.atleast_1d(tau))


class ErrorFunction:
    """``z_DG - z`` evaluated slab by slab with one-sided limits."""

    def __init__(self, trajectory, exact):
        self.trajectory = trajectory
        self.exact = exact.on_mesh(trajectory.mesh)
        self.mesh = trajectory.mesh

    def slab_values(self, n, tau):
        u, w = self.trajectory.slab_values(n, tau)
        ue, we = self.exact.slab_values(n, tau)
        return u - ue, w - we


# ----------------------------------------------------------------------------
# Energy norm
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyBreakdown:
    """Individual terms of ``|||z|||^2``."""

    l_term: float
    initial_term: float
    jump_term: float
    final_term: float

    @property
    def total(self):
        return self.l_term + self.initial_term + self.jump_term + self.final_term

    @property
    def norm(self):
        return math.sqrt(max(self.total, 0.0))

    def rows(self):
        return [
            ("l_term", self.l_term),
            ("initial_term", self.initial_term),
            ("jump_term", self.jump_term),
            ("final_term", self.final_term),
            ("total", self.total),
        ]

    def to_csv(self, path, header=None):
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            writer = csv.writer(fh)
            writer.writerow(["term", "value"])
            for name, value in self.rows():
                writer.writerow([name, repr(float(value))])
        return path


def _lw_quadratic(L, w):
    return np.einsum("ij,ij->i", w, (L @ w.T).T)


def _is_zero(A):
    if sp.issparse(A):
        return A.count_nonzero() == 0
    return not np.any(A)


def energy_norm(z, system, mesh=None, quad_points=None):
    """Return the :class:`EnergyBreakdown` of ``z``.

    Parameters
    ----------
    z : Trajectory or ErrorFunction
        Anything exposing ``mesh`` and ``slab_values(n, tau) -> (u, w)``.
    quad_points : int, optional
        Gauss points per slab for the damping term; defaults to
        ``r_max + 10`` and must be at least ``r_max + 1``.
    """
    mesh = mesh or z.mesh
    q = quad_points or mesh.max_degree + ERROR_EXTRA_NODES
    if q < mesh.max_degree + 1:
        raise ConfigurationError(f"{q} quadrature points are too few for degree {mesh.max_degree}")
    rule = gauss_rule(q)
    l_term = 0.0
    damped = not _is_zero(system.L)
    jump_term = 0.0
    prev_right = None
    for n in range(mesh.n_slabs):
        a, b = mesh.slab(n)
        if damped:
            _, w = z.slab_values(n, rule.nodes)
            l_term += (b - a) * float(rule.weights @ _lw_quadratic(system.L, w))
        u_lr, w_lr = z.slab_values(n, [0.0, 1.0])
        if n == 0:
            initial = 0.5 * float(ktilde_quadratic(system, u_lr[0], w_lr[0])[0])
        else:
            du = u_lr[0] - prev_right[0]
            dw = w_lr[0] - prev_right[1]
            jump_term += 0.5 * float(ktilde_quadratic(system, du, dw)[0])
        prev_right = (u_lr[1], w_lr[1])
    final = 0.5 * float(ktilde_quadratic(system, prev_right[0], prev_right[1])[0])
    return EnergyBreakdown(l_term, initial, jump_term, final)


def energy_error(trajectory, exact, system, quad_points=None):
    """``|||z_DG - z|||`` for an :class:`ExactSolution` ``z``."""
    return energy_norm(ErrorFunction(trajectory, exact), system, trajectory.mesh, quad_points).norm


# ----------------------------------------------------------------------------
# Bilinear form and linear functional
# ----------------------------------------------------------------------------


def apply_bilinear_form(z, v, system, mesh=None, quad_points=None):
    """Evaluate the DG bilinear form ``A(z, v)`` for discrete ``z`` and ``v``.

    ``sum_n [(Kt z', v) + (A z, v)]_{I_n} + sum_{n<N} Kt [z]_n . v(t_n^+)
    + Kt z(t_0^+) . v(t_0^+)``, integrated with ``r_max + 1`` Gauss points
    per slab unless ``quad_points`` is given.
    """
    mesh = mesh or z.mesh
    rule = gauss_rule(quad_points or mesh.max_degree + 1)
    K, P, L = system.K, system.P, system.L
    total = 0.0
    for n in range(mesh.n_slabs):
        a, b = mesh.slab(n)
        uz, wz = z.slab_values(n, rule.nodes)
        duz, dwz = z.slab_derivatives(n, rule.nodes)
        uv, wv = v.slab_values(n, rule.nodes)
        # rows: (K u' - K w) . v_u + (P w' + K u + L w) . v_w
        first = (K @ (duz - wz).T).T
        second = (P @ dwz.T).T + (K @ uz.T).T + (L @ wz.T).T
        integrand = np.einsum("ij,ij->i", first, uv) + np.einsum("ij,ij->i", second, wv)
        total += (b - a) * float(rule.weights @ integrand)
        uz0, wz0 = z.slab_values(n, [0.0])
        uv0, wv0 = v.slab_values(n, [0.0])
        if n == 0:
            ju, jw = uz0[0], wz0[0]
        else:
            ul, wl = z.slab_values(n - 1, [1.0])
            ju, jw = uz0[0] - ul[0], wz0[0] - wl[0]
        total += float((K @ ju) @ uv0[0] + (P @ jw) @ wv0[0])
    return total


def apply_linear_functional(v, system, mesh=None, quad_points=None):
    """``F(v) = sum_n (F, v)_{I_n} + Kt z_0 . v(t_0^+)`` with ``F = [0, f]``.

    The default rule has ``r_max + 5`` points, matching the slab assembly.
    """
    mesh = mesh or v.mesh
    rule = gauss_rule(quad_points or mesh.max_degree + 5)
    total = 0.0
    if not system.forcing.is_zero:
        for n in range(mesh.n_slabs):
            a, b = mesh.slab(n)
            times, weights = rule.on_interval(a, b)
            f = system.forcing.sample(times, system.dim)
            _, wv = v.slab_values(n, rule.nodes)
            total += float(weights @ np.einsum("ij,ij->i", f, wv))
    uv0, wv0 = v.slab_values(0, [0.0])
    total += float((system.K @ system.u0) @ uv0[0] + (system.P @ system.u1) @ wv0[0])
    return total


# ----------------------------------------------------------------------------
# Convergence studies
# ----------------------------------------------------------------------------


@dataclass
class ConvergenceRow:
    control: float
    error: float
    rate: float
    status: str
    solution_norm: float


@dataclass
class ConvergenceReport:
    """Error per refinement level together with observed and predicted rates.

    For ``dt-refinement`` rates are slopes of ``log(error)`` against
    ``log(dt)``; for ``r-refinement`` they are decrements of
    ``log10(error)`` per unit of degree.  ``fitted_rate`` is the least-squares
    slope over all ``ok`` rows and ``pair`` rates compare consecutive rows.
    """

    kind: str
    rows: list
    expected_rate: float
    fitted_rate: float
    degree: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def errors(self):
        return np.array([r.error for r in self.rows])

    @property
    def controls(self):
        return np.array([r.control for r in self.rows])

    @property
    def statuses(self):
        return [r.status for r in self.rows]

    def csv_rows(self):
        name = "dt" if self.kind == "dt-refinement" else "degree"
        head = ["level", name, "error", "rate", "status"]
        body = [
            [k, repr(float(r.control)), repr(float(r.error)),
             "nan" if not math.isfinite(r.rate) else repr(float(r.rate)), r.status]
            for k, r in enumerate(self.rows)
        ]
        return head, body


def _is_r_study(meshes):
    first = meshes[0]
    return all(
        np.array_equal(m.boundaries, first.boundaries) for m in meshes
    ) and len({tuple(m.degrees) for m in meshes}) == len(meshes)


def convergence_study(system, exact, mesh_family, options=None, *, quad_points=None,
                      consistency_tol=1e-6, spatial_floor=None, plateau_factor=3.0,
                      workers=None, seed=0):
    """March on every mesh of ``mesh_family`` and measure ``|||z - z_DG|||``.

    Parameters
    ----------
    mesh_family : sequence of TimeMesh
        At least three meshes: either a sequence of time steps (uniform
        degree) or one partition with increasing degrees.
    consistency_tol : float or None
        Relative tolerance of the residual check of ``exact`` at 10 random
        times; None skips it (e.g. when the exact solution carries a
        spatial consistency error).
    spatial_floor : float, optional
        Known error level independent of the time discretization; rows with
        error below ``plateau_factor * spatial_floor`` are marked
        ``plateau`` and excluded from fits.
    workers : int, optional
        Number of threads used to run levels concurrently.

    Rows whose error is below ``100 * gmres_rel_tol * |||z_DG|||`` are marked
    ``floor`` and excluded from rate fits.
    """
    options = options or SolverOptions()
    meshes = list(mesh_family)
    if len(meshes) < 3:
        raise ConfigurationError("a convergence study needs at least 3 refinement levels")
    kind = "r-refinement" if _is_r_study(meshes) else "dt-refinement"
    t0, T = meshes[0].t0, meshes[0].T
    if consistency_tol is not None:
        rng = np.random.default_rng(seed)
        res = exact.residual(system, rng.uniform(t0 + 1e-3 * (T - t0), T - 1e-3 * (T - t0), 10))
        if res.max() > consistency_tol:
            raise ValidationError(
                f"exact solution does not satisfy the system (relative residual {res.max():.3e})"
            )

    def run(mesh):
        traj = march(system, mesh, options)
        err = energy_error(traj, exact, system, quad_points)
        norm = energy_norm(traj, system, mesh, quad_points).norm
        return err, norm

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, meshes))
    else:
        results = [run(m) for m in meshes]

    if kind == "dt-refinement":
        controls = [float(m.slab_lengths.max()) for m in meshes]
    else:
        controls = [float(m.max_degree) for m in meshes]
    rows = []
    for k, ((err, norm), c) in enumerate(zip(results, controls)):
        status = "ok"
        if err < FLOOR_FACTOR * options.gmres_rel_tol * max(norm, 1e-300):
            status = "floor"
        elif spatial_floor is not None and err < plateau_factor * spatial_floor:
            status = "plateau"
        rate = math.nan
        if k > 0:
            e0, c0 = rows[-1].error, rows[-1].control
            if err > 0 and e0 > 0:
                if kind == "dt-refinement":
                    rate = math.log(e0 / err) / math.log(c0 / c)
                else:
                    rate = math.log10(e0 / err) / (c - c0)
        rows.append(ConvergenceRow(c, err, rate, status, norm))

    ok = [r for r in rows if r.status == "ok" and r.error > 0]
    fitted = math.nan
    if len(ok) >= 2:
        x = np.array([r.control for r in ok])
        y = np.array([r.error for r in ok])
        if kind == "dt-refinement":
            fitted = float(np.polyfit(np.log(x), np.log(y), 1)[0])
        else:
            fitted = float(-np.polyfit(x, np.log10(y), 1)[0])
    if kind == "dt-refinement":
        degree = meshes[0].max_degree
        expected = min(degree, exact.smoothness) + 0.5
    else:
        degree = None
        expected = math.nan
    return ConvergenceReport(kind, rows, float(expected), fitted, degree)


def write_convergence_csv(reports, path, header=None):
    """Write one or several reports (stacked, with a ``degree`` column)."""
    if isinstance(reports, ConvergenceReport):
        reports = [reports]
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        for rep in reports:
            fh.write(
                f"# kind={rep.kind} degree={rep.degree} expected_rate={rep.expected_rate!r} "
                f"fitted_rate={rep.fitted_rate!r}\n"
            )
        writer = csv.writer(fh)
        head = None
        for rep in reports:
            h, body = rep.csv_rows()
            if head is None:
                head = ["degree_group"] + h + ["expected_rate", "fitted_rate"]
                writer.writerow(head)
            for row in body:
                writer.writerow([rep.degree if rep.degree is not None else "all"] + row
                                + [repr(rep.expected_rate), repr(rep.fitted_rate)])
    return path


# ----------------------------------------------------------------------------
# Stability
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class StabilityReport:
    """``|||z_DG|||`` against the data functional of the a-priori bound.

    ``forcing_weighted`` is False when ``L`` is singular and ``f`` nonzero;
    the forcing term is then the unweighted ``sum_n ||f||^2`` and ``caveat``
    says so.
    """

    solution_norm: float
    data_term: float
    forcing_term: float
    forcing_weighted: bool
    caveat: str | None = None

    @property
    def ratio(self):
        return self.solution_norm / self.data_term if self.data_term > 0 else math.nan


def stability_monitor(trajectory, system, mesh=None, quad_points=None):
    """Compare ``|||z_DG|||`` with ``(sum ||L^-1/2 f||^2 + q(u0, u1))^1/2``."""
    mesh = mesh or trajectory.mesh
    norm = energy_norm(trajectory, system, mesh, quad_points).norm
    init = float(system.u0 @ (system.K @ system.u0) + system.u1 @ (system.P @ system.u1))
    f_term = 0.0
    weighted = True
    caveat = None
    if not system.forcing.is_zero:
        rule = gauss_rule(quad_points or mesh.max_degree + ERROR_EXTRA_NODES)
        lf = system.l_factor
        if lf is None:
            weighted = False
            caveat = "L is singular: forcing term reported as the unweighted L2 norm of f"
        for n in range(mesh.n_slabs):
            a, b = mesh.slab(n)
            times, weights = rule.on_interval(a, b)
            f = system.forcing.sample(times, system.dim)
            if weighted:
                g = lf.solve(f.T).T.reshape(f.shape)
                vals = np.einsum("ij,ij->i", f, g)
            else:
                vals = np.einsum("ij,ij->i", f, f)
            f_term += float(weights @ vals)
    return StabilityReport(norm, math.sqrt(init + f_term), f_term, weighted, caveat)


# ----------------------------------------------------------------------------
# Conditioning
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionEstimate:
    """2-norm condition number; ``low_confidence`` marks an unsettled estimate."""

    value: float
    sigma_max: float
    sigma_min: float
    mode: str
    low_confidence: bool = False

    def __float__(self):
        return float(self.value)


def _dense_from_action(apply, size):
    if size > DENSE_SVD_LIMIT:
        raise ConfigurationError(
            f"dense-exact condition numbers are limited to size {DENSE_SVD_LIMIT}; "
            "use the iterative mode"
        )
    cols = [apply(e) for e in np.eye(size)]
    return np.column_stack(cols)


def condition_estimate(op, size=None, mode="dense-exact", *, transpose=None, solve=None,
                       solve_t=None, iterations=20, seed=0):
    """Estimate ``sigma_max / sigma_min`` of a square operator.

    Parameters
    ----------
    op : ndarray, sparse matrix or callable
        The operator or its action ``x -> A x``.
    size : int
        Required when ``op`` is a callable.
    mode : {"dense-exact", "iterative"}
        ``dense-exact`` takes a full SVD (size up to 2000).  ``iterative``
        runs ``iterations`` steps of power iteration on ``A^T A`` for
        ``sigma_max`` and of inverse iteration for ``sigma_min``; the result is
        an estimate.
    transpose, solve, solve_t : callable, optional
        ``A^T x``, ``A^-1 x`` and ``A^-T x`` for the iterative mode when
        ``op`` is a callable.  Missing solves fall back to GMRES.
    """
    if callable(op) and not hasattr(op, "shape"):
        if size is None:
            raise ConfigurationError("size is required for a matrix-free operator")
        apply = op
    else:
        size = op.shape[0]
        if op.shape[0] != op.shape[1]:
            raise ConfigurationError("condition numbers need a square operator")
        apply = lambda x, A=op: A @ x  # noqa: E731
    if mode == "dense-exact":
        if hasattr(op, "shape"):
            if size > DENSE_SVD_LIMIT:
                raise ConfigurationError(
                    f"dense-exact condition numbers are limited to size {DENSE_SVD_LIMIT}; "
                    "use the iterative mode"
                )
            A = to_dense(op)
        else:
            A = _dense_from_action(apply, size)
        s = scipy.linalg.svd(A, compute_uv=False)
        smin = float(s[-1])
        value = float(s[0] / smin) if smin > 0 else math.inf
        return ConditionEstimate(value, float(s[0]), smin, mode)
    if mode != "iterative":
        raise ConfigurationError(f"unknown condition estimate mode {mode!r}")

    if hasattr(op, "shape"):
        At = op.T
        transpose = lambda x: At @ x  # noqa: E731
        if solve is None:
            if sp.issparse(op):
                lu = spla.splu(sp.csc_matrix(op))
                solve = lu.solve
                solve_t = lambda x: lu.solve(x, trans="T")  # noqa: E731
            else:
                lu = scipy.linalg.lu_factor(op)
                solve = lambda x: scipy.linalg.lu_solve(lu, x)  # noqa: E731
                solve_t = lambda x: scipy.linalg.lu_solve(lu, x, trans=1)  # noqa: E731
    if transpose is None:
        raise ConfigurationError("the iterative mode needs the transpose action")
    if solve is None or solve_t is None:
        A_op = spla.LinearOperator((size, size), matvec=apply, rmatvec=transpose)
        At_op = spla.LinearOperator((size, size), matvec=transpose, rmatvec=apply)

        def _gmres(M, b):
            x, _ = spla.gmres(M, b, rtol=1e-10, atol=0.0, restart=min(size, 500), maxiter=20)
            return x

        solve = solve or (lambda b: _gmres(A_op, b))
        solve_t = solve_t or (lambda b: _gmres(At_op, b))

    rng = np.random.default_rng(seed)

    def power(step):
        x = rng.standard_normal(size)
        x /= np.linalg.norm(x)
        est, prev = 0.0, 0.0
        for _ in range(iterations):
            y = step(x)
            prev, est = est, float(np.linalg.norm(y))
            if est == 0.0:
                return 0.0, 0.0
            x = y / est
        return est, prev

    lam_max, lam_max_prev = power(lambda x: transpose(apply(x)))
    lam_inv, lam_inv_prev = power(lambda x: solve(solve_t(x)))
    smax = math.sqrt(lam_max)
    smin = 1.0 / math.sqrt(lam_inv) if lam_inv > 0 else 0.0
    low = any(
        cur == 0.0 or abs(cur - prev) > 1e-3 * cur
        for cur, prev in ((lam_max, lam_max_prev), (lam_inv, lam_inv_prev))
    )
    value = smax / smin if smin > 0 else math.inf
    return ConditionEstimate(value, smax, smin, mode, low)
