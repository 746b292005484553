"""Reference-interval polynomial bases, Gauss rules and local time matrices.

Every slab ``(t_{n-1}, t_n]`` is mapped affinely onto the reference interval
``[0, 1]`` through ``t = t_{n-1} + tau * dt``.  Coefficient vectors of a
polynomial of degree ``r`` always have length ``r + 1`` and are ordered like
the basis functions of the :class:`ReferenceBasis` that produced them.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import roots_jacobi

from .errors import AssemblyError, ConfigurationError

LEGENDRE = "shifted-legendre"
LOBATTO = "lagrange-gauss-lobatto"
BASIS_KINDS = (LEGENDRE, LOBATTO)

_KIND_ALIASES = {
    "legendre": LEGENDRE,
    "shifted-legendre": LEGENDRE,
    "lobatto": LOBATTO,
    "lgl": LOBATTO,
    "lagrange-gauss-lobatto": LOBATTO,
}

#: Highest temporal degree accepted anywhere in the package.
MAX_DEGREE = 20

#: Condition number of ``N1 + N3`` above which assembly is refused.
MAX_CONDITION = 1e14


def normalize_kind(kind):
    """Map user spellings (``"legendre"``, ``"lgl"``, ...) to a canonical kind."""
    try:
        return _KIND_ALIASES[str(kind).lower()]
    except KeyError:
        raise ConfigurationError(
            f"unsupported basis kind {kind!r}; expected one of {BASIS_KINDS}"
        ) from None


# ----------------------------------------------------------------------------
# Time mesh
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeMesh:
    """Partition ``t_0 < t_1 < ... < t_N`` with one polynomial degree per slab."""

    boundaries: np.ndarray
    degrees: np.ndarray

    def __post_init__(self):
        b = np.array(self.boundaries, dtype=float).ravel()
        if b.size < 2:
            raise ConfigurationError("a time mesh needs at least one slab")
        if not np.all(np.isfinite(b)):
            raise ConfigurationError("time mesh boundaries must be finite")
        if np.any(np.diff(b) <= 0.0):
            raise ConfigurationError("time mesh boundaries must be strictly increasing")
        r = np.array(self.degrees).ravel()
        if r.size == 1 and b.size > 2:
            r = np.full(b.size - 1, r[0])
        if r.size != b.size - 1:
            raise ConfigurationError(
                f"got {r.size} degrees for {b.size - 1} slabs"
            )
        if not np.all(r == np.round(r)):
            raise ConfigurationError("polynomial degrees must be integers")
        r = r.astype(int)
        if np.any(r < 0):
            raise ConfigurationError("polynomial degrees must be non-negative")
        if np.any(r > MAX_DEGREE):
            raise ConfigurationError(f"polynomial degrees above {MAX_DEGREE} are not supported")
        b.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "degrees", r)

    @classmethod
    def uniform(cls, T, degree, n_slabs=None, dt=None, t0=0.0):
        """Uniform mesh on ``[t0, T]`` given either ``n_slabs`` or ``dt``.

        When ``dt`` is given, ``(T - t0) / dt`` must be an integer up to
        rounding at 1e-9 relative.
        """
        if (n_slabs is None) == (dt is None):
            raise ConfigurationError("pass exactly one of n_slabs or dt")
        if dt is not None:
            if dt <= 0:
                raise ConfigurationError("dt must be positive")
            ratio = (T - t0) / dt
            n_slabs = int(round(ratio))
            if n_slabs < 1 or abs(ratio - n_slabs) > 1e-9 * max(1.0, ratio):
                raise ConfigurationError(
                    f"dt={dt} does not divide the interval [{t0}, {T}] evenly"
                )
        n_slabs = int(n_slabs)
        if n_slabs < 1:
            raise ConfigurationError("a time mesh needs at least one slab (N >= 1)")
        return cls(np.linspace(t0, T, n_slabs + 1), np.full(n_slabs, int(degree)))

    @property
    def n_slabs(self):
        return self.boundaries.size - 1

    @property
    def t0(self):
        return float(self.boundaries[0])

    @property
    def T(self):
        return float(self.boundaries[-1])

    @property
    def slab_lengths(self):
        return np.diff(self.boundaries)

    @property
    def max_degree(self):
        return int(self.degrees.max())

    def slab(self, n):
        """Endpoints ``(t_{n-1}, t_n)`` of the zero-based slab ``n``."""
        return float(self.boundaries[n]), float(self.boundaries[n + 1])

    def locate(self, t, side="right"):
        """Zero-based slab index used to evaluate at ``t`` from ``side``.

        At an interior node ``t_n`` the left limit belongs to slab ``n`` and
        the right limit to slab ``n + 1`` (one-based).  At ``t_0`` both sides
        map to the first slab and at ``t_N`` both map to the last one.
        """
        if side not in ("left", "right"):
            raise ConfigurationError(f"side must be 'left' or 'right', got {side!r}")
        b = self.boundaries
        if t < b[0] or t > b[-1]:
            raise ValueError(f"t={t} outside the mesh interval [{b[0]}, {b[-1]}]")
        if side == "right":
            n = int(np.searchsorted(b, t, side="right")) - 1
        else:
            n = int(np.searchsorted(b, t, side="left")) - 1
        return min(max(n, 0), self.n_slabs - 1)

    def with_degree(self, degree):
        return TimeMesh(self.boundaries, np.full(self.n_slabs, int(degree)))


# ----------------------------------------------------------------------------
# Bases
# ----------------------------------------------------------------------------


def legendre_table(degree, x):
    """Values and derivatives of Legendre ``P_0..P_degree`` at points ``x``.

    Uses the three-term recurrence together with
    ``P'_{k+1} = P'_{k-1} + (2k + 1) P_k``.  Returns two arrays of shape
    ``(len(x), degree + 1)``.
    """
    x = np.asarray(x, dtype=float).ravel()
    p = np.zeros((x.size, degree + 1))
    dp = np.zeros_like(p)
    p[:, 0] = 1.0
    if degree >= 1:
        p[:, 1] = x
        dp[:, 1] = 1.0
    for k in range(1, degree):
        p[:, k + 1] = ((2 * k + 1) * x * p[:, k] - k * p[:, k - 1]) / (k + 1)
        dp[:, k + 1] = dp[:, k - 1] + (2 * k + 1) * p[:, k]
    return p, dp


def lobatto_nodes(degree):
    """Gauss-Lobatto nodes on ``[0, 1]``; the midpoint alone for ``degree == 0``."""
    if degree == 0:
        return np.array([0.5])
    if degree == 1:
        return np.array([0.0, 1.0])
    # interior nodes are the roots of P'_r, i.e. Gauss-Jacobi(1, 1) points
    inner, _ = roots_jacobi(degree - 1, 1.0, 1.0)
    x = np.concatenate(([-1.0], np.sort(inner), [1.0]))
    return 0.5 * (x + 1.0)


@dataclass(frozen=True)
class ReferenceBasis:
    """Basis of polynomials of degree ``<= degree`` on ``[0, 1]``.

    Both kinds are stored as a linear map from shifted Legendre polynomials,
    so ``values(tau) = legendre(2 tau - 1) @ transform``.  ``transform`` is the
    identity for the Legendre kind and the inverse Vandermonde matrix at the
    Lobatto nodes for the nodal kind.
    """

    degree: int
    kind: str
    transform: np.ndarray = field(repr=False)
    nodes: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self):
        return self.degree + 1

    def values(self, tau):
        """Array ``(len(tau), r + 1)`` with ``psi^l(tau_k)`` in row ``k``."""
        p, _ = legendre_table(self.degree, 2.0 * np.asarray(tau, dtype=float) - 1.0)
        return p @ self.transform

    def derivatives(self, tau):
        """Array ``(len(tau), r + 1)`` with ``d psi^l / d tau`` in row ``k``."""
        _, dp = legendre_table(self.degree, 2.0 * np.asarray(tau, dtype=float) - 1.0)
        return 2.0 * dp @ self.transform

    @functools.cached_property
    def constant_coeffs(self):
        """Coefficients of the constant function 1 in this basis."""
        e0 = np.zeros(self.size)
        e0[0] = 1.0
        # the first Legendre polynomial is 1, so invert the transform column
        return np.linalg.solve(self.transform, e0)

    def interpolate(self, tau, samples):
        """Coefficients of the degree-``r`` polynomial through ``(tau, samples)``.

        ``samples`` may be ``(len(tau),)`` or ``(len(tau), m)``; with more
        points than coefficients a least-squares fit is returned.
        """
        V = self.values(tau)
        coeffs, *_ = np.linalg.lstsq(V, np.asarray(samples, dtype=float), rcond=None)
        return coeffs


@functools.lru_cache(maxsize=None)
def build_basis(degree, kind=LEGENDRE):
    """Return the :class:`ReferenceBasis` of the given degree and kind.

    Parameters
    ----------
    degree : int
        Polynomial degree ``r >= 0``; at most :data:`MAX_DEGREE`.
    kind : str
        ``"shifted-legendre"`` (default) or ``"lagrange-gauss-lobatto"``.

    Raises
    ------
    ConfigurationError
        For a negative or too large degree or an unknown kind.
    """
    kind = normalize_kind(kind)
    if int(degree) != degree or degree < 0:
        raise ConfigurationError(f"degree must be a non-negative integer, got {degree!r}")
    degree = int(degree)
    if degree > MAX_DEGREE:
        raise ConfigurationError(f"degree {degree} exceeds the supported maximum {MAX_DEGREE}")
    if kind == LEGENDRE:
        transform = np.eye(degree + 1)
        nodes = None
    else:
        nodes = lobatto_nodes(degree)
        V, _ = legendre_table(degree, 2.0 * nodes - 1.0)
        transform = np.linalg.inv(V)
        nodes.setflags(write=False)
    transform.setflags(write=False)
    return ReferenceBasis(degree, kind, transform, nodes)


# ----------------------------------------------------------------------------
# Quadrature
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre nodes and weights on ``[0, 1]``."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self):
        return self.nodes.size

    def integrate(self, f):
        """Integral over ``[0, 1]`` of a vectorized callable."""
        return np.tensordot(self.weights, np.asarray(f(self.nodes)), axes=(0, 0))

    def on_interval(self, a, b):
        """Physical nodes and weights for ``[a, b]``."""
        h = b - a
        return a + h * self.nodes, h * self.weights


@functools.lru_cache(maxsize=None)
def gauss_rule(q):
    """``q``-point Gauss-Legendre rule on ``[0, 1]``, exact up to degree ``2q - 1``."""
    if int(q) != q or q < 1:
        raise ConfigurationError(f"a Gauss rule needs at least one node, got q={q!r}")
    x, w = np.polynomial.legendre.leggauss(int(q))
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights)


# ----------------------------------------------------------------------------
# Local time matrices
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeMatrixSet:
    """Local time matrices of one ``(degree, kind, dt)`` triple.

    ``n1[l, m] = int psi'^m psi^l``, ``n2[l, m] = int psi^m psi^l`` over the
    physical slab, ``n3[l, m] = psi^m(0) psi^l(0)``, ``n4 = (n1 + n3)^-1``,
    ``n5 = n4 n2``, ``n6 = n2 n4`` and ``n7 = n2 n4 n2``.
    """

    n1: np.ndarray
    n2: np.ndarray
    n3: np.ndarray
    n4: np.ndarray
    n5: np.ndarray
    n6: np.ndarray
    n7: np.ndarray
    slab_length: float
    degree: int
    kind: str

    @property
    def n13(self):
        return self.n1 + self.n3


def assemble_time_matrices(basis, slab_length):
    """Assemble :class:`TimeMatrixSet` for ``basis`` on a slab of length ``dt``.

    ``n1`` and ``n2`` use the ``(r + 1)``-point Gauss rule, which is exact for
    their degree ``2r`` integrands; ``n3`` is a point evaluation at ``tau = 0``.

    Raises
    ------
    AssemblyError
        If ``n1 + n3`` is numerically singular (condition number above 1e14).
    """
    if not slab_length > 0:
        raise ConfigurationError(f"slab length must be positive, got {slab_length!r}")
    dt = float(slab_length)
    rule = gauss_rule(basis.size)
    psi = basis.values(rule.nodes)
    dpsi = basis.derivatives(rule.nodes)
    weighted = psi * rule.weights[:, None]
    n1 = weighted.T @ dpsi
    n2 = dt * (weighted.T @ psi)
    left = basis.values([0.0])[0]
    n3 = np.outer(left, left)
    n13 = n1 + n3
    cond = np.linalg.cond(n13)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise AssemblyError(
            f"N1 + N3 is numerically singular (cond={cond:.3e}) "
            f"for degree {basis.degree}, basis {basis.kind}"
        )
    lu = scipy.linalg.lu_factor(n13)
    n4 = scipy.linalg.lu_solve(lu, np.eye(basis.size))
    n5 = n4 @ n2
    n6 = n2 @ n4
    n7 = n2 @ n5
    mats = [n1, n2, n3, n4, n5, n6, n7]
    for m in mats:
        m.setflags(write=False)
    return TimeMatrixSet(*mats, slab_length=dt, degree=basis.degree, kind=basis.kind)


def _length_key(dt):
    # uniform meshes built with linspace differ in the last bits of dt
    return float(f"{dt:.12e}")


@functools.lru_cache(maxsize=256)
def _cached_time_matrices(degree, kind, key):
    return assemble_time_matrices(build_basis(degree, kind), key)


def time_matrices(degree, kind, slab_length):
    """Cached :func:`assemble_time_matrices` keyed on ``dt`` to 13 digits."""
    return _cached_time_matrices(int(degree), normalize_kind(kind), _length_key(slab_length))
