"""Semi-discrete 1D damped wave equation on a uniform linear finite element grid.

The strong problem is

    rho w_t + 2 rho zeta w + rho zeta^2 u - (mu u_x)_x = f,   u_t = w,

on ``(0, length)`` with homogeneous Dirichlet conditions.  Boundary rows and
columns are deleted, leaving ``d = n_elements - 1`` interior unknowns and

    P = rho M,   L = 2 rho zeta M,   K = rho zeta^2 M + mu S

with ``M`` and ``S`` the P1 mass and stiffness matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .analysis import ExactSolution
from .errors import ConfigurationError
from .system import DENSE_THRESHOLD, ForcingSpec, build_system

MANUFACTURED_CHOICES = ("decaying-sine",)


@dataclass(frozen=True)
class WaveModel1D:
    length: float = 1.0
    n_elements: int = 200
    rho: float = 1.0
    mu: float = 1.0
    zeta: float = 0.0

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigurationError("length must be positive")
        if int(self.n_elements) != self.n_elements or self.n_elements < 2:
            raise ConfigurationError("n_elements must be an integer >= 2")
        if not (self.rho > 0 and self.mu > 0):
            raise ConfigurationError("rho and mu must be positive")
        if not self.zeta >= 0:
            raise ConfigurationError("zeta must be non-negative")

    @property
    def h(self):
        return self.length / self.n_elements

    @property
    def nodes(self):
        """Interior node coordinates."""
        return np.arange(1, self.n_elements) * self.h


def fem_matrices(model):
    """Interior P1 mass and stiffness matrices ``(M, S)`` in CSR format."""
    n = model.n_elements - 1
    h = model.h
    ones = np.ones(n)
    mass = sp.diags([ones[:-1] * h / 6, ones * 2 * h / 3, ones[:-1] * h / 6], [-1, 0, 1],
                    shape=(n, n), format="csr")
    stiff = sp.diags([-ones[:-1] / h, ones * 2 / h, -ones[:-1] / h], [-1, 0, 1],
                     shape=(n, n), format="csr")
    return mass, stiff


def assemble_wave_1d(model):
    """Return ``(P, L, K)`` for ``model`` as CSR matrices."""
    mass, stiff = fem_matrices(model)
    P = model.rho * mass
    L = (2.0 * model.rho * model.zeta) * mass
    K = (model.rho * model.zeta ** 2) * mass + model.mu * stiff
    if model.zeta == 0.0:
        L = sp.csr_matrix(mass.shape)
    return sp.csr_matrix(P), sp.csr_matrix(L), sp.csr_matrix(K)


@dataclass(frozen=True)
class ManufacturedCase1D:
    """Closed-form ``u(x, t)``, ``w = u_t`` and matching forcing ``f(x, t)``."""

    model: WaveModel1D
    u: Callable
    w: Callable
    f: Callable
    choice: str

    def nodal_u(self, t):
        return self.u(self.model.nodes, t)

    def nodal_w(self, t):
        return self.w(self.model.nodes, t)

    def exact_solution(self):
        """Nodal interpolants as an :class:`~dgtime.analysis.ExactSolution`."""
        return ExactSolution(self.nodal_u, self.nodal_w)

    def forcing_spec(self):
        """Forcing vector ``M I_h f(., t)`` (mass times nodal interpolant)."""
        mass, _ = fem_matrices(self.model)
        nodes = self.model.nodes
        return ForcingSpec("manufactured-1d", lambda t: mass @ self.f(nodes, t))

    def pde_residual(self, x, t, h=1e-4):
        """Strong-form residual of the exact solution by central differences."""
        m = self.model
        u = self.u
        u_tt = (u(x, t + h) - 2 * u(x, t) + u(x, t - h)) / h ** 2
        u_t = (u(x, t + h) - u(x, t - h)) / (2 * h)
        u_xx = (u(x + h, t) - 2 * u(x, t) + u(x - h, t)) / h ** 2
        lhs = m.rho * u_tt + 2 * m.rho * m.zeta * u_t + m.rho * m.zeta ** 2 * u(x, t) - m.mu * u_xx
        return lhs - self.f(x, t)

    def system(self, dense_threshold=DENSE_THRESHOLD):
        P, L, K = assemble_wave_1d(self.model)
        return build_system(P, L, K, self.forcing_spec(), self.nodal_u(0.0), self.nodal_w(0.0),
                            dense_threshold=dense_threshold)


def manufactured_case(model, choice="decaying-sine"):
    """Manufactured solution for ``model``.

    ``decaying-sine``: ``u = exp(-t) sin(pi x / length)`` so that
    ``f = exp(-t) sin(k x) (rho (1 - zeta)^2 + mu k^2)`` with ``k = pi / length``.
    """
    if choice not in MANUFACTURED_CHOICES:
        raise ConfigurationError(f"unknown manufactured case {choice!r}")
    k = math.pi / model.length
    amp = model.rho * (1.0 - model.zeta) ** 2 + model.mu * k ** 2

    def u(x, t):
        return np.exp(-t) * np.sin(k * np.asarray(x))

    def w(x, t):
        return -u(x, t)

    def f(x, t):
        return amp * u(x, t)

    return ManufacturedCase1D(model, u, w, f, choice)
