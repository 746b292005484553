import numpy as np
import pytest
import sympy

from dgtime import TimeMesh, WaveModel1D, assemble_wave_1d, energy_error, manufactured_case, march
from dgtime.errors import ConfigurationError
from dgtime.wave1d import fem_matrices

x = sympy.Symbol("x")


def symbolic_fem(n, length=1):
    """Mass and stiffness by exact integration of hat functions, element by element."""
    h = sympy.Rational(length, n)
    M = sympy.zeros(n + 1)
    S = sympy.zeros(n + 1)
    for e in range(n):
        a, b = e * h, (e + 1) * h
        local = [(b - x) / h, (x - a) / h]
        for i in range(2):
            for j in range(2):
                M[e + i, e + j] += sympy.integrate(local[i] * local[j], (x, a, b))
                S[e + i, e + j] += sympy.integrate(
                    sympy.diff(local[i], x) * sympy.diff(local[j], x), (x, a, b))
    # Dirichlet: drop the boundary rows and columns
    return np.array(M[1:n, 1:n], dtype=float), np.array(S[1:n, 1:n], dtype=float)


def test_two_element_values():
    P, L, K = assemble_wave_1d(WaveModel1D(n_elements=2))
    np.testing.assert_allclose(P.toarray(), [[1 / 3]])
    np.testing.assert_allclose(K.toarray(), [[4.0]])
    assert L.nnz == 0


@pytest.mark.parametrize("n", [3, 5, 8])
def test_matrices_match_symbolic_integration(n):
    M, S = fem_matrices(WaveModel1D(n_elements=n))
    Mx, Sx = symbolic_fem(n)
    np.testing.assert_allclose(M.toarray(), Mx, atol=1e-14)
    np.testing.assert_allclose(S.toarray(), Sx, atol=1e-12)


def test_parameters_enter_the_operators():
    m = WaveModel1D(length=2.0, n_elements=6, rho=3.0, mu=5.0, zeta=0.5)
    M, S = fem_matrices(m)
    P, L, K = assemble_wave_1d(m)
    np.testing.assert_allclose(P.toarray(), 3.0 * M.toarray())
    np.testing.assert_allclose(L.toarray(), 3.0 * M.toarray())
    np.testing.assert_allclose(K.toarray(), 0.75 * M.toarray() + 5.0 * S.toarray())


def test_invalid_models():
    with pytest.raises(ConfigurationError):
        WaveModel1D(n_elements=1)
    with pytest.raises(ConfigurationError):
        WaveModel1D(rho=0.0)
    with pytest.raises(ConfigurationError):
        WaveModel1D(zeta=-1.0)
    with pytest.raises(ConfigurationError):
        manufactured_case(WaveModel1D(), "plane-wave")


def test_manufactured_forcing_closed_form():
    case = manufactured_case(WaveModel1D())
    xs = np.linspace(0, 1, 7)
    np.testing.assert_allclose(case.f(xs, 0.3), np.exp(-0.3) * np.sin(np.pi * xs) * (1 + np.pi ** 2))
    assert np.abs(case.pde_residual(np.array([0.2, 0.5, 0.7]), 0.4)).max() < 1e-5
    damped = manufactured_case(WaveModel1D(zeta=0.3, rho=2.0, mu=0.5))
    assert np.abs(damped.pde_residual(np.array([0.3, 0.6]), 0.2)).max() < 1e-5


def test_wave_solution_close_to_exact():
    case = manufactured_case(WaveModel1D(n_elements=50, zeta=1.0))
    system = case.system()
    traj = march(system, TimeMesh.uniform(1.0, 3, dt=0.1))
    u, _ = traj.evaluate(1.0, "left")
    assert np.abs(u - case.nodal_u(1.0)).max() < 1e-3
    assert energy_error(traj, case.exact_solution(), system) < 1e-2


def test_sparse_storage_above_threshold():
    system = manufactured_case(WaveModel1D(n_elements=300)).system()
    assert system.is_sparse and system.dim == 299
