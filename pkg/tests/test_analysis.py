import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgtime import (
    SolverOptions,
    TimeMesh,
    Trajectory,
    apply_bilinear_form,
    apply_linear_functional,
    build_system,
    condition_estimate,
    convergence_study,
    energy_error,
    energy_norm,
    march,
    stability_monitor,
)
from dgtime.analysis import ExactSolution, write_convergence_csv
from dgtime.cases import scalar_exact, scalar_system
from dgtime.errors import ConfigurationError, ValidationError

from conftest import random_discrete, random_mesh, random_spd, random_system


def test_energy_identity(rng):
    for _ in range(10):
        d = int(rng.integers(1, 5))
        system = random_system(rng, d)
        mesh = random_mesh(rng, int(rng.integers(1, 5)), 4)
        z = random_discrete(rng, mesh, d)
        a = apply_bilinear_form(z, z, system)
        assert a == pytest.approx(energy_norm(z, system).total, rel=1e-11)


def test_galerkin_orthogonality(rng):
    """The discrete solution satisfies A(z, v) = F(v) for every discrete v."""
    d = 3
    c = rng.standard_normal((2, d))
    system = random_system(rng, d, forcing=lambda t: c[0] * np.sin(2 * t) + c[1])
    mesh = random_mesh(rng, 4, 3)
    for kind in ("shifted-legendre", "lagrange-gauss-lobatto"):
        traj = march(system, mesh, SolverOptions(basis=kind))
        for _ in range(3):
            v = random_discrete(rng, mesh, d, kind)
            lhs = apply_bilinear_form(traj, v, system)
            rhs = apply_linear_functional(v, system)
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_constant_function_energy():
    d = 2
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    K = np.array([[3.0, 1.0], [1.0, 2.0]])
    system = build_system(P, np.zeros((d, d)), K)
    mesh = TimeMesh.uniform(1.0, 2, n_slabs=3)
    cu, cw = np.array([1.0, -2.0]), np.array([0.5, 3.0])
    coeffs_u = [np.column_stack([cu, np.zeros((d, 2))])] * 3
    coeffs_w = [np.column_stack([cw, np.zeros((d, 2))])] * 3
    z = Trajectory.from_coefficients(mesh, coeffs_u, coeffs_w)
    eb = energy_norm(z, system)
    assert eb.jump_term == 0.0 and eb.l_term == 0.0
    assert eb.total == pytest.approx(cu @ K @ cu + cw @ P @ cw, rel=1e-14)


def test_l_term_against_closed_form():
    # z = (0, t) on (0, 2), L = 3: int_0^2 3 t^2 dt = 8 plus the final trace 0.5 * 1 * 4
    system = build_system([[1.0]], [[3.0]], [[1.0]])
    mesh = TimeMesh.uniform(2.0, 1, n_slabs=1)
    z = Trajectory.from_coefficients(mesh, [np.zeros((1, 2))], [np.array([[1.0, 1.0]])])
    eb = energy_norm(z, system)
    assert eb.l_term == pytest.approx(8.0, rel=1e-14)
    assert eb.final_term == pytest.approx(2.0, rel=1e-14)
    assert eb.initial_term == 0.0


def test_error_quadrature_is_converged():
    system, exact = scalar_system(), scalar_exact()
    mesh = TimeMesh.uniform(10.0, 3, dt=0.5)
    traj = march(system, mesh)
    e_default = energy_error(traj, exact, system)
    e_fine = energy_error(traj, exact, system, quad_points=4 * (3 + 10))
    assert e_default == pytest.approx(e_fine, rel=1e-10)
    with pytest.raises(ConfigurationError):
        energy_norm(traj, system, quad_points=2)


class TestNormAxioms:
    def test_positive_on_nonzero(self, rng):
        system = random_system(rng, 3)
        mesh = random_mesh(rng, 3, 3)
        for _ in range(20):
            assert energy_norm(random_discrete(rng, mesh, 3), system).norm > 0

    @given(st.floats(-1e3, 1e3, allow_nan=False).filter(lambda a: abs(a) > 1e-6))
    @settings(max_examples=25, deadline=None)
    def test_homogeneity(self, alpha):
        rng = np.random.default_rng(1)
        system = random_system(rng, 2)
        mesh = random_mesh(rng, 3, 2)
        z = random_discrete(rng, mesh, 2)
        assert energy_norm(z * alpha, system).norm == pytest.approx(
            abs(alpha) * energy_norm(z, system).norm, rel=1e-12)

    def test_triangle_inequality(self, rng):
        system = random_system(rng, 2)
        mesh = random_mesh(rng, 4, 3)
        for _ in range(20):
            a, b = random_discrete(rng, mesh, 2), random_discrete(rng, mesh, 2)
            n = lambda z: energy_norm(z, system).norm
            assert n(a + b) <= n(a) + n(b) * (1 + 1e-14)


def test_scalar_stability_data_term():
    system = scalar_system()
    rep = stability_monitor(march(system, TimeMesh.uniform(10.0, 3, dt=0.1)), system)
    assert rep.data_term == pytest.approx(7.0, abs=1e-10)
    assert rep.forcing_term == 0.0 and rep.caveat is None
    assert rep.solution_norm <= rep.data_term
    assert 0.99 < rep.ratio <= 1.0


def test_stability_caveat_for_singular_damping():
    system = build_system([[1.0]], [[0.0]], [[1.0]], lambda t: np.array([1.0]), [1.0], [0.0])
    rep = stability_monitor(march(system, TimeMesh.uniform(1.0, 1, dt=0.5)), system)
    assert not rep.forcing_weighted and "singular" in rep.caveat
    assert rep.forcing_term == pytest.approx(1.0)


class TestConditionEstimate:
    def test_diagonal_examples(self):
        assert float(condition_estimate(np.eye(4))) == pytest.approx(1.0)
        assert float(condition_estimate(np.diag([1.0, 1e-6]))) == pytest.approx(1e6, rel=1e-12)

    def test_iterative_matches_dense(self, rng):
        A = random_spd(rng, 40) + 0.3 * rng.standard_normal((40, 40))
        dense = condition_estimate(A)
        it = condition_estimate(lambda x: A @ x, 40, "iterative", transpose=lambda x: A.T @ x,
                                iterations=200)
        assert float(it) == pytest.approx(float(dense), rel=1e-3)
        assert it.mode == "iterative"

    def test_dense_size_cap(self):
        with pytest.raises(ConfigurationError):
            condition_estimate(lambda x: x, 2500)


class TestConvergenceStudy:
    def test_rows_and_rates(self):
        meshes = [TimeMesh.uniform(10.0, 2, dt=dt) for dt in (0.5, 0.25, 0.125)]
        rep = convergence_study(scalar_system(), scalar_exact(), meshes)
        assert rep.kind == "dt-refinement" and rep.degree == 2
        assert rep.expected_rate == 2.5
        assert list(rep.controls) == [0.5, 0.25, 0.125]
        assert np.all(np.diff(rep.errors) < 0)
        assert math.isnan(rep.rows[0].rate) and rep.rows[1].rate > 2

    def test_r_refinement_and_floor(self):
        base = TimeMesh.uniform(10.0, 1, dt=0.1)
        meshes = [base.with_degree(r) for r in range(1, 9)]
        rep = convergence_study(scalar_system(), scalar_exact(), meshes)
        assert rep.kind == "r-refinement" and math.isnan(rep.expected_rate)
        assert rep.statuses[-1] == "floor"
        assert rep.fitted_rate > 1.0

    def test_plateau_marking(self):
        meshes = [TimeMesh.uniform(10.0, 2, dt=dt) for dt in (0.5, 0.25, 0.125)]
        rep = convergence_study(scalar_system(), scalar_exact(), meshes, spatial_floor=2e-3)
        assert rep.statuses == ["ok", "ok", "plateau"]

    def test_inconsistent_exact_solution_rejected(self):
        wrong = ExactSolution(lambda t: np.array([np.exp(-3 * t) + np.exp(-2 * t)]),
                              lambda t: np.array([-3 * np.exp(-3 * t) - 3 * np.exp(-2 * t)]))
        meshes = [TimeMesh.uniform(1.0, 1, dt=dt) for dt in (0.5, 0.25, 0.125)]
        with pytest.raises(ValidationError):
            convergence_study(scalar_system(), wrong, meshes)
        with pytest.raises(ValidationError):
            wrong.check_derivative(0.0, 1.0)
        assert scalar_exact().check_derivative(0.0, 1.0) < 1e-6

    def test_needs_three_levels(self):
        meshes = [TimeMesh.uniform(1.0, 1, dt=dt) for dt in (0.5, 0.25)]
        with pytest.raises(ConfigurationError):
            convergence_study(scalar_system(), scalar_exact(), meshes)

    def test_threaded_levels_match_serial(self):
        meshes = [TimeMesh.uniform(10.0, 2, dt=dt) for dt in (0.5, 0.25, 0.125)]
        a = convergence_study(scalar_system(), scalar_exact(), meshes)
        b = convergence_study(scalar_system(), scalar_exact(), meshes, workers=3)
        np.testing.assert_array_equal(a.errors, b.errors)

    def test_csv(self, tmp_path):
        meshes = [TimeMesh.uniform(10.0, 2, dt=dt) for dt in (0.5, 0.25, 0.125)]
        rep = convergence_study(scalar_system(), scalar_exact(), meshes)
        write_convergence_csv([rep], tmp_path / "c.csv", "config=x")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "# config=x"
        assert any("expected_rate=2.5" in line for line in lines)
        body = [line for line in lines if not line.startswith("#")]
        assert body[0].split(",")[:3] == ["degree_group", "level", "dt"]
        assert len(body) == 4
