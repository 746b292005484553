"""Acceptance criteria 1-10.

Each test records one PASS/FAIL line (with measured values and runtime) that
is printed in the terminal summary; run ``pytest tests/test_acceptance.py``.
Thresholds are the required ones; no criterion is relaxed.
"""
import sys
import time

import numpy as np
import pytest

from dgtime import (
    LEGENDRE,
    LOBATTO,
    SolverOptions,
    TimeMesh,
    WaveModel1D,
    apply_bilinear_form,
    assemble_slab_operators,
    assemble_slab_rhs,
    build_basis,
    build_system,
    condition_estimate,
    convergence_study,
    energy_error,
    energy_norm,
    gauss_rule,
    manufactured_case,
    march,
    solve_slab,
    stability_monitor,
    time_matrices,
)
from dgtime.analysis import ExactSolution
from dgtime.cases import scalar_exact, scalar_system
from dgtime.slab import displacement_update, displacement_update_kinv, solve_monolithic

from conftest import random_discrete, random_mesh, random_spd
from test_basis import symbolic_time_matrices

RESULTS = []


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        return False


def record(k, ok, detail, elapsed, limit):
    in_time = elapsed < limit
    status = "PASS" if ok and in_time else "FAIL"
    line = f"criterion {k:>2}: {status}  {detail}  [runtime {elapsed:.2f}s, limit {limit:g}s]"
    RESULTS.append(line)
    print(line)
    assert ok, detail
    assert in_time, f"runtime {elapsed:.2f}s exceeds {limit}s"


def test_criterion_01_scalar_convergence():
    dts = [0.5, 0.25, 0.125, 0.0625]
    with Timer() as t:
        reports = {}
        for r in (2, 3, 4, 5):
            meshes = [TimeMesh.uniform(10.0, r, dt=dt) for dt in dts]
            reports[r] = convergence_study(scalar_system(), scalar_exact(), meshes)
    fits = {r: rep.fitted_rate for r, rep in reports.items()}
    ok = all(fits[r] >= r + 0.5 for r in fits)
    detail = "fitted rates " + ", ".join(
        f"r={r}: {fits[r]:.3f} (need >= {r + 0.5}, pairs "
        + "/".join(f"{x.rate:.2f}" for x in reports[r].rows[1:])
        + f", statuses {''.join(s[0] for s in reports[r].statuses)})" for r in fits)
    record(1, ok, detail, t.elapsed, 10)


def test_criterion_02_spectral_decay():
    with Timer() as t:
        base = TimeMesh.uniform(10.0, 1, dt=0.1)
        rep = convergence_study(scalar_system(), scalar_exact(),
                                [base.with_degree(r) for r in range(1, 9)])
    errs = rep.errors
    statuses = rep.statuses
    upto = statuses.index("floor") + 1 if "floor" in statuses else len(errs)
    logs = np.log10(errs[:upto])
    decrements = -np.diff(logs)
    ok = bool(np.all(decrements > 0)) and float(decrements.mean()) >= 0.8
    detail = (f"log10 errors {np.round(np.log10(errs), 2).tolist()}, "
              f"mean decrement {decrements.mean():.2f} per degree over {upto} degrees")
    record(2, ok, detail, t.elapsed, 10)


def test_criterion_03_block_elimination(rng):
    worst_sol = worst_upd = 0.0
    with Timer() as t:
        for _ in range(20):
            d = int(rng.integers(1, 9))
            r = int(rng.integers(0, 5))
            kind = LEGENDRE if rng.random() < 0.5 else LOBATTO
            c = rng.standard_normal((2, d))
            system = build_system(random_spd(rng, d), random_spd(rng, d, 0.1), random_spd(rng, d),
                                  lambda s: c[0] + c[1] * np.sin(s), rng.standard_normal(d),
                                  rng.standard_normal(d))
            dt = float(rng.uniform(0.01, 1.0))
            tm = time_matrices(r, kind, dt)
            ops = assemble_slab_operators(system, tm)
            z = rng.standard_normal(2 * d)
            rhs = assemble_slab_rhs(system, tm, build_basis(r, kind), z, (1.0, 1.0 + dt),
                                    gauss_rule(r + 5))
            U_ref, W_ref = solve_monolithic(ops, rhs)
            sol = solve_slab(ops, rhs)
            rel = lambda a, b: np.linalg.norm(a - b) / np.linalg.norm(b)
            worst_sol = max(worst_sol, rel(sol.coeffs_u.ravel(), U_ref),
                            rel(sol.coeffs_w.ravel(), W_ref))
            W = sol.coeffs_w.ravel()
            a = displacement_update(tm, W, rhs.g_u_bar)
            b = displacement_update_kinv(system, tm, W, rhs.g_u)
            worst_upd = max(worst_upd, rel(a, b))
    ok = worst_sol <= 1e-10 and worst_upd <= 1e-11
    detail = f"max rel diff full vs reduced {worst_sol:.2e} (<=1e-10), updates {worst_upd:.2e} (<=1e-11)"
    record(3, ok, detail, t.elapsed, 5)


def test_criterion_04_energy_identity(rng):
    worst = 0.0
    with Timer() as t:
        for _ in range(50):
            d = int(rng.integers(1, 6))
            system = build_system(random_spd(rng, d), random_spd(rng, d, 0.3), random_spd(rng, d))
            mesh = random_mesh(rng, int(rng.integers(1, 6)), 5)
            kind = LEGENDRE if rng.random() < 0.5 else LOBATTO
            z = random_discrete(rng, mesh, d, kind)
            a = apply_bilinear_form(z, z, system)
            e = energy_norm(z, system).total
            worst = max(worst, abs(a - e) / e)
    record(4, worst <= 1e-11, f"max |A(z,z) - |||z|||^2| / |||z|||^2 = {worst:.2e} (<=1e-11)",
           t.elapsed, 5)


def test_criterion_05_polynomial_reproduction(rng):
    errs = {}
    with Timer() as t:
        for r in range(5):
            d = 3
            P, L, K = random_spd(rng, d), random_spd(rng, d), random_spd(rng, d)
            c = rng.standard_normal((r + 1, d))

            def u(s, c=c, r=r):
                return sum(c[k] * s ** k for k in range(r + 1))

            def du(s, c=c, r=r):
                return sum(k * c[k] * s ** (k - 1) for k in range(1, r + 1)) + 0 * c[0]

            def ddu(s, c=c, r=r):
                return sum(k * (k - 1) * c[k] * s ** (k - 2) for k in range(2, r + 1)) + 0 * c[0]

            f = lambda s, P=P, L=L, K=K, u=u, du=du, ddu=ddu: P @ ddu(s) + L @ du(s) + K @ u(s)
            system = build_system(P, L, K, f, u(0.0), du(0.0))
            mesh = random_mesh(rng, 4, r, T=2.0, variable=False)
            traj = march(system, mesh)
            errs[r] = energy_error(traj, ExactSolution(u, du), system)
    ok = all(e <= 1e-9 for e in errs.values())
    detail = "energy-norm errors " + ", ".join(f"r={r}: {e:.1e}" for r, e in errs.items()) + " (<=1e-9)"
    record(5, ok, detail, t.elapsed, 5)


def test_criterion_06_norm_axioms(rng):
    with Timer() as t:
        d = 3
        system = build_system(random_spd(rng, d), random_spd(rng, d, 0.3), random_spd(rng, d))
        n = lambda z: energy_norm(z, system).norm
        worst_hom = 0.0
        positive = True
        triangle = True
        for _ in range(100):
            mesh = random_mesh(rng, int(rng.integers(1, 5)), 4)
            a, b = random_discrete(rng, mesh, d), random_discrete(rng, mesh, d)
            na, nb = n(a), n(b)
            positive &= na > 0 and nb > 0
            alpha = float(rng.uniform(-10, 10))
            worst_hom = max(worst_hom, abs(n(a * alpha) - abs(alpha) * na) / (abs(alpha) * na))
            triangle &= n(a + b) <= (na + nb) * (1 + 1e-14)
    ok = positive and worst_hom <= 1e-12 and triangle
    detail = (f"positive={positive}, homogeneity rel err {worst_hom:.1e} (<=1e-12), "
              f"triangle inequality on 100 pairs={triangle}")
    record(6, ok, detail, t.elapsed, 5)


def test_criterion_07_wave_convergence():
    # dt levels per degree keep at least two pre-plateau levels for r = 3
    levels = {1: 0.5, 2: 0.5, 3: 1.0}
    with Timer() as t:
        case = manufactured_case(WaveModel1D(n_elements=200, zeta=1.0))
        system, exact = case.system(), case.exact_solution()
        # spatial error level: temporally converged reference run
        ref = march(system, TimeMesh.uniform(1.0, 4, dt=1 / 128))
        floor = energy_error(ref, exact, system)
        reports = {}
        for r, dt0 in levels.items():
            meshes = [TimeMesh.uniform(1.0, r, dt=dt0 / 2 ** k) for k in range(4)]
            reports[r] = convergence_study(system, exact, meshes, consistency_tol=None,
                                           spatial_floor=floor)
    rate_ok = all(reports[r].fitted_rate >= r + 0.5 for r in reports)
    plateau_ok = reports[3].statuses[-2:] == ["plateau", "plateau"]
    detail = (f"spatial floor {floor:.2e}; fitted pre-plateau rates "
              + ", ".join(f"r={r}: {rep.fitted_rate:.3f} (need >= {r + 0.5}, statuses "
                          f"{''.join(s[0] for s in rep.statuses)})" for r, rep in reports.items())
              + f"; plateau at finest r=3 levels={plateau_ok}")
    record(7, rate_ok and plateau_ok, detail, t.elapsed, 120)


def test_criterion_08_conditioning_gap():
    with Timer() as t:
        case = manufactured_case(WaveModel1D(n_elements=101))
        system = case.system()
        tm = time_matrices(2, LEGENDRE, 0.01)
        ops = assemble_slab_operators(system, tm)
        c_full = float(condition_estimate(ops.m_full_dense()))
        c_hat = float(condition_estimate(ops.m_hat_dense()))
        rhs = assemble_slab_rhs(system, tm, build_basis(2), system.z0, (0.0, 0.01), gauss_rule(7))
        gm = SolverOptions("gmres", gmres_rel_tol=1e-12)
        it_data = solve_slab(ops, rhs, gm).diagnostics.iterations
        b = np.random.default_rng(0).standard_normal(ops.size)
        rnd = type(rhs)(rhs.g_u, rhs.g_w, rhs.g_u_bar, b)
        it_rand = solve_slab(ops, rnd, gm).diagnostics.iterations
    ok = c_hat <= 1e-3 * c_full and it_data < 200 and it_rand < 200
    detail = (f"d={system.dim}, cond(M)={c_full:.2e}, cond(Mhat)={c_hat:.2e}, "
              f"ratio {c_hat / c_full:.1e} (<=1e-3); GMRES iterations {it_data} (slab data), "
              f"{it_rand} (random rhs) (<200)")
    record(8, ok, detail, t.elapsed, 60)


def test_criterion_09_stability():
    with Timer() as t:
        system = scalar_system()
        reps = {T: stability_monitor(march(system, TimeMesh.uniform(T, 3, dt=0.1)), system)
                for T in (10.0, 20.0, 40.0)}
    norms = np.array([rep.solution_norm for rep in reps.values()])
    spread = (norms.max() - norms.min()) / norms.min()
    data_err = max(abs(rep.data_term - 7.0) for rep in reps.values())
    ok = spread < 0.01 and data_err <= 1e-10
    detail = (f"|||z_DG||| = {', '.join(f'{x:.8f}' for x in norms)} (spread {spread:.1e} < 1%), "
              f"data term error {data_err:.1e} (<=1e-10)")
    record(9, ok, detail, t.elapsed, 10)


def test_criterion_10_time_matrix_oracles():
    dt = 0.37
    oracle = {(r, k): symbolic_time_matrices(r, k, dt) for r in range(4) for k in (LEGENDRE, LOBATTO)}
    with Timer() as t:
        worst = 0.0
        for (r, kind), (n1, n2, n3) in oracle.items():
            tm = time_matrices(r, kind, dt)
            worst = max(worst, *(np.abs(a - b).max() for a, b in ((tm.n1, n1), (tm.n2, n2), (tm.n3, n3))))
        worst_inv = 0.0
        for kind in (LEGENDRE, LOBATTO):
            for r in range(21):
                tm = time_matrices(r, kind, 1.0)
                worst_inv = max(worst_inv, np.abs(tm.n4 @ tm.n13 - np.eye(r + 1)).max())
    ok = worst <= 1e-14 and worst_inv <= 1e-12
    detail = (f"max |shipped - symbolic| {worst:.1e} (<=1e-14) for r<=3; "
              f"max |n4 (n1+n3) - I| {worst_inv:.1e} (<=1e-12) for r<=20")
    record(10, ok, detail, t.elapsed, 1)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
