"""Command-line front end: ``dgtime {solve,convergence,benchmark,export-matrices}``.

Runs are described by a YAML file (``--config``) whose schema is::

    problem:
      source: builtin-scalar | builtin-wave1d | matrix-market
      wave1d: {length, n_elements, rho, mu, zeta}
      matrices: {P, L, K, u0, u1}      # paths; u0/u1 may also be lists
    mesh: {t0, T, dt | N | boundaries, degree | degrees}
    solver: {method, tol, max_iter, restart, extrapolate_guess, basis}
    study: {kind, levels, degrees, condition_mode}
    output: {dir, samples_per_slab, times}
    seed: 0

Command-line flags override the file.  Unknown keys are rejected.  Exit codes:
0 success, 2 configuration error, 3 solver failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import yaml

from . import cases
from .analysis import (
    condition_estimate,
    convergence_study,
    energy_error,
    write_convergence_csv,
)
from .basis import TimeMesh, build_basis, gauss_rule, time_matrices
from .errors import (
    AssemblyError,
    ConfigurationError,
    MatrixMarketError,
    SolverError,
    ValidationError,
)
from .mmio import load_matrix_market, write_matrix_market
from .slab import assemble_slab_operators, assemble_slab_rhs
from .solver import (
    SolverOptions,
    march,
    sample_points,
    solve_slab,
    write_diagnostics_csv,
    write_trajectory_csv,
)
from .system import build_system
from .wave1d import WaveModel1D, assemble_wave_1d, manufactured_case

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

SOURCES = ("builtin-scalar", "builtin-wave1d", "matrix-market")
STUDY_KINDS = ("none", "dt-refinement", "r-refinement", "conditioning")

SCHEMA = {
    "problem": {
        "source": None,
        "wave1d": {"length": None, "n_elements": None, "rho": None, "mu": None, "zeta": None},
        "matrices": {"P": None, "L": None, "K": None, "u0": None, "u1": None},
    },
    "mesh": {"t0": None, "T": None, "dt": None, "N": None, "boundaries": None,
             "degree": None, "degrees": None},
    "solver": {"method": None, "tol": None, "max_iter": None, "restart": None,
               "extrapolate_guess": None, "basis": None},
    "study": {"kind": None, "levels": None, "degrees": None, "condition_mode": None},
    "output": {"dir": None, "samples_per_slab": None, "times": None},
    "seed": None,
}

DEFAULTS = {
    "problem": {
        "source": "builtin-scalar",
        "wave1d": {"length": 1.0, "n_elements": 200, "rho": 1.0, "mu": 1.0, "zeta": 1.0},
        "matrices": {},
    },
    "mesh": {"t0": 0.0},
    "solver": {"method": "direct", "tol": 1e-12, "max_iter": 2000, "restart": None,
               "extrapolate_guess": True, "basis": "shifted-legendre"},
    "study": {"kind": None, "levels": 4, "degrees": None, "condition_mode": "dense-exact"},
    "output": {"dir": "out", "samples_per_slab": 1, "times": None},
    "seed": 0,
}

# per-source defaults for unset mesh entries
SOURCE_MESH = {
    "builtin-scalar": {"T": 10.0, "dt": 0.1, "degree": 3},
    "builtin-wave1d": {"T": 1.0, "dt": 0.1, "degree": 2},
    "matrix-market": {"T": 1.0, "dt": 0.1, "degree": 2},
}


# ----------------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------------


def _check_keys(data, schema, where="config"):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where} must be a mapping")
    for key, value in data.items():
        if key not in schema:
            raise ConfigurationError(f"unknown key {where}.{key}")
        sub = schema[key]
        if isinstance(sub, dict) and value is not None:
            _check_keys(value, sub, f"{where}.{key}")


def _merge(base, extra):
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def resolve_config(path=None, overrides=None):
    """Defaults, then the YAML file, then flag ``overrides`` (already nested)."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: invalid YAML: {exc}") from None
        _check_keys(data, SCHEMA)
        cfg = _merge(cfg, data)
    if overrides:
        cfg = _merge(cfg, overrides)
    source = cfg["problem"]["source"]
    if source not in SOURCES:
        raise ConfigurationError(f"problem.source must be one of {SOURCES}, got {source!r}")
    mesh = cfg["mesh"]
    given = [k for k in ("dt", "N", "boundaries") if mesh.get(k) is not None]
    if len(given) > 1:
        raise ConfigurationError(f"mesh: give only one of dt, N, boundaries (got {given})")
    for key, value in SOURCE_MESH[source].items():
        if mesh.get(key) is None and not (key == "dt" and given) and not (
            key == "degree" and mesh.get("degrees") is not None
        ):
            mesh[key] = value
    if mesh.get("N") is not None and int(mesh["N"]) < 1:
        raise ConfigurationError("mesh.N must be at least 1")
    if mesh.get("dt") is not None and not float(mesh["dt"]) > 0:
        raise ConfigurationError("mesh.dt must be positive")
    kind = cfg["study"].get("kind")
    if kind is not None and kind not in STUDY_KINDS:
        raise ConfigurationError(f"study.kind must be one of {STUDY_KINDS}")
    return cfg


def fingerprint(cfg):
    """Compact JSON of the resolved configuration plus a short hash."""
    cfg = {k: v for k, v in cfg.items() if not k.startswith("_")}
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    digest = hashlib.sha256(text.encode()).hexdigest()[:16]
    return f"config={text} sha256={digest}"


def build_mesh(cfg, degree=None, dt=None):
    m = cfg["mesh"]
    if m.get("boundaries") is not None and dt is None:
        b = np.asarray(m["boundaries"], dtype=float)
        degrees = m.get("degrees") or [m["degree"]] * (b.size - 1)
        if degree is not None:
            degrees = [degree] * (b.size - 1)
        return TimeMesh(b, degrees)
    r = degree if degree is not None else m.get("degree")
    if r is None:
        if m.get("degrees") is None:
            raise ConfigurationError("mesh.degree or mesh.degrees is required")
        degrees = m["degrees"]
    t0, T = float(m.get("t0", 0.0)), float(m["T"])
    if dt is not None or m.get("dt") is not None:
        mesh = TimeMesh.uniform(T, 0 if r is None else r, dt=float(dt or m["dt"]), t0=t0)
    else:
        mesh = TimeMesh.uniform(T, 0 if r is None else r, n_slabs=int(m["N"]), t0=t0)
    if r is None:
        mesh = TimeMesh(mesh.boundaries, degrees)
    return mesh


def solver_options(cfg):
    s = cfg["solver"]
    return SolverOptions(
        method=s["method"],
        gmres_rel_tol=float(s["tol"]),
        gmres_max_iter=int(s["max_iter"]),
        gmres_restart=None if s.get("restart") is None else int(s["restart"]),
        extrapolate_guess=bool(s["extrapolate_guess"]),
        basis=s["basis"],
    )


def _load_vector(spec, dim, name, base):
    if spec is None:
        return np.zeros(dim)
    if isinstance(spec, (list, tuple)):
        return np.asarray(spec, dtype=float)
    path = base / spec
    A = load_matrix_market(path)
    A = A.toarray() if sp.issparse(A) else A
    v = np.asarray(A, dtype=float).ravel()
    if v.size != dim:
        raise ConfigurationError(f"{path}: {name} has {v.size} entries, expected {dim}")
    return v


def build_problem(cfg, base=Path(".")):
    """Return ``(system, exact_or_None, case_or_None)`` for the configured source."""
    p = cfg["problem"]
    source = p["source"]
    if source == "builtin-scalar":
        return cases.scalar_system(), cases.scalar_exact(), None
    if source == "builtin-wave1d":
        model = WaveModel1D(**{k: v for k, v in p["wave1d"].items() if v is not None})
        case = manufactured_case(model)
        return case.system(), case.exact_solution(), case
    mats = p.get("matrices") or {}
    missing = [k for k in ("P", "L", "K") if not mats.get(k)]
    if missing:
        raise ConfigurationError(f"problem.matrices is missing {missing}")
    loaded = {}
    dim = None
    for name in ("P", "L", "K"):
        path = base / mats[name]
        A = load_matrix_market(path)
        if A.shape[0] != A.shape[1]:
            raise ConfigurationError(f"{path}: matrix {name} is not square {A.shape}")
        if dim is None:
            dim = A.shape[0]
        elif A.shape[0] != dim:
            raise ConfigurationError(
                f"{path}: matrix {name} has size {A.shape[0]}, expected {dim}"
            )
        loaded[name] = A
    u0 = _load_vector(mats.get("u0"), dim, "u0", base)
    u1 = _load_vector(mats.get("u1"), dim, "u1", base)
    system = build_system(loaded["P"], loaded["L"], loaded["K"], None, u0, u1)
    return system, None, None


# ----------------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------------


class _Staging:
    """Write outputs in a temporary directory and move them only on success."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)

    def __enter__(self):
        self.tmp = Path(tempfile.mkdtemp(prefix=".dgtime-"))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self.out_dir.mkdir(parents=True, exist_ok=True)
                for f in sorted(self.tmp.iterdir()):
                    shutil.move(str(f), self.out_dir / f.name)
        finally:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def cmd_solve(cfg, log=print):
    system, _, _ = build_problem(cfg)
    mesh = build_mesh(cfg)
    traj = march(system, mesh, solver_options(cfg))
    out = cfg["output"]
    points = sample_points(mesh, out.get("times"), out.get("samples_per_slab"))
    header = fingerprint(cfg)
    with _Staging(out["dir"]) as tmp:
        write_trajectory_csv(traj, tmp / "trajectory.csv", points, header)
        write_diagnostics_csv(traj, tmp / "diagnostics.csv", header)
    log(f"solved {mesh.n_slabs} slabs; wrote {out['dir']}/trajectory.csv")
    return traj


def _study_degrees(cfg, default):
    degs = cfg["study"].get("degrees")
    if degs is None:
        r = cfg["mesh"].get("degree")
        degs = default if r is None or cfg.get("_degree_flag") is None else [r]
    return [int(r) for r in degs]


def _spatial_floor(system, exact, cfg, dt_min, r_max):
    """Error of a much finer temporal run, i.e. the spatial error level."""
    T, t0 = float(cfg["mesh"]["T"]), float(cfg["mesh"].get("t0", 0.0))
    n = int(math.ceil((T - t0) / (dt_min / 4)))
    mesh = TimeMesh.uniform(T, min(r_max + 1, 6), n_slabs=n, t0=t0)
    return energy_error(march(system, mesh, solver_options(cfg)), exact, system)


def cmd_convergence(cfg, log=print):
    system, exact, case = build_problem(cfg)
    if exact is None:
        raise ConfigurationError("convergence studies need a builtin problem with an exact solution")
    kind = cfg["study"].get("kind") or "dt-refinement"
    levels = int(cfg["study"]["levels"])
    if levels < 3:
        raise ConfigurationError("a convergence study needs at least 3 refinement levels")
    options = solver_options(cfg)
    consistency = None if case is not None else 1e-6
    reports = []
    if kind == "dt-refinement":
        degrees = _study_degrees(cfg, [2, 3, 4, 5] if case is None else [1, 2, 3])
        dt0 = float(cfg["mesh"]["dt"] if cfg["mesh"].get("dt") is not None else 0.5)
        dts = [dt0 / 2 ** k for k in range(levels)]
        floor = _spatial_floor(system, exact, cfg, dts[-1], max(degrees)) if case else None
        for r in degrees:
            meshes = [build_mesh(cfg, degree=r, dt=dt) for dt in dts]
            reports.append(convergence_study(system, exact, meshes, options,
                                             consistency_tol=consistency, spatial_floor=floor))
    elif kind == "r-refinement":
        degrees = cfg["study"].get("degrees") or list(range(1, levels + 1))
        meshes = [build_mesh(cfg, degree=int(r)) for r in degrees]
        reports.append(convergence_study(system, exact, meshes, options,
                                         consistency_tol=consistency))
    else:
        raise ConfigurationError(f"study.kind {kind!r} is not a convergence study")
    with _Staging(cfg["output"]["dir"]) as tmp:
        write_convergence_csv(reports, tmp / "convergence.csv", fingerprint(cfg))
    for rep in reports:
        log(f"{rep.kind} degree={rep.degree}: fitted rate {rep.fitted_rate:.3f} "
            f"(theory {rep.expected_rate:.2f})")
    return reports


def cmd_benchmark(cfg, log=print):
    system, _, _ = build_problem(cfg)
    mode = cfg["study"].get("condition_mode") or "dense-exact"
    mesh = build_mesh(cfg)
    options = solver_options(cfg)
    degrees = _study_degrees(cfg, [int(mesh.degrees[0])])
    rows = []
    for r in degrees:
        a, b = mesh.slab(0)
        dt = b - a
        tm = time_matrices(r, options.basis, dt)
        ops = assemble_slab_operators(system, tm)
        size_full = 2 * ops.size
        if mode == "dense-exact" and size_full > 2000:
            raise ConfigurationError(
                f"dense condition numbers need size <= 2000 (monolithic size {size_full}); "
                "set study.condition_mode: iterative"
            )
        basis = build_basis(r, options.basis)
        rhs = assemble_slab_rhs(system, tm, basis, system.z0, (a, b), gauss_rule(r + 5))
        if mode == "dense-exact":
            c_full = condition_estimate(ops.m_full_dense())
            c_hat = condition_estimate(ops.m_hat_dense())
        else:
            c_full = condition_estimate(ops.m_full_apply, 2 * ops.size, "iterative",
                                        transpose=ops.m_full_t_apply, seed=cfg["seed"])
            c_hat = condition_estimate(ops.m_hat_apply, ops.size, "iterative",
                                       transpose=ops.m_hat_t_apply, seed=cfg["seed"])
        gm_opts = SolverOptions("gmres", options.gmres_rel_tol, options.gmres_max_iter,
                                options.gmres_restart, False, options.basis)
        start = time.perf_counter()
        gm = solve_slab(ops, rhs, gm_opts)
        t_gmres = time.perf_counter() - start
        start = time.perf_counter()
        solve_slab(ops, rhs, SolverOptions("direct", basis=options.basis))
        t_direct = time.perf_counter() - start
        rows.append([r, repr(dt), system.dim, size_full, ops.size, repr(float(c_full)),
                     repr(float(c_hat)), mode, int(c_full.low_confidence or c_hat.low_confidence),
                     gm.diagnostics.iterations, f"{gm.diagnostics.residual:.6e}",
                     f"{t_gmres:.6e}", f"{t_direct:.6e}"])
        log(f"r={r}: cond(M)={float(c_full):.3e} cond(Mhat)={float(c_hat):.3e} "
            f"gmres iterations={gm.diagnostics.iterations}")
    head = ["degree", "dt", "dim", "size_full", "size_hat", "cond_full", "cond_hat", "mode",
            "low_confidence", "gmres_iterations", "gmres_residual", "wall_time_gmres",
            "wall_time_direct"]
    with _Staging(cfg["output"]["dir"]) as tmp:
        with open(tmp / "benchmark.csv", "w", newline="") as fh:
            fh.write(f"# {fingerprint(cfg)}\n")
            writer = csv.writer(fh)
            writer.writerow(head)
            writer.writerows(rows)
    return rows


def cmd_export_matrices(cfg, log=print):
    p = cfg["problem"]
    if p["source"] == "builtin-wave1d":
        model = WaveModel1D(**{k: v for k, v in p["wave1d"].items() if v is not None})
        P, L, K = assemble_wave_1d(model)
        case = manufactured_case(model)
        u0, u1 = case.nodal_u(0.0), case.nodal_w(0.0)
    else:
        system, _, _ = build_problem(cfg)
        P, L, K, u0, u1 = system.P, system.L, system.K, system.u0, system.u1
    with _Staging(cfg["output"]["dir"]) as tmp:
        for name, A in (("P", P), ("L", L), ("K", K)):
            write_matrix_market(tmp / f"{name}.mtx", A if sp.issparse(A) else sp.csr_matrix(A),
                                comment=fingerprint(cfg))
        write_matrix_market(tmp / "u0.mtx", np.asarray(u0))
        write_matrix_market(tmp / "u1.mtx", np.asarray(u1))
    log(f"wrote P.mtx, L.mtx, K.mtx, u0.mtx, u1.mtx to {cfg['output']['dir']}")


COMMANDS = {
    "solve": cmd_solve,
    "convergence": cmd_convergence,
    "benchmark": cmd_benchmark,
    "export-matrices": cmd_export_matrices,
}


def _parser():
    parser = argparse.ArgumentParser(prog="dgtime", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, help="YAML run configuration")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--source", choices=SOURCES, help="problem source")
    parser.add_argument("--solver", choices=["direct", "gmres"])
    parser.add_argument("--tol", type=float, help="GMRES relative tolerance")
    parser.add_argument("--degree", type=int, help="temporal polynomial degree")
    parser.add_argument("--dt", type=float, help="uniform time step")
    parser.add_argument("--T", type=float, dest="T", help="final time")
    parser.add_argument("--levels", type=int, help="refinement levels of a study")
    parser.add_argument("--study", choices=STUDY_KINDS, help="study kind")
    parser.add_argument("--seed", type=int)
    return parser


def _overrides(args):
    o = {}

    def put(section, key, value):
        if value is not None:
            o.setdefault(section, {})[key] = value

    put("output", "dir", args.out)
    put("problem", "source", args.source)
    put("solver", "method", args.solver)
    put("solver", "tol", args.tol)
    put("mesh", "degree", args.degree)
    put("mesh", "dt", args.dt)
    put("mesh", "T", args.T)
    put("study", "levels", args.levels)
    put("study", "kind", args.study)
    if args.seed is not None:
        o["seed"] = args.seed
    return o


def _limit_threads():
    n = os.environ.get("DGTIME_NUM_THREADS")
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(int(n))


def main(argv=None):
    args = _parser().parse_args(argv)
    _limit_threads()
    try:
        cfg = resolve_config(args.config, _overrides(args))
        cfg["_degree_flag"] = args.degree
        COMMANDS[args.command](cfg, log=lambda msg: print(msg, file=sys.stderr))
    except (ConfigurationError, ValidationError) as exc:
        print(f"dgtime: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, AssemblyError) as exc:
        print(f"dgtime: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (MatrixMarketError, OSError) as exc:
        print(f"dgtime: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
