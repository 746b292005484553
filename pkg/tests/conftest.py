import numpy as np
import pytest

from dgtime import TimeMesh, Trajectory, build_system


def random_spd(rng, d, shift=0.5):
    A = rng.standard_normal((d, d))
    return A @ A.T / d + shift * np.eye(d)


def random_system(rng, d, damped=True, forcing=None):
    P = random_spd(rng, d)
    K = random_spd(rng, d)
    L = random_spd(rng, d, 0.2) if damped else np.zeros((d, d))
    return build_system(P, L, K, forcing, rng.standard_normal(d), rng.standard_normal(d))


def random_mesh(rng, n_slabs, max_degree, T=1.0, variable=True):
    cuts = np.sort(rng.uniform(0.0, T, n_slabs - 1))
    boundaries = np.concatenate([[0.0], cuts, [T]])
    # keep slabs reasonably sized
    boundaries = np.linspace(0.0, T, n_slabs + 1) * 0.5 + boundaries * 0.5
    if variable:
        degrees = rng.integers(0, max_degree + 1, n_slabs)
    else:
        degrees = [max_degree] * n_slabs
    return TimeMesh(boundaries, degrees)


def random_discrete(rng, mesh, d, kind="shifted-legendre"):
    cu = [rng.standard_normal((d, int(r) + 1)) for r in mesh.degrees]
    cw = [rng.standard_normal((d, int(r) + 1)) for r in mesh.degrees]
    return Trajectory.from_coefficients(mesh, cu, cw, kind)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
