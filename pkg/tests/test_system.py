import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from dgtime import ForcingSpec, build_system, first_order_view
from dgtime.errors import ConfigurationError, ValidationError
from dgtime.system import ktilde_quadratic

from conftest import random_spd


def test_scalar_first_order_view():
    s = build_system([[1.0]], [[5.0]], [[6.0]], None, [2.0], [-5.0])
    view = first_order_view(s)
    np.testing.assert_array_equal(view.ktilde_dense(), np.diag([6.0, 1.0]))
    np.testing.assert_array_equal(view.a_dense(), [[0.0, -6.0], [6.0, 5.0]])
    np.testing.assert_array_equal(view.z0, [2.0, -5.0])
    np.testing.assert_allclose(view.a_apply([1.0, 1.0]), [-6.0, 11.0])
    np.testing.assert_allclose(view.ktilde_apply([1.0, 2.0]), [6.0, 2.0])


def test_a_is_skew_plus_damping(rng):
    d = 5
    s = build_system(random_spd(rng, d), random_spd(rng, d), random_spd(rng, d))
    A = first_order_view(s).a_dense()
    sym = 0.5 * (A + A.T)
    expected = np.zeros((2 * d, 2 * d))
    expected[d:, d:] = s.L
    np.testing.assert_allclose(sym, expected, atol=1e-14)


def test_asymmetry_reported():
    K = np.array([[2.0, 1.0], [1.0 + 1e-6, 2.0]])
    with pytest.raises(ValidationError, match="asymmetry"):
        build_system(np.eye(2), np.zeros((2, 2)), K)


def test_indefinite_stiffness_names_the_pivot():
    K = np.diag([1.0, 2.0, -1.0])
    with pytest.raises(ValidationError, match="pivot 3"):
        build_system(np.eye(3), np.zeros((3, 3)), K)


def test_indefinite_damping_rejected():
    with pytest.raises(ValidationError, match="semi-definite"):
        build_system(np.eye(2), np.diag([1.0, -1.0]), np.eye(2))


def test_semidefinite_damping_accepted():
    s = build_system(np.eye(2), np.diag([1.0, 0.0]), np.eye(2))
    assert not s.l_is_definite


def test_shape_mismatch():
    with pytest.raises(ValidationError):
        build_system(np.eye(2), np.eye(3), np.eye(2))
    with pytest.raises(ValidationError):
        build_system(np.eye(2), np.eye(2), np.eye(2), None, [1.0, 2.0, 3.0])


def test_storage_follows_threshold(rng):
    d = 6
    P = random_spd(rng, d)
    dense = build_system(P, P, P)
    sparse = build_system(P, P, P, dense_threshold=3)
    assert not dense.is_sparse and sparse.is_sparse
    assert sp.isspmatrix_csr(sparse.K) or sp.issparse(sparse.K)
    x = rng.standard_normal(d)
    np.testing.assert_allclose(dense.k_factor.solve(x), sparse.k_factor.solve(x), rtol=1e-11)
    np.testing.assert_allclose(P @ dense.k_factor.solve(x), x, atol=1e-11)


def test_sparse_indefinite_detected():
    K = sp.diags([1.0, -2.0, 3.0]).tocsr()
    with pytest.raises(ValidationError, match="P is not|K is not"):
        build_system(sp.identity(3, format="csr"), sp.csr_matrix((3, 3)), K, dense_threshold=1)


def test_system_is_immutable():
    s = build_system([[1.0]], [[0.0]], [[1.0]], None, [1.0], [0.0])
    with pytest.raises(Exception):
        s.P = None
    with pytest.raises(ValueError):
        s.u0[0] = 3.0
    t = s.replace(u0=[2.0])
    assert t.u0[0] == 2.0 and s.u0[0] == 1.0


def test_ktilde_quadratic(rng):
    d = 3
    P, K = random_spd(rng, d), random_spd(rng, d)
    s = build_system(P, np.zeros((d, d)), K)
    u, w = rng.standard_normal((4, d)), rng.standard_normal((4, d))
    q = ktilde_quadratic(s, u, w)
    np.testing.assert_allclose(q, [u[i] @ K @ u[i] + w[i] @ P @ w[i] for i in range(4)])


class TestForcing:
    def test_closure_wrapped(self):
        s = build_system([[1.0]], [[0.0]], [[1.0]], lambda t: [np.sin(t)])
        assert s.forcing.kind == "closure"
        assert s.forcing(0.5, 1)[0] == pytest.approx(np.sin(0.5))

    def test_sampled_interpolates_and_warns(self):
        t = np.linspace(0.0, 1.0, 11)
        with pytest.warns(UserWarning, match="spline"):
            f = ForcingSpec("sampled", (t, np.column_stack([t ** 2, t ** 3])))
        np.testing.assert_allclose(f.sample([0.33], 2), [[0.33 ** 2, 0.33 ** 3]], atol=1e-12)
        f.check_covers(0.0, 1.0)
        with pytest.raises(ConfigurationError, match="covers"):
            f.check_covers(0.0, 2.0)

    def test_wrong_size_rejected(self):
        f = ForcingSpec("closure", lambda t: np.zeros(3))
        with pytest.raises(ValidationError):
            f.sample([0.0], 2)

    def test_bad_kinds(self):
        with pytest.raises(ConfigurationError):
            ForcingSpec("polynomial")
        with pytest.raises(ConfigurationError):
            ForcingSpec("closure", 3.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(ConfigurationError):
                ForcingSpec("sampled", ([0.0, 0.0], [[1.0], [1.0]]))
