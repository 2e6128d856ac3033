import numpy as np
import pytest

from wplab.errors import ConfigError, GapViolation
from wplab.potential import (assumption_audit, bump_coupling_model,
                             constant_diagonal_model, d_chi, eigen, eval_V,
                             grad_lambda, hessian_lambda, make_model,
                             rotation_coupling_model,
                             synthetic_quadratic_model)

from oracles import fd_gradient, fd_hessian, fd_jacobian

RNG = np.random.default_rng(42)


@pytest.fixture(scope="module")
def bump():
    return bump_coupling_model()


@pytest.fixture(scope="module")
def rotation():
    return rotation_coupling_model(p=1.0)


def random_points(n, d, box=3.0):
    return RNG.uniform(-box, box, size=(n, d))


def test_V_is_hermitian_everywhere(bump, rotation):
    for model in (bump, rotation, synthetic_quadratic_model()):
        x = random_points(500, 2)
        V = eval_V(model, x)
        assert np.allclose(V, np.swapaxes(V, -1, -2), atol=0.0)


def test_bump_model_diagonal_outside_support(bump):
    x = np.array([[2.5, 0.0], [0.0, -3.0], [4.0, 4.0]])
    V = eval_V(bump, x)
    r0 = bump.rho0.value(x)
    assert np.allclose(V[..., 0, 1], 0.0)
    assert np.allclose(V[..., 0, 0], r0 + 1.0)
    assert np.allclose(V[..., 1, 1], r0 - 1.0)


def test_rotation_model_matches_decaying_diagonal_where_angle_zero(rotation):
    # outside the angle support the matrix is <x>^-p diag(1, -1)
    x = np.array([[2.0, 1.5]])
    V = eval_V(rotation, x)[0]
    b = (1.0 + np.sum(x ** 2)) ** -0.5
    assert np.allclose(V, b * np.diag([1.0, -1.0]), atol=1e-14)


def test_eigenvalue_formula_and_residual(bump):
    x = random_points(10000, 2)
    e = eigen(bump, x)
    V = eval_V(bump, x)
    for lam, chi in ((e.lambda_plus, e.chi_plus), (e.lambda_minus, e.chi_minus)):
        res = np.einsum("...ij,...j->...i", V, chi) - lam[..., None] * chi
        assert np.max(np.abs(res)) <= 1e-12


def test_eigen_diagonal_case():
    m = constant_diagonal_model(level_plus=1.0, level_minus=-1.0)
    e = eigen(m, np.array([[0.7, -0.3]]))
    assert np.allclose(e.lambda_plus, 1.0) and np.allclose(e.lambda_minus, -1.0)
    assert np.allclose(e.chi_plus[0], [1.0, 0.0])
    assert np.allclose(e.chi_minus[0], [0.0, 1.0])


def test_rotation_eigenvalues_are_plus_minus_radial_decay(rotation):
    x = random_points(50, 2, box=2.0)
    e = eigen(rotation, x)
    b = (1.0 + np.sum(x ** 2, axis=-1)) ** -0.5
    assert np.allclose(e.lambda_plus, b, atol=1e-14)
    assert np.allclose(e.lambda_minus, -b, atol=1e-14)


def test_eigenvectors_orthonormal(bump):
    x = random_points(200, 2)
    e = eigen(bump, x)
    assert np.allclose(np.sum(e.chi_plus ** 2, axis=-1), 1.0)
    assert np.allclose(np.sum(e.chi_minus ** 2, axis=-1), 1.0)
    assert np.allclose(np.sum(e.chi_plus * e.chi_minus, axis=-1), 0.0, atol=1e-15)


@pytest.mark.parametrize("mode", ["+", "-"])
def test_grad_lambda_against_finite_differences(bump, mode):
    for x in random_points(25, 2):
        g = grad_lambda(bump, x[None], mode)[0]
        fd = fd_gradient(lambda p: float(bump.lambda_value(p[None], mode)[0]), x)
        assert np.max(np.abs(g - fd)) <= 1e-6 * max(1.0, np.max(np.abs(g)))


def test_grad_lambda_zero_in_constant_region():
    m = make_model("bump-coupling", rho0_amplitude=0.0)
    g = grad_lambda(m, np.array([[3.0, 1.0]]), "+")
    assert np.allclose(g, 0.0, atol=1e-15)


def test_grad_lambda_rotation_hand_value():
    # d=2, p=1, x=(1,0): gradient of +<x>^-1 is -<x>^-3 x = (-2^-1.5, 0)
    m = rotation_coupling_model(p=1.0)
    g = grad_lambda(m, np.array([[1.0, 0.0]]), "+")[0]
    assert np.allclose(g, [-2.0 ** -1.5, 0.0], atol=1e-13)


@pytest.mark.parametrize("mode", ["+", "-"])
def test_hessian_against_finite_differences(bump, mode):
    for x in random_points(15, 2):
        H = hessian_lambda(bump, x[None], mode)[0]
        fd = fd_hessian(lambda p: float(bump.lambda_value(p[None], mode)[0]), x)
        scale = max(1.0, np.max(np.abs(H)))
        assert np.max(np.abs(H - fd)) <= 1e-5 * scale
        assert np.allclose(H, H.T, atol=1e-14)


def test_hessian_quadratic_model_is_identity():
    m = synthetic_quadratic_model()
    x = random_points(20, 2)
    H = hessian_lambda(m, x, "+")
    assert np.allclose(H, np.eye(2), atol=1e-13)


def test_hessian_zero_outside_support_with_flat_shift():
    m = make_model("bump-coupling", rho0_amplitude=0.0)
    H = hessian_lambda(m, np.array([[2.5, -1.5]]), "+")
    assert np.allclose(H, 0.0, atol=1e-15)


@pytest.mark.parametrize("mode", ["+", "-"])
def test_d_chi_against_finite_differences(bump, mode):
    for x in random_points(15, 2, box=1.5):
        D = d_chi(bump, x[None], mode)[0]
        fd = fd_jacobian(lambda p: bump.chi(p[None], mode)[0], x, 2)
        assert np.max(np.abs(D - fd)) <= 1e-6


def test_d_chi_zero_outside_support(bump):
    D = d_chi(bump, np.array([[3.0, 3.0]]), "+")
    assert np.allclose(D, 0.0, atol=1e-15)


def test_d_chi_gauge_identity(bump):
    # columns of d chi_+ lie along chi_-, with coefficient grad(alpha)/2
    x = random_points(50, 2, box=1.5)
    D = d_chi(bump, x, "+")
    ga = bump.grad_alpha(x)
    chi_m = bump.chi(x, "-")
    expected = 0.5 * ga[..., :, None] * chi_m[..., None, :]
    assert np.allclose(D, expected, atol=0.0)
    # and each row is orthogonal to chi_+
    chi_p = bump.chi(x, "+")
    assert np.allclose(np.einsum("...ij,...j->...i", D, chi_p), 0.0, atol=1e-15)


def test_gap_violation_raised():
    m = rotation_coupling_model(p=3.0)
    with pytest.raises(GapViolation):
        eigen(m, np.array([[100.0, 0.0]]))


def test_gap_never_closes_on_bump(bump):
    x = random_points(5000, 2, box=10.0)
    e = eigen(bump, x)
    assert np.min(e.gap) >= 2.0 - 1e-12


def test_audit_bump_passes(bump):
    rep = assumption_audit(bump, 8.0, 5000, d=2)
    assert rep.passed
    assert rep.min_gap_sq >= 1.0 - 1e-12


def test_audit_rotation_gap_clause_fails(rotation):
    rep = assumption_audit(rotation, 40.0, 5000, d=2)
    assert not rep.gap_ok
    assert rep.long_range_ok and rep.diagonal_outside_ok
    assert not rep.passed


def test_audit_flags_coupling_outside_declared_support():
    from dataclasses import replace
    m = bump_coupling_model(coupling_radius=1.0)
    lying = replace(m, coupling_support_radius=0.3)
    rep = assumption_audit(lying, 4.0, 5000, d=2)
    assert not rep.diagonal_outside_ok


def test_audit_quadratic_model_fails_long_range():
    rep = assumption_audit(synthetic_quadratic_model(), 8.0, 3000, d=2)
    assert not rep.long_range_ok


def test_rotation_angle_amplitude_guard():
    with pytest.raises(ConfigError):
        rotation_coupling_model(angle_amplitude=3.5)


def test_make_model_unknown_id():
    with pytest.raises(ConfigError):
        make_model("no-such-potential")


def test_derivative_boundedness_over_box(bump):
    # eigenvalue and eigenvector derivatives stay bounded on a large box
    x = random_points(2000, 2, box=12.0)
    g = grad_lambda(bump, x, "+")
    H = hessian_lambda(bump, x, "+")
    D = d_chi(bump, x, "+")
    assert np.isfinite(g).all() and np.isfinite(H).all() and np.isfinite(D).all()
    assert np.max(np.abs(g)) < 10.0
    assert np.max(np.abs(H)) < 10.0
    assert np.max(np.abs(D)) < 10.0
