import math

import numpy as np
import pytest

from wplab.classical import (fit_qdot_decay, integrate_trajectory,
                             taylor_remainder)
from wplab.errors import ConfigError, DegenerateFit
from wplab.potential import (bump_coupling_model, constant_diagonal_model,
                             make_model, synthetic_quadratic_model)

from oracles import harmonic_action


@pytest.fixture(scope="module")
def harmonic_record():
    m = synthetic_quadratic_model()
    return integrate_trajectory(m, [1.0, 0.0], [0.0, 0.5], "+",
                                T=2.0 * math.pi, tolerance=1e-12)


def test_free_motion_on_constant_model():
    m = constant_diagonal_model()
    rec = integrate_trajectory(m, [0.5], [1.2], "+", T=3.0, tolerance=1e-12)
    t = rec.t_samples
    assert np.allclose(rec.x_samples[:, 0], 0.5 + 1.2 * t, atol=1e-10)
    assert np.allclose(rec.xi_samples[:, 0], 1.2, atol=1e-12)
    # action of free motion on a constant level is linear in t
    lam = 1.0
    assert np.allclose(rec.S_samples, (0.5 * 1.2 ** 2 - lam) * t, atol=1e-10)


def test_harmonic_oscillation(harmonic_record):
    rec = harmonic_record
    t = rec.t_samples
    assert np.allclose(rec.x_samples[:, 0], np.cos(t) + 0.0, atol=1e-9)
    assert np.allclose(rec.x_samples[:, 1], 0.5 * np.sin(t), atol=1e-9)
    assert abs(rec.E - (0.5 * 0.25 + 0.5)) < 1e-14


def test_harmonic_action_closed_form(harmonic_record):
    rec = harmonic_record
    exact = harmonic_action([1.0, 0.0], [0.0, 0.5], rec.t_samples)
    assert np.max(np.abs(rec.S_samples - exact)) <= 1e-8


def test_energy_drift_gate(harmonic_record):
    assert harmonic_record.energy_drift() <= 10.0 * 1e-12


def test_energy_drift_on_bump_model():
    m = bump_coupling_model()
    rec = integrate_trajectory(m, [-1.5, 0.0], [1.5, 0.2], "+", T=4.0,
                               tolerance=1e-12)
    assert rec.energy_drift() <= 1e-10


def test_momentum_bound_stable_under_refinement():
    m = bump_coupling_model()
    bounds = [integrate_trajectory(m, [-1.5], [1.5], "+", T=4.0,
                                   tolerance=tol).momentum_bound()
              for tol in (1e-8, 1e-10, 1e-12)]
    assert np.ptp(bounds) < 1e-6


def test_time_reversal():
    m = bump_coupling_model()
    tol = 1e-12
    fwd = integrate_trajectory(m, [-1.5], [1.5], "+", T=2.0, tolerance=tol)
    back = integrate_trajectory(m, fwd.x_samples[-1], -fwd.xi_samples[-1],
                                "+", T=2.0, tolerance=tol)
    assert np.max(np.abs(back.x_samples[-1] - fwd.x_samples[0])) <= 100 * tol
    assert np.max(np.abs(back.xi_samples[-1] + fwd.xi_samples[0])) <= 100 * tol
    # the action is symmetric under time reversal (Lagrangian even in xi)
    assert back.S_samples[-1] == pytest.approx(fwd.S_samples[-1], abs=1e-9)


def test_verlet_matches_adaptive_short_time():
    m = synthetic_quadratic_model()
    ref = integrate_trajectory(m, [1.0], [0.0], "+", T=1.0, tolerance=1e-12)
    ver = integrate_trajectory(m, [1.0], [0.0], "+", T=1.0, method="verlet",
                               dt=1e-4)
    assert abs(ver.x_samples[-1, 0] - ref.x_samples[-1, 0]) < 1e-6
    assert abs(ver.S_samples[-1] - ref.S_samples[-1]) < 1e-6


def test_verlet_energy_bounded_long_time():
    m = synthetic_quadratic_model()
    rec = integrate_trajectory(m, [1.0], [0.0], "+", T=200.0, method="verlet",
                               dt=1e-3)
    assert rec.energy_drift() < 1e-5


def test_Q_samples_symmetric_and_continuous():
    m = bump_coupling_model()
    rec = integrate_trajectory(m, [-1.5, 0.0], [1.5, 0.0], "+", T=2.0,
                               tolerance=1e-10)
    Q = rec.Q_samples
    assert np.allclose(Q, np.swapaxes(Q, -1, -2), atol=1e-13)
    jumps = np.linalg.norm(np.diff(Q, axis=0), axis=(1, 2))
    assert np.max(jumps) < 0.5  # continuous sampling along the smooth path


def test_escape_diagnostics_bump():
    m = bump_coupling_model()
    rec = integrate_trajectory(m, [-1.2, 0.0], [1.3, 0.0], "+", T=100.0,
                               tolerance=1e-10)
    diag = rec.escape_diagnostics()
    assert diag["energy_margin"] > 0
    assert diag["radial_acceleration_positive"]
    assert rec.escaping
    # the radial acceleration of |x|^2 approaches 4 (E0 - lambda_inf)
    lam_inf = m.lambda_infinity("+")
    assert diag["energy_margin"] == pytest.approx(rec.E - lam_inf)


def test_qdot_fit_escaping_trajectory():
    m = bump_coupling_model(p=2.0)
    rec = integrate_trajectory(m, [-1.2], [1.3], "+", T=40.0, tolerance=1e-10)
    fit = fit_qdot_decay(rec, t_min=5.0)
    assert fit.kappa0 > 2.0
    assert fit.hypothesis_met


def test_qdot_fit_constant_hessian_degenerate():
    m = synthetic_quadratic_model()
    rec = integrate_trajectory(m, [1.0], [0.0], "+", T=12.0, tolerance=1e-10)
    with pytest.raises(DegenerateFit):
        fit_qdot_decay(rec)


def test_qdot_fit_trapped_trajectory_flagged():
    # attractive well: packet oscillates, no decay hypothesis
    m = make_model("bump-coupling", rho0_amplitude=-2.0)
    rec = integrate_trajectory(m, [0.4, 0.0], [0.0, 0.0], "+", T=40.0,
                               tolerance=1e-10)
    assert not rec.escaping
    fit = fit_qdot_decay(rec, t_min=5.0)
    assert not fit.hypothesis_met


def test_qdot_fit_needs_long_record():
    m = bump_coupling_model()
    rec = integrate_trajectory(m, [-1.2], [1.3], "+", T=5.0, tolerance=1e-10)
    with pytest.raises(ConfigError):
        fit_qdot_decay(rec)


def test_taylor_remainder_vanishes_at_center():
    m = bump_coupling_model()
    rec = integrate_trajectory(m, [-1.5], [1.5], "+", T=1.0, tolerance=1e-10)
    r = taylor_remainder(m, rec, 0.5, rec.x_at(0.5))
    assert np.max(np.abs(r)) < 1e-13


def test_taylor_remainder_zero_for_quadratic_level():
    m = synthetic_quadratic_model()
    rec = integrate_trajectory(m, [1.0, 0.0], [0.0, 0.0], "+", T=1.0,
                               tolerance=1e-10)
    pts = np.array([[0.3, -0.7], [2.0, 1.0], [-1.0, 0.4]])
    r = taylor_remainder(m, rec, 0.5, pts)
    assert np.max(np.abs(r)) < 1e-12


def test_taylor_remainder_cubic_order():
    m = bump_coupling_model()
    rec = integrate_trajectory(m, [-1.5], [1.5], "+", T=1.0, tolerance=1e-10)
    t = 0.6
    xc = float(np.atleast_1d(rec.x_at(t))[0])
    hs = np.array([0.1, 0.05, 0.025])
    vals = np.array([np.abs(taylor_remainder(m, rec, t, np.array([xc + h]))).item()
                     for h in hs])
    slope = np.polyfit(np.log(hs), np.log(vals), 1)[0]
    assert slope == pytest.approx(3.0, abs=0.35)


def test_dense_output_queries(harmonic_record):
    rec = harmonic_record
    tq = np.linspace(0.0, rec.T, 997)
    assert np.max(np.abs(rec.x_at(tq)[:, 0] - np.cos(tq))) < 1e-8
    Q = rec.Q_at(0.123)
    assert np.allclose(Q, np.eye(2), atol=1e-12)


def test_trajectory_csv_dump(tmp_path):
    m = bump_coupling_model()
    rec = integrate_trajectory(m, [-1.5], [1.5], "+", T=1.0, tolerance=1e-10)
    path = tmp_path / "traj.csv"
    rec.dump_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,x0,xi0,S,E,Q_norm,Qdot_norm"
    assert len(lines) == len(rec.t_samples) + 1
