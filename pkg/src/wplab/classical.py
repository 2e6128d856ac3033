"""Classical trajectories on an eigenvalue surface.

Integrates the Hamiltonian flow

    x' = xi,   xi' = -grad lambda_mode(x)

together with the running action integral of the Lagrangian
(|xi|^2/2 - lambda(x)), samples the eigenvalue Hessian along the path, and
fits the decay rate of its time derivative.

The default integrator is adaptive embedded Runge-Kutta 5(4) with energy
drift monitored; a fixed-step velocity-Verlet alternative is available for
long runs where symplecticity matters more than local order.  Dense output
uses cubic Hermite interpolation between accepted steps; the Hessian at
arbitrary times is the analytic Hessian evaluated at the interpolated
position.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .errors import ConfigError, DegenerateFit, StepFailure
from .potential import MatrixPotentialModel, grad_lambda, hessian_lambda

__all__ = [
    "TrajectoryRecord",
    "QdotFit",
    "integrate_trajectory",
    "action",
    "fit_qdot_decay",
    "taylor_remainder",
]


@dataclass(frozen=True)
class QdotFit:
    """Power-law fit |dQ/dt| ~ C (1+t)^(-kappa0-1).

    kappa0 = inf marks a (numerically) constant Hessian; hypothesis_met
    records whether the fitted rate clears the kappa0 > 2 requirement the
    long-time profile bounds need.
    """

    C: float
    kappa0: float
    residual: float
    hypothesis_met: bool
    degenerate: bool = False


@dataclass(frozen=True)
class TrajectoryRecord:
    """Sampled classical flow for one mode and one phase-space start.

    Samples live at the integrator's accepted steps; positions, momenta and
    action are also queryable at arbitrary times through cubic Hermite
    interpolants (`x_at`, `xi_at`, `S_at`, `Q_at`).  Immutable and safe to
    share across workers.
    """

    model: MatrixPotentialModel
    mode: str
    t_samples: np.ndarray
    x_samples: np.ndarray       # (n, d)
    xi_samples: np.ndarray      # (n, d)
    S_samples: np.ndarray       # (n,)
    E: float                    # energy at t=0
    Q_samples: np.ndarray       # (n, d, d)
    tolerance: float
    _x_spline: CubicHermiteSpline = field(repr=False, default=None)
    _xi_spline: CubicHermiteSpline = field(repr=False, default=None)
    _S_spline: CubicHermiteSpline = field(repr=False, default=None)

    @property
    def d(self) -> int:
        return self.x_samples.shape[1]

    @property
    def T(self) -> float:
        return float(self.t_samples[-1])

    def x_at(self, t):
        return self._x_spline(t)

    def xi_at(self, t):
        return self._xi_spline(t)

    def S_at(self, t):
        return self._S_spline(t)

    def Q_at(self, t):
        """Analytic Hessian of the eigenvalue at the interpolated position."""
        return hessian_lambda(self.model, np.atleast_2d(self._x_spline(t)),
                              self.mode).squeeze()

    def energy_at_samples(self) -> np.ndarray:
        lam = self.model.lambda_value(self.x_samples, self.mode)
        return 0.5 * np.sum(self.xi_samples ** 2, axis=1) + lam

    def energy_drift(self) -> float:
        """Max relative deviation of the sampled energy from its start value."""
        e = self.energy_at_samples()
        return float(np.max(np.abs(e - self.E)) / max(1.0, abs(self.E)))

    def momentum_bound(self) -> float:
        return float(np.max(np.linalg.norm(self.xi_samples, axis=1)))

    def escape_diagnostics(self, t_min: float | None = None) -> dict:
        """Escape indicators: energy margin over the eigenvalue at infinity,
        the asymptotic speed proxy min |x(t)|/t for t >= t_min, and the sign
        of d^2/dt^2 |x|^2 on the final quarter of the run."""
        lam_inf = self.model.lambda_infinity(self.mode)
        margin = self.E - lam_inf
        if t_min is None:
            t_min = max(1.0, 0.25 * self.T)
        late = self.t_samples >= t_min
        if late.any():
            radii = np.linalg.norm(self.x_samples[late], axis=1)
            speed_proxy = float(np.min(radii / self.t_samples[late]))
        else:
            speed_proxy = float("nan")
        tail = self.t_samples >= 0.75 * self.T
        # d^2/dt^2 |x|^2 = 2|xi|^2 - 2 x . grad lambda(x)
        g = grad_lambda(self.model, self.x_samples[tail], self.mode)
        acc = 2.0 * np.sum(self.xi_samples[tail] ** 2, axis=1) \
            - 2.0 * np.sum(self.x_samples[tail] * g, axis=1)
        return {
            "energy_margin": float(margin),
            "speed_proxy": speed_proxy,
            "radial_acceleration_positive": bool(np.all(acc > 0)),
            "final_radius": float(np.linalg.norm(self.x_samples[-1])),
        }

    @property
    def escaping(self) -> bool:
        diag = self.escape_diagnostics()
        return diag["energy_margin"] > 0 and diag["radial_acceleration_positive"]

    def qdot_norm_samples(self) -> tuple[np.ndarray, np.ndarray]:
        """Centered-difference Frobenius norm of dQ/dt at interior samples."""
        t = self.t_samples
        q = self.Q_samples
        dq = (q[2:] - q[:-2]) / (t[2:] - t[:-2])[:, None, None]
        return t[1:-1], np.linalg.norm(dq, axis=(1, 2))

    def dump_csv(self, path) -> None:
        """One row per accepted step: t, x, xi, S, E, ||Q||, |dQ/dt|."""
        t_mid, qdot = self.qdot_norm_samples()
        qdot_full = np.full(len(self.t_samples), np.nan)
        qdot_full[1:-1] = qdot
        e = self.energy_at_samples()
        qn = np.linalg.norm(self.Q_samples, axis=(1, 2))
        d = self.d
        header = (["t"] + [f"x{i}" for i in range(d)] + [f"xi{i}" for i in range(d)]
                  + ["S", "E", "Q_norm", "Qdot_norm"])
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for k in range(len(self.t_samples)):
                row = ([self.t_samples[k]] + list(self.x_samples[k])
                       + list(self.xi_samples[k])
                       + [self.S_samples[k], e[k], qn[k], qdot_full[k]])
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _rhs(model: MatrixPotentialModel, mode: str, d: int):
    def f(t, y):
        x = y[:d]
        xi = y[d:2 * d]
        lam = float(model.lambda_value(x[None, :], mode)[0])
        g = grad_lambda(model, x[None, :], mode)[0]
        dy = np.empty(2 * d + 1)
        dy[:d] = xi
        dy[d:2 * d] = -g
        dy[2 * d] = 0.5 * float(xi @ xi) - lam
        return dy
    return f


def integrate_trajectory(model: MatrixPotentialModel, x0, xi0, mode: str,
                         T: float, tolerance: float = 1e-12,
                         method: str = "rk45", dt: float | None = None,
                         max_step: float = np.inf) -> TrajectoryRecord:
    """Integrate the flow on [0, T] and record the sampled path.

    method "rk45" (default) uses an adaptive embedded pair at the given
    tolerance; "verlet" uses fixed-step velocity Verlet with step `dt`
    (defaults to tolerance**(1/4), which matches global O(dt^2) accuracy to
    the requested tolerance only loosely -- pass dt explicitly for long runs).
    The gap condition is enforced at every force evaluation.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    xi0 = np.atleast_1d(np.asarray(xi0, dtype=float))
    if x0.shape != xi0.shape:
        raise ConfigError("x0 and xi0 must have the same dimension")
    d = x0.size
    if T <= 0:
        raise ConfigError("T must be positive")

    if method == "rk45":
        sol = solve_ivp(_rhs(model, mode, d), (0.0, T),
                        np.concatenate([x0, xi0, [0.0]]),
                        method="RK45", rtol=tolerance, atol=tolerance,
                        max_step=max_step, dense_output=False)
        if not sol.success:
            raise StepFailure(f"trajectory integration failed: {sol.message}")
        t = sol.t
        x = sol.y[:d].T
        xi = sol.y[d:2 * d].T
        S = sol.y[2 * d]
    elif method == "verlet":
        if dt is None:
            dt = max(tolerance, 1e-12) ** 0.25
        n = max(2, int(math.ceil(T / dt)))
        dt = T / n
        t = np.linspace(0.0, T, n + 1)
        x = np.empty((n + 1, d))
        xi = np.empty((n + 1, d))
        S = np.empty(n + 1)
        x[0], xi[0], S[0] = x0, xi0, 0.0
        force = -grad_lambda(model, x0[None, :], mode)[0]
        lag_prev = 0.5 * float(xi0 @ xi0) - float(model.lambda_value(x0[None, :], mode)[0])
        for k in range(n):
            xh = xi[k] + 0.5 * dt * force
            x[k + 1] = x[k] + dt * xh
            force_new = -grad_lambda(model, x[k + 1][None, :], mode)[0]
            xi[k + 1] = xh + 0.5 * dt * force_new
            lag = 0.5 * float(xi[k + 1] @ xi[k + 1]) \
                - float(model.lambda_value(x[k + 1][None, :], mode)[0])
            S[k + 1] = S[k] + 0.5 * dt * (lag_prev + lag)
            force, lag_prev = force_new, lag
    else:
        raise ConfigError(f"unknown integrator {method!r}")

    model.check_gap(x)
    Q = hessian_lambda(model, x, mode)
    E0 = 0.5 * float(xi0 @ xi0) + float(model.lambda_value(x0[None, :], mode)[0])

    xdot = xi
    xidot = -grad_lambda(model, x, mode)
    lam = model.lambda_value(x, mode)
    Sdot = 0.5 * np.sum(xi ** 2, axis=1) - lam
    return TrajectoryRecord(
        model=model, mode=mode,
        t_samples=t, x_samples=x, xi_samples=xi, S_samples=S,
        E=E0, Q_samples=Q, tolerance=tolerance,
        _x_spline=CubicHermiteSpline(t, x, xdot, axis=0),
        _xi_spline=CubicHermiteSpline(t, xi, xidot, axis=0),
        _S_spline=CubicHermiteSpline(t, S, Sdot, axis=0),
    )


def action(record: TrajectoryRecord) -> np.ndarray:
    """Action samples accumulated alongside the flow."""
    return record.S_samples


def fit_qdot_decay(record: TrajectoryRecord, t_min: float = 1.0) -> QdotFit:
    """Least-squares fit of log |dQ/dt| against log(1+t).

    Raises DegenerateFit (with a kappa0 = +inf marker inside) when the
    Hessian is numerically constant along the path.  The returned
    hypothesis_met flag combines kappa0 > 2 with the record's escape
    diagnostics: a trapped trajectory reports its fit but is flagged.
    """
    if record.T < 10.0:
        raise ConfigError("qdot fit needs a record spanning T >= 10")
    t, qdot = record.qdot_norm_samples()
    scale = max(1.0, float(np.max(np.linalg.norm(record.Q_samples, axis=(1, 2)))))
    if float(np.max(qdot)) < 1e-13 * scale:
        raise DegenerateFit("dQ/dt is numerically zero; kappa0 = +inf")
    keep = (t >= t_min) & (qdot > 1e-300)
    if keep.sum() < 4:
        raise DegenerateFit("too few usable samples for the decay fit")
    lt = np.log(1.0 + t[keep])
    lq = np.log(qdot[keep])
    A = np.vstack([lt, np.ones_like(lt)]).T
    coef, res, _, _ = np.linalg.lstsq(A, lq, rcond=None)
    slope, intercept = coef
    kappa0 = -slope - 1.0
    residual = float(np.sqrt(res[0] / keep.sum())) if res.size else 0.0
    met = bool(kappa0 > 2.0) and record.escaping
    return QdotFit(C=float(np.exp(intercept)), kappa0=float(kappa0),
                   residual=residual, hypothesis_met=met)


def constant_qdot_fit() -> QdotFit:
    """Marker fit for an exactly constant Hessian (kappa0 = +inf)."""
    return QdotFit(C=0.0, kappa0=float("inf"), residual=0.0,
                   hypothesis_met=True, degenerate=True)


def taylor_remainder(model: MatrixPotentialModel, record: TrajectoryRecord,
                     t: float, x, mode: str | None = None) -> np.ndarray:
    """Cubic Taylor remainder of the eigenvalue about the path point x(t):

        lambda(x) - lambda(x(t)) - grad lambda(x(t)).(x - x(t))
                  - <Hess lambda(x(t)) (x - x(t)), (x - x(t))>/2
    """
    if mode is None:
        mode = record.mode
    if not 0.0 <= t <= record.T:
        raise ConfigError("t outside the record span")
    xc = np.atleast_1d(record.x_at(t))
    x = _as_points(x, xc.size)
    dx = x - xc
    lam = model.lambda_value(x, mode)
    lam0 = float(model.lambda_value(xc[None, :], mode)[0])
    g0 = grad_lambda(model, xc[None, :], mode)[0]
    q0 = hessian_lambda(model, xc[None, :], mode)[0]
    quad = 0.5 * np.einsum("...i,ij,...j->...", dx, q0, dx)
    return lam - lam0 - dx @ g0 - quad


def _as_points(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1 and x.size == d:
        x = x[None, :]
    return x
