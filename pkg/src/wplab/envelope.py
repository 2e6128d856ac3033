"""Envelope dynamics in the packet frame.

Solves the cubic Schrodinger equation with a time-dependent quadratic
potential

    i du/dt = -(1/2) Lap u + (1/2) <Q(t) y, y> u + Lambda |u|^2 u

by Strang splitting: kinetic half-steps are exact Fourier multipliers, the
potential-plus-nonlinear substep is an exact pointwise phase rotation with
the quadratic coefficient frozen at the substep midpoint.  Both substeps are
unitary, so mass is conserved to accumulated roundoff.

Also provides the monitored functionals: the energy E(t) (kinetic + quartic +
quadratic-potential parts), the variance V(t), and the phase-space momenta
M_k(t) = sup over |alpha|+|beta| <= k of ||y^alpha d^beta u||_L2.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
import math

import numpy as np
import scipy.fft as sfft

from .errors import BoundaryError, BoundaryLeak, ConfigError
from .fields import ComplexField, GridSpec

__all__ = [
    "ProfileState", "ProfileFunctionals", "ProfileStepper",
    "solve_profile", "functionals", "energy_identity_residual",
    "growth_study", "as_q_source",
]

LEAK_TOL = 1e-8
MARGIN_CELLS = 10


def as_q_source(q):
    """Normalize a quadratic-coefficient source to a callable t -> (d, d).

    Accepts None (zero), a constant matrix, a callable, or a trajectory
    record exposing Q_at.
    """
    if q is None:
        return lambda t: None
    if hasattr(q, "Q_at"):
        return lambda t: np.atleast_2d(q.Q_at(t))
    if callable(q):
        def wrapped(t):
            val = q(t)
            return None if val is None else np.atleast_2d(np.asarray(val, dtype=float))
        return wrapped
    mat = np.atleast_2d(np.asarray(q, dtype=float))
    return lambda t: mat


@dataclass(frozen=True)
class ProfileState:
    """Immutable snapshot of the envelope at one time."""

    u: ComplexField
    t: float
    Lambda: float
    Q_source: object

    def mass(self) -> float:
        return self.u.l2_norm()


@dataclass(frozen=True)
class ProfileFunctionals:
    E: float
    V: float
    M: np.ndarray  # M[k] for k = 0..kmax

    def M_k(self, k: int) -> float:
        return float(self.M[k])


class ProfileStepper:
    """Mutable stepping engine for the envelope equation.

    Used directly by co-evolving drivers; `solve_profile` wraps it.  Steps of
    any size are supported; multipliers are cached per step size.
    """

    def __init__(self, a: ComplexField, Q_source, Lambda: float):
        if Lambda < 0:
            raise ConfigError("focusing guard: Lambda must be >= 0")
        if a.components != 1:
            raise ConfigError("the envelope is scalar")
        self.grid = a.grid
        self.u = a.scalar().astype(complex).copy()
        self.t = 0.0
        self.Lambda = float(Lambda)
        self.Q = as_q_source(Q_source)
        self._k2 = self.grid.k_squared()
        self._kin_cache: dict[float, np.ndarray] = {}
        mesh = self.grid.meshgrid()
        d = self.grid.d
        self._ymesh = mesh
        # upper-triangle quadratic monomials for <Q y, y>
        self._quad = {(i, j): mesh[i] * mesh[j] for i in range(d) for j in range(i, d)}

    def _kinetic(self, h: float) -> None:
        mult = self._kin_cache.get(h)
        if mult is None:
            mult = np.exp(-0.5j * self._k2 * h)
            self._kin_cache[h] = mult
        self.u = sfft.ifftn(mult * sfft.fftn(self.u))

    def _quad_form(self, t: float) -> np.ndarray | None:
        Q = self.Q(t)
        if Q is None:
            return None
        d = self.grid.d
        acc = None
        for i in range(d):
            for j in range(i, d):
                w = Q[i, j] if i == j else Q[i, j] + Q[j, i]
                term = w * self._quad[(i, j)]
                acc = term if acc is None else acc + term
        return acc

    def _potential(self, h: float, t_mid: float) -> None:
        quad = self._quad_form(t_mid)
        phase = np.zeros(self.grid.npoints)
        if quad is not None:
            phase = phase + 0.5 * quad
        if self.Lambda:
            phase = phase + self.Lambda * (self.u.real ** 2 + self.u.imag ** 2)
        self.u = self.u * np.exp(-1j * h * phase)

    def step(self, h: float) -> None:
        self._kinetic(0.5 * h)
        self._potential(h, self.t + 0.5 * h)
        self._kinetic(0.5 * h)
        self.t += h

    def run(self, n_steps: int, h: float) -> None:
        """n_steps of size h with the interior kinetic half-steps merged."""
        if n_steps <= 0:
            return
        self._kinetic(0.5 * h)
        for k in range(n_steps - 1):
            self._potential(h, self.t + (k + 0.5) * h)
            self._kinetic(h)
        self._potential(h, self.t + (n_steps - 0.5) * h)
        self._kinetic(0.5 * h)
        self.t += n_steps * h

    def state(self) -> ProfileState:
        return ProfileState(u=ComplexField(self.grid, self.u.copy()[None]),
                            t=self.t, Lambda=self.Lambda, Q_source=self.Q)

    def field(self) -> ComplexField:
        return ComplexField(self.grid, self.u[None])


def solve_profile(a: ComplexField, Q_source, Lambda: float, T: float,
                  dt: float = 1e-3, snapshot_times=None,
                  leak_tol: float = LEAK_TOL) -> list[ProfileState]:
    """Evolve the envelope on [0, T]; returns states at the snapshot times.

    snapshot_times defaults to 65 uniform samples including t = 0.  The step
    is shrunk so snapshots land exactly on step boundaries.  Mass near the
    box boundary is monitored at every snapshot (BoundaryLeak above
    leak_tol); the initial envelope must already be clean there.
    """
    if T <= 0:
        raise ConfigError("T must be positive")
    if snapshot_times is None:
        snapshot_times = np.linspace(0.0, T, 65)
    snapshot_times = np.asarray(snapshot_times, dtype=float)
    leak0 = a.boundary_mass(MARGIN_CELLS)
    if leak0 > leak_tol:
        raise BoundaryError(
            f"initial envelope carries {leak0:.2e} mass near the boundary")

    stepper = ProfileStepper(a, Q_source, Lambda)
    states = []
    t_prev = 0.0
    if snapshot_times[0] == 0.0:
        states.append(stepper.state())
        snapshot_times = snapshot_times[1:]
    for t_snap in snapshot_times:
        span = t_snap - t_prev
        n = max(1, int(math.ceil(span / dt - 1e-12)))
        stepper.run(n, span / n)
        state = stepper.state()
        leak = state.u.boundary_mass(MARGIN_CELLS)
        if leak > leak_tol:
            raise BoundaryLeak(
                f"boundary mass {leak:.2e} > {leak_tol:.1e} at t = {t_snap:.4f}")
        states.append(state)
        t_prev = t_snap
    return states


# ---------------------------------------------------------------------------
# Functionals
# ---------------------------------------------------------------------------

def _multi_indices(d: int, max_order: int):
    for beta in product(range(max_order + 1), repeat=d):
        if sum(beta) <= max_order:
            yield beta


def _grad_sq_norm(u: np.ndarray, grid: GridSpec) -> float:
    """||grad u||_L2^2 with spectral derivatives (Parseval)."""
    uhat = sfft.fftn(u)
    total = 0.0
    for ax in range(grid.d):
        k = grid.wavenumbers(ax)
        shape = [1] * grid.d
        shape[ax] = k.size
        total += np.sum((k.reshape(shape) ** 2) * (uhat.real ** 2 + uhat.imag ** 2))
    return float(total * grid.cell_volume / grid.size)


def momenta(u_field: ComplexField, kmax: int = 6) -> np.ndarray:
    """M[k] = max over |alpha|+|beta| <= k of ||y^alpha d^beta u||_L2."""
    grid = u_field.grid
    u = u_field.scalar()
    d = grid.d
    mesh = grid.meshgrid()
    dv = grid.cell_volume
    M = np.zeros(kmax + 1)
    uhat = sfft.fftn(u)
    for beta in _multi_indices(d, kmax):
        b = sum(beta)
        mult = np.ones(grid.npoints, dtype=complex)
        for ax, bi in enumerate(beta):
            if bi:
                k = grid.wavenumbers(ax)
                shape = [1] * d
                shape[ax] = k.size
                mult = mult * (1j * k.reshape(shape)) ** bi
        du = sfft.ifftn(mult * uhat) if b else u
        du2 = du.real ** 2 + du.imag ** 2
        for alpha in _multi_indices(d, kmax - b):
            a_ord = sum(alpha)
            w = np.ones(grid.npoints)
            for ax, ai in enumerate(alpha):
                if ai:
                    w = w * mesh[ax] ** (2 * ai)
            val = math.sqrt(float(np.sum(w * du2) * dv))
            k_tot = a_ord + b
            M[k_tot:] = np.maximum(M[k_tot:], val)
    return M


def functionals(state: ProfileState, kmax: int = 6) -> ProfileFunctionals:
    """Energy, variance and momenta of one envelope snapshot.

    The quartic term carries coefficient Lambda/2: that is the coefficient
    for which the energy is the Hamiltonian of the envelope flow, so it is
    exactly conserved for a frozen quadratic coefficient and satisfies
    dE/dt = (1/2) int <dQ/dt y, y> |u|^2 in general (variation of |u|^4 with
    respect to the conjugate field gives 2|u|^2 u).
    """
    grid = state.u.grid
    u = state.u.scalar()
    dens = u.real ** 2 + u.imag ** 2
    dv = grid.cell_volume
    E = 0.5 * _grad_sq_norm(u, grid)
    if state.Lambda:
        E += 0.5 * state.Lambda * float(np.sum(dens ** 2) * dv)
    Q = as_q_source(state.Q_source)(state.t)
    if Q is not None:
        mesh = grid.meshgrid()
        quad = sum(Q[i, j] * mesh[i] * mesh[j]
                   for i in range(grid.d) for j in range(grid.d))
        E += 0.5 * float(np.sum(quad * dens) * dv)
    mesh = grid.meshgrid()
    y2 = sum(m * m for m in mesh)
    V = 0.5 * float(np.sum(y2 * dens) * dv)
    return ProfileFunctionals(E=float(E), V=float(V), M=momenta(state.u, kmax))


def energy_identity_residual(states: list, Q_source, dQ_step: float = 1e-5
                             ) -> np.ndarray:
    """|centered-difference dE/dt - (1/2) int <dQ/dt y, y> |u|^2| per interior
    snapshot of a uniformly spaced state sequence."""
    if len(states) < 3:
        raise ConfigError("need at least 3 consecutive states")
    ts = np.array([s.t for s in states])
    dt = np.diff(ts)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12):
        raise ConfigError("states must be uniformly spaced in time")
    q = as_q_source(Q_source)
    grid = states[0].u.grid
    mesh = grid.meshgrid()
    dv = grid.cell_volume
    E = np.array([functionals(s, kmax=0).E for s in states])
    out = np.empty(len(states) - 2)
    for j in range(1, len(states) - 1):
        dEdt = (E[j + 1] - E[j - 1]) / (ts[j + 1] - ts[j - 1])
        qp = q(states[j].t + dQ_step)
        qm = q(states[j].t - dQ_step)
        if qp is None:
            rhs = 0.0
        else:
            qdot = (qp - qm) / (2.0 * dQ_step)
            quad = sum(qdot[a, b] * mesh[a] * mesh[b]
                       for a in range(grid.d) for b in range(grid.d))
            rhs = 0.5 * float(np.sum(quad * states[j].u.abs2()) * dv)
        out[j - 1] = abs(dEdt - rhs)
    return out


# ---------------------------------------------------------------------------
# Growth study
# ---------------------------------------------------------------------------

@dataclass
class GrowthReport:
    """Momenta table over time plus soft growth checks.

    Asserts nothing: gradient boundedness and the polynomial bound on the
    first momentum are reported as fitted constants, with the decay
    hypothesis flag carried alongside (results are only meaningful when the
    quadratic coefficient decays fast enough, kappa0 > 2).
    """

    t: np.ndarray
    M: np.ndarray             # (n_times, kmax+1)
    mass: np.ndarray
    boundary_leak: np.ndarray
    grad_norm: np.ndarray
    first_momentum: np.ndarray
    grad_sup: float
    growth_rate: float        # fitted d log M_kmax / dt over the late window
    momentum_poly_order: float
    hypothesis_met: bool

    def table(self) -> np.ndarray:
        return np.column_stack([self.t, self.mass, self.grad_norm,
                                self.first_momentum, self.M])


def growth_study(a: ComplexField, Q_source, Lambda: float, T: float,
                 dt: float = 1e-3, n_samples: int = 41, kmax: int = 6,
                 qdot_fit=None, leak_tol: float = 1e-6) -> GrowthReport:
    """Track M_k(t) for k <= kmax and fit the growth rate.

    The boundary-leak series is reported next to the momenta: on a periodic
    truncation the momenta are faithful only while the leak is negligible.
    """
    times = np.linspace(0.0, T, n_samples)
    states = solve_profile(a, Q_source, Lambda, T, dt=dt,
                           snapshot_times=times, leak_tol=leak_tol)
    M = np.stack([momenta(s.u, kmax) for s in states])
    mass = np.array([s.mass() for s in states])
    leak = np.array([s.u.boundary_mass(MARGIN_CELLS) for s in states])
    grad = np.array([math.sqrt(_grad_sq_norm(s.u.scalar(), s.u.grid)) for s in states])
    mesh = states[0].u.grid.meshgrid()
    y2 = sum(m * m for m in mesh)
    dv = states[0].u.grid.cell_volume
    yu = np.array([math.sqrt(float(np.sum(y2 * s.u.abs2()) * dv)) for s in states])

    late = times >= 0.5 * T
    lm = np.log(np.maximum(M[late, kmax], 1e-300))
    growth_rate = float(np.polyfit(times[late], lm, 1)[0]) if late.sum() >= 3 else float("nan")
    ly = np.log(np.maximum(yu[late], 1e-300))
    lt = np.log(1.0 + times[late])
    poly_order = float(np.polyfit(lt, ly, 1)[0]) if late.sum() >= 3 else float("nan")

    met = bool(qdot_fit.hypothesis_met) if qdot_fit is not None else False
    return GrowthReport(t=times, M=M, mass=mass, boundary_leak=leak,
                        grad_norm=grad, first_momentum=yu,
                        grad_sup=float(np.max(grad)), growth_rate=growth_rate,
                        momentum_poly_order=poly_order, hypothesis_met=met)


def profile_csv(states: list, path, kmax: int = 6) -> None:
    """CSV dump (t, mass, E, V, M_1..M_kmax) for a state sequence."""
    with open(path, "w") as fh:
        fh.write("t,mass,E,V," + ",".join(f"M{k}" for k in range(1, kmax + 1)) + "\n")
        for s in states:
            fn = functionals(s, kmax)
            row = [s.t, s.mass(), fn.E, fn.V] + [fn.M[k] for k in range(1, kmax + 1)]
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
