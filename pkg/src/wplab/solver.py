"""Semiclassical time evolution by Strang splitting with closed-form substeps.

Two equations are evolved on the lab grid:

* the full 2-component system
      i eps dpsi/dt = -(eps^2/2) Lap psi + V(x) psi
                      + Lambda eps^beta |psi|^2_C2 psi,
  where the potential-plus-nonlinear substep is the exact pointwise unitary
  exp(-i dt/eps (V(x) + nl Id)): the nonlinear part commutes with V because
  it is a multiple of the identity, and |psi|^2_C2 is invariant under the
  substep flow, so freezing it costs nothing;

* a driven scalar equation on one eigenvalue surface
      i eps dg/dt = -(eps^2/2) Lap g + lambda_mode(x) g + source(t, x),
  integrated by a midpoint Duhamel increment between half propagator steps,
      g <- U(dt/2) [ U(dt/2) g + (dt / (i eps)) source(t + dt/2) ],
  which preserves second order.

Every substep is unitary, so mass conservation is limited only by roundoff
accumulation; a relative-drift gate guards against misuse.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
import scipy.fft as sfft

from .errors import ConfigError, MassDriftError
from .fields import ComplexField, GridSpec, resolution_check
from .potential import MatrixPotentialModel

__all__ = [
    "EvolutionConfig", "SourceTerm", "FullStepper", "DrivenStepper",
    "evolve_full", "evolve_driven_scalar", "pauli_exponential",
    "critical_exponent", "time_step",
]

MASS_GATE = 1e-7


def critical_exponent(d: int) -> float:
    """Nonlinearity scaling at which the envelope keeps its cubic term."""
    return 1.0 + d / 2.0


def time_step(eps: float, dt_user: float | None = None) -> float:
    """Step rule dt = min(eps/20, dt_user): ~20 samples per radian of the
    fastest potential phase keeps splitting error flat across an eps ladder."""
    dt = eps / 20.0
    if dt_user is not None:
        dt = min(dt, float(dt_user))
    return dt


@dataclass(frozen=True)
class EvolutionConfig:
    """Everything one evolution needs besides the initial field.

    beta defaults to the critical exponent for the grid dimension; overriding
    it is allowed but flagged (the approximation theory lives at beta_c).
    """

    eps: float
    Lambda: float = 0.0
    T: float = 1.0
    beta: float | None = None
    dt: float | None = None
    snapshot_times: tuple = None
    xi_max: float = 0.0
    mass_gate: float = MASS_GATE

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0:
            raise ConfigError("eps must lie in (0, 1]")
        if self.Lambda < 0:
            raise ConfigError("focusing guard: Lambda must be >= 0")
        if self.T <= 0:
            raise ConfigError("T must be positive")
        if self.snapshot_times is None:
            object.__setattr__(self, "snapshot_times",
                               tuple(np.linspace(0.0, self.T, 65)))
        else:
            st = tuple(float(t) for t in self.snapshot_times)
            if any(b <= a for a, b in zip(st, st[1:])):
                raise ConfigError("snapshot times must be strictly increasing")
            object.__setattr__(self, "snapshot_times", st)

    def resolved_beta(self, d: int) -> float:
        return critical_exponent(d) if self.beta is None else float(self.beta)

    def beta_is_critical(self, d: int) -> bool:
        return abs(self.resolved_beta(d) - critical_exponent(d)) < 1e-12

    def step(self) -> float:
        dt = time_step(self.eps, self.dt)
        if dt > self.eps:
            raise ConfigError("dt must not exceed eps (phase resolution)")
        return dt


def pauli_exponential(V_matrix, nl_phase: float, angle_scale: float) -> np.ndarray:
    """exp(-i * angle_scale * (V + nl_phase * Id)) for a real-symmetric 2x2 V.

    Uses the closed form from the Pauli decomposition
    V = rho0 Id + rho sigma_z + omega sigma_x; the m -> 0 limit degenerates
    to a pure phase.  Unitary to roundoff.
    """
    V = np.asarray(V_matrix, dtype=float)
    if V.shape != (2, 2) or abs(V[0, 1] - V[1, 0]) > 1e-12 * (1 + abs(V[0, 1])):
        raise ConfigError("pauli_exponential expects a real-symmetric 2x2 matrix")
    rho0 = 0.5 * (V[0, 0] + V[1, 1])
    rho = 0.5 * (V[0, 0] - V[1, 1])
    omega = V[0, 1]
    m = math.hypot(rho, omega)
    theta = angle_scale
    phase = np.exp(-1j * theta * (rho0 + nl_phase))
    if m == 0.0:
        return phase * np.eye(2, dtype=complex)
    c = math.cos(m * theta)
    s = math.sin(m * theta) / m
    return phase * np.array([[c - 1j * s * rho, -1j * s * omega],
                             [-1j * s * omega, c + 1j * s * rho]], dtype=complex)


class _KineticCache:
    def __init__(self, grid: GridSpec, eps: float):
        self._k2 = grid.k_squared()
        self._eps = eps
        self._cache: dict[float, np.ndarray] = {}

    def mult(self, h: float) -> np.ndarray:
        m = self._cache.get(h)
        if m is None:
            m = np.exp(-0.5j * self._eps * self._k2 * h)
            self._cache[h] = m
        return m


class FullStepper:
    """Mutable Strang engine for the 2-component system."""

    def __init__(self, psi0: ComplexField, model: MatrixPotentialModel,
                 config: EvolutionConfig):
        if psi0.components != 2:
            raise ConfigError("the full system is 2-component")
        self.grid = psi0.grid
        self.eps = config.eps
        self.Lambda = config.Lambda
        self.beta = config.resolved_beta(self.grid.d)
        self.psi = psi0.values.copy()
        self.t = 0.0
        self._kin = _KineticCache(self.grid, self.eps)
        pts = self.grid.points()
        shape = self.grid.npoints
        self._r0 = model.rho0.value(pts).reshape(shape)
        self._r = model.rho.value(pts).reshape(shape)
        self._w = model.omega.value(pts).reshape(shape)
        self._m = np.sqrt(self._r ** 2 + self._w ** 2)
        self._pot_cache: dict[float, tuple] = {}
        # nonlinear phase coefficient: Lambda eps^(beta-1) |psi|^2 per unit time
        self._nl_coef = self.Lambda * self.eps ** (self.beta - 1.0)

    def _axes(self):
        return tuple(range(1, self.grid.d + 1))

    def _kinetic(self, h: float) -> None:
        mult = self._kin.mult(h)
        self.psi = sfft.ifftn(mult[None] * sfft.fftn(self.psi, axes=self._axes()),
                              axes=self._axes())

    def _pot_fields(self, h: float) -> tuple:
        cached = self._pot_cache.get(h)
        if cached is None:
            theta = h / self.eps
            c = np.cos(self._m * theta)
            s = np.where(self._m > 0.0,
                         np.sin(self._m * theta) / np.where(self._m > 0.0, self._m, 1.0),
                         theta)
            ph = np.exp(-1j * theta * self._r0)
            a11 = ph * (c - 1j * s * self._r)
            a22 = ph * (c + 1j * s * self._r)
            a12 = ph * (-1j * s * self._w)
            cached = (a11, a12, a22)
            self._pot_cache[h] = cached
        return cached

    def _potential(self, h: float) -> None:
        a11, a12, a22 = self._pot_fields(h)
        p0, p1 = self.psi[0], self.psi[1]
        if self._nl_coef:
            dens = p0.real ** 2 + p0.imag ** 2 + p1.real ** 2 + p1.imag ** 2
            nl = np.exp(-1j * (h * self._nl_coef) * dens)
            q0 = nl * (a11 * p0 + a12 * p1)
            q1 = nl * (a12 * p0 + a22 * p1)
        else:
            q0 = a11 * p0 + a12 * p1
            q1 = a12 * p0 + a22 * p1
        self.psi = np.stack([q0, q1])

    def step(self, h: float) -> None:
        self._kinetic(0.5 * h)
        self._potential(h)
        self._kinetic(0.5 * h)
        self.t += h

    def run(self, n_steps: int, h: float) -> None:
        """n_steps of size h with interior kinetic half-steps merged."""
        if n_steps <= 0:
            return
        self._kinetic(0.5 * h)
        for _ in range(n_steps - 1):
            self._potential(h)
            self._kinetic(h)
        self._potential(h)
        self._kinetic(0.5 * h)
        self.t += n_steps * h

    def field(self) -> ComplexField:
        return ComplexField(self.grid, self.psi.copy())


class DrivenStepper:
    """Mutable engine for the driven scalar equation on one eigenvalue surface.

    The homogeneous propagator is potential-kinetic-potential Strang (one
    transform pair per half step); the inhomogeneity enters through the
    midpoint Duhamel increment.
    """

    def __init__(self, g0: ComplexField, model: MatrixPotentialModel,
                 mode: str, config: EvolutionConfig):
        if g0.components != 1:
            raise ConfigError("the driven equation is scalar")
        self.grid = g0.grid
        self.eps = config.eps
        self.g = g0.values[0].copy()
        self.t = 0.0
        self._kin = _KineticCache(self.grid, self.eps)
        pts = self.grid.points()
        self._lam = model.lambda_value(pts, mode).reshape(self.grid.npoints)
        self._pot_cache: dict[float, np.ndarray] = {}

    def _half_propagator(self, h: float) -> None:
        """Homogeneous PKP step of size h."""
        ph = self._pot_cache.get(h)
        if ph is None:
            ph = np.exp(-0.5j * (h / self.eps) * self._lam)
            self._pot_cache[h] = ph
        self.g = ph * sfft.ifftn(self._kin.mult(h) * sfft.fftn(ph * self.g))

    def step_with_source(self, h: float, source_mid: np.ndarray | None) -> None:
        self._half_propagator(0.5 * h)
        if source_mid is not None:
            self.g = self.g + (h / (1j * self.eps)) * source_mid
        self._half_propagator(0.5 * h)
        self.t += h

    def field(self) -> ComplexField:
        return ComplexField(self.grid, self.g.copy()[None])


@dataclass
class SourceTerm:
    """Driving term r(t, x) * phi(t, x) regenerated per step.

    prefactor(t) returns the bounded coefficient field r(t, .) on the grid;
    driver(t) returns the packet approximation phi(t, .).  Either may be
    None, meaning that factor is identically 1.
    """

    prefactor: object = None
    driver: object = None

    def __call__(self, t: float) -> np.ndarray | None:
        if self.prefactor is None and self.driver is None:
            return None
        out = None
        if self.prefactor is not None:
            out = self.prefactor(t)
        if self.driver is not None:
            drv = self.driver(t)
            out = drv if out is None else out * drv
        return out


def _segments(config: EvolutionConfig) -> list:
    """(t_target, n_steps, h) per snapshot segment, h dividing each span."""
    dt = config.step()
    segs = []
    t_prev = 0.0
    for t_snap in config.snapshot_times:
        span = t_snap - t_prev
        if span <= 0:
            segs.append((t_snap, 0, dt))
            t_prev = t_snap
            continue
        n = max(1, int(math.ceil(span / dt - 1e-12)))
        segs.append((t_snap, n, span / n))
        t_prev = t_snap
    return segs


def evolve_full(psi0: ComplexField, model: MatrixPotentialModel,
                config: EvolutionConfig, observer=None,
                keep_snapshots: bool = True):
    """Evolve the 2-component system, reporting at the snapshot times.

    observer(t, ComplexField) is called at every snapshot; snapshots are
    returned as a list of (t, field) unless keep_snapshots is False (then
    only the final field), so large grids are not retained by accident.
    Raises MassDriftError when the relative L2 drift exceeds the gate.
    """
    resolution_check(psi0.grid, config.eps, config.xi_max)
    stepper = FullStepper(psi0, model, config)
    mass0 = psi0.l2_norm()
    out = []

    def visit(t: float):
        f = stepper.field()
        drift = abs(f.l2_norm() - mass0) / mass0
        if drift > config.mass_gate:
            raise MassDriftError(
                f"relative mass drift {drift:.2e} > {config.mass_gate:.1e} "
                f"at t = {t:.4f}")
        if observer is not None:
            observer(t, f)
        if keep_snapshots:
            out.append((t, f))

    if config.snapshot_times[0] == 0.0:
        visit(0.0)
        segs = _segments(config)[1:]
    else:
        segs = _segments(config)
    for t_snap, n, h in segs:
        stepper.run(n, h)
        visit(t_snap)
    return out if keep_snapshots else stepper.field()


def evolve_driven_scalar(g0: ComplexField, model: MatrixPotentialModel,
                         mode: str, source: SourceTerm,
                         config: EvolutionConfig, observer=None,
                         keep_snapshots: bool = True):
    """Evolve the driven scalar equation from g0 (typically zero data).

    The source is sampled at substep midpoints, as the order-2 Duhamel
    increment requires.
    """
    resolution_check(g0.grid, config.eps, config.xi_max)
    stepper = DrivenStepper(g0, model, mode, config)
    out = []

    def visit(t: float):
        f = stepper.field()
        if observer is not None:
            observer(t, f)
        if keep_snapshots:
            out.append((t, f))

    if config.snapshot_times[0] == 0.0:
        visit(0.0)
        segs = _segments(config)[1:]
    else:
        segs = _segments(config)
    for t_snap, n, h in segs:
        for k in range(n):
            stepper.step_with_source(h, source(stepper.t + 0.5 * h))
        visit(t_snap)
    return out if keep_snapshots else stepper.field()
