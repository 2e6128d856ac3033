"""Periodic grids, discrete wavefunctions, scaled norms and packet assembly.

Everything downstream sits on a uniform periodic box [-L_i, L_i)^d (optionally
recentered), with spectral derivatives and trigonometric resampling.  The one
correctness gate that the whole laboratory leans on lives here: a grid must
resolve both the packet width sqrt(eps) and the phase scale eps before any
field is built on it.
"""

from __future__ import annotations

from dataclasses import dataclass
import struct

import numpy as np
import scipy.fft as sfft
from scipy.signal import CZT

from .errors import (BoundaryError, ConfigError, InterpolationError,
                     ResolutionError)
from .potential import MatrixPotentialModel

__all__ = [
    "GridSpec", "ComplexField", "PacketParams",
    "build_wavepacket", "build_ansatz", "polarize", "mode_project",
    "h_eps_norm", "lebesgue_norm", "resolution_check",
    "write_snapshot", "read_snapshot",
]

SNAPSHOT_MAGIC = b"WPLB1"


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic tensor grid.

    halfwidths L_i and power-of-two point counts N_i per axis; node j on axis
    i sits at center_i - L_i + j * (2 L_i / N_i).  The optional center keeps
    point counts down when a trajectory drifts far from the origin.
    """

    d: int
    halfwidths: tuple
    npoints: tuple
    center: tuple = None
    periodic: bool = True

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ConfigError("grid dimension must be 1, 2 or 3")
        hw = tuple(float(h) for h in np.atleast_1d(self.halfwidths))
        np_ = tuple(int(n) for n in np.atleast_1d(self.npoints))
        if len(hw) == 1:
            hw = hw * self.d
        if len(np_) == 1:
            np_ = np_ * self.d
        if len(hw) != self.d or len(np_) != self.d:
            raise ConfigError("halfwidths/npoints must match the dimension")
        for n in np_:
            if n < 16 or (n & (n - 1)) != 0:
                raise ConfigError(f"point count {n} must be a power of two >= 16")
        c = self.center
        c = (0.0,) * self.d if c is None else tuple(float(v) for v in np.atleast_1d(c))
        if len(c) == 1:
            c = c * self.d
        object.__setattr__(self, "halfwidths", hw)
        object.__setattr__(self, "npoints", np_)
        object.__setattr__(self, "center", c)

    @property
    def spacings(self) -> tuple:
        return tuple(2.0 * L / n for L, n in zip(self.halfwidths, self.npoints))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    @property
    def size(self) -> int:
        return int(np.prod(self.npoints))

    def axis(self, i: int) -> np.ndarray:
        L, n, c = self.halfwidths[i], self.npoints[i], self.center[i]
        return c - L + (2.0 * L / n) * np.arange(n)

    def axes(self) -> list:
        return [self.axis(i) for i in range(self.d)]

    def meshgrid(self) -> list:
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self) -> np.ndarray:
        """All nodes, shape (N_total, d)."""
        mesh = self.meshgrid()
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def wavenumbers(self, i: int) -> np.ndarray:
        return 2.0 * np.pi * sfft.fftfreq(self.npoints[i], d=self.spacings[i])

    def k_squared(self) -> np.ndarray:
        ks = [self.wavenumbers(i) for i in range(self.d)]
        mesh = np.meshgrid(*ks, indexing="ij")
        return sum(m * m for m in mesh)


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

@dataclass
class ComplexField:
    """Discrete 1- or 2-component wavefunction on a GridSpec.

    values has shape (components, N_1, ..., N_d) and is complex128.
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == self.grid.d:
            v = v[None]
        if v.shape[1:] != self.grid.npoints or v.shape[0] not in (1, 2):
            raise ConfigError(
                f"field shape {v.shape} does not match grid {self.grid.npoints}")
        if not np.all(np.isfinite(v)):
            raise ConfigError("field contains non-finite samples")
        self.values = v

    @property
    def components(self) -> int:
        return self.values.shape[0]

    def copy(self) -> "ComplexField":
        return ComplexField(self.grid, self.values.copy())

    def scalar(self) -> np.ndarray:
        if self.components != 1:
            raise ConfigError("expected a scalar field")
        return self.values[0]

    def abs2(self) -> np.ndarray:
        """Pointwise squared vector magnitude."""
        return np.sum(self.values.real ** 2 + self.values.imag ** 2, axis=0)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.abs2()) * self.grid.cell_volume))

    def inner(self, other: "ComplexField") -> complex:
        """L2 inner product, conjugate-linear in `other`."""
        return complex(np.sum(self.values * np.conj(other.values))
                       * self.grid.cell_volume)

    def boundary_mass(self, margin_cells: int = 10) -> float:
        """L2 mass within margin_cells of any box face (squared norm)."""
        mask = np.zeros(self.grid.npoints, dtype=bool)
        for ax in range(self.grid.d):
            idx = [slice(None)] * self.grid.d
            idx[ax] = slice(0, margin_cells)
            mask[tuple(idx)] = True
            idx[ax] = slice(-margin_cells, None)
            mask[tuple(idx)] = True
        return float(np.sum(self.abs2()[mask]) * self.grid.cell_volume)


# ---------------------------------------------------------------------------
# Envelopes and packets
# ---------------------------------------------------------------------------

def _gaussian_envelope(y2: np.ndarray, d: int, width: float) -> np.ndarray:
    return (np.pi * width ** 2) ** (-d / 4.0) * np.exp(-y2 / (2.0 * width ** 2))


ENVELOPES = {"gaussian": _gaussian_envelope}


@dataclass(frozen=True)
class PacketParams:
    """Phase-space location, envelope and polarization of one packet."""

    x0: tuple
    xi0: tuple
    envelope: str = "gaussian"
    envelope_width: float = 1.0
    mode: str = "+"
    amplitude: complex = 1.0

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))
        object.__setattr__(self, "xi0", tuple(float(v) for v in np.atleast_1d(self.xi0)))
        if len(self.x0) != len(self.xi0):
            raise ConfigError("x0 and xi0 must share a dimension")
        if self.envelope not in ENVELOPES:
            raise ConfigError(f"unknown envelope {self.envelope!r}")

    @property
    def d(self) -> int:
        return len(self.x0)

    def envelope_values(self, y: list) -> np.ndarray:
        """Evaluate the (unit-L2) envelope on meshgrid arrays y_1..y_d."""
        y2 = sum(v * v for v in y)
        a = ENVELOPES[self.envelope](y2, self.d, self.envelope_width)
        return self.amplitude * a


def resolution_check(grid: GridSpec, eps: float, xi_max: float) -> None:
    """Central grid/eps compatibility gate.

    Both scales must be resolved: the packet width sqrt(eps) needs at least
    4 cells, and the eps-scale phase with momenta up to xi_max needs
    dx <= eps / (4 |xi|_max + 1).  Raises ResolutionError naming the violated
    inequality.
    """
    if not 0.0 < eps <= 1.0:
        raise ConfigError("eps must lie in (0, 1]")
    dx = max(grid.spacings)
    width_bound = np.sqrt(eps) / 4.0
    phase_bound = eps / (4.0 * abs(xi_max) + 1.0)
    if dx > width_bound:
        raise ResolutionError(
            f"dx = {dx:.3e} > sqrt(eps)/4 = {width_bound:.3e}: "
            "packet width unresolved")
    if dx > phase_bound:
        raise ResolutionError(
            f"dx = {dx:.3e} > eps/(4|xi|+1) = {phase_bound:.3e}: "
            "phase oscillation unresolved")


def _boundary_distance(grid: GridSpec, x0) -> float:
    return min(L - abs(float(x) - c)
               for L, c, x in zip(grid.halfwidths, grid.center, x0))


def build_wavepacket(params: PacketParams, eps: float, grid: GridSpec) -> ComplexField:
    """Scalar coherent-state field

        eps^(-d/4) exp(i xi0.(x-x0)/eps) a((x-x0)/sqrt(eps))

    on the grid nodes.  Enforces the resolution gate at the packet's own
    momentum and keeps the center at least 6 sqrt(eps) from the boundary.
    """
    if params.d != grid.d:
        raise ConfigError("packet and grid dimension differ")
    resolution_check(grid, eps, float(np.linalg.norm(params.xi0)))
    root = np.sqrt(eps)
    dist = _boundary_distance(grid, params.x0)
    if dist < 6.0 * root:
        raise BoundaryError(
            f"packet center within {dist:.3f} of the boundary "
            f"(< 6 sqrt(eps) = {6 * root:.3f})")
    mesh = grid.meshgrid()
    y = [(m - x0i) / root for m, x0i in zip(mesh, params.x0)]
    phase = sum(xi * (m - x0i) for xi, m, x0i in zip(params.xi0, mesh, params.x0))
    values = (eps ** (-grid.d / 4.0) * params.envelope_values(y)
              * np.exp(1j * phase / eps))
    return ComplexField(grid, values[None])


# ---------------------------------------------------------------------------
# Trigonometric resampling (envelope grid -> lab grid)
# ---------------------------------------------------------------------------

def _extend_nyquist(coeffs: np.ndarray, axis: int, n: int) -> np.ndarray:
    """Split the +-N/2 coefficient symmetrically along one axis (N -> N+1).

    Keeps the trigonometric interpolant real for real data and symmetric
    under reflection."""
    take = np.concatenate([np.arange(0, n // 2 + 1), np.arange(n // 2, n)])
    out = np.take(coeffs, take, axis=axis)
    sl = [slice(None)] * out.ndim
    sl[axis] = n // 2
    out[tuple(sl)] *= 0.5
    sl[axis] = n // 2 + 1
    out[tuple(sl)] *= 0.5
    return out


class EnvelopeInterpolator:
    """Evaluates a periodic envelope field at shifted, rescaled lab nodes.

    The target points y*_m = (x_m - shift)/scale are uniformly spaced per
    axis, so evaluating the trigonometric interpolant there is a chirp-Z
    transform: O((N_env + N_lab) log) per axis via pre-planned Bluestein,
    with the shift entering only through a per-coefficient phase.  Points
    falling outside the envelope box map to zero instead of wrapping; the
    envelope is Schwartz-class there by construction.
    """

    SPECTRAL_TAIL_TOL = 1e-8

    def __init__(self, env_grid: GridSpec, lab_grid: GridSpec, scale: float):
        if env_grid.d != lab_grid.d:
            raise ConfigError("envelope and lab grids must share a dimension")
        self.env_grid = env_grid
        self.lab_grid = lab_grid
        self.scale = float(scale)
        self._k_asc = []       # ascending wavenumbers, length N+1 per axis
        self._reorder = []     # extended-FFT order -> ascending order
        self._plans = []
        self._post = []        # per-axis postfactor q^(-(N/2) m)
        for i in range(env_grid.d):
            n = env_grid.npoints[i]
            L = env_grid.halfwidths[i]
            idx_asc = np.arange(-n // 2, n // 2 + 1)
            self._k_asc.append(idx_asc * (np.pi / L))
            self._reorder.append(np.concatenate([np.arange(n // 2 + 1, n + 1),
                                                 np.arange(0, n // 2 + 1)]))
            q = np.exp(1j * np.pi * lab_grid.spacings[i] / (scale * L))
            self._plans.append(CZT(n=n + 1, m=lab_grid.npoints[i], w=q, a=1.0))
            m = np.arange(lab_grid.npoints[i])
            self._post.append(np.exp(-1j * np.pi * (n // 2)
                                     * lab_grid.spacings[i] * m / (scale * L)))

    def _check_resolved(self, c: np.ndarray) -> None:
        """The envelope grid is 'too coarse' exactly when the envelope carries
        content at its own resolution limit: gate on the top-quarter spectral
        shell relative to the peak coefficient."""
        peak = float(np.max(np.abs(c)))
        if peak == 0.0:
            return
        tail = 0.0
        for ax in range(self.env_grid.d):
            n = self.env_grid.npoints[ax]
            sl = [slice(None)] * self.env_grid.d
            sl[ax] = slice(3 * n // 8, 5 * n // 8 + 1)
            tail = max(tail, float(np.max(np.abs(c[tuple(sl)]))))
        if tail > self.SPECTRAL_TAIL_TOL * peak:
            raise InterpolationError(
                f"envelope grid too coarse for its content: top-quarter "
                f"spectral shell at {tail / peak:.2e} of peak "
                f"(> {self.SPECTRAL_TAIL_TOL:.0e})")

    def __call__(self, env_values: np.ndarray, shift) -> np.ndarray:
        """Evaluate at ((x - shift)/scale) for every lab node; zero outside."""
        shift = np.atleast_1d(np.asarray(shift, dtype=float))
        d = self.env_grid.d
        coeffs = sfft.fftn(env_values) / self.env_grid.size
        self._check_resolved(coeffs)
        out = coeffs
        for ax in range(d):
            out = _extend_nyquist(out, ax, self.env_grid.npoints[ax])
            out = np.take(out, self._reorder[ax], axis=ax)
            # u(y) = sum c_k exp(i k (y - y_first)), y = (x - shift)/scale;
            # fold everything but the uniform progression into the coefficients
            y_first = self.env_grid.center[ax] - self.env_grid.halfwidths[ax]
            x0 = self.lab_grid.axis(ax)[0]
            phase = np.exp(1j * self._k_asc[ax]
                           * ((x0 - shift[ax]) / self.scale - y_first))
            shape = [1] * d
            shape[ax] = phase.size
            out = out * phase.reshape(shape)
            out = self._plans[ax](out, axis=ax)
            shape[ax] = self._post[ax].size
            out = out * self._post[ax].reshape(shape)
        for ax in range(d):
            y = (self.lab_grid.axis(ax) - shift[ax]) / self.scale \
                - self.env_grid.center[ax]
            inside = np.abs(y) <= self.env_grid.halfwidths[ax]
            sl = [None] * d
            sl[ax] = slice(None)
            out = out * inside[tuple(sl)]
        return out


def build_ansatz(u_t: ComplexField, record, eps: float, t: float,
                 grid: GridSpec, interpolator: EnvelopeInterpolator | None = None
                 ) -> ComplexField:
    """Scalar packet approximation at time t,

        eps^(-d/4) u(t, (x - x(t))/sqrt(eps))
                 * exp(i (S(t) + xi(t).(x - x(t))) / eps)

    with the envelope resampled spectrally from its own grid onto the lab
    grid.  The trajectory record supplies x(t), xi(t), S(t).
    """
    root = np.sqrt(eps)
    xt = np.atleast_1d(record.x_at(t))
    xit = np.atleast_1d(record.xi_at(t))
    St = float(record.S_at(t))
    resolution_check(grid, eps, float(np.linalg.norm(xit)))
    for i in range(grid.d):
        if u_t.grid.halfwidths[i] * root > grid.halfwidths[i] * (1 + 1e-12):
            raise ResolutionError(
                f"axis {i}: envelope box maps outside the lab box "
                f"(L_y sqrt(eps) = {u_t.grid.halfwidths[i] * root:.3f} > "
                f"L = {grid.halfwidths[i]:.3f})")
    if interpolator is None:
        interpolator = EnvelopeInterpolator(u_t.grid, grid, root)
    u_on_lab = interpolator(u_t.scalar(), xt)
    mesh = grid.meshgrid()
    phase = St + sum(xi * (m - xc) for xi, m, xc in zip(xit, mesh, xt))
    values = eps ** (-grid.d / 4.0) * u_on_lab * np.exp(1j * phase / eps)
    return ComplexField(grid, values[None])


# ---------------------------------------------------------------------------
# Polarization and projections
# ---------------------------------------------------------------------------

def polarize(scalar: ComplexField, model: MatrixPotentialModel, mode: str) -> ComplexField:
    """Promote a scalar field to a 2-component one along the eigenvector field."""
    chi = model.chi(scalar.grid.points(), mode).T.reshape((2,) + scalar.grid.npoints)
    return ComplexField(scalar.grid, chi * scalar.scalar()[None])


def mode_project(field2: ComplexField, model: MatrixPotentialModel, mode: str) -> ComplexField:
    """Pointwise component of a 2-component field along the eigenvector field."""
    if field2.components != 2:
        raise ConfigError("mode_project expects a 2-component field")
    chi = model.chi(field2.grid.points(), mode).T.reshape((2,) + field2.grid.npoints)
    return ComplexField(field2.grid, np.sum(field2.values * chi, axis=0)[None])


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

def _spectral_weight(grid: GridSpec, eps: float, p: int) -> np.ndarray:
    """Multiplier sum over multi-indices |alpha| <= p of eps^2|alpha| k^(2 alpha)."""
    ks = [grid.wavenumbers(i) for i in range(grid.d)]
    mesh = np.meshgrid(*ks, indexing="ij")
    w = np.ones(grid.npoints)
    if p >= 1:
        for m in mesh:
            w = w + (eps * m) ** 2
    if p >= 2:
        for i, mi in enumerate(mesh):
            w = w + (eps ** 2 * mi * mi) ** 2
            for j in range(i + 1, grid.d):
                w = w + (eps ** 2 * mi * mesh[j]) ** 2
    return w


def h_eps_norm(f: ComplexField, eps: float, p: int = 1) -> float:
    """Semiclassically scaled Sobolev norm

        ( sum_{|alpha| <= p} || eps^|alpha| d^alpha f ||_L2^2 )^(1/2)

    with spectral derivatives; components of a 2-component field are summed.
    """
    if p not in (0, 1, 2):
        raise ConfigError("h_eps_norm supports p in {0, 1, 2}")
    if p == 0:
        return f.l2_norm()
    w = _spectral_weight(f.grid, eps, p)
    total = 0.0
    fhat = sfft.fftn(f.values, axes=tuple(range(1, f.grid.d + 1)))
    total = np.sum(w[None] * (fhat.real ** 2 + fhat.imag ** 2))
    total *= f.grid.cell_volume / f.grid.size
    return float(np.sqrt(total))


def lebesgue_norm(f: ComplexField, q) -> float:
    """Quadrature-weighted L^q norm of the pointwise vector magnitude."""
    mag2 = f.abs2()
    if q == np.inf or q == "inf":
        return float(np.sqrt(np.max(mag2)))
    q = float(q)
    if q not in (2.0, 4.0):
        raise ConfigError("lebesgue_norm supports q in {2, 4, inf}")
    return float((np.sum(mag2 ** (q / 2.0)) * f.grid.cell_volume) ** (1.0 / q))


def spectral_gradient(f: ComplexField, axis: int) -> ComplexField:
    """Exact derivative of the trigonometric interpolant along one axis."""
    k = f.grid.wavenumbers(axis)
    shape = [1] * (f.grid.d + 1)
    shape[axis + 1] = k.size
    fhat = sfft.fft(f.values, axis=axis + 1)
    out = sfft.ifft(1j * k.reshape(shape) * fhat, axis=axis + 1)
    return ComplexField(f.grid, out)


# ---------------------------------------------------------------------------
# Snapshot file format
# ---------------------------------------------------------------------------

def write_snapshot(f: ComplexField, eps: float, t: float, path) -> None:
    """Binary snapshot: magic, then d, components, N_i, L_i (+ center_i),
    eps, t as 64-bit little-endian values, then complex samples interleaved
    (re, im) float64 LE, grid-major, component-contiguous."""
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<2q", g.d, f.components))
        fh.write(struct.pack(f"<{g.d}q", *g.npoints))
        fh.write(struct.pack(f"<{g.d}d", *g.halfwidths))
        fh.write(struct.pack(f"<{g.d}d", *g.center))
        fh.write(struct.pack("<2d", eps, t))
        data = np.ascontiguousarray(f.values).astype("<c16")
        fh.write(data.tobytes())


def read_snapshot(path) -> tuple[ComplexField, float, float]:
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != SNAPSHOT_MAGIC:
            raise ConfigError(f"bad snapshot magic {magic!r}")
        d, comps = struct.unpack("<2q", fh.read(16))
        npts = struct.unpack(f"<{d}q", fh.read(8 * d))
        hws = struct.unpack(f"<{d}d", fh.read(8 * d))
        center = struct.unpack(f"<{d}d", fh.read(8 * d))
        eps, t = struct.unpack("<2d", fh.read(16))
        count = comps * int(np.prod(npts))
        data = np.frombuffer(fh.read(16 * count), dtype="<c16").astype(complex)
    grid = GridSpec(d=d, halfwidths=hws, npoints=npts, center=center)
    return ComplexField(grid, data.reshape((comps,) + tuple(npts))), eps, t
