"""Two-level matrix potentials with analytic derivatives.

A potential is assembled from three smooth scalar coefficient fields on R^d:
an isotropic shift ``rho0``, a diagonal asymmetry ``rho`` and an off-diagonal
coupling ``omega``::

    V(x) = rho0(x) * Id + [[rho(x), omega(x)], [omega(x), -rho(x)]]

Its eigenvalues are ``rho0 +- sqrt(rho^2 + omega^2)``.  As long as
``rho^2 + omega^2`` stays away from zero the levels never cross and a single
smooth eigenvector gauge exists globally: with ``alpha = atan2(omega, rho)``,

    chi_plus  = (cos(alpha/2), sin(alpha/2))
    chi_minus = (-sin(alpha/2), cos(alpha/2))

The half-angle form makes the eigenvector differential analytic,
``d chi_plus = (grad alpha / 2) chi_minus``, which downstream modules rely on.
Built-in models keep ``(rho, omega)`` in the right half plane (or the coupling
angle strictly inside (-pi, pi)), so the principal branch of atan2 is smooth
everywhere.

All evaluations are vectorized: points have shape ``(..., d)``, values shape
``(...)``, gradients ``(..., d)`` and Hessians ``(..., d, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConfigError, GapViolation

__all__ = [
    "MatrixPotentialModel",
    "EigenData",
    "AuditReport",
    "eval_V",
    "eigen",
    "grad_lambda",
    "hessian_lambda",
    "d_chi",
    "assumption_audit",
    "bump_coupling_model",
    "rotation_coupling_model",
    "synthetic_quadratic_model",
    "constant_diagonal_model",
    "make_model",
]

_MODE_SIGN = {"+": 1.0, "-": -1.0}


def _sign(mode: str) -> float:
    try:
        return _MODE_SIGN[mode]
    except KeyError:
        raise ConfigError(f"mode must be '+' or '-', got {mode!r}") from None


def _pts(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    return x


# ---------------------------------------------------------------------------
# Scalar coefficient fields
# ---------------------------------------------------------------------------

class Constant:
    """Constant scalar field."""

    def __init__(self, c: float):
        self.c = float(c)

    def value(self, x):
        x = _pts(x)
        return np.full(x.shape[:-1], self.c)

    def grad(self, x):
        x = _pts(x)
        return np.zeros(x.shape)

    def hess(self, x):
        x = _pts(x)
        d = x.shape[-1]
        return np.zeros(x.shape[:-1] + (d, d))


class RadialPower:
    """c * <x>^(-p) with <x> = sqrt(1 + |x|^2)."""

    def __init__(self, c: float, p: float):
        if p <= 0:
            raise ConfigError("decay exponent p must be positive")
        self.c = float(c)
        self.p = float(p)

    def value(self, x):
        x = _pts(x)
        b = 1.0 + np.sum(x * x, axis=-1)
        return self.c * b ** (-self.p / 2.0)

    def grad(self, x):
        x = _pts(x)
        b = 1.0 + np.sum(x * x, axis=-1)
        return -self.c * self.p * b[..., None] ** (-self.p / 2.0 - 1.0) * x

    def hess(self, x):
        x = _pts(x)
        d = x.shape[-1]
        b = 1.0 + np.sum(x * x, axis=-1)
        eye = np.eye(d)
        t1 = -self.c * self.p * b[..., None, None] ** (-self.p / 2.0 - 1.0) * eye
        t2 = (self.c * self.p * (self.p + 2.0)
              * b[..., None, None] ** (-self.p / 2.0 - 2.0)
              * x[..., :, None] * x[..., None, :])
        return t1 + t2


class Bump:
    """Compactly supported bump h * exp(1 - R^2/(R^2 - |x|^2)) on |x| < R.

    Values and all derivatives are clamped to exactly zero once the exponent
    drops below the range of float64; the clamp happens where the true value
    is < 1e-300, so no test quantity can see it.
    """

    def __init__(self, height: float, radius: float):
        if radius <= 0:
            raise ConfigError("bump radius must be positive")
        self.h = float(height)
        self.R = float(radius)
        # keep 1 - R^2/(R^2 - s) >= -700 so exp() stays in range
        self._s_max = self.R ** 2 * (1.0 - 1.0 / 701.0)

    def _parts(self, x):
        x = _pts(x)
        s = np.sum(x * x, axis=-1)
        inside = s < self._s_max
        s_safe = np.where(inside, s, 0.0)
        den = self.R ** 2 - s_safe
        g = 1.0 - self.R ** 2 / den
        val = np.where(inside, self.h * np.exp(g), 0.0)
        gp = np.where(inside, -self.R ** 2 / den ** 2, 0.0)
        gpp = np.where(inside, -2.0 * self.R ** 2 / den ** 3, 0.0)
        return x, val, gp, gpp

    def value(self, x):
        return self._parts(x)[1]

    def grad(self, x):
        x, val, gp, _ = self._parts(x)
        return 2.0 * (val * gp)[..., None] * x

    def hess(self, x):
        x, val, gp, gpp = self._parts(x)
        d = x.shape[-1]
        eye = np.eye(d)
        quad = (gp * gp + gpp) * val
        return (4.0 * quad[..., None, None] * x[..., :, None] * x[..., None, :]
                + 2.0 * (val * gp)[..., None, None] * eye)


class HarmonicBowl:
    """|x|^2 / 2 + offset (synthetic, used by oracle models only)."""

    def __init__(self, offset: float = 0.0):
        self.offset = float(offset)

    def value(self, x):
        x = _pts(x)
        return 0.5 * np.sum(x * x, axis=-1) + self.offset

    def grad(self, x):
        return _pts(x).copy()

    def hess(self, x):
        x = _pts(x)
        d = x.shape[-1]
        return np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d)).copy()


class _RotatedDecay:
    """<x>^(-p) * trig(theta(x)) with a bump-shaped rotation angle theta.

    trig is cos for the diagonal coefficient, sin for the coupling.
    """

    def __init__(self, p: float, angle: Bump, use_sin: bool):
        self.f = RadialPower(1.0, p)
        self.angle = angle
        self.use_sin = use_sin

    def _trig(self, th):
        return (np.sin(th), np.cos(th)) if self.use_sin else (np.cos(th), -np.sin(th))

    def value(self, x):
        th = self.angle.value(x)
        return self.f.value(x) * self._trig(th)[0]

    def grad(self, x):
        th = self.angle.value(x)
        t, tp = self._trig(th)
        return (self.f.grad(x) * t[..., None]
                + (self.f.value(x) * tp)[..., None] * self.angle.grad(x))

    def hess(self, x):
        th = self.angle.value(x)
        t, tp = self._trig(th)
        tpp = -t  # second derivative of sin/cos reproduces the negative of itself
        fv = self.f.value(x)
        fg = self.f.grad(x)
        ag = self.angle.grad(x)
        cross = fg[..., :, None] * ag[..., None, :]
        return (self.f.hess(x) * t[..., None, None]
                + tp[..., None, None] * (cross + np.swapaxes(cross, -1, -2))
                + (fv * tpp)[..., None, None] * ag[..., :, None] * ag[..., None, :]
                + (fv * tp)[..., None, None] * self.angle.hess(x))


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MatrixPotentialModel:
    """Immutable bundle of the three coefficient fields plus metadata.

    ``delta0_declared`` is the gap-squared bound the model is constructed to
    satisfy (None when no uniform bound exists).  ``gap_floor`` is the runtime
    guard: eigen-decompositions below it raise :class:`GapViolation` instead
    of silently degrading.
    """

    name: str
    rho0: object
    rho: object
    omega: object
    decay_exponent_p: float
    V_infinity: np.ndarray
    coupling_support_radius: float
    delta0_declared: float | None = 1.0
    gap_floor: float = 1e-6
    long_range: bool = True
    params: dict = field(default_factory=dict)

    def gap_squared(self, x) -> np.ndarray:
        r = self.rho.value(x)
        w = self.omega.value(x)
        return r * r + w * w

    def check_gap(self, x) -> None:
        m2 = self.gap_squared(x)
        if np.min(m2) <= self.gap_floor:
            raise GapViolation(
                f"model {self.name!r}: rho^2+omega^2 reached "
                f"{float(np.min(m2)):.3e} <= gap floor {self.gap_floor:.1e}")

    def lambda_value(self, x, mode: str) -> np.ndarray:
        return self.rho0.value(x) + _sign(mode) * np.sqrt(self.gap_squared(x))

    def lambda_infinity(self, mode: str) -> float:
        ev = np.linalg.eigvalsh(self.V_infinity)
        return float(ev[1] if _sign(mode) > 0 else ev[0])

    def alpha(self, x) -> np.ndarray:
        """Coupling angle atan2(omega, rho), principal branch."""
        return np.arctan2(self.omega.value(x), self.rho.value(x))

    def grad_alpha(self, x) -> np.ndarray:
        r = self.rho.value(x)
        w = self.omega.value(x)
        m2 = r * r + w * w
        return (r[..., None] * self.omega.grad(x)
                - w[..., None] * self.rho.grad(x)) / m2[..., None]

    def chi(self, x, mode: str) -> np.ndarray:
        """Unit eigenvector field, shape (..., 2)."""
        half = 0.5 * self.alpha(x)
        if _sign(mode) > 0:
            return np.stack([np.cos(half), np.sin(half)], axis=-1)
        return np.stack([-np.sin(half), np.cos(half)], axis=-1)


@dataclass(frozen=True)
class EigenData:
    """Pointwise eigen-decomposition (arrays broadcast over leading axes)."""

    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    chi_plus: np.ndarray
    chi_minus: np.ndarray
    gap: np.ndarray


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def eval_V(model: MatrixPotentialModel, x) -> np.ndarray:
    """Hermitian matrix V(x), shape (..., 2, 2).  Total function."""
    r0 = model.rho0.value(x)
    r = model.rho.value(x)
    w = model.omega.value(x)
    out = np.empty(r0.shape + (2, 2))
    out[..., 0, 0] = r0 + r
    out[..., 0, 1] = w
    out[..., 1, 0] = w
    out[..., 1, 1] = r0 - r
    return out


def eigen(model: MatrixPotentialModel, x) -> EigenData:
    """Eigenvalues and half-angle-gauge eigenvectors at x.

    Raises GapViolation when rho^2+omega^2 falls at or below the gap floor.
    """
    model.check_gap(x)
    r0 = model.rho0.value(x)
    m = np.sqrt(model.gap_squared(x))
    return EigenData(
        lambda_plus=r0 + m,
        lambda_minus=r0 - m,
        chi_plus=model.chi(x, "+"),
        chi_minus=model.chi(x, "-"),
        gap=2.0 * m,
    )


def grad_lambda(model: MatrixPotentialModel, x, mode: str) -> np.ndarray:
    """Analytic gradient of the selected eigenvalue, shape (..., d)."""
    model.check_gap(x)
    r = model.rho.value(x)
    w = model.omega.value(x)
    m = np.sqrt(r * r + w * w)
    gm = (r[..., None] * model.rho.grad(x) + w[..., None] * model.omega.grad(x)) / m[..., None]
    return model.rho0.grad(x) + _sign(mode) * gm


def hessian_lambda(model: MatrixPotentialModel, x, mode: str) -> np.ndarray:
    """Analytic Hessian of the selected eigenvalue, shape (..., d, d)."""
    model.check_gap(x)
    r = model.rho.value(x)
    w = model.omega.value(x)
    m = np.sqrt(r * r + w * w)
    gr = model.rho.grad(x)
    gw = model.omega.grad(x)
    gm = (r[..., None] * gr + w[..., None] * gw) / m[..., None]
    num = (gr[..., :, None] * gr[..., None, :]
           + gw[..., :, None] * gw[..., None, :]
           + r[..., None, None] * model.rho.hess(x)
           + w[..., None, None] * model.omega.hess(x))
    hm = num / m[..., None, None] - gm[..., :, None] * gm[..., None, :] / m[..., None, None]
    return model.rho0.hess(x) + _sign(mode) * hm


def d_chi(model: MatrixPotentialModel, x, mode: str) -> np.ndarray:
    """Differential of the eigenvector map, shape (..., d, 2).

    Row j holds the partial derivative of chi along axis j.  In the
    half-angle gauge d chi_plus = (grad alpha / 2) chi_minus and
    d chi_minus = -(grad alpha / 2) chi_plus.
    """
    model.check_gap(x)
    ga = 0.5 * model.grad_alpha(x)
    if _sign(mode) > 0:
        other = model.chi(x, "-")
        return ga[..., :, None] * other[..., None, :]
    other = model.chi(x, "+")
    return -ga[..., :, None] * other[..., None, :]


# ---------------------------------------------------------------------------
# Structural audit
# ---------------------------------------------------------------------------

@dataclass
class AuditReport:
    """Numerical audit of the model's structural requirements.

    Clauses checked on a sample box:
      * long_range  -- <x>^p ||V - V_inf|| stays bounded (no outward growth)
      * gap         -- rho^2 + omega^2 uniformly positive (no outward decay
                       and above the declared bound where one exists)
      * diagonal_outside -- coupling vanishes outside the declared support
    """

    model_name: str
    box_halfwidth: float
    n_samples: int
    min_gap_sq: float
    min_gap_sq_inner: float
    min_gap_sq_outer: float
    weighted_deviation_inner: float
    weighted_deviation_outer: float
    max_coupling_outside_support: float
    gap_ok: bool
    long_range_ok: bool
    diagonal_outside_ok: bool
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.gap_ok and self.long_range_ok and self.diagonal_outside_ok

    def summary(self) -> str:
        rows = [
            f"audit of {self.model_name!r} on [-{self.box_halfwidth}, {self.box_halfwidth}]^d"
            f" with {self.n_samples} samples",
            f"  gap clause              {'PASS' if self.gap_ok else 'FAIL'}"
            f"  min rho^2+omega^2 = {self.min_gap_sq:.6e}"
            f" (inner {self.min_gap_sq_inner:.3e}, outer {self.min_gap_sq_outer:.3e})",
            f"  long-range clause       {'PASS' if self.long_range_ok else 'FAIL'}"
            f"  <x>^p||V-Vinf||: inner {self.weighted_deviation_inner:.6e},"
            f" outer {self.weighted_deviation_outer:.6e}",
            f"  diagonal-outside clause {'PASS' if self.diagonal_outside_ok else 'FAIL'}"
            f"  max |omega| outside support = {self.max_coupling_outside_support:.3e}",
        ]
        rows += [f"  note: {n}" for n in self.notes]
        return "\n".join(rows)


def _op_norm_deviation(model: MatrixPotentialModel, x) -> np.ndarray:
    """Operator norm of V(x) - V_inf, exact for the 2x2 Hermitian structure."""
    vinf = np.asarray(model.V_infinity, dtype=float)
    a = model.rho0.value(x) - 0.5 * (vinf[0, 0] + vinf[1, 1])
    b = model.rho.value(x) - 0.5 * (vinf[0, 0] - vinf[1, 1])
    c = model.omega.value(x) - vinf[0, 1]
    return np.abs(a) + np.sqrt(b * b + c * c)


def assumption_audit(model: MatrixPotentialModel, sample_box: float,
                     n_samples: int = 20000, d: int = 2) -> AuditReport:
    """Report-only numerical check of the model's structural requirements.

    Samples are drawn deterministically (fixed generator seed), split into an
    inner ball and an outer shell so outward trends are visible.  The gap and
    long-range clauses fail when their quantity degrades toward the boundary:
    a finite sample can never certify a uniform bound, but it can expose the
    absence of one.
    """
    rng = np.random.default_rng(0)
    x = rng.uniform(-sample_box, sample_box, size=(int(n_samples), d))
    radius = np.linalg.norm(x, axis=-1)
    inner = radius <= 0.5 * sample_box
    outer = ~inner
    if not outer.any() or not inner.any():
        raise ConfigError("sample box too small to split into inner/outer regions")

    m2 = model.gap_squared(x)
    min_inner = float(np.min(m2[inner]))
    min_outer = float(np.min(m2[outer]))
    floor = model.delta0_declared if model.delta0_declared else model.gap_floor
    # the declared bound is inclusive (models may attain their infimum)
    gap_ok = (min_outer >= floor * (1.0 - 1e-9)) and (min_outer > 0.25 * min_inner)

    b = np.sqrt(1.0 + radius ** 2)
    wdev = b ** model.decay_exponent_p * _op_norm_deviation(model, x)
    dev_inner = float(np.max(wdev[inner]))
    dev_outer = float(np.max(wdev[outer]))
    long_range_ok = dev_outer <= max(1.25 * dev_inner, 1e-12)

    outside = radius > model.coupling_support_radius
    if outside.any():
        max_w = float(np.max(np.abs(model.omega.value(x[outside]))))
    else:
        max_w = 0.0
    diagonal_ok = max_w <= 1e-12

    notes = []
    if model.delta0_declared is None:
        notes.append("model declares no uniform gap bound")
    if not model.long_range:
        notes.append("model is not long range by construction (oracle model)")
    if not gap_ok:
        notes.append("gap decays toward the sample boundary; no uniform delta0")
    if not long_range_ok:
        notes.append("weighted deviation grows outward; decay rate below declared p")

    return AuditReport(
        model_name=model.name,
        box_halfwidth=float(sample_box),
        n_samples=int(n_samples),
        min_gap_sq=float(np.min(m2)),
        min_gap_sq_inner=min_inner,
        min_gap_sq_outer=min_outer,
        weighted_deviation_inner=dev_inner,
        weighted_deviation_outer=dev_outer,
        max_coupling_outside_support=max_w,
        gap_ok=bool(gap_ok),
        long_range_ok=bool(long_range_ok),
        diagonal_outside_ok=bool(diagonal_ok),
        notes=notes,
    )


# ---------------------------------------------------------------------------
# Built-in models
# ---------------------------------------------------------------------------

def bump_coupling_model(p: float = 2.0, rho0_amplitude: float = 0.5,
                        coupling_height: float = 0.5, coupling_radius: float = 1.0,
                        gap_floor: float = 1e-6) -> MatrixPotentialModel:
    """Decaying shift, unit asymmetry, compactly supported coupling bump.

    Satisfies every structural requirement with delta0 = 1: the asymmetry is
    identically 1, so the gap never closes no matter the bump height.
    """
    vinf = np.diag([1.0, -1.0]) * 1.0
    return MatrixPotentialModel(
        name="bump-coupling",
        rho0=RadialPower(rho0_amplitude, p),
        rho=Constant(1.0),
        omega=Bump(coupling_height, coupling_radius),
        decay_exponent_p=p,
        V_infinity=vinf,
        coupling_support_radius=coupling_radius,
        delta0_declared=1.0,
        gap_floor=gap_floor,
        params=dict(p=p, rho0_amplitude=rho0_amplitude,
                    coupling_height=coupling_height, coupling_radius=coupling_radius),
    )


def rotation_coupling_model(p: float = 1.0, angle_amplitude: float = 1.0,
                            angle_radius: float = 1.0,
                            gap_floor: float = 1e-6) -> MatrixPotentialModel:
    """Rotation-angle coupling with an overall <x>^(-p) decay.

    The whole matrix decays like <x>^(-p), so both eigenvalues tend to zero
    and the gap closes at infinity: the audit flags the gap clause.  Shipped
    for completeness; experiments default to the bump-coupling family.
    """
    if not abs(angle_amplitude) < math.pi:
        raise ConfigError("rotation angle amplitude must stay inside (-pi, pi) "
                          "for a globally smooth eigenvector gauge")
    angle = Bump(angle_amplitude, angle_radius)
    return MatrixPotentialModel(
        name="rotation-coupling",
        rho0=Constant(0.0),
        rho=_RotatedDecay(p, angle, use_sin=False),
        omega=_RotatedDecay(p, angle, use_sin=True),
        decay_exponent_p=p,
        V_infinity=np.zeros((2, 2)),
        coupling_support_radius=angle_radius,
        delta0_declared=None,
        gap_floor=gap_floor,
        params=dict(p=p, angle_amplitude=angle_amplitude, angle_radius=angle_radius),
    )


def synthetic_quadratic_model(gap_floor: float = 1e-6) -> MatrixPotentialModel:
    """Oracle model whose upper eigenvalue is exactly |x|^2/2.

    Not long range (it grows); used only to test trajectories, Hessians and
    actions against harmonic-oscillator closed forms.
    """
    return MatrixPotentialModel(
        name="synthetic-quadratic",
        rho0=HarmonicBowl(-1.0),
        rho=Constant(1.0),
        omega=Constant(0.0),
        decay_exponent_p=1.0,
        V_infinity=np.zeros((2, 2)),
        coupling_support_radius=0.0,
        delta0_declared=1.0,
        gap_floor=gap_floor,
        long_range=False,
        params={},
    )


def constant_diagonal_model(level_plus: float = 1.0, level_minus: float = -1.0,
                            gap_floor: float = 1e-6) -> MatrixPotentialModel:
    """Constant diagonal potential diag(level_plus, level_minus).

    The packet approximation is exact here up to time discretization, which
    makes this the reference control for solver oracles.
    """
    if level_plus <= level_minus:
        raise ConfigError("level_plus must exceed level_minus")
    half_gap = 0.5 * (level_plus - level_minus)
    return MatrixPotentialModel(
        name="constant-diagonal",
        rho0=Constant(0.5 * (level_plus + level_minus)),
        rho=Constant(half_gap),
        omega=Constant(0.0),
        decay_exponent_p=1.0,
        V_infinity=np.diag([level_plus, level_minus]).astype(float),
        coupling_support_radius=0.0,
        delta0_declared=half_gap ** 2,
        gap_floor=gap_floor,
        params=dict(level_plus=level_plus, level_minus=level_minus),
    )


_BUILDERS = {
    "bump-coupling": bump_coupling_model,
    "rotation-coupling": rotation_coupling_model,
    "synthetic-quadratic": synthetic_quadratic_model,
    "constant-diagonal": constant_diagonal_model,
}


def make_model(name: str, **params) -> MatrixPotentialModel:
    """Build a registered potential model by id."""
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ConfigError(
            f"unknown potential id {name!r}; known: {sorted(_BUILDERS)}") from None
    return builder(**params)
