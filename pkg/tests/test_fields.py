import numpy as np
import pytest

from wplab.classical import integrate_trajectory
from wplab.errors import (BoundaryError, ConfigError, InterpolationError,
                          ResolutionError)
from wplab.fields import (ComplexField, EnvelopeInterpolator, GridSpec,
                          PacketParams, build_ansatz, build_wavepacket,
                          h_eps_norm, lebesgue_norm, mode_project, polarize,
                          read_snapshot, resolution_check, spectral_gradient,
                          write_snapshot)
from wplab.potential import bump_coupling_model


@pytest.fixture(scope="module")
def model():
    return bump_coupling_model()


@pytest.fixture(scope="module")
def grid1d():
    return GridSpec(d=1, halfwidths=6.5, npoints=8192)


@pytest.fixture(scope="module")
def envelope_grid():
    return GridSpec(d=1, halfwidths=10.0, npoints=256)


def gaussian_envelope(grid: GridSpec) -> ComplexField:
    mesh = grid.meshgrid()
    y2 = sum(m * m for m in mesh)
    return ComplexField(grid, (np.pi ** (-grid.d / 4.0) * np.exp(-y2 / 2))[None])


EPS = 2.0 ** -6


def test_grid_requires_power_of_two():
    with pytest.raises(ConfigError):
        GridSpec(d=1, halfwidths=4.0, npoints=100)
    with pytest.raises(ConfigError):
        GridSpec(d=1, halfwidths=4.0, npoints=8)


def test_grid_geometry():
    g = GridSpec(d=2, halfwidths=(4.0, 2.0), npoints=(64, 32), center=(1.0, 0.0))
    assert g.spacings == (0.125, 0.125)
    ax = g.axis(0)
    assert ax[0] == pytest.approx(-3.0) and len(ax) == 64
    assert g.cell_volume == pytest.approx(0.125 ** 2)


def test_wavepacket_unit_mass(grid1d):
    f = build_wavepacket(PacketParams(x0=-1.5, xi0=1.0), EPS, grid1d)
    assert abs(f.l2_norm() - 1.0) <= 1e-8


def test_wavepacket_eps_one_is_plain_envelope():
    g = GridSpec(d=1, halfwidths=10.0, npoints=256)
    f = build_wavepacket(PacketParams(x0=0.0, xi0=0.0), 1.0, g)
    a = gaussian_envelope(g)
    assert np.allclose(f.values, a.values, atol=1e-14)


def test_wavepacket_scaled_gradient_norm(grid1d):
    # || eps grad f ||^2 = |xi0|^2 + eps ||grad a||^2 for a real envelope
    f = build_wavepacket(PacketParams(x0=-1.5, xi0=1.0), EPS, grid1d)
    g = spectral_gradient(f, 0)
    val = EPS * g.l2_norm()
    assert val == pytest.approx(np.sqrt(1.0 + EPS * 0.5), abs=1e-6)


def test_resolution_gate_names_inequality():
    g = GridSpec(d=1, halfwidths=6.5, npoints=1024)
    with pytest.raises(ResolutionError, match="phase oscillation"):
        build_wavepacket(PacketParams(x0=0.0, xi0=2.0), 2 ** -6, g)
    g2 = GridSpec(d=1, halfwidths=16.0, npoints=64)
    with pytest.raises(ResolutionError, match="packet width"):
        resolution_check(g2, 0.9, 0.0)


def test_boundary_gate(grid1d):
    with pytest.raises(BoundaryError):
        build_wavepacket(PacketParams(x0=-6.45, xi0=0.0), EPS, grid1d)


def test_h_eps_norm_p0_is_l2(grid1d):
    f = build_wavepacket(PacketParams(x0=-1.5, xi0=1.0), EPS, grid1d)
    assert h_eps_norm(f, EPS, 0) == pytest.approx(f.l2_norm(), abs=1e-12)
    assert lebesgue_norm(f, 2) == pytest.approx(f.l2_norm(), abs=1e-12)


def test_h_eps_norm_packet_value(grid1d):
    f = build_wavepacket(PacketParams(x0=-1.5, xi0=1.0), EPS, grid1d)
    assert h_eps_norm(f, EPS, 1) == pytest.approx(
        np.sqrt(2.0 + EPS * 0.5), abs=1e-6)


def test_h_eps_homogeneity(grid1d):
    f = build_wavepacket(PacketParams(x0=-1.5, xi0=1.0), EPS, grid1d)
    g = ComplexField(grid1d, 3.7 * f.values)
    for p in (0, 1, 2):
        assert h_eps_norm(g, EPS, p) == pytest.approx(
            3.7 * h_eps_norm(f, EPS, p), rel=1e-12)


def test_gaussian_l4_value():
    g = GridSpec(d=1, halfwidths=10.0, npoints=512)
    a = gaussian_envelope(g)
    assert lebesgue_norm(a, 4) ** 4 == pytest.approx(1.0 / np.sqrt(2 * np.pi),
                                                     rel=1e-10)


def test_flat_field_l4():
    g = GridSpec(d=1, halfwidths=2.0, npoints=64)
    f = ComplexField(g, np.full((1, 64), 0.7, dtype=complex))
    vol = 4.0
    assert lebesgue_norm(f, 4) == pytest.approx(0.7 * vol ** 0.25, rel=1e-12)
    assert lebesgue_norm(f, np.inf) == pytest.approx(0.7, rel=1e-12)


def test_polarize_project_roundtrip(model, grid1d):
    f = build_wavepacket(PacketParams(x0=-1.5, xi0=1.0), EPS, grid1d)
    f2 = polarize(f, model, "+")
    assert f2.l2_norm() == pytest.approx(f.l2_norm(), abs=1e-12)
    back = mode_project(f2, model, "+")
    assert np.max(np.abs(back.values - f.values)) <= 1e-14
    minus = mode_project(f2, model, "-")
    assert minus.l2_norm() <= 1e-12


def test_mode_projection_parseval(model, grid1d):
    f = build_wavepacket(PacketParams(x0=-1.5, xi0=1.0), EPS, grid1d)
    f2 = polarize(f, model, "+")
    g2 = polarize(build_wavepacket(PacketParams(x0=-1.0, xi0=0.5), EPS, grid1d),
                  model, "-")
    mixed = ComplexField(grid1d, f2.values + 0.5j * g2.values)
    pp = mode_project(mixed, model, "+")
    pm = mode_project(mixed, model, "-")
    assert (pp.l2_norm() ** 2 + pm.l2_norm() ** 2
            == pytest.approx(mixed.l2_norm() ** 2, abs=1e-12))


def test_polarized_modes_orthogonal(model, grid1d):
    f = build_wavepacket(PacketParams(x0=-1.5, xi0=1.0), EPS, grid1d)
    fp = polarize(f, model, "+")
    fm = polarize(f, model, "-")
    assert abs(fp.inner(fm)) <= 1e-12


def test_spectral_derivative_exact_on_fourier_mode():
    g = GridSpec(d=1, halfwidths=4.0, npoints=64)
    k = g.wavenumbers(0)[5]
    f = ComplexField(g, np.exp(1j * k * g.axis(0))[None])
    df = spectral_gradient(f, 0)
    assert np.max(np.abs(df.values - 1j * k * f.values)) <= 1e-12


@pytest.fixture(scope="module")
def record(model):
    return integrate_trajectory(model, [-1.5], [1.0], "+", 1.0, 1e-12)


def test_ansatz_at_time_zero_equals_wavepacket(model, grid1d, envelope_grid, record):
    a = gaussian_envelope(envelope_grid)
    phi0 = build_ansatz(a, record, EPS, 0.0, grid1d)
    pk = build_wavepacket(PacketParams(x0=-1.5, xi0=1.0), EPS, grid1d)
    assert np.max(np.abs(phi0.values - pk.values)) <= 1e-9


def test_ansatz_preserves_l2(envelope_grid, grid1d, record):
    a = gaussian_envelope(envelope_grid)
    phi = build_ansatz(a, record, EPS, 0.7, grid1d)
    assert abs(phi.l2_norm() - a.l2_norm()) <= 1e-8


def test_ansatz_l4_scaling(envelope_grid, grid1d, record):
    a = gaussian_envelope(envelope_grid)
    phi = build_ansatz(a, record, EPS, 0.4, grid1d)
    assert lebesgue_norm(phi, 4) == pytest.approx(
        EPS ** (-1 / 8) * lebesgue_norm(a, 4), rel=1e-6)


def test_ansatz_requires_envelope_box_inside_lab_box(record):
    small = GridSpec(d=1, halfwidths=2.0, npoints=8192)
    env = GridSpec(d=1, halfwidths=10.0, npoints=256)
    a = gaussian_envelope(env)
    with pytest.raises(ResolutionError, match="envelope box"):
        build_ansatz(a, record, 0.25, 0.0, small)


def test_interpolator_flags_unresolved_envelope(grid1d, envelope_grid):
    y = envelope_grid.meshgrid()[0]
    ragged = np.cos(0.9 * np.pi * y / envelope_grid.spacings[0])
    interp = EnvelopeInterpolator(envelope_grid, grid1d, np.sqrt(EPS))
    with pytest.raises(InterpolationError):
        interp(ragged.astype(complex), np.array([0.0]))


def test_interpolator_matches_dense_evaluation(grid1d, envelope_grid):
    # chirp-Z evaluation against a brute-force sum over the trig series
    rng = np.random.default_rng(5)
    y = envelope_grid.meshgrid()[0]
    vals = (np.exp(-0.5 * y ** 2) * (rng.standard_normal(y.size)
                                     * 0.0 + 1.0 + 0.3j * np.sin(y))).astype(complex)
    interp = EnvelopeInterpolator(envelope_grid, grid1d, np.sqrt(EPS))
    shift = np.array([-1.23])
    out = interp(vals, shift)
    n = envelope_grid.npoints[0]
    L = envelope_grid.halfwidths[0]
    c = np.fft.fft(vals) / n
    kf = 2 * np.pi * np.fft.fftfreq(n, d=envelope_grid.spacings[0])
    ystar = (grid1d.axis(0) - shift[0]) / np.sqrt(EPS)
    dense = np.zeros(grid1d.npoints[0], complex)
    for j, kj in enumerate(kf):
        if j == n // 2:   # split Nyquist symmetrically
            kn = np.pi * (n // 2) / L
            dense += 0.5 * c[j] * (np.exp(1j * kn * (ystar + L))
                                   + np.exp(-1j * kn * (ystar + L)))
        else:
            dense += c[j] * np.exp(1j * kj * (ystar + L))
    dense *= np.abs(ystar) <= L
    assert np.max(np.abs(out - dense)) <= 1e-9


def test_interpolation_windows_instead_of_wrapping(grid1d, envelope_grid):
    # lab points beyond the envelope-box image must read zero, not a ghost
    a = gaussian_envelope(envelope_grid).scalar()
    interp = EnvelopeInterpolator(envelope_grid, grid1d, np.sqrt(EPS))
    out = interp(a, np.array([-1.5]))
    x = grid1d.axis(0)
    far = np.abs(x + 1.5) > envelope_grid.halfwidths[0] * np.sqrt(EPS)
    assert np.max(np.abs(out[far])) == 0.0


def test_snapshot_roundtrip(tmp_path, model, grid1d):
    f = polarize(build_wavepacket(PacketParams(x0=-1.5, xi0=1.0), EPS, grid1d),
                 model, "+")
    path = tmp_path / "field.wpl"
    write_snapshot(f, EPS, 0.25, path)
    g, eps, t = read_snapshot(path)
    assert eps == EPS and t == 0.25
    assert g.grid == f.grid
    assert np.array_equal(g.values, f.values)


def test_snapshot_magic_guard(tmp_path):
    path = tmp_path / "bogus.wpl"
    path.write_bytes(b"NOPE!" + b"\0" * 64)
    with pytest.raises(ConfigError, match="magic"):
        read_snapshot(path)


def test_field_rejects_nonfinite(grid1d):
    bad = np.zeros((1,) + grid1d.npoints, complex)
    bad[0, 0] = np.nan
    with pytest.raises(ConfigError):
        ComplexField(grid1d, bad)


def test_h_eps_norm_p2_single_mode():
    g = GridSpec(d=1, halfwidths=4.0, npoints=64)
    k = g.wavenumbers(0)[3]
    f = ComplexField(g, np.exp(1j * k * g.axis(0))[None])
    eps = 0.25
    expect = f.l2_norm() * np.sqrt(1.0 + (eps * k) ** 2 + (eps ** 2 * k * k) ** 2)
    assert h_eps_norm(f, eps, 2) == pytest.approx(expect, rel=1e-12)
