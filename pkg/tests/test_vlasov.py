import numpy as np
import pytest

from sclab import GridSpec, build_kernel, evolve_vlasov, spatial_density, step_vlasov
from sclab.experiments import gaussian_symbol
from sclab.vlasov import (
    PhaseSpaceField,
    XiGrid,
    classical_diagnostics,
    read_field,
    write_field,
)

RNG = np.random.default_rng(77)


def make_state(grid, x0=0.0, xi0=0.3, sx=0.7, sxi=None):
    gxi = XiGrid.matching(grid)
    sxi = sxi if sxi is not None else 0.09 * gxi.Xi
    return gaussian_symbol(grid, x0, xi0, sx, sxi)


# ---------------------------------------------------------------------------
# spatial_density
# ---------------------------------------------------------------------------

def test_separable_field_marginal(grid32):
    gxi = XiGrid.matching(grid32)
    gx = np.exp(np.cos(grid32.x))
    eta = np.exp(-(gxi.xi**2))
    eta /= eta.sum() * gxi.dxi
    f = PhaseSpaceField(grid32, gxi, np.outer(gx, eta), signed=True)
    assert np.abs(spatial_density(f) - gx).max() < 1e-12 * gx.max()


def test_uniform_field_uniform_density(grid32):
    gxi = XiGrid.matching(grid32)
    f = PhaseSpaceField(grid32, gxi, np.ones((grid32.n, gxi.n_xi)), signed=True)
    rho = spatial_density(f)
    assert np.abs(rho - rho[0]).max() == 0.0


def test_density_matches_direct_sum(grid32):
    gxi = XiGrid.matching(grid32)
    vals = RNG.uniform(size=(grid32.n, gxi.n_xi))
    f = PhaseSpaceField(grid32, gxi, vals, signed=True)
    direct = np.array([vals[i, :].sum() * gxi.dxi for i in range(grid32.n)])
    assert np.allclose(spatial_density(f), direct, rtol=1e-14)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def test_free_transport_translates(grid64):
    # kappa = 0: delta-like in xi -> pure translation at speed xi0
    g = grid64
    kernel = build_kernel(0.5, 0.0, 0.0, g)
    gxi = XiGrid.matching(g)
    # xi0 on the lattice, concentrated in one xi cell
    m0 = gxi.n_xi // 2 + 8
    xi0 = gxi.xi[m0]
    vals = np.zeros((g.n, gxi.n_xi))
    prof = np.exp(-(g.x**2) / (2 * 0.5**2))
    vals[:, m0] = prof
    f = PhaseSpaceField(g, gxi, vals, signed=True)
    T, dt = 0.25, 0.0125
    for _ in range(int(T / dt)):
        f = step_vlasov(f, kernel, dt)
    # expected: profile shifted by xi0*T (spectral reference shift)
    ph = np.exp(-2j * np.pi * g.freqs * xi0 * T / g.L)
    want = np.real(np.fft.ifft(np.fft.fft(prof) * ph))
    got = f.values[:, m0] if False else f.values[:, m0]
    assert np.abs(got - want).max() < 5e-5 * want.max()


def test_no_force_when_density_uniform(grid32):
    g = grid32
    kernel = build_kernel(0.5, 1.0, 0.0, g)
    gxi = XiGrid.matching(g)
    eta = np.exp(-(gxi.xi**2) / 0.5)
    vals = np.tile(eta, (g.n, 1))
    f = PhaseSpaceField(g, gxi, vals, signed=True).normalized()
    f1 = step_vlasov(f, kernel, 0.01)
    # xi marginal untouched: uniform density gives zero field
    assert np.abs(f1.values - f.values).max() < 1e-12 * f.values.max()


def test_step_rejects_too_large_dt(grid32):
    kernel = build_kernel(0.5, 1.0, 0.0, grid32)
    f = make_state(grid32)
    dt_bad = grid32.L / f.grid_xi.Xi  # dt*Xi = L > L/2
    with pytest.raises(ValueError):
        step_vlasov(f, kernel, dt_bad)


def test_mass_conserved_per_step(grid64):
    kernel = build_kernel(0.4, 1.0, 0.0, grid64)
    f = make_state(grid64)
    m0 = f.mass()
    for _ in range(20):
        f = step_vlasov(f, kernel, 2e-3)
        assert abs(f.mass() - m0) < 1e-8


def test_positivity_with_limiter(grid64):
    kernel = build_kernel(0.4, -1.0, 0.0, grid64)
    f = make_state(grid64)
    for _ in range(40):
        f = step_vlasov(f, kernel, 2e-3, limiter=True)
    assert f.values.min() >= -1e-10


def test_self_convergence_second_order(grid64):
    kernel = build_kernel(0.4, 1.0, 0.0, grid64)
    f0 = make_state(grid64)
    T = 0.064
    finals = []
    dts = [4e-3, 2e-3, 1e-3, 5e-4]
    for dt in dts:
        f = f0
        for _ in range(int(round(T / dt))):
            f = step_vlasov(f, kernel, dt)
        finals.append(f.values)
    errs = [np.abs(finals[i] - finals[-1]).max() for i in range(3)]
    slope = np.polyfit(np.log(dts[:3]), np.log(errs), 1)[0]
    assert 1.8 <= slope <= 2.2


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def test_diagnostics_zero_for_x_uniform(grid32):
    gxi = XiGrid.matching(grid32)
    eta = np.exp(-(gxi.xi**2))
    f = PhaseSpaceField(grid32, gxi, np.tile(eta, (grid32.n, 1)), signed=True)
    d = classical_diagnostics(f, p=2, n_w=2)
    assert d["N_p_x"] < 1e-20


def test_diagnostics_gaussian_closed_form():
    # separable Gaussian: N_{2,x} = int |df/dx|^2 (1 + |xi|^4) has a closed
    # Gaussian-moment form
    g = GridSpec(d=1, n=128, L=2 * np.pi, hbar=1 / 16)
    gxi = XiGrid.matching(g)
    sx, sxi = 0.5, 0.3
    A = 1.0
    X, XI = g.x[:, None], gxi.xi[None, :]
    vals = A * np.exp(-(X**2) / (2 * sx**2) - (XI**2) / (2 * sxi**2))
    f = PhaseSpaceField(g, gxi, vals, signed=True)
    d = classical_diagnostics(f, p=2, n_w=2)
    # int |d/dx e^{-x^2/2sx^2}|^2 dx = sqrt(pi)/(2 sx) over x in R
    ix = np.sqrt(np.pi) / (2 * sx)
    # int e^{-xi^2/sxi^2} (1 + xi^4) dxi = sqrt(pi) sxi (1 + 3 sxi^4 / 4)
    ixi = np.sqrt(np.pi) * sxi * (1 + 0.75 * sxi**4)
    want = A**2 * ix * ixi
    assert d["N_p_x"] == pytest.approx(want, rel=1e-6)


def test_gronwall_aggregate_finite_and_positive(grid64):
    kernel = build_kernel(0.4, 1.0, 0.0, grid64)
    f = make_state(grid64)
    d = classical_diagnostics(f, p=2, n_w=2, kernel=kernel)
    assert d["U"] > 0 and np.isfinite(d["U"])
    assert d["E_inf"] > 0


def test_gronwall_bound_fitted_constant(grid64):
    # dU/dt <= n ||E||_inf U + (B_K + 1/2) U^2 with a fitted B_K: the fitted
    # constant is reported, the series itself must satisfy the bound with it
    kernel = build_kernel(0.4, 1.0, 0.0, grid64)
    f0 = make_state(grid64)
    traj = evolve_vlasov(f0, kernel, T=0.2, dt=2e-3, stride=10, n_w=2)
    assert not traj.aborted
    t = np.asarray(traj.diagnostics.times)
    U = traj.diagnostics.array("U")
    E = traj.diagnostics.array("E_inf")
    dU = np.diff(U) / np.diff(t)
    lin = 2 * E[:-1] * U[:-1]  # n_w = 2
    quad = U[:-1] ** 2
    need = (dU - lin) / quad
    B_fit = max(need.max() - 0.5, 0.0)
    assert np.all(dU <= 2 * E[:-1] * U[:-1] + (B_fit + 0.5) * quad + 1e-12)


# ---------------------------------------------------------------------------
# evolve
# ---------------------------------------------------------------------------

def test_evolve_zero_time_returns_input(grid32):
    kernel = build_kernel(0.5, 1.0, 0.0, grid32)
    f0 = make_state(grid32)
    traj = evolve_vlasov(f0, kernel, T=0.0, dt=1e-3)
    assert len(traj.states) == 1
    assert traj.states[0] is f0


def test_l2_norm_budget(grid64):
    kernel = build_kernel(0.4, 1.0, 0.0, grid64)
    f0 = make_state(grid64)
    traj = evolve_vlasov(f0, kernel, T=1.0, dt=4e-3, stride=50)
    assert not traj.aborted
    l2 = traj.diagnostics.array("l2")
    assert abs(l2[-1] - l2[0]) / l2[0] < 1e-4


def test_mass_over_run(grid64):
    kernel = build_kernel(0.4, -1.0, 0.0, grid64)
    f0 = make_state(grid64)
    traj = evolve_vlasov(f0, kernel, T=0.5, dt=2e-3, stride=25)
    mass = traj.diagnostics.array("mass")
    assert np.abs(mass - mass[0]).max() < 1e-6


def test_two_stream_filamentation_grows():
    # attractive two-bump data: N_{2,x} grows monotonically early on
    g = GridSpec(d=1, n=128, L=2 * np.pi, hbar=1 / 16)
    gxi = XiGrid.matching(g)
    kernel = build_kernel(0.5, -1.0, 0.0, g)
    X, XI = g.x[:, None], gxi.xi[None, :]
    v0 = 0.12 * gxi.Xi
    sxi = 0.05 * gxi.Xi
    vals = (np.exp(-((XI - v0) ** 2) / (2 * sxi**2))
            + np.exp(-((XI + v0) ** 2) / (2 * sxi**2)))
    vals = vals * (1.0 + 0.05 * np.cos(2 * np.pi * X / g.L))
    f0 = PhaseSpaceField(g, gxi, vals).normalized()
    traj = evolve_vlasov(f0, kernel, T=0.5, dt=5e-3, stride=20)
    assert not traj.aborted
    n2x = traj.diagnostics.array("N_2_x")
    assert np.all(np.diff(n2x) > 0)


def test_field_binary_roundtrip(tmp_path, grid32):
    f = make_state(grid32)
    p = tmp_path / "f.psf"
    write_field(p, f)
    back = read_field(p)
    assert np.allclose(back.values, f.values, atol=1e-15)
    assert back.grid_x.compatible(grid32)
    with open(p, "rb") as fh:
        assert fh.read(16).decode().startswith("SCLAB-PSF nx=32")
