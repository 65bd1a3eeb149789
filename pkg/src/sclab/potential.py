"""Singular pair potentials and the Hartree-Fock Hamiltonian assembly.

The cutoff potential is the Gaussian superposition

    K_R(x) = (omega_a * kappa / 2) * int_0^{R^-2} s^(a/2-1) exp(-pi |x|^2 s) ds,

evaluated in closed form through the regularized lower incomplete gamma
function; omega_a = 2*pi^(a/2)/Gamma(a/2) is the normalization that makes
K_R -> kappa*|x|^(-a) as R -> 0.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc, gamma as gamma_fn

from .grids import GridSpec
from .operators import DensityOperator, OperatorMatrix, hermitize

__all__ = [
    "KernelSpec",
    "build_kernel",
    "cutoff_value",
    "omega_constant",
    "mean_field_potential",
    "force_field",
    "exchange_operator",
    "hf_hamiltonian",
    "kinetic_operator",
    "kernel_csv",
]


def omega_constant(a: float) -> float:
    """omega_a = 2*pi^(a/2)/Gamma(a/2), the cutoff-kernel normalization."""
    return 2.0 * np.pi ** (a / 2) / gamma_fn(a / 2)


def cutoff_value(r, a: float, kappa: float, R: float):
    """K_R at distance r (vectorized); R > 0 required for r = 0."""
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    zero = r == 0.0
    rs = np.where(zero, 1.0, r)
    out = kappa * gammainc(a / 2, np.pi * rs**2 / R**2) / rs**a
    k0 = kappa * omega_constant(a) / (a * R**a)
    return np.where(zero, k0, out)


@dataclass(frozen=True)
class KernelSpec:
    """Periodicized singular pair potential on a grid.

    ``samples[i, j] = K_R(wrap(x_i - x_j))``; for R = 0 the on-grid singular
    node is replaced by the cutoff value at R_eff = dx, keeping the
    quadrature consistent with the integrable singularity.
    """

    grid: GridSpec
    a: float
    kappa: float
    R: float
    samples: np.ndarray = field(repr=False)

    @property
    def b(self) -> float:
        """Integrability index of the force field, d/(a+1)."""
        return self.grid.d / (self.a + 1.0)

    @property
    def fourier(self) -> np.ndarray:
        """FFT of one kernel row (flattened d-dim), for fast convolution."""
        row = self.samples[:, 0].reshape((self.grid.n,) * self.grid.d)
        # row gives K(x_i - x_0); roll to K at displacement index 0
        i0 = np.unravel_index(0, (self.grid.n,) * self.grid.d)
        shift = tuple(-np.array(i0))
        return np.fft.fftn(np.roll(row, shift, axis=tuple(range(self.grid.d))))


def build_kernel(a: float, kappa: float, R: float, grid: GridSpec) -> KernelSpec:
    """Sample the periodicized cutoff potential K_R on the grid.

    R = 0 means the raw |x|^-a potential with the singular node regularized
    at R_eff = dx. Periodicization is by minimal image.
    """
    if R < 0:
        raise ValueError("cutoff R must be >= 0")
    if R == 0 and not (0 < a < grid.d):
        raise ValueError(f"raw potential with a={a} is not integrable in d={grid.d}")
    if not a > 0:
        raise ValueError("singularity exponent a must be positive")
    r = grid.pairwise_distance()
    Reff = R if R > 0 else grid.dx
    samples = cutoff_value(r, a, kappa, Reff)
    return KernelSpec(grid=grid, a=a, kappa=kappa, R=R, samples=samples)


def mean_field_potential(rho_diag: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    """V(x) = (K * rho)(x) by direct quadrature over the sampled kernel."""
    rho_diag = np.asarray(rho_diag)
    if np.any(~np.isfinite(rho_diag)):
        raise ValueError("NaN or Inf in spatial density")
    g = kernel.grid
    V = kernel.samples @ (rho_diag * g.dx**g.d)
    return np.real(V)


def force_field(V: np.ndarray, grid: GridSpec) -> np.ndarray:
    """E = -grad V, spectral; shape (n**d, d)."""
    V = np.asarray(V, dtype=float).reshape((grid.n,) * grid.d)
    out = np.empty((grid.dim, grid.d))
    kvec = 2j * np.pi * grid.freqs / grid.L
    Vh = np.fft.fftn(V)
    for ax in range(grid.d):
        shape = [1] * grid.d
        shape[ax] = grid.n
        dV = np.fft.ifftn(Vh * kvec.reshape(shape)).real
        out[:, ax] = -dV.ravel()
    return out


def exchange_operator(rho: DensityOperator, kernel: KernelSpec) -> OperatorMatrix:
    """Exchange term: integral kernel K(x-y) * rho(x, y)."""
    if not rho.grid.compatible(kernel.grid):
        raise ValueError("grid mismatch between density and kernel")
    X = OperatorMatrix.from_kernel(rho.grid, kernel.samples * rho.kernel)
    X.hermitian = True
    return X


def exchange_of_kernel(op_kernel: np.ndarray, kernel: KernelSpec,
                       grid: GridSpec) -> OperatorMatrix:
    """Exchange construction applied to an arbitrary operator kernel."""
    return OperatorMatrix.from_kernel(grid, kernel.samples * op_kernel)


def kinetic_operator(grid: GridSpec) -> OperatorMatrix:
    """Fourier-diagonal |p|^2/2."""
    return OperatorMatrix.from_momentum_diag(grid, grid.momentum_abs() ** 2 / 2.0)


def hf_hamiltonian(rho: DensityOperator, kernel: KernelSpec,
                   include_exchange: bool = True,
                   kinetic: OperatorMatrix | None = None) -> OperatorMatrix:
    """H = |p|^2/2 + V_rho - h**d * X_rho (exchange omitted -> Hartree)."""
    g = rho.grid
    if kinetic is None:
        kinetic = kinetic_operator(g)
    V = mean_field_potential(rho.spatial_density(), kernel)
    H = kinetic + OperatorMatrix.from_position_diag(g, V)
    if include_exchange:
        H = H - g.h**g.d * exchange_operator(rho, kernel)
    return hermitize(H)


def kernel_csv(kernel: KernelSpec) -> str:
    """CSV dump r,K_R(r) along the first axis up to half box."""
    g = kernel.grid
    buf = io.StringIO()
    buf.write("r,K_R(r)\n")
    row = kernel.samples[:, 0]
    r = g.pairwise_distance()[:, 0]
    order = np.argsort(r)
    seen = set()
    for idx in order:
        key = round(float(r[idx]), 12)
        if key in seen:
            continue
        seen.add(key)
        buf.write(f"{float(r[idx])!r},{float(row[idx])!r}\n")
    return buf.getvalue()
