"""Transforms between density operators and phase-space fields.

Discrete Wigner convention
--------------------------
Write the operator in plane-wave matrix elements A_hat[k, l] (frequencies
in the symmetric window {-n/2, ..., n/2-1}). Each pair contributes the
phase-space mode

    exp(2*pi*i*kappa*x/L) * exp(i*pi*(2l + kappa)*j/n),   kappa = wrap(k - l),

where j indexes the antidiagonal offset y = j*dx (symmetric window) and
the second factor is FFT'd to the xi lattice xi_m = h*m/L. Reducing kappa
mod n and labeling the offset phase by (2l + kappa) mod 2n makes the map
kernel -> field exactly unitary (up to the h**(d/2) scale), hence
mass and L2 identities hold at machine precision and Weyl quantization is
the exact inverse. The price of an even n is that Hermitian operators map
to exactly real fields only up to content at the antidiagonal offset
y = -L/2 (odd kappa) and at the Nyquist x-frequency; both vanish for the
localized band-limited operators the lab works with, and the public
transform returns the real part while recording the residue.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import GridSpec
from .operators import DensityOperator, OperatorMatrix, hermitize
from .vlasov import PhaseSpaceField, XiGrid

__all__ = [
    "CoherentFrame",
    "coherent_state",
    "wigner_transform",
    "weyl_quantize",
    "toeplitz_quantize",
    "toeplitz_quantize_dense",
]

_N_IMAGES = 3  # periodization images for the coherent envelope


def _freqs(n):
    return np.fft.fftfreq(n, 1.0 / n).astype(int)


def _require_1d(grid: GridSpec):
    if grid.d != 1:
        raise NotImplementedError("phase-space transforms are implemented for d = 1")


# ---------------------------------------------------------------------------
# raw unitary transform (complex field, fft-order xi)
# ---------------------------------------------------------------------------

def _wigner_raw(kernel: np.ndarray, grid: GridSpec) -> np.ndarray:
    n = grid.n
    Ahat = np.fft.ifft(np.fft.fft(kernel, axis=0), axis=1) / n
    kk = _freqs(n)
    l_idx = np.arange(n)
    k_of = (kk[:, None] + l_idx[None, :]) % n
    B = Ahat[k_of, l_idx[None, :]]
    C = np.fft.ifft(B, axis=1) * n
    C *= np.exp(1j * np.pi * np.outer(kk, kk) / n)  # e^{i pi kappa jtilde / n}
    f_center = np.fft.ifft(C, axis=0) * n
    return np.fft.fft(f_center, axis=1) * grid.dx


def _weyl_raw(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    n = grid.n
    kk = _freqs(n)
    f_center = np.fft.ifft(f, axis=1) / grid.dx
    C = np.fft.fft(f_center, axis=0) / n
    C *= np.exp(-1j * np.pi * np.outer(kk, kk) / n)
    B = np.fft.fft(C, axis=1) / n
    l_idx = np.arange(n)
    k_of = (kk[:, None] + l_idx[None, :]) % n
    Ahat = np.zeros((n, n), dtype=complex)
    Ahat[k_of, l_idx[None, :]] = B
    return np.fft.ifft(np.fft.fft(Ahat * n, axis=1), axis=0)


# ---------------------------------------------------------------------------
# public transforms
# ---------------------------------------------------------------------------

def wigner_transform(rho: DensityOperator | OperatorMatrix) -> PhaseSpaceField:
    """Wigner transform of an operator kernel; field on (x_i, xi ascending).

    The imaginary residue of the raw transform (see module docstring) is
    recorded on the returned field as ``imag_residue``.
    """
    grid = rho.grid
    _require_1d(grid)
    f = _wigner_raw(np.asarray(rho.kernel), grid)
    f = np.fft.fftshift(f, axes=1)  # xi ascending
    gxi = XiGrid.matching(grid)
    field = PhaseSpaceField(grid, gxi, f.real, signed=True)
    field.imag_residue = float(np.abs(f.imag).max())
    return field


def weyl_quantize(g: PhaseSpaceField, warn_aliasing: bool = True) -> OperatorMatrix:
    """Inverse of wigner_transform on the same grid pair; Hermitian for real g.

    Emits an aliasing warning when the symbol carries energy in the top 10%
    of xi modes.
    """
    grid = g.grid_x
    _require_1d(grid)
    gxi = XiGrid.matching(grid)
    if g.grid_xi.n_xi != gxi.n_xi or not np.isclose(g.grid_xi.Xi, gxi.Xi):
        raise ValueError("symbol xi grid is not the Weyl-dual lattice of the spatial grid")
    vals = np.asarray(g.values, dtype=complex)
    if warn_aliasing:
        spec = np.abs(np.fft.fft(vals, axis=1)) ** 2
        n = vals.shape[1]
        kk = np.abs(_freqs(n))
        top = spec[:, kk >= 0.9 * (n // 2)].sum()
        tot = spec.sum()
        if tot > 0 and top / tot > 1e-8:
            import warnings
            warnings.warn("symbol has energy in the top 10% of xi modes; "
                          "Weyl quantization may alias", RuntimeWarning)
    kernel = _weyl_raw(np.fft.ifftshift(vals, axes=1), grid)
    op = OperatorMatrix.from_kernel(grid, kernel)
    return hermitize(op, tol=np.inf) if np.isrealobj(g.values) else op


# ---------------------------------------------------------------------------
# coherent states / Toeplitz quantization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoherentFrame:
    """Periodized Gaussian wavepacket family of width sqrt(h)."""

    grid: GridSpec

    def envelope_offsets(self) -> np.ndarray:
        """Envelope exp(-pi u^2 / (2h)) sampled at displacements u = d*dx (wrapped)."""
        g = self.grid
        off = g.wrap(np.arange(g.n) * g.dx)
        env = np.zeros(g.n)
        for m in range(-_N_IMAGES, _N_IMAGES + 1):
            env += np.exp(-np.pi * (off + m * g.L) ** 2 / (2 * g.h))
        return env

    def norm_factor(self) -> float:
        """1/||envelope||_L2 on the grid (makes coherent states unit vectors)."""
        env = self.envelope_offsets()
        return 1.0 / np.sqrt(self.grid.dx * np.sum(env**2))


def coherent_state(x0: float, xi0: float, grid: GridSpec) -> np.ndarray:
    """Normalized coherent state at phase-space center (x0, xi0)."""
    _require_1d(grid)
    if np.sqrt(grid.h) >= grid.L / 4:
        raise ValueError("coherent width sqrt(h) >= L/4: state under-resolved on this box")
    if not (-grid.L / 2 <= x0 < grid.L / 2):
        raise ValueError("x0 outside the box")
    g = grid
    env = np.zeros(g.n)
    for m in range(-_N_IMAGES, _N_IMAGES + 1):
        env += np.exp(-np.pi * (g.x - x0 + m * g.L) ** 2 / (2 * g.h))
    psi = env * np.exp(1j * g.x * xi0 / g.hbar)
    return psi / np.sqrt(g.dx * np.sum(np.abs(psi) ** 2))


def toeplitz_quantize(g: PhaseSpaceField) -> DensityOperator:
    """Positive quantization: average of coherent projectors against the symbol.

    O(n^2 log n) via FFT over the symbol's xi axis and a circular
    convolution per kernel diagonal; renormalized to h**d * Tr = 1.
    """
    grid = g.grid_x
    _require_1d(grid)
    if np.asarray(g.values).min() < -1e-12 * max(np.abs(g.values).max(), 1e-300):
        raise ValueError("Toeplitz quantization requires a nonnegative symbol")
    gxi = g.grid_xi
    dual = XiGrid.matching(grid)
    if gxi.n_xi != dual.n_xi or not np.isclose(gxi.Xi, dual.Xi):
        raise ValueError("fast Toeplitz path needs the momentum-lattice xi grid; "
                         "resample the symbol or use toeplitz_quantize_dense")
    n = grid.n
    frame = CoherentFrame(grid)
    eta = frame.envelope_offsets()
    c2 = frame.norm_factor() ** 2
    # G[x0, r] = sum_m g(x0, xi_m) e^{i r xi_m / hbar} dxi  for offsets r = (i-j) dx
    vals = np.asarray(g.values, dtype=float)
    r_off = grid.wrap(np.arange(n) * grid.dx)
    phase = np.exp(1j * np.outer(r_off, gxi.xi) / grid.hbar)  # (n_r, n_xi)
    G = vals @ phase.T * gxi.dxi  # (n_x0, n_r)
    u = np.arange(n)
    k_ru = eta[u % n][None, :] * eta[(u[None, :] - u[:, None]) % n]  # [r, u=i-i0]
    conv = np.fft.ifft(np.fft.fft(k_ru, axis=1) * np.fft.fft(G.T, axis=1), axis=1)
    i_idx = np.arange(n)
    r_idx = (i_idx[:, None] - i_idx[None, :]) % n
    K = conv[r_idx, i_idx[:, None]] * grid.dx * c2 / grid.h**grid.d
    K = (K + K.conj().T) / 2
    rho = DensityOperator(grid, K)
    return rho.normalized()


def toeplitz_quantize_dense(g: PhaseSpaceField) -> DensityOperator:
    """Direct quadrature over the full phase-space grid (oracle; O(n^4))."""
    grid = g.grid_x
    _require_1d(grid)
    n = grid.n
    frame = CoherentFrame(grid)
    env = frame.envelope_offsets()
    K = np.zeros((n, n), dtype=complex)
    cell = grid.dx * g.grid_xi.dxi
    for i0 in range(n):
        ev = env[(np.arange(n) - i0) % n]
        nrm = np.sqrt(grid.dx * np.sum(ev**2))
        for m, xi0 in enumerate(g.grid_xi.xi):
            w = g.values[i0, m]
            if w == 0.0:
                continue
            psi = ev * np.exp(1j * grid.x * xi0 / grid.hbar) / nrm
            K += w * cell * np.outer(psi, psi.conj())
    K /= grid.h**grid.d
    return DensityOperator(grid, (K + K.conj().T) / 2).normalized()
