import numpy as np
import pytest

from sclab import GridSpec, DensityOperator, build_kernel


@pytest.fixture
def grid32():
    return GridSpec(d=1, n=32, L=2 * np.pi, hbar=0.25)


@pytest.fixture
def grid64():
    return GridSpec(d=1, n=64, L=2 * np.pi, hbar=0.125)


@pytest.fixture
def kernel32(grid32):
    return build_kernel(0.5, 1.0, 0.0, grid32)


def band_limited_hermitian(rng, grid, frac=4):
    """Random Hermitian kernel with Fourier support in the inner band."""
    n = grid.n
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Ah = np.fft.ifft(np.fft.fft(A, axis=0), axis=1)
    kk = grid.freqs
    mask = (np.abs(kk[:, None]) < n // frac) & (np.abs(kk[None, :]) < n // frac)
    Ab = np.fft.ifft(np.fft.fft(np.where(mask, Ah, 0), axis=1), axis=0)
    return (Ab + Ab.conj().T) / 2


def random_density(rng, grid, frac=4):
    """Smooth random normalized PSD density operator."""
    B = band_limited_hermitian(rng, grid, frac)
    K = B @ B.conj().T * grid.dx**grid.d  # PSD kernel of B^2 as operator
    rho = DensityOperator(grid, K)
    return rho.normalized()


def toeplitz_gaussian(grid, x0=0.0, xi0=0.3, sx=0.7, sxi=0.35):
    from sclab.experiments import gaussian_symbol
    from sclab import toeplitz_quantize
    return toeplitz_quantize(gaussian_symbol(grid, x0, xi0, sx, sxi))


def toeplitz_random_density(rng, grid, bumps=3):
    """Smooth localized random density: Toeplitz quantization of a random
    positive bump mixture (kernel decays away from the diagonal, so the
    wrap-seam artifacts of the discrete transforms are negligible)."""
    from sclab import toeplitz_quantize
    from sclab.vlasov import PhaseSpaceField, XiGrid

    gxi = XiGrid.matching(grid)
    X = grid.x[:, None]
    XI = gxi.xi[None, :]
    vals = np.zeros((grid.n, gxi.n_xi))
    for _ in range(bumps):
        x0 = rng.uniform(-0.8, 0.8)
        xi0 = rng.uniform(-0.15, 0.15) * gxi.Xi
        sx = rng.uniform(0.45, 0.8)
        # >= 8 sigma of headroom to the xi box edge keeps spectral
        # derivatives clean of truncation artifacts
        sxi = rng.uniform(0.08, 0.10) * gxi.Xi
        w = rng.uniform(0.3, 1.0)
        vals += w * np.exp(-((X - x0) ** 2) / (2 * sx**2)
                           - ((XI - xi0) ** 2) / (2 * sxi**2))
    f = PhaseSpaceField(grid, gxi, vals).normalized()
    return toeplitz_quantize(f)
