"""Periodic spatial grids and the associated momentum lattice.

Conventions used throughout the package:

* position nodes  x_i = -L/2 + i*dx,  dx = L/n, per axis;
* momentum eigenvalues  p_k = 2*pi*hbar*k/L = h*k/L  with integer
  frequencies k in {-n/2, ..., n/2-1} stored in FFT order;
* an integral operator with kernel A(x, y) is represented by the kernel
  matrix ``A[i, j] ~ A(x_i, x_j)`` and acts on grid functions through the
  quadrature matrix ``M = dx**d * A``, so composition of operators is the
  plain matrix product of their M representations and the operator trace
  is ``trace(M)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["GridSpec"]


def _fft_int_freqs(n: int) -> np.ndarray:
    # integer frequencies {0, 1, ..., n/2-1, -n/2, ..., -1} in FFT order
    return np.fft.fftfreq(n, 1.0 / n).astype(int)


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid with n points per axis on a box of side L in d dimensions.

    Parameters
    ----------
    d : int
        Spatial dimension (1 or 2; the dynamics and transform modules are
        exercised at d = 1).
    n : int
        Points per axis, a power of two.
    L : float
        Box side length.
    hbar : float
        Reduced Planck constant; h = 2*pi*hbar exactly.
    """

    d: int = 1
    n: int = 128
    L: float = 2.0 * np.pi
    hbar: float = 1.0

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"dimension d={self.d} not supported (d in {{1, 2}})")
        if self.n < 2 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"n={self.n} must be a power of two")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        if not self.L > 0:
            raise ValueError("box length must be positive")

    # -- derived quantities ------------------------------------------------

    @property
    def h(self) -> float:
        return 2.0 * np.pi * self.hbar

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def dim(self) -> int:
        """Total number of grid nodes n**d (matrix dimension)."""
        return self.n**self.d

    @property
    def x(self) -> np.ndarray:
        """Position nodes along one axis."""
        return -self.L / 2 + self.dx * np.arange(self.n)

    @property
    def freqs(self) -> np.ndarray:
        """Integer Fourier frequencies along one axis, FFT order."""
        return _fft_int_freqs(self.n)

    @property
    def p(self) -> np.ndarray:
        """Momentum eigenvalues along one axis, FFT order."""
        return self.h * self.freqs / self.L

    @property
    def dxi(self) -> float:
        """Momentum lattice spacing h/L (also the Wigner xi spacing)."""
        return self.h / self.L

    # -- flattened d-dimensional node arrays --------------------------------

    def nodes(self) -> np.ndarray:
        """Position coordinates of all n**d nodes, shape (n**d, d)."""
        axes = [self.x] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def momenta(self) -> np.ndarray:
        """Momentum coordinates of all n**d Fourier modes, shape (n**d, d)."""
        axes = [self.p] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def momentum_abs(self) -> np.ndarray:
        """|p| over all modes, flattened (FFT order per axis)."""
        return np.sqrt((self.momenta() ** 2).sum(axis=-1))

    def wrap(self, delta: np.ndarray) -> np.ndarray:
        """Minimal-image displacement on the periodic box.

        Round-half-to-even keeps the map odd-symmetric at the seam
        (|delta| = L/2), which Hermiticity of the kernel multipliers needs.
        """
        return delta - self.L * np.round(np.asarray(delta) / self.L)

    def pairwise_displacement(self) -> np.ndarray:
        """wrap(x_i - x_j) for all node pairs, shape (n**d, n**d, d)."""
        nodes = self.nodes()
        return self.wrap(nodes[:, None, :] - nodes[None, :, :])

    def pairwise_distance(self) -> np.ndarray:
        """Minimal-image distance |x_i - x_j|, shape (n**d, n**d)."""
        return np.sqrt((self.pairwise_displacement() ** 2).sum(axis=-1))

    # -- FFT helpers on flattened operators ---------------------------------

    def to_fourier(self, vec: np.ndarray) -> np.ndarray:
        """Unitary DFT of a grid function (flattened)."""
        a = vec.reshape((self.n,) * self.d)
        return np.fft.fftn(a, norm="ortho").ravel()

    def from_fourier(self, vec: np.ndarray) -> np.ndarray:
        a = vec.reshape((self.n,) * self.d)
        return np.fft.ifftn(a, norm="ortho").ravel()

    def apply_momentum_diag(self, M: np.ndarray, diag: np.ndarray,
                            side: str = "left") -> np.ndarray:
        """Multiply the quadrature matrix M by a Fourier-diagonal operator.

        ``side='left'`` computes diag(g(p)) @ M in the momentum basis,
        ``side='right'`` computes M @ diag(g(p)). diag is flattened over modes.
        """
        shape = (self.n,) * self.d
        dg = diag.reshape(shape)
        if side == "left":
            A = M.reshape(shape + (self.dim,))
            axes = tuple(range(self.d))
            Ah = np.fft.fftn(A, axes=axes, norm="ortho")
            Ah *= dg.reshape(shape + (1,))
            out = np.fft.ifftn(Ah, axes=axes, norm="ortho")
            return out.reshape(self.dim, self.dim)
        if side == "right":
            A = M.reshape((self.dim,) + shape)
            axes = tuple(range(1, self.d + 1))
            # right multiplication in the momentum basis: conjugate transform
            Ah = np.fft.ifftn(A, axes=axes, norm="ortho")
            Ah *= dg.reshape((1,) + shape)
            out = np.fft.fftn(Ah, axes=axes, norm="ortho")
            return out.reshape(self.dim, self.dim)
        raise ValueError("side must be 'left' or 'right'")

    def compatible(self, other: "GridSpec") -> bool:
        return (
            self.d == other.d
            and self.n == other.n
            and np.isclose(self.L, other.L)
            and np.isclose(self.hbar, other.hbar)
        )
