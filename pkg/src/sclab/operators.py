"""Operator algebra on the discretized one-particle space.

Schatten and rescaled phase-space norms, quantum gradients, momentum
weights, spectral functional calculus, and the flat-binary / CSV exchange
formats.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, svdvals

from .grids import GridSpec

__all__ = [
    "OperatorMatrix",
    "DensityOperator",
    "WeightOperator",
    "schatten_norm",
    "semiclassical_norm",
    "quantum_grad_x",
    "quantum_grad_v",
    "sobolev_norm",
    "SobolevNorms",
    "matrix_function",
    "hermitize",
    "write_operator",
    "read_operator",
    "norm_table_csv",
]

HERMITICITY_TOL = 1e-8


class OperatorMatrix:
    """Dense integral operator on a GridSpec.

    The canonical storage is the quadrature matrix ``matrix`` with
    ``matrix = dx**d * kernel``; composition of two operators is then the
    plain matrix product, and the operator trace is ``trace(matrix)``.
    """

    def __init__(self, grid: GridSpec, matrix: np.ndarray, *,
                 hermitian: bool | None = None,
                 diagonal_in_position: bool = False,
                 diagonal_in_momentum: bool = False):
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (grid.dim, grid.dim):
            raise ValueError(f"matrix shape {matrix.shape} does not match grid dim {grid.dim}")
        self.grid = grid
        self.matrix = matrix
        self.hermitian = hermitian
        self.diagonal_in_position = diagonal_in_position
        self.diagonal_in_momentum = diagonal_in_momentum

    # -- constructors --------------------------------------------------------

    @classmethod
    def from_kernel(cls, grid: GridSpec, kernel: np.ndarray, **flags) -> "OperatorMatrix":
        return cls(grid, grid.dx**grid.d * np.asarray(kernel, dtype=complex), **flags)

    @classmethod
    def from_position_diag(cls, grid: GridSpec, values: np.ndarray) -> "OperatorMatrix":
        return cls(grid, np.diag(np.asarray(values, dtype=complex)),
                   hermitian=bool(np.isrealobj(values)), diagonal_in_position=True)

    @classmethod
    def from_momentum_diag(cls, grid: GridSpec, values: np.ndarray) -> "OperatorMatrix":
        M = grid.apply_momentum_diag(np.eye(grid.dim, dtype=complex),
                                     np.asarray(values, dtype=complex), side="left")
        return cls(grid, M, hermitian=bool(np.isrealobj(values)), diagonal_in_momentum=True)

    @classmethod
    def identity(cls, grid: GridSpec) -> "OperatorMatrix":
        return cls(grid, np.eye(grid.dim, dtype=complex), hermitian=True,
                   diagonal_in_position=True, diagonal_in_momentum=True)

    # -- basic algebra ---------------------------------------------------------

    @property
    def kernel(self) -> np.ndarray:
        return self.matrix / self.grid.dx**self.grid.d

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        self._check_grid(other)
        return OperatorMatrix(self.grid, self.matrix @ other.matrix)

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        self._check_grid(other)
        return OperatorMatrix(self.grid, self.matrix + other.matrix)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        self._check_grid(other)
        return OperatorMatrix(self.grid, self.matrix - other.matrix)

    def __mul__(self, c) -> "OperatorMatrix":
        return OperatorMatrix(self.grid, c * self.matrix)

    __rmul__ = __mul__

    def adjoint(self) -> "OperatorMatrix":
        return OperatorMatrix(self.grid, self.matrix.conj().T, hermitian=self.hermitian)

    def commutator(self, other: "OperatorMatrix") -> "OperatorMatrix":
        self._check_grid(other)
        return OperatorMatrix(self.grid, self.matrix @ other.matrix - other.matrix @ self.matrix)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def _check_grid(self, other):
        if not self.grid.compatible(other.grid):
            raise ValueError("grid mismatch between operands")

    def _check_finite(self):
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("operator contains non-finite entries")


@dataclass(frozen=True)
class WeightOperator:
    """Momentum weight m = 1 + |p|^n_w, diagonal in the Fourier basis."""

    grid: GridSpec
    n_w: int

    def __post_init__(self):
        if self.n_w < 0:
            raise ValueError("weight exponent must be nonnegative")

    @property
    def diag(self) -> np.ndarray:
        return 1.0 + self.grid.momentum_abs() ** self.n_w

    def as_operator(self) -> OperatorMatrix:
        return OperatorMatrix.from_momentum_diag(self.grid, self.diag)

    def apply_right(self, A: OperatorMatrix) -> OperatorMatrix:
        """A @ m without forming the dense weight matrix."""
        M = A.grid.apply_momentum_diag(A.matrix, self.diag.astype(complex), side="right")
        return OperatorMatrix(A.grid, M)


class DensityOperator:
    """Sampled kernel rho(x_i, x_j) of a one-particle density operator.

    Invariants: Hermitian kernel, positive semidefinite quadrature matrix,
    and the semiclassical normalization h**d * Tr(rho) = 1.
    """

    def __init__(self, grid: GridSpec, kernel: np.ndarray):
        kernel = np.asarray(kernel, dtype=complex)
        if kernel.shape != (grid.dim, grid.dim):
            raise ValueError("kernel shape does not match grid")
        self.grid = grid
        self.kernel = kernel

    @property
    def matrix(self) -> np.ndarray:
        return self.grid.dx**self.grid.d * self.kernel

    def as_operator(self) -> OperatorMatrix:
        return OperatorMatrix(self.grid, self.matrix, hermitian=True)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def mass(self) -> float:
        """h**d * Tr(rho); equals 1 for a normalized state."""
        return self.grid.h**self.grid.d * self.trace()

    def spatial_density(self) -> np.ndarray:
        """Diag(rho)(x) = h**d * rho(x, x), the quantum spatial density."""
        return self.grid.h**self.grid.d * np.real(np.diag(self.kernel))

    def normalized(self) -> "DensityOperator":
        return DensityOperator(self.grid, self.kernel / self.mass())

    def validate(self, hermiticity_tol: float = 1e-12, psd_tol: float = 1e-10,
                 mass_tol: float = 1e-8) -> None:
        scale = np.abs(self.kernel).max()
        drift = np.abs(self.kernel - self.kernel.conj().T).max()
        if scale > 0 and drift > hermiticity_tol * scale:
            raise ValueError(f"density kernel not Hermitian (relative drift {drift/scale:.2e})")
        ev = np.linalg.eigvalsh((self.matrix + self.matrix.conj().T) / 2)
        if ev.min() < -psd_tol * max(ev.max(), 0.0):
            raise ValueError(f"density operator not PSD (min eigenvalue {ev.min():.2e})")
        if abs(self.mass() - 1.0) > mass_tol:
            raise ValueError(f"density operator mass {self.mass():.12f} != 1")

    def sqrt(self) -> OperatorMatrix:
        """Operator square root via spectral calculus (tiny negatives clipped)."""
        return matrix_function(self.as_operator(), lambda t: np.sqrt(np.clip(t, 0.0, None)))


def hermitize(A: OperatorMatrix, tol: float = HERMITICITY_TOL,
              scale_ref: float | None = None) -> OperatorMatrix:
    """Repair Hermiticity drift below tol (relative); raise beyond it.

    scale_ref sets the magnitude the drift is compared against (defaults to
    the matrix sup; callers pass the scale of the operation that produced
    the matrix, so a result that is zero up to roundoff stays legal).
    """
    M = A.matrix
    scale = max(np.abs(M).max() if scale_ref is None else scale_ref, 1e-300)
    drift = np.abs(M - M.conj().T).max() / scale
    if drift > tol:
        raise ValueError(f"Hermiticity drift {drift:.2e} exceeds tolerance {tol:.0e}")
    return OperatorMatrix(A.grid, (M + M.conj().T) / 2, hermitian=True)


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def schatten_norm(A: OperatorMatrix, p) -> float:
    """Schatten norm (sum sigma_i^p)^(1/p) of the quadrature matrix; p=inf gives max sigma."""
    if not (np.isinf(p) or p >= 1):
        raise ValueError(f"Schatten order p={p} must satisfy p >= 1 or p = inf")
    A._check_finite()
    if A.hermitian:
        s = np.abs(np.linalg.eigvalsh((A.matrix + A.matrix.conj().T) / 2))
    else:
        s = svdvals(A.matrix)
    if np.isinf(p):
        return float(s.max()) if s.size else 0.0
    if p == 1:
        return float(s.sum())
    if p == 2:
        return float(np.sqrt((s**2).sum()))
    return float((s**p).sum() ** (1.0 / p))


def semiclassical_norm(A: OperatorMatrix, p, weight: WeightOperator | None = None) -> float:
    """Rescaled Schatten norm h**(d/p) * ||A m||_p (the phase-space L^p analogue)."""
    B = weight.apply_right(A) if weight is not None else A
    g = A.grid
    scale = 1.0 if np.isinf(p) else g.h ** (g.d / p)
    return scale * schatten_norm(B, p)


# ---------------------------------------------------------------------------
# quantum gradients
# ---------------------------------------------------------------------------

def quantum_grad_x(A: OperatorMatrix, axis: int = 0) -> OperatorMatrix:
    """Commutator [d/dx_axis, A], spectral with the reduced frequency offset.

    The Fourier element at row/column frequencies (k, l) is multiplied by
    (2*pi*i/L) * wrap_n(k - l), the minimal image of the frequency offset
    (the mirror of the minimal-image position offset used by Dv). With this
    convention Dx commutes exactly with entrywise offset multipliers such
    as the exchange construction, and it intertwines with the spectral
    x-derivative of the Wigner transform.
    """
    g = A.grid
    if not 0 <= axis < g.d:
        raise ValueError("axis out of range")
    n = g.n
    shape = (n,) * g.d
    A4 = A.matrix.reshape(shape + shape)
    row_axes = tuple(range(g.d))
    col_axes = tuple(range(g.d, 2 * g.d))
    Ah = np.fft.fftn(np.fft.ifftn(A4, axes=col_axes), axes=row_axes)
    kk = g.freqs
    sl_row = [None] * (2 * g.d)
    sl_col = [None] * (2 * g.d)
    sl_row[axis] = slice(None)
    sl_col[g.d + axis] = slice(None)
    diff = kk[tuple(sl_row)] - kk[tuple(sl_col)]
    red = diff - n * np.round(diff / n)
    Ah = Ah * (2j * np.pi / g.L) * red
    out_m = np.fft.fftn(np.fft.ifftn(Ah, axes=row_axes), axes=col_axes)
    out = OperatorMatrix(g, out_m.reshape(g.dim, g.dim))
    if A.hermitian:
        ref = np.abs(A.matrix).max() * 2 * np.pi * (n / 2) / g.L + 1e-300
        out = hermitize(out, scale_ref=ref)
    return out


def quantum_grad_v(A: OperatorMatrix, axis: int = 0) -> OperatorMatrix:
    """Commutator [x_axis/(i*hbar), A]: kernel multiplier wrap(x-y)/(i*hbar)."""
    g = A.grid
    if not 0 <= axis < g.d:
        raise ValueError("axis out of range")
    disp = g.pairwise_displacement()[:, :, axis]
    out = OperatorMatrix(g, disp / (1j * g.hbar) * A.matrix)
    if A.hermitian:
        ref = np.abs(out.matrix).max() + np.abs(A.matrix).max() * g.L / (2 * g.hbar)
        out = hermitize(out, scale_ref=ref)
    return out


@dataclass(frozen=True)
class SobolevNorms:
    """Weighted kinetic Sobolev norms: homogeneous part and full norm."""

    homogeneous: float
    inhomogeneous: float
    order: int
    p: float
    n_w: int | None


def sobolev_norm(A: OperatorMatrix, p, n_w: int | None, order: int = 1) -> SobolevNorms:
    """Semiclassical Sobolev norm of order 1 or 2 with momentum weight 1+|p|^n_w.

    Order 1 aggregates ||Dv_j A||_{L^p(m)} and ||Dx_j A||_{L^p(m)} over axes;
    order 2 adds all second gradients Dx^2, Dv^2 and DvDx. For finite p the
    aggregation is an l^p sum, for p = inf a sup. n_w = None drops the weight.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    g = A.grid
    w = WeightOperator(g, n_w) if n_w is not None else None
    grads = []
    for ax in range(g.d):
        dv = quantum_grad_v(A, ax)
        dxo = quantum_grad_x(A, ax)
        grads.extend([dv, dxo])
        if order == 2:
            grads.append(quantum_grad_x(dxo, ax))
            grads.append(quantum_grad_v(dv, ax))
            grads.append(quantum_grad_v(dxo, ax))
    terms = [semiclassical_norm(Gv, p, w) for Gv in grads]
    base = semiclassical_norm(A, p, w)
    if np.isinf(p):
        hom = max(terms)
        inhom = max(base, hom)
    else:
        hom = float(np.sum(np.asarray(terms) ** p) ** (1.0 / p))
        inhom = float((base**p + hom**p) ** (1.0 / p))
    return SobolevNorms(hom, inhom, order, p, n_w)


# ---------------------------------------------------------------------------
# functional calculus
# ---------------------------------------------------------------------------

def matrix_function(A: OperatorMatrix, f) -> OperatorMatrix:
    """f(A) for Hermitian A by eigendecomposition U f(Lambda) U*."""
    A._check_finite()
    M = (A.matrix + A.matrix.conj().T) / 2
    scale = max(np.abs(A.matrix).max(), 1e-300)
    if np.abs(A.matrix - M).max() > HERMITICITY_TOL * scale:
        raise ValueError("matrix_function requires a Hermitian operator")
    ev, V = eigh(M)
    with np.errstate(all="ignore"):
        fv = np.asarray(f(ev))
    bad = ~np.isfinite(fv)
    if np.any(bad):
        raise ValueError(f"function undefined on eigenvalue {ev[np.argmax(bad)]:.6e}")
    return OperatorMatrix(A.grid, (V * fv) @ V.conj().T,
                          hermitian=bool(np.isrealobj(fv)))


def unitary_exp(H: OperatorMatrix, scale: complex) -> OperatorMatrix:
    """exp(scale * H) for Hermitian H (scale typically -i*dt/hbar)."""
    M = (H.matrix + H.matrix.conj().T) / 2
    ev, V = eigh(M, driver="evr", check_finite=False)
    return OperatorMatrix(H.grid, (V * np.exp(scale * ev)) @ V.conj().T)


# ---------------------------------------------------------------------------
# external interfaces
# ---------------------------------------------------------------------------

_HEADER_LEN = 64


def write_operator(path, A: OperatorMatrix) -> None:
    """Flat binary dump: 64-byte text header + interleaved (re, im) float64 LE.

    The payload is the sampled kernel, row-major.
    """
    g = A.grid
    header = f"SCLAB-OP d={g.d} n={g.n} L={g.L!r} hbar={g.hbar!r}"
    raw = header.encode("ascii")
    if len(raw) > _HEADER_LEN:
        raise ValueError("header too long for 64-byte field")
    raw = raw.ljust(_HEADER_LEN)
    K = A.kernel.astype(complex)
    inter = np.empty(K.size * 2, dtype="<f8")
    inter[0::2] = K.real.ravel()
    inter[1::2] = K.imag.ravel()
    with open(path, "wb") as fh:
        fh.write(raw)
        fh.write(inter.tobytes())


def read_operator(path) -> OperatorMatrix:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER_LEN).decode("ascii").strip()
        if not raw.startswith("SCLAB-OP"):
            raise ValueError("not an SCLAB-OP file")
        fields = dict(tok.split("=") for tok in raw.split()[1:])
        g = GridSpec(d=int(fields["d"]), n=int(fields["n"]),
                     L=float(fields["L"]), hbar=float(fields["hbar"]))
        data = np.frombuffer(fh.read(), dtype="<f8")
    K = (data[0::2] + 1j * data[1::2]).reshape(g.dim, g.dim)
    return OperatorMatrix.from_kernel(g, K)


def norm_table_csv(rows) -> str:
    """CSV with columns name,p,weight_n,value from (name, p, n_w, value) tuples."""
    buf = io.StringIO()
    buf.write("name,p,weight_n,value\n")
    for name, p, n_w, value in rows:
        pstr = "inf" if np.isinf(p) else repr(float(p)) if isinstance(p, float) else str(p)
        buf.write(f"{name},{pstr},{n_w},{value!r}\n")
    return buf.getvalue()
