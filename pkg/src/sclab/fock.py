"""Exact many-body fermionic dynamics on a small number of modes.

Jordan-Wigner ladder operators (mode 0 on the most significant qubit),
second quantization, the pair-interaction Fock Hamiltonian with 1/N
coupling, quasi-free Gaussian mixed states with a prescribed one-particle
density matrix, reduced density matrices, and the mode-projected
Hartree-Fock flow used for mean-field comparisons.

hbar = 1 throughout this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import eigh, expm, logm

from .grids import GridSpec
from .potential import KernelSpec

__all__ = [
    "MAX_MODES",
    "FockOperator",
    "ManyBodyState",
    "ModeBasis",
    "ladder_matrices",
    "number_operator",
    "second_quantize",
    "many_body_hamiltonian",
    "gaussian_state",
    "slater_state",
    "reduced_density_matrix",
    "evolve_exact",
    "fermionic_bound_check",
    "powers_stormer_check",
    "hf_mode_flow",
]

MAX_MODES = 12


def _check_modes(M: int):
    if not 1 <= M <= MAX_MODES:
        raise ValueError(f"mode count M={M} outside supported range 1..{MAX_MODES}")


def ladder_matrices(M: int) -> list[sparse.csr_matrix]:
    """Jordan-Wigner annihilation operators a_0..a_{M-1} (integer entries).

    Creation operators are the adjoints. Basis ordering: occupation string
    with mode 0 on the most significant bit.
    """
    _check_modes(M)
    lower = sparse.csr_matrix(np.array([[0, 1], [0, 0]], dtype=np.int8))
    sz = sparse.csr_matrix(np.array([[1, 0], [0, -1]], dtype=np.int8))
    eye2 = sparse.identity(2, dtype=np.int8, format="csr")
    out = []
    for i in range(M):
        factors = [sz] * i + [lower] + [eye2] * (M - 1 - i)
        op = factors[0]
        for fmat in factors[1:]:
            op = sparse.kron(op, fmat, format="csr")
        out.append(op)
    return out


def occupations(M: int) -> np.ndarray:
    """occ[b, i] = occupation of mode i in basis state b."""
    b = np.arange(2**M)
    return ((b[:, None] >> (M - 1 - np.arange(M))[None, :]) & 1).astype(float)


def number_operator(M: int) -> np.ndarray:
    """Diagonal of the particle-number operator."""
    return occupations(M).sum(axis=1)


@dataclass
class FockOperator:
    """Dense operator on the 2^M Fock space in occupation ordering."""

    M: int
    matrix: np.ndarray
    hermitian: bool = False
    number_conserving: bool = False

    def __post_init__(self):
        D = 2**self.M
        if self.matrix.shape != (D, D):
            raise ValueError("matrix dimension does not match mode count")
        if self.number_conserving:
            nd = number_operator(self.M)
            comm = np.abs(self.matrix * (nd[None, :] - nd[:, None])).max()
            if comm > 1e-12 * max(np.abs(self.matrix).max(), 1e-300):
                raise ValueError("operator flagged number-conserving does not commute with N")


@dataclass
class ManyBodyState:
    """Mixed state on the 2^M Fock space, unit trace (desk convention)."""

    M: int
    matrix: np.ndarray

    def validate(self, tol: float = 1e-10):
        D = 2**self.M
        if self.matrix.shape != (D, D):
            raise ValueError("state dimension mismatch")
        if np.abs(self.matrix - self.matrix.conj().T).max() > tol:
            raise ValueError("state not Hermitian")
        ev = np.linalg.eigvalsh(self.matrix)
        if ev.min() < -tol:
            raise ValueError(f"state not PSD (min eigenvalue {ev.min():.2e})")
        if abs(np.trace(self.matrix).real - 1.0) > tol:
            raise ValueError("state trace != 1")

    def expectation(self, op) -> complex:
        mat = op.matrix if isinstance(op, FockOperator) else op
        mat = mat.toarray() if sparse.issparse(mat) else mat
        return complex(np.trace(mat @ self.matrix))


def second_quantize(O: np.ndarray, ladders=None) -> FockOperator:
    """dGamma(O) = sum_ij O_ij a_i^dag a_j; number-conserving by construction."""
    O = np.asarray(O, dtype=complex)
    M = O.shape[0]
    if O.shape != (M, M):
        raise ValueError("one-body matrix must be square")
    _check_modes(M)
    if ladders is None:
        ladders = ladder_matrices(M)
    D = 2**M
    acc = sparse.csr_matrix((D, D), dtype=complex)
    for i in range(M):
        row = sparse.csr_matrix((D, D), dtype=complex)
        for j in range(M):
            if O[i, j] != 0:
                row = row + O[i, j] * ladders[j]
        if row.nnz:
            acc = acc + ladders[i].conj().T.astype(complex) @ row
    herm = bool(np.abs(O - O.conj().T).max() < 1e-14 * max(np.abs(O).max(), 1e-300))
    return FockOperator(M, np.asarray(acc.todense()), hermitian=herm,
                        number_conserving=True)


# ---------------------------------------------------------------------------
# mode basis and Hamiltonian
# ---------------------------------------------------------------------------

@dataclass
class ModeBasis:
    """M orthonormal modes with one-body matrix T and pair tensor K_{ijkl}."""

    M: int
    T: np.ndarray
    K: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        _check_modes(self.M)
        if self.T.shape != (self.M, self.M):
            raise ValueError("one-body matrix shape mismatch")
        if self.K.shape != (self.M,) * 4:
            raise ValueError("pair tensor shape mismatch")
        if np.abs(self.T - self.T.conj().T).max() > 1e-12 * max(np.abs(self.T).max(), 1e-300):
            raise ValueError("one-body matrix must be Hermitian")
        scale = max(np.abs(self.K).max(), 1e-300)
        if np.abs(self.K - self.K.transpose(1, 0, 3, 2)).max() > 1e-10 * scale:
            raise ValueError("pair tensor violates K_ijkl = K_jilk")
        if np.abs(self.K - self.K.conj().transpose(2, 3, 0, 1)).max() > 1e-10 * scale:
            raise ValueError("pair tensor violates K_ijkl = conj(K_klij)")

    @classmethod
    def plane_waves(cls, grid: GridSpec, M: int, kernel: KernelSpec) -> "ModeBasis":
        """First M plane waves (by |k|, ties toward negative k) with hbar = 1."""
        if grid.d != 1:
            raise NotImplementedError("plane-wave mode bases are built in d = 1")
        _check_modes(M)
        ks = sorted(range(-M, M + 1), key=lambda k: (abs(k), k))[:M]
        ks = np.asarray(ks)
        p = 2 * np.pi * ks / grid.L  # hbar = 1 in this module
        T = np.diag(p**2 / 2.0).astype(complex)
        x = grid.x
        phi = np.exp(2j * np.pi * np.outer(ks, x) / grid.L) / np.sqrt(grid.L)
        dx = grid.dx
        # K_{ijkl} = int A_ik(x) (K * B_jl)(x) dx with A_ik = conj(phi_i) phi_k
        A = np.einsum("ix,kx->ikx", phi.conj(), phi)
        # kernel samples as function of displacement index
        row = kernel.samples[:, 0]
        i0 = 0
        Kdisp = np.roll(row, -i0)  # K at displacement d*dx
        Khat = np.fft.fft(Kdisp)
        conv = np.fft.ifft(np.fft.fft(A, axis=2) * Khat[None, None, :], axis=2) * dx
        Kt = np.einsum("jlx,ikx->ijkl", A, conv) * dx
        # enforce exact fermionic symmetries against roundoff
        Kt = (Kt + Kt.transpose(1, 0, 3, 2)) / 2
        Kt = (Kt + Kt.conj().transpose(2, 3, 0, 1)) / 2
        return cls(M=M, T=T, K=Kt, labels=tuple(int(k) for k in ks))


def pair_interaction(basis: ModeBasis, ladders=None) -> np.ndarray:
    """W = (1/2) sum_ijkl K_{ijkl} a_i^dag a_j^dag a_l a_k (dense matrix).

    The N-dependent Hamiltonian is dGamma(T) + W/N, so sweeps over N reuse
    this once-per-basis construction. Dense M^2 x 2^M x 2^M scratch is kept
    only up to M = 8; larger mode counts use the slower sparse path.
    """
    M = basis.M
    if ladders is None:
        ladders = ladder_matrices(M)
    D = 2**M
    W = np.zeros((D, D), dtype=complex)
    if M <= 8:
        pt = np.empty((M, M, D, D), dtype=complex)
        for j in range(M):
            ajd = ladders[j].conj().T
            for l in range(M):
                pt[j, l] = np.asarray((ajd @ ladders[l]).todense(), dtype=complex)
        for i in range(M):
            ai_d = ladders[i].conj().T
            for k in range(M):
                inner = np.tensordot(basis.K[i, :, k, :], pt, axes=([0, 1], [0, 1]))
                W += ai_d @ (inner @ ladders[k]) / 2
    else:
        for i in range(M):
            ai_d = ladders[i].conj().T
            for j in range(M):
                ajd = ladders[j].conj().T
                for k in range(M):
                    row = sparse.csr_matrix((D, D), dtype=complex)
                    for l in range(M):
                        v = basis.K[i, j, k, l]
                        if abs(v) > 1e-16:
                            row = row + v * ladders[l]
                    if row.nnz:
                        W += np.asarray((ai_d @ ajd @ row @ ladders[k]).todense()) / 2
    return (W + W.conj().T) / 2


def many_body_hamiltonian(basis: ModeBasis, N: float, ladders=None,
                          interaction: np.ndarray | None = None) -> FockOperator:
    """H_N = dGamma(T) + (1/2N) sum K_{ijkl} a_i^dag a_j^dag a_l a_k."""
    if not N > 0:
        raise ValueError("mean particle number N must be positive")
    M = basis.M
    if ladders is None:
        ladders = ladder_matrices(M)
    if interaction is None:
        interaction = pair_interaction(basis, ladders)
    H = second_quantize(basis.T, ladders).matrix + interaction / N
    H = (H + H.conj().T) / 2
    return FockOperator(M, H, hermitian=True, number_conserving=True)


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

def gaussian_state(omega: np.ndarray, ladders=None) -> ManyBodyState:
    """Quasi-free mixed state with one-particle density matrix omega.

    Diagonalize omega = W w W^dag, take the product state with occupation
    probabilities w in the rotated modes, and rotate back with the Fock
    rotation Gamma(W) = exp(dGamma(log W)). Eigenvalues at exactly 0 or 1
    (Slater directions) are handled by the same construction.
    """
    omega = np.asarray(omega, dtype=complex)
    M = omega.shape[0]
    _check_modes(M)
    if np.abs(omega - omega.conj().T).max() > 1e-12 * max(np.abs(omega).max(), 1e-300):
        raise ValueError("omega must be Hermitian")
    w, W = eigh(omega)
    if w.min() < -1e-12 or w.max() > 1 + 1e-12:
        raise ValueError(f"omega spectrum [{w.min():.3e}, {w.max():.3e}] outside [0, 1]")
    w = np.clip(w, 0.0, 1.0)
    if ladders is None:
        ladders = ladder_matrices(M)
    occ = occupations(M)
    probs = np.prod(np.where(occ == 1, w[None, :], 1.0 - w[None, :]), axis=1)
    A = logm(W)
    G = expm(second_quantize(A, ladders).matrix)
    rho = (G * probs[None, :]) @ G.conj().T
    rho = (rho + rho.conj().T) / 2
    rho /= np.trace(rho).real
    return ManyBodyState(M, rho)


def slater_state(orbitals: np.ndarray, M: int, ladders=None) -> ManyBodyState:
    """Pure Slater determinant of orthonormal orbitals (columns, M x N)."""
    _check_modes(M)
    if ladders is None:
        ladders = ladder_matrices(M)
    D = 2**M
    vac = np.zeros(D, dtype=complex)
    vac[0] = 1.0
    psi = vac
    for c in range(orbitals.shape[1]):
        create = sparse.csr_matrix((D, D), dtype=complex)
        for i in range(M):
            if orbitals[i, c] != 0:
                create = create + orbitals[i, c] * ladders[i].conj().T
        psi = create @ psi
    nrm = np.linalg.norm(psi)
    if nrm < 1e-12:
        raise ValueError("orbitals produced a null determinant")
    psi = psi / nrm
    return ManyBodyState(M, np.outer(psi, psi.conj()))


def reduced_density_matrix(state: ManyBodyState, ladders=None) -> np.ndarray:
    """gamma_ij = Tr(state a_j^dag a_i); Hermitian PSD with trace <N>."""
    M = state.M
    if ladders is None:
        ladders = ladder_matrices(M)
    g = np.zeros((M, M), dtype=complex)
    for i in range(M):
        ai = ladders[i]
        for j in range(i, M):
            val = np.trace(np.asarray((ladders[j].conj().T @ ai).todense()) @ state.matrix)
            g[i, j] = val
            g[j, i] = np.conj(val)
    return g


def evolve_exact(state: ManyBodyState, H: FockOperator, T: float,
                 dt_report: float) -> tuple[np.ndarray, list[ManyBodyState]]:
    """Exact unitary evolution; snapshots at multiples of dt_report up to T.

    hbar = 1: state(t) = exp(-itH) state exp(+itH) via one eigendecomposition.
    """
    if 2**H.M > 4096:
        raise ValueError("Fock dimension above the supported 4096")
    if not H.hermitian:
        raise ValueError("Hamiltonian must be Hermitian")
    ev, V = eigh(H.matrix)
    rho0 = V.conj().T @ state.matrix @ V
    nrep = int(round(T / dt_report))
    times = np.array([k * dt_report for k in range(nrep + 1)])
    out = []
    for t in times:
        ph = np.exp(-1j * ev * t)
        rho_t = V @ (ph[:, None] * rho0 * ph.conj()[None, :]) @ V.conj().T
        out.append(ManyBodyState(state.M, (rho_t + rho_t.conj().T) / 2))
    return times, out


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

def fermionic_bound_check(gamma: np.ndarray, N: float, tol: float = 1e-10) -> dict:
    """Margins of 0 <= gamma <= (Tr gamma / N) and ||g||_2^2 <= ||g||_1 ||g||_inf."""
    gamma = np.asarray(gamma)
    ev = np.linalg.eigvalsh((gamma + gamma.conj().T) / 2)
    tr = ev.sum()
    upper = tr / N
    hs2 = float((ev**2).sum())
    prod = float(np.abs(ev).sum() * np.abs(ev).max())
    report = {
        "min_eig": float(ev.min()),
        "upper_margin": float(upper - ev.max()),
        "hs_margin": prod - hs2,
        "passed": bool(ev.min() >= -tol and ev.max() <= upper + tol
                       and hs2 <= prod + tol),
    }
    return report


def powers_stormer_check(A: np.ndarray, B: np.ndarray, tol: float = 1e-10) -> dict:
    """Tr|A-B|^2 <= Tr|A^2-B^2| for PSD A, B."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    for name, X in (("A", A), ("B", B)):
        ev = np.linalg.eigvalsh((X + X.conj().T) / 2)
        if ev.min() < -tol * max(abs(ev.max()), 1e-300):
            raise ValueError(f"operand {name} is not PSD")
    lhs = float(np.sum(np.abs(np.linalg.eigvalsh(A - B)) ** 2))
    rhs = float(np.sum(np.abs(np.linalg.eigvalsh(A @ A - B @ B))))
    return {"lhs": lhs, "rhs": rhs, "passed": bool(lhs <= rhs * (1 + 1e-12) + tol)}


# ---------------------------------------------------------------------------
# mode-projected Hartree-Fock flow
# ---------------------------------------------------------------------------

def _hf_mode_rhs(gamma, T, K, N):
    direct = np.einsum("ijkl,lj->ik", K, gamma)
    exch = np.einsum("ijlk,lj->ik", K, gamma)
    h = T + (direct - exch) / N
    return -1j * (h @ gamma - gamma @ h)


def hf_mode_flow(basis: ModeBasis, gamma0: np.ndarray, N: float, T: float,
                 dt: float = 2.5e-4) -> np.ndarray:
    """Time-dependent Hartree-Fock in the mode basis (RK4), same truncation
    as the exact flow so the comparison isolates the mean-field error."""
    g = np.asarray(gamma0, dtype=complex).copy()
    nsteps = int(round(T / dt))
    for _ in range(nsteps):
        k1 = _hf_mode_rhs(g, basis.T, basis.K, N)
        k2 = _hf_mode_rhs(g + dt / 2 * k1, basis.T, basis.K, N)
        k3 = _hf_mode_rhs(g + dt / 2 * k2, basis.T, basis.K, N)
        k4 = _hf_mode_rhs(g + dt * k3, basis.T, basis.K, N)
        g = g + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return g
