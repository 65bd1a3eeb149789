"""Randomized property-test oracles for explicit-constant operator inequalities.

Every check asserts the inequality with its explicit constant over a
deterministic stream of random instances; a report records trials,
violations (relative slack beyond the per-ensemble tolerance), the worst
margin, and the seed of the worst instance. On violation the runner
shrinks toward the smallest instance size that still violates.
"""

from __future__ import annotations

import io
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import svdvals, sqrtm

from .grids import GridSpec
from .operators import OperatorMatrix
from . import fock

__all__ = [
    "InstanceGenerator",
    "ViolationReport",
    "check_unmixing",
    "check_ad_expansion",
    "check_kss",
    "check_diag_trace",
    "check_commutator_transport",
    "check_powers_stormer",
    "check_fermionic_bound",
    "check_dgamma_bound",
    "check_nabla_u",
    "check_exchange_identities",
    "run_suite",
    "DEFAULT_TRIALS",
    "suite_csv",
]

MATRIX_SLACK = 1e-12
GRID_SLACK = 1e-9

# per-check default trial counts; total >= 10^4
DEFAULT_TRIALS = {
    "unmixing": 2500,
    "ad_expansion": 2000,
    "kss": 1200,
    "diag_trace": 800,
    "commutator_transport": 800,
    "powers_stormer": 1500,
    "fermionic_bound": 800,
    "dgamma_bound": 300,
    "nabla_u": 200,
    "exchange_identities": 100,
}


@dataclass(frozen=True)
class InstanceGenerator:
    """Deterministic instance stream: seed + check name + index -> rng."""

    seed: int = 0
    min_size: int = 2
    max_size: int = 16
    grid_n: int = 32
    grid_L: float = 2 * np.pi
    grid_hbar: float = 0.5

    def rng(self, name: str, index: int) -> np.random.Generator:
        tag = zlib.crc32(name.encode())
        return np.random.default_rng([self.seed & 0xFFFFFFFF, tag, index])

    def size(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.min_size, self.max_size + 1))

    def grid(self) -> GridSpec:
        return GridSpec(d=1, n=self.grid_n, L=self.grid_L, hbar=self.grid_hbar)

    # -- ensembles ----------------------------------------------------------

    @staticmethod
    def gue(rng, size) -> np.ndarray:
        A = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
        return (A + A.conj().T) / 2

    @staticmethod
    def wishart(rng, size) -> np.ndarray:
        A = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
        return A @ A.conj().T

    def smooth_trig(self, rng, grid: GridSpec, decay: float = 4.0) -> np.ndarray:
        """Real band-limited random field on the grid."""
        n = grid.n
        kk = grid.freqs
        c = rng.normal(size=n) + 1j * rng.normal(size=n)
        c *= np.exp(-((np.abs(kk) / decay) ** 2))
        c[np.abs(kk) >= n // 4] = 0.0
        f = np.fft.ifft(c * n)
        f = f.real
        return f

    def band_limited_hermitian(self, rng, grid: GridSpec) -> np.ndarray:
        """Random Hermitian kernel with Fourier support in the inner half band."""
        n = grid.n
        A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        Ah = np.fft.ifft(np.fft.fft(A, axis=0), axis=1)
        kk = grid.freqs
        mask = (np.abs(kk[:, None]) < n // 4) & (np.abs(kk[None, :]) < n // 4)
        Ab = np.fft.ifft(np.fft.fft(np.where(mask, Ah, 0), axis=1), axis=0)
        return (Ab + Ab.conj().T) / 2


@dataclass
class ViolationReport:
    name: str
    trials: int
    violations: int
    worst_margin: float
    worst_seed: int
    worst_size: int
    slack: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _schatten(M, p):
    s = svdvals(M)
    if np.isinf(p):
        return float(s.max()) if s.size else 0.0
    return float((s**p).sum() ** (1.0 / p))


def _run(name, gen: InstanceGenerator, trials: int, trial_fn, slack) -> ViolationReport:
    violations = 0
    worst_margin = np.inf
    worst_seed = -1
    worst_size = 0
    for t in range(trials):
        rng = gen.rng(name, t)
        size = gen.size(rng)
        margin = trial_fn(rng, size)
        if margin < worst_margin:
            worst_margin = margin
            worst_seed = t
            worst_size = size
        if margin < -slack:
            violations += 1
            # shrink: same instance stream at smaller sizes
            s = size // 2
            while s >= gen.min_size:
                m2 = trial_fn(gen.rng(name, t), s)
                if m2 < -slack:
                    worst_size = s
                s //= 2
    return ViolationReport(name, trials, violations, float(worst_margin),
                           worst_seed, worst_size, slack)


# ---------------------------------------------------------------------------
# matrix-ensemble checks
# ---------------------------------------------------------------------------

def check_unmixing(gen: InstanceGenerator, trials: int,
                   constant: float = 2.0, constant_psd: float = 1.0) -> ViolationReport:
    """||B^n A B^m||_p <= 2 ||A B^(n+m)||_p (constant 1 for PSD A)."""

    def trial(rng, size):
        B = gen.gue(rng, size)
        A = gen.gue(rng, size)
        P = gen.wishart(rng, size)
        nn = int(rng.integers(0, 4))
        mm = int(rng.integers(0, 4))
        Bn = np.linalg.matrix_power(B, nn)
        Bm = np.linalg.matrix_power(B, mm)
        Bnm = np.linalg.matrix_power(B, nn + mm)
        margin = np.inf
        for p in (1, 2, 4, np.inf):
            for X, c in ((A, constant), (P, constant_psd)):
                lhs = _schatten(Bn @ X @ Bm, p)
                rhs = c * _schatten(X @ Bnm, p)
                margin = min(margin, (rhs - lhs) / max(abs(rhs), 1e-300))
        return margin

    return _run("unmixing", gen, trials, trial, MATRIX_SLACK)


def check_ad_expansion(gen: InstanceGenerator, trials: int,
                       base: float = 2.0) -> ViolationReport:
    """||ad_B^n(A)||_p <= 2^(n+1) ||A B^n||_p for n <= 4."""

    def trial(rng, size):
        A = gen.gue(rng, size)
        B = gen.gue(rng, size)
        n = int(rng.integers(0, 5))
        ad = A.copy()
        for _ in range(n):
            ad = B @ ad - ad @ B
        Bn = np.linalg.matrix_power(B, n)
        margin = np.inf
        for p in (1, 2, 4, np.inf):
            lhs = _schatten(ad, p)
            rhs = base ** (n + 1) * _schatten(A @ Bn, p)
            margin = min(margin, (rhs - lhs) / max(abs(rhs), 1e-300))
        return margin

    return _run("ad_expansion", gen, trials, trial, MATRIX_SLACK)


def check_powers_stormer(gen: InstanceGenerator, trials: int,
                         constant: float = 1.0) -> ViolationReport:
    """Tr|A-B|^2 <= Tr|A^2-B^2| for PSD pairs at sizes {4, 8, 16}."""

    def trial(rng, size):
        size = int(rng.choice([4, 8, 16]))
        A = gen.wishart(rng, size)
        B = gen.wishart(rng, size)
        lhs = float(np.sum(np.abs(np.linalg.eigvalsh(A - B)) ** 2))
        rhs = constant * float(np.sum(np.abs(np.linalg.eigvalsh(A @ A - B @ B))))
        return (rhs - lhs) / max(abs(rhs), 1e-300)

    return _run("powers_stormer", gen, trials, trial, MATRIX_SLACK)


# ---------------------------------------------------------------------------
# grid-ensemble checks
# ---------------------------------------------------------------------------

def check_kss(gen: InstanceGenerator, trials: int) -> ViolationReport:
    """||f(x) g(p)||_{L^p} <= ||f||_{L^p} ||g||_{L^p} for p in {2,4,8};
    equality at p = 2 (asserted to 1e-9)."""
    grid = gen.grid()
    n = grid.n
    h, dx, dp = grid.h, grid.dx, grid.dxi

    def trial(rng, size):
        f = gen.smooth_trig(rng, grid)
        g = gen.smooth_trig(rng, grid)
        Fg = grid.apply_momentum_diag(np.eye(n, dtype=complex), g.astype(complex), "left")
        M = f[:, None] * Fg
        margin = np.inf
        for p in (2, 4, 8):
            lhs = h ** (1 / p) * _schatten(M, p)
            rhs = (dx * np.sum(np.abs(f) ** p)) ** (1 / p) * (dp * np.sum(np.abs(g) ** p)) ** (1 / p)
            margin = min(margin, (rhs - lhs) / max(abs(rhs), 1e-300))
            if p == 2:
                margin = min(margin, 1e-9 - abs(rhs - lhs) / max(abs(rhs), 1e-300))
        return margin

    return _run("kss", gen, trials, trial, GRID_SLACK)


def check_diag_trace(gen: InstanceGenerator, trials: int) -> ViolationReport:
    """||Diag mu||_{L^p} <= 2 ||w||^2_{L^(2p')} ||mu m||_{L^p}, w = m^(-1/2).

    The constant is evaluated by quadrature on the momentum lattice, making
    every step of the duality/KSS/unmixing proof discrete-exact.
    """
    grid = gen.grid()
    n, h, dx, dp = grid.n, grid.h, grid.dx, grid.dxi
    pabs = grid.momentum_abs()

    def trial(rng, size):
        mu = gen.gue(rng, n)  # dense Hermitian kernel
        Mmu = dx * mu
        diag = h * np.real(np.diag(mu))
        margin = np.inf
        for p in (2, 4, np.inf):
            pprime = p / (p - 1) if not np.isinf(p) else 1.0
            n_w = int(np.ceil(grid.d / pprime + 1e-9)) + int(rng.integers(1, 3))
            w = (1.0 + pabs**n_w) ** (-0.5)
            Cconst = 2.0 * (dp * np.sum(w ** (2 * pprime))) ** (1.0 / pprime)
            if np.isinf(p):
                lhs = np.abs(diag).max()
                rhs_norm = _schatten(grid.apply_momentum_diag(Mmu, (1.0 + pabs**n_w).astype(complex), "right"), p)
                rhs = Cconst * rhs_norm
            else:
                lhs = (dx * np.sum(np.abs(diag) ** p)) ** (1 / p)
                rhs_norm = _schatten(grid.apply_momentum_diag(Mmu, (1.0 + pabs**n_w).astype(complex), "right"), p)
                rhs = Cconst * h ** (1 / p) * rhs_norm
            margin = min(margin, (rhs - lhs) / max(abs(rhs), 1e-300))
        return margin

    return _run("diag_trace", gen, trials, trial, GRID_SLACK)


def check_commutator_transport(gen: InstanceGenerator, trials: int) -> ViolationReport:
    """(1/hbar)||[E, rho2]||_2 <= ||grad E||_inf ||Dv rho2||_2, kernel-wise.

    The sup-norm constant is the max of the fine-grid |E'| and the exact
    pairwise difference quotients, i.e. a lower bound on the true sup norm,
    so the asserted inequality is a strengthening of the continuum one.
    """
    grid = gen.grid()
    n = grid.n
    x = grid.x
    disp = grid.pairwise_displacement()[:, :, 0]
    dist = np.abs(disp)

    def trial(rng, size):
        E = gen.smooth_trig(rng, grid)
        rho2 = gen.gue(rng, n)
        # refine |E'| spectrally and take the max with the difference quotients
        Eh = np.fft.fft(E)
        kk = grid.freqs
        dE = np.real(np.fft.ifft(Eh * (2j * np.pi * kk / grid.L)))
        fine = 8
        pad = np.zeros(n * fine, dtype=complex)
        half = n // 2
        dEh = np.fft.fft(dE)
        pad[:half] = dEh[:half] * fine
        pad[-half:] = dEh[-half:] * fine
        dE_fine = np.real(np.fft.ifft(pad))
        diffE = E[:, None] - E[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            quot = np.where(dist > 0, np.abs(diffE) / np.where(dist > 0, dist, 1.0), 0.0)
        sup = max(np.abs(dE_fine).max(), quot.max())
        lhs = np.sqrt(np.sum(np.abs(diffE * rho2) ** 2)) / grid.hbar
        rhs = sup * np.sqrt(np.sum(np.abs(disp / grid.hbar * rho2) ** 2))
        return (rhs - lhs) / max(abs(rhs), 1e-300)

    return _run("commutator_transport", gen, trials, trial, GRID_SLACK)


def check_exchange_identities(gen: InstanceGenerator, trials: int) -> ViolationReport:
    """[x, X_rho] = X_[x,rho] (to 1e-12) and [grad, X_rho] = X_[grad,rho] (1e-8)."""
    from .operators import quantum_grad_x
    from .potential import build_kernel

    grid = gen.grid()
    kernel = build_kernel(0.5, 1.0, 0.0, grid)
    disp = grid.pairwise_displacement()[:, :, 0]

    def trial(rng, size):
        rho_k = gen.band_limited_hermitian(rng, grid)
        X = kernel.samples * rho_k
        # position identity, kernel-wise
        lhs_x = disp * X
        rhs_x = kernel.samples * (disp * rho_k)
        m_x = 1e-12 - np.abs(lhs_x - rhs_x).max() / (np.abs(rhs_x).max() + 1e-300)
        # gradient identity via the spectral commutator
        A = OperatorMatrix.from_kernel(grid, rho_k)
        XA = OperatorMatrix.from_kernel(grid, X)
        lhs_g = quantum_grad_x(XA).kernel
        rhs_g = kernel.samples * quantum_grad_x(A).kernel
        m_g = 1e-8 - np.abs(lhs_g - rhs_g).max() / (np.abs(rhs_g).max() + 1e-300)
        return min(m_x, m_g)

    return _run("exchange_identities", gen, trials, trial, 0.0)


def check_nabla_u(gen: InstanceGenerator, trials: int,
                  constant_factor: float = 2.0) -> ViolationReport:
    """C ||[eta,u] m||_p <= ||[eta,omega] m||_p + ||omega [eta,m]||_p,
    C = 2 sqrt(1 - lambda C_inf), u = sqrt(1 - omega), eta in {x, p}."""
    grid = gen.grid()
    n = grid.n
    # true commutator multiplier (x_i - x_j), so [x, .] is an exact derivation
    xnodes = grid.nodes()[:, 0]
    xdiff = xnodes[:, None] - xnodes[None, :]
    pdiag = grid.momentum_abs()

    def trial(rng, size):
        W = gen.wishart(rng, n)
        lam = float(rng.uniform(0.2, 0.9))
        omega = W / np.linalg.eigvalsh(W).max() * lam
        u = sqrtm(np.eye(n) - omega)
        C = constant_factor * np.sqrt(1 - lam)
        n_w = int(rng.integers(1, 3))
        mdiag = (1.0 + pdiag**n_w).astype(complex)
        margin = np.inf
        for eta in ("x", "p"):
            if eta == "x":
                Du = xdiff * u
                Dom = xdiff * omega
                Mm = grid.apply_momentum_diag(np.eye(n, dtype=complex), mdiag, "left")
                Dm = xdiff * Mm
            else:
                Pop = grid.apply_momentum_diag(np.eye(n, dtype=complex),
                                               grid.momenta()[:, 0].astype(complex), "left")
                Du = Pop @ u - u @ Pop
                Dom = Pop @ omega - omega @ Pop
                Dm = np.zeros((n, n))  # p commutes with the momentum weight
            Du_m = grid.apply_momentum_diag(Du, mdiag, "right")
            Dom_m = grid.apply_momentum_diag(Dom, mdiag, "right")
            for p in (2, 4, np.inf):
                lhs = C * _schatten(Du_m, p)
                rhs = _schatten(Dom_m, p) + _schatten(omega @ Dm, p)
                margin = min(margin, (rhs - lhs) / max(abs(rhs), 1e-300))
        return margin

    return _run("nabla_u", gen, trials, trial, GRID_SLACK)


# ---------------------------------------------------------------------------
# Fock-space checks
# ---------------------------------------------------------------------------

def check_dgamma_bound(gen: InstanceGenerator, trials: int, M: int = 6) -> ViolationReport:
    """||dGamma(O) Psi|| <= ||O||_p ||N^(1/p') Psi|| for p in {1, 2, inf}."""
    ladders = fock.ladder_matrices(M)
    D = 2**M
    ndiag = fock.number_operator(M)
    pairs = [[np.asarray((ladders[i].conj().T @ ladders[j]).todense(), dtype=complex)
              for j in range(M)] for i in range(M)]

    def trial(rng, size):
        B = rng.normal(size=(M, M)) + 1j * rng.normal(size=(M, M))
        O = (B + B.conj().T) / 2
        psi = rng.normal(size=D) + 1j * rng.normal(size=D)
        psi /= np.linalg.norm(psi)
        dG = np.zeros((D, D), dtype=complex)
        for i in range(M):
            for j in range(M):
                dG += O[i, j] * pairs[i][j]
        s = svdvals(O)
        lhs = np.linalg.norm(dG @ psi)
        margin = np.inf
        for p, pprime in ((1, np.inf), (2, 2.0), (np.inf, 1.0)):
            normO = s.sum() if p == 1 else (np.sqrt((s**2).sum()) if p == 2 else s.max())
            wvec = np.ones(D) if np.isinf(pprime) else ndiag ** (1.0 / pprime)
            rhs = normO * np.linalg.norm(wvec * psi)
            margin = min(margin, (rhs - lhs) / max(abs(rhs), 1e-300))
        return margin

    return _run("dgamma_bound", gen, trials, trial, MATRIX_SLACK)


def check_fermionic_bound(gen: InstanceGenerator, trials: int, M: int = 6) -> ViolationReport:
    """0 <= gamma <= Tr(gamma)/N on random N-sector pure states."""
    ladders = fock.ladder_matrices(M)
    D = 2**M
    ndiag = fock.number_operator(M)

    def trial(rng, size):
        N = int(rng.integers(1, M))
        sector = np.where(ndiag == N)[0]
        amp = rng.normal(size=len(sector)) + 1j * rng.normal(size=len(sector))
        psi = np.zeros(D, dtype=complex)
        psi[sector] = amp / np.linalg.norm(amp)
        state = fock.ManyBodyState(M, np.outer(psi, psi.conj()))
        gamma = fock.reduced_density_matrix(state, ladders)
        rep = fock.fermionic_bound_check(gamma, N)
        tr = np.trace(gamma).real
        scale = max(abs(tr) / N, 1e-300)
        return min(rep["min_eig"] / scale + 1e-15,
                   rep["upper_margin"] / scale,
                   rep["hs_margin"] / max(tr**2, 1e-300))

    return _run("fermionic_bound", gen, trials, trial, MATRIX_SLACK)


# ---------------------------------------------------------------------------
# suite
# ---------------------------------------------------------------------------

_CHECKS = {
    "unmixing": check_unmixing,
    "ad_expansion": check_ad_expansion,
    "kss": check_kss,
    "diag_trace": check_diag_trace,
    "commutator_transport": check_commutator_transport,
    "powers_stormer": check_powers_stormer,
    "fermionic_bound": check_fermionic_bound,
    "dgamma_bound": check_dgamma_bound,
    "nabla_u": check_nabla_u,
    "exchange_identities": check_exchange_identities,
}


def run_suite(seed: int = 0, trials: dict | None = None,
              workers: int | None = None) -> list[ViolationReport]:
    """Run every check; reports sorted by name (deterministic merge)."""
    counts = dict(DEFAULT_TRIALS)
    if trials:
        counts.update(trials)
    gen = InstanceGenerator(seed=seed)
    if workers is None:
        workers = int(os.environ.get("SCLAB_THREADS", "0")) or 1
    results = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            futs = {name: ex.submit(fn, gen, counts[name]) for name, fn in _CHECKS.items()}
            results = [futs[name].result() for name in sorted(futs)]
    else:
        for name in sorted(_CHECKS):
            results.append(_CHECKS[name](gen, counts[name]))
    return results


def suite_csv(reports: list[ViolationReport]) -> str:
    buf = io.StringIO()
    buf.write("check,trials,violations,worst_margin,worst_seed\n")
    for r in sorted(reports, key=lambda r: r.name):
        buf.write(f"{r.name},{r.trials},{r.violations},{r.worst_margin!r},{r.worst_seed}\n")
    return buf.getvalue()
