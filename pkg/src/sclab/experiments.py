"""Experiment orchestration: rate studies, comparisons, and run folders."""

from __future__ import annotations

import hashlib
import io
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .fock import (
    ManyBodyState,
    ModeBasis,
    evolve_exact,
    gaussian_state,
    hf_mode_flow,
    ladder_matrices,
    many_body_hamiltonian,
    reduced_density_matrix,
)
from .grids import GridSpec
from .hf import evolve as hf_evolve
from .hf import regularity_report
from .inequalities import DEFAULT_TRIALS, run_suite, suite_csv
from .operators import write_operator
from .potential import KernelSpec, build_kernel
from .vlasov import PhaseSpaceField, XiGrid, evolve_vlasov, write_field
from .wigner import toeplitz_quantize, weyl_quantize, wigner_transform

__all__ = [
    "RateFit",
    "fit_loglog",
    "gaussian_symbol",
    "initial_density",
    "semiclassical_rate",
    "meanfield_rate",
    "run",
]


# ---------------------------------------------------------------------------
# rate fitting
# ---------------------------------------------------------------------------

@dataclass
class RateFit:
    """Log-log OLS fit of error against an abscissa (h or 1/N)."""

    abscissae: tuple
    errors: tuple
    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float

    def row(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_stderr": self.slope_stderr,
            "r_squared": self.r_squared,
        }


def fit_loglog(abscissae, errors, weight_extreme: float = 2.0) -> RateFit:
    """Weighted log-log regression; the smallest abscissa carries weight x2
    (the asymptotic regime dominates the claim being tested)."""
    xs = np.asarray(abscissae, dtype=float)
    es = np.asarray(errors, dtype=float)
    if len(xs) < 3:
        raise ValueError("rate fit needs at least 3 points")
    if np.any(es <= 0) or np.any(xs <= 0):
        raise ValueError("rate fit needs positive errors and abscissae")
    lx, ly = np.log(xs), np.log(es)
    w = np.ones_like(lx)
    w[np.argmin(lx)] = weight_extreme
    W = w.sum()
    xbar = (w * lx).sum() / W
    ybar = (w * ly).sum() / W
    sxx = (w * (lx - xbar) ** 2).sum()
    slope = (w * (lx - xbar) * (ly - ybar)).sum() / sxx
    intercept = ybar - slope * xbar
    resid = ly - (intercept + slope * lx)
    dof = max(len(xs) - 2, 1)
    sigma2 = (w * resid**2).sum() / dof / (W / len(xs))
    stderr = float(np.sqrt(sigma2 / sxx))
    sst = (w * (ly - ybar) ** 2).sum()
    r2 = float(1.0 - (w * resid**2).sum() / sst) if sst > 0 else 1.0
    return RateFit(tuple(xs), tuple(es), float(slope), float(intercept), stderr, r2)


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def gaussian_symbol(grid: GridSpec, center_x: float, center_xi: float,
                    sigma_x: float, sigma_xi: float) -> PhaseSpaceField:
    """Normalized Gaussian phase-space symbol on the Weyl-dual lattice."""
    gxi = XiGrid.matching(grid)
    X = grid.x[:, None]
    XI = gxi.xi[None, :]
    vals = np.exp(-((X - center_x) ** 2) / (2 * sigma_x**2)
                  - ((XI - center_xi) ** 2) / (2 * sigma_xi**2))
    f = PhaseSpaceField(grid, gxi, vals)
    return f.normalized()


def initial_density(grid: GridSpec, cfg: ExperimentConfig):
    kind = cfg["init.kind"]
    if kind == "toeplitz_gaussian":
        sym = gaussian_symbol(grid, cfg["init.center_x"], cfg["init.center_xi"],
                              cfg["init.sigma_x"], cfg["init.sigma_xi"])
        return toeplitz_quantize(sym)
    if kind == "weyl":
        sym = gaussian_symbol(grid, cfg["init.center_x"], cfg["init.center_xi"],
                              cfg["init.sigma_x"], cfg["init.sigma_xi"])
        op = weyl_quantize(sym)
        from .operators import DensityOperator
        return DensityOperator(grid, op.kernel).normalized()
    if kind == "file":
        from .operators import DensityOperator, read_operator
        op = read_operator(cfg["init.file"])
        return DensityOperator(op.grid, op.kernel).normalized()
    raise ConfigError(f"unknown init.kind: {kind!r}")


def _kernel(grid: GridSpec, cfg: ExperimentConfig) -> KernelSpec:
    return build_kernel(cfg["potential.a"], cfg["potential.kappa"],
                        cfg["potential.cutoff_R"], grid)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def semiclassical_rate(cfg: ExperimentConfig, progress=None) -> tuple[RateFit, list[dict]]:
    """Hartree-Fock vs Vlasov L2 distance of phase-space fields across hbar.

    For each hbar in the sweep: quantize the common symbol, evolve both
    flows to T on that hbar's lattice, and record the L2 error; the T = 0
    quantization mismatch is reported as a baseline and excluded from the
    fit. Aborted members are dropped with a warning; fewer than 3 survivors
    is a failure.
    """
    sweep = cfg["grid.hbar_sweep"] or (cfg["grid.hbar"],)
    if len(sweep) < 3:
        raise ValueError("semiclassical rate needs an hbar sweep with >= 3 values")
    T, dt = cfg["hf.T"], cfg["hf.dt"]

    def member(hbar):
        grid = GridSpec(d=cfg["grid.d"], n=cfg["grid.n"], L=cfg["grid.L"], hbar=hbar)
        kernel = _kernel(grid, cfg)
        sym = gaussian_symbol(grid, cfg["init.center_x"], cfg["init.center_xi"],
                              cfg["init.sigma_x"], cfg["init.sigma_xi"])
        rho0 = toeplitz_quantize(sym)
        cell = sym.cell
        f0 = wigner_transform(rho0)
        baseline = float(np.sqrt(((f0.values - sym.values) ** 2).sum() * cell))
        nsteps = int(round(T / dt))
        traj = hf_evolve(rho0, kernel, T, dt, stride=nsteps,
                         include_exchange=cfg["hf.exchange"], diagnostics="basic")
        vtraj = evolve_vlasov(sym, kernel, T, dt, stride=nsteps, n_w=cfg["vlasov.n_w"],
                              limiter=cfg["vlasov.limiter"])
        row = {"hbar": hbar, "h": grid.h, "baseline": baseline}
        if traj.aborted or vtraj.aborted:
            import warnings
            warnings.warn(f"sweep member hbar={hbar} aborted "
                          f"({traj.abort_reason or vtraj.abort_reason}); excluded")
            row["error"] = float("nan")
        else:
            fh = wigner_transform(traj.states[-1])
            err = np.sqrt(((fh.values - vtraj.states[-1].values) ** 2).sum() * cell)
            row["error"] = float(err)
        return row

    # sweep members are independent; a worker pool (capped by SCLAB_THREADS)
    # collects them in sweep order, so assembly stays deterministic
    workers = min(len(sweep), int(os.environ.get("SCLAB_THREADS", "0")) or 1)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(member, sweep))
    else:
        rows = [member(h) for h in sweep]
    if progress:
        for row in rows:
            progress(row)
    ok = [r for r in rows if np.isfinite(r["error"])]
    if len(ok) < 3:
        raise RuntimeError("fewer than 3 surviving sweep members")
    fit = fit_loglog([r["h"] for r in ok], [r["error"] for r in ok])
    return fit, rows


def _occupation(basis: ModeBasis, N: float, width: float, max_occ: float) -> np.ndarray:
    """Smooth mode occupation summing to N, flattened so max <= max_occ."""
    ks = np.asarray(basis.labels, dtype=float)
    prof = np.exp(-(ks**2) / (2 * width**2))
    w = prof / prof.sum() * N
    M = basis.M
    if w.max() > max_occ:
        if N / M > max_occ:
            raise ValueError(f"N={N} too large for max occupation {max_occ} at M={M}")
        t = (w.max() - max_occ) / (w.max() - N / M)
        w = (1 - t) * w + t * (N / M) * np.ones(M)
    return w


def meanfield_rate(cfg: ExperimentConfig, progress=None) -> tuple[RateFit, list[dict]]:
    """Exact 1-pdm vs mode-projected Hartree-Fock across particle numbers.

    Errors are trace norms of the difference of trace-normalized 1-pdms.
    The fitted slope against 1/N is informational; the PASS condition used
    by the acceptance suite is strict decrease along the sweep.
    """
    M = cfg["meanfield.M"]
    grid = GridSpec(d=1, n=cfg["grid.n"], L=cfg["grid.L"], hbar=1.0)
    kernel = _kernel(grid, cfg)
    basis = ModeBasis.plane_waves(grid, M, kernel)
    ladders = ladder_matrices(M)
    from .fock import pair_interaction
    interaction = pair_interaction(basis, ladders)
    rows = []
    for N in cfg["meanfield.N_sweep"]:
        w = _occupation(basis, N, cfg["meanfield.occupation_width"],
                        cfg["meanfield.max_occupation"])
        omega = np.diag(w).astype(complex)
        state = gaussian_state(omega, ladders)
        H = many_body_hamiltonian(basis, N, ladders, interaction)
        _, snaps = evolve_exact(state, H, cfg["meanfield.T"], cfg["meanfield.T"])
        gamma_exact = reduced_density_matrix(snaps[-1], ladders)
        gamma_hf = hf_mode_flow(basis, omega, N, cfg["meanfield.T"], cfg["meanfield.dt"])
        diff = gamma_exact / N - gamma_hf / N
        sv = np.linalg.svd(diff, compute_uv=False)
        rows.append({
            "N": N,
            "M": M,
            "T": cfg["meanfield.T"],
            "trace_norm_error": float(sv.sum()),
            "hs_norm_error": float(np.sqrt((sv**2).sum())),
        })
        if progress:
            progress(rows[-1])
    fit = fit_loglog([1.0 / r["N"] for r in rows],
                     [max(r["trace_norm_error"], 1e-300) for r in rows])
    return fit, rows


# ---------------------------------------------------------------------------
# run folders
# ---------------------------------------------------------------------------

def _write(path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _csv_from_rows(rows, columns) -> str:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for r in rows:
        out = []
        for c in columns:
            v = r[c]
            out.append(repr(float(v)) if isinstance(v, float) else str(v))
        buf.write(",".join(out) + "\n")
    return buf.getvalue()


def _hash_outputs(outdir, names) -> dict:
    hashes = {}
    for name in names:
        p = os.path.join(outdir, name)
        with open(p, "rb") as fh:
            hashes[name] = hashlib.sha256(fh.read()).hexdigest()
    return hashes


def run(config_path: str, outdir: str) -> int:
    """Dispatch the configured experiment; write outputs and manifest.

    Exit status: 0 success, 2 invalid configuration, 3 runtime abort.
    """
    try:
        cfg = ExperimentConfig.load(config_path)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}")
        return 2
    os.makedirs(outdir, exist_ok=True)
    _write(os.path.join(outdir, "resolved.cfg"), cfg.canonical())
    t0 = time.time()
    outputs = []
    try:
        kind = cfg["experiment"]
        if kind == "hf_evolve":
            grid = GridSpec(d=cfg["grid.d"], n=cfg["grid.n"], L=cfg["grid.L"],
                            hbar=cfg["grid.hbar"])
            kernel = _kernel(grid, cfg)
            rho0 = initial_density(grid, cfg)
            traj = hf_evolve(rho0, kernel, cfg["hf.T"], cfg["hf.dt"], cfg["hf.stride"],
                             cfg["hf.exchange"], diagnostics=cfg["hf.diagnostics"],
                             n_w=cfg["hf.n_w"])
            if traj.aborted:
                print(f"run aborted: {traj.abort_reason}")
                return 3
            _write(os.path.join(outdir, "diagnostics.csv"), traj.diagnostics.to_csv())
            outputs.append("diagnostics.csv")
            if cfg["dump.operators"]:
                for i, st in enumerate(traj.states):
                    name = f"state_{i:04d}.op"
                    write_operator(os.path.join(outdir, name), st.as_operator())
        elif kind == "vlasov_evolve":
            grid = GridSpec(d=cfg["grid.d"], n=cfg["grid.n"], L=cfg["grid.L"],
                            hbar=cfg["grid.hbar"])
            kernel = _kernel(grid, cfg)
            sym = gaussian_symbol(grid, cfg["init.center_x"], cfg["init.center_xi"],
                                  cfg["init.sigma_x"], cfg["init.sigma_xi"])
            traj = evolve_vlasov(sym, kernel, cfg["vlasov.T"], cfg["vlasov.dt"],
                                 cfg["vlasov.stride"], n_w=cfg["vlasov.n_w"],
                                 limiter=cfg["vlasov.limiter"])
            if traj.aborted:
                print(f"run aborted: {traj.abort_reason}")
                return 3
            _write(os.path.join(outdir, "diagnostics.csv"), traj.diagnostics.to_csv())
            outputs.append("diagnostics.csv")
            if cfg["dump.fields"]:
                for i, st in enumerate(traj.states):
                    write_field(os.path.join(outdir, f"field_{i:04d}.psf"), st)
        elif kind == "semiclassical_rate":
            fit, rows = semiclassical_rate(cfg)
            _write(os.path.join(outdir, "rate.csv"),
                   _csv_from_rows(rows, ["hbar", "h", "baseline", "error"]))
            _write(os.path.join(outdir, "fit.csv"),
                   _csv_from_rows([fit.row()],
                                  ["slope", "intercept", "slope_stderr", "r_squared"]))
            outputs += ["rate.csv", "fit.csv"]
        elif kind == "meanfield_compare":
            fit, rows = meanfield_rate(cfg)
            _write(os.path.join(outdir, "mf_error.csv"),
                   _csv_from_rows(rows, ["N", "M", "T", "trace_norm_error",
                                         "hs_norm_error"]))
            _write(os.path.join(outdir, "fit.csv"),
                   _csv_from_rows([fit.row()],
                                  ["slope", "intercept", "slope_stderr", "r_squared"]))
            outputs += ["mf_error.csv", "fit.csv"]
        elif kind == "ineq_suite":
            scale = cfg["ineq.trials_scale"]
            trials = {k: max(1, int(round(v * scale))) for k, v in DEFAULT_TRIALS.items()}
            reports = run_suite(seed=cfg["seed"], trials=trials)
            _write(os.path.join(outdir, "report.csv"), suite_csv(reports))
            outputs.append("report.csv")
            if any(not r.passed for r in reports):
                print("inequality suite: violations found")
                return 3
        elif kind == "regularity_report":
            grid = GridSpec(d=cfg["grid.d"], n=cfg["grid.n"], L=cfg["grid.L"],
                            hbar=cfg["grid.hbar"])
            kernel = _kernel(grid, cfg)
            rho0 = initial_density(grid, cfg)
            traj = hf_evolve(rho0, kernel, cfg["hf.T"], cfg["hf.dt"], cfg["hf.stride"],
                             cfg["hf.exchange"], diagnostics="basic")
            if traj.aborted:
                print(f"run aborted: {traj.abort_reason}")
                return 3
            rep = regularity_report(traj, n_w=cfg["regularity.n_w"],
                                    q_pair=(2.0, cfg["regularity.q1"]),
                                    factor=cfg["regularity.factor"])
            _write(os.path.join(outdir, "regularity.csv"), rep.to_csv())
            flags_rows = [{"channel": k, "within_factor": str(v).lower()}
                          for k, v in sorted(rep.flags.items())]
            _write(os.path.join(outdir, "flags.csv"),
                   _csv_from_rows(flags_rows, ["channel", "within_factor"]))
            outputs += ["regularity.csv", "flags.csv"]
        else:  # unreachable: config validation catches it
            raise ConfigError(f"unknown experiment {kind!r}")
    except (ValueError, RuntimeError) as exc:
        print(f"runtime abort: {exc}")
        return 3
    manifest = {
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in cfg.values.items()},
        "versions": _versions(),
        "elapsed_seconds": time.time() - t0,
        "outputs": _hash_outputs(outdir, outputs),
    }
    with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def _versions() -> dict:
    import numpy
    import scipy
    return {"sclab": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__}
