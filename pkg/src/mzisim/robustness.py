"""Monte Carlo robustness studies over mesh architectures.

Each trial draws a Haar-random target, programs a mesh for it (analytic
rule for the rectangle, numerical fit otherwise), optionally quantizes the
program to a phase-change level grid, perturbs the hardware, and scores
the perturbed transfer matrix. Fidelity is measured after dividing out the
best global scalar so uniform loss shows up as throughput, not as matrix
error; throughput is recorded separately per trial.

Trial streams are keyed by (base_seed, trial_index) alone. Two sweeps that
share a base seed therefore see identical targets and identical underlying
Gaussian draws at every grid point and for every architecture, which makes
ladder comparisons (more noise, fewer levels) paired by construction.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .clements import decompose_clements
from .fitting import FitConfig, fit_phases
from .linalg import fidelity, haar_random_unitary, seeded_rng
from .mesh import ImperfectionSample, MeshTopology, build_topology, forward_matrix
from .pcm import QUANTIZE_TARGETS, quantize_program

SWEEP_CSV_HEADER = (
    "arch,n,phase_sigma,coupler_sigma,loss_db,pcm_levels,trials,"
    "fid_median,fid_mean,fid_p5,fid_p95,rmse_median,rmse_p95,fit_residual_median"
)

AXIS_NAMES = ("phase_sigma", "coupler_sigma", "loss_db", "pcm_levels")

_PROBES_PER_TRIAL = 10


@dataclass(frozen=True)
class ImperfectionSpec:
    """Statistical description of hardware deviations."""

    phase_sigma: float = 0.0
    coupler_sigma: float = 0.0
    loss_db_per_mzi: float = 0.0
    pcm_levels: int | None = None
    quantize_targets: str = "both"

    def __post_init__(self):
        if self.phase_sigma < 0 or self.coupler_sigma < 0 or self.loss_db_per_mzi < 0:
            raise ValueError("sigmas and loss must be non-negative")
        if self.pcm_levels is not None and self.pcm_levels < 2:
            raise ValueError("pcm_levels must be >= 2 when set")
        if self.quantize_targets not in QUANTIZE_TARGETS:
            raise ValueError(f"quantize_targets must be one of {QUANTIZE_TARGETS}")


@dataclass
class TrialRecord:
    trial: int
    arch_tag: str
    n: int
    fidelity: float
    mvm_rel_rmse: float
    fit_residual: float
    transmission: float


@dataclass
class SweepGrid:
    """Cartesian grid of imperfection axes plus per-point trial budget."""

    axes: dict[str, tuple]
    trials_per_point: int
    base_seed: int = 0

    def __post_init__(self):
        for name in self.axes:
            if name not in AXIS_NAMES:
                raise ValueError(f"unknown sweep axis {name!r}, expected one of {AXIS_NAMES}")
        if self.trials_per_point < 1:
            raise ValueError("trials_per_point must be >= 1")
        self.axes = {k: tuple(v) for k, v in self.axes.items()}

    def points(self) -> list[dict]:
        names = list(self.axes)
        out = []
        for combo in itertools.product(*(self.axes[n] for n in names)):
            out.append(dict(zip(names, combo)))
        return out


def sample_imperfections(spec: ImperfectionSpec, topology: MeshTopology, seed) -> ImperfectionSample:
    """Draw one hardware instance. Standard normals are drawn in a fixed
    order and scaled by the sigmas, so samples at different sigma values
    from the same seed are correlated (paired) by construction."""
    rng = seeded_rng(seed)
    m = len(topology.placements)
    n = topology.n_ports
    g = rng.normal(size=3 * m + n + m)  # theta, phi per cell; outputs; couplers x2
    g_theta, g_phi = g[:m], g[m : 2 * m]
    g_out = g[2 * m : 2 * m + n]
    g_d1, g_d2 = g[2 * m + n : 3 * m + n], g[3 * m + n :]
    t = 10.0 ** (-spec.loss_db_per_mzi / 20.0)
    return ImperfectionSample(
        theta_offsets=spec.phase_sigma * g_theta,
        phi_offsets=spec.phase_sigma * g_phi,
        output_offsets=spec.phase_sigma * g_out,
        delta1=spec.coupler_sigma * g_d1,
        delta2=spec.coupler_sigma * g_d2,
        transmission=np.full(m, t),
    )


def _scaled_fidelity(target: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    """(fidelity after global-scalar normalization, mean power transmission)."""
    n = target.shape[0]
    power = float(np.real(np.trace(w.conj().T @ w)))
    if power <= 0:
        return 0.0, 0.0
    f = abs(np.trace(target.conj().T @ w)) ** 2 / (n * power)
    return float(min(max(f, 0.0), 1.0)), power / n


def run_trial(arch_tag: str, n: int, spec: ImperfectionSpec, base_seed: int, trial: int,
              fit_cfg: FitConfig | None = None) -> TrialRecord:
    """One paired Monte Carlo trial (public so pools can pickle it)."""
    topology = build_topology(arch_tag, n)
    target = haar_random_unitary(n, (base_seed, trial, 0))
    if arch_tag == "clements":
        program = decompose_clements(target)
    else:
        fit_seed = int(seeded_rng((base_seed, trial, 3)).integers(0, 2**63 - 1))
        cfg = replace(fit_cfg or FitConfig(), seed=fit_seed)
        program, _ = fit_phases(topology, target, cfg)
    fit_residual = 1.0 - fidelity(target, forward_matrix(topology, program))
    if spec.pcm_levels is not None:
        program, _, _ = quantize_program(program, spec.pcm_levels, spec.quantize_targets)
    imp = sample_imperfections(spec, topology, (base_seed, trial, 1))
    w = forward_matrix(topology, program, imp)
    fid, transmission = _scaled_fidelity(target, w)

    rng = seeded_rng((base_seed, trial, 2))
    probes = rng.normal(size=(n, _PROBES_PER_TRIAL)) + 1j * rng.normal(size=(n, _PROBES_PER_TRIAL))
    probes /= np.linalg.norm(probes, axis=0, keepdims=True)
    w_norm = w / np.sqrt(max(transmission, 1e-300))
    errs = np.linalg.norm(w_norm @ probes - target @ probes, axis=0)
    rmse = float(np.sqrt(np.mean(errs**2)))
    return TrialRecord(trial, arch_tag, n, fid, rmse, max(fit_residual, 0.0), transmission)


def summarize(records: list[TrialRecord]) -> dict:
    fids = np.array([r.fidelity for r in records])
    rmses = np.array([r.mvm_rel_rmse for r in records])
    resids = np.array([r.fit_residual for r in records])
    return {
        "trials": len(records),
        "fid_median": float(np.median(fids)),
        "fid_mean": float(np.mean(fids)),
        "fid_p5": float(np.percentile(fids, 5)),
        "fid_p95": float(np.percentile(fids, 95)),
        "rmse_median": float(np.median(rmses)),
        "rmse_p95": float(np.percentile(rmses, 95)),
        "fit_residual_median": float(np.median(resids)),
    }


def mc_fidelity(arch_tag: str, n: int, spec: ImperfectionSpec, trials: int, base_seed: int,
                fit_cfg: FitConfig | None = None) -> tuple[list[TrialRecord], dict]:
    """Run paired trials for one (architecture, imperfection spec) point."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    records = [run_trial(arch_tag, n, spec, base_seed, t, fit_cfg) for t in range(trials)]
    return records, summarize(records)


def _point_task(args) -> dict:
    arch_tag, n, spec, trials, base_seed, fit_cfg, point = args
    _, summary = mc_fidelity(arch_tag, n, spec, trials, base_seed, fit_cfg)
    row = {
        "arch": arch_tag,
        "n": n,
        "phase_sigma": spec.phase_sigma,
        "coupler_sigma": spec.coupler_sigma,
        "loss_db": spec.loss_db_per_mzi,
        "pcm_levels": spec.pcm_levels,
    }
    row.update(summary)
    return row


def compare_architectures(
    arch_tags: list[str],
    n: int,
    grid: SweepGrid,
    base_spec: ImperfectionSpec | None = None,
    fit_cfg: FitConfig | None = None,
    jobs: int = 1,
) -> list[dict]:
    """Summary rows for every (architecture, grid point), identical seeds per point."""
    base = base_spec or ImperfectionSpec()
    tasks = []
    for arch_tag in arch_tags:
        for point in grid.points():
            kwargs = dict(point)
            if "loss_db" in kwargs:
                kwargs["loss_db_per_mzi"] = kwargs.pop("loss_db")
            spec = replace(base, **kwargs)
            tasks.append((arch_tag, n, spec, grid.trials_per_point, grid.base_seed, fit_cfg, point))
    if jobs <= 1 or len(tasks) <= 1:
        return [_point_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_point_task, tasks))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def sweep_csv(rows: list[dict], meta: str | None = None) -> str:
    """Render sweep rows as deterministic CSV text."""
    cols = SWEEP_CSV_HEADER.split(",")
    lines = []
    if meta:
        lines.append(f"# {meta}")
    lines.append(SWEEP_CSV_HEADER)
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in cols))
    return "\n".join(lines) + "\n"
