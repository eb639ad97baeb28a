"""Numerical mesh programming for layouts without an analytic rule.

Minimizes 1 - fidelity(target, forward(mesh)) over every phase in the
program using L-BFGS-B with finite-difference gradients, restarted from
seeded random phase vectors. Restarts are compared strictly, so equal
residuals keep the earliest restart and results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .linalg import as_cmatrix, fidelity, seeded_rng, unitarity_residual
from .mesh import ImperfectionSample, MeshTopology, PhaseProgram, forward_matrix


@dataclass
class FitConfig:
    max_iter: int = 400
    restarts: int = 10
    tol: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1 or self.restarts < 1:
            raise ValueError("max_iter and restarts must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")


def _program_from_params(topology: MeshTopology, params: np.ndarray) -> PhaseProgram:
    m = len(topology.placements)
    return PhaseProgram(params[:m], params[m : 2 * m], params[2 * m :])


def fit_phases(
    topology: MeshTopology,
    u_target,
    cfg: FitConfig | None = None,
) -> tuple[PhaseProgram, float]:
    """Search phase settings that realize u_target on the given mesh.

    Returns the best program found and its residual 1 - fidelity. The
    residual is not guaranteed to reach cfg.tol; callers that need a
    convergence guarantee must check it.
    """
    cfg = cfg or FitConfig()
    u_target = as_cmatrix(u_target, "u_target")
    n = topology.n_ports
    if u_target.shape != (n, n):
        raise ValueError(f"target shape {u_target.shape} does not match {n} ports")
    resid = unitarity_residual(u_target)
    if resid > 1e-6:
        raise ValueError(f"target is not unitary: residual {resid:.3e}")

    m = len(topology.placements)
    dim = 2 * m + n
    imp = ImperfectionSample.ideal(topology)

    def objective(params: np.ndarray) -> float:
        prog = _program_from_params(topology, params)
        return 1.0 - fidelity(u_target, forward_matrix(topology, prog, imp))

    best_x = None
    best_r = np.inf
    for k in range(cfg.restarts):
        x0 = seeded_rng(cfg.seed, k).uniform(0.0, 2.0 * np.pi, dim)
        res = minimize(
            objective,
            x0,
            method="L-BFGS-B",
            options={"maxiter": cfg.max_iter, "ftol": 1e-15, "gtol": 1e-12},
        )
        if res.fun < best_r:
            best_r, best_x = float(res.fun), res.x.copy()
        if best_r <= cfg.tol:
            break
    return _program_from_params(topology, best_x), best_r
