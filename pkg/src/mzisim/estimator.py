"""Estimator-style wrapper: fit a matrix onto the mesh, transform row batches.

PhotonicMVM follows the fit/transform protocol so a programmed mesh can sit
inside ordinary pipelines. fit(W) factors the target matrix onto the chosen
architecture; transform(X) pushes each row of X through the simulated
hardware, including optional quantization, imperfections, and readout noise.
Data here is complex, so array checks use this package's validators rather
than the numeric-only stock ones.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .clements import decompose_clements
from .fitting import FitConfig, fit_phases
from .linalg import as_cmatrix, as_cvector
from .mesh import build_topology
from .mvm import (
    DetectorConfig,
    EncodedFrame,
    GeneralMatrixProgram,
    reconstruct_general,
    run_mvm,
)
from .pcm import quantize_program
from .robustness import ImperfectionSpec, sample_imperfections


class PhotonicMVM(BaseEstimator, TransformerMixin):
    """Matrix-vector products through a simulated programmable mesh.

    Parameters mirror the physics knobs: arch picks the mesh layout,
    pcm_levels snaps phases and attenuations to a finite grid, the sigma
    and loss parameters draw one frozen imperfection sample per fit, and
    detector_mode/noise_sigma shape the readout. fit_restarts and
    fit_max_iter only matter for architectures without an analytic
    programming rule.
    """

    def __init__(self, arch: str = "clements", pcm_levels: int | None = None,
                 phase_sigma: float = 0.0, coupler_sigma: float = 0.0,
                 loss_db_per_mzi: float = 0.0, detector_mode: str = "coherent",
                 noise_sigma: float = 0.0, seed: int = 0,
                 fit_restarts: int = 4, fit_max_iter: int = 300):
        self.arch = arch
        self.pcm_levels = pcm_levels
        self.phase_sigma = phase_sigma
        self.coupler_sigma = coupler_sigma
        self.loss_db_per_mzi = loss_db_per_mzi
        self.detector_mode = detector_mode
        self.noise_sigma = noise_sigma
        self.seed = seed
        self.fit_restarts = fit_restarts
        self.fit_max_iter = fit_max_iter

    def fit(self, W, y=None):
        w = as_cmatrix(W, "W")
        if w.shape[0] != w.shape[1]:
            raise ValueError(f"W must be square, got {w.shape}")
        if not np.any(w):
            raise ValueError("W must not be the zero matrix")
        n = w.shape[0]
        self.topology_ = build_topology(self.arch, n)
        u, s, vh = np.linalg.svd(w)
        att = s / s[0]
        if self.arch == "clements":
            left = decompose_clements(u)
            right = decompose_clements(vh)
            self.fit_residual_ = 0.0
        else:
            left, r_left = fit_phases(self.topology_, u, FitConfig(
                max_iter=self.fit_max_iter, restarts=self.fit_restarts, seed=(self.seed, 101)))
            right, r_right = fit_phases(self.topology_, vh, FitConfig(
                max_iter=self.fit_max_iter, restarts=self.fit_restarts, seed=(self.seed, 102)))
            # the fit objective ignores global phase; re-anchor it so the
            # left/right factors compose to W rather than e^{i(a+b)} W
            left = _dephase(self.topology_, left, u)
            right = _dephase(self.topology_, right, vh)
            self.fit_residual_ = max(r_left, r_right)
        if self.pcm_levels is not None:
            levels = int(self.pcm_levels)
            left, _, _ = quantize_program(left, levels)
            right, _, _ = quantize_program(right, levels)
            att = np.round(att * (levels - 1)) / (levels - 1)
        self.program_ = GeneralMatrixProgram(left, right, att, float(s[0]))
        self.n_ports_ = n
        if self.phase_sigma or self.coupler_sigma or self.loss_db_per_mzi:
            spec = ImperfectionSpec(phase_sigma=self.phase_sigma,
                                    coupler_sigma=self.coupler_sigma,
                                    loss_db_per_mzi=self.loss_db_per_mzi)
            self.imperfections_ = (
                sample_imperfections(spec, self.topology_, (self.seed, 201)),
                sample_imperfections(spec, self.topology_, (self.seed, 202)),
            )
        else:
            self.imperfections_ = None
        self.matrix_ = reconstruct_general(self.topology_, self.program_)
        return self

    def transform(self, X):
        check_is_fitted(self, "program_")
        x = as_cmatrix(np.atleast_2d(np.asarray(X)), "X")
        if x.shape[1] != self.n_ports_:
            raise ValueError(f"X has {x.shape[1]} columns, mesh has {self.n_ports_} ports")
        det = DetectorConfig(mode=self.detector_mode, noise_sigma=self.noise_sigma,
                             seed=(self.seed, 301))
        out = []
        for i in range(x.shape[0]):
            row = as_cvector(x[i], "X row")
            peak = float(np.max(np.abs(row)))
            fs = peak if peak > 0 else 1.0
            frame = EncodedFrame([row / fs], fs)
            y = run_mvm(self.topology_, self.program_, frame,
                        imp=self.imperfections_, det=det, slot_index=i)[0]
            out.append(y)
        return np.array(out)


def _dephase(topology, program, target):
    """Shift output phases so the realized unitary matches target's phase."""
    from .mesh import PhaseProgram, forward_matrix

    realized = forward_matrix(topology, program)
    delta = np.angle(np.trace(target.conj().T @ realized))
    return PhaseProgram(program.thetas, program.phis, program.output_phases - delta)
