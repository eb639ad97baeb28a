"""Matrix-vector and matrix-matrix compute on programmed meshes.

Inputs are amplitude-encoded against a full-scale reference, pass through
one mesh (unitary weights) or a mesh/attenuator/mesh sandwich (general
weights via the singular value decomposition), and are read out either
coherently (complex field) or directly (per-port power). Matrix-matrix
products stream the right factor's columns, time-division one column per
slot or wavelength-division several columns per frame; the weights are
programmed exactly once either way.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clements import decompose_clements
from .linalg import as_cmatrix, as_cvector, seeded_rng
from .mesh import (
    ImperfectionSample,
    MeshTopology,
    PhaseProgram,
    apply_mesh,
    build_clements,
)
from .pcm import PCMDeviceModel, quantize_phase

DETECTOR_MODES = ("coherent", "direct")
GEMM_MODES = ("tdm", "wdm")


@dataclass(frozen=True)
class DetectorConfig:
    """Readout mode plus additive Gaussian noise of scale noise_sigma."""

    mode: str = "coherent"
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in DETECTOR_MODES:
            raise ValueError(f"mode must be one of {DETECTOR_MODES}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


@dataclass(frozen=True)
class DispersionModel:
    """First-order wavelength dependence: phases scale by lambda_ref/lambda_k."""

    lambda_ref_nm: float
    lambdas_nm: tuple[float, ...]

    def __post_init__(self):
        if self.lambda_ref_nm <= 0 or any(l <= 0 for l in self.lambdas_nm):
            raise ValueError("wavelengths must be positive")

    def scale(self, channel: int) -> float:
        return self.lambda_ref_nm / self.lambdas_nm[channel]


@dataclass
class EncodedFrame:
    """One launch: a field vector per wavelength channel, common full scale."""

    channels: list[np.ndarray]
    full_scale: float

    def __post_init__(self):
        if self.full_scale <= 0:
            raise ValueError("full_scale must be positive")
        self.channels = [as_cvector(c, "channel") for c in self.channels]
        if not self.channels:
            raise ValueError("frame must carry at least one channel")


@dataclass
class GeneralMatrixProgram:
    """SVD realization a = U diag(s) V^H: two mesh programs plus attenuators."""

    left_program: PhaseProgram
    right_program: PhaseProgram
    attenuations: np.ndarray
    global_scale: float

    def __post_init__(self):
        self.attenuations = np.asarray(self.attenuations, dtype=float)
        if np.any(self.attenuations < 0) or np.any(self.attenuations > 1 + 1e-12):
            raise ValueError("attenuations must lie in [0, 1]")
        if self.global_scale <= 0:
            raise ValueError("global_scale must be positive")


@dataclass
class GemmPlan:
    """Scheduling for a matrix-matrix product."""

    mode: str = "tdm"
    channels: int = 1
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    full_scale: float | None = None
    check_oracle: bool = False
    dispersion: DispersionModel | None = None

    def __post_init__(self):
        if self.mode not in GEMM_MODES:
            raise ValueError(f"mode must be one of {GEMM_MODES}")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.mode == "tdm" and self.channels != 1:
            raise ValueError("tdm uses exactly one channel")


@dataclass
class GemmReport:
    """What a matrix-matrix run did, for timing and bookkeeping."""

    rows: int
    cols: int
    mode: str
    channels: int
    slots: int
    programming_events: int
    max_rel_err: float | None = None
    mean_rel_err: float | None = None


def encode_vector(x, full_scale: float) -> EncodedFrame:
    """Amplitude-encode one vector; clipping is an error, not a silent clamp."""
    x = as_cvector(x, "x")
    if full_scale <= 0:
        raise ValueError("full_scale must be positive")
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    if peak > full_scale:
        raise ValueError(f"input peak {peak:.6g} exceeds full_scale {full_scale:.6g}; encoding would clip")
    return EncodedFrame([x / full_scale], full_scale)


def _scaled(program: PhaseProgram, scale: float) -> PhaseProgram:
    if scale == 1.0:
        return program
    return PhaseProgram(program.thetas * scale, program.phis * scale, program.output_phases * scale)


def _channel_noise_rng(det: DetectorConfig, slot: int, channel: int) -> np.random.Generator:
    return seeded_rng(det.seed, slot, channel)


def run_mvm(
    topology: MeshTopology,
    program: PhaseProgram | GeneralMatrixProgram,
    frame: EncodedFrame,
    imp: ImperfectionSample | tuple[ImperfectionSample, ImperfectionSample] | None = None,
    det: DetectorConfig | None = None,
    slot_index: int = 0,
    dispersion: DispersionModel | None = None,
) -> list[np.ndarray]:
    """Run one frame through a programmed mesh; one output vector per channel.

    Coherent detection returns complex fields rescaled by full_scale;
    direct detection returns per-port powers |y|^2. With a
    GeneralMatrixProgram, imp must be None or a (left, right) pair.
    """
    det = det or DetectorConfig()
    general = isinstance(program, GeneralMatrixProgram)
    if general:
        if imp is not None and not (isinstance(imp, tuple) and len(imp) == 2):
            raise ValueError("general programs take imp=None or a (left_imp, right_imp) pair")
        left_imp, right_imp = imp if imp is not None else (None, None)
    elif isinstance(imp, tuple):
        raise ValueError("a plain mesh program takes a single imperfection sample")
    if dispersion is not None and len(dispersion.lambdas_nm) < len(frame.channels):
        raise ValueError("dispersion model covers fewer channels than the frame")

    outputs = []
    for c, amps in enumerate(frame.channels):
        if amps.shape[0] != topology.n_ports:
            raise ValueError(f"channel {c} has {amps.shape[0]} entries, mesh has {topology.n_ports} ports")
        scale = dispersion.scale(c) if dispersion is not None else 1.0
        if general:
            v = apply_mesh(topology, _scaled(program.right_program, scale), amps, right_imp)
            v = program.attenuations * v
            v = apply_mesh(topology, _scaled(program.left_program, scale), v, left_imp)
            y = v * (program.global_scale * frame.full_scale)
        else:
            y = apply_mesh(topology, _scaled(program, scale), amps, imp) * frame.full_scale
        if det.mode == "coherent":
            if det.noise_sigma > 0:
                g = _channel_noise_rng(det, slot_index, c).normal(size=(2, y.shape[0]))
                y = y + det.noise_sigma * (g[0] + 1j * g[1])
            outputs.append(y)
        else:
            p = np.abs(y) ** 2
            if det.noise_sigma > 0:
                g = _channel_noise_rng(det, slot_index, c).normal(size=p.shape[0])
                p = p + det.noise_sigma * g
            outputs.append(p)
    return outputs


def synthesize_general_matrix(a, pcm: PCMDeviceModel | None = None) -> GeneralMatrixProgram:
    """Program an arbitrary square matrix as U diag(s/s_max) V^H times s_max.

    Both unitary factors go through the analytic rectangular programming
    rule. With a pcm model, attenuations snap to its amplitude level grid
    (level k -> k/(num_levels-1)).
    """
    a = as_cmatrix(a, "a")
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"weight matrix must be square, got {a.shape}")
    u, s, vh = np.linalg.svd(a)
    if s[0] <= 0:
        raise ValueError("cannot synthesize the zero matrix: no usable scale")
    att = s / s[0]
    if pcm is not None:
        grid = pcm.num_levels - 1
        att = np.round(att * grid) / grid
    return GeneralMatrixProgram(
        left_program=decompose_clements(u),
        right_program=decompose_clements(vh),
        attenuations=att,
        global_scale=float(s[0]),
    )


def reconstruct_general(topology: MeshTopology, program: GeneralMatrixProgram) -> np.ndarray:
    """Dense matrix a general program realizes (ideal hardware)."""
    from .mesh import forward_matrix

    left = forward_matrix(topology, program.left_program)
    right = forward_matrix(topology, program.right_program)
    return program.global_scale * (left @ np.diag(program.attenuations) @ right)


def run_gemm(a, b, plan: GemmPlan | None = None) -> tuple[np.ndarray, GemmReport]:
    """Compute a @ b by streaming b's columns through one programmed mesh.

    tdm runs one column per time slot; wdm runs plan.channels columns per
    frame on separate wavelengths. The weight program is synthesized once,
    counted in the report.
    """
    plan = plan or GemmPlan()
    a = as_cmatrix(a, "a")
    b = as_cmatrix(b, "b")
    n = a.shape[0]
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"a must be square, got {a.shape}")
    if b.shape[0] != n:
        raise ValueError(f"b has {b.shape[0]} rows, expected {n}")
    m_cols = b.shape[1]
    topology = build_clements(n)

    programming_events = 0
    program = synthesize_general_matrix(a)
    programming_events += 1

    peak = float(np.max(np.abs(b))) if b.size else 0.0
    full_scale = plan.full_scale if plan.full_scale is not None else max(peak, 1.0)
    if peak > full_scale:
        raise ValueError(f"input peak {peak:.6g} exceeds full_scale {full_scale:.6g}; encoding would clip")

    result = np.zeros((n, m_cols), dtype=np.complex128)
    if plan.mode == "tdm":
        slots = m_cols
        for j in range(m_cols):
            frame = encode_vector(b[:, j], full_scale)
            result[:, j] = run_mvm(topology, program, frame, det=plan.detector,
                                   slot_index=j, dispersion=plan.dispersion)[0]
    else:
        k = plan.channels
        slots = (m_cols + k - 1) // k
        for f in range(slots):
            cols = list(range(f * k, min((f + 1) * k, m_cols)))
            frame = EncodedFrame([b[:, j] / full_scale for j in cols], full_scale)
            outs = run_mvm(topology, program, frame, det=plan.detector,
                           slot_index=f, dispersion=plan.dispersion)
            for c, j in enumerate(cols):
                result[:, j] = outs[c]

    report = GemmReport(
        rows=n, cols=m_cols, mode=plan.mode, channels=plan.channels,
        slots=slots, programming_events=programming_events,
    )
    if plan.check_oracle:
        gold = a @ b
        denom = np.linalg.norm(gold)
        errs = np.abs(result - gold)
        report.max_rel_err = float(np.max(errs) / max(denom, 1e-300))
        report.mean_rel_err = float(np.mean(errs) / max(denom, 1e-300))
    return result, report
