"""Non-volatile phase-change weight storage and the thermo-optic baseline.

A phase-change patch holds one of num_levels states on a uniform phase
grid over [0, 2*pi). Changing state costs energy and time proportional to
the number of level steps; holding a state costs nothing. The figure of
merit delta_n/delta_k couples the programmed phase to parasitic absorption:
field transmission exp(-phase/fom). The thermo-optic alternative is
lossless here but burns hold power in proportion to the held phase.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .mesh import TWO_PI, PhaseProgram, wrap_phase

QUANTIZE_TARGETS = ("theta", "phi", "both")


@dataclass(frozen=True)
class PCMDeviceModel:
    """Material and programming parameters for one phase-change element."""

    delta_n: float
    delta_k: float
    num_levels: int
    e_prog_per_step_j: float
    t_switch_per_step_s: float

    def __post_init__(self):
        if self.delta_n <= 0 or self.delta_k <= 0:
            raise ValueError("delta_n and delta_k must be positive")
        if self.num_levels < 2:
            raise ValueError("num_levels must be >= 2")
        if self.e_prog_per_step_j < 0 or self.t_switch_per_step_s < 0:
            raise ValueError("programming costs must be non-negative")

    @property
    def fom(self) -> float:
        return self.delta_n / self.delta_k


@dataclass(frozen=True)
class ThermoOpticModel:
    """Heater-based phase shifter: p_pi_w watts to hold a pi shift."""

    p_pi_w: float

    def __post_init__(self):
        if self.p_pi_w < 0:
            raise ValueError("p_pi_w must be non-negative")


class QuantizedPhaseState(NamedTuple):
    level: int
    phase: float


def quantize_phase(phi: float, m: PCMDeviceModel | int) -> QuantizedPhaseState:
    """Snap a phase to the nearest of m.num_levels grid points on [0, 2*pi).

    Distance wraps around (2*pi - eps is close to level 0); exact ties go
    to the lower level index. m may be a device model or a bare level count.
    """
    levels = m.num_levels if isinstance(m, PCMDeviceModel) else int(m)
    if levels < 2:
        raise ValueError("num_levels must be >= 2")
    step = TWO_PI / levels
    x = float(wrap_phase(phi)) / step
    lo = int(np.floor(x))
    if lo >= levels:
        lo = levels - 1
    hi = (lo + 1) % levels
    d_lo = x - lo
    d_hi = (lo + 1) - x
    if d_lo < d_hi:
        level = lo
    elif d_hi < d_lo:
        level = hi
    else:
        level = min(lo, hi)
    return QuantizedPhaseState(level, level * step)


def pcm_field_transmission(phase_shift: float, m: PCMDeviceModel) -> float:
    """Field transmission of a patch programmed to the given phase."""
    if phase_shift < 0:
        raise ValueError("phase_shift must be non-negative")
    if m.fom <= 0:
        raise ValueError("figure of merit must be positive")
    return float(np.exp(-phase_shift / m.fom))


def program_transition(
    from_state: QuantizedPhaseState | int,
    to_state: QuantizedPhaseState | int,
    m: PCMDeviceModel,
) -> tuple[float, float]:
    """(energy_j, time_s) to move between two level states."""
    lv_from = from_state.level if isinstance(from_state, QuantizedPhaseState) else int(from_state)
    lv_to = to_state.level if isinstance(to_state, QuantizedPhaseState) else int(to_state)
    for lv in (lv_from, lv_to):
        if not 0 <= lv < m.num_levels:
            raise ValueError(f"level {lv} outside 0..{m.num_levels - 1}")
    steps = abs(lv_to - lv_from)
    return steps * m.e_prog_per_step_j, steps * m.t_switch_per_step_s


def thermo_optic_hold_power(program: PhaseProgram, m: ThermoOpticModel) -> float:
    """Total heater power to hold a program: sum over shifters of (phase/pi) * p_pi."""
    total_phase = float(np.sum(program.thetas) + np.sum(program.phis) + np.sum(program.output_phases))
    return total_phase / np.pi * m.p_pi_w


def quantize_program(
    program: PhaseProgram,
    m: PCMDeviceModel | int,
    targets: str = "both",
) -> tuple[PhaseProgram, np.ndarray, np.ndarray]:
    """Quantize a program's cell phases to the level grid.

    Returns (quantized program, theta levels, phi levels). Output-port
    phases stay continuous; targets picks which cell shifters quantize.
    Levels for untouched shifters are reported as their nearest grid
    point anyway so programming-cost accounting stays defined.
    """
    if targets not in QUANTIZE_TARGETS:
        raise ValueError(f"targets must be one of {QUANTIZE_TARGETS}")
    theta_states = [quantize_phase(v, m) for v in program.thetas]
    phi_states = [quantize_phase(v, m) for v in program.phis]
    new_thetas = np.array([s.phase for s in theta_states]) if targets in ("theta", "both") else program.thetas.copy()
    new_phis = np.array([s.phase for s in phi_states]) if targets in ("phi", "both") else program.phis.copy()
    out = PhaseProgram(new_thetas, new_phis, program.output_phases.copy())
    theta_levels = np.array([s.level for s in theta_states], dtype=int)
    phi_levels = np.array([s.level for s in phi_states], dtype=int)
    return out, theta_levels, phi_levels
