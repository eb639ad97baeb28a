"""Memory-mapped accelerator device model with DMA, interrupts, and energy.

Address map (one flat space for host-visible accesses):

    0x0000_0000..0x0000_001C  registers (word offsets below)
    0x1000_0000 + offset      scratchpad window (direct word pokes)
    0x8000_0000 + offset      host DRAM window

Registers: 0x00 CTRL (bit0 START strobe, bit1 MODE 0=load weights 1=compute,
bit2 IRQ_EN, bit3 SOFT_RESET), 0x04 STATUS read-only (bit0 BUSY, bit1 DONE,
bit2 ERROR), 0x08 DIM_N, 0x0C DIM_M, 0x10 WEIGHTS_ADDR, 0x14 INPUT_ADDR,
0x18 OUTPUT_ADDR, 0x1C CHANNELS (reset value 1). Addresses held in the
registers are scratchpad byte offsets. DMA script lines carry offsets
relative to each end's own space (h2d: src in host DRAM, dst in scratchpad).

Numeric data is Q1.15 complex: two saturating int16 per 32-bit word, real
in the low half, imaginary in the high half, little-endian words in memory
images. Weights are DIM_N x DIM_N words row-major at WEIGHTS_ADDR; inputs
and outputs are DIM_M consecutive DIM_N-word vectors.

Command flow: IDLE -> PROGRAMMING or COMPUTING -> DONE -> IDLE (via a CTRL
write with START clear); validation failures and illegal accesses set the
sticky ERROR bit without leaving IDLE. Loading weights reads the scratchpad
at the START strobe, factors the matrix through the rectangular mesh (SVD
route), and, in pcm mode, snaps phases and attenuations to the level grid;
the phase takes the worst per-shifter level transition time. Compute reads
inputs at the strobe, takes pipeline latency plus one symbol period per
time slot (ceil(DIM_M / CHANNELS) slots), and writes results at completion.
Exactly one interrupt is raised per completed command when IRQ_EN is set.

A soft reset clears registers and state; a pcm-held weight program survives
it (non-volatile), a thermo-optic one does not. Hold power accrues between
events in thermo mode only. The run ends with the script; an unfinished
command stays unfired.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .mesh import TWO_PI, build_clements
from .mvm import DetectorConfig, EncodedFrame, GeneralMatrixProgram, run_mvm, synthesize_general_matrix
from .pcm import PCMDeviceModel, ThermoOpticModel, quantize_program, thermo_optic_hold_power

REG_CTRL = 0x00
REG_STATUS = 0x04
REG_DIM_N = 0x08
REG_DIM_M = 0x0C
REG_WEIGHTS_ADDR = 0x10
REG_INPUT_ADDR = 0x14
REG_OUTPUT_ADDR = 0x18
REG_CHANNELS = 0x1C
REG_NAMES = {
    REG_CTRL: "CTRL", REG_STATUS: "STATUS", REG_DIM_N: "DIM_N", REG_DIM_M: "DIM_M",
    REG_WEIGHTS_ADDR: "WEIGHTS_ADDR", REG_INPUT_ADDR: "INPUT_ADDR",
    REG_OUTPUT_ADDR: "OUTPUT_ADDR", REG_CHANNELS: "CHANNELS",
}

CTRL_START = 1 << 0
CTRL_MODE = 1 << 1
CTRL_IRQ_EN = 1 << 2
CTRL_SOFT_RESET = 1 << 3

ST_BUSY = 1 << 0
ST_DONE = 1 << 1
ST_ERROR = 1 << 2

MMR_SIZE = 0x20
SPM_BASE = 0x1000_0000
HOST_BASE = 0x8000_0000

MAX_PORTS = 64
DEVICE_FULL_SCALE = 2.0  # encoder headroom: |q1.15 complex| <= sqrt(2)

IDLE, PROGRAMMING, COMPUTING, DONE = "IDLE", "PROGRAMMING", "COMPUTING", "DONE"


# --- fixed point -----------------------------------------------------------


def q15_encode(x: float) -> int:
    """Saturating Q1.15 encode to a 16-bit two's complement pattern."""
    v = int(np.floor(x * 32768.0 + 0.5))
    v = max(-32768, min(32767, v))
    return v & 0xFFFF


def q15_decode(bits: int) -> float:
    bits &= 0xFFFF
    if bits >= 0x8000:
        bits -= 0x10000
    return bits / 32768.0


def pack_complex(z: complex) -> int:
    return q15_encode(z.real) | (q15_encode(z.imag) << 16)


def unpack_complex(word: int) -> complex:
    return complex(q15_decode(word & 0xFFFF), q15_decode((word >> 16) & 0xFFFF))


def matrix_to_words(a: np.ndarray) -> np.ndarray:
    flat = np.asarray(a, dtype=np.complex128).reshape(-1)
    return np.array([pack_complex(z) for z in flat], dtype=np.uint32)


def words_to_matrix(words: np.ndarray, rows: int, cols: int) -> np.ndarray:
    vals = [unpack_complex(int(w)) for w in words]
    return np.array(vals, dtype=np.complex128).reshape(rows, cols)


def read_q15_words(image: bytes, byte_offset: int, count: int) -> np.ndarray:
    """Dequantize count complex words from a little-endian memory image."""
    words = np.frombuffer(image, dtype="<u4", offset=byte_offset, count=count)
    return np.array([unpack_complex(int(w)) for w in words], dtype=np.complex128)


# --- configuration records -------------------------------------------------


@dataclass(frozen=True)
class TimingConfig:
    """Per-event durations (ps) and optional energy coefficients."""

    symbol_period_ps: int = 20
    bus_cycle_ps: int = 1000
    dma_bytes_per_cycle: int = 8
    pcm_prog_step_ps: int = 100_000
    optical_pipeline_latency_ps: int = 50
    e_detect_per_sample_j: float = 0.0
    e_dma_per_byte_j: float = 0.0

    def __post_init__(self):
        for name in ("symbol_period_ps", "bus_cycle_ps", "dma_bytes_per_cycle",
                     "pcm_prog_step_ps", "optical_pipeline_latency_ps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.e_detect_per_sample_j < 0 or self.e_dma_per_byte_j < 0:
            raise ValueError("energy coefficients must be non-negative")


@dataclass(frozen=True)
class DeviceModels:
    """Physics plugged into the device: weight storage and readout."""

    pcm: PCMDeviceModel
    thermo: ThermoOpticModel
    weights_mode: str = "pcm"
    detector: DetectorConfig = field(default_factory=DetectorConfig)

    def __post_init__(self):
        if self.weights_mode not in ("pcm", "thermo"):
            raise ValueError("weights_mode must be 'pcm' or 'thermo'")


@dataclass
class EnergyLedger:
    programming_j: float = 0.0
    static_hold_j: float = 0.0
    detection_j: float = 0.0
    dma_j: float = 0.0

    @property
    def total_j(self) -> float:
        return self.programming_j + self.static_hold_j + self.detection_j + self.dma_j

    def as_dict(self) -> dict:
        return {
            "programming_j": self.programming_j,
            "static_hold_j": self.static_hold_j,
            "detection_j": self.detection_j,
            "dma_j": self.dma_j,
            "total_j": self.total_j,
        }


# --- fault targets (armed into the device, orchestrated by faults.py) ------


@dataclass(frozen=True)
class MMRFault:
    offset: int
    bit: int
    stuck: int = 0  # bit value forced by permanent faults


@dataclass(frozen=True)
class SPMFault:
    word: int
    bit: int
    stuck: int = 0


@dataclass(frozen=True)
class PhaseFault:
    """Force one cell's internal (theta) shifter to a stuck level.

    Placements index the left mesh first (0..cells-1) then the right mesh
    (cells..2*cells-1) of the programmed factorization.
    """

    placement: int
    stuck_level: int


@dataclass(frozen=True)
class DetectorFault:
    port: int
    stuck_value: float


@dataclass(frozen=True)
class FaultSpec:
    target: MMRFault | SPMFault | PhaseFault | DetectorFault
    kind: str  # "transient" | "permanent"
    time_ps: int

    def __post_init__(self):
        if self.kind not in ("transient", "permanent"):
            raise ValueError("kind must be 'transient' or 'permanent'")
        if self.time_ps < 0:
            raise ValueError("time_ps must be non-negative")


# --- host scripts -----------------------------------------------------------


@dataclass(frozen=True)
class WriteStep:
    addr: int
    value: int


@dataclass(frozen=True)
class ReadStep:
    addr: int


@dataclass(frozen=True)
class DmaStep:
    src: int
    dst: int
    length: int
    direction: str


@dataclass(frozen=True)
class WaitIrqStep:
    timeout_ps: int


@dataclass(frozen=True)
class DelayStep:
    ps: int


@dataclass(frozen=True)
class HostScript:
    steps: tuple


class ScriptError(ValueError):
    pass


def parse_script(text: str) -> HostScript:
    """Parse host transactions: W/R/DMA take hex numbers, times are decimal ps."""
    steps = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        verb = toks[0]
        try:
            if verb == "W" and len(toks) == 3:
                addr, value = int(toks[1], 16), int(toks[2], 16)
                if addr % 4:
                    raise ScriptError(f"line {lineno}: unaligned address 0x{addr:x}")
                steps.append(WriteStep(addr, value & 0xFFFFFFFF))
            elif verb == "R" and len(toks) == 2:
                addr = int(toks[1], 16)
                if addr % 4:
                    raise ScriptError(f"line {lineno}: unaligned address 0x{addr:x}")
                steps.append(ReadStep(addr))
            elif verb == "DMA" and len(toks) == 5:
                src, dst, length = int(toks[1], 16), int(toks[2], 16), int(toks[3], 16)
                direction = toks[4]
                if direction not in ("h2d", "d2h"):
                    raise ScriptError(f"line {lineno}: direction must be h2d or d2h")
                if length <= 0 or length % 4 or src % 4 or dst % 4:
                    raise ScriptError(f"line {lineno}: DMA needs positive word-aligned src/dst/len")
                steps.append(DmaStep(src, dst, length, direction))
            elif verb == "WAITIRQ" and len(toks) == 2:
                steps.append(WaitIrqStep(int(toks[1], 10)))
            elif verb == "DELAY" and len(toks) == 2:
                steps.append(DelayStep(int(toks[1], 10)))
            else:
                raise ScriptError(f"line {lineno}: cannot parse {line!r}")
        except ScriptError:
            raise
        except ValueError:
            raise ScriptError(f"line {lineno}: bad number in {line!r}") from None
    return HostScript(tuple(steps))


# --- trace -------------------------------------------------------------------


class Trace:
    """Chronological event log; serializes to JSON lines."""

    def __init__(self):
        self.events: list[dict] = []

    def add(self, t_ps: int, kind: str, **detail):
        if self.events and t_ps < self.events[-1]["t_ps"]:
            raise AssertionError("trace timestamps must be non-decreasing")
        self.events.append({"t_ps": int(t_ps), "kind": kind, "detail": detail})

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(e, sort_keys=True, separators=(",", ":")) for e in self.events) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()


@dataclass
class DeviceRunResult:
    trace: Trace
    energy: EnergyLedger
    host_image: bytes
    spm_image: bytes
    total_time_ps: int
    hang: bool
    error: bool


# --- the device --------------------------------------------------------------


class AcceleratorDevice:
    """Single accelerator instance driven by a host script."""

    def __init__(self, cfg: TimingConfig | None = None, models: DeviceModels | None = None,
                 spm_words: int = 1 << 16, host_words: int = 1 << 16):
        self.cfg = cfg or TimingConfig()
        if models is None:
            models = DeviceModels(
                pcm=PCMDeviceModel(0.3, 0.01, 256, 0.0, 0.0),
                thermo=ThermoOpticModel(0.0),
            )
        self.models = models
        self.spm_words = spm_words
        self.host_words = host_words
        self._armed: list[dict] = []

    def arm(self, spec: FaultSpec) -> None:
        t = spec.target
        if isinstance(t, MMRFault):
            if t.offset % 4 or t.offset >= MMR_SIZE or not 0 <= t.bit < 32 or t.stuck not in (0, 1):
                raise ValueError(f"bad register fault target {t}")
        elif isinstance(t, SPMFault):
            if not 0 <= t.word < self.spm_words or not 0 <= t.bit < 32 or t.stuck not in (0, 1):
                raise ValueError(f"bad scratchpad fault target {t}")
        elif isinstance(t, PhaseFault):
            if t.placement < 0 or t.stuck_level < 0 or t.stuck_level >= self.models.pcm.num_levels:
                raise ValueError(f"bad phase fault target {t}")
        elif isinstance(t, DetectorFault):
            if t.port < 0:
                raise ValueError(f"bad detector fault target {t}")
        else:
            raise ValueError(f"unknown fault target {t!r}")
        self._armed.append({"spec": spec, "applied": False})

    # -- run loop --

    def run(self, script: HostScript, host_image: bytes | None = None) -> DeviceRunResult:
        self._reset_run_state()
        if host_image is not None:
            if len(host_image) > 4 * self.host_words:
                raise ValueError("host image larger than host memory")
            padded = host_image + b"\x00" * (-len(host_image) % 4)
            self.host[: len(padded) // 4] = np.frombuffer(padded, dtype="<u4")
        self.trace.add(0, "reset")
        for step in script.steps:
            if self.hang:
                break
            if isinstance(step, WriteStep):
                self._advance_to(self.t + self.cfg.bus_cycle_ps)
                self._do_write(step.addr, step.value)
            elif isinstance(step, ReadStep):
                self._advance_to(self.t + self.cfg.bus_cycle_ps)
                self._do_read(step.addr)
            elif isinstance(step, DmaStep):
                cycles = -(-step.length // self.cfg.dma_bytes_per_cycle)
                self._advance_to(self.t + cycles * self.cfg.bus_cycle_ps)
                self._do_dma(step)
            elif isinstance(step, DelayStep):
                self._advance_to(self.t + step.ps)
            elif isinstance(step, WaitIrqStep):
                self._do_waitirq(step.timeout_ps)
        self.trace.add(self.t, "end")
        for power_w, ps in self._hold_epochs:
            self.energy.static_hold_j += power_w * ps * 1e-12
        return DeviceRunResult(
            trace=self.trace,
            energy=self.energy,
            host_image=self.host.astype("<u4").tobytes(),
            spm_image=self.spm.astype("<u4").tobytes(),
            total_time_ps=self.t,
            hang=self.hang,
            error=self.error_flag,
        )

    def _reset_run_state(self):
        self.t = 0
        self.trace = Trace()
        self.energy = EnergyLedger()
        self.spm = np.zeros(self.spm_words, dtype=np.uint32)
        self.host = np.zeros(self.host_words, dtype=np.uint32)
        self.regs = {off: 0 for off in REG_NAMES if off != REG_STATUS}
        self.regs[REG_CHANNELS] = 1
        self.state = IDLE
        self.error_flag = False
        self.irq_pending = False
        self.hang = False
        self._pending: tuple[int, str] | None = None
        self._staged: dict | None = None
        self._program: dict | None = None  # n, topology, gmp, hold_power_w
        self._levels: dict | None = None
        self._hold_power_w = 0.0
        self._hold_epochs: list[list] = []  # [power_w, picoseconds] runs
        for f in self._armed:
            f["applied"] = False

    # -- time & events --

    def _accrue_hold(self, t_from: int, t_to: int):
        # accumulate picoseconds per constant-power epoch and multiply once at
        # the end of the run, so reported energy is exactly power x time
        if self._hold_power_w > 0 and t_to > t_from:
            dt = t_to - t_from
            if self._hold_epochs and self._hold_epochs[-1][0] == self._hold_power_w:
                self._hold_epochs[-1][1] += dt
            else:
                self._hold_epochs.append([self._hold_power_w, dt])

    def _advance_to(self, t_target: int):
        events = []
        if self._pending is not None and self._pending[0] <= t_target:
            events.append((self._pending[0], 0, None))
        for f in self._armed:
            spec = f["spec"]
            if (spec.kind == "transient" and not f["applied"]
                    and isinstance(spec.target, (MMRFault, SPMFault))
                    and spec.time_ps <= t_target):
                events.append((spec.time_ps, 1, f))
        events.sort(key=lambda e: (e[0], e[1]))
        for ev_t, prio, payload in events:
            ev_t = max(ev_t, self.t)
            self._accrue_hold(self.t, ev_t)
            self.t = ev_t
            if prio == 0:
                self._complete()
            else:
                self._apply_transient(payload)
        self._accrue_hold(self.t, t_target)
        self.t = max(self.t, t_target)

    def _apply_transient(self, armed: dict):
        tgt = armed["spec"].target
        if isinstance(tgt, MMRFault):
            if tgt.offset in self.regs:
                self.regs[tgt.offset] ^= 1 << tgt.bit
        elif isinstance(tgt, SPMFault):
            self.spm[tgt.word] = np.uint32(int(self.spm[tgt.word]) ^ (1 << tgt.bit))
        armed["applied"] = True

    # -- fault filters --

    def _mmr_view(self, offset: int, value: int) -> int:
        for f in self._armed:
            spec = f["spec"]
            if (spec.kind == "permanent" and isinstance(spec.target, MMRFault)
                    and spec.target.offset == offset and spec.time_ps <= self.t):
                value = (value & ~(1 << spec.target.bit)) | (spec.target.stuck << spec.target.bit)
        return value

    def _spm_view(self, word: int, value: int) -> int:
        for f in self._armed:
            spec = f["spec"]
            if (spec.kind == "permanent" and isinstance(spec.target, SPMFault)
                    and spec.target.word == word and spec.time_ps <= self.t):
                value = (value & ~(1 << spec.target.bit)) | (spec.target.stuck << spec.target.bit)
        return value

    def _spm_read(self, word: int) -> int:
        return self._spm_view(word, int(self.spm[word]))

    # -- host transactions --

    def _do_write(self, addr: int, value: int):
        if addr < MMR_SIZE:
            self._reg_write(addr, value)
        elif SPM_BASE <= addr < SPM_BASE + 4 * self.spm_words:
            self.spm[(addr - SPM_BASE) // 4] = np.uint32(value)
            self.trace.add(self.t, "mem_write", addr=addr, value=value)
        elif HOST_BASE <= addr < HOST_BASE + 4 * self.host_words:
            self.host[(addr - HOST_BASE) // 4] = np.uint32(value)
            self.trace.add(self.t, "mem_write", addr=addr, value=value)
        else:
            self.trace.add(self.t, "bus_error", addr=addr, op="write")

    def _do_read(self, addr: int):
        if addr < MMR_SIZE:
            value = self._reg_read(addr)
            self.trace.add(self.t, "reg_read", addr=addr, value=value)
        elif SPM_BASE <= addr < SPM_BASE + 4 * self.spm_words:
            value = self._spm_read((addr - SPM_BASE) // 4)
            self.trace.add(self.t, "mem_read", addr=addr, value=value)
        elif HOST_BASE <= addr < HOST_BASE + 4 * self.host_words:
            value = int(self.host[(addr - HOST_BASE) // 4])
            self.trace.add(self.t, "mem_read", addr=addr, value=value)
        else:
            value = 0
            self.trace.add(self.t, "bus_error", addr=addr, op="read")
        return value

    def _do_dma(self, step: DmaStep):
        words = step.length // 4
        if step.direction == "h2d":
            if step.src + step.length > 4 * self.host_words or step.dst + step.length > 4 * self.spm_words:
                raise ScriptError("DMA out of bounds")
            payload = [int(self.host[step.src // 4 + i]) for i in range(words)]
            for i, w in enumerate(payload):
                self.spm[step.dst // 4 + i] = np.uint32(w)
        else:
            if step.src + step.length > 4 * self.spm_words or step.dst + step.length > 4 * self.host_words:
                raise ScriptError("DMA out of bounds")
            payload = [self._spm_read(step.src // 4 + i) for i in range(words)]
            for i, w in enumerate(payload):
                self.host[step.dst // 4 + i] = np.uint32(w)
        self.energy.dma_j += self.cfg.e_dma_per_byte_j * step.length
        digest = hashlib.sha256(np.array(payload, dtype="<u4").tobytes()).hexdigest()[:12]
        self.trace.add(self.t, "dma", src=step.src, dst=step.dst, bytes=step.length,
                       dir=step.direction, digest=digest)

    def _do_waitirq(self, timeout_ps: int):
        deadline = self.t + timeout_ps
        if not self.irq_pending and self._pending is not None and self._pending[0] <= deadline:
            self._advance_to(self._pending[0])
        if self.irq_pending:
            self.trace.add(self.t, "waitirq", ok=True)
            return
        self._advance_to(deadline)
        self.hang = True
        self.trace.add(self.t, "hang", timeout_ps=timeout_ps)

    # -- registers --

    def _status_bits(self) -> int:
        bits = 0
        if self.state in (PROGRAMMING, COMPUTING):
            bits |= ST_BUSY
        if self.state == DONE:
            bits |= ST_DONE
        if self.error_flag:
            bits |= ST_ERROR
        return bits

    def _reg_read(self, offset: int) -> int:
        if offset == REG_STATUS:
            return self._mmr_view(offset, self._status_bits())
        if offset in self.regs:
            return self._mmr_view(offset, self.regs[offset])
        return 0

    def _flag_error(self, reason: str):
        self.error_flag = True
        self.trace.add(self.t, "error", reason=reason)

    def _reg_write(self, offset: int, value: int):
        if offset == REG_STATUS:
            self.trace.add(self.t, "bus_error", addr=offset, op="write")
            return
        if offset not in self.regs:
            self.trace.add(self.t, "bus_error", addr=offset, op="write")
            return
        if offset == REG_CTRL:
            self._ctrl_write(value)
            return
        if self.state in (PROGRAMMING, COMPUTING):
            self._flag_error(f"config write to {REG_NAMES[offset]} while busy")
            return
        self.regs[offset] = value & 0xFFFFFFFF
        self.trace.add(self.t, "reg_write", addr=offset, value=self.regs[offset])

    def _ctrl_write(self, value: int):
        effective = self._mmr_view(REG_CTRL, value & 0xF)
        self.trace.add(self.t, "reg_write", addr=REG_CTRL, value=effective)
        if effective & CTRL_SOFT_RESET:
            self.regs[REG_CTRL] = value & 0xF
            self._soft_reset()
            return
        if self.state in (PROGRAMMING, COMPUTING):
            self._flag_error("CTRL write while busy")
            return
        self.regs[REG_CTRL] = value & 0xF
        if effective & CTRL_START:
            if self.state == DONE:
                self._flag_error("START while DONE; clear CTRL first")
                return
            if effective & CTRL_MODE:
                self._start_compute()
            else:
                self._start_programming()
        else:
            if self.state == DONE:
                self._set_state(IDLE)
                self.irq_pending = False

    def _soft_reset(self):
        self._pending = None
        self._staged = None
        self.irq_pending = False
        self.error_flag = False
        for off in self.regs:
            self.regs[off] = 0
        self.regs[REG_CHANNELS] = 1
        if self.models.weights_mode != "pcm":
            self._program = None
            self._levels = None
            self._hold_power_w = 0.0
        self._set_state(IDLE, note="soft_reset")

    def _set_state(self, new: str, note: str | None = None):
        if new != self.state:
            detail = {"from": self.state, "to": new}
            if note:
                detail["note"] = note
            self.trace.add(self.t, "state", **detail)
            self.state = new

    # -- commands --

    def _reg(self, offset: int) -> int:
        return self._mmr_view(offset, self.regs[offset])

    def _start_programming(self):
        n = self._reg(REG_DIM_N)
        waddr = self._reg(REG_WEIGHTS_ADDR)
        if not 1 <= n <= MAX_PORTS:
            self._flag_error(f"bad DIM_N {n}")
            return
        if waddr % 4 or waddr + 4 * n * n > 4 * self.spm_words:
            self._flag_error("weights region out of scratchpad bounds")
            return
        words = [self._spm_read(waddr // 4 + i) for i in range(n * n)]
        w = words_to_matrix(np.array(words, dtype=np.uint32), n, n)
        pcm_active = self.models.weights_mode == "pcm"
        try:
            gmp = synthesize_general_matrix(w, pcm=self.models.pcm if pcm_active else None)
        except ValueError as exc:
            self._flag_error(f"weight synthesis failed: {exc}")
            return
        if pcm_active:
            model = self.models.pcm
            left_q, lt, lp = quantize_program(gmp.left_program, model)
            right_q, rt, rp = quantize_program(gmp.right_program, model)
            gmp = GeneralMatrixProgram(left_q, right_q, gmp.attenuations, gmp.global_scale)
            att_levels = np.round(gmp.attenuations * (model.num_levels - 1)).astype(int)
            new_levels = {"lt": lt, "lp": lp, "rt": rt, "rp": rp, "att": att_levels}
            if self._levels is not None and all(self._levels[k].shape == new_levels[k].shape for k in new_levels):
                deltas = np.concatenate([np.abs(new_levels[k] - self._levels[k]) for k in new_levels])
            else:
                deltas = np.concatenate([np.abs(v) for v in new_levels.values()])
            max_steps = int(deltas.max()) if deltas.size else 0
            total_steps = int(deltas.sum())
            duration = max_steps * self.cfg.pcm_prog_step_ps
        else:
            new_levels = None
            max_steps = total_steps = 0
            duration = self.cfg.bus_cycle_ps
        self._staged = {
            "kind": "program", "n": n, "gmp": gmp, "levels": new_levels,
            "max_steps": max_steps, "total_steps": total_steps,
        }
        self._set_state(PROGRAMMING)
        self._pending = (self.t + duration, "program")

    def _start_compute(self):
        n = self._reg(REG_DIM_N)
        m = self._reg(REG_DIM_M)
        k = self._reg(REG_CHANNELS)
        iaddr, oaddr = self._reg(REG_INPUT_ADDR), self._reg(REG_OUTPUT_ADDR)
        if self._program is None:
            self._flag_error("compute before weights are programmed")
            return
        if n != self._program["n"]:
            self._flag_error(f"DIM_N {n} does not match programmed {self._program['n']}")
            return
        if m < 1:
            self._flag_error(f"bad DIM_M {m}")
            return
        if k < 1:
            self._flag_error(f"bad CHANNELS {k}")
            return
        for name, addr in (("input", iaddr), ("output", oaddr)):
            if addr % 4 or addr + 4 * n * m > 4 * self.spm_words:
                self._flag_error(f"{name} region out of scratchpad bounds")
                return
        words = [self._spm_read(iaddr // 4 + i) for i in range(n * m)]
        x = words_to_matrix(np.array(words, dtype=np.uint32), m, n).T  # columns are vectors
        program = self._faulted_program()
        topology = build_clements(n)
        slots = -(-m // k)
        y = np.zeros((n, m), dtype=np.complex128)
        for f in range(slots):
            cols = list(range(f * k, min((f + 1) * k, m)))
            frame = EncodedFrame([x[:, j] / DEVICE_FULL_SCALE for j in cols], DEVICE_FULL_SCALE)
            outs = run_mvm(topology, program, frame, det=self.models.detector, slot_index=f)
            for c, j in enumerate(cols):
                y[:, j] = outs[c]
        duration = self.cfg.optical_pipeline_latency_ps + slots * self.cfg.symbol_period_ps
        self._staged = {"kind": "compute", "n": n, "m": m, "k": k, "slots": slots,
                        "y": y, "oaddr": oaddr}
        self._set_state(COMPUTING)
        self._pending = (self.t + duration, "compute")

    def _faulted_program(self) -> GeneralMatrixProgram:
        gmp: GeneralMatrixProgram = self._program["gmp"]
        forced = []
        for f in self._armed:
            spec = f["spec"]
            if not isinstance(spec.target, PhaseFault) or spec.time_ps > self.t:
                continue
            if spec.kind == "permanent":
                forced.append(spec.target)
            elif not f["applied"]:
                forced.append(spec.target)
                f["applied"] = True
        if not forced:
            return gmp
        left = gmp.left_program.copy()
        right = gmp.right_program.copy()
        cells = left.thetas.shape[0]
        step = TWO_PI / self.models.pcm.num_levels
        for t in forced:
            if t.placement < cells:
                left.thetas[t.placement] = t.stuck_level * step
            elif t.placement < 2 * cells:
                right.thetas[t.placement - cells] = t.stuck_level * step
        return GeneralMatrixProgram(left, right, gmp.attenuations, gmp.global_scale)

    def _faulted_outputs(self, y: np.ndarray) -> np.ndarray:
        out = y.copy()
        for f in self._armed:
            spec = f["spec"]
            if not isinstance(spec.target, DetectorFault) or spec.time_ps > self.t:
                continue
            if spec.kind == "transient":
                if f["applied"]:
                    continue
                f["applied"] = True
            if spec.target.port < out.shape[0]:
                out[spec.target.port, :] = spec.target.stuck_value
        return out

    def _complete(self):
        kind = self._pending[1]
        self._pending = None
        staged, self._staged = self._staged, None
        if kind == "program":
            self.energy.programming_j += staged["total_steps"] * self.models.pcm.e_prog_per_step_j \
                if self.models.weights_mode == "pcm" else 0.0
            self._program = {"n": staged["n"], "gmp": staged["gmp"]}
            self._levels = staged["levels"]
            if self.models.weights_mode == "thermo":
                gmp = staged["gmp"]
                self._hold_power_w = (thermo_optic_hold_power(gmp.left_program, self.models.thermo)
                                      + thermo_optic_hold_power(gmp.right_program, self.models.thermo))
            else:
                self._hold_power_w = 0.0
            self.trace.add(self.t, "program", n=staged["n"], max_steps=staged["max_steps"],
                           total_steps=staged["total_steps"])
        else:
            y = self._faulted_outputs(staged["y"])
            words = matrix_to_words(y.T)  # vector-major like the input layout
            base = staged["oaddr"] // 4
            for i, w in enumerate(words):
                self.spm[base + i] = w
            self.energy.detection_j += self.cfg.e_detect_per_sample_j * staged["n"] * staged["m"]
            digest = hashlib.sha256(words.astype("<u4").tobytes()).hexdigest()[:12]
            self.trace.add(self.t, "compute", n=staged["n"], m=staged["m"], k=staged["k"],
                           slots=staged["slots"], digest=digest)
        self._set_state(DONE)
        if self._mmr_view(REG_CTRL, self.regs[REG_CTRL]) & CTRL_IRQ_EN:
            self.irq_pending = True
            self.trace.add(self.t, "irq")


def run(script: HostScript, cfg: TimingConfig | None = None, models: DeviceModels | None = None,
        host_image: bytes | None = None, faults: tuple[FaultSpec, ...] = ()) -> DeviceRunResult:
    """One-shot convenience: build a device, arm faults, run the script."""
    dev = AcceleratorDevice(cfg, models)
    for spec in faults:
        dev.arm(spec)
    return dev.run(script, host_image)
