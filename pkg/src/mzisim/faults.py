"""Fault injection campaigns over the accelerator device.

A fault list file holds one fault per line:

    T MMR <offset> <bit> <time_ps>            flip a register bit once
    P MMR <offset> <bit> <stuck> <time_ps>    stick a register bit at 0/1
    T SPM <word> <bit> <time_ps>              flip a scratchpad bit once
    P SPM <word> <bit> <stuck> <time_ps>      stick a scratchpad bit
    T PHASE <placement> <level> <time_ps>     wrong level for one compute
    P PHASE <placement> <level> <time_ps>     stuck phase level from time on
    T DETECTOR <port> <value> <time_ps>       one bad readout on a port
    P DETECTOR <port> <value> <time_ps>       port reads <value> from time on

Offsets, words, and bits accept decimal or 0x-prefixed hex; times are
decimal picoseconds; detector values are floats. '#' starts a comment.

Each fault runs in a fresh device against the same host script and is
compared with a fault-free gold run. Outcomes, by precedence:

    Hang      the script's WAITIRQ timed out
    Detected  the device flagged ERROR where the gold run did not
    SDC       the result region differs beyond tolerance, silently
    Masked    nothing architecturally visible changed

first_div_ps is the timestamp of the first trace line that differs from
the gold trace (fault application itself is never traced, so divergence
means an observable transaction changed).
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .device import (
    AcceleratorDevice,
    DetectorFault,
    DeviceModels,
    DeviceRunResult,
    FaultSpec,
    HostScript,
    MMRFault,
    PhaseFault,
    SPMFault,
    TimingConfig,
    read_q15_words,
)
from .linalg import seeded_rng

OUTCOMES = ("Masked", "Detected", "SDC", "Hang")
CAMPAIGN_CSV_HEADER = "fault_id,target,kind,time_ps,outcome,first_div_ps"


@dataclass(frozen=True)
class CampaignRow:
    fault_id: int
    spec: FaultSpec
    outcome: str
    first_div_ps: int | None


@dataclass(frozen=True)
class CampaignResult:
    rows: tuple[CampaignRow, ...]

    @property
    def histogram(self) -> dict:
        h = {k: 0 for k in OUTCOMES}
        for r in self.rows:
            h[r.outcome] += 1
        return h


class FaultFileError(ValueError):
    pass


def format_target(spec: FaultSpec) -> str:
    t = spec.target
    if isinstance(t, MMRFault):
        core = f"MMR:0x{t.offset:02x}.b{t.bit}"
        return core + (f"@{t.stuck}" if spec.kind == "permanent" else "")
    if isinstance(t, SPMFault):
        core = f"SPM:{t.word}.b{t.bit}"
        return core + (f"@{t.stuck}" if spec.kind == "permanent" else "")
    if isinstance(t, PhaseFault):
        return f"PHASE:{t.placement}@L{t.stuck_level}"
    return f"DETECTOR:{t.port}@{t.stuck_value:g}"


def _num(tok: str) -> int:
    return int(tok, 0)


def parse_fault_line(line: str, lineno: int = 0) -> FaultSpec:
    toks = line.split()
    where = f"line {lineno}: " if lineno else ""
    if len(toks) < 4:
        raise FaultFileError(f"{where}too few fields in {line!r}")
    mode, kind = toks[0], toks[1]
    if mode not in ("T", "P"):
        raise FaultFileError(f"{where}mode must be T or P, got {mode!r}")
    kind_name = "transient" if mode == "T" else "permanent"
    try:
        if kind == "MMR":
            if mode == "T" and len(toks) == 5:
                target = MMRFault(_num(toks[2]), _num(toks[3]))
                t_ps = int(toks[4])
            elif mode == "P" and len(toks) == 6:
                target = MMRFault(_num(toks[2]), _num(toks[3]), _num(toks[4]))
                t_ps = int(toks[5])
            else:
                raise FaultFileError(f"{where}wrong field count for MMR fault")
        elif kind == "SPM":
            if mode == "T" and len(toks) == 5:
                target = SPMFault(_num(toks[2]), _num(toks[3]))
                t_ps = int(toks[4])
            elif mode == "P" and len(toks) == 6:
                target = SPMFault(_num(toks[2]), _num(toks[3]), _num(toks[4]))
                t_ps = int(toks[5])
            else:
                raise FaultFileError(f"{where}wrong field count for SPM fault")
        elif kind == "PHASE":
            if len(toks) != 5:
                raise FaultFileError(f"{where}wrong field count for PHASE fault")
            target = PhaseFault(_num(toks[2]), _num(toks[3]))
            t_ps = int(toks[4])
        elif kind == "DETECTOR":
            if len(toks) != 5:
                raise FaultFileError(f"{where}wrong field count for DETECTOR fault")
            target = DetectorFault(_num(toks[2]), float(toks[3]))
            t_ps = int(toks[4])
        else:
            raise FaultFileError(f"{where}unknown fault kind {kind!r}")
    except FaultFileError:
        raise
    except ValueError:
        raise FaultFileError(f"{where}bad number in {line!r}") from None
    return FaultSpec(target, kind_name, t_ps)


def parse_fault_file(text: str) -> list[FaultSpec]:
    specs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            specs.append(parse_fault_line(line, lineno))
    return specs


def write_fault_file(specs) -> str:
    lines = []
    for spec in specs:
        mode = "T" if spec.kind == "transient" else "P"
        t = spec.target
        if isinstance(t, MMRFault):
            mid = f"MMR 0x{t.offset:02x} {t.bit}" + (f" {t.stuck}" if mode == "P" else "")
        elif isinstance(t, SPMFault):
            mid = f"SPM {t.word} {t.bit}" + (f" {t.stuck}" if mode == "P" else "")
        elif isinstance(t, PhaseFault):
            mid = f"PHASE {t.placement} {t.stuck_level}"
        elif isinstance(t, DetectorFault):
            mid = f"DETECTOR {t.port} {t.stuck_value:.10g}"
        else:
            raise ValueError(f"unknown target {t!r}")
        lines.append(f"{mode} {mid} {spec.time_ps}")
    return "\n".join(lines) + ("\n" if lines else "")


# --- classification ----------------------------------------------------------


def first_divergence_ps(gold: DeviceRunResult, faulty: DeviceRunResult) -> int | None:
    """Timestamp of the first differing trace event, None for identical traces."""
    ge, fe = gold.trace.events, faulty.trace.events
    for a, b in zip(ge, fe):
        if a != b:
            return int(b["t_ps"])
    if len(fe) > len(ge):
        return int(fe[len(ge)]["t_ps"])
    if len(ge) > len(fe):
        return int(ge[len(fe)]["t_ps"])
    return None


def _error_events(result: DeviceRunResult) -> int:
    return sum(1 for e in result.trace.events if e["kind"] == "error")


def classify(gold: DeviceRunResult, faulty: DeviceRunResult,
             result_region: tuple[int, int], tol: float) -> str:
    """Bucket one faulty run; result_region is (host byte offset, complex words)."""
    if faulty.hang:
        return "Hang"
    if (faulty.error and not gold.error) or _error_events(faulty) > _error_events(gold):
        return "Detected"
    offset, count = result_region
    yg = read_q15_words(gold.host_image, offset, count)
    yf = read_q15_words(faulty.host_image, offset, count)
    if np.max(np.abs(yg.real - yf.real)) > tol or np.max(np.abs(yg.imag - yf.imag)) > tol:
        return "SDC"
    return "Masked"


# --- campaign ----------------------------------------------------------------


def _one_fault_run(args):
    script, cfg, models, host_image, spec = args
    dev = AcceleratorDevice(cfg, models)
    dev.arm(spec)
    return dev.run(script, host_image)


def run_campaign(script: HostScript, faults, result_region: tuple[int, int],
                 cfg: TimingConfig | None = None, models: DeviceModels | None = None,
                 host_image: bytes | None = None, tol: float = 2.0 ** -14,
                 jobs: int = 1) -> CampaignResult:
    """Run every fault against a shared gold run and classify the outcomes.

    Row order follows the fault list, so results do not depend on jobs.
    """
    faults = list(faults)
    gold = AcceleratorDevice(cfg, models).run(script, host_image)
    if gold.hang:
        raise ValueError("gold run hangs; fix the script before running a campaign")
    tasks = [(script, cfg, models, host_image, spec) for spec in faults]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_fault_run, tasks))
    else:
        results = [_one_fault_run(t) for t in tasks]
    rows = []
    for i, (spec, faulty) in enumerate(zip(faults, results)):
        outcome = classify(gold, faulty, result_region, tol)
        rows.append(CampaignRow(i, spec, outcome, first_divergence_ps(gold, faulty)))
    return CampaignResult(tuple(rows))


def campaign_csv(result: CampaignResult, meta: str | None = None) -> str:
    buf = io.StringIO()
    if meta:
        buf.write("# " + meta + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CAMPAIGN_CSV_HEADER.split(","))
    for r in result.rows:
        writer.writerow([
            r.fault_id, format_target(r.spec), r.spec.kind, r.spec.time_ps,
            r.outcome, "" if r.first_div_ps is None else r.first_div_ps,
        ])
    return buf.getvalue()


# --- generators --------------------------------------------------------------


def exhaustive_spm_transients(word_lo: int, word_count: int, time_ps: int,
                              bits=range(32)) -> list[FaultSpec]:
    """One transient flip per (word, bit) over a scratchpad window."""
    return [FaultSpec(SPMFault(word_lo + w, b), "transient", time_ps)
            for w in range(word_count) for b in bits]


def random_faults(count: int, seed, *, n_ports: int, cells: int, num_levels: int,
                  spm_words: int = 1 << 16, t_lo: int = 0, t_hi: int = 1_000_000) -> list[FaultSpec]:
    """Seeded mixed-population fault list over all four target kinds."""
    if count < 0:
        raise ValueError("count must be non-negative")
    if t_hi < t_lo:
        raise ValueError("t_hi must be >= t_lo")
    rng = seeded_rng(seed, 4871)
    specs = []
    mmr_offsets = (0x00, 0x08, 0x0C, 0x10, 0x14, 0x18, 0x1C)
    for _ in range(count):
        kind = "transient" if rng.random() < 0.5 else "permanent"
        t_ps = int(rng.integers(t_lo, t_hi + 1))
        pick = rng.random()
        if pick < 0.25:
            target = MMRFault(int(rng.choice(mmr_offsets)), int(rng.integers(0, 32)),
                              int(rng.integers(0, 2)))
        elif pick < 0.5:
            target = SPMFault(int(rng.integers(0, spm_words)), int(rng.integers(0, 32)),
                              int(rng.integers(0, 2)))
        elif pick < 0.75:
            target = PhaseFault(int(rng.integers(0, 2 * cells)), int(rng.integers(0, num_levels)))
        else:
            target = DetectorFault(int(rng.integers(0, n_ports)),
                                   float(rng.uniform(-1.0, 1.0)))
        specs.append(FaultSpec(target, kind, t_ps))
    return specs
