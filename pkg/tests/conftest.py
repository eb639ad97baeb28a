"""Shared helpers for driving the accelerator device from tests."""

import numpy as np

from mzisim.device import matrix_to_words, parse_script

WEIGHTS_OFF = 0x0
INPUT_OFF = 0x1000
OUTPUT_OFF = 0x2000

LEGAL_TRANSITIONS = {
    ("IDLE", "PROGRAMMING"),
    ("IDLE", "COMPUTING"),
    ("PROGRAMMING", "DONE"),
    ("COMPUTING", "DONE"),
    ("DONE", "IDLE"),
    ("PROGRAMMING", "IDLE"),  # soft reset mid-flight
    ("COMPUTING", "IDLE"),
}


def build_host_image(w: np.ndarray, x: np.ndarray) -> bytes:
    """Host memory with weights at WEIGHTS_OFF and input vectors at INPUT_OFF.

    x holds one input vector per column; vectors are stored consecutively.
    """
    n = w.shape[0]
    m = x.shape[1]
    size = OUTPUT_OFF + 4 * n * m
    image = np.zeros(size // 4, dtype=np.uint32)
    ww = matrix_to_words(w)
    image[WEIGHTS_OFF // 4 : WEIGHTS_OFF // 4 + ww.size] = ww
    xw = matrix_to_words(x.T)
    image[INPUT_OFF // 4 : INPUT_OFF // 4 + xw.size] = xw
    return image.tobytes()


def standard_script_text(n: int, m: int, k: int = 1, irq_en: bool = True,
                         poll_status: bool = False, timeout_ps: int = 100_000_000) -> str:
    """Program-then-compute host script matching build_host_image's layout."""
    irq = 4 if irq_en else 0
    lines = [
        f"DMA {WEIGHTS_OFF:x} {WEIGHTS_OFF:x} {4 * n * n:x} h2d",
        f"W 8 {n:x}",
        f"W 10 {WEIGHTS_OFF:x}",
        f"W 0 {1 | irq:x}",
    ]
    if poll_status:
        lines.append("R 4")
    lines += [
        f"WAITIRQ {timeout_ps}",
        "R 4",
        "W 0 0",
        f"DMA {INPUT_OFF:x} {INPUT_OFF:x} {4 * n * m:x} h2d",
        f"W c {m:x}",
        f"W 14 {INPUT_OFF:x}",
        f"W 18 {OUTPUT_OFF:x}",
        f"W 1c {k:x}",
        f"W 0 {3 | irq:x}",
    ]
    if poll_status:
        lines.append("R 4")
    lines += [
        f"WAITIRQ {timeout_ps}",
        "R 4",
        "W 0 0",
        f"DMA {OUTPUT_OFF:x} {OUTPUT_OFF:x} {4 * n * m:x} d2h",
    ]
    return "\n".join(lines) + "\n"


def standard_script(n: int, m: int, k: int = 1, **kw):
    return parse_script(standard_script_text(n, m, k, **kw))


def assert_legal_state_trace(trace):
    """Every state event is an allowed edge and STATUS never shows BUSY with DONE."""
    for ev in trace.events:
        if ev["kind"] == "state":
            edge = (ev["detail"]["from"], ev["detail"]["to"])
            assert edge in LEGAL_TRANSITIONS, f"illegal transition {edge}"
        if ev["kind"] == "reg_read" and ev["detail"].get("addr") == 0x04:
            status = ev["detail"]["value"]
            assert not (status & 1 and status & 2), f"STATUS shows BUSY and DONE: {status:#x}"
