"""Fault files, outcome classification, and campaign orchestration."""

import numpy as np
import pytest
from conftest import build_host_image, standard_script

from mzisim.clements import decompose_clements
from mzisim.device import (
    DetectorFault,
    FaultSpec,
    MMRFault,
    PhaseFault,
    SPMFault,
    run as device_run,
)
from mzisim.faults import (
    CAMPAIGN_CSV_HEADER,
    FaultFileError,
    campaign_csv,
    classify,
    exhaustive_spm_transients,
    first_divergence_ps,
    format_target,
    parse_fault_file,
    parse_fault_line,
    random_faults,
    run_campaign,
    write_fault_file,
)
from mzisim.linalg import fidelity, haar_random_unitary, seeded_rng
from mzisim.mesh import build_clements, forward_matrix

N, M = 4, 2
OUT_REGION = (0x2000, N * M)


def _setup(seed=101):
    w = 0.3 * (seeded_rng(seed, 1).normal(size=(N, N)) + 1j * seeded_rng(seed, 2).normal(size=(N, N)))
    x = 0.3 * (seeded_rng(seed, 3).normal(size=(N, M)) + 1j * seeded_rng(seed, 4).normal(size=(N, M)))
    return standard_script(N, M), build_host_image(w, x)


# --- file grammar ------------------------------------------------------------


def test_fault_file_round_trip():
    specs = [
        FaultSpec(MMRFault(0x08, 3), "transient", 500),
        FaultSpec(MMRFault(0x00, 0, stuck=0), "permanent", 0),
        FaultSpec(SPMFault(2048, 14), "transient", 12000),
        FaultSpec(SPMFault(7, 31, stuck=1), "permanent", 90),
        FaultSpec(PhaseFault(5, 128), "transient", 4),
        FaultSpec(PhaseFault(40, 0), "permanent", 0),
        FaultSpec(DetectorFault(3, 0.75), "transient", 11),
        FaultSpec(DetectorFault(0, -0.5), "permanent", 2),
    ]
    text = write_fault_file(specs)
    assert parse_fault_file(text) == specs
    assert write_fault_file([]) == ""


def test_fault_lines_accept_hex_and_comments():
    specs = parse_fault_file("""
    # header comment
    T MMR 0x08 3 500   # trailing comment
    P SPM 0x800 0x1f 1 90
    """)
    assert specs[0].target == MMRFault(0x08, 3)
    assert specs[1].target == SPMFault(0x800, 31, stuck=1)


def test_fault_parse_errors_name_the_line():
    with pytest.raises(FaultFileError, match="line 2.*mode"):
        parse_fault_file("T MMR 0 0 5\nQ MMR 0 0 5\n")
    with pytest.raises(FaultFileError, match="too few"):
        parse_fault_line("T MMR 0", lineno=1)
    with pytest.raises(FaultFileError, match="field count"):
        parse_fault_line("T PHASE 1 2 3 4", lineno=1)
    with pytest.raises(FaultFileError, match="bad number"):
        parse_fault_line("T SPM zz 0 5", lineno=1)
    with pytest.raises(FaultFileError, match="unknown fault kind"):
        parse_fault_line("T LASER 0 0 5", lineno=1)


def test_format_target_is_stable():
    assert format_target(FaultSpec(MMRFault(0x08, 3), "transient", 0)) == "MMR:0x08.b3"
    assert format_target(FaultSpec(MMRFault(0x00, 0, 1), "permanent", 0)) == "MMR:0x00.b0@1"
    assert format_target(FaultSpec(PhaseFault(5, 12), "permanent", 0)) == "PHASE:5@L12"
    assert format_target(FaultSpec(DetectorFault(2, 0.75), "transient", 0)) == "DETECTOR:2@0.75"


# --- classification on real runs ----------------------------------------------


def test_hang_detected_sdc_masked_buckets():
    script, image = _setup()
    gold = device_run(script, host_image=image)
    assert not gold.hang and not gold.error

    # CTRL START stuck at 0: the device never starts, WAITIRQ times out
    hang = device_run(script, host_image=image,
                      faults=(FaultSpec(MMRFault(0x00, 0, stuck=0), "permanent", 0),))
    assert classify(gold, hang, OUT_REGION, 2**-14) == "Hang"
    # its result region is also wrong, so Hang is taking precedence over SDC
    assert hang.host_image[0x2000:0x2000 + 8] != gold.host_image[0x2000:0x2000 + 8]

    # DIM_N bit stuck at 0 turns n=4 into n=0: the error aborts the command,
    # so no IRQ ever fires and the hang outranks the flagged error
    aborted = device_run(script, host_image=image,
                         faults=(FaultSpec(MMRFault(0x08, 2, stuck=0), "permanent", 0),))
    assert aborted.error and aborted.hang
    assert classify(gold, aborted, OUT_REGION, 2**-14) == "Hang"

    # CTRL START stuck at 1 makes every clear look like a spurious start while
    # DONE: errors are flagged but the stale IRQ still satisfies the waits
    det = device_run(script, host_image=image,
                     faults=(FaultSpec(MMRFault(0x00, 0, stuck=1), "permanent", 0),))
    assert det.error and not det.hang
    assert classify(gold, det, OUT_REGION, 2**-14) == "Detected"

    # detector stuck at a large value silently corrupts the result region
    sdc = device_run(script, host_image=image,
                     faults=(FaultSpec(DetectorFault(1, 0.75), "permanent", 0),))
    assert not sdc.error and not sdc.hang
    assert classify(gold, sdc, OUT_REGION, 2**-14) == "SDC"

    # a flip in scratchpad nothing reads changes no observable transaction
    masked = device_run(script, host_image=image,
                        faults=(FaultSpec(SPMFault(5000, 7), "transient", 0),))
    assert classify(gold, masked, OUT_REGION, 2**-14) == "Masked"
    assert first_divergence_ps(gold, masked) is None


def test_output_region_flip_before_compute_is_overwritten():
    script, image = _setup()
    gold = device_run(script, host_image=image)
    # word 2048 is the first output word; the flip lands long before compute
    # completion, so the detector write replaces it
    faulty = device_run(script, host_image=image,
                        faults=(FaultSpec(SPMFault(2048, 30), "transient", 0),))
    assert classify(gold, faulty, OUT_REGION, 2**-14) == "Masked"


def test_output_region_flip_after_compute_is_sdc():
    script, image = _setup()
    gold = device_run(script, host_image=image)
    t_compute = [e for e in gold.trace.events if e["kind"] == "compute"][0]["t_ps"]
    faulty = device_run(script, host_image=image,
                        faults=(FaultSpec(SPMFault(2048, 14), "transient", t_compute + 1),))
    assert classify(gold, faulty, OUT_REGION, 2**-14) == "SDC"


def test_low_bit_flip_after_compute_is_masked():
    # bit 0 of the real half is one q1.15 ulp, half the classification tolerance
    script, image = _setup()
    gold = device_run(script, host_image=image)
    t_compute = [e for e in gold.trace.events if e["kind"] == "compute"][0]["t_ps"]
    faulty = device_run(script, host_image=image,
                        faults=(FaultSpec(SPMFault(2048, 0), "transient", t_compute + 1),))
    assert classify(gold, faulty, OUT_REGION, 2**-14) == "Masked"
    # it still shows up as a trace divergence in the readback DMA
    assert first_divergence_ps(gold, faulty) is not None


def test_masked_can_still_diverge_in_time():
    # DIM_M bit 0 stuck at 1 makes the device compute a third, all-zero vector:
    # timing and trace change, the compared region does not
    script, image = _setup()
    gold = device_run(script, host_image=image)
    faulty = device_run(script, host_image=image,
                        faults=(FaultSpec(MMRFault(0x0C, 0, stuck=1), "permanent", 0),))
    assert not faulty.error and not faulty.hang
    assert classify(gold, faulty, OUT_REGION, 2**-14) == "Masked"
    assert first_divergence_ps(gold, faulty) is not None


# --- campaigns ----------------------------------------------------------------


def _small_campaign_faults(gold):
    t_compute = [e for e in gold.trace.events if e["kind"] == "compute"][0]["t_ps"]
    return [
        FaultSpec(MMRFault(0x00, 0, stuck=0), "permanent", 0),
        FaultSpec(MMRFault(0x00, 0, stuck=1), "permanent", 0),
        FaultSpec(DetectorFault(1, 0.75), "permanent", 0),
        FaultSpec(SPMFault(2048, 14), "transient", t_compute + 1),
        FaultSpec(SPMFault(5000, 7), "transient", 0),
        FaultSpec(PhaseFault(3, 17), "permanent", 0),
    ]


def test_campaign_rows_ordered_and_classified():
    script, image = _setup()
    gold = device_run(script, host_image=image)
    faults = _small_campaign_faults(gold)
    result = run_campaign(script, faults, OUT_REGION, host_image=image)
    assert [r.fault_id for r in result.rows] == list(range(len(faults)))
    outcomes = [r.outcome for r in result.rows]
    assert outcomes[:5] == ["Hang", "Detected", "SDC", "SDC", "Masked"]
    assert outcomes[5] in ("SDC", "Masked")
    hist = result.histogram
    assert sum(hist.values()) == len(faults)
    assert hist["Hang"] == 1


def test_campaign_is_repeatable_and_jobs_independent():
    script, image = _setup()
    gold = device_run(script, host_image=image)
    faults = _small_campaign_faults(gold)
    r1 = run_campaign(script, faults, OUT_REGION, host_image=image, jobs=1)
    r2 = run_campaign(script, faults, OUT_REGION, host_image=image, jobs=3)
    r3 = run_campaign(script, faults, OUT_REGION, host_image=image, jobs=1)
    assert campaign_csv(r1) == campaign_csv(r2) == campaign_csv(r3)
    # the gold snapshot is untouched by the campaign
    fresh = device_run(script, host_image=image)
    assert fresh.trace.digest() == gold.trace.digest()


def test_campaign_csv_shape():
    script, image = _setup()
    gold = device_run(script, host_image=image)
    result = run_campaign(script, _small_campaign_faults(gold), OUT_REGION, host_image=image)
    text = campaign_csv(result, meta="campaign unit test")
    lines = text.strip().split("\n")
    assert lines[0] == "# campaign unit test"
    assert lines[1] == CAMPAIGN_CSV_HEADER
    assert len(lines) == 2 + len(result.rows)
    # masked never-applied faults leave first_div empty
    masked_line = lines[2 + 4]
    assert masked_line.endswith("Masked,")


def test_campaign_rejects_hanging_gold():
    script, image = _setup()
    bad = standard_script(N, M, irq_en=False)
    with pytest.raises(ValueError, match="gold run hangs"):
        run_campaign(bad, [], OUT_REGION, host_image=image)


# --- generators ---------------------------------------------------------------


def test_exhaustive_spm_transients_cover_window():
    specs = exhaustive_spm_transients(2048, 2, time_ps=77, bits=range(32))
    assert len(specs) == 64
    assert {s.target.word for s in specs} == {2048, 2049}
    assert {s.target.bit for s in specs} == set(range(32))
    assert all(s.kind == "transient" and s.time_ps == 77 for s in specs)


def test_random_faults_deterministic_and_in_bounds():
    kw = dict(n_ports=8, cells=28, num_levels=256, spm_words=4096, t_lo=10, t_hi=500)
    a = random_faults(40, 9, **kw)
    b = random_faults(40, 9, **kw)
    c = random_faults(40, 10, **kw)
    assert a == b
    assert a != c
    for s in a:
        assert 10 <= s.time_ps <= 500
        assert s.kind in ("transient", "permanent")
        t = s.target
        if isinstance(t, SPMFault):
            assert 0 <= t.word < 4096 and 0 <= t.bit < 32
        elif isinstance(t, MMRFault):
            assert t.offset in (0x00, 0x08, 0x0C, 0x10, 0x14, 0x18, 0x1C)
        elif isinstance(t, PhaseFault):
            assert 0 <= t.placement < 56 and 0 <= t.stuck_level < 256
        else:
            assert 0 <= t.port < 8 and -1.0 <= t.stuck_value <= 1.0
    kinds = {type(s.target).__name__ for s in a}
    assert len(kinds) == 4  # all four populations show up in 40 draws
    with pytest.raises(ValueError):
        random_faults(-1, 0, n_ports=4, cells=6, num_levels=8)


# --- physics-level effect of stuck phases --------------------------------------


def test_permanent_phase_fault_reduces_fidelity():
    n, trials = 8, 200
    topo = build_clements(n)
    step = 2 * np.pi / 256
    reduced = 0
    for trial in range(trials):
        target = haar_random_unitary(n, (777, trial))
        prog = decompose_clements(target)
        rng = seeded_rng(778, trial)
        prog.thetas[int(rng.integers(0, len(topo.placements)))] = int(rng.integers(0, 256)) * step
        fid = fidelity(target, forward_matrix(topo, prog))
        if fid < 1 - 1e-12:
            reduced += 1
    assert reduced >= 0.95 * trials
