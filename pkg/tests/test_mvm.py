"""Compute paths: single-frame products, general weights, matrix-matrix streaming."""

import numpy as np
import pytest

from mzisim.linalg import haar_random_unitary, seeded_rng
from mzisim.mesh import build_clements
from mzisim.mvm import (
    DetectorConfig,
    DispersionModel,
    EncodedFrame,
    GemmPlan,
    encode_vector,
    reconstruct_general,
    run_gemm,
    run_mvm,
    synthesize_general_matrix,
)
from mzisim.pcm import PCMDeviceModel

from mzisim.clements import decompose_clements


def _unitary_setup(n, seed):
    u = haar_random_unitary(n, seed)
    return build_clements(n), decompose_clements(u), u


def test_mvm_matches_matrix_product():
    topo, prog, u = _unitary_setup(8, 3)
    for trial in range(20):
        x = seeded_rng(5, trial).normal(size=8) + 1j * seeded_rng(6, trial).normal(size=8)
        fs = float(np.max(np.abs(x)))
        y = run_mvm(topo, prog, encode_vector(x, fs))[0]
        gold = u @ x
        assert np.linalg.norm(y - gold) / np.linalg.norm(gold) < 1e-9


def test_encode_clip_is_an_error():
    x = np.array([0.5, 2.5], dtype=complex)
    with pytest.raises(ValueError, match="clip"):
        encode_vector(x, 1.0)
    frame = encode_vector(x, 2.5)
    assert frame.full_scale == 2.5


def test_direct_detection_returns_port_powers():
    topo, prog, u = _unitary_setup(4, 11)
    x = seeded_rng(12).normal(size=4) + 0j
    fs = float(np.max(np.abs(x)))
    p = run_mvm(topo, prog, encode_vector(x, fs), det=DetectorConfig(mode="direct"))[0]
    assert np.allclose(p, np.abs(u @ x) ** 2, atol=1e-9)
    assert p.dtype == np.float64


def test_noise_is_reproducible_and_slot_keyed():
    topo, prog, _ = _unitary_setup(4, 21)
    x = seeded_rng(22).normal(size=4) + 0j
    frame = encode_vector(x, float(np.max(np.abs(x))))
    det = DetectorConfig(noise_sigma=1e-3, seed=40)
    y1 = run_mvm(topo, prog, frame, det=det, slot_index=2)[0]
    y2 = run_mvm(topo, prog, frame, det=det, slot_index=2)[0]
    y3 = run_mvm(topo, prog, frame, det=det, slot_index=3)[0]
    assert np.array_equal(y1, y2)
    assert not np.allclose(y1, y3)


def test_coherent_path_is_linear():
    topo, prog, _ = _unitary_setup(6, 31)
    rng = seeded_rng(32)
    x1 = rng.normal(size=6) + 1j * rng.normal(size=6)
    x2 = rng.normal(size=6) + 1j * rng.normal(size=6)
    fs = 4 * float(max(np.max(np.abs(x1 + x2)), np.max(np.abs(x1)), np.max(np.abs(x2))))
    run = lambda v: run_mvm(topo, prog, EncodedFrame([v / fs], fs))[0]
    lhs = run(x1 + 0.7 * x2)
    rhs = run(x1) + 0.7 * run(x2)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_general_synthesis_reconstructs_matrix():
    for n in (4, 8):
        for trial in range(5):
            a = seeded_rng(51, n, trial).normal(size=(n, n)) + 1j * seeded_rng(52, n, trial).normal(size=(n, n))
            gp = synthesize_general_matrix(a)
            realized = reconstruct_general(build_clements(n), gp)
            assert np.max(np.abs(realized - a)) / np.max(np.abs(a)) < 1e-8


def test_general_program_runs_vectors():
    n = 5
    a = seeded_rng(61).normal(size=(n, n)) + 1j * seeded_rng(62).normal(size=(n, n))
    gp = synthesize_general_matrix(a)
    topo = build_clements(n)
    x = seeded_rng(63).normal(size=n) + 0j
    y = run_mvm(topo, gp, encode_vector(x, float(np.max(np.abs(x)))))[0]
    gold = a @ x
    assert np.linalg.norm(y - gold) / np.linalg.norm(gold) < 1e-9


def test_zero_matrix_synthesis_is_an_error():
    with pytest.raises(ValueError, match="zero matrix"):
        synthesize_general_matrix(np.zeros((3, 3)))


def test_pcm_snaps_attenuations_to_level_grid():
    a = seeded_rng(71).normal(size=(4, 4)) + 0j
    pcm = PCMDeviceModel(delta_n=0.3, delta_k=0.01, num_levels=9,
                         e_prog_per_step_j=0.0, t_switch_per_step_s=0.0)
    gp = synthesize_general_matrix(a, pcm=pcm)
    on_grid = gp.attenuations * (pcm.num_levels - 1)
    assert np.allclose(on_grid, np.round(on_grid), atol=1e-12)
    assert gp.attenuations[0] == 1.0


def test_tdm_and_wdm_agree_bit_for_bit_without_noise():
    n = 8
    for k in (2, 4):
        a = seeded_rng(81, k).normal(size=(n, n)) + 1j * seeded_rng(82, k).normal(size=(n, n))
        b = seeded_rng(83, k).normal(size=(n, n)) + 1j * seeded_rng(84, k).normal(size=(n, n))
        y_tdm, r_tdm = run_gemm(a, b, GemmPlan(mode="tdm", check_oracle=True))
        y_wdm, r_wdm = run_gemm(a, b, GemmPlan(mode="wdm", channels=k, check_oracle=True))
        assert np.array_equal(y_tdm, y_wdm)
        assert r_tdm.max_rel_err < 1e-8 and r_wdm.max_rel_err < 1e-8
        assert r_tdm.slots == n and r_wdm.slots == n // k


def test_wdm_single_channel_equals_tdm_even_with_noise():
    n = 4
    a = seeded_rng(91).normal(size=(n, n)) + 0j
    b = seeded_rng(92).normal(size=(n, n)) + 0j
    det = DetectorConfig(noise_sigma=1e-3, seed=7)
    y1, _ = run_gemm(a, b, GemmPlan(mode="tdm", detector=det))
    y2, _ = run_gemm(a, b, GemmPlan(mode="wdm", channels=1, detector=det))
    assert np.array_equal(y1, y2)


def test_programming_happens_once_regardless_of_workload():
    n = 4
    a = seeded_rng(95).normal(size=(n, n)) + 0j
    for m_cols, mode, k in ((3, "tdm", 1), (16, "tdm", 1), (16, "wdm", 4), (5, "wdm", 2)):
        b = seeded_rng(96, m_cols, k).normal(size=(n, m_cols)) + 0j
        _, report = run_gemm(a, b, GemmPlan(mode=mode, channels=k))
        assert report.programming_events == 1
        assert report.slots == (m_cols + k - 1) // k


def test_dispersion_perturbs_off_reference_channels():
    n = 4
    a = seeded_rng(97).normal(size=(n, n)) + 0j
    b = seeded_rng(98).normal(size=(n, 2)) + 0j
    disp = DispersionModel(lambda_ref_nm=1550.0, lambdas_nm=(1550.0, 1551.0))
    y0, _ = run_gemm(a, b, GemmPlan(mode="wdm", channels=2))
    y1, _ = run_gemm(a, b, GemmPlan(mode="wdm", channels=2, dispersion=disp))
    # the reference-wavelength column is untouched; the detuned one moves
    assert np.array_equal(y0[:, 0], y1[:, 0])
    assert not np.allclose(y0[:, 1], y1[:, 1])


def test_gemm_shape_validation():
    a = np.ones((3, 4), dtype=complex)
    with pytest.raises(ValueError, match="square"):
        run_gemm(a, np.ones((4, 2), dtype=complex))
    with pytest.raises(ValueError, match="rows"):
        run_gemm(np.eye(3, dtype=complex), np.ones((4, 2), dtype=complex))
    with pytest.raises(ValueError, match="one channel"):
        GemmPlan(mode="tdm", channels=2)
    with pytest.raises(ValueError):
        GemmPlan(mode="fdm")
