"""Checks for the complex linear algebra helpers."""

import numpy as np
import pytest

from mzisim.linalg import (
    as_cmatrix,
    as_cvector,
    fidelity,
    haar_random_unitary,
    is_unitary,
    matmul,
    read_matrix,
    read_vector,
    seeded_rng,
    unitarity_residual,
    write_matrix,
    write_vector,
)


def _matmul_by_hand(a, b):
    # painfully explicit triple loop, the oracle matmul is checked against
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m), dtype=complex)
    for i in range(n):
        for j in range(m):
            acc = 0.0 + 0.0j
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def test_matmul_matches_hand_rolled_oracle():
    for trial in range(20):
        rng = seeded_rng(100, trial)
        n, k, m = rng.integers(1, 7, size=3)
        a = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
        b = rng.normal(size=(k, m)) + 1j * rng.normal(size=(k, m))
        assert np.allclose(matmul(a, b), _matmul_by_hand(a, b), atol=1e-12)


def test_matmul_associativity():
    for trial in range(10):
        rng = seeded_rng(101, trial)
        a, b, c = (rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5)) for _ in range(3))
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        assert np.max(np.abs(left - right)) < 1e-10


def test_matmul_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        matmul(np.eye(3), np.eye(4))


def test_haar_unitaries_are_unitary():
    for n in range(1, 17):
        for seed in range(100):
            u = haar_random_unitary(n, (7, n, seed))
            assert is_unitary(u, tol=1e-10)


def test_haar_is_deterministic_and_seed_sensitive():
    a = haar_random_unitary(6, 42)
    b = haar_random_unitary(6, 42)
    c = haar_random_unitary(6, 43)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)


def test_fidelity_basics():
    u = haar_random_unitary(5, 3)
    assert fidelity(u, u) == pytest.approx(1.0, abs=1e-12)
    # global phase must not matter
    assert fidelity(u, np.exp(1j * 0.7) * u) == pytest.approx(1.0, abs=1e-12)


def test_fidelity_symmetry():
    for trial in range(10):
        u = haar_random_unitary(4, (9, trial, 0))
        v = haar_random_unitary(4, (9, trial, 1))
        assert abs(fidelity(u, v) - fidelity(v, u)) < 1e-12


def test_high_fidelity_implies_elementwise_closeness():
    rng = seeded_rng(55)
    u = haar_random_unitary(6, 5)
    v = u * np.exp(1j * 1.3) + 1e-11 * (rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6)))
    assert fidelity(u, v) > 1 - 1e-10
    alpha = np.angle(np.trace(u.conj().T @ v))
    assert np.max(np.abs(v - np.exp(1j * alpha) * u)) <= 1e-5


def test_is_unitary_rejects_non_unitaries():
    m = np.eye(4, dtype=complex)
    m[0, 0] = 1.5
    assert not is_unitary(m)
    assert unitarity_residual(m) > 0.1


def test_validators():
    with pytest.raises(ValueError):
        as_cmatrix(np.array([1.0, np.nan]), "bad")
    with pytest.raises(ValueError):
        as_cvector(np.ones((2, 2)), "bad")


def test_matrix_file_round_trip(tmp_path):
    rng = seeded_rng(77)
    a = rng.normal(size=(3, 5)) + 1j * rng.normal(size=(3, 5))
    path = tmp_path / "m.txt"
    write_matrix(str(path), a)
    back = read_matrix(str(path))
    assert np.array_equal(a, back)  # %.17g preserves doubles exactly


def test_vector_file_round_trip(tmp_path):
    x = np.array([1 + 2j, -0.25, 3e-7j])
    path = tmp_path / "v.txt"
    write_vector(str(path), x)
    assert np.array_equal(read_vector(str(path)), x)


def test_matrix_file_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("not a header\n")
    with pytest.raises(ValueError):
        read_matrix(str(p))
    p.write_text("2 2\n1 0 2 0\n")  # too few numbers
    with pytest.raises(ValueError):
        read_matrix(str(p))
    with pytest.raises(ValueError):
        write_matrix(str(p), np.array([[np.inf]], dtype=complex))


def test_seeded_rng_paths_are_independent():
    a = seeded_rng(1, 2, 3).normal(size=4)
    b = seeded_rng(1, 2, 3).normal(size=4)
    c = seeded_rng(1, 2, 4).normal(size=4)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)
    # a tuple seed flattens into the same entropy sequence as positional path ints
    d = seeded_rng((1, 2), 3).normal(size=4)
    assert np.array_equal(a, d)
    e = seeded_rng((1, 3), 3).normal(size=4)
    assert not np.allclose(a, e)
