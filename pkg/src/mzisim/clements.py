"""Exact programming rule for the rectangular mesh.

Works by sweeping Givens-style cell operations that null the lower triangle
of the target, alternating right-multiplications (inverse cells on column
pairs) and left-multiplications (cells on row pairs), then commuting the
leftover left factors through the residual diagonal so every phase ends up
either inside a cell or on an output shifter. The resulting settings are
packed into the rectangular layer grid and returned in the same placement
order that build_clements emits.
"""

from __future__ import annotations

import numpy as np

from .linalg import as_cmatrix, unitarity_residual
from .mesh import MeshTopology, PhaseProgram, build_clements, mzi_transfer, wrap_phase

_DEGENERATE = 1e-13


def _null_right(a: complex, b: complex) -> tuple[float, float]:
    """Angles so that a*conj(cell[0,0]) + b*conj(cell[0,1]) = 0."""
    ra, rb = abs(a), abs(b)
    if ra < _DEGENERATE and rb < _DEGENERATE:
        return np.pi, 0.0
    theta = 2.0 * np.arctan2(rb, ra)
    if ra < _DEGENERATE or rb < _DEGENERATE:
        return theta, 0.0
    return theta, -float(np.angle(-b / a))


def _null_left(a: complex, b: complex) -> tuple[float, float]:
    """Angles so that cell[1,0]*a + cell[1,1]*b = 0."""
    ra, rb = abs(a), abs(b)
    if ra < _DEGENERATE and rb < _DEGENERATE:
        return np.pi, 0.0
    theta = 2.0 * np.arctan2(ra, rb)
    if ra < _DEGENERATE or rb < _DEGENERATE:
        return theta, 0.0
    return theta, float(np.angle(b / a))


def _cell(theta: float, phi: float) -> np.ndarray:
    return mzi_transfer(theta, phi)


def decompose_clements(u, tol: float = 1e-8) -> PhaseProgram:
    """Program a rectangular mesh so its forward matrix reproduces u exactly.

    Raises ValueError when u is not square or its unitarity residual
    exceeds tol.
    """
    u = as_cmatrix(u, "u")
    n = u.shape[0]
    if u.shape[0] != u.shape[1]:
        raise ValueError(f"target must be square, got {u.shape}")
    resid = unitarity_residual(u)
    if resid > tol:
        raise ValueError(f"target is not unitary: residual {resid:.3e} exceeds tol {tol:.3e}")
    if n == 1:
        return PhaseProgram(np.zeros(0), np.zeros(0), np.array([np.angle(u[0, 0])]))

    work = u.astype(np.complex128).copy()
    right_ops: list[tuple[int, float, float]] = []
    left_ops: list[tuple[int, float, float]] = []

    for i in range(n - 1):
        if i % 2 == 0:
            for j in range(i + 1):
                r, m = n - 1 - j, i - j
                theta, phi = _null_right(work[r, m], work[r, m + 1])
                work[:, m : m + 2] = work[:, m : m + 2] @ _cell(theta, phi).conj().T
                right_ops.append((m, theta, phi))
        else:
            for j in range(1, i + 2):
                row, col = n + j - i - 2, j - 1
                m = row - 1
                theta, phi = _null_left(work[m, col], work[m + 1, col])
                work[m : m + 2, :] = _cell(theta, phi) @ work[m : m + 2, :]
                left_ops.append((m, theta, phi))

    diag = np.diagonal(work).astype(np.complex128).copy()

    # Encounter order: right ops as applied, then left factors commuted
    # through the diagonal (innermost first). T^-1(theta,phi) D equals
    # D' T(theta, phi') with phi' = arg(d_m conj(d_{m+1})),
    # d_m' = -e^{-i theta} e^{-i phi} d_{m+1}, d_{m+1}' = -e^{-i theta} d_{m+1}.
    encounter: list[tuple[int, float, float]] = list(right_ops)
    for m, theta, phi in reversed(left_ops):
        phi_new = float(np.angle(diag[m] * np.conj(diag[m + 1])))
        rot = -np.exp(-1j * theta)
        diag[m], diag[m + 1] = rot * np.exp(-1j * phi) * diag[m + 1], rot * diag[m + 1]
        encounter.append((m, theta, phi_new))

    return _pack_rectangle(n, encounter, np.angle(diag))


def _pack_rectangle(n: int, encounter, output_phases) -> PhaseProgram:
    """Assign encounter-ordered cell settings to rectangular grid slots."""
    topology = build_clements(n)
    slot_of = {(p.layer, p.top_port): i for i, p in enumerate(topology.placements)}
    next_free = np.zeros(n, dtype=int)
    thetas = np.zeros(len(topology.placements))
    phis = np.zeros(len(topology.placements))
    filled = np.zeros(len(topology.placements), dtype=bool)
    for m, theta, phi in encounter:
        layer = int(max(next_free[m], next_free[m + 1]))
        if (layer - m) % 2:
            layer += 1
        key = (layer, m)
        if key not in slot_of or filled[slot_of[key]]:
            raise AssertionError(f"cell packing fell outside the rectangle at {key}")
        idx = slot_of[key]
        thetas[idx], phis[idx] = theta, phi
        filled[idx] = True
        next_free[m] = next_free[m + 1] = layer + 1
    if not filled.all():
        raise AssertionError("cell packing left rectangle slots unfilled")
    return PhaseProgram(thetas, phis, wrap_phase(np.asarray(output_phases, dtype=float)))
