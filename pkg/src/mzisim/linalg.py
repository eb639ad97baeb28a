"""Complex linear algebra primitives shared by every layer of the simulator.

Vectors are 1-D complex128 arrays, matrices 2-D. File I/O uses a plain
whitespace text format (header line "rows cols", then row-major "re im"
pairs) so results can be diffed and fed back through the CLI.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "matmul",
    "is_unitary",
    "haar_random_unitary",
    "fidelity",
    "seeded_rng",
    "as_cvector",
    "as_cmatrix",
    "read_matrix",
    "write_matrix",
    "read_vector",
    "write_vector",
]


def as_cmatrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D complex128 array, raising ValueError otherwise."""
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr.real) & np.isfinite(arr.imag)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return arr


def as_cvector(x, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-D complex128 array, raising ValueError otherwise."""
    arr = np.asarray(x, dtype=np.complex128)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr.real) & np.isfinite(arr.imag)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return arr


def matmul(a, b) -> np.ndarray:
    """Complex matrix product with an explicit inner-dimension check."""
    a = as_cmatrix(a, "a")
    b = as_cmatrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def is_unitary(u, tol: float = 1e-10) -> bool:
    """True when max |u^H u - I| <= tol. Non-square input is a ValueError."""
    u = as_cmatrix(u, "u")
    if u.shape[0] != u.shape[1]:
        raise ValueError(f"unitarity check needs a square matrix, got {u.shape}")
    if tol < 0:
        raise ValueError("tol must be non-negative")
    n = u.shape[0]
    resid = u.conj().T @ u - np.eye(n)
    return float(np.max(np.abs(resid))) <= tol


def unitarity_residual(u) -> float:
    """Max-abs deviation of u^H u from the identity."""
    u = as_cmatrix(u, "u")
    n = u.shape[0]
    return float(np.max(np.abs(u.conj().T @ u - np.eye(n))))


def seeded_rng(seed, *path: int) -> np.random.Generator:
    """Generator keyed by a root seed plus structural indices.

    Every random draw in the package flows through here, so any result is
    reproducible from its seed and position and no global state exists.
    seed may be an int or a tuple of ints.
    """
    entropy = tuple(int(s) for s in seed) if isinstance(seed, (tuple, list)) else (int(seed),)
    return np.random.default_rng(np.random.SeedSequence(entropy + tuple(int(p) for p in path)))


def haar_random_unitary(n: int, seed) -> np.ndarray:
    """Haar-distributed n x n unitary, deterministic in (n, seed).

    QR of a complex Gaussian matrix with the R diagonal re-phased, which
    makes the factorization unique and the distribution uniform.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seeded_rng(seed, n)
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    q = q * (d / np.abs(d))
    return q


def fidelity(u, v) -> float:
    """Global-phase-invariant overlap |Tr(u^H v)|^2 / N^2, clipped to [0, 1]."""
    u = as_cmatrix(u, "u")
    v = as_cmatrix(v, "v")
    if u.shape != v.shape or u.shape[0] != u.shape[1]:
        raise ValueError(f"fidelity needs same-shape square matrices, got {u.shape} and {v.shape}")
    n = u.shape[0]
    f = abs(np.trace(u.conj().T @ v)) ** 2 / n**2
    return float(min(max(f, 0.0), 1.0))


def _parse_entries(tokens: list[str], count: int, path: str) -> np.ndarray:
    if len(tokens) != 2 * count:
        raise ValueError(f"{path}: expected {2 * count} numbers after the header, found {len(tokens)}")
    try:
        vals = np.array([float(t) for t in tokens], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry: {exc}") from None
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"{path}: NaN or Inf entries are not allowed")
    return vals[0::2] + 1j * vals[1::2]


def read_matrix(path: str) -> np.ndarray:
    """Read a complex matrix from the text format (header 'rows cols')."""
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise ValueError(f"{path}: missing 'rows cols' header")
    try:
        rows, cols = int(tokens[0]), int(tokens[1])
    except ValueError:
        raise ValueError(f"{path}: header must be two integers 'rows cols'") from None
    if rows < 1 or cols < 1:
        raise ValueError(f"{path}: non-positive dimensions {rows} x {cols}")
    flat = _parse_entries(tokens[2:], rows * cols, path)
    return flat.reshape(rows, cols)


def write_matrix(path: str, a) -> None:
    """Write a complex matrix in the text format, one row per line."""
    a = as_cmatrix(a, "a")
    lines = [f"{a.shape[0]} {a.shape[1]}"]
    for row in a:
        lines.append(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vector(path: str) -> np.ndarray:
    """Read a complex vector stored as an n x 1 (or 1 x n) matrix file."""
    a = read_matrix(path)
    if 1 not in a.shape:
        raise ValueError(f"{path}: expected a vector shape, got {a.shape}")
    return a.reshape(-1)


def write_vector(path: str, x) -> None:
    """Write a complex vector as an n x 1 matrix file."""
    x = as_cvector(x, "x")
    write_matrix(path, x.reshape(-1, 1))
