"""Programmable MZI mesh topologies and their forward optics.

An MZI cell here is coupler / internal phase theta / coupler / input phase
phi, with 50:50 couplers [[cos k, i sin k], [i sin k, cos k]] at k = pi/4.
Closed form of the ideal cell:

    U(theta, phi) = i e^{i theta/2} [[e^{i phi} sin(theta/2), cos(theta/2)],
                                     [e^{i phi} cos(theta/2), -sin(theta/2)]]

so theta = 0 is the cross state and theta = pi the bar state. A mesh is an
ordered list of cell placements on adjacent port pairs, grouped into layers
that light traverses in order, followed by one output phase per port.

Layouts
-------
clements: the rectangular arrangement with n layers (even layers pair ports
(0,1),(2,3),..., odd layers (1,2),(3,4),...), n(n-1)/2 cells total. It admits
an exact analytic programming rule (see clements.py).

fldzhyan: a deeper brick-wall with n+1 alternating columns, empty columns
dropped (that only matters at n=2, which becomes two single-pair columns).
The extra column spends redundant parallel phase shifters for error
tolerance; there is no analytic programming rule, so programs come from
numerical fitting. This placement list is the definitive layout for the tag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import as_cmatrix, as_cvector, unitarity_residual

TWO_PI = 2.0 * np.pi

ARCH_TAGS = ("clements", "fldzhyan", "custom")


def wrap_phase(x):
    """Wrap radians into [0, 2*pi)."""
    return np.mod(x, TWO_PI)


def coupler(kappa: float) -> np.ndarray:
    """Directional coupler block for mixing angle kappa."""
    c, s = np.cos(kappa), np.sin(kappa)
    return np.array([[c, 1j * s], [1j * s, c]], dtype=np.complex128)


def mzi_transfer(
    theta: float,
    phi: float,
    delta1: float = 0.0,
    delta2: float = 0.0,
    transmission: float = 1.0,
) -> np.ndarray:
    """2x2 transfer of one cell, optionally with coupler errors and loss.

    delta1/delta2 offset the first/second coupler from pi/4, and
    transmission is a field factor applied to the whole cell (1 = lossless).
    """
    if not 0.0 <= transmission <= 1.0:
        raise ValueError(f"transmission must lie in [0, 1], got {transmission}")
    inner = np.array([[np.exp(1j * theta), 0.0], [0.0, 1.0]], dtype=np.complex128)
    outer = np.array([[np.exp(1j * phi), 0.0], [0.0, 1.0]], dtype=np.complex128)
    u = coupler(np.pi / 4 + delta2) @ inner @ coupler(np.pi / 4 + delta1) @ outer
    return transmission * u


@dataclass(frozen=True)
class MZIPlacement:
    """One cell location: layer index and the upper of its two ports."""

    layer: int
    top_port: int


@dataclass(frozen=True)
class MeshTopology:
    """Static mesh structure: port count, cell placements, architecture tag."""

    n_ports: int
    placements: tuple[MZIPlacement, ...]
    arch_tag: str = "custom"

    def __post_init__(self):
        if self.n_ports < 1:
            raise ValueError("n_ports must be >= 1")
        if self.arch_tag not in ARCH_TAGS:
            raise ValueError(f"unknown arch_tag {self.arch_tag!r}, expected one of {ARCH_TAGS}")
        object.__setattr__(self, "placements", tuple(self.placements))
        layers_seen: dict[int, set[int]] = {}
        for p in self.placements:
            if not (0 <= p.top_port <= self.n_ports - 2):
                raise ValueError(f"placement {p} leaves the port range 0..{self.n_ports - 1}")
            used = layers_seen.setdefault(p.layer, set())
            if p.top_port in used or p.top_port + 1 in used:
                raise ValueError(f"placement {p} overlaps another cell in layer {p.layer}")
            used.update((p.top_port, p.top_port + 1))
        if layers_seen:
            layers = sorted(layers_seen)
            if layers[0] != 0 or layers != list(range(len(layers))):
                raise ValueError(f"layers must be contiguous from 0, got {layers}")

    @property
    def n_layers(self) -> int:
        return 0 if not self.placements else 1 + max(p.layer for p in self.placements)

    def layer_placements(self, layer: int) -> list[MZIPlacement]:
        return [p for p in self.placements if p.layer == layer]


@dataclass
class PhaseProgram:
    """Phase settings for one mesh: theta/phi per placement, one output phase per port."""

    thetas: np.ndarray
    phis: np.ndarray
    output_phases: np.ndarray

    def __post_init__(self):
        self.thetas = wrap_phase(np.asarray(self.thetas, dtype=float))
        self.phis = wrap_phase(np.asarray(self.phis, dtype=float))
        self.output_phases = wrap_phase(np.asarray(self.output_phases, dtype=float))
        if self.thetas.shape != self.phis.shape or self.thetas.ndim != 1:
            raise ValueError("thetas and phis must be 1-D arrays of equal length")
        if self.output_phases.ndim != 1:
            raise ValueError("output_phases must be 1-D")

    def copy(self) -> "PhaseProgram":
        return PhaseProgram(self.thetas.copy(), self.phis.copy(), self.output_phases.copy())


def zero_program(topology: MeshTopology) -> PhaseProgram:
    m = len(topology.placements)
    return PhaseProgram(np.zeros(m), np.zeros(m), np.zeros(topology.n_ports))


@dataclass
class ImperfectionSample:
    """Concrete hardware deviations for one mesh instance.

    Additive phase offsets per shifter, coupler angle deviations per cell,
    and a field transmission per cell (1 = lossless).
    """

    theta_offsets: np.ndarray
    phi_offsets: np.ndarray
    output_offsets: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    transmission: np.ndarray

    def __post_init__(self):
        for name in ("theta_offsets", "phi_offsets", "output_offsets", "delta1", "delta2", "transmission"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.transmission < 0) or np.any(self.transmission > 1):
            raise ValueError("per-cell transmission must lie in [0, 1]")

    @classmethod
    def ideal(cls, topology: MeshTopology) -> "ImperfectionSample":
        m = len(topology.placements)
        return cls(
            np.zeros(m), np.zeros(m), np.zeros(topology.n_ports),
            np.zeros(m), np.zeros(m), np.ones(m),
        )


def _check_program(topology: MeshTopology, program: PhaseProgram) -> None:
    m = len(topology.placements)
    if program.thetas.shape[0] != m:
        raise ValueError(f"program has {program.thetas.shape[0]} cell settings, topology has {m} placements")
    if program.output_phases.shape[0] != topology.n_ports:
        raise ValueError(
            f"program has {program.output_phases.shape[0]} output phases, topology has {topology.n_ports} ports"
        )


def _check_imperfections(topology: MeshTopology, imp: ImperfectionSample) -> None:
    m = len(topology.placements)
    if imp.theta_offsets.shape[0] != m or imp.delta1.shape[0] != m or imp.transmission.shape[0] != m:
        raise ValueError("imperfection sample does not match the placement count")
    if imp.output_offsets.shape[0] != topology.n_ports:
        raise ValueError("imperfection sample does not match the port count")


def forward_matrix(
    topology: MeshTopology,
    program: PhaseProgram,
    imp: ImperfectionSample | None = None,
) -> np.ndarray:
    """Full transfer matrix: per-layer cell blocks in layer order, then output phases."""
    _check_program(topology, program)
    if imp is None:
        imp = ImperfectionSample.ideal(topology)
    _check_imperfections(topology, imp)
    n = topology.n_ports
    u = np.eye(n, dtype=np.complex128)
    for idx in _evaluation_order(topology):
        p = topology.placements[idx]
        block = mzi_transfer(
            program.thetas[idx] + imp.theta_offsets[idx],
            program.phis[idx] + imp.phi_offsets[idx],
            imp.delta1[idx],
            imp.delta2[idx],
            imp.transmission[idx],
        )
        rows = slice(p.top_port, p.top_port + 2)
        u[rows, :] = block @ u[rows, :]
    phases = np.exp(1j * wrap_phase(program.output_phases + imp.output_offsets))
    return phases[:, None] * u


def apply_mesh(
    topology: MeshTopology,
    program: PhaseProgram,
    x,
    imp: ImperfectionSample | None = None,
) -> np.ndarray:
    """Propagate one field vector through the mesh (same math as forward_matrix)."""
    x = as_cvector(x, "x")
    if x.shape[0] != topology.n_ports:
        raise ValueError(f"input has {x.shape[0]} entries, mesh has {topology.n_ports} ports")
    _check_program(topology, program)
    if imp is None:
        imp = ImperfectionSample.ideal(topology)
    _check_imperfections(topology, imp)
    v = x.copy()
    for idx in _evaluation_order(topology):
        p = topology.placements[idx]
        block = mzi_transfer(
            program.thetas[idx] + imp.theta_offsets[idx],
            program.phis[idx] + imp.phi_offsets[idx],
            imp.delta1[idx],
            imp.delta2[idx],
            imp.transmission[idx],
        )
        v[p.top_port : p.top_port + 2] = block @ v[p.top_port : p.top_port + 2]
    return np.exp(1j * wrap_phase(program.output_phases + imp.output_offsets)) * v


def _evaluation_order(topology: MeshTopology) -> list[int]:
    """Placement indices sorted by (layer, top_port): the order light meets them."""
    return sorted(range(len(topology.placements)),
                  key=lambda i: (topology.placements[i].layer, topology.placements[i].top_port))


def build_clements(n: int) -> MeshTopology:
    """Rectangular mesh: n layers alternating even/odd pairings, n(n-1)/2 cells."""
    if n < 1:
        raise ValueError("n must be >= 1")
    placements = []
    for layer in range(n):
        start = layer % 2
        for top in range(start, n - 1, 2):
            placements.append(MZIPlacement(layer, top))
    return MeshTopology(n, tuple(placements), "clements")


def build_fldzhyan(n: int) -> MeshTopology:
    """Brick-wall mesh with n+1 alternating columns (empty columns dropped)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    columns = []
    for col in range(n + 1):
        start = col % 2
        tops = list(range(start, n - 1, 2))
        if tops:
            columns.append(tops)
    placements = []
    for layer, tops in enumerate(columns):
        for top in tops:
            placements.append(MZIPlacement(layer, top))
    return MeshTopology(n, tuple(placements), "fldzhyan")


def build_topology(arch_tag: str, n: int) -> MeshTopology:
    if arch_tag == "clements":
        return build_clements(n)
    if arch_tag == "fldzhyan":
        return build_fldzhyan(n)
    raise ValueError(f"no builder for arch_tag {arch_tag!r}")


# --- text formats ---------------------------------------------------------


def write_topology(path: str, topology: MeshTopology) -> None:
    lines = [f"n_ports {topology.n_ports}", f"arch_tag {topology.arch_tag}"]
    for p in topology.placements:
        lines.append(f"{p.layer} {p.top_port}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_topology(path: str) -> MeshTopology:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) < 2 or not lines[0].startswith("n_ports") or not lines[1].startswith("arch_tag"):
        raise ValueError(f"{path}: expected 'n_ports N' then 'arch_tag TAG' header lines")
    try:
        n_ports = int(lines[0].split()[1])
    except (IndexError, ValueError):
        raise ValueError(f"{path}: bad n_ports line {lines[0]!r}") from None
    parts = lines[1].split()
    if len(parts) != 2:
        raise ValueError(f"{path}: bad arch_tag line {lines[1]!r}")
    arch_tag = parts[1]
    placements = []
    for ln in lines[2:]:
        toks = ln.split()
        if len(toks) != 2:
            raise ValueError(f"{path}: bad placement line {ln!r}")
        placements.append(MZIPlacement(int(toks[0]), int(toks[1])))
    return MeshTopology(n_ports, tuple(placements), arch_tag)


def write_program(path: str, program: PhaseProgram, arch_tag: str, n_ports: int) -> None:
    """Store a program with enough header to rebuild a standard topology."""
    lines = [
        f"arch_tag {arch_tag}",
        f"n_ports {n_ports}",
        f"placements {program.thetas.shape[0]}",
    ]
    for th, ph in zip(program.thetas, program.phis):
        lines.append(f"{th:.17g} {ph:.17g}")
    lines.append("output_phases " + " ".join(f"{v:.17g}" for v in program.output_phases))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_program(path: str) -> tuple[PhaseProgram, str, int]:
    """Load (program, arch_tag, n_ports) back from write_program output."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) < 4:
        raise ValueError(f"{path}: truncated program file")
    header = {}
    for i, key in enumerate(("arch_tag", "n_ports", "placements")):
        toks = lines[i].split()
        if len(toks) != 2 or toks[0] != key:
            raise ValueError(f"{path}: expected '{key} VALUE' on line {i + 1}, got {lines[i]!r}")
        header[key] = toks[1]
    arch_tag = header["arch_tag"]
    n_ports = int(header["n_ports"])
    count = int(header["placements"])
    if len(lines) != 3 + count + 1:
        raise ValueError(f"{path}: expected {count} setting lines plus output_phases")
    thetas, phis = np.zeros(count), np.zeros(count)
    for i in range(count):
        toks = lines[3 + i].split()
        if len(toks) != 2:
            raise ValueError(f"{path}: bad setting line {lines[3 + i]!r}")
        thetas[i], phis[i] = float(toks[0]), float(toks[1])
    last = lines[3 + count].split()
    if last[0] != "output_phases" or len(last) != 1 + n_ports:
        raise ValueError(f"{path}: bad output_phases line")
    out = np.array([float(t) for t in last[1:]])
    if not (np.all(np.isfinite(thetas)) and np.all(np.isfinite(phis)) and np.all(np.isfinite(out))):
        raise ValueError(f"{path}: NaN or Inf phases are not allowed")
    return PhaseProgram(thetas, phis, out), arch_tag, n_ports
