"""Photonic MZI-mesh matrix accelerator simulator.

Layers, bottom up: complex linear algebra (linalg), mesh topologies and
optics (mesh, clements, fitting), phase-change and thermo-optic weight
storage (pcm), vector/matrix compute on meshes (mvm), Monte Carlo
robustness studies (robustness), a memory-mapped accelerator device model
(device), fault injection (faults), an sklearn-style wrapper (estimator),
and a command line front end (cli).
"""

__version__ = "0.1.0"

from .clements import decompose_clements
from .device import AcceleratorDevice, DeviceModels, TimingConfig, parse_script
from .estimator import PhotonicMVM
from .faults import FaultSpec, run_campaign
from .fitting import FitConfig, fit_phases
from .linalg import fidelity, haar_random_unitary, is_unitary, matmul
from .mesh import (
    ImperfectionSample,
    MeshTopology,
    MZIPlacement,
    PhaseProgram,
    apply_mesh,
    build_clements,
    build_fldzhyan,
    build_topology,
    forward_matrix,
    mzi_transfer,
)
from .mvm import GemmPlan, run_gemm, run_mvm, synthesize_general_matrix
from .pcm import PCMDeviceModel, ThermoOpticModel, quantize_phase
from .robustness import ImperfectionSpec, SweepGrid, compare_architectures

__all__ = [
    "__version__",
    "AcceleratorDevice",
    "DeviceModels",
    "FaultSpec",
    "FitConfig",
    "GemmPlan",
    "ImperfectionSample",
    "ImperfectionSpec",
    "MeshTopology",
    "MZIPlacement",
    "PCMDeviceModel",
    "PhaseProgram",
    "PhotonicMVM",
    "SweepGrid",
    "ThermoOpticModel",
    "TimingConfig",
    "apply_mesh",
    "build_clements",
    "build_fldzhyan",
    "build_topology",
    "decompose_clements",
    "fidelity",
    "fit_phases",
    "forward_matrix",
    "haar_random_unitary",
    "is_unitary",
    "matmul",
    "mzi_transfer",
    "parse_script",
    "quantize_phase",
    "run_campaign",
    "run_gemm",
    "run_mvm",
    "synthesize_general_matrix",
]
