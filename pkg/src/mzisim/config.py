"""INI run configuration with strict key checking.

Sections and keys are fixed: anything unknown is an error rather than a
silent ignore, so typos in sweep scripts fail fast. All keys have defaults
except the file paths, which stay unset until provided. Integer keys accept
hex with an 0x prefix, which is the natural spelling for addresses.

Material numbers in DEFAULT_CONFIG_TEXT are round placeholders for a
GST-on-SiN-style platform; treat them as knobs, not measurements.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass

from .device import DeviceModels, TimingConfig
from .mvm import DetectorConfig
from .pcm import PCMDeviceModel, ThermoOpticModel
from .robustness import ImperfectionSpec


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG_TEXT = """\
[material]
delta_n = 0.3
delta_k = 0.01
num_levels = 256
e_prog_per_step_j = 5e-12
t_switch_per_step_s = 5e-9
p_pi_w = 20e-3
weights_mode = pcm

[timing]
symbol_period_ps = 20
bus_cycle_ps = 1000
dma_bytes_per_cycle = 8
pcm_prog_step_ps = 5000
optical_pipeline_latency_ps = 50
e_detect_per_sample_j = 0
e_dma_per_byte_j = 0

[imperfections]
phase_sigma = 0
coupler_sigma = 0
loss_db_per_mzi = 0
pcm_levels =

[paths]
weights_file =
input_file =
host_weights_addr = 0x0
host_input_addr = 0x10000

[run]
seed = 0
arch = clements
"""


def _as_int(v: str) -> int:
    return int(v, 0)


def _as_optional_int(v: str):
    return None if v.strip() == "" else int(v, 0)


def _as_optional_str(v: str):
    return v.strip() or None


_SCHEMA = {
    "material": {
        "delta_n": float, "delta_k": float, "num_levels": _as_int,
        "e_prog_per_step_j": float, "t_switch_per_step_s": float,
        "p_pi_w": float, "weights_mode": str,
    },
    "timing": {
        "symbol_period_ps": _as_int, "bus_cycle_ps": _as_int,
        "dma_bytes_per_cycle": _as_int, "pcm_prog_step_ps": _as_int,
        "optical_pipeline_latency_ps": _as_int,
        "e_detect_per_sample_j": float, "e_dma_per_byte_j": float,
    },
    "imperfections": {
        "phase_sigma": float, "coupler_sigma": float,
        "loss_db_per_mzi": float, "pcm_levels": _as_optional_int,
    },
    "paths": {
        "weights_file": _as_optional_str, "input_file": _as_optional_str,
        "host_weights_addr": _as_int, "host_input_addr": _as_int,
    },
    "run": {"seed": _as_int, "arch": str},
}


@dataclass(frozen=True)
class RunConfig:
    material: PCMDeviceModel
    thermo: ThermoOpticModel
    weights_mode: str
    timing: TimingConfig
    imperfections: ImperfectionSpec
    weights_file: str | None
    input_file: str | None
    host_weights_addr: int
    host_input_addr: int
    seed: int
    arch: str
    digest: str

    def device_models(self, detector: DetectorConfig | None = None) -> DeviceModels:
        return DeviceModels(pcm=self.material, thermo=self.thermo,
                            weights_mode=self.weights_mode,
                            detector=detector or DetectorConfig())


def config_digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(DEFAULT_CONFIG_TEXT)
    overlay = configparser.ConfigParser(interpolation=None)
    try:
        overlay.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    for section in overlay.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in overlay[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            parser[section][key] = overlay[section][key]

    values: dict[str, dict] = {}
    for section, keys in _SCHEMA.items():
        values[section] = {}
        for key, conv in keys.items():
            raw = parser[section][key]
            try:
                values[section][key] = conv(raw)
            except ValueError:
                raise ConfigError(f"bad value {raw!r} for {key} in [{section}]") from None

    mat = values["material"]
    if mat["weights_mode"] not in ("pcm", "thermo"):
        raise ConfigError(f"weights_mode must be pcm or thermo, got {mat['weights_mode']!r}")
    run = values["run"]
    if run["arch"] not in ("clements", "fldzhyan"):
        raise ConfigError(f"arch must be clements or fldzhyan, got {run['arch']!r}")
    try:
        material = PCMDeviceModel(mat["delta_n"], mat["delta_k"], mat["num_levels"],
                                  mat["e_prog_per_step_j"], mat["t_switch_per_step_s"])
        thermo = ThermoOpticModel(mat["p_pi_w"])
        timing = TimingConfig(**values["timing"])
        imperfections = ImperfectionSpec(**values["imperfections"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    paths = values["paths"]
    return RunConfig(
        material=material, thermo=thermo, weights_mode=mat["weights_mode"],
        timing=timing, imperfections=imperfections,
        weights_file=paths["weights_file"], input_file=paths["input_file"],
        host_weights_addr=paths["host_weights_addr"],
        host_input_addr=paths["host_input_addr"],
        seed=run["seed"], arch=run["arch"], digest=config_digest(text),
    )


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def default_config() -> RunConfig:
    return parse_config(DEFAULT_CONFIG_TEXT)
