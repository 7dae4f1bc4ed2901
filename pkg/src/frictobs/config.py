"""Scenario configuration: YAML schema, defaults, presets and overrides.

All quantities are SI.  A scenario file is a mapping with the top-level keys
``mode``, ``dt``, ``duration``, ``sample_rate``, ``seed`` and the sections
``plant``, ``friction``, ``observer``, ``controller``, ``signal``,
``eigen_scan``, ``divergence`` and ``output``.  Missing keys take the
defaults of the dataclasses below.
"""

import dataclasses
import math
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import yaml

from .control import ControllerSpec
from .friction import FrictionParams
from .plant import REALIZATIONS, PlantParams

MODES = ("open_loop_observer", "closed_loop_pid", "closed_loop_pid_observer",
         "eigen_scan", "design_report")
REFERENCES = ("noise", "constant_velocity", "positioning", "chirp")


@dataclass(frozen=True)
class PlantSection:
    mass: float = 0.538
    input_gain: float = 3.28
    gravity_load: float = 0.0
    realization: str = "physical"

    def params(self):
        return PlantParams(self.mass, self.input_gain, self.gravity_load)


@dataclass(frozen=True)
class ObserverSection:
    rho: float = 1.02
    cutoff_hz: float = 40.0
    replica_cutoff_hz: float = 200.0
    method: str = "euler"
    compensate: bool = True


@dataclass(frozen=True)
class NoiseSection:
    std: float = 0.0
    cutoff_hz: float = 100.0
    order: int = 1


@dataclass(frozen=True)
class SignalSection:
    reference: str = "noise"
    input_noise: NoiseSection = NoiseSection()
    input_ramp: float = 1.0
    measurement_noise: NoiseSection = NoiseSection()
    quantization: float = 0.0
    velocity: float = 0.01
    setpoints: Tuple[float, ...] = (0.002, 0.0005)
    ramp_time: float = 0.5
    hold_time: float = 3.0
    start_delay: float = 0.5
    chirp_f0: float = 0.01
    chirp_f1: float = 3.0
    max_velocity: float = 0.1


@dataclass(frozen=True)
class EigenScanSection:
    rhos: Tuple[float, ...] = (0.98, 1.0, 1.001, 1.02, 1.5, 4.0)
    n_stiffness: int = 1000


@dataclass(frozen=True)
class DivergenceSection:
    factor: float = 10.0
    hold: float = 0.1
    velocity_floor: float = 0.01
    force_floor: float = 1.0
    stop_on_divergence: bool = True  # open-loop runs only


@dataclass(frozen=True)
class OutputSection:
    directory: Optional[str] = None
    plots: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str = "open_loop_observer"
    dt: float = 1e-4
    duration: float = 60.0
    sample_rate: float = 10_000.0
    seed: Optional[int] = None
    plant: PlantSection = PlantSection()
    friction: FrictionParams = FrictionParams()
    observer: ObserverSection = ObserverSection()
    controller: ControllerSpec = ControllerSpec()
    signal: SignalSection = SignalSection()
    eigen_scan: EigenScanSection = EigenScanSection()
    divergence: DivergenceSection = DivergenceSection()
    output: OutputSection = OutputSection()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.signal.reference not in REFERENCES:
            raise ValueError(f"signal.reference must be one of {REFERENCES}")
        if self.plant.realization not in REALIZATIONS:
            raise ValueError(f"plant.realization must be one of {REALIZATIONS}")
        if not math.isclose(self.dt * self.sample_rate, 1.0, rel_tol=1e-9):
            raise ValueError("dt * sample_rate must equal 1")
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")

    @property
    def noisy(self):
        s = self.signal
        return s.input_noise.std > 0.0 or s.measurement_noise.std > 0.0

    @property
    def n_steps(self):
        return int(round(self.duration / self.dt))


def _coerce(value, default, where):
    # YAML 1.1 reads exponent literals without a dot (1e-4) as strings
    if isinstance(value, str) and isinstance(default, (int, float)) and not isinstance(default, bool):
        try:
            return float(value)
        except ValueError:
            raise ValueError(f"{where} must be a number, got {value!r}") from None
    return value


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ValueError(f"section {where!r} must be a mapping")
    hints = {f.name: f for f in dataclasses.fields(cls)}
    types = typing.get_type_hints(cls)
    unknown = set(data) - set(hints)
    if unknown:
        raise ValueError(f"unknown keys in {where!r}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = hints[name].default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        elif isinstance(default, tuple) and value is not None:
            kwargs[name] = tuple(value)
        else:
            if default is None and types.get(name) == Optional[float]:
                default = 0.0
            elif types.get(name) == Optional[str] and value is not None:
                value = str(value)
            kwargs[name] = _coerce(value, default, f"{where}.{name}")
    return cls(**kwargs)


def config_from_dict(data):
    return _build(ScenarioConfig, dict(data or {}), "scenario")


def config_to_dict(cfg):
    def convert(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: convert(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, tuple):
            return [convert(v) for v in obj]
        return obj
    return convert(cfg)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(yaml.safe_load(fh))


def dump_config(cfg, path):
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False),
                          encoding="utf-8")


def apply_overrides(cfg, overrides):
    """Apply ``section.key=value`` strings (values parsed as YAML scalars)."""
    data = config_to_dict(cfg)
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"override {item!r} is not of the form key=value")
        node = data
        parts = key.strip().split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ValueError(f"unknown config section in {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ValueError(f"unknown config key {key!r}")
        node[parts[-1]] = yaml.safe_load(raw)
    return config_from_dict(data)


# Rig analogue: static viscous law (lag dropped); the stiffness clamp keeps the
# simulation value because 8000 * s destabilizes the replica at motion onset.
RIG_FRICTION = FrictionParams(viscous_lag=0.0, stiffness_clamp=8000.0)


def preset(name):
    """Built-in scenarios reproducing the numerical illustration and the rig analogues."""
    sim_noise = SignalSection(
        reference="noise",
        input_noise=NoiseSection(std=20.0, cutoff_hz=0.5, order=2),
        measurement_noise=NoiseSection(std=1e-5, cutoff_hz=500.0),
    )
    presets = {
        "illustration_stable": ScenarioConfig(
            mode="open_loop_observer", duration=60.0, seed=1,
            plant=PlantSection(realization="state_space"),
            observer=ObserverSection(rho=1.02), signal=sim_noise),
        "illustration_divergent": ScenarioConfig(
            mode="open_loop_observer", duration=60.0, seed=1,
            plant=PlantSection(realization="state_space"),
            observer=ObserverSection(rho=0.98), signal=sim_noise),
        "constant_velocity": ScenarioConfig(
            mode="open_loop_observer", duration=10.0,
            plant=PlantSection(realization="state_space"),
            observer=ObserverSection(rho=1.02),
            signal=SignalSection(reference="constant_velocity", velocity=0.01)),
        "positioning_pid": ScenarioConfig(
            mode="closed_loop_pid", duration=7.5, friction=RIG_FRICTION,
            plant=PlantSection(gravity_load=5.27),
            observer=ObserverSection(rho=4.0),
            signal=SignalSection(reference="positioning")),
        "chirp_pid": ScenarioConfig(
            mode="closed_loop_pid", duration=60.0, friction=RIG_FRICTION,
            plant=PlantSection(gravity_load=5.27),
            observer=ObserverSection(rho=4.0),
            signal=SignalSection(reference="chirp")),
        "eigen_scan": ScenarioConfig(mode="eigen_scan", duration=1.0),
        "design_report": ScenarioConfig(mode="design_report", duration=1.0,
                                        controller=ControllerSpec(source="design", max_s=0.0025)),
    }
    presets["positioning_pid_observer"] = dataclasses.replace(
        presets["positioning_pid"], mode="closed_loop_pid_observer")
    presets["chirp_pid_observer"] = dataclasses.replace(
        presets["chirp_pid"], mode="closed_loop_pid_observer")
    if name not in presets:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(presets)}")
    return presets[name]


PRESETS = ("illustration_stable", "illustration_divergent", "constant_velocity",
           "positioning_pid", "positioning_pid_observer", "chirp_pid",
           "chirp_pid_observer", "eigen_scan", "design_report")
