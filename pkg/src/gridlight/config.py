"""Scenario configuration: YAML files, per-scenario defaults and ``--set`` overrides."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

SCENARIOS = ("double_slit", "which_way", "delayed_choice", "mach_zehnder", "bomb_test", "polarizer_chain",
             "entangled_chsh", "refraction", "least_action", "packet_uncertainty")

_TWO_SLIT = {"d": 80, "L": 800, "sigma_x": 20.0, "sigma_y": 40.0, "gap": 160, "margin": 260, "sponge": 48,
             "bin_width": 8, "bins": 31}

# geometry in nodes; every key a scenario accepts appears here
GEOMETRY = {
    "double_slit": dict(_TWO_SLIT),
    "which_way": dict(_TWO_SLIT),
    "delayed_choice": {"d": 80, "L": 400, "image_distance": 200, "lens_thickness": 16, "sigma_x": 20.0,
                       "sigma_y": 40.0, "gap": 160, "margin": 200, "sponge": 48, "bin_width": 4, "bins": 31},
    "mach_zehnder": {},
    "bomb_test": {},
    "polarizer_chain": {},
    "entangled_chsh": {},
    "refraction": {"n2": 1.5, "theta": 30.0, "before": 200, "after": 200, "planes": 2, "slack": 9.0,
                   "beam_sigma": 16.0, "beam_before": 150, "beam_after": 150, "sponge": 48, "bin_width": 8},
    "least_action": {"distance": 100, "offsets": [0, 10, 25, 40], "slack": 6.0, "planes": 3,
                     "mirror_source": [20, 90], "mirror_target": [160, 70], "mirror_row": 20,
                     "beam_sigma": 16.0, "beam_distance": 300, "theta": 0.0, "sponge": 48, "bin_width": 4},
    "packet_uncertainty": {"sigma": 4.0, "length": 256, "sponge": 48, "gaussian_sigmas": [1.0, 2.0, 4.0, 8.0, 16.0],
                           "plane_depths": [2, 3, 4, 8, 16], "two_node_phases": 8},
}

OPTIONS = {
    "delayed_choice": {"mode": "screen"},
    "polarizer_chain": {"input_polarization": None},
    "entangled_chsh": {"same_angle_pairs": 100_000, "object_check_pairs": 2_000},
}

ANGLES = {"polarizer_chain": [0.0, 45.0, 90.0], "entangled_chsh": [0.0, 45.0, 22.5, 67.5]}
SHOTS = {"entangled_chsh": 1_000_000}
DEFAULT_SHOTS = 100_000
DEFAULT_TICKS = 10_000
U64 = (1 << 64) - 1


@dataclass
class ScenarioConfig:
    scenario: str
    seed: int
    shots: int = DEFAULT_SHOTS
    lam: float = 8.0
    geometry: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    toggle_tick: int | None = None
    angles: list | None = None
    ticks: int = DEFAULT_TICKS
    events: bool = True
    dump_every: int = 0         # ticks between field CSV dumps; 0 disables
    output_dir: str | None = None

    def to_dict(self) -> dict:
        """The echo: every setting that affects results, in a fixed order (output_dir is placement only)."""
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "shots": self.shots,
            "lam": self.lam,
            "ticks": self.ticks,
            "toggle_tick": self.toggle_tick,
            "angles": None if self.angles is None else list(self.angles),
            "geometry": copy.deepcopy(self.geometry),
            "options": copy.deepcopy(self.options),
            "events": self.events,
            "dump_every": self.dump_every,
        }


def from_dict(raw: dict) -> ScenarioConfig:
    """Validate a nested mapping and fill in scenario defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    raw = copy.deepcopy(raw)
    if "lambda" in raw:
        raw.setdefault("lam", raw.pop("lambda"))
    known = {"scenario", "seed", "shots", "lam", "geometry", "options", "toggle_tick", "angles", "ticks", "events",
             "dump_every", "output_dir"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    name = raw.get("scenario")
    if name not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {', '.join(SCENARIOS)}; got {name!r}")
    if raw.get("seed") is None:
        raise ConfigError("seed must be given explicitly")
    seed = _integer("seed", raw["seed"])
    if not 0 <= seed <= U64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    shots = _integer("shots", raw.get("shots", SHOTS.get(name, DEFAULT_SHOTS)))
    if shots < 1:
        raise ConfigError("shots must be at least 1")
    lam = _number("lam", raw.get("lam", 8.0))
    if lam < 2.0:
        raise ConfigError(f"wavelength {lam} is shorter than two nodes")
    ticks = _integer("ticks", raw.get("ticks", DEFAULT_TICKS))
    if ticks < 1:
        raise ConfigError("ticks must be positive")
    geometry = _merge("geometry", GEOMETRY[name], raw.get("geometry") or {})
    options = _merge("options", OPTIONS.get(name, {}), raw.get("options") or {})
    toggle = raw.get("toggle_tick")
    if toggle is not None:
        if name != "delayed_choice":
            raise ConfigError("toggle_tick only applies to delayed_choice")
        toggle = _integer("toggle_tick", toggle)
        if toggle < 0:
            raise ConfigError("toggle_tick must be non-negative")
    angles = raw.get("angles", ANGLES.get(name))
    if angles is not None:
        if name not in ANGLES:
            raise ConfigError(f"angles do not apply to {name}")
        if not isinstance(angles, (list, tuple)) or not angles:
            raise ConfigError("angles must be a non-empty list")
        angles = [_number("angle", a) for a in angles]
        if name == "entangled_chsh" and len(angles) != 4:
            raise ConfigError("entangled_chsh takes four angles: a, a', b, b'")
    dump_every = _integer("dump_every", raw.get("dump_every", 0))
    if dump_every < 0:
        raise ConfigError("dump_every must be non-negative")
    out = raw.get("output_dir")
    return ScenarioConfig(
        scenario=name, seed=seed, shots=shots, lam=lam, geometry=geometry, options=options, toggle_tick=toggle,
        angles=angles, ticks=ticks, events=_flag("events", raw.get("events", True)),
        dump_every=dump_every, output_dir=None if out is None else str(out),
    )


def _merge(section, defaults, given) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"{section} must be a mapping")
    extra = sorted(set(given) - set(defaults))
    if extra:
        raise ConfigError(f"unknown {section} keys: {', '.join(extra)}")
    merged = copy.deepcopy(defaults)
    merged.update(copy.deepcopy(given))
    return merged


def _integer(name, value) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be an integer")
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return value


def _number(name, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{name} must be a finite number, got {value!r}")
    return float(value)


def _flag(name, value) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{name} must be true or false")
    return value


def load_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def apply_overrides(raw: dict, assignments) -> dict:
    """Apply ``key=value`` strings; dotted keys reach into sections, values parse as YAML scalars."""
    raw = copy.deepcopy(raw)
    for item in assignments:
        key, sep, text = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not key=value")
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r}: {exc}") from exc
        *parents, leaf = key.split(".")
        node = raw
        for part in parents:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {part} is not a section")
        node[leaf] = value
    return raw


def dump(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


__all__ = ["ScenarioConfig", "SCENARIOS", "GEOMETRY", "from_dict", "load_file", "apply_overrides", "dump"]
