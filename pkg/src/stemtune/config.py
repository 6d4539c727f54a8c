"""Run configuration: TOML sections, defaults, profiles and the resolved snapshot."""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import InvalidArgument
from .mobo import MoboConfig, SearchSpace
from .optics import PRESETS, OpticalConfig
from .virtual_scope import (
    DEFAULT_BOUNDS,
    WS2_BASIS,
    LatencyModel,
    NoiseConfig,
    SpecimenParams,
    VirtualScope,
)

PROFILES = {
    "desk": LatencyModel(hw_seconds_per_acquire=0.0, realtime=False),
    "bench": LatencyModel(hw_seconds_per_acquire=4.0, realtime=False),
}


@dataclass(frozen=True)
class SpecimenConfig:
    lattice_constant: float = 0.315
    # rows of [u, v, amplitude, width_nm] in the 60-degree primitive cell
    basis: tuple = tuple((u, v, amp, w) for (u, v), amp, w in WS2_BASIS)


@dataclass(frozen=True)
class SpaceConfig:
    preset: str = "c1-a1"
    bounds: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_BOUNDS.items()})

    def build(self):
        if self.preset not in PRESETS:
            raise InvalidArgument(f"unknown space preset {self.preset!r}; choose from {sorted(PRESETS)}")
        bounds = {k: tuple(v) for k, v in self.bounds.items()}
        return SearchSpace.preset(self.preset, bounds)


@dataclass(frozen=True)
class GridConfig:
    levels: int = 7
    max_evaluations: int = 10000


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    profile: str = "desk"
    optics: OpticalConfig = OpticalConfig()
    specimen: SpecimenConfig = SpecimenConfig()
    noise: NoiseConfig = NoiseConfig()
    space: SpaceConfig = SpaceConfig()
    mobo: MoboConfig = MoboConfig()
    latency: LatencyModel = PROFILES["desk"]
    grid: GridConfig = GridConfig()

    def search_space(self):
        return self.space.build()

    def mobo_config(self):
        space = self.search_space()
        return dataclasses.replace(
            self.mobo, master_seed=self.seed, n_init=self.mobo.init_size(space.dim)
        )

    def scope(self):
        specimen = SpecimenParams(
            lattice_constant=self.specimen.lattice_constant,
            basis=tuple(((u, v), amp, w) for u, v, amp, w in self.specimen.basis),
            field_of_view=self.optics.field_of_view,
            grid_size=self.optics.grid_size,
        )
        return VirtualScope(
            self.optics, specimen, self.noise, self.latency,
            bounds={k: tuple(v) for k, v in self.space.bounds.items()},
            master_seed=self.seed,
        )

    def resolved(self):
        """Copy with every derived default made explicit."""
        dim = self.search_space().dim
        return dataclasses.replace(
            self, mobo=dataclasses.replace(self.mobo, n_init=self.mobo.init_size(dim))
        )


SECTIONS = {
    "optics": OpticalConfig,
    "specimen": SpecimenConfig,
    "noise": NoiseConfig,
    "space": SpaceConfig,
    "mobo": MoboConfig,
    "latency": LatencyModel,
    "grid": GridConfig,
}
# The master seed lives at top level only.
_SKIP = {"mobo": {"master_seed"}}


def _plain(value):
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def to_dict(config):
    out = {"seed": config.seed, "profile": config.profile}
    for name in SECTIONS:
        section = getattr(config, name)
        out[name] = {
            f.name: _plain(getattr(section, f.name))
            for f in fields(section)
            if f.name not in _SKIP.get(name, ())
            and getattr(section, f.name) is not None
        }
    return out


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def from_dict(data):
    data = dict(data)
    kwargs = {}
    for key in ("seed", "profile"):
        if key in data:
            kwargs[key] = data.pop(key)
    if "profile" in kwargs and kwargs["profile"] not in PROFILES:
        raise InvalidArgument(f"unknown profile {kwargs['profile']!r}")
    if "profile" in kwargs and "latency" not in data:
        kwargs["latency"] = PROFILES[kwargs["profile"]]
    for name, section in data.items():
        if name not in SECTIONS:
            raise InvalidArgument(f"unknown configuration section or key {name!r}")
        cls = SECTIONS[name]
        known = {f.name for f in fields(cls)} - _SKIP.get(name, set())
        unknown = set(section) - known
        if unknown:
            raise InvalidArgument(f"unknown keys in [{name}]: {sorted(unknown)}")
        values = {k: (v if name == "space" and k == "bounds" else _tuplify(v))
                  for k, v in section.items()}
        if name == "space" and "bounds" in values:
            merged = {k: list(v) for k, v in DEFAULT_BOUNDS.items()}
            for coef, pair in values["bounds"].items():
                if coef not in merged or len(pair) != 2:
                    raise InvalidArgument(f"bad bounds entry {coef} = {pair!r}")
                merged[coef] = [float(pair[0]), float(pair[1])]
            values["bounds"] = merged
        try:
            kwargs[name] = cls(**values)
        except TypeError as exc:
            raise InvalidArgument(f"[{name}]: {exc}") from exc
    return RunConfig(**kwargs)


def load(path):
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise InvalidArgument(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InvalidArgument(f"invalid TOML in {path}: {exc}") from exc
    return from_dict(data)


def dumps(config):
    return tomli_w.dumps(to_dict(config))


def write_snapshot(config, run_dir):
    path = Path(run_dir) / "config.snapshot"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(config.resolved()), encoding="utf-8")
    return path
