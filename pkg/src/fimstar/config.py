"""Scenario configuration: reference defaults, YAML loading, env overrides.

Every experiment is driven by one :class:`ScenarioConfig`. A config file is a
YAML document whose top-level keys are the section names below; any key that
is not a known field is rejected. Environment variables of the form
``FIMSTAR_<SECTION>__<FIELD>`` override file values (parsed as YAML scalars).
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

ENV_PREFIX = "FIMSTAR_"
SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Raised for unparsable or invalid configuration values."""


@dataclass
class SystemConfig:
    u_t: int = 4
    u_r: int = 4
    m_x: int = 2
    m_z: int = 1
    ris_mx: int = 4
    ris_mz: int = 4
    n_subcarriers: int = 4
    u_max: int = 2
    p_max: float = 0.5
    noise_dbm_per_hz: float = -170.0
    bandwidth_hz: float = 10e6
    carrier_hz: float = 2.4e9
    spacing: float = 0.05
    ris_spacing: float = 0.05
    # morphing range in carrier wavelengths
    morph_range: float = 0.5

    @property
    def num_users(self) -> int:
        return self.u_t + self.u_r

    @property
    def num_antennas(self) -> int:
        return self.m_x * self.m_z

    @property
    def k_ris(self) -> int:
        return self.ris_mx * self.ris_mz

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def noise_power(self) -> float:
        """Per-subcarrier noise power in watts."""
        density_w = 10.0 ** ((self.noise_dbm_per_hz - 30.0) / 10.0)
        return density_w * self.bandwidth_hz / self.n_subcarriers


@dataclass
class PowerConfig:
    p_static_bs: float = 1.0  # 30 dBm
    p_static_ris: float = 0.1  # 100 mW
    p_per_element_ris: float = 0.33e-3
    amp_efficiency: float = 0.5


@dataclass
class GeometryConfig:
    ris_position: list = field(default_factory=lambda: [30.0, 0.0, 5.0])
    user_disc_distance: float = 40.0
    user_disc_radius: float = 10.0
    num_paths: int = 4
    c0_db: float = -30.0
    exponent_direct: float = 3.5
    exponent_ris: float = 2.2
    direct_blockage_db: float = 30.0
    min_distance: float = 1.0


@dataclass
class RewardConfig:
    # EE, SIC margins, U_max slack, P_max slack, RIS deviation
    weights: list = field(default_factory=lambda: [0.9, 0.001, 0.033, 0.033, 0.033])


@dataclass
class AgentConfig:
    actor_hidden: list = field(default_factory=lambda: [256, 256])
    critic_hidden: list = field(default_factory=lambda: [256, 256])
    meta_hidden: list = field(default_factory=lambda: [64, 64])
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    lr_meta: float = 1e-3
    gamma: float = 0.99
    tau: float = 0.01
    entropy_weight: float = 1e-3
    batch_size: int = 32
    buffer_capacity: int = 1_000_000
    meta_critic: bool = True
    optimizer: str = "sgd"


@dataclass
class TrainingConfig:
    episodes: int = 6000
    steps_per_episode: int = 20
    # None means "same as steps_per_episode"
    gradient_steps: int | None = None
    ris_mode: str = "star"
    policy: str = "meta_sac"
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    workers: int = 1

    @property
    def g_max(self) -> int:
        return self.steps_per_episode if self.gradient_steps is None else self.gradient_steps


SECTIONS = {
    "system": SystemConfig,
    "power": PowerConfig,
    "geometry": GeometryConfig,
    "reward": RewardConfig,
    "agent": AgentConfig,
    "training": TrainingConfig,
}

RIS_MODES = ("star", "d_ris", "none")
POLICIES = ("meta_sac", "sac", "random")
OPTIMIZERS = ("adam", "sgd")


@dataclass
class ScenarioConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    power: PowerConfig = field(default_factory=PowerConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def replace(self, **sections: dict) -> ScenarioConfig:
        """Copy with per-section field overrides, e.g. ``replace(system={"u_t": 2})``."""
        data = self.to_dict()
        for name, values in sections.items():
            if name not in SECTIONS:
                raise ConfigError(f"unknown section '{name}'")
            data[name].update(values)
        return from_dict(data)

    def validate(self) -> None:
        s, p, g, a, t = self.system, self.power, self.geometry, self.agent, self.training
        counts = {
            "system.u_t": s.u_t, "system.u_r": s.u_r, "system.m_x": s.m_x,
            "system.m_z": s.m_z, "system.ris_mx": s.ris_mx, "system.ris_mz": s.ris_mz,
            "system.n_subcarriers": s.n_subcarriers, "system.u_max": s.u_max,
            "geometry.num_paths": g.num_paths, "agent.batch_size": a.batch_size,
            "agent.buffer_capacity": a.buffer_capacity,
            "training.steps_per_episode": t.steps_per_episode,
        }
        for name, value in counts.items():
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        positive = {
            "system.p_max": s.p_max, "system.bandwidth_hz": s.bandwidth_hz,
            "system.carrier_hz": s.carrier_hz, "system.spacing": s.spacing,
            "system.ris_spacing": s.ris_spacing, "system.morph_range": s.morph_range,
            "power.p_static_bs": p.p_static_bs, "power.p_static_ris": p.p_static_ris,
            "power.p_per_element_ris": p.p_per_element_ris,
            "geometry.user_disc_distance": g.user_disc_distance,
            "geometry.user_disc_radius": g.user_disc_radius,
            "geometry.min_distance": g.min_distance,
            "agent.entropy_weight": a.entropy_weight,
        }
        for name, value in positive.items():
            if not _is_number(value) or not value > 0:
                raise ConfigError(f"{name} must be > 0, got {value!r}")
        if not 0 < p.amp_efficiency < 1:
            raise ConfigError(f"power.amp_efficiency must lie in (0, 1), got {p.amp_efficiency!r}")
        if not 0 < a.gamma < 1:
            raise ConfigError(f"agent.gamma must lie in (0, 1), got {a.gamma!r}")
        if not 0 <= a.tau <= 1:
            raise ConfigError(f"agent.tau must lie in [0, 1], got {a.tau!r}")
        for name in ("lr_actor", "lr_critic", "lr_meta"):
            if getattr(a, name) < 0:
                raise ConfigError(f"agent.{name} must be >= 0")
        if a.optimizer not in OPTIMIZERS:
            raise ConfigError(f"agent.optimizer must be one of {OPTIMIZERS}, got {a.optimizer!r}")
        if t.episodes < 0:
            raise ConfigError("training.episodes must be >= 0")
        if t.gradient_steps is not None and t.gradient_steps < 0:
            raise ConfigError("training.gradient_steps must be >= 0")
        if t.ris_mode not in RIS_MODES:
            raise ConfigError(f"training.ris_mode must be one of {RIS_MODES}, got {t.ris_mode!r}")
        if t.policy not in POLICIES:
            raise ConfigError(f"training.policy must be one of {POLICIES}, got {t.policy!r}")
        if len(g.ris_position) != 3:
            raise ConfigError("geometry.ris_position must have 3 coordinates")
        w = self.reward.weights
        if len(w) != 5 or any(not 0 <= x <= 1 for x in w):
            raise ConfigError("reward.weights must be 5 values in [0, 1]")
        if not math.isclose(sum(w), 1.0, abs_tol=1e-9):
            raise ConfigError(f"reward.weights must sum to 1, got {sum(w)!r}")
        for name in ("actor_hidden", "critic_hidden", "meta_hidden"):
            if any(int(h) < 1 for h in getattr(a, name)):
                raise ConfigError(f"agent.{name} widths must be >= 1")


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _coerce(section: str, name: str, default: Any, value: Any) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{name} must be a boolean, got {value!r}")
        return value
    if isinstance(default, int) and name != "gradient_steps":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
            raise ConfigError(f"{section}.{name} must be an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if not _is_number(value):
            raise ConfigError(f"{section}.{name} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{section}.{name} must be a list, got {value!r}")
        return list(value)
    return value


def from_dict(data: dict | None) -> ScenarioConfig:
    """Build and validate a config from nested mappings; missing keys take defaults."""
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping of sections")
    sections = {}
    for name, value in data.items():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section '{name}'")
        if value is not None and not isinstance(value, dict):
            raise ConfigError(f"section '{name}' must be a mapping")
    for name, cls in SECTIONS.items():
        values = data.get(name) or {}
        default = cls()
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key not in known:
                raise ConfigError(f"unknown key '{name}.{key}'")
            kwargs[key] = _coerce(name, key, getattr(default, key), value)
        sections[name] = cls(**kwargs)
    cfg = ScenarioConfig(**sections)
    cfg.validate()
    return cfg


def _env_overrides(environ: dict) -> dict:
    out: dict = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX):].lower().split("__")
        if len(path) != 2:
            raise ConfigError(f"environment override {key} must look like {ENV_PREFIX}SECTION__FIELD")
        out.setdefault(path[0], {})[path[1]] = yaml.safe_load(raw)
    return out


def merge(base: dict, override: dict) -> dict:
    merged = {k: dict(v or {}) for k, v in base.items()}
    for section, values in override.items():
        merged.setdefault(section, {}).update(values)
    return merged


def load_config(path: str | os.PathLike | None = None, environ: dict | None = None) -> ScenarioConfig:
    """Load a YAML config file (empty file means all defaults) plus env overrides."""
    data: dict = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping of sections")
    env = os.environ if environ is None else environ
    return from_dict(merge(data, _env_overrides(env)))


def desk_profile() -> ScenarioConfig:
    """Reduced scenario used for learning-trend checks: U=4, N=2, M=2, K_RIS=8, 300 episodes."""
    return ScenarioConfig().replace(
        system={"u_t": 2, "u_r": 2, "n_subcarriers": 2, "ris_mx": 4, "ris_mz": 2},
        training={"episodes": 300, "steps_per_episode": 20},
    )
