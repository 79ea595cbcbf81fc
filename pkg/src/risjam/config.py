"""Scenario configuration: TOML schema, unit conversions, jamming shape.

One TOML document describes a full scenario. Every field of every
config block has a dotted key (section.key below); unknown sections or
keys are configuration errors, as are malformed values. dBm quantities
are converted to watts once, at load time.

Sections and keys:

  [scenario]   name, kind, seed, users, p_max_dbm, jammer_power_dbm,
               jam_alpha, jam_beta, jam_equal_power, eval_steps
  [geometry]   bs_offset, bs_height, ris_height, jammer_x, jammer_y,
               carrier_wavelength, ris_cols, ris_rows, ris_offset_y,
               user_area_center, user_area_side
  [propagation] ref_pathloss_db, alpha_direct, alpha_bs_ris,
               alpha_ris_user, alpha_jam_direct, alpha_jam_ris,
               rician_k1, rician_k2, rician_k3, noise_density_dbm_hz,
               bandwidth_hz, subchannels, los_phase
  [modulation] rates, beta1, beta2
  [qos]        ber_targets, chi
  [td3]        discount, actor_lr, critic_lr, polyak, buffer_capacity,
               episodes, steps_per_episode, batch_size, policy_delay,
               noise_clip, exploration_noise_var, policy_noise_var,
               variant, hidden, normalize_state, reward_scale
  [allocator]  max_outer, max_inner, step_size, tolerance, repair,
               project_nu, step_schedule, lambda0, nu0,
               ratio_tolerance, warm_start

`td3.reward_scale` accepts a number or "auto" (one over the maximum
attainable sum rate K * r_max, a conditioning aid for critic targets).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict, replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:          # Python 3.10
    import tomli as tomllib

from .propagation import GeometryConfig, PropagationConfig
from .linkmodel import ModulationTable, QosProfile
from .allocator import AllocatorConfig
from .agent import Td3Config

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "load_scenario",
    "scenario_from_dict",
    "scenario_hash",
    "dbm_to_watts",
    "watts_to_dbm",
    "db_to_linear",
    "jam_weights",
    "ris_shape_for",
    "BASELINE_KINDS",
]

BASELINE_KINDS = ("psd-td3", "psd-ddpg", "random-ris", "no-ris")


class ConfigError(ValueError):
    """Malformed or unknown configuration content (CLI exit code 1)."""


def dbm_to_watts(x_dbm: float) -> float:
    return 10.0 ** (x_dbm / 10.0) * 1e-3


def watts_to_dbm(x_w: float) -> float:
    if x_w <= 0:
        raise ValueError("power must be > 0 to express in dBm")
    return 10.0 * math.log10(x_w / 1e-3)


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def ris_shape_for(n: int) -> tuple[int, int]:
    """(Ny, Nz) for a requested element count: the most square grid.

    Canonical sizes map to the layouts 40 -> 8x5, 60 -> 10x6, 80 -> 10x8;
    in general Nz is the largest divisor of n not above sqrt(n).
    """
    if n == 0:
        return (0, 0)
    if n < 0:
        raise ValueError("element count must be >= 0")
    nz = max(d for d in range(1, int(math.isqrt(n)) + 1) if n % d == 0)
    return (n // nz, nz)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    kind: str = "psd-td3"
    seed: int = 0
    users: int = 4
    p_max_w: float = dbm_to_watts(30.0)
    jam_power_w: float = dbm_to_watts(10.0)   # per-subchannel mean
    jam_alpha: float = 5.0
    jam_beta: float = 5.0
    jam_equal_power: bool = True
    eval_steps: int = 200
    warm_start: bool = True
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    modulation: ModulationTable = field(default_factory=ModulationTable)
    qos: QosProfile = field(default_factory=QosProfile)
    td3: Td3Config = field(default_factory=Td3Config)
    allocator: AllocatorConfig = field(default_factory=AllocatorConfig)

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if self.users < 1:
            raise ConfigError("users must be >= 1")
        if self.p_max_w < 0 or self.jam_power_w < 0:
            raise ConfigError("powers must be >= 0")
        if self.jam_alpha <= 0 or self.jam_beta <= 0:
            raise ConfigError("jam shape parameters must be > 0")
        if self.eval_steps < 1:
            raise ConfigError("eval_steps must be >= 1")
        if self.kind != "no-ris" and self.geometry.num_elements == 0 \
                and self.kind in ("psd-td3", "psd-ddpg"):
            raise ConfigError("learning scenarios need at least one RIS element")

    @property
    def num_elements(self) -> int:
        return 0 if self.kind == "no-ris" else self.geometry.num_elements

    @property
    def max_sum_rate(self) -> float:
        return self.propagation.subchannels * self.modulation.rates[-1]

    def resolved_reward_scale(self) -> float:
        return self.td3.reward_scale


def jam_weights(alpha: float, beta: float, k: int, p_j: float,
                rng: np.random.Generator, equal_power: bool = False) -> np.ndarray:
    """Per-subchannel jamming powers with mean exactly p_j.

    Beta(alpha, beta) draws are rescaled so the K weights average to the
    configured power; the equal-power switch short-circuits to a flat
    vector (the flat limit of large equal shape parameters).
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError("shape parameters must be > 0")
    if k < 1:
        raise ValueError("k must be >= 1")
    if equal_power:
        return np.full(k, p_j, dtype=float)
    x = rng.beta(alpha, beta, size=k)
    while x.sum() == 0.0:             # measure-zero, but keep the law total
        x = rng.beta(alpha, beta, size=k)
    return p_j * x * k / x.sum()


# ---------------------------------------------------------------------------
# TOML parsing

def _pop_typed(sec: dict, section_name: str, key: str, default, caster):
    if key not in sec:
        return default
    raw = sec.pop(key)
    try:
        return caster(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {section_name}.{key}: {raw!r}") from exc


def _bool(x):
    if not isinstance(x, bool):
        raise ValueError("expected a boolean")
    return x


def _float_list(x):
    return tuple(float(v) for v in x)


def _reward_scale(x):
    if x == "auto":
        return "auto"
    return float(x)


def scenario_from_dict(doc: dict, source: str = "<dict>") -> ScenarioConfig:
    """Build and validate a scenario from parsed TOML content."""
    doc = {k: dict(v) if isinstance(v, dict) else v for k, v in dict(doc).items()}

    def section(name):
        sec = doc.pop(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table in {source}")
        return sec

    sc = section("scenario")
    geo = section("geometry")
    prop = section("propagation")
    mod = section("modulation")
    qos_sec = section("qos")
    td3_sec = section("td3")
    alloc = section("allocator")

    name = _pop_typed(sc, "scenario", "name", "scenario", str)
    kind = _pop_typed(sc, "scenario", "kind", "psd-td3", str)
    seed = _pop_typed(sc, "scenario", "seed", 0, int)
    users = _pop_typed(sc, "scenario", "users", 4, int)
    p_max_w = dbm_to_watts(_pop_typed(sc, "scenario", "p_max_dbm", 30.0, float))
    jam_w = dbm_to_watts(_pop_typed(sc, "scenario", "jammer_power_dbm", 10.0, float))
    jam_alpha = _pop_typed(sc, "scenario", "jam_alpha", 5.0, float)
    jam_beta = _pop_typed(sc, "scenario", "jam_beta", 5.0, float)
    jam_equal = _pop_typed(sc, "scenario", "jam_equal_power", True, _bool)
    eval_steps = _pop_typed(sc, "scenario", "eval_steps", 200, int)

    geometry = GeometryConfig(
        bs_offset=_pop_typed(geo, "geometry", "bs_offset", 2.0, float),
        bs_height=_pop_typed(geo, "geometry", "bs_height", 10.0, float),
        ris_height=_pop_typed(geo, "geometry", "ris_height", 10.0, float),
        jammer_x=_pop_typed(geo, "geometry", "jammer_x", 50.0, float),
        jammer_y=_pop_typed(geo, "geometry", "jammer_y", 150.0, float),
        carrier_wavelength=_pop_typed(geo, "geometry", "carrier_wavelength", 0.1, float),
        ris_cols=_pop_typed(geo, "geometry", "ris_cols", 8, int),
        ris_rows=_pop_typed(geo, "geometry", "ris_rows", 5, int),
        ris_offset_y=_pop_typed(geo, "geometry", "ris_offset_y", 0.0, float),
        user_area_center=_pop_typed(geo, "geometry", "user_area_center",
                                    (100.0, 100.0, 0.0), _float_list),
        user_area_side=_pop_typed(geo, "geometry", "user_area_side", 100.0, float),
    )
    propagation = PropagationConfig(
        ref_pathloss=db_to_linear(_pop_typed(prop, "propagation", "ref_pathloss_db",
                                             -30.0, float)),
        alpha_direct=_pop_typed(prop, "propagation", "alpha_direct", 3.0, float),
        alpha_bs_ris=_pop_typed(prop, "propagation", "alpha_bs_ris", 2.5, float),
        alpha_ris_user=_pop_typed(prop, "propagation", "alpha_ris_user", 2.2, float),
        alpha_jam_direct=_pop_typed(prop, "propagation", "alpha_jam_direct", 3.0, float),
        alpha_jam_ris=_pop_typed(prop, "propagation", "alpha_jam_ris", 2.5, float),
        rician_k1=_pop_typed(prop, "propagation", "rician_k1", 1.0, float),
        rician_k2=_pop_typed(prop, "propagation", "rician_k2", 3.0, float),
        rician_k3=_pop_typed(prop, "propagation", "rician_k3", 1.0, float),
        noise_density=dbm_to_watts(_pop_typed(prop, "propagation",
                                              "noise_density_dbm_hz", -169.0, float)),
        bandwidth=_pop_typed(prop, "propagation", "bandwidth_hz", 100e6, float),
        subchannels=_pop_typed(prop, "propagation", "subchannels", 16, int),
        los_phase=_pop_typed(prop, "propagation", "los_phase", "angle", str),
    )
    modulation = ModulationTable(
        rates=_pop_typed(mod, "modulation", "rates", (0.0, 2.0, 4.0, 6.0), _float_list),
        beta1=_pop_typed(mod, "modulation", "beta1", 0.2, float),
        beta2=_pop_typed(mod, "modulation", "beta2", -1.6, float),
    )
    qos = QosProfile(
        ber_targets=_pop_typed(qos_sec, "qos", "ber_targets", (1e-6, 1e-2), _float_list),
        chi=_pop_typed(qos_sec, "qos", "chi", 1.0, float),
        beta1=modulation.beta1,
    )
    reward_scale = _pop_typed(td3_sec, "td3", "reward_scale", 1.0, _reward_scale)
    if reward_scale == "auto":
        reward_scale = 1.0 / (propagation.subchannels * modulation.rates[-1])
    td3 = Td3Config(
        discount=_pop_typed(td3_sec, "td3", "discount", 0.99, float),
        actor_lr=_pop_typed(td3_sec, "td3", "actor_lr", 1e-3, float),
        critic_lr=_pop_typed(td3_sec, "td3", "critic_lr", 1e-3, float),
        polyak=_pop_typed(td3_sec, "td3", "polyak", 5e-3, float),
        buffer_capacity=_pop_typed(td3_sec, "td3", "buffer_capacity", 100_000, int),
        episodes=_pop_typed(td3_sec, "td3", "episodes", 400, int),
        steps_per_episode=_pop_typed(td3_sec, "td3", "steps_per_episode", 200, int),
        batch_size=_pop_typed(td3_sec, "td3", "batch_size", 16, int),
        policy_delay=_pop_typed(td3_sec, "td3", "policy_delay", 2, int),
        noise_clip=_pop_typed(td3_sec, "td3", "noise_clip", 0.5, float),
        exploration_noise_var=_pop_typed(td3_sec, "td3", "exploration_noise_var", 0.2, float),
        policy_noise_var=_pop_typed(td3_sec, "td3", "policy_noise_var", 0.2, float),
        variant=_pop_typed(td3_sec, "td3", "variant", "td3", str),
        hidden=_pop_typed(td3_sec, "td3", "hidden", (128, 64),
                          lambda x: tuple(int(v) for v in x)),
        normalize_state=_pop_typed(td3_sec, "td3", "normalize_state", True, _bool),
        reward_scale=reward_scale,
    )
    allocator = AllocatorConfig(
        max_outer=_pop_typed(alloc, "allocator", "max_outer", 100, int),
        max_inner=_pop_typed(alloc, "allocator", "max_inner", 50, int),
        step_size=_pop_typed(alloc, "allocator", "step_size", 0.01, float),
        tolerance=_pop_typed(alloc, "allocator", "tolerance", 1e-4, float),
        repair=_pop_typed(alloc, "allocator", "repair", True, _bool),
        project_nu=_pop_typed(alloc, "allocator", "project_nu", False, _bool),
        step_schedule=_pop_typed(alloc, "allocator", "step_schedule", "constant", str),
        lambda0=_pop_typed(alloc, "allocator", "lambda0", 0.0, float),
        nu0=_pop_typed(alloc, "allocator", "nu0", 0.0, float),
        ratio_tolerance=_pop_typed(alloc, "allocator", "ratio_tolerance", None,
                                   lambda x: None if x is None else float(x)),
    )
    warm_start = _pop_typed(alloc, "allocator", "warm_start", True, _bool)

    for section_name, sec in (("scenario", sc), ("geometry", geo),
                              ("propagation", prop), ("modulation", mod),
                              ("qos", qos_sec), ("td3", td3_sec), ("allocator", alloc)):
        if sec:
            raise ConfigError(f"unknown keys in [{section_name}] of {source}: "
                              f"{sorted(sec)}")
    if doc:
        raise ConfigError(f"unknown sections in {source}: {sorted(doc)}")

    try:
        return ScenarioConfig(
            name=name, kind=kind, seed=seed, users=users, p_max_w=p_max_w,
            jam_power_w=jam_w, jam_alpha=jam_alpha, jam_beta=jam_beta,
            jam_equal_power=jam_equal, eval_steps=eval_steps, warm_start=warm_start,
            geometry=geometry, propagation=propagation, modulation=modulation,
            qos=qos, td3=td3, allocator=allocator)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(path) -> ScenarioConfig:
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return scenario_from_dict(doc, source=str(path))


def _canonical(obj):
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, float):
        return repr(obj)
    if isinstance(obj, np.ndarray):
        return [_canonical(v) for v in obj.tolist()]
    return obj


def scenario_to_dict(sc: ScenarioConfig) -> dict:
    return asdict(sc)


def scenario_hash(sc: ScenarioConfig) -> str:
    """Stable 12-hex digest of the fully resolved scenario."""
    blob = json.dumps(_canonical(scenario_to_dict(sc)), sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]
