"""Scenario configuration: TOML in, validated dataclasses out, and back.

Every section is a frozen dataclass whose fields double as the schema; unknown
keys and invalid values are reported with their dotted path (``medium.D``).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import tomli
import tomli_w

from .kernel import Geometry, Medium, Scenario
from .linksim import ChannelMode, EqualizerMode, LinkConfig, NoiseSpec, Scheme
from .pulsedesign import Reduction
from .wind import CovarianceKernel, KernelKind, WindModel

_S = math.sqrt(2.0) / 2.0


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeometryConfig:
    source: tuple = (0.0, 0.0, 1.0)
    receiver: tuple = (_S, _S, 1.0)


@dataclass(frozen=True)
class MediumConfig:
    D: float = 6.7698e-6


@dataclass(frozen=True)
class WindConfig:
    mean: float = 0.5
    kind: str = "white"
    direction: Optional[tuple] = None
    intensity: Optional[float] = None
    variance: Optional[float] = None
    corr_time: Optional[float] = None
    center: Optional[float] = None
    width: Optional[float] = None
    period: Optional[float] = None
    mod_depth: Optional[float] = None
    mod_scale: Optional[float] = None


@dataclass(frozen=True)
class SimulationConfig:
    channel_rate: float = 1000.0
    rx_rate: float = 100.0
    tx_rate: float = 100.0
    t_mem: float = 30.0


@dataclass(frozen=True)
class LinkSection:
    scheme: str = "four"
    t_sym: float = 2.0
    n_dim: int = 2
    n_symbols: int = 1000
    n_pilots: int = 10
    n_trailing: int = 100
    snr_db: Optional[float] = None
    ebn0_db: Optional[float] = None
    normalize_channel: bool = True
    channel_mode: str = "realization"
    equalizer: str = "affine"


@dataclass(frozen=True)
class AnalysisConfig:
    tau_max: float = 40.0
    tau_step: float = 0.01
    acf_tau_max: float = 10.0
    acf_points: int = 41
    t1: float = 120.0
    t2: float = 120.0


@dataclass(frozen=True)
class BerConfig:
    trials: int = 10
    ebn0_db: tuple = (-24.0, -18.0, -12.0, -6.0, 0.0)


@dataclass(frozen=True)
class LeakageConfig:
    n_dims: tuple = (2, 3, 4)
    t_syms: tuple = (1.2, 2.4, 4.8, 9.6, 19.2)
    mode: str = "mean"
    reduction: str = "decision"


_SECTIONS = {
    "geometry": GeometryConfig,
    "medium": MediumConfig,
    "wind": WindConfig,
    "simulation": SimulationConfig,
    "link": LinkSection,
    "analysis": AnalysisConfig,
    "ber": BerConfig,
    "leakage": LeakageConfig,
}


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    medium: MediumConfig = field(default_factory=MediumConfig)
    wind: WindConfig = field(default_factory=WindConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    link: LinkSection = field(default_factory=LinkSection)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    ber: BerConfig = field(default_factory=BerConfig)
    leakage: LeakageConfig = field(default_factory=LeakageConfig)
    seed: Optional[int] = None

    # ---- model objects -------------------------------------------------

    def kernel(self) -> CovarianceKernel:
        w = self.wind
        names = ("intensity", "variance", "corr_time", "center", "width", "period", "mod_depth", "mod_scale")
        params = {n: getattr(w, n) for n in names if getattr(w, n) is not None}
        if w.kind == KernelKind.WHITE.value and "intensity" not in params:
            params["intensity"] = 1e-6
        return CovarianceKernel(KernelKind(w.kind), params)

    def scenario(self) -> Scenario:
        w = self.wind
        model = WindModel(w.mean, self.kernel(), w.direction)
        return Scenario(Geometry(self.geometry.source, self.geometry.receiver), Medium(self.medium.D), model)

    def noise(self) -> Optional[NoiseSpec]:
        if self.link.snr_db is not None:
            return NoiseSpec.snr(self.link.snr_db)
        if self.link.ebn0_db is not None:
            return NoiseSpec.ebn0(self.link.ebn0_db)
        return None

    def link_config(self, seed: int, **overrides) -> LinkConfig:
        lk, sim = self.link, self.simulation
        kw = dict(
            scenario=self.scenario(),
            scheme=lk.scheme,
            t_sym=lk.t_sym,
            n_dim=lk.n_dim,
            n_symbols=lk.n_symbols,
            n_pilots=lk.n_pilots,
            n_trailing=lk.n_trailing,
            tx_rate=sim.tx_rate,
            channel_rate=sim.channel_rate,
            rx_rate=sim.rx_rate,
            t_mem=sim.t_mem,
            noise=self.noise(),
            normalize_channel=lk.normalize_channel,
            channel_mode=lk.channel_mode,
            equalizer=lk.equalizer,
            seed=seed,
        )
        kw.update(overrides)
        return LinkConfig(**kw)


# --------------------------------------------------------------------------
# value coercion
# --------------------------------------------------------------------------


def _num(path: str, v: Any) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{path}: must be finite, got {v}")
    return v


def _int(path: str, v: Any) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    return int(v)


def _vec(path: str, v: Any, n: Optional[int], conv=_num) -> tuple:
    if not isinstance(v, (list, tuple)):
        raise ConfigError(f"{path}: expected a list, got {v!r}")
    if n is not None and len(v) != n:
        raise ConfigError(f"{path}: expected {n} values, got {len(v)}")
    return tuple(conv(f"{path}[{i}]", x) for i, x in enumerate(v))


def _choice(path: str, v: Any, enum_cls) -> str:
    if not isinstance(v, str):
        raise ConfigError(f"{path}: expected a string, got {v!r}")
    valid = [e.value for e in enum_cls]
    if v not in valid:
        raise ConfigError(f"{path}: {v!r} is not one of {valid}")
    return v


def _positive(path: str, v: float) -> float:
    if not v > 0:
        raise ConfigError(f"{path}: must be > 0, got {v}")
    return v


_FIELD_RULES = {
    ("geometry", "source"): lambda p, v: _vec(p, v, 3),
    ("geometry", "receiver"): lambda p, v: _vec(p, v, 3),
    ("medium", "D"): lambda p, v: _positive(p, _num(p, v)),
    ("wind", "mean"): _num,
    ("wind", "kind"): lambda p, v: _choice(p, v, KernelKind),
    ("wind", "direction"): lambda p, v: _vec(p, v, 2),
    ("simulation", "channel_rate"): lambda p, v: _positive(p, _num(p, v)),
    ("simulation", "rx_rate"): lambda p, v: _positive(p, _num(p, v)),
    ("simulation", "tx_rate"): lambda p, v: _positive(p, _num(p, v)),
    ("simulation", "t_mem"): lambda p, v: _positive(p, _num(p, v)),
    ("link", "scheme"): lambda p, v: _choice(p, v, Scheme),
    ("link", "t_sym"): lambda p, v: _positive(p, _num(p, v)),
    ("link", "n_dim"): _int,
    ("link", "n_symbols"): _int,
    ("link", "n_pilots"): _int,
    ("link", "n_trailing"): _int,
    ("link", "snr_db"): _num,
    ("link", "ebn0_db"): _num,
    ("link", "channel_mode"): lambda p, v: _choice(p, v, ChannelMode),
    ("link", "equalizer"): lambda p, v: _choice(p, v, EqualizerMode),
    ("analysis", "tau_max"): lambda p, v: _positive(p, _num(p, v)),
    ("analysis", "tau_step"): lambda p, v: _positive(p, _num(p, v)),
    ("analysis", "acf_tau_max"): lambda p, v: _positive(p, _num(p, v)),
    ("analysis", "acf_points"): _int,
    ("analysis", "t1"): _num,
    ("analysis", "t2"): _num,
    ("ber", "trials"): _int,
    ("ber", "ebn0_db"): lambda p, v: _vec(p, v, None),
    ("leakage", "n_dims"): lambda p, v: _vec(p, v, None, _int),
    ("leakage", "t_syms"): lambda p, v: _vec(p, v, None, lambda q, x: _positive(q, _num(q, x))),
    ("leakage", "mode"): lambda p, v: _choice(p, v, ChannelMode),
    ("leakage", "reduction"): lambda p, v: _choice(p, v, Reduction),
}


def _coerce(section: str, key: str, v: Any) -> Any:
    path = f"{section}.{key}"
    rule = _FIELD_RULES.get((section, key))
    if rule is not None:
        return rule(path, v)
    if section == "link" and key == "normalize_channel":
        if not isinstance(v, bool):
            raise ConfigError(f"{path}: expected true/false, got {v!r}")
        return v
    # remaining wind kernel parameters
    return _num(path, v)


# --------------------------------------------------------------------------
# parse / validate / serialise
# --------------------------------------------------------------------------


def from_mapping(data: dict) -> ScenarioConfig:
    data = dict(data)
    seed = data.pop("seed", None)
    if seed is not None:
        seed = _int("seed", seed)
        if seed < 0:
            raise ConfigError(f"seed: must be >= 0, got {seed}")
    sections = {}
    for name, value in data.items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown key '{name}'")
        if not isinstance(value, dict):
            raise ConfigError(f"{name}: expected a table")
        cls = _SECTIONS[name]
        known = {f.name for f in dataclasses.fields(cls)}
        kw = {}
        for key, v in value.items():
            if key not in known:
                raise ConfigError(f"unknown key '{name}.{key}'")
            kw[key] = _coerce(name, key, v)
        sections[name] = cls(**kw)
    cfg = ScenarioConfig(**sections, seed=seed)
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig) -> None:
    """Re-check cross-field invariants by building the model objects."""

    def guard(path, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None

    g = cfg.geometry
    if not g.source[2] > 0:
        raise ConfigError(f"geometry.source: height must be > 0, got {g.source[2]}")
    if not g.receiver[2] > 0:
        raise ConfigError(f"geometry.receiver: height must be > 0, got {g.receiver[2]}")
    guard("geometry", lambda: Geometry(g.source, g.receiver))
    if cfg.wind.kind == KernelKind.CUSTOM.value:
        raise ConfigError("wind.kind: custom kernels cannot be configured from a file")
    guard("wind", cfg.kernel)
    scenario = guard("wind", cfg.scenario)
    lk = cfg.link
    if lk.snr_db is not None and lk.ebn0_db is not None:
        raise ConfigError("link: give at most one of snr_db and ebn0_db")
    for key in ("n_symbols", "n_pilots", "n_trailing"):
        if getattr(lk, key) < 0:
            raise ConfigError(f"link.{key}: must be >= 0")
    guard("link", lambda: cfg.link_config(0, scenario=scenario))
    a = cfg.analysis
    if a.acf_points < 1:
        raise ConfigError("analysis.acf_points: must be >= 1")
    if cfg.ber.trials < 1:
        raise ConfigError("ber.trials: must be >= 1")
    if any(n < 1 for n in cfg.leakage.n_dims):
        raise ConfigError("leakage.n_dims: every N must be >= 1")


def parse_scenario(text: str) -> ScenarioConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    return from_mapping(data)


def to_mapping(cfg: ScenarioConfig) -> dict:
    out: dict = {}
    if cfg.seed is not None:
        out["seed"] = cfg.seed
    for name in _SECTIONS:
        sec = getattr(cfg, name)
        d = {}
        for f in dataclasses.fields(sec):
            v = getattr(sec, f.name)
            if v is None:
                continue
            d[f.name] = list(v) if isinstance(v, tuple) else v
        out[name] = d
    return out


def serialize(cfg: ScenarioConfig) -> str:
    return tomli_w.dumps(to_mapping(cfg))


def config_hash(cfg: ScenarioConfig, extra: Optional[dict] = None) -> str:
    """SHA-256 over the canonical config plus any run flags; hex digest."""
    blob = json.dumps({"config": to_mapping(cfg), "extra": extra or {}}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()
