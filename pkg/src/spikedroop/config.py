"""YAML configuration: schema, defaults, validation and round-trip.

Buses and sources are numbered from 1 in configuration files and output,
and from 0 inside the library.
"""
from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .coding import BurstCodingParams
from .controller import ControllerParams
from .errors import ValidationError
from .grid import DerParams, GridModel, TieLine, Topology

DEFAULT_PSI = (
    (0.0, 0.6, 0.4, 0.0),
    (0.3, 0.0, 0.4, 0.3),
    (0.0, 0.4, 0.25, 0.35),
    (0.0, 0.15, 0.25, 0.6),
)


@dataclass(frozen=True)
class TieLineConfig:
    id: str
    from_bus: int
    to_bus: int
    resistance: float


def _ring():
    return (TieLineConfig("a", 1, 4, 0.5), TieLineConfig("b", 2, 3, 0.25),
            TieLineConfig("c", 3, 4, 0.6), TieLineConfig("d", 1, 2, 0.8))


@dataclass(frozen=True)
class GridConfig:
    v_ref: float = 315.0
    tie_lines: tuple[TieLineConfig, ...] = field(default_factory=_ring)
    psi: tuple[tuple[float, ...], ...] = DEFAULT_PSI
    base_loads: tuple[float, ...] = (2.0, 2.0, 2.0, 2.0)


@dataclass(frozen=True)
class DerConfig:
    capacitance_uF: float
    filter_tau_ms: float
    rated_current: float = 10.0
    max_voltage_dev: float = 20.0
    static_droop: float = 2.0
    share_ratio: float = 1.0


def _ders():
    return tuple(DerConfig(c, tau) for c, tau in zip((450.0, 500.0, 480.0, 520.0),
                                                     (8.0, 10.0, 12.0, 14.0)))


@dataclass(frozen=True)
class SimulationConfig:
    dt: float = 5e-5
    max_dt: float = 1e-3
    voltage_limit: float = 630.0
    decimation: int = 20


@dataclass(frozen=True)
class CodingConfig:
    kappa: float = 0.9
    deadband: float = 0.05
    sharing_deadband: float = 0.05
    xi: float = 4.8
    kappa_b_init: float = 1.0
    kappa_b_max: float = 1e6


@dataclass(frozen=True)
class ControllerConfig:
    sample_period: float = 1e-3
    voltage_margin: float = 1.5
    sharing_threshold_gain: float = 0.5
    threshold_mode: str = "uniform"
    sharing_gain: float = 3.0
    voltage_gain: float = 3.0
    latency_clip: float = 0.02


@dataclass(frozen=True)
class PlasticityConfig:
    a_plus: float = 0.02
    a_minus: float = -0.02
    w_max: float = 1.0
    normalization: float = 2.0
    synaptic_delay: float = 0.0
    min_droop_fraction: float = 0.1
    window: float = 0.2
    exponent_mode: str = "standard"
    eta: float = 1.0
    p_total: typing.Optional[float] = None


@dataclass(frozen=True)
class EventConfig:
    time: float
    kind: str
    target: str = "all"
    amount: float = 0.0
    duration: float = 0.0


@dataclass(frozen=True)
class ScenarioSettings:
    horizon: float = 6.0
    load_step: float = 4.0
    load_step_time: float = 1.0
    load_drop_time: float = 5.0
    transient_der: int = 1
    transient_time: float = 2.0
    transient_depth: float = 0.2
    transient_duration: float = 0.1
    plug_der: int = 3
    plug_time: float = 4.0
    swapped_delay: float = 0.1
    metric_fraction: float = 0.25
    event_exclusion: float = 0.2
    settle_band: float = 0.04
    flat_tolerance: float = 1e-6
    events: tuple[EventConfig, ...] = ()


@dataclass(frozen=True)
class CorrelationConfig:
    load_levels: tuple[float, ...] = (1.0, 2.0, 3.0)
    densities: tuple[float, ...] = (0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95)
    horizon: float = 1.5
    settle: float = 0.5
    window: float = 0.25
    block: float = 0.02
    depth: float = 0.2
    der: int = 1


@dataclass(frozen=True)
class SystemConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    ders: tuple[DerConfig, ...] = field(default_factory=_ders)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    coding: CodingConfig = field(default_factory=CodingConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    plasticity: PlasticityConfig = field(default_factory=PlasticityConfig)
    scenario: ScenarioSettings = field(default_factory=ScenarioSettings)
    correlation: CorrelationConfig = field(default_factory=CorrelationConfig)
    seed: int = 0
    strict_literal: bool = False

    def __post_init__(self):
        validate(self)

    # -- builders -------------------------------------------------------------

    def topology(self) -> Topology:
        g = self.grid
        ties = [TieLine(t.id, t.from_bus - 1, t.to_bus - 1, t.resistance) for t in g.tie_lines]
        return Topology(len(self.ders), ties, psi=g.psi, loads=g.base_loads)

    def der_params(self) -> list[DerParams]:
        return [DerParams(d.capacitance_uF * 1e-6, d.static_droop, d.rated_current,
                          d.max_voltage_dev, d.share_ratio, d.filter_tau_ms * 1e-3)
                for d in self.ders]

    def grid_model(self) -> GridModel:
        s = self.simulation
        return GridModel(self.topology(), self.der_params(), self.grid.v_ref, s.max_dt,
                         s.voltage_limit)

    def controller_params(self, **overrides) -> ControllerParams:
        c, k, p = self.controller, self.coding, self.plasticity
        literal = self.strict_literal
        kw = dict(
            sample_period=c.sample_period, kappa=k.kappa,
            deadband=0.0 if literal else k.deadband,
            sharing_deadband=0.0 if literal else k.sharing_deadband,
            voltage_margin=c.voltage_margin, sharing_threshold_gain=c.sharing_threshold_gain,
            threshold_mode=c.threshold_mode,
            sharing_gain=c.sharing_gain, voltage_gain=c.voltage_gain,
            latency_clip=c.latency_clip, a_plus=p.a_plus, a_minus=p.a_minus, w_max=p.w_max,
            normalization=p.normalization, synaptic_delay=p.synaptic_delay,
            min_droop_fraction=p.min_droop_fraction, pairing_window=p.window,
            exponent_mode="literal" if literal else p.exponent_mode,
            literal_error=literal,
            burst=BurstCodingParams(k.xi, k.kappa_b_init, k.kappa_b_max),
        )
        kw.update(overrides)
        return ControllerParams(**kw)

    def replace(self, **changes) -> SystemConfig:
        return dataclasses.replace(self, **changes)


def _section(name, build):
    try:
        return build()
    except ValidationError as exc:
        raise ValidationError(f"{name}: {exc}") from None


def _positive(section, obj, *names):
    for n in names:
        if not getattr(obj, n) > 0:
            raise ValidationError(f"{section}.{n}: must be > 0")


def validate(cfg: SystemConfig):
    g = cfg.grid
    n = len(cfg.ders)
    _positive("grid", g, "v_ref")
    if len(g.base_loads) != n:
        raise ValidationError(f"grid.base_loads: need {n} entries, one per der")
    if len(g.psi) != n or any(len(row) != n for row in g.psi):
        raise ValidationError(f"grid.psi: must be a {n}x{n} matrix")
    for k, t in enumerate(g.tie_lines):
        if not t.resistance > 0:
            raise ValidationError(f"grid.tie_lines[{k}].resistance: must be > 0")
        for end in (t.from_bus, t.to_bus):
            if not 1 <= end <= n:
                raise ValidationError(f"grid.tie_lines[{k}]: bus {end} outside 1..{n}")
    _section("grid", cfg.topology)
    for k in range(n):
        _section(f"ders[{k}]", lambda k=k: cfg.der_params()[k])
    s = cfg.simulation
    _positive("simulation", s, "dt", "max_dt", "voltage_limit")
    if s.dt > s.max_dt:
        raise ValidationError("simulation.dt: must not exceed simulation.max_dt")
    if s.decimation < 1:
        raise ValidationError("simulation.decimation: must be >= 1")
    ratio = cfg.controller.sample_period / s.dt
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ValidationError("controller.sample_period: must be a whole multiple of simulation.dt")
    _section("controller", cfg.controller_params)
    p = cfg.plasticity
    _positive("plasticity", p, "eta")
    if p.p_total is not None:
        _positive("plasticity", p, "p_total")
    sc = cfg.scenario
    _positive("scenario", sc, "horizon", "transient_duration")
    if not 0 < sc.metric_fraction <= 1:
        raise ValidationError("scenario.metric_fraction: must lie in (0, 1]")
    for name in ("transient_der", "plug_der"):
        if not 1 <= getattr(sc, name) <= n:
            raise ValidationError(f"scenario.{name}: must lie in 1..{n}")
    if not 0 <= sc.transient_depth < 1:
        raise ValidationError("scenario.transient_depth: must lie in [0, 1)")
    times = [e.time for e in sc.events]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValidationError("scenario.events: times must be strictly increasing")
    if times and (times[0] < 0 or times[-1] >= sc.horizon):
        raise ValidationError("scenario.events: times must lie in [0, horizon)")
    c = cfg.correlation
    _positive("correlation", c, "horizon", "window", "block")
    if not c.settle < c.horizon:
        raise ValidationError("correlation.settle: must be shorter than correlation.horizon")
    if not 1 <= c.der <= n:
        raise ValidationError(f"correlation.der: must lie in 1..{n}")
    if any(not 0 <= d <= 1 for d in c.densities):
        raise ValidationError("correlation.densities: must lie in [0, 1]")


# -- dict <-> dataclass ------------------------------------------------------

def _is_dataclass_type(tp):
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def _coerce(value, tp, key):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        tp = next(a for a in args if a is not type(None))
        return _coerce(value, tp, key)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ValidationError(f"{key}: expected a list")
        inner = args[0]
        return tuple(_coerce(v, inner, f"{key}[{i}]") for i, v in enumerate(value))
    if _is_dataclass_type(tp):
        return _from_dict(tp, value, key)
    try:
        if tp is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if tp is int:
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise TypeError
            return int(float(value))
        if tp is float:
            if isinstance(value, bool):
                raise TypeError
            out = float(value)
            if math.isnan(out):
                raise TypeError
            return out
        if tp is str:
            return str(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{key}: expected {tp.__name__}, got {value!r}") from None
    raise ValidationError(f"{key}: unsupported type")


def _from_dict(cls, data, prefix=""):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValidationError(f"{prefix or 'config'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValidationError(f"{prefix + '.' if prefix else ''}{sorted(unknown)[0]}: unknown key")
    kw = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            key = f"{prefix}.{f.name}" if prefix else f.name
            kw[f.name] = _coerce(data[f.name], hints[f.name], key)
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ValidationError(f"{prefix or 'config'}: {exc}") from None


def to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [to_dict(v) for v in obj]
    return obj


def config_from_dict(data) -> SystemConfig:
    return _from_dict(SystemConfig, data)


def load_config(path) -> SystemConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: not valid YAML: {exc}") from None
    return config_from_dict(data)


def dump_config(cfg: SystemConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)
