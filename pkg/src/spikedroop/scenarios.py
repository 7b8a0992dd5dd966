"""Scripted closed-loop experiments and the metrics computed from them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from .config import EventConfig, SystemConfig
from .controller import CodingAssignment, SpikingDroopController
from .errors import DivergenceError, ValidationError
from .grid import GridState

SCENARIOS = ("case_i", "case_ii", "case_iii", "case_iv", "correlation_sweep", "custom")
EVENT_KINDS = ("load_step", "input_transient", "plug_out", "plug_in")
ASSIGNMENTS = {
    "case_i": CodingAssignment("rate", "latency"),
    "case_ii": CodingAssignment("latency", "rate"),
    "case_iii": CodingAssignment("burst", "latency"),
    "case_iv": CodingAssignment("rate", "latency"),
    "custom": CodingAssignment("rate", "latency"),
    "correlation_sweep": CodingAssignment("rate", "latency"),
}


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    target: object = "all"    # bus/der index (0-based) or "all"
    amount: float = 0.0
    duration: float = 0.0

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValidationError(f"unknown event kind {self.kind!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    id: str
    assignment: CodingAssignment
    events: tuple
    horizon: float
    synaptic_delay: float | None = None
    input_profile: np.ndarray | None = None    # per-sample source scale of one der
    input_der: int = 0
    loads: tuple | None = None
    learning_until: float = math.inf

    def __post_init__(self):
        if self.id not in SCENARIOS:
            raise ValidationError(f"unknown scenario {self.id!r}")
        if not self.horizon > 0:
            raise ValidationError("horizon must be > 0")
        times = [e.time for e in self.events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("event times must be strictly increasing")
        if times and (times[0] < 0 or times[-1] >= self.horizon):
            raise ValidationError("event times must lie in [0, horizon)")


def _event_from_config(e: EventConfig) -> Event:
    target = e.target
    if target != "all":
        try:
            target = int(target) - 1
        except ValueError:
            raise ValidationError(f"event target {target!r} is neither 'all' nor an index") from None
    return Event(e.time, e.kind, target, e.amount, e.duration)


def scenario_config(scenario_id: str, system: SystemConfig) -> ScenarioConfig:
    """Default timeline for each named case, taken from the system settings."""
    s = system.scenario
    if scenario_id not in SCENARIOS:
        raise ValidationError(f"unknown scenario {scenario_id!r}")
    if scenario_id == "custom":
        events = tuple(_event_from_config(e) for e in s.events)
        return ScenarioConfig("custom", ASSIGNMENTS["custom"], events, s.horizon)
    if scenario_id == "correlation_sweep":
        raise ValidationError("correlation_sweep is a batch; use correlation_sweep()")
    events = [
        Event(s.load_step_time, "load_step", "all", s.load_step),
        Event(s.transient_time, "input_transient", s.transient_der - 1, -s.transient_depth,
              s.transient_duration),
        Event(s.load_drop_time, "load_step", "all", -s.load_step),
    ]
    if scenario_id == "case_iv":
        events.append(Event(s.plug_time, "plug_out", s.plug_der - 1))
    events.sort(key=lambda e: e.time)
    delay = s.swapped_delay if scenario_id == "case_ii" else None
    return ScenarioConfig(scenario_id, ASSIGNMENTS[scenario_id], tuple(events), s.horizon, delay)


# -- state helpers -----------------------------------------------------------

def plug_event(state: GridState, der: int, direction: str, t: float | None = None) -> GridState:
    """Take a source off the network or bring it back.

    An offline source carries no current; bringing it back starts it from zero
    current and leaves the controller state untouched.
    """
    n = state.online.size
    if not 0 <= der < n:
        raise ValidationError(f"der index {der} outside 0..{n - 1}")
    on = state.online.copy()
    if direction == "out":
        if on[der] and on.sum() == 1:
            raise ValidationError("cannot take the last online source out")
        on[der] = False
    elif direction == "in":
        on[der] = True
    else:
        raise ValidationError("direction must be 'out' or 'in'")
    new = state.with_online(on)
    return new if t is None else replace(new, time=t)


# -- trace -------------------------------------------------------------------

@dataclass
class TraceLog:
    """Decimated per-source trace plus the full controller-rate sample log."""

    n: int
    t: list = field(default_factory=list)
    v_bus: list = field(default_factory=list)
    i_out: list = field(default_factory=list)
    i_filt: list = field(default_factory=list)
    v_mem: list = field(default_factory=list)
    delta_r: list = field(default_factory=list)
    dw: list = field(default_factory=list)
    g_syn: list = field(default_factory=list)
    online: list = field(default_factory=list)
    spikes: list = field(default_factory=list)
    sample_t: list = field(default_factory=list)
    sample_v_dot: list = field(default_factory=list)
    sample_error: list = field(default_factory=list)
    sample_gain: list = field(default_factory=list)
    sample_i_in: list = field(default_factory=list)
    sample_i_out: list = field(default_factory=list)
    sample_delta_r: list = field(default_factory=list)
    sample_online: list = field(default_factory=list)
    sample_load: list = field(default_factory=list)
    input_spikes: list = field(default_factory=list)
    events: tuple = ()
    diverged: bool = False
    divergence_time: float = math.nan

    def freeze(self):
        """Convert the growing lists into arrays once the run is finished."""
        for name in ("t", "sample_t", "sample_load"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        for name in ("v_bus", "i_out", "i_filt", "v_mem", "delta_r", "dw", "g_syn",
                     "sample_v_dot", "sample_error", "sample_gain", "sample_i_in",
                     "sample_i_out", "sample_delta_r"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1, self.n))
        for name in ("online", "sample_online"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=bool).reshape(-1, self.n))
        self.spikes.sort()
        return self

    def spike_times(self, der: int, channel: str) -> np.ndarray:
        return np.array([t for t, k, ch in self.spikes if k == der and ch == channel])


@dataclass
class MetricsReport:
    mean_voltage: float
    sharing_error: float
    oscillation_index: float
    dominant_frequency: float
    mu: float
    c_in: float
    c_out: float
    spike_counts: dict
    settle_times: tuple = ()
    diverged: bool = False
    divergence_time: float = math.nan
    served_load_error: float = math.nan

    def rows(self):
        rows = [("mean_voltage", self.mean_voltage), ("sharing_error", self.sharing_error),
                ("oscillation_index", self.oscillation_index),
                ("dominant_frequency", self.dominant_frequency),
                ("mu", self.mu), ("c_in", self.c_in), ("c_out", self.c_out),
                ("served_load_error", self.served_load_error),
                ("diverged", float(self.diverged)), ("divergence_time", self.divergence_time)]
        rows += [(f"spikes_{ch}", float(c)) for ch, c in sorted(self.spike_counts.items())]
        rows += [(f"settle_time_{k + 1}", s) for k, s in enumerate(self.settle_times)]
        return rows


# -- simulation --------------------------------------------------------------

def _apply_load(loads, event, n):
    loads = loads.copy()
    if event.target == "all":
        loads += event.amount / n
    else:
        if not 0 <= event.target < n:
            raise ValidationError(f"load bus {event.target + 1} outside 1..{n}")
        loads[event.target] += event.amount
    return loads


def run_scenario(config: ScenarioConfig, system: SystemConfig,
                 decimation: int | None = None) -> tuple[TraceLog, MetricsReport]:
    model = system.grid_model()
    n = model.n
    overrides = {}
    if config.synaptic_delay is not None:
        overrides["synaptic_delay"] = config.synaptic_delay
    params = system.controller_params(**overrides)
    ctrl = SpikingDroopController(model, params, config.assignment)
    dt = system.simulation.dt
    decimation = decimation or system.simulation.decimation
    per_sample = int(round(params.sample_period / dt))
    steps = int(round(config.horizon / dt))
    loads = np.asarray(config.loads if config.loads is not None else system.grid.base_loads,
                       dtype=float)

    start = model.steady_state(np.zeros(n), loads)
    v, i_src, i_filt, online = (start.bus_voltage, start.der_current,
                                start.filtered_current, start.online)
    scale = np.ones(n)
    transients = []    # (end_time, der, amount)
    pending = list(config.events)
    log = TraceLog(n, events=config.events)
    record = None
    latched = False
    profile = config.input_profile

    for step in range(steps):
        t = step * dt
        while pending and t >= pending[0].time - 1e-12:
            ev = pending.pop(0)
            if ev.kind == "load_step":
                loads = _apply_load(loads, ev, n)
            elif ev.kind == "input_transient":
                transients.append((ev.time + ev.duration, ev.target, ev.amount))
            else:
                st = plug_event(GridState(t, v, i_src, i_filt, online), ev.target,
                                "out" if ev.kind == "plug_out" else "in")
                i_src, i_filt, online = st.der_current, st.filtered_current, st.online
                ctrl.plug(ev.target, online)
        transients = [tr for tr in transients if t < tr[0] - 1e-12]
        scale[:] = 1.0
        for _, k, amount in transients:
            scale[k] += amount
        sample_index, at_sample = divmod(step, per_sample)
        if profile is not None:
            scale[config.input_der] *= profile[min(sample_index, profile.size - 1)]

        if at_sample == 0:
            learn = t < config.learning_until
            if not learn and not latched:
                # the sample just before the freeze holds the settled error
                ctrl.latch_thresholds(record.error)
                latched = True
            record = ctrl.sample(t, v, i_src, i_filt, online, learn)
            log.spikes.extend(record.spikes)
            r_eff = model.effective_droop(ctrl.delta_r(t))
            i_in = np.where(online, scale / r_eff * (model.v_ref - v), 0.0)
            log.sample_t.append(t)
            log.sample_v_dot.append(record.v_dot)
            log.sample_error.append(record.error)
            log.sample_gain.append(record.gain)
            log.sample_i_in.append(i_in)
            log.sample_i_out.append(i_src.copy())
            log.sample_delta_r.append(ctrl.plasticity.delta_r.copy())
            log.sample_online.append(online.copy())
            log.sample_load.append(float(loads.sum()))
            if np.any(np.abs(scale - 1.0) > 1e-12):
                log.input_spikes.append(t)
        delta_r = ctrl.delta_r(t)
        if step % decimation == 0:
            log.t.append(t)
            log.v_bus.append(v.copy())
            log.i_out.append(i_src.copy())
            log.i_filt.append(i_filt.copy())
            log.v_mem.append(record.v_mem)
            log.delta_r.append(delta_r.copy())
            log.dw.append(record.dw if at_sample == 0 else np.zeros(n))
            log.g_syn.append(record.g_syn)
            log.online.append(online.copy())
        v, i_src, i_filt = model.advance(v, i_src, i_filt, online, model.effective_droop(delta_r),
                                         loads, dt, scale)
        try:
            model.check(v, t + dt)
        except DivergenceError as exc:
            log.diverged, log.divergence_time = True, exc.time
            if config.id != "case_ii":
                raise
            break

    log.freeze()
    return log, compute_metrics(log, config, system)


# -- metrics -----------------------------------------------------------------

def metric_mask(times, events, horizon, fraction=0.25, exclusion=0.2) -> np.ndarray:
    """Post-transient samples: the final part of the run minus a guard after each event."""
    mask = times >= horizon * (1 - fraction) - 1e-12
    for ev in events:
        mask &= ~((times >= ev.time - 1e-12) & (times < ev.time + exclusion - 1e-12))
    return mask


def _longest_run(mask):
    best, start = (0, 0), None
    for k, m in enumerate(np.append(mask, False)):
        if m and start is None:
            start = k
        elif not m and start is not None:
            if k - start > best[1] - best[0]:
                best = (start, k)
            start = None
    return best


def oscillation_index(trace, dt, flat_tolerance=1e-12) -> tuple[float, float]:
    """Share of the detrended signal power held by the strongest nonzero frequency.

    Returns ``(index, frequency_hz)``. A trace whose detrended swing is below
    ``flat_tolerance`` counts as constant and scores zero.
    """
    x = np.asarray(trace, dtype=float)
    if x.size < 256:
        raise ValidationError("oscillation index needs at least 256 samples")
    if not np.all(np.isfinite(x)):
        raise ValidationError("trace contains non-finite values")
    resid = signal.detrend(x)
    if np.ptp(resid) <= flat_tolerance:
        return 0.0, 0.0
    freqs, power = signal.periodogram(x, fs=1.0 / dt, detrend="linear", window="boxcar")
    total = power.sum()
    if total <= 0:
        return 0.0, 0.0
    k = 1 + int(np.argmax(power[1:]))
    return float(power[k] / total), float(freqs[k])


def settle_times(times, delta_r, events, horizon, band) -> tuple:
    """Time after each event until the adaptive droop stays inside ``band`` of its
    value just before the next event (or the end of the run)."""
    out = []
    edges = [e.time for e in events] + [horizon]
    for ev, stop in zip(events, edges[1:]):
        seg = (times >= ev.time - 1e-12) & (times < stop - 1e-12)
        if not seg.any():
            out.append(math.nan)
            continue
        tt, dr = times[seg], delta_r[seg]
        final = dr[-1]
        outside = np.any(np.abs(dr - final) > band, axis=1)
        idx = np.flatnonzero(outside)
        out.append(0.0 if idx.size == 0 else float(tt[min(idx[-1] + 1, tt.size - 1)] - ev.time))
    return tuple(out)


def sharing_error(currents, share_ratio, online) -> float:
    """Largest relative deviation of any online source from its proportional share."""
    per_unit = currents[online] / share_ratio[online]
    mean = per_unit.mean()
    if mean == 0:
        return 0.0
    return float(np.max(np.abs(per_unit / mean - 1.0)))


@dataclass(frozen=True)
class CorrelationSample:
    t_start: float
    c_in: float
    c_out: float
    mu: float


def correlation_analysis(times, v_dot, i_in, i_out, input_spikes, output_spikes, kappa,
                         windows, sample_period) -> tuple[list, list]:
    """Per-window input and output spike rates and the implied correlation factor.

    Rates are spikes per sample slot, so both lie in [0, 1]. At every output
    firing instant the factor solves the balance between the scaled voltage
    slope and the rate-weighted input and output currents. Returns the
    samples and the start times of the windows that were skipped.
    """
    times = np.asarray(times, dtype=float)
    input_spikes = np.asarray(input_spikes, dtype=float)
    output_spikes = np.asarray(output_spikes, dtype=float)
    samples, skipped = [], []
    for lo, hi in windows:
        slots = max(1, int(round((hi - lo) / sample_period)))
        n_in = np.count_nonzero((input_spikes >= lo) & (input_spikes < hi))
        fire = output_spikes[(output_spikes >= lo) & (output_spikes < hi)]
        c_i, c_o = n_in / slots, fire.size / slots
        if fire.size == 0 or c_i == 0:
            skipped.append(lo)
            continue
        idx = np.clip(np.searchsorted(times, fire - 1e-12), 0, times.size - 1)
        denom = c_i * i_in[idx]
        ok = np.abs(denom) > 1e-12
        if not ok.any():
            skipped.append(lo)
            continue
        mu = (v_dot[idx] / kappa + c_o * i_out[idx])[ok] / denom[ok]
        samples.append(CorrelationSample(lo, c_i, c_o, float(np.mean(mu))))
    return samples, skipped


def _windows(lo, hi, width):
    edges = np.arange(lo, hi - width / 2, width)
    return [(float(a), float(a + width)) for a in edges]


def compute_metrics(log: TraceLog, config: ScenarioConfig, system: SystemConfig) -> MetricsReport:
    s = system.scenario
    model_share = np.array([d.share_ratio for d in system.ders])
    ts = system.controller.sample_period
    counts = {"S_v": 0, "S_i": 0}
    for _, _, ch in log.spikes:
        counts[ch] += 1
    horizon = config.horizon
    end = log.sample_t[-1] + ts if log.sample_t.size else 0.0
    times = log.sample_t
    mask = metric_mask(times, config.events, horizon, s.metric_fraction, s.event_exclusion)
    if log.diverged or not mask.any():
        return MetricsReport(math.nan, math.nan, 1.0 if log.diverged else math.nan, math.nan,
                             math.nan, math.nan, math.nan, counts, (), log.diverged,
                             log.divergence_time)
    on = log.sample_online[mask][-1]
    v_trace = log.v_bus[np.isin(log.t, times[mask])] if log.t.size else log.v_bus
    mean_v = float(np.mean(v_trace[:, on])) if v_trace.size else math.nan
    currents = log.sample_i_out[mask]
    share = max(sharing_error(row, model_share, on) for row in currents)
    demand = log.sample_load[mask]
    served = float(np.max(np.abs(currents[:, on].sum(axis=1) - demand) / demand))

    a, b = _longest_run(mask)
    index, freq = 0.0, 0.0
    if b - a >= 256:
        for k in np.flatnonzero(on):
            ik, fk = oscillation_index(log.sample_delta_r[a:b, k], ts, s.flat_tolerance)
            if ik > index:
                index, freq = ik, fk
    settle = settle_times(times, log.sample_delta_r, config.events, min(horizon, end),
                          s.settle_band)

    der = system.correlation.der - 1
    samples, _ = correlation_analysis(times, log.sample_v_dot[:, der], log.sample_i_in[:, der],
                                      log.sample_i_out[:, der], log.input_spikes,
                                      log.spike_times(der, "S_v"), system.coding.kappa,
                                      _windows(0.0, end, system.correlation.window), ts)
    if samples:
        mu = float(np.mean([x.mu for x in samples]))
        c_in = float(np.mean([x.c_in for x in samples])) / ts
        c_out = float(np.mean([x.c_out for x in samples])) / ts
    else:
        mu, c_in, c_out = math.nan, 0.0, 0.0
    return MetricsReport(mean_v, share, index, freq, mu, c_in, c_out, counts, settle,
                         False, math.nan, served)


# -- correlation batch -------------------------------------------------------

def intermittent_profile(n_samples, density, block, sample_period, depth, rng) -> np.ndarray:
    """Per-sample input availability: blocks that dip by ``depth`` with probability ``density``."""
    per_block = max(1, int(round(block / sample_period)))
    n_blocks = -(-n_samples // per_block)
    dips = rng.random(n_blocks) < density
    return np.repeat(np.where(dips, 1.0 - depth, 1.0), per_block)[:n_samples]


def correlation_sweep(system: SystemConfig, seed: int | None = None) -> list[CorrelationSample]:
    """Batch of runs over load levels and input intermittency densities."""
    c = system.correlation
    rng = np.random.default_rng(system.seed if seed is None else seed)
    ts = system.controller.sample_period
    n = len(system.ders)
    n_samples = int(round(c.horizon / ts))
    out = []
    for level in c.load_levels:
        for density in c.densities:
            profile = intermittent_profile(n_samples, density, c.block, ts, c.depth, rng)
            profile[: int(round(c.settle / ts))] = 1.0
            cfg = ScenarioConfig("correlation_sweep", ASSIGNMENTS["correlation_sweep"], (),
                                 c.horizon, input_profile=profile, input_der=c.der - 1,
                                 loads=(level,) * n, learning_until=c.settle)
            log, _ = run_scenario(cfg, system)
            der = c.der - 1
            samples, _ = correlation_analysis(
                log.sample_t, log.sample_v_dot[:, der], log.sample_i_in[:, der],
                log.sample_i_out[:, der], log.input_spikes, log.spike_times(der, "S_v"),
                system.coding.kappa, _windows(c.settle, c.horizon, c.window), ts)
            out.extend(samples)
    return out
