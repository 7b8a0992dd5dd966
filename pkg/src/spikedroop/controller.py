"""Closed-loop spiking secondary controller.

Once per sample period every online source emits up to two spikes. The
first spike fires on a rate or burst condition and marks the disturbance; the
second is a latency spike whose delay carries the magnitude of the other
objective. Pairing the two channels through STDP yields weight changes that
are mapped onto the adaptive droop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coding import BurstCodingParams, LatencyCodingParams, latency_encode, rate_trigger
from .errors import ValidationError
from .grid import GridModel, path_resistance, synaptic_conductance, thevenin_resistance
from .plasticity import (
    OnlinePairing,
    PlasticityState,
    StdpParams,
    apply_weight_to_droop,
    soft_bound_amplitudes,
    stdp_time_constants,
)

VOLTAGE_SCHEMES = ("rate", "burst", "latency")
SHARING_SCHEMES = ("latency", "rate")
THRESHOLD_MODES = ("uniform", "estimated")


@dataclass(frozen=True)
class CodingAssignment:
    voltage: str = "rate"
    sharing: str = "latency"

    def __post_init__(self):
        if self.voltage not in VOLTAGE_SCHEMES:
            raise ValidationError(f"voltage channel scheme must be one of {VOLTAGE_SCHEMES}")
        if self.sharing not in SHARING_SCHEMES:
            raise ValidationError(f"sharing channel scheme must be one of {SHARING_SCHEMES}")
        if (self.voltage == "latency") == (self.sharing == "latency"):
            raise ValidationError("exactly one channel must use latency coding")

    @property
    def voltage_leads(self):
        """True when the voltage spike opens each interval and the sharing spike follows."""
        return self.voltage != "latency"


@dataclass(frozen=True)
class ControllerParams:
    sample_period: float = 1e-3
    kappa: float = 0.9
    deadband: float = 0.05
    sharing_deadband: float = 0.05
    voltage_margin: float = 1.5
    sharing_threshold_gain: float = 0.5
    threshold_mode: str = "uniform"
    sharing_gain: float = 3.0
    voltage_gain: float = 3.0
    latency_clip: float = 0.02
    a_plus: float = 0.02
    a_minus: float = -0.02
    w_max: float = 1.0
    normalization: float = 2.0
    synaptic_delay: float = 0.0
    min_droop_fraction: float = 0.1
    pairing_window: float = 0.2
    exponent_mode: str = "standard"
    literal_error: bool = False
    burst: BurstCodingParams = field(default_factory=BurstCodingParams)

    def __post_init__(self):
        for name in ("sample_period", "kappa", "sharing_gain", "voltage_gain", "w_max",
                     "normalization", "pairing_window", "a_plus"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        for name in ("deadband", "sharing_deadband", "synaptic_delay", "voltage_margin",
                     "sharing_threshold_gain"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"{name} must be >= 0")
        if not 0 < self.latency_clip < 0.5:
            raise ValidationError("latency_clip must lie in (0, 0.5)")
        if not 0 < self.min_droop_fraction < 1:
            raise ValidationError("min_droop_fraction must lie in (0, 1)")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ValidationError(f"threshold_mode must be one of {THRESHOLD_MODES}")
        # validates the amplitude signs and exponent mode
        StdpParams(self.a_plus, self.a_minus, 1.0, self.pairing_window, self.exponent_mode)


def consensus_weights(psi, online) -> np.ndarray:
    """Regulation coefficients restricted to online sources, rows renormalised."""
    w = np.asarray(psi, dtype=float) * online[None, :]
    sums = w.sum(axis=1, keepdims=True)
    # a source whose every neighbour is offline falls back to a uniform average
    fallback = np.broadcast_to(online / online.sum(), w.shape)
    return np.where(sums > 0, w / np.where(sums > 0, sums, 1.0), fallback)


def sharing_signal(i_meas, share_ratio, weights, static_droop) -> np.ndarray:
    """Droop-voltage equivalent of each source's shortfall against its weighted peers."""
    per_unit = i_meas / share_ratio
    return static_droop * (share_ratio * (weights @ per_unit) - i_meas)


@dataclass
class SampleRecord:
    time: float
    v_dot: np.ndarray
    error: np.ndarray
    sharing: np.ndarray
    gain: np.ndarray
    tau: np.ndarray
    v_mem: np.ndarray
    g_syn: np.ndarray
    dw: np.ndarray
    spikes: list


class SpikingDroopController:
    """Per-source spike generation and STDP-driven droop adaptation."""

    def __init__(self, model: GridModel, params: ControllerParams,
                 assignment: CodingAssignment, psi=None):
        self.model = model
        self.params = params
        self.assignment = assignment
        n = model.n
        psi = model.topology.psi if psi is None else psi
        self.psi = np.full((n, n), 1.0 / n) if psi is None else np.asarray(psi, dtype=float)
        self.share_ratio = np.array([d.share_ratio for d in model.ders])
        self.plasticity = PlasticityState.zeros(
            n, model.static_droop, params.normalization, params.synaptic_delay,
            min_droop_fraction=params.min_droop_fraction)
        stdp = StdpParams(params.a_plus, params.a_minus, 1.0, params.pairing_window,
                          params.exponent_mode)
        self.pairing = [OnlinePairing(stdp) for _ in range(n)]
        self.kappa_b = np.full(n, params.burst.kappa_b_init)
        # latency neuron tuned so a neutral drive spikes mid-interval
        self.latency = LatencyCodingParams(params.sample_period / (2 * math.log(2)), 1.0)
        self.v_prev = None
        self._paths = None
        self.threshold_offset = np.zeros(n)

    # -- thresholds and errors ------------------------------------------------

    def voltage_targets(self, v, i_meas, online, sharing=None) -> np.ndarray:
        """Per-source firing thresholds.

        A source that is off its share in either direction sees a raised
        threshold, so it keeps firing until the imbalance is learned away.
        """
        p, m = self.params, self.model
        target = np.full(m.n, m.v_ref - p.voltage_margin)
        if sharing is not None:
            target += p.sharing_threshold_gain * np.abs(sharing)
        if p.threshold_mode == "estimated" and online[0]:
            if self._paths is None:
                self._paths = np.array([path_resistance(m.topology, 0, k) for k in range(m.n)])
            est = v[0] + self.psi[0] * self._paths * i_meas[0]
            target[1:] += est[1:] - (m.v_ref - p.voltage_margin)
        return target

    def voltage_error(self, v, i_meas, online, r_eff, sharing=None) -> np.ndarray:
        """Distance of the regulated voltage below its threshold.

        The regulated quantity is the average of the online bus voltages, so
        line drops do not pull the sources apart.
        """
        if self.params.literal_error:
            return self.model.v_ref - v + i_meas * r_eff
        seen = float(np.mean(v[online]))
        return self.voltage_targets(v, i_meas, online, sharing) + self.threshold_offset - seen

    def latency_of(self, drive) -> float:
        """Delay inside the interval of a latency neuron driven by ``drive``.

        Larger drive means a later spike; the result is clipped away from the
        interval edges.
        """
        z = min(max(drive, -50.0), 50.0)
        t = latency_encode(1.0 + math.exp(-z), 1.0, self.latency)
        p = self.params
        lo, hi = p.latency_clip * p.sample_period, (1 - p.latency_clip) * p.sample_period
        return min(max(t, lo), hi)

    # -- main entry -----------------------------------------------------------

    def delta_r(self, t) -> np.ndarray:
        self.plasticity = self.plasticity.advance_to(t)
        return self.plasticity.delta_r

    def latch_thresholds(self, error):
        """Shift the thresholds so the given voltage error reads as zero.

        Used once learning is frozen: from then on only fresh disturbances
        move the error out of the deadband.
        """
        self.threshold_offset = self.threshold_offset - np.asarray(error, dtype=float)

    def plug(self, der, online):
        self.pairing[der].forget()
        self.kappa_b[der] = self.params.burst.kappa_b_init

    def sample(self, t, v, i_src, i_filt, online, learn=True) -> SampleRecord:
        p, m = self.params, self.model
        ts = p.sample_period
        v_dot = np.zeros(m.n) if self.v_prev is None else (v - self.v_prev) / ts
        self.v_prev = v.copy()
        r_eff = self.plasticity.effective_droop
        weights = consensus_weights(self.psi, online)
        s = sharing_signal(i_filt, self.share_ratio, weights, m.static_droop)
        e_v = self.voltage_error(v, i_filt, online, r_eff,
                                 s if self.assignment.voltage_leads else None)
        r_th = thevenin_resistance(m.y, r_eff, online)
        tau = stdp_time_constants(r_th, m.capacitance)
        gain = np.full(m.n, p.kappa)
        dw = np.zeros(m.n)
        spikes = []
        for k in np.flatnonzero(online):
            if self.assignment.voltage_leads:
                if self.assignment.voltage == "burst":
                    gain[k] = p.kappa * self.kappa_b[k]
                fired = bool(rate_trigger(v_dot[k], e_v[k], gain[k], p.deadband))
                if self.assignment.voltage == "burst":
                    self.kappa_b[k] = (min(self.kappa_b[k] * p.burst.xi, p.burst.kappa_b_max)
                                       if fired else p.burst.kappa_b_init)
                if not fired:
                    continue
                lag = self.latency_of(p.sharing_gain * s[k] + p.voltage_gain * e_v[k])
                first, second = "S_v", "S_i"
            else:
                if not rate_trigger(0.0, abs(s[k]), p.kappa, p.sharing_deadband):
                    continue
                lag = self.latency_of(-p.voltage_gain * e_v[k])
                first, second = "S_i", "S_v"
            for channel, ts_k in ((first, t), (second, t + lag)):
                ap, am = soft_bound_amplitudes(p.a_plus, p.a_minus,
                                               self.plasticity.w[k] + dw[k], p.w_max)
                change = self.pairing[k].spike(channel, ts_k, ap, am, tau[k])
                if learn:
                    dw[k] += change
                spikes.append((ts_k, int(k), channel))
        if np.any(dw):
            self.plasticity = apply_weight_to_droop(self.plasticity, dw, t)
        v_mem, g_syn = self.membrane_view(v, v_dot, i_src, online, r_th, e_v)
        return SampleRecord(t, v_dot, e_v, s, gain, tau, v_mem, g_syn, dw, spikes)

    def membrane_view(self, v, v_dot, i_src, online, r_th, e_v):
        """Membrane potentials implied by the neuron analogy, and each source's
        coupling conductance to the mean of the other online sources."""
        threshold = v + e_v
        drive = np.where(online, i_src, 0.0) - self.model.capacitance * v_dot
        v_mem = threshold + r_th * drive
        g = 1.0 / r_th
        g_syn = np.full(v.size, math.nan)
        for k in np.flatnonzero(online):
            others = online.copy()
            others[k] = False
            if not others.any():
                continue
            g_syn[k] = synaptic_conductance(
                v[k], float(v[others].mean()), g[k] * (v_mem[k] - threshold[k]),
                float(np.mean(g[others] * (v_mem[others] - threshold[others]))), 0.0, 1.0, 1.0)
        return v_mem, g_syn
