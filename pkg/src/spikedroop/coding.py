"""Spike encoders: rate, latency and burst coding of sampled measurements."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

CHANNELS = ("S_v", "S_i")


@dataclass(frozen=True)
class SpikeTrain:
    source_der: int
    channel: str
    times: tuple = ()
    horizon: float | None = None

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValidationError(f"unknown channel {self.channel!r}")
        times = tuple(float(t) for t in self.times)
        object.__setattr__(self, "times", times)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("spike times must be strictly increasing")
        if self.horizon is not None and times and (times[0] < 0 or times[-1] > self.horizon):
            raise ValidationError("spike times must lie inside the horizon")

    def __len__(self):
        return len(self.times)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)


@dataclass(frozen=True)
class RateCodingParams:
    kappa: float = 0.9
    deadband: float = 0.05

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValidationError("kappa must be > 0")
        if not self.deadband >= 0:
            raise ValidationError("deadband must be >= 0")


@dataclass(frozen=True)
class LatencyCodingParams:
    tau: float
    v_th: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValidationError("tau must be > 0")
        if not self.v_th > 0:
            raise ValidationError("v_th must be > 0")


@dataclass(frozen=True)
class BurstCodingParams:
    xi: float = 4.8
    kappa_b_init: float = 1.0
    # multiplicative growth overflows after a few hundred spikes without a cap
    kappa_b_max: float = 1e6

    def __post_init__(self):
        if not self.xi > 1:
            raise ValidationError("xi must be > 1")
        if not self.kappa_b_init > 0:
            raise ValidationError("kappa_b_init must be > 0")
        if not self.kappa_b_max >= self.kappa_b_init:
            raise ValidationError("kappa_b_max must be >= kappa_b_init")


def rate_trigger(v_dot, e_v, kappa, deadband):
    """Elementwise firing condition: falling behind the error and outside the deadband.

    A zero deadband disables the magnitude check entirely, so the bare
    inequality fires even at exact equilibrium.
    """
    v_dot = np.asarray(v_dot, dtype=float)
    e_v = np.asarray(e_v, dtype=float)
    fire = v_dot <= kappa * e_v
    if deadband > 0:
        fire &= np.abs(e_v) > deadband
    return fire


def _paired(v_dot, e_v):
    v = np.asarray(v_dot, dtype=float).ravel()
    e = np.asarray(e_v, dtype=float).ravel()
    if v.shape != e.shape:
        raise ValidationError(f"series length mismatch: {v.size} vs {e.size}")
    return v, e


def rate_encode(v_dot, e_v, params: RateCodingParams, dt: float, *, t0: float = 0.0,
                source_der: int = 0, channel: str = "S_v") -> SpikeTrain:
    v, e = _paired(v_dot, e_v)
    idx = np.flatnonzero(rate_trigger(v, e, params.kappa, params.deadband))
    return SpikeTrain(source_der, channel, tuple(t0 + idx * dt))


def latency_encode(current: float, resistance: float, params: LatencyCodingParams) -> float:
    """Time for a membrane starting at rest to reach threshold, or inf if it never does."""
    drive = current * resistance
    if not drive > params.v_th:
        return math.inf
    return params.tau * math.log(drive / (drive - params.v_th))


def latency_train(current, resistance, params: LatencyCodingParams, t0: float = 0.0,
                  source_der: int = 0, channel: str = "S_i") -> SpikeTrain:
    t = latency_encode(current, resistance, params)
    return SpikeTrain(source_der, channel, () if math.isinf(t) else (t0 + t,))


def burst_encode(v_dot, e_v, rate: RateCodingParams, params: BurstCodingParams, dt: float, *,
                 t0: float = 0.0, source_der: int = 0, channel: str = "S_v"):
    """Rate coding whose gain grows by ``xi`` after every spike and resets otherwise.

    Returns the spike train and the gain multiplier in force at each sample.
    """
    v, e = _paired(v_dot, e_v)
    gains = np.empty(v.size)
    spikes = []
    kb = params.kappa_b_init
    for n in range(v.size):
        gains[n] = kb
        if rate_trigger(v[n], e[n], rate.kappa * kb, rate.deadband):
            spikes.append(t0 + n * dt)
            kb = min(kb * params.xi, params.kappa_b_max)
        else:
            kb = params.kappa_b_init
    return SpikeTrain(source_der, channel, tuple(spikes)), gains


def find_bursts(train: SpikeTrain, dt: float) -> list[tuple[int, int]]:
    """Index ranges ``[start, stop)`` of spikes on consecutive samples."""
    t = train.as_array()
    if t.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(t) > 1.5 * dt) + 1
    edges = np.concatenate([[0], breaks, [t.size]])
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def first_spike_latency(train: SpikeTrain, t0: float) -> float:
    t = train.as_array()
    later = t[t >= t0]
    return float(later[0] - t0) if later.size else math.inf
