"""Leaky integrate-and-fire neuron.

The membrane is an RC circuit. Each step decays the potential by
``beta = exp(-dt/tau)`` and pulls it toward ``R*I``; crossing the threshold
emits a spike and resets the membrane to zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import NumericalError, ValidationError


@dataclass(frozen=True)
class LifParams:
    membrane_resistance: float
    membrane_capacitance: float
    threshold: float
    reset: str = "zero"

    def __post_init__(self):
        if not self.membrane_resistance > 0:
            raise ValidationError("membrane_resistance must be > 0")
        if not self.membrane_capacitance > 0:
            raise ValidationError("membrane_capacitance must be > 0")
        if not self.threshold > 0:
            raise ValidationError("threshold must be > 0")
        if self.reset != "zero":
            raise ValidationError(f"unsupported reset mode {self.reset!r}")

    @property
    def tau(self) -> float:
        return self.membrane_resistance * self.membrane_capacitance

    @classmethod
    def from_tau(cls, tau: float, threshold: float, resistance: float = 1.0) -> "LifParams":
        return cls(resistance, tau / resistance, threshold)


@dataclass(frozen=True)
class LifState:
    v_mem: float = 0.0
    last_spike_time: float | None = None
    v0: float = 0.0
    time: float = 0.0


def decay_factor(dt: float, tau: float) -> float:
    if not tau > 0:
        raise ValidationError("tau must be > 0")
    if dt < 0:
        raise ValidationError("dt must be >= 0")
    return math.exp(-dt / tau)


def lif_step(state: LifState, weighted_input: float, params: LifParams, dt: float):
    """Advance one step. Returns ``(new_state, spike)`` with spike in {0, 1}."""
    if not dt > 0:
        raise ValidationError("dt must be > 0")
    if not math.isfinite(weighted_input):
        raise NumericalError("non-finite neuron input")
    beta = decay_factor(dt, params.tau)
    v = beta * state.v_mem + params.membrane_resistance * weighted_input * (1.0 - beta)
    t = state.time + dt
    if v >= params.threshold:
        return replace(state, v_mem=0.0, last_spike_time=t, time=t), 1
    return replace(state, v_mem=v, time=t), 0


def membrane_closed_form(current: float, resistance: float, tau: float, v0: float, t: float) -> float:
    """Membrane potential at time t under constant current, starting from v0."""
    if not tau > 0:
        raise ValidationError("tau must be > 0")
    if t < 0:
        raise ValidationError("t must be >= 0")
    decay = math.exp(-t / tau)
    return v0 * decay + current * resistance * (1.0 - decay)


def run_constant_input(current: float, params: LifParams, dt: float, horizon: float,
                       v0: float = 0.0) -> list[float]:
    """Spike times of a neuron driven by a constant current over [0, horizon]."""
    state = LifState(v_mem=v0, v0=v0)
    times = []
    for n in range(1, int(math.floor(horizon / dt + 1e-9)) + 1):
        state, spike = lif_step(state, current, params, dt)
        if spike:
            times.append(n * dt)
    return times
