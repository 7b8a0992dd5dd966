"""Spike-timing plasticity, its mapping onto the adaptive droop, and Hebbian analysis."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .coding import SpikeTrain
from .errors import DivergenceError, IndeterminateError, ValidationError
from .grid import Topology, path_resistance

EXPONENT_MODES = ("standard", "literal")


# -- firing thresholds -------------------------------------------------------

def voltage_thresholds(v_src, i_src, psi_row, path_r) -> np.ndarray:
    """Estimated neighbour voltages: the source voltage plus its share of the line drop."""
    psi_row = np.asarray(psi_row, dtype=float)
    path_r = np.asarray(path_r, dtype=float)
    if psi_row.shape != path_r.shape:
        raise ValidationError("psi row and path resistances differ in length")
    return v_src + psi_row * path_r * i_src


def network_voltage_thresholds(topology: Topology, src: int, v_src, i_src) -> np.ndarray:
    if topology.psi is None:
        raise ValidationError("topology has no regulation coefficients")
    paths = [path_resistance(topology, src, k) for k in range(topology.n_buses)]
    return voltage_thresholds(v_src, i_src, topology.psi[src], paths)


def current_thresholds(v_ref, droops, i_ref) -> np.ndarray:
    """Activation voltage each source would sit at if it carried ``i_ref`` through its droop."""
    droops = np.asarray(droops, dtype=float)
    if np.any(droops <= 0):
        raise ValidationError("droops must be > 0")
    return v_ref - droops * i_ref


# -- pair-based STDP ---------------------------------------------------------

@dataclass(frozen=True)
class StdpParams:
    a_plus: float
    a_minus: float
    tau_k: float
    window: float = 0.2
    exponent_mode: str = "standard"

    def __post_init__(self):
        if self.exponent_mode not in EXPONENT_MODES:
            raise ValidationError(f"exponent_mode must be one of {EXPONENT_MODES}")
        if not self.a_plus > 0:
            raise ValidationError("a_plus must be > 0")
        if self.exponent_mode == "standard" and not self.a_minus < 0:
            raise ValidationError("a_minus must be < 0")
        if not self.tau_k > 0:
            raise ValidationError("tau_k must be > 0")
        if not self.window > 0:
            raise ValidationError("window must be > 0")


def stdp_kernel(lag, a_plus, a_minus, tau, mode="standard"):
    """Weight change for voltage-minus-current spike lags; potentiation for positive lag."""
    lag = np.asarray(lag, dtype=float)
    with np.errstate(over="ignore"):
        decay = np.exp(lag / tau) if mode == "literal" else np.exp(-np.abs(lag) / tau)
    return np.where(lag > 0, a_plus, a_minus) * decay


def stdp_update(s_v: SpikeTrain, s_i: SpikeTrain, params: StdpParams) -> float:
    tv, ti = s_v.as_array(), s_i.as_array()
    if tv.size == 0 or ti.size == 0:
        return 0.0
    lag = tv[:, None] - ti[None, :]
    k = stdp_kernel(lag, params.a_plus, params.a_minus, params.tau_k, params.exponent_mode)
    return float(np.sum(k[np.abs(lag) <= params.window]))


class OnlinePairing:
    """Incremental form of :func:`stdp_update` for spikes arriving in time order.

    Each new spike is paired with the remembered spikes of the other channel
    inside the window, so the running total equals the batch sum.
    """

    def __init__(self, params: StdpParams):
        self.params = params
        self._history = {"S_v": deque(), "S_i": deque()}

    def spike(self, channel, t, a_plus=None, a_minus=None, tau=None) -> float:
        p = self.params
        other = self._history["S_i" if channel == "S_v" else "S_v"]
        while other and other[0] < t - p.window:
            other.popleft()
        self._history[channel].append(t)
        if not other:
            return 0.0
        past = np.fromiter(other, float)
        lag = t - past if channel == "S_v" else past - t
        lag = lag[np.abs(lag) <= p.window]
        k = stdp_kernel(lag, p.a_plus if a_plus is None else a_plus,
                        p.a_minus if a_minus is None else a_minus,
                        p.tau_k if tau is None else tau, p.exponent_mode)
        return float(np.sum(k))

    def forget(self):
        for q in self._history.values():
            q.clear()


def soft_bound_amplitudes(a_plus0, a_minus0, w, w_max):
    """Weight-dependent amplitudes: potentiation fades near ``w_max``, depression near zero."""
    frac = w / w_max
    return a_plus0 * (1.0 - frac), a_minus0 * frac


def stdp_time_constants(thevenin_r, capacitance) -> np.ndarray:
    return np.asarray(thevenin_r, dtype=float) * np.asarray(capacitance, dtype=float)


# -- weight to droop ---------------------------------------------------------

@dataclass(frozen=True)
class PlasticityState:
    w: np.ndarray
    dw: np.ndarray
    delta_r: np.ndarray
    static_droop: np.ndarray
    a: object = 2.0
    synaptic_delay: float = 0.0
    min_droop_fraction: float = 0.1
    pending: tuple = ()

    def __post_init__(self):
        if not self.synaptic_delay >= 0:
            raise ValidationError("synaptic_delay must be >= 0")
        if np.any(np.asarray(self.static_droop) <= 0):
            raise ValidationError("static droop must be > 0")

    @classmethod
    def zeros(cls, n, static_droop, a=2.0, synaptic_delay=0.0, **kw):
        return cls(np.zeros(n), np.zeros(n), np.zeros(n),
                   np.broadcast_to(np.asarray(static_droop, float), (n,)).copy(),
                   a, synaptic_delay, **kw)

    @property
    def floor(self):
        return (self.min_droop_fraction - 1.0) * self.static_droop

    @property
    def effective_droop(self):
        return self.static_droop + self.delta_r

    def droop_change(self, dw) -> np.ndarray:
        a = np.asarray(self.a, dtype=float)
        return -(a @ dw) if a.ndim == 2 else -a * dw

    def advance_to(self, t) -> PlasticityState:
        """Apply every queued droop change whose delay has elapsed by ``t``."""
        if not self.pending or self.pending[0][0] > t + 1e-12:
            return self
        dr = self.delta_r.copy()
        rest = list(self.pending)
        while rest and rest[0][0] <= t + 1e-12:
            dr = np.maximum(dr + rest.pop(0)[1], self.floor)
        return replace(self, delta_r=dr, pending=tuple(rest))


def apply_weight_to_droop(state: PlasticityState, dw, t) -> PlasticityState:
    """Record a weight change and schedule its droop effect after the synaptic delay.

    The droop falls by ``a * dw`` and is clamped so it never drops below the
    configured fraction of the static value.
    """
    dw = np.asarray(dw, dtype=float)
    if dw.shape != state.w.shape:
        raise ValidationError("weight update has the wrong shape")
    if not np.all(np.isfinite(dw)):
        raise ValidationError("weight update is not finite")
    new = replace(state, w=state.w + dw, dw=dw.copy(),
                  pending=state.pending + ((t + state.synaptic_delay, state.droop_change(dw)),))
    return new.advance_to(t)


# -- Hebbian analysis --------------------------------------------------------

@dataclass(frozen=True)
class HebbianParams:
    eta: float
    p_total: float | None = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ValidationError("eta must be > 0")
        if self.p_total is not None and not self.p_total > 0:
            raise ValidationError("p_total must be > 0")

    @property
    def effective_eta(self):
        return self.eta if self.p_total is None else self.eta / self.p_total


def hebbian_rate(w, x, eta) -> np.ndarray:
    """Plain Hebbian drift for a linear neuron with output ``w . x``."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    if w.shape != x.shape:
        raise ValidationError(f"weight and input sizes differ: {w.shape} vs {x.shape}")
    return eta * x * float(w @ x)


def _require_psd(c):
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValidationError("correlation matrix must be square")
    if not np.allclose(c, c.T, atol=1e-9):
        raise ValidationError("correlation matrix must be symmetric")
    lam = np.linalg.eigvalsh(c)
    if lam[0] < -1e-9 * max(1.0, abs(lam[-1])):
        raise ValidationError("correlation matrix must be positive semidefinite")
    return lam


@dataclass(frozen=True)
class HebbianTrajectory:
    times: np.ndarray
    weights: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.weights[-1]


def hebbian_trajectory(c, y, w0, eta, horizon, dt=None, overflow=1e150,
                       record_every=None) -> HebbianTrajectory:
    """Forward-Euler integration of the linear Hebbian system ``dw/dt = eta C Y w``.

    ``y=None`` stands for the identity. Because the system is linear the
    Euler map is a fixed matrix, so blocks of steps are taken as matrix powers.
    """
    c = np.asarray(c, dtype=float)
    _require_psd(c)
    n = c.shape[0]
    y = np.eye(n) if y is None else np.asarray(y, dtype=float)
    w = np.asarray(w0, dtype=float).copy()
    if y.shape != c.shape or w.shape != (n,):
        raise ValidationError("dimension mismatch between C, Y and w0")
    if not (eta > 0 and horizon > 0):
        raise ValidationError("eta and horizon must be > 0")
    a = eta * c @ y
    if dt is None:
        rho = max(float(np.max(np.abs(np.linalg.eigvals(a)))), 1e-12)
        dt = min(horizon / 1000, 1e-3 / rho)
    steps = max(1, int(round(horizon / dt)))
    block = record_every or max(1, steps // 1000)
    euler = np.eye(n) + dt * a
    power = np.linalg.matrix_power(euler, block)
    times, weights = [0.0], [w.copy()]
    done = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while done < steps:
            k = min(block, steps - done)
            w = (power if k == block else np.linalg.matrix_power(euler, k)) @ w
            done += k
            if not np.all(np.isfinite(w)) or np.max(np.abs(w)) > overflow:
                raise DivergenceError("Hebbian weights exceeded the overflow guard", done * dt)
            times.append(done * dt)
            weights.append(w.copy())
    return HebbianTrajectory(np.array(times), np.array(weights))


def principal_component_check(c, w_final) -> float:
    """|cos| of the angle between ``w_final`` and the dominant eigenvector of ``c``."""
    c = np.asarray(c, dtype=float)
    w = np.asarray(w_final, dtype=float)
    norm = np.linalg.norm(w)
    if not norm > 0:
        raise ValidationError("weight vector must be nonzero")
    _require_psd(c)
    lam, vec = np.linalg.eigh(c)
    if lam.size > 1 and lam[-1] - lam[-2] < 1e-9:
        raise IndeterminateError("dominant eigenvalue is degenerate")
    return min(1.0, abs(float(vec[:, -1] @ w)) / norm)
