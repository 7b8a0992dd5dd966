"""DC network: admittance matrix, droop power flow and averaged bus dynamics.

Every bus hosts one droop-controlled source behind an output capacitor.
A source that is offline injects nothing and its bus becomes a passive node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceError, NoSolutionError, TopologyError, ValidationError


@dataclass(frozen=True)
class TieLine:
    id: str
    from_bus: int
    to_bus: int
    resistance: float

    def __post_init__(self):
        if not self.resistance > 0:
            raise ValidationError(f"tie-line {self.id}: resistance must be > 0")
        if self.from_bus == self.to_bus:
            raise ValidationError(f"tie-line {self.id}: from_bus equals to_bus")


@dataclass(frozen=True)
class DerParams:
    output_capacitance: float
    static_droop: float
    rated_current: float | None = None
    max_voltage_dev: float | None = None
    share_ratio: float = 1.0
    meas_filter_tau: float = 0.0

    def __post_init__(self):
        if not self.output_capacitance > 0:
            raise ValidationError("output_capacitance must be > 0")
        if not self.static_droop > 0:
            raise ValidationError("static_droop must be > 0")
        if not self.share_ratio > 0:
            raise ValidationError("share_ratio must be > 0")
        if not self.meas_filter_tau >= 0:
            raise ValidationError("meas_filter_tau must be >= 0")
        if self.rated_current is not None and self.max_voltage_dev is not None:
            if not self.rated_current > 0:
                raise ValidationError("rated_current must be > 0")
            expected = self.max_voltage_dev / self.rated_current
            if abs(self.static_droop - expected) > 1e-9 * abs(expected):
                raise ValidationError(
                    f"static_droop {self.static_droop} != max_voltage_dev / rated_current = {expected}")


@dataclass(frozen=True)
class Topology:
    n_buses: int
    ties: tuple
    psi: np.ndarray | None = None
    loads: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "ties", tuple(self.ties))
        n = self.n_buses
        if n < 1:
            raise ValidationError("n_buses must be >= 1")
        for t in self.ties:
            for b in (t.from_bus, t.to_bus):
                if not 0 <= b < n:
                    raise ValidationError(f"tie-line {t.id}: bus {b} outside 0..{n - 1}")
        if not _connected(n, self.ties):
            raise TopologyError("network graph is not connected")
        if self.psi is not None:
            psi = np.asarray(self.psi, dtype=float)
            if psi.shape != (n, n):
                raise ValidationError(f"psi must be {n}x{n}")
            bad = np.flatnonzero(np.abs(psi.sum(axis=1) - 1.0) > 1e-9)
            if bad.size:
                raise ValidationError(f"psi row {int(bad[0]) + 1} sums to {psi[bad[0]].sum():.12g}, not 1")
            if np.any(psi < 0):
                raise ValidationError("psi entries must be >= 0")
            object.__setattr__(self, "psi", psi)
        loads = np.zeros(n) if self.loads is None else np.asarray(self.loads, dtype=float)
        if loads.shape != (n,):
            raise ValidationError(f"loads must have {n} entries")
        object.__setattr__(self, "loads", loads)


def _connected(n, ties):
    adj = {k: set() for k in range(n)}
    for t in ties:
        adj[t.from_bus].add(t.to_bus)
        adj[t.to_bus].add(t.from_bus)
    seen, stack = {0}, [0]
    while stack:
        for nb in adj[stack.pop()] - seen:
            seen.add(nb)
            stack.append(nb)
    return len(seen) == n


def ring_topology(resistances=(0.5, 0.25, 0.6, 0.8), psi=None, loads=None) -> Topology:
    """Four buses in a ring: a 1-4, b 2-3, c 3-4, d 1-2 (labels are one-based)."""
    ends = [(0, 3), (1, 2), (2, 3), (0, 1)]
    ties = [TieLine(name, a, b, r) for name, (a, b), r in zip("abcd", ends, resistances)]
    return Topology(4, ties, psi=psi, loads=loads)


def build_admittance(topology: Topology) -> np.ndarray:
    n = topology.n_buses
    y = np.zeros((n, n))
    for t in topology.ties:
        g = 1.0 / t.resistance
        i, j = t.from_bus, t.to_bus
        y[i, i] += g
        y[j, j] += g
        y[i, j] -= g
        y[j, i] -= g
    return y


def path_resistance(topology: Topology, src: int, dst: int) -> float:
    """Series resistance along the route with the fewest hops.

    Ties between equally short routes go to the one with the larger total
    resistance, i.e. the conservative estimate of the voltage drop.
    """
    if src == dst:
        return 0.0
    adj = {k: [] for k in range(topology.n_buses)}
    for t in topology.ties:
        adj[t.from_bus].append((t.to_bus, t.resistance))
        adj[t.to_bus].append((t.from_bus, t.resistance))
    best = None
    stack = [(src, (src,), 0.0)]
    while stack:
        node, path, r = stack.pop()
        if node == dst:
            key = (len(path), -r)
            if best is None or key < best[0]:
                best = (key, r)
            continue
        for nb, rl in adj[node]:
            if nb not in path:
                stack.append((nb, path + (nb,), r + rl))
    if best is None:
        raise TopologyError(f"no path from bus {src} to bus {dst}")
    return best[1]


@dataclass(frozen=True)
class PowerFlowResult:
    voltages: np.ndarray
    currents: np.ndarray


def _source_conductance(r_eff, online):
    r_eff = np.asarray(r_eff, dtype=float)
    online = np.asarray(online, dtype=bool)
    if r_eff.shape != online.shape:
        raise ValidationError("droop and online vectors differ in length")
    if np.any(r_eff[online] <= 0):
        raise ValidationError("effective droop must be > 0 for online sources")
    g = np.zeros_like(r_eff)
    g[online] = 1.0 / r_eff[online]
    return g


def solve_power_flow(y, v_ref, r_eff, loads, online) -> PowerFlowResult:
    """Steady-state nodal balance with droop sources and constant-current loads."""
    y = np.asarray(y, dtype=float)
    online = np.asarray(online, dtype=bool)
    if not online.any():
        raise NoSolutionError("no source is online")
    g = _source_conductance(r_eff, online)
    v_src = np.broadcast_to(np.asarray(v_ref, dtype=float), g.shape)
    loads = np.asarray(loads, dtype=float)
    # Solve for the drop below a common reference: the Laplacian annihilates
    # constants, and small unknowns keep the rounding error small.
    base = float(np.max(v_src[online]))
    try:
        a = y + np.diag(g)
        rhs = g * (base - v_src) + loads
        drop = np.linalg.solve(a, rhs)
        # one refinement pass removes the last-bit asymmetry of the elimination order
        drop = drop + np.linalg.solve(a, rhs - a @ drop)
    except np.linalg.LinAlgError as exc:
        raise NoSolutionError(str(exc)) from exc
    return PowerFlowResult(base - drop, g * (v_src - base + drop))


def kirchhoff_residual(y, result: PowerFlowResult, loads) -> np.ndarray:
    """Injected minus withdrawn current at every bus; zero for an exact solution."""
    return result.currents - np.asarray(loads, dtype=float) - np.asarray(y) @ result.voltages


def thevenin_resistance(y, r_eff, online) -> np.ndarray:
    """Driving-point resistance seen at each bus with all sources in place."""
    g = _source_conductance(r_eff, online)
    if not np.any(g > 0):
        raise NoSolutionError("no source is online")
    return np.diag(np.linalg.inv(np.asarray(y, dtype=float) + np.diag(g))).copy()


def synaptic_conductance(v_k, v_l, vm_k, vm_l, v_th, g_k, g_l, eps=1e-6) -> float:
    """Coupling conductance implied by two membranes; NaN when the buses coincide."""
    dv = v_k - v_l
    if abs(dv) <= eps:
        return math.nan
    return (g_k * (vm_k - v_th) - g_l * (vm_l - v_th)) / dv


@dataclass(frozen=True)
class GridState:
    time: float
    bus_voltage: np.ndarray
    der_current: np.ndarray
    filtered_current: np.ndarray
    online: np.ndarray

    @classmethod
    def initial(cls, voltages, currents, online=None, time=0.0):
        v = np.array(voltages, dtype=float)
        i = np.array(currents, dtype=float)
        on = np.ones(v.size, bool) if online is None else np.array(online, dtype=bool)
        i = np.where(on, i, 0.0)
        return cls(time, v, i, i.copy(), on)

    def with_online(self, online):
        on = np.array(online, dtype=bool)
        return replace(self, online=on, der_current=np.where(on, self.der_current, 0.0),
                       filtered_current=np.where(on, self.filtered_current, 0.0))


@dataclass
class GridModel:
    """Precomputed network and source parameters for fast stepping."""

    topology: Topology
    ders: list
    v_ref: float = 315.0
    max_dt: float = 1e-3
    voltage_limit: float = math.inf
    y: np.ndarray = field(init=False)
    capacitance: np.ndarray = field(init=False)
    static_droop: np.ndarray = field(init=False)
    filter_tau: np.ndarray = field(init=False)

    def __post_init__(self):
        if len(self.ders) != self.topology.n_buses:
            raise ValidationError("need exactly one source per bus")
        self.y = build_admittance(self.topology)
        self.capacitance = np.array([d.output_capacitance for d in self.ders])
        self.static_droop = np.array([d.static_droop for d in self.ders])
        self.filter_tau = np.array([d.meas_filter_tau for d in self.ders])

    @property
    def n(self):
        return self.topology.n_buses

    def effective_droop(self, delta_r):
        return self.static_droop + np.asarray(delta_r, dtype=float)

    def steady_state(self, delta_r, loads, online=None, time=0.0) -> GridState:
        on = np.ones(self.n, bool) if online is None else np.asarray(online, dtype=bool)
        res = solve_power_flow(self.y, self.v_ref, self.effective_droop(delta_r), loads, on)
        return GridState.initial(res.voltages, res.currents, on, time)

    def advance(self, v, i_src, i_filt, online, r_eff, loads, dt, scale=1.0):
        """One explicit step on raw arrays; returns new ``(v, i_src, i_filt)``."""
        src = np.where(online, i_src, 0.0)
        v_new = v + dt * (src - self.y @ v - loads) / self.capacitance
        g = np.where(online, 1.0 / r_eff, 0.0)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            decay = np.exp(-dt / self.filter_tau)
        # sources respond to the freshly updated voltage (semi-implicit Euler);
        # a zero time constant makes them algebraic
        target = scale * g * (self.v_ref - v_new)
        i_new = np.where(self.filter_tau > 0, target + (src - target) * decay, target)
        i_new = np.where(online, i_new, 0.0)
        f_new = np.where(self.filter_tau > 0, i_new + (i_filt - i_new) * decay, i_new)
        return v_new, i_new, np.where(online, f_new, 0.0)

    def check(self, v, t):
        if not np.all(np.isfinite(v)):
            raise DivergenceError("non-finite bus voltage", t)
        if np.max(np.abs(v)) > self.voltage_limit:
            raise DivergenceError("bus voltage beyond divergence limit", t)


def step_dynamics(state: GridState, model: GridModel, delta_r, loads, dt,
                  source_scale=1.0) -> GridState:
    if not dt > 0:
        raise ValidationError("dt must be > 0")
    if dt > model.max_dt:
        raise ValidationError(f"dt {dt} exceeds the configured maximum {model.max_dt}")
    model.check(state.bus_voltage, state.time)
    v, i, f = model.advance(state.bus_voltage, state.der_current, state.filtered_current,
                            state.online, model.effective_droop(delta_r),
                            np.asarray(loads, dtype=float), dt, source_scale)
    t = state.time + dt
    model.check(v, t)
    return GridState(t, v, i, f, state.online.copy())
