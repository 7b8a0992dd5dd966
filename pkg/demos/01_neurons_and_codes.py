"""
A droop source as a leaky integrate-and-fire neuron
====================================================

Constant current into an RC membrane, the closed-form first-spike time,
and the three spike codes the controller chooses between.
"""

import numpy as np

from spikedroop.coding import (BurstCodingParams, LatencyCodingParams, RateCodingParams,
                               burst_encode, find_bursts, latency_encode, rate_encode)
from spikedroop.neuron import LifParams, run_constant_input

# a 1 ohm, 10 mF membrane: tau = 10 ms
dt = 1e-4
for current in (0.5, 1.0):
    for threshold in (0.4, 0.8):
        p = LifParams(membrane_resistance=1.0, membrane_capacitance=0.01, threshold=threshold)
        spikes = run_constant_input(current, p, dt, 0.5)
        isi = f"{np.mean(np.diff(spikes)) * 1e3:5.2f} ms" if len(spikes) > 1 else "   -    "
        print(f"I = {current:.1f} A, V_th = {threshold:.1f} V: {len(spikes):3d} spikes, ISI {isi}")

# 0.5 A can only lift the membrane to 0.5 V, so the 0.8 V neuron never fires.
# Stronger drive reaches threshold sooner; the delay has a closed form.
print()
lat = LatencyCodingParams(tau=0.01, v_th=0.4)
for current in (0.45, 0.6, 1.0, 3.0):
    p = LifParams(membrane_resistance=1.0, membrane_capacitance=0.01, threshold=0.4)
    stepped = run_constant_input(current, p, 1e-6, 0.1)[0]
    print(f"I = {current:.2f} A: first spike {latency_encode(current, 1.0, lat) * 1e3:6.3f} ms "
          f"(stepped {stepped * 1e3:6.3f} ms)")

# Rate coding fires whenever the voltage slope lags the scaled error.  A
# burst code multiplies the gain after every spike, so once started it keeps
# firing until the error falls back inside the deadband.
print()
t = np.arange(0, 0.05, 1e-3)
error = 2.0 * np.exp(-t / 0.01) - 0.2
v_dot = -40 * np.exp(-t / 0.01) + 30
rate = rate_encode(v_dot, error, RateCodingParams(), 1e-3)
burst, gains = burst_encode(v_dot, error, RateCodingParams(), BurstCodingParams(), 1e-3)
print(f"rate code : {len(rate.times)} spikes")
print(f"burst code: {len(burst.times)} spikes in {len(find_bursts(burst, 1e-3))} burst(s), "
      f"peak gain multiplier {gains.max():.3g}")
