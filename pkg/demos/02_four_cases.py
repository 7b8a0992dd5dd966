"""
Four closed-loop experiments on the ring microgrid
==================================================

Four sources on a four-bus ring share a load that steps up at 1 s and back
down at 5 s, with a dip in source 1's input at 2 s. The cases differ in
which spike code drives which channel; in the last one source 3 leaves the
grid at 4 s.

Pass an output directory to also write the CSV traces for plotting.
"""

import sys

import numpy as np

from spikedroop.cli import emit_trace
from spikedroop.config import SystemConfig
from spikedroop.scenarios import run_scenario, scenario_config

system = SystemConfig()
out = sys.argv[1] if len(sys.argv) > 1 else None

for case in ("case_i", "case_ii", "case_iii", "case_iv"):
    log, m = run_scenario(scenario_config(case, system), system)
    print(f"{case}:")
    print(f"  mean bus voltage   {m.mean_voltage:8.2f} V")
    print(f"  sharing error      {m.sharing_error:8.2%}")
    print(f"  oscillation index  {m.oscillation_index:8.3f}  ({m.dominant_frequency:.2f} Hz)")
    if m.settle_times:
        print("  droop settles in   " + ", ".join(f"{s:.3f} s" for s in m.settle_times))
    # the final adaptive droop shows who ended up carrying what
    print("  final delta R      " + np.array2string(log.sample_delta_r[-1], precision=3))
    if out:
        emit_trace(log, f"{out}/{case}", m, system, {"scenario": case})

# Case I settles to a steady droop after every event. Swapping the codes (case
# II) and adding a 100 ms synaptic delay leaves the droop swinging at a few Hz.
# Burst coding (case III) reaches the same end point, and after source 3 drops
# out the other three pick up its share.
