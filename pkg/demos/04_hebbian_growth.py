"""
Plain Hebbian growth finds the principal component
==================================================

With linear neurons and a plain correlation rule the weight vector grows
without bound, but its direction converges to the dominant eigenvector of
the input correlation matrix.
"""

import numpy as np

from spikedroop.errors import DivergenceError
from spikedroop.plasticity import hebbian_trajectory, principal_component_check

rng = np.random.default_rng(1)
x = rng.normal(size=(2000, 3)) @ np.array([[2.0, 0.5, 0.0], [0.0, 1.0, 0.3], [0.0, 0.0, 0.4]])
c = x.T @ x / len(x)
print("eigenvalues of C:", np.round(np.linalg.eigvalsh(c), 3))

traj = hebbian_trajectory(c, None, [0.1, -0.4, 0.9], eta=1.0, horizon=6.0, record_every=2500)
for t, w in zip(traj.times, traj.weights):
    print(f"t = {t:4.2f}  |w| = {np.linalg.norm(w):10.3e}  "
          f"alignment {principal_component_check(c, w):.6f}")

# the norm keeps growing exponentially; a long enough run overflows
try:
    hebbian_trajectory(c, None, [1.0, 1.0, 1.0], eta=1.0, horizon=200.0)
except DivergenceError as exc:
    print("long run:", exc)
