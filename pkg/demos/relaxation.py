"""Stress relaxation of the Example-1 material on the uniaxial test path.

Prints S11 at a few points of the ramp, the hold and the unloading, for the
explicit and the implicit integrator. Run: python3 demos/relaxation.py
"""

import numpy as np

from icann.datasets import example1
from icann.drivers import uniaxial_test_driver, uniaxial_test_stretch

t, lam = uniaxial_test_stretch()
m = example1().model()
_, S_exp = uniaxial_test_driver(m, t, lam, "explicit")
_, S_imp = uniaxial_test_driver(m, t, lam, "implicit")

print(f"{'t [min]':>8} {'lambda':>7} {'S11 explicit':>13} {'S11 implicit':>13}")
for k in np.linspace(0, len(t) - 1, 12).astype(int):
    print(f"{t[k]:8.2f} {lam[k]:7.3f} {S_exp[k, 0, 0]:13.6f} {S_imp[k, 0, 0]:13.6f}")

hold = (t >= 3.0) & (t <= 5.0)
print(f"\nduring the hold at lambda = 1.5 the stress drops from {S_exp[hold, 0, 0][0]:.4f} "
      f"to {S_exp[hold, 0, 0][-1]:.4f}")
