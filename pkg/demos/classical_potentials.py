"""The six classical dual potentials, each written as a fixed-weight network.

For a uniaxial and a hydrostatic stress, print omega* and the trace of the
flow direction: deviatoric potentials give no volume change. Run:
python3 demos/classical_potentials.py
"""

import numpy as np

from icann.potential import classical_config, domega_dSigma, omega_eval

CONSTANTS = {
    "von_mises": {},
    "drucker_prager": {"xi": 0.3},
    "bresler_pister": {"zeta1": -0.2, "zeta2": 0.5},
    "stassi": {"sigma_c": 2.0, "sigma_t": 1.0},
    "quadratic": {"mu": 25.0, "kappa": 50.0},
    "principal": {},
}
uniaxial = np.diag([1.0, 0.0, 0.0])
hydro = np.eye(3)

print(f"{'potential':>15} {'omega(uni)':>11} {'tr D(uni)':>10} {'omega(hyd)':>11} {'tr D(hyd)':>10}")
for kind, c in CONSTANTS.items():
    p = classical_config(kind, **c)
    row = []
    for s in (uniaxial, hydro):
        row += [float(omega_eval(p, s)), float(np.trace(domega_dSigma(p, s)))]
    print(f"{kind:>15} " + " ".join(f"{x:11.6f}" for x in row))
