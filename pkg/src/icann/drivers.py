"""
Deformation paths and stress-controlled drivers.

The multiaxial training path is a fixed piecewise-linear surrogate (see
``TRAINING_BREAKPOINTS``) with tension and compression, in-plane shear, holds
and two load cycles. Uniaxial drivers either solve the lateral stretches for a
traction-free lateral surface or assume incompressibility and eliminate the
hydrostatic pressure.
"""

from typing import NamedTuple

import numpy as np

from .material import NoConvergence, evaluate_path, initial_state, step
from .tensor3 import inv3

# t [min], F11, F22, F12, F21
TRAINING_BREAKPOINTS = np.array(
    [
        [0.0, 1.00, 1.00, 0.00, 0.00],
        [2.5, 1.50, 1.00, 0.20, 0.00],
        [3.5, 1.50, 1.00, 0.20, 0.00],  # relaxation hold
        [5.0, 0.80, 1.20, -0.20, 0.15],
        [6.0, 0.80, 1.20, -0.20, 0.15],  # hold in compression
        [8.0, 1.60, 0.90, 0.30, -0.30],  # cycle 1
        [10.0, 0.85, 1.10, -0.30, 0.30],
        [11.0, 0.85, 1.10, -0.30, 0.30],
        [13.0, 1.40, 0.95, 0.10, -0.20],  # cycle 2
        [15.0, 1.00, 1.05, -0.10, 0.10],
        [17.0, 1.00, 1.00, 0.00, 0.00],
    ]
)

# t [min], lambda
UNIAXIAL_BREAKPOINTS = np.array(
    [
        [0.0, 1.0],
        [3.0, 1.5],
        [5.0, 1.5],  # relaxation hold
        [7.0, 1.0],
        [9.5, 1.3],
        [12.0, 0.9],
        [15.96, 1.0],
    ]
)

NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-10
FD_STEP = 1e-7


class LoadPath(NamedTuple):
    t: np.ndarray  # (N,)
    F: np.ndarray  # (N, 3, 3)
    time_unit: str = "min"
    dt_policy: str = "uniform"

    @property
    def C(self):
        return np.swapaxes(self.F, -1, -2) @ self.F

    def __len__(self):
        return len(self.t)


def _grid(dt, t_end):
    n = int(round(t_end / dt)) + 1
    return np.arange(n) * dt


def surrogate_training_path(dt=0.05, t_end=17.0):
    """Multiaxial training path; 341 samples at the defaults."""
    t = _grid(dt, t_end)
    bp = TRAINING_BREAKPOINTS
    F = np.tile(np.eye(3), (t.size, 1, 1))
    F[:, 0, 0] = np.interp(t, bp[:, 0], bp[:, 1])
    F[:, 1, 1] = np.interp(t, bp[:, 0], bp[:, 2])
    F[:, 0, 1] = np.interp(t, bp[:, 0], bp[:, 3])
    F[:, 1, 0] = np.interp(t, bp[:, 0], bp[:, 4])
    return LoadPath(t, F)


def uniaxial_test_stretch(dt=0.06, n=267):
    """Stretch history ``(t, lambda)`` of the uniaxial test: ramp, hold, unload, one cycle."""
    t = np.arange(n) * dt
    bp = UNIAXIAL_BREAKPOINTS
    return t, np.interp(t, bp[:, 0], bp[:, 1])


def _diag_F(lam, f22, f33):
    return np.diag([lam, f22, f33])


def uniaxial_test_driver(m, t, lam, integrator="explicit", tol=NEWTON_TOL):
    """Drive ``F11 = lambda(t)`` with ``S22 = S33 = 0`` and no shear.

    The lateral stretches are independent unknowns, solved at every step by a
    damped Newton iteration with a forward-difference Jacobian, warm-started
    from the previous step. Returns ``(LoadPath, S)`` with ``S`` of shape
    ``(N, 3, 3)``.
    """
    t = np.asarray(t, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("stretch must be positive")
    state = initial_state(m)
    x = np.ones(2)
    F_hist = np.empty((t.size, 3, 3))
    S_hist = np.empty((t.size, 3, 3))

    def trial(k, x, dt):
        F = _diag_F(lam[k], x[0], x[1])
        new, S = step(m, state, F.T @ F, dt, integrator)
        return new, np.asarray(S)

    for k in range(t.size):
        dt = 0.0 if k == 0 else t[k] - t[k - 1]
        new, S = trial(k, x, dt)
        r = np.array([S[1, 1], S[2, 2]])
        for it in range(NEWTON_MAX_ITER + 1):
            if np.max(np.abs(r)) <= tol * max(1.0, abs(S[0, 0])):
                break
            if it == NEWTON_MAX_ITER:
                raise NoConvergence("lateral stress Newton iteration cap reached", k)
            J = np.empty((2, 2))
            for j in range(2):
                xp = x.copy()
                xp[j] += FD_STEP
                _, Sp = trial(k, xp, dt)
                J[:, j] = (np.array([Sp[1, 1], Sp[2, 2]]) - r) / FD_STEP
            dx = np.linalg.solve(J, -r)
            alpha = 1.0
            while True:
                x_try = x + alpha * dx
                if np.all(x_try > 0):
                    new_try, S_try = trial(k, x_try, dt)
                    r_try = np.array([S_try[1, 1], S_try[2, 2]])
                    if np.linalg.norm(r_try) < np.linalg.norm(r) or alpha < 1e-4:
                        break
                alpha *= 0.5
            x, new, S, r = x_try, new_try, S_try, r_try
        state = new
        F_hist[k] = _diag_F(lam[k], x[0], x[1])
        S_hist[k] = S
    return LoadPath(t, F_hist), S_hist


def incompressible_kinematics(lam):
    lam = np.asarray(lam, dtype=float)
    F = np.zeros((lam.size, 3, 3))
    F[:, 0, 0] = lam
    F[:, 1, 1] = F[:, 2, 2] = lam**-0.5
    return F


def pressure_eliminated_s11(S, C):
    """Uniaxial ``S11`` of an incompressible material from the unconstrained model stress.

    The total stress is ``S - p C^-1``; ``p`` follows from ``S22 = 0`` as
    ``p = S22 C22`` (``C`` is diagonal), hence ``S11 = S11 - p / C11``.
    Works on NumPy and JAX arrays.
    """
    c_inv = inv3(C)
    p = S[..., 1, 1] / c_inv[..., 1, 1]
    return S[..., 0, 0] - p * c_inv[..., 0, 0]


def incompressible_uniaxial_driver(m, t, lam, integrator="explicit"):
    """``S11(t)`` for ``F = diag(lambda, lambda^-1/2, lambda^-1/2)`` with pressure elimination."""
    t = np.asarray(t, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("stretch must be positive")
    F = incompressible_kinematics(lam)
    C = np.swapaxes(F, -1, -2) @ F
    S = evaluate_path(m, t, C, integrator)
    return np.asarray(pressure_eliminated_s11(S, C))
