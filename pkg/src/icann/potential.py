"""
Dual potential omega*(Sigma) as an input-convex feed-forward network.

Layout (316 trainable scalars)::

    z (5)  ->  layer I (18)  ->  layer II (8)  ->  layer III (8)  ->  max(., 0)  ->  omega*
           W0             W1              W2                    (no weights)   w_out

Layer I neurons 0-5 are ``x``, 6-11 are ``|x|^(p1+1)`` and 12-17 are
``ln(cosh(|x|^(p2+1)))``. In layers II and III neurons 0-3 are ``max(x + b, 0)``
with non-positive biases ``b1``/``b2`` and neurons 4-7 are ``exp(x) - 1``.
Non-negativity of ``W1``, ``W2``, ``w_out`` together with non-decreasing convex
activations behind layer I make omega* convex in z; all activations vanish at
zero and the last max layer makes it non-negative.
"""

import math
from typing import NamedTuple

import jax.numpy as jnp
import numpy as np

from .autodiff import abs0, relu, sign0, step
from .tensor3 import (
    deviator,
    invariant_gradients,
    invariant_vector,
    invariants,
    smoothed_cbrt_deriv,
    smoothed_sqrt_deriv,
)

N_POTENTIAL_PARAMS = 316

#: smoothing of |x|^(a+1); the offset is applied as |x| + EPS_POW1 + EPS_POW2
EPS_POW1 = 1e-4
EPS_POW2 = 1e-4

_LN2 = math.log(2.0)


class InvalidConstant(ValueError):
    """A classical potential was requested with inadmissible material constants."""


class PotentialParams(NamedTuple):
    W0: jnp.ndarray  # (18, 5) unconstrained
    W1: jnp.ndarray  # (8, 18) >= 0
    W2: jnp.ndarray  # (8, 8) >= 0
    w_out: jnp.ndarray  # (8,) >= 0
    b1: jnp.ndarray  # (4,) <= 0
    b2: jnp.ndarray  # (4,) <= 0
    p1: jnp.ndarray  # () >= 0
    p2: jnp.ndarray  # () >= 0

    def omega(self, Sigma):
        return omega_eval(self, Sigma)

    def domega(self, Sigma):
        return domega_dSigma(self, Sigma)


def zero_potential_params():
    return PotentialParams(
        jnp.zeros((18, 5)), jnp.zeros((8, 18)), jnp.zeros((8, 8)), jnp.zeros(8),
        jnp.zeros(4), jnp.zeros(4), jnp.asarray(0.0), jnp.asarray(0.0),
    )  # fmt: skip


def project_constraints(p):
    """Clamp every constrained group back into its admissible set; ``W0`` is untouched."""
    return PotentialParams(
        p.W0,
        jnp.maximum(p.W1, 0.0),
        jnp.maximum(p.W2, 0.0),
        jnp.maximum(p.w_out, 0.0),
        jnp.minimum(p.b1, 0.0),
        jnp.minimum(p.b2, 0.0),
        jnp.maximum(p.p1, 0.0),
        jnp.maximum(p.p2, 0.0),
    )


def potential_to_vector(p):
    return jnp.concatenate(
        [p.W0.ravel(), p.W1.ravel(), p.W2.ravel(), p.w_out, p.b1, p.b2,
         jnp.reshape(p.p1, (1,)), jnp.reshape(p.p2, (1,))]
    )  # fmt: skip


def potential_from_vector(v):
    v = jnp.asarray(v)
    return PotentialParams(
        v[0:90].reshape(18, 5), v[90:234].reshape(8, 18), v[234:298].reshape(8, 8),
        v[298:306], v[306:310], v[310:314], v[314], v[315],
    )  # fmt: skip


# --------------------------------------------------------------------------
# activations


def power_act(x, p):
    """Smoothed ``|x|^(p+1)`` shifted to vanish at zero."""
    eps = EPS_POW1 + EPS_POW2
    a = p + 1.0
    return jnp.exp(a * jnp.log(abs0(x) + eps)) - jnp.exp(a * jnp.log(eps))


def power_act_deriv(x, p):
    eps = EPS_POW1 + EPS_POW2
    a = p + 1.0
    return a * jnp.exp(p * jnp.log(abs0(x) + eps)) * sign0(x)


def logcosh(y):
    ay = abs0(y)
    return ay + jnp.log1p(jnp.exp(-2.0 * ay)) - _LN2


# --------------------------------------------------------------------------
# network


def _forward(p, z):
    a0 = z @ p.W0.T
    h1 = power_act(a0[..., 6:12], p.p1)
    h2 = power_act(a0[..., 12:18], p.p2)
    x1 = jnp.concatenate([a0[..., 0:6], h1, logcosh(h2)], axis=-1)
    a1 = x1 @ p.W1.T
    y1 = jnp.concatenate([relu(a1[..., 0:4] + p.b1), jnp.expm1(a1[..., 4:8])], axis=-1)
    a2 = y1 @ p.W2.T
    y2 = jnp.concatenate([relu(a2[..., 0:4] + p.b2), jnp.expm1(a2[..., 4:8])], axis=-1)
    omega = relu(y2) @ p.w_out
    return omega, (a0, h2, a1, a2, y2)


def omega_from_z(p, z):
    """Evaluate the network on an invariant vector (or a batch of them)."""
    return _forward(p, jnp.asarray(z, dtype=float))[0]


def _times(g, d):
    # 0 * inf -> 0 for saturated exponential neurons
    return jnp.where(g == 0.0, 0.0, g * d)


def domega_dz(p, z):
    """Hand-written backward pass of :func:`omega_from_z`."""
    z = jnp.asarray(z, dtype=float)
    _, (a0, h2, a1, a2, y2) = _forward(p, z)
    g_y2 = p.w_out * step(y2)
    g_a2 = _times(g_y2, jnp.concatenate([step(a2[..., 0:4] + p.b2), jnp.exp(a2[..., 4:8])], axis=-1))
    g_y1 = g_a2 @ p.W2
    g_a1 = _times(g_y1, jnp.concatenate([step(a1[..., 0:4] + p.b1), jnp.exp(a1[..., 4:8])], axis=-1))
    g_x1 = g_a1 @ p.W1
    g_a0 = jnp.concatenate(
        [
            g_x1[..., 0:6],
            g_x1[..., 6:12] * power_act_deriv(a0[..., 6:12], p.p1),
            g_x1[..., 12:18] * jnp.tanh(h2) * power_act_deriv(a0[..., 12:18], p.p2),
        ],
        axis=-1,
    )
    return g_a0 @ p.W0


def omega_eval(p, Sigma):
    """Dual potential at the Mandel-like stress ``Sigma``."""
    return omega_from_z(p, invariant_vector(jnp.asarray(Sigma, dtype=float)))


def chain_invariants(Sigma, g):
    """Map ``d omega / d z`` to ``d omega / d Sigma`` through the smoothed invariants."""
    i1, j2, j3, i2, i3 = invariants(Sigma)
    j2 = jnp.maximum(j2, 0.0)
    scale = jnp.stack(
        [
            jnp.ones_like(i1),
            smoothed_sqrt_deriv(j2),
            smoothed_cbrt_deriv(j3),
            smoothed_sqrt_deriv(i2),
            smoothed_cbrt_deriv(i3),
        ],
        axis=-1,
    )
    c = g * scale
    dI1, dJ2, dJ3, dI2, dI3 = invariant_gradients(Sigma)
    s = lambda k: c[..., k, None, None]
    return s(0) * dI1 + s(1) * dJ2 + s(2) * dJ3 + s(3) * dI2 + s(4) * dI3


def domega_dSigma(p, Sigma):
    """Inelastic rate ``D = d omega*/d Sigma`` (analytic chain rule)."""
    Sigma = jnp.asarray(Sigma, dtype=float)
    z = invariant_vector(Sigma)
    return chain_invariants(Sigma, domega_dz(p, z))


# --------------------------------------------------------------------------
# classical potentials expressed through the network weights
#
# Only the reduced sub-network is populated: identity neuron 0 and power
# neurons 6, 7 of layer I (p1 = 1, i.e. squares), max neuron 0 in layers II and
# III, and w_out[0] = 1. Reduced inputs (I1, sqrt J2, sqrt I2) sit in columns
# 0, 1, 3 of W0.

_REDUCED_ROWS = (0, 6, 7)
_REDUCED_COLS = (0, 1, 3)
SQRT3 = math.sqrt(3.0)

CLASSICAL_KINDS = ("von_mises", "drucker_prager", "bresler_pister", "stassi", "quadratic", "principal")


def _reduced(w0_reduced, w_layer2):
    W0 = np.zeros((18, 5))
    W1 = np.zeros((8, 18))
    W2 = np.zeros((8, 8))
    w_out = np.zeros(8)
    for r, row in zip(_REDUCED_ROWS, w0_reduced):
        for c, val in zip(_REDUCED_COLS, row):
            W0[r, c] = val
    for r, val in zip(_REDUCED_ROWS, w_layer2):
        W1[0, r] = val
    W2[0, 0] = 1.0
    w_out[0] = 1.0
    return PotentialParams(
        jnp.asarray(W0), jnp.asarray(W1), jnp.asarray(W2), jnp.asarray(w_out),
        jnp.zeros(4), jnp.zeros(4), jnp.asarray(1.0), jnp.asarray(0.0),
    )  # fmt: skip


def drucker_prager_xi(sigma_c, sigma_t):
    return (sigma_c - sigma_t) / (sigma_c + sigma_t)


def classical_config(kind, **constants):
    """Weights that make the network reproduce a classical dual potential.

    ``kind`` and its constants:

    - ``von_mises``: none, ``sqrt(3 J2)``
    - ``drucker_prager``: ``xi`` or ``sigma_c``/``sigma_t``, ``sqrt(3 J2) + xi I1``
    - ``bresler_pister``: ``zeta1``, ``zeta2 >= 0``, adds ``zeta2 I1^2``
    - ``stassi``: ``sigma_c``, ``sigma_t``, ``3 J2 + (sigma_c - sigma_t) I1``
    - ``quadratic``: ``mu``, ``kappa``, ``J2 / (4 mu) + I1^2 / (18 kappa)``
    - ``principal``: none, ``I1 + sqrt(I2)``

    The network evaluates smoothed roots and smoothed powers, and clips the
    result at zero, so agreement with the textbook formulas is approximate.
    """
    if kind == "von_mises":
        return _reduced([(0, 1, 0), (0, 0, 0), (0, 0, 0)], (SQRT3, 0, 0))
    if kind == "drucker_prager":
        if "xi" in constants:
            xi = constants["xi"]
        else:
            xi = drucker_prager_xi(constants["sigma_c"], constants["sigma_t"])
        return _reduced([(xi, SQRT3, 0), (0, 0, 0), (0, 0, 0)], (1, 0, 0))
    if kind == "bresler_pister":
        zeta1, zeta2 = constants["zeta1"], constants["zeta2"]
        if zeta2 < 0:
            raise InvalidConstant(f"zeta2 must be non-negative, got {zeta2}")
        return _reduced([(zeta1, SQRT3, 0), (1, 0, 0), (0, 0, 0)], (1, zeta2, 0))
    if kind == "stassi":
        diff = constants["sigma_c"] - constants["sigma_t"]
        return _reduced([(diff, 0, 0), (0, SQRT3, 0), (0, 0, 0)], (1, 1, 0))
    if kind == "quadratic":
        mu, kappa = constants["mu"], constants["kappa"]
        if mu <= 0 or kappa <= 0:
            raise InvalidConstant("mu and kappa must be positive")
        return _reduced([(0, 0, 0), (1, 0, 0), (0, 1, 0)], (0, 1.0 / (18.0 * kappa), 0.25 / mu))
    if kind == "principal":
        return _reduced([(1, 0, 1), (0, 0, 0), (0, 0, 0)], (1, 0, 0))
    raise ValueError(f"unknown classical potential {kind!r}")


# --------------------------------------------------------------------------
# analytic potentials for data generation


class ZeroPotential(NamedTuple):
    """No inelastic flow; the branch is a pure spring."""

    def omega(self, Sigma):
        return jnp.zeros(jnp.shape(Sigma)[:-2])

    def domega(self, Sigma):
        return jnp.zeros_like(Sigma)


class CoshJ3Potential(NamedTuple):
    """``K1 (cosh(J3 / (J2 + 1)) - 1)``."""

    K1: float

    def omega(self, Sigma):
        _, j2, j3, _, _ = invariants(Sigma)
        return self.K1 * (jnp.cosh(j3 / (j2 + 1.0)) - 1.0)

    def domega(self, Sigma):
        _, j2, j3, _, _ = invariants(Sigma)
        s = deviator(Sigma)
        q = j3 / (j2 + 1.0)
        dq = deviator(s @ s) / (j2 + 1.0)[..., None, None] - (j3 / (j2 + 1.0) ** 2)[..., None, None] * s
        return (self.K1 * jnp.sinh(q))[..., None, None] * dq


class QuadraticPotential(NamedTuple):
    """``K1 (2 J2) + K2 I2^2``."""

    K1: float
    K2: float

    def omega(self, Sigma):
        _, j2, _, i2, _ = invariants(Sigma)
        return 2.0 * self.K1 * j2 + self.K2 * i2 * i2

    def domega(self, Sigma):
        i2 = invariants(Sigma)[3]
        return 2.0 * self.K1 * deviator(Sigma) + (2.0 * self.K2 * i2)[..., None, None] * Sigma
