"""
Helmholtz free-energy network psi(Ce) and its analytic derivative.

Inputs are the isochoric invariants of the elastic stretch, shifted so that they
vanish at the identity, and the determinant::

    i1t = I1~ - 3,   i2t = (I2~)^(3/2) - 3^(3/2),   i3 = det Ce

The first layer forms ``(i1t, i1t^2, i2t, i2t^2)``. Each of these feeds one
weight-free identity node and one ``exp(w x) - 1`` node with a trainable inner
weight, and ``i3`` feeds the volumetric node ``x^p3 - 1 - ln(x^p3)``. The nine
second-layer outputs are combined by the non-negative weights ``w_psi``::

    w_psi[0:4]  identity nodes of (i1t, i1t^2, i2t, i2t^2)
    w_psi[4:8]  exponential nodes of the same four inputs
    w_psi[8]    volumetric node
"""

from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from .tensor3 import NotPositiveDefinite, det3, inv3, sym, trace

N_ENERGY_PARAMS = 14
P3_MIN = 1e-3


class EnergyParams(NamedTuple):
    w_inner: jnp.ndarray  # (4,) >= 0
    w_psi: jnp.ndarray  # (9,) >= 0
    p3: jnp.ndarray  # () >= P3_MIN

    def psi(self, Ce):
        return psi_eval(self, Ce)

    def dpsi(self, Ce):
        return dpsi_dCe(self, Ce)


def zero_energy():
    return EnergyParams(jnp.zeros(4), jnp.zeros(9), jnp.asarray(1.0))


def neo_hooke_params(mu, kappa):
    """Network weights that reproduce the compressible Neo-Hooke energy of :class:`NeoHooke`."""
    w_psi = np.zeros(9)
    w_psi[0] = 0.5 * mu
    w_psi[8] = 0.25 * kappa
    return EnergyParams(jnp.zeros(4), jnp.asarray(w_psi), jnp.asarray(1.0))


def project_energy(p):
    return EnergyParams(
        jnp.maximum(p.w_inner, 0.0), jnp.maximum(p.w_psi, 0.0), jnp.maximum(p.p3, P3_MIN)
    )


def energy_to_vector(p):
    return jnp.concatenate([p.w_inner, p.w_psi, jnp.reshape(p.p3, (1,))])


def energy_from_vector(v):
    v = jnp.asarray(v)
    return EnergyParams(v[0:4], v[4:13], v[13])


def _check_det(Ce):
    if not isinstance(Ce, jax.core.Tracer) and np.any(np.linalg.det(np.asarray(Ce)) <= 0.0):
        raise NotPositiveDefinite("det(Ce) must be positive")


def _kinematics(Ce):
    i1 = trace(Ce)
    i3 = det3(Ce)
    i2 = 0.5 * (i1 * i1 - trace(Ce @ Ce))
    i1_iso = i1 * i3 ** (-1.0 / 3.0)
    i2_iso = i2 * i3 ** (-2.0 / 3.0)
    return i1, i2, i3, i1_iso, i2_iso


def _layer1(i1_iso, i2_iso):
    i1t = i1_iso - 3.0
    i2t = i2_iso**1.5 - 3.0**1.5
    return jnp.stack([i1t, i1t * i1t, i2t, i2t * i2t], axis=-1)


def psi_eval(p, Ce):
    """Free energy of the network at the elastic stretch ``Ce``."""
    _check_det(Ce)
    _, _, i3, i1_iso, i2_iso = _kinematics(Ce)
    x = _layer1(i1_iso, i2_iso)
    iso = x @ p.w_psi[0:4] + jnp.expm1(p.w_inner * x) @ p.w_psi[4:8]
    vol = i3**p.p3 - 1.0 - p.p3 * jnp.log(i3)
    return iso + p.w_psi[8] * vol


def dpsi_dCe(p, Ce):
    """Analytic derivative of :func:`psi_eval` with respect to ``Ce`` (symmetric)."""
    _check_det(Ce)
    i1, _, i3, i1_iso, i2_iso = _kinematics(Ce)
    x = _layer1(i1_iso, i2_iso)
    dx = p.w_psi[0:4] + p.w_psi[4:8] * p.w_inner * jnp.exp(p.w_inner * x)
    d_i1t = dx[..., 0] + 2.0 * x[..., 0] * dx[..., 1]
    d_i2t = dx[..., 2] + 2.0 * x[..., 2] * dx[..., 3]

    eye = jnp.eye(3)
    c_inv = inv3(Ce)
    s = lambda a: a[..., None, None]
    di1iso = s(i3 ** (-1.0 / 3.0)) * (eye - s(i1 / 3.0) * c_inv)
    di2iso = s(i3 ** (-2.0 / 3.0)) * (s(i1) * eye - Ce) - s(2.0 / 3.0 * i2_iso) * c_inv
    di2t = s(1.5 * jnp.sqrt(i2_iso)) * di2iso
    # d/dI3 of (I3^p - 1 - p ln I3) times dI3/dC = I3 C^-1
    dvol = p.w_psi[8] * p.p3 * (i3**p.p3 - 1.0)
    return sym(s(d_i1t) * di1iso + s(d_i2t) * di2t + s(dvol) * c_inv)


class NeoHooke(NamedTuple):
    """Compressible Neo-Hooke energy ``mu/2 (I1~ - 3) + kappa/4 (I3 - 1 - ln I3)``."""

    mu: float
    kappa: float

    def psi(self, Ce):
        _, _, i3, i1_iso, _ = _kinematics(Ce)
        return 0.5 * self.mu * (i1_iso - 3.0) + 0.25 * self.kappa * (i3 - 1.0 - jnp.log(i3))

    def dpsi(self, Ce):
        i1 = trace(Ce)
        i3 = det3(Ce)
        c_inv = inv3(Ce)
        s = lambda a: a[..., None, None]
        iso = s(0.5 * self.mu * i3 ** (-1.0 / 3.0)) * (jnp.eye(3) - s(i1 / 3.0) * c_inv)
        vol = s(0.25 * self.kappa * (i3 - 1.0)) * c_inv
        return sym(iso + vol)
