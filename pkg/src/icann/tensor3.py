"""
Symmetric 3x3 tensor algebra.

Symmetric tensors are stored as ordinary ``(3, 3)`` arrays; the six independent
components are only materialised when packing to Voigt form. All functions are
written with ``jax.numpy`` so they can be traced, jitted and differentiated, but
they accept plain NumPy input as well.
"""

import jax
import jax.numpy as jnp
import numpy as np

#: Voigt ordering (11, 22, 33, 12, 13, 23); off-diagonals are stored unscaled.
VOIGT_INDEX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))

#: smoothing constants of the invariant roots
EPS_SQRT = 0.01
EPS_CBRT = 0.01

#: relative eigenvalue floor for log/sqrt
TOL_SPD = 1e-12

I3 = np.eye(3)


class NotPositiveDefinite(ValueError):
    """Raised when an operation needs a symmetric positive definite tensor."""


def sym(a):
    return 0.5 * (a + jnp.swapaxes(a, -1, -2))


def trace(a):
    return jnp.trace(a, axis1=-2, axis2=-1)


def deviator(t):
    """Deviatoric part ``t - tr(t)/3 I``."""
    return t - trace(t)[..., None, None] / 3.0 * jnp.eye(3)


def ddot(a, b):
    """Double contraction ``a : b``."""
    return jnp.sum(a * b, axis=(-2, -1))


def invariants(t):
    """Raw stress invariants ``(I1, J2, J3, I2, I3)`` of a symmetric tensor.

    ``I1 = tr t``, ``J2 = tr(dev t^2)/2``, ``J3 = tr(dev t^3)/3``,
    ``I2 = tr(t^2)/2`` and ``I3 = tr(t^3)/3``.
    """
    s = deviator(t)
    s2 = s @ s
    t2 = t @ t
    i1 = trace(t)
    j2 = 0.5 * trace(s2)
    j3 = trace(s2 @ s) / 3.0
    i2 = 0.5 * trace(t2)
    i3 = trace(t2 @ t) / 3.0
    return i1, j2, j3, i2, i3


def smoothed_sqrt(x, eps=EPS_SQRT):
    """``x / sqrt(x + eps)``: square root that is differentiable at zero."""
    return x / jnp.sqrt(x + eps)


def smoothed_sqrt_deriv(x, eps=EPS_SQRT):
    return (x + 2.0 * eps) / (2.0 * (x + eps) ** 1.5)


def smoothed_cbrt(x, eps=EPS_CBRT):
    """``x / (|x| + eps)^(2/3)``: odd cube root that is differentiable at zero."""
    return x / (jnp.abs(x) + eps) ** (2.0 / 3.0)


def smoothed_cbrt_deriv(x, eps=EPS_CBRT):
    a = jnp.abs(x)
    return (a + 3.0 * eps) / (3.0 * (a + eps) ** (5.0 / 3.0))


def invariant_vector(t):
    """Input vector of the dual potential.

    Returns ``z = (I1, sqrt~(J2), cbrt~(J3), sqrt~(I2), cbrt~(I3))`` with the
    smoothed roots, stacked along the last axis.
    """
    i1, j2, j3, i2, i3 = invariants(t)
    # round-off can make J2 a hair negative for isotropic tensors
    j2 = jnp.maximum(j2, 0.0)
    return jnp.stack(
        [i1, smoothed_sqrt(j2), smoothed_cbrt(j3), smoothed_sqrt(i2), smoothed_cbrt(i3)],
        axis=-1,
    )


def invariant_gradients(t):
    """Tensor derivatives of ``(I1, J2, J3, I2, I3)`` with respect to ``t``."""
    s = deviator(t)
    eye = jnp.broadcast_to(jnp.eye(3), t.shape)
    return (eye, s, deviator(s @ s), t, t @ t)


# --------------------------------------------------------------------------
# Voigt packing


def to_voigt(t):
    t = jnp.asarray(t)
    return jnp.stack([t[..., i, j] for i, j in VOIGT_INDEX], axis=-1)


def from_voigt(v):
    v = jnp.asarray(v)
    a11, a22, a33, a12, a13, a23 = (v[..., k] for k in range(6))
    row0 = jnp.stack([a11, a12, a13], axis=-1)
    row1 = jnp.stack([a12, a22, a23], axis=-1)
    row2 = jnp.stack([a13, a23, a33], axis=-1)
    return jnp.stack([row0, row1, row2], axis=-2)


# --------------------------------------------------------------------------
# Spectral matrix functions
#
# f(A) = Q f(L) Q^T. Tangents follow the Daleckii-Krein formula with divided
# differences evaluated in closed form, so repeated eigenvalues (e.g. A = I)
# differentiate cleanly.

_SMALL = 1e-7


def _exp_dd(li, lj):
    d = li - lj
    small = jnp.abs(d) < _SMALL
    d_safe = jnp.where(small, 1.0, d)
    ratio = jnp.where(small, 1.0 + 0.5 * d, jnp.expm1(d_safe) / d_safe)
    return jnp.exp(lj) * ratio


def _log_dd(li, lj):
    x = (li - lj) / lj
    small = jnp.abs(x) < _SMALL
    x_safe = jnp.where(small, 1.0, x)
    ratio = jnp.where(small, 1.0 - 0.5 * x, jnp.log1p(x_safe) / x_safe)
    return ratio / lj


def _sqrt_dd(li, lj):
    return 1.0 / (jnp.sqrt(li) + jnp.sqrt(lj))


_KINDS = {
    "exp": (jnp.exp, _exp_dd),
    "log": (jnp.log, _log_dd),
    "sqrt": (jnp.sqrt, _sqrt_dd),
}


def _make_spectral(kind):
    f, dd = _KINDS[kind]

    @jax.custom_jvp
    def apply(a):
        lam, q = jnp.linalg.eigh(sym(a))
        return (q * f(lam)[..., None, :]) @ jnp.swapaxes(q, -1, -2)

    @apply.defjvp
    def apply_jvp(primals, tangents):
        (a,), (da,) = primals, tangents
        lam, q = jnp.linalg.eigh(sym(a))
        qt = jnp.swapaxes(q, -1, -2)
        out = (q * f(lam)[..., None, :]) @ qt
        kernel = dd(lam[..., :, None], lam[..., None, :])
        dout = q @ (kernel * (qt @ sym(da) @ q)) @ qt
        return out, dout

    return apply


expm_sym = _make_spectral("exp")
logm_sym = _make_spectral("log")
sqrtm_sym = _make_spectral("sqrt")

_SPECTRAL = {"exp": expm_sym, "log": logm_sym, "sqrt": sqrtm_sym}


def check_spd(t, tol=TOL_SPD):
    """Raise :class:`NotPositiveDefinite` unless every eigenvalue exceeds ``tol * max|eig|``."""
    lam = np.linalg.eigvalsh(np.asarray(t))
    scale = np.max(np.abs(lam), axis=-1, keepdims=True)
    if np.any(lam <= tol * np.maximum(scale, np.finfo(float).tiny)):
        raise NotPositiveDefinite(f"eigenvalues {lam} are not all positive")


def sym_matrix_function(t, kind):
    """Apply ``exp``, ``log`` or ``sqrt`` to a symmetric tensor through its spectrum."""
    if kind not in _SPECTRAL:
        raise ValueError(f"unknown matrix function {kind!r}")
    if kind != "exp" and not isinstance(t, jax.core.Tracer):
        check_spd(t)
    return _SPECTRAL[kind](jnp.asarray(t, dtype=float))


def inv3(a):
    """Closed-form inverse of a (batched) 3x3 matrix."""
    c00 = a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1]
    c01 = a[..., 0, 2] * a[..., 2, 1] - a[..., 0, 1] * a[..., 2, 2]
    c02 = a[..., 0, 1] * a[..., 1, 2] - a[..., 0, 2] * a[..., 1, 1]
    c10 = a[..., 1, 2] * a[..., 2, 0] - a[..., 1, 0] * a[..., 2, 2]
    c11 = a[..., 0, 0] * a[..., 2, 2] - a[..., 0, 2] * a[..., 2, 0]
    c12 = a[..., 0, 2] * a[..., 1, 0] - a[..., 0, 0] * a[..., 1, 2]
    c20 = a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0]
    c21 = a[..., 0, 1] * a[..., 2, 0] - a[..., 0, 0] * a[..., 2, 1]
    c22 = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    det = a[..., 0, 0] * c00 + a[..., 0, 1] * c10 + a[..., 0, 2] * c20
    adj = jnp.stack(
        [
            jnp.stack([c00, c01, c02], axis=-1),
            jnp.stack([c10, c11, c12], axis=-1),
            jnp.stack([c20, c21, c22], axis=-1),
        ],
        axis=-2,
    )
    return adj / det[..., None, None]


def det3(a):
    return (
        a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
        - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
        + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0])
    )
