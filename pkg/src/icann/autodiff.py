"""
Reverse-mode gradients of scalar functions.

Thin layer over :func:`jax.grad` that fixes the conventions used across the
package: ``max(x, 0)`` has derivative 0 at the kink and ``sign(0) = 0``. The
primitives below encode those conventions so that both the hand-written
constitutive derivatives and the reverse sweep agree at kinks.
"""

import jax
import jax.numpy as jnp
import numpy as np


class NonFinite(FloatingPointError):
    """A NaN or infinity showed up in the value or its gradient."""


def relu(x):
    """``max(x, 0)``; the derivative at ``x == 0`` is 0."""
    return jnp.where(x > 0, x, 0.0)


def step(x):
    """Derivative of :func:`relu` under the package convention."""
    return jnp.where(x > 0, 1.0, 0.0)


def sign0(x):
    """Sign with ``sign0(0) == 0``."""
    return jnp.sign(x)


def abs0(x):
    """``|x|`` whose derivative is :func:`sign0` (0 at the origin)."""
    return x * jnp.sign(x)


def value_and_gradient(f, x):
    """Return ``f(x)`` and ``grad f(x)`` for a scalar function of an array or pytree.

    Raises :class:`NonFinite` if either contains NaN or inf.
    """
    value, grad = jax.value_and_grad(f)(x)
    leaves = [value] + jax.tree_util.tree_leaves(grad)
    if not all(np.all(np.isfinite(np.asarray(leaf))) for leaf in leaves):
        raise NonFinite("non-finite value encountered in forward or reverse sweep")
    return value, grad


def gradient(f, x):
    """Gradient of the scalar function ``f`` at ``x`` (one reverse sweep)."""
    return value_and_gradient(f, x)[1]


def central_difference(f, x, h=None):
    """Central finite-difference gradient of ``f`` at the flat vector ``x``.

    The default step is ``1e-6 * max(1, |x_k|)`` per coordinate. Intended as an
    oracle for checking :func:`gradient`; costs ``2 n`` evaluations.
    """
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        hk = 1e-6 * max(1.0, abs(x[k])) if h is None else h
        xp = x.copy()
        xm = x.copy()
        xp[k] += hk
        xm[k] -= hk
        g[k] = (float(f(xp)) - float(f(xm))) / (2.0 * hk)
    return g
