"""
Recurrent material-point kernel for parallel generalized Maxwell branches.

Every branch carries a free energy ``psi(Ce)`` and a dual potential
``omega*(Sigma)``. With the inelastic stretch ``Ui`` of a branch::

    Ce    = Ui^-1 C Ui^-1
    Sigma = sym(2 Ce dpsi/dCe)
    S     = 2 Ui^-1 dpsi/dCe Ui^-1
    D     = d omega* / d Sigma

and the model stress is the sum of the branch stresses. The inelastic stretch
evolves through an exponential update, either explicit (rate from the previous
state) or implicit (logarithmic residual solved with Broyden's method).

Anything exposing ``dpsi(Ce)`` works as an energy and anything exposing
``domega(Sigma)`` works as a potential, so networks and analytic reference
models share this kernel.
"""

from typing import Any, NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from .tensor3 import (
    NotPositiveDefinite,
    check_spd,
    ddot,
    expm_sym,
    from_voigt,
    inv3,
    logm_sym,
    sqrtm_sym,
    sym,
    to_voigt,
)

BROYDEN_TOL = 1e-10
BROYDEN_MAX_ITER = 50
SHERMAN_MORRISON_GUARD = 1e-14

# solver status codes
CONVERGED, ITERATION_CAP, SINGULAR_UPDATE, LEFT_SPD_CONE = 0, 1, 2, 3

INTEGRATORS = ("explicit", "implicit")


class NoConvergence(RuntimeError):
    """The implicit update did not converge."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class Branch(NamedTuple):
    energy: Any
    potential: Any


class MaterialModel(NamedTuple):
    branches: tuple

    @property
    def n_branches(self):
        return len(self.branches)


class MaterialState(NamedTuple):
    """Inelastic stretches of all branches, stacked ``(n_branches, 3, 3)``, and the previous ``C``.

    ``C`` is shared by all branches, so it is stored once.
    """

    Ui: jnp.ndarray
    Cn: jnp.ndarray


def initial_state(m):
    eye = jnp.eye(3)
    return MaterialState(jnp.broadcast_to(eye, (m.n_branches, 3, 3)), eye)


# --------------------------------------------------------------------------
# branch kinematics and stresses


def elastic_stretch(Ui, C):
    """``Ce = Ui^-1 C Ui^-1``."""
    if not isinstance(Ui, jax.core.Tracer):
        check_spd(Ui)
    u_inv = inv3(jnp.asarray(Ui, dtype=float))
    return sym(u_inv @ jnp.asarray(C, dtype=float) @ u_inv)


def mandel_stress(b, Ui, C):
    Ce = elastic_stretch(Ui, C)
    return sym(2.0 * Ce @ b.energy.dpsi(Ce))


def second_pk(b, Ui, C):
    u_inv = inv3(jnp.asarray(Ui, dtype=float))
    Ce = sym(u_inv @ jnp.asarray(C, dtype=float) @ u_inv)
    return sym(2.0 * u_inv @ b.energy.dpsi(Ce) @ u_inv)


def model_stress(m, state, C):
    """Total second Piola-Kirchhoff stress for the stretches in ``state`` at ``C``."""
    return sum(second_pk(b, state.Ui[k], C) for k, b in enumerate(m.branches))


def dissipation_rate(Sigma, Di):
    """Reduced dissipation ``Sigma : Di``."""
    return ddot(jnp.asarray(Sigma, dtype=float), jnp.asarray(Di, dtype=float))


def _rate(b, Ui, C):
    Sigma = mandel_stress(b, Ui, C)
    return Sigma, b.potential.domega(Sigma)


# --------------------------------------------------------------------------
# explicit update


def _explicit_branch(b, Ui_n, C_n, dt):
    _, D = _rate(b, Ui_n, C_n)
    Ci = Ui_n @ expm_sym(2.0 * dt * D) @ Ui_n
    return sqrtm_sym(sym(Ci))


def _explicit(m, state, C_next, dt):
    Ui = jnp.stack(
        [_explicit_branch(b, state.Ui[k], state.Cn, dt) for k, b in enumerate(m.branches)]
    )
    new = MaterialState(Ui, C_next)
    status = jnp.where(jnp.all(jnp.isfinite(Ui)), CONVERGED, LEFT_SPD_CONE)
    return new, model_stress(m, new, C_next), status, jnp.zeros((), int)


# --------------------------------------------------------------------------
# implicit update (Broyden with inverse-Jacobian updates)


def implicit_residual(b, Ui, Ui_n, C, dt):
    """Voigt residual ``log(Ui^-1 Ci_n Ui^-1) + 2 dt D(Ui)`` with ``Ci_n = Ui_n^2``."""
    u_inv = inv3(Ui)
    A = sym(u_inv @ Ui_n @ Ui_n @ u_inv)
    _, D = _rate(b, Ui, C)
    return to_voigt(logm_sym(A) + 2.0 * dt * D)


def broyden(fun, u0, tol=BROYDEN_TOL, max_iter=BROYDEN_MAX_ITER):
    """Solve ``fun(u) = 0`` with Broyden's method on the inverse Jacobian.

    Starts from ``B = I``; each iteration takes ``s = -B r`` and updates
    ``B += (s - B y) s^T B / (s^T B y)``. The loop always runs ``max_iter``
    masked iterations so that it can be traced and differentiated. Returns
    ``(u, |r|, status, iterations)``.
    """
    n = u0.shape[0]
    r0 = fun(u0)
    norm0 = jnp.linalg.norm(r0)
    done0 = norm0 <= tol
    status0 = jnp.where(jnp.isfinite(norm0), CONVERGED, LEFT_SPD_CONE)

    def body(carry, _):
        u, r, B, done, status, it = carry
        active = ~done & (status == CONVERGED)
        s = -B @ r
        # evaluate at the current iterate once inactive so nothing non-finite is traced
        u_try = jnp.where(active, u + s, u)
        r_try = fun(u_try)
        finite = jnp.all(jnp.isfinite(r_try))
        r_try = jnp.where(finite, r_try, r)
        y = r_try - r
        By = B @ y
        denom = s @ By
        # relative guard: s and y both shrink to round-off as the iteration converges
        scale = jnp.linalg.norm(s) * jnp.linalg.norm(By)
        singular = jnp.abs(denom) <= SHERMAN_MORRISON_GUARD * scale
        B_new = B + jnp.outer(s - By, s @ B) / jnp.where(singular, 1.0, denom)

        accept = active & finite
        conv = accept & (jnp.linalg.norm(r_try) <= tol)
        new_status = jnp.where(
            active & ~finite, LEFT_SPD_CONE,
            jnp.where(active & ~conv & singular, SINGULAR_UPDATE, status),
        )  # fmt: skip
        u = jnp.where(accept, u_try, u)
        r = jnp.where(accept, r_try, r)
        B = jnp.where(accept & ~singular, B_new, B)
        return (u, r, B, done | conv, new_status, it + active), None

    carry = (u0, r0, jnp.eye(n), done0, status0, jnp.zeros((), int))
    (u, r, _, done, status, it), _ = jax.lax.scan(body, carry, None, length=max_iter)
    status = jnp.where((status == CONVERGED) & ~done, ITERATION_CAP, status)
    return u, jnp.linalg.norm(r), status, it


def _implicit(m, state, C_next, dt, tol, max_iter):
    Ui, statuses, iters = [], [], []
    for k, b in enumerate(m.branches):
        Ui_n = state.Ui[k]
        fun = lambda u, b=b, Ui_n=Ui_n: implicit_residual(b, from_voigt(u), Ui_n, C_next, dt)
        u, _, status, it = broyden(fun, to_voigt(Ui_n), tol, max_iter)
        Ui.append(from_voigt(u))
        statuses.append(status)
        iters.append(it)
    new = MaterialState(jnp.stack(Ui), C_next)
    return new, model_stress(m, new, C_next), jnp.max(jnp.stack(statuses)), jnp.max(jnp.stack(iters))


def _step(m, state, C_next, dt, integrator, tol=BROYDEN_TOL, max_iter=BROYDEN_MAX_ITER):
    if integrator == "explicit":
        return _explicit(m, state, C_next, dt)
    if integrator == "implicit":
        return _implicit(m, state, C_next, dt, tol, max_iter)
    raise ValueError(f"unknown integrator {integrator!r}")


_step_jit = jax.jit(_step, static_argnames=("integrator", "max_iter"))


def _raise_for_status(status, step=None):
    status = int(status)
    if status == ITERATION_CAP:
        raise NoConvergence("Broyden iteration cap reached", step)
    if status == SINGULAR_UPDATE:
        raise NoConvergence("Sherman-Morrison denominator below guard", step)
    if status == LEFT_SPD_CONE:
        raise NotPositiveDefinite(
            "inelastic update left the SPD cone" + ("" if step is None else f" (step {step})")
        )


def step_explicit(m, s, C_next, dt):
    """Advance one step with the explicit exponential update; returns ``(state, S)``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    new, S, status, _ = _step_jit(m, s, jnp.asarray(C_next, dtype=float), dt, "explicit")
    _raise_for_status(status)
    return new, S


def step_implicit(m, s, C_next, dt, tol=BROYDEN_TOL, max_iter=BROYDEN_MAX_ITER):
    """Advance one step with the implicit exponential update; returns ``(state, S)``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    new, S, status, _ = _step_jit(
        m, s, jnp.asarray(C_next, dtype=float), dt, "implicit", tol, max_iter
    )
    _raise_for_status(status)
    return new, S


def step(m, s, C_next, dt, integrator="explicit"):
    if integrator not in INTEGRATORS:
        raise ValueError(f"unknown integrator {integrator!r}")
    if integrator == "explicit":
        return step_explicit(m, s, C_next, dt)
    return step_implicit(m, s, C_next, dt)


# --------------------------------------------------------------------------
# whole paths


class PathResult(NamedTuple):
    S: jnp.ndarray  # (N, 3, 3)
    Ui: jnp.ndarray  # (N, n_branches, 3, 3)
    Sigma: jnp.ndarray  # (N, n_branches, 3, 3), Mandel stress at each sample
    D: jnp.ndarray  # (N, n_branches, 3, 3), inelastic rate at each sample
    status: jnp.ndarray  # (N,), 0 where the step succeeded
    iterations: jnp.ndarray  # (N,)


def _diagnostics(m, state, C):
    pairs = [_rate(b, state.Ui[k], C) for k, b in enumerate(m.branches)]
    return jnp.stack([p[0] for p in pairs]), jnp.stack([p[1] for p in pairs])


def run_path(m, t, C, integrator="explicit", tol=BROYDEN_TOL, max_iter=BROYDEN_MAX_ITER,
             diagnostics=False):  # fmt: skip
    """Traceable path evaluation starting from the identity state.

    Returns ``(S, status)`` or, with ``diagnostics``, a :class:`PathResult`.
    A failed step does not stop the scan; its status is recorded and later
    samples are meaningless.
    """
    state0 = initial_state(m)
    state0 = MaterialState(state0.Ui, C[0])
    S0 = model_stress(m, state0, C[0])
    dts = t[1:] - t[:-1]

    def body(state, xs):
        C_next, dt = xs
        new, S, status, it = _step(m, state, C_next, dt, integrator, tol, max_iter)
        out = (S, status, it)
        if diagnostics:
            out = out + (new.Ui,) + _diagnostics(m, new, C_next)
        return new, out

    _, outs = jax.lax.scan(body, state0, (C[1:], dts))
    S = jnp.concatenate([S0[None], outs[0]])
    status = jnp.concatenate([jnp.zeros(1, int), outs[1]])
    if not diagnostics:
        return S, status
    Sig0, D0 = _diagnostics(m, state0, C[0])
    return PathResult(
        S,
        jnp.concatenate([state0.Ui[None], outs[3]]),
        jnp.concatenate([Sig0[None], outs[4]]),
        jnp.concatenate([D0[None], outs[5]]),
        status,
        jnp.concatenate([jnp.zeros(1, int), outs[2]]),
    )


_run_path_jit = jax.jit(run_path, static_argnames=("integrator", "max_iter", "diagnostics"))


def _check_path(t, C):
    t = np.asarray(t, dtype=float)
    C = np.asarray(C, dtype=float)
    if t.ndim != 1 or C.shape != (t.size, 3, 3):
        raise ValueError("expected t of shape (N,) and C of shape (N, 3, 3)")
    if np.any(np.diff(t) <= 0):
        raise ValueError("time stamps must be strictly increasing")
    check_spd(C)
    return t, C


def _first_failure(status):
    bad = np.flatnonzero(np.asarray(status) != CONVERGED)
    if bad.size:
        _raise_for_status(np.asarray(status)[bad[0]], int(bad[0]))


def evaluate_path(m, t, C, integrator="explicit", tol=BROYDEN_TOL, max_iter=BROYDEN_MAX_ITER):
    """Stress series ``S (N, 3, 3)`` along the stretch history ``C (N, 3, 3)``."""
    t, C = _check_path(t, C)
    S, status = _run_path_jit(m, t, C, integrator, tol, max_iter)
    _first_failure(status)
    return np.asarray(S)


def simulate(m, t, C, integrator="explicit", tol=BROYDEN_TOL, max_iter=BROYDEN_MAX_ITER):
    """Like :func:`evaluate_path` but returns the full :class:`PathResult`."""
    t, C = _check_path(t, C)
    res = _run_path_jit(m, t, C, integrator, tol, max_iter, diagnostics=True)
    _first_failure(res.status)
    return PathResult(*(np.asarray(a) for a in res))


def path_dissipation(res):
    """Reduced dissipation ``(N, n_branches)`` of a :class:`PathResult`."""
    return np.asarray(dissipation_rate(res.Sigma, res.D))


def right_cauchy_green(F):
    F = jnp.asarray(F, dtype=float)
    return jnp.swapaxes(F, -1, -2) @ F

