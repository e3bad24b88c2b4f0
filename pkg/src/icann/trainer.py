"""
Training: loss, regularization, Adam with clipping and projection, staggering.

All trainable scalars of a model live in one flat vector. Per branch the
layout is the 14 energy parameters followed by the 316 potential parameters::

    [ branch 1: energy (14) | potential (316) | branch 2: energy | potential ]

The training loop is vectorized over a leading "seed" axis so that several
random initializations train at once; a single run is a batch of one.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np

from .autodiff import abs0
from .drivers import pressure_eliminated_s11
from .energy import N_ENERGY_PARAMS, P3_MIN, EnergyParams, energy_from_vector, energy_to_vector
from .material import INTEGRATORS, Branch, MaterialModel, run_path
from .potential import (
    N_POTENTIAL_PARAMS,
    PotentialParams,
    potential_from_vector,
    potential_to_vector,
)
from .tensor3 import to_voigt

N_BRANCH_PARAMS = N_ENERGY_PARAMS + N_POTENTIAL_PARAMS
PENALTY = 1e6
CHECKPOINT_VERSION = 1
CHUNK = 100
ENERGY_INIT_SCALE = 1.0


class ConfigError(ValueError):
    """Invalid training configuration."""


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    clip_norm: float = 1e-3
    epochs: int = 3000
    lambda1: float = 1e-4
    lambda2: float = 1e-4
    lambda3: float = 1e-4
    lambda4: float = 1e-2
    lambda5: float = 1e-3
    integrator: str = "explicit"
    stagger_schedule: list = field(default_factory=lambda: [70, 170, 240, None])
    seed: int = 0
    n_branches: int = 2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("learning_rate", "clip_norm", "adam_eps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("lambda1", "lambda2", "lambda3", "lambda4", "lambda5"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise ConfigError("epochs must be a non-negative integer")
        if self.integrator not in INTEGRATORS:
            raise ConfigError(f"integrator must be one of {INTEGRATORS}")
        if self.n_branches < 1:
            raise ConfigError("at least one branch is required")
        sched = list(self.stagger_schedule)
        if not sched:
            raise ConfigError("stagger schedule must not be empty")
        if any(s is not None and (int(s) != s or s < 2) for s in sched):
            raise ConfigError("stagger stages must be integers >= 2 or None (all points)")
        if None in sched[:-1]:
            raise ConfigError("only the last stage may use all points")
        counts = [s for s in sched if s is not None]
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ConfigError("stagger schedule must be strictly increasing")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


# --------------------------------------------------------------------------
# parameter layout


def n_params(n_branches=2):
    return n_branches * N_BRANCH_PARAMS


def params_to_model(v, n_branches=2):
    branches = []
    for k in range(n_branches):
        o = k * N_BRANCH_PARAMS
        branches.append(
            Branch(
                energy_from_vector(v[o : o + N_ENERGY_PARAMS]),
                potential_from_vector(v[o + N_ENERGY_PARAMS : o + N_BRANCH_PARAMS]),
            )
        )
    return MaterialModel(tuple(branches))


def model_to_params(m):
    return jnp.concatenate(
        [jnp.concatenate([energy_to_vector(b.energy), potential_to_vector(b.potential)])
         for b in m.branches]
    )  # fmt: skip


def _bounds_single():
    e_lo = energy_to_vector(EnergyParams(jnp.zeros(4), jnp.zeros(9), jnp.asarray(P3_MIN)))
    e_hi = jnp.full(N_ENERGY_PARAMS, jnp.inf)
    inf = lambda *s: jnp.full(s, jnp.inf)
    zero = lambda *s: jnp.zeros(s)
    p_lo = potential_to_vector(
        PotentialParams(-inf(18, 5), zero(8, 18), zero(8, 8), zero(8), -inf(4), -inf(4),
                        jnp.asarray(0.0), jnp.asarray(0.0))
    )  # fmt: skip
    p_hi = potential_to_vector(
        PotentialParams(inf(18, 5), inf(8, 18), inf(8, 8), inf(8), zero(4), zero(4),
                        jnp.asarray(jnp.inf), jnp.asarray(jnp.inf))
    )  # fmt: skip
    return jnp.concatenate([e_lo, p_lo]), jnp.concatenate([e_hi, p_hi])


def bounds(n_branches=2):
    """Elementwise lower and upper bounds of the feasible set."""
    lo, hi = _bounds_single()
    return jnp.tile(lo, n_branches), jnp.tile(hi, n_branches)


def project(v, n_branches=2):
    lo, hi = bounds(n_branches)
    return jnp.clip(v, lo, hi)


def is_feasible(v, n_branches=2):
    lo, hi = bounds(n_branches)
    return bool(jnp.all((v >= lo) & (v <= hi)))


def init_params(seed, n_branches=2, energy_scale=ENERGY_INIT_SCALE):
    """Random feasible start: uniform draws for weights and exponents, zero biases.

    Energy weights are drawn from ``U(0, energy_scale)``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_branches):
        e = EnergyParams(
            rng.uniform(0, energy_scale, 4), rng.uniform(0, energy_scale, 9), np.asarray(1.0)
        )
        p = PotentialParams(
            rng.uniform(-1, 1, (18, 5)), rng.uniform(0, 0.01, (8, 18)),
            rng.uniform(0, 0.01, (8, 8)), rng.uniform(0, 1e-3, 8),
            np.zeros(4), np.zeros(4), np.asarray(rng.uniform()), np.asarray(rng.uniform()),
        )  # fmt: skip
        out.append(np.concatenate([energy_to_vector(e), potential_to_vector(p)]))
    return jnp.asarray(np.concatenate(out))


def potential_output_weights(v, n_branches=2):
    """``w_out`` of every branch, shape ``(n_branches, 8)``."""
    return np.stack([np.asarray(b.potential.w_out) for b in params_to_model(v, n_branches).branches])


# --------------------------------------------------------------------------
# regularization


def reg_potential(p, cfg=None):
    """Elastic net on ``W0``, lasso on ``w_out`` and on both bias vectors."""
    cfg = cfg or TrainConfig()
    return (
        cfg.lambda1 * jnp.sum(p.W0**2)
        + cfg.lambda2 * jnp.sum(abs0(p.W0))
        + cfg.lambda3 * jnp.sum(abs0(p.w_out))
        + cfg.lambda4 * (jnp.sum(abs0(p.b1)) + jnp.sum(abs0(p.b2)))
    )


def reg_energy(e, cfg=None):
    """Lasso on the eight isochoric output weights; volumetric weight and ``p3`` are free."""
    cfg = cfg or TrainConfig()
    return cfg.lambda5 * jnp.sum(abs0(e.w_psi[0:8]))


def regularization(v, cfg, n_branches=2):
    m = params_to_model(v, n_branches)
    return sum(reg_energy(b.energy, cfg) + reg_potential(b.potential, cfg) for b in m.branches)


# --------------------------------------------------------------------------
# data term


@jax.tree_util.register_pytree_node_class
class Batch(NamedTuple):
    """One experiment prepared for the traced loss; ``uniaxial`` is static."""

    t: jnp.ndarray
    C: jnp.ndarray
    S: jnp.ndarray  # (N, 6) or (N,) for uniaxial data
    uniaxial: bool

    def tree_flatten(self):
        return (self.t, self.C, self.S), self.uniaxial

    @classmethod
    def tree_unflatten(cls, uniaxial, children):
        return cls(*children, uniaxial)


def _incompressible_C(lam):
    d = jnp.stack([lam**2, 1.0 / lam, 1.0 / lam], axis=-1)
    return d[..., :, None] * jnp.eye(3)


def make_batch(e, n=None):
    """Convert an :class:`~icann.datasets.Experiment` (optionally its first ``n`` samples)."""
    n = len(e) if n is None else min(n, len(e))
    t = jnp.asarray(e.t[:n])
    if e.uniaxial:
        return Batch(t, _incompressible_C(jnp.asarray(e.F[:n, 0, 0])), jnp.asarray(e.S[:n, 0]), True)
    F = jnp.asarray(e.F[:n])
    return Batch(t, jnp.swapaxes(F, -1, -2) @ F, jnp.asarray(e.S[:n]), False)


def predict(m, batch, integrator="explicit"):
    """Model stress for a batch: Voigt ``(N, 6)`` or uniaxial ``S11 (N,)``; also the step status."""
    S, status = run_path(m, batch.t, batch.C, integrator)
    if batch.uniaxial:
        return pressure_eliminated_s11(S, batch.C), status
    return to_voigt(S), status


def data_term(m, batches, integrator="explicit"):
    """Mean over experiments of the mean squared stress error, and a failure flag."""
    terms, failed = [], jnp.asarray(False)
    for b in batches:
        pred, status = predict(m, b, integrator)
        err = jnp.mean((pred - b.S) ** 2)
        failed = failed | jnp.any(status != 0) | ~jnp.isfinite(err)
        terms.append(err)
    return sum(terms) / len(terms), failed


def _total(v, batches, cfg):
    data, failed = data_term(params_to_model(v, cfg.n_branches), batches, cfg.integrator)
    reg = regularization(v, cfg, cfg.n_branches)
    return jnp.where(failed, PENALTY, data) + reg, failed


def loss(params, experiments, cfg=None):
    """Training loss of ``params`` on the experiments; failed forward passes count ``PENALTY``."""
    cfg = cfg or TrainConfig()
    if not experiments:
        raise ValueError("at least one experiment is required")
    batches = [make_batch(e) for e in experiments]
    return float(_total(jnp.asarray(params), batches, cfg)[0])


def loss_and_gradient(params, batches, cfg):
    """Value and gradient; on failure the gradient is that of the regularization alone."""
    (val, failed), g = jax.value_and_grad(_total, has_aux=True)(params, batches, cfg)
    g_reg = jax.grad(regularization)(params, cfg, cfg.n_branches)
    bad = failed | ~jnp.all(jnp.isfinite(g))
    return val, jnp.where(bad, g_reg, g)


# --------------------------------------------------------------------------
# optimizer


class AdamState(NamedTuple):
    m: jnp.ndarray
    v: jnp.ndarray
    k: jnp.ndarray


def adam_init(params):
    z = jnp.zeros_like(params)
    return AdamState(z, z, jnp.zeros((), int))


def clip_by_global_norm(g, clip_norm):
    norm = jnp.sqrt(jnp.sum(g * g))
    scale = jnp.where(norm > clip_norm, clip_norm / jnp.where(norm > 0, norm, 1.0), 1.0)
    return g * scale


def adam_step(state, params, grad, cfg, n_branches=None):
    """Clip, take one Adam step and project back onto the feasible set."""
    g = clip_by_global_norm(grad, cfg.clip_norm)
    k = state.k + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g * g
    m_hat = m / (1.0 - cfg.beta1**k)
    v_hat = v / (1.0 - cfg.beta2**k)
    params = params - cfg.learning_rate * m_hat / (jnp.sqrt(v_hat) + cfg.adam_eps)
    return AdamState(m, v, k), project(params, n_branches or cfg.n_branches)


# --------------------------------------------------------------------------
# training loops


def _hashable_cfg(cfg):
    return json.dumps(cfg.to_dict(), sort_keys=True)


_CHUNK_CACHE = {}


def _chunk_fn(cfg, length, per_member=False):
    """Jitted ``length`` epochs for a stack of parameter vectors.

    With ``per_member`` the batches carry a leading member axis as well, so that
    every parameter vector trains on its own data.
    """
    key = (_hashable_cfg(cfg), length, per_member)
    if key not in _CHUNK_CACHE:

        def member_run(v, opt, batches):
            def one(carry, _):
                v, opt = carry
                val, g = loss_and_gradient(v, batches, cfg)
                opt, v = adam_step(opt, v, g, cfg)
                return (v, opt), val

            (v, opt), vals = jax.lax.scan(one, (v, opt), None, length=length)
            return v, opt, vals

        in_axes = (0, 0, 0 if per_member else None)
        _CHUNK_CACHE[key] = jax.jit(jax.vmap(member_run, in_axes=in_axes))
    return _CHUNK_CACHE[key]


def _stage_counts(schedule, n_max):
    return [n_max if s is None else min(int(s), n_max) for s in schedule]


def train_batch(experiments, cfg, params, progress=None, per_member=False):
    """Staggered training of a stack of parameter vectors ``(n_members, n_params)``.

    All members share ``experiments`` unless ``per_member`` is set; then
    ``experiments[i]`` is the list of experiments of member ``i`` (all members
    must have experiments of equal lengths). Returns the final parameters and,
    per stage, the loss history ``(n_members, epochs)`` (loss before each
    update).
    """
    groups = list(experiments) if per_member else [experiments]
    if not groups or any(not g for g in groups):
        raise ValueError("at least one experiment is required")
    params = jnp.atleast_2d(jnp.asarray(params, dtype=float))
    if per_member and len(groups) != params.shape[0]:
        raise ValueError("need one experiment list per parameter vector")
    n_max = max(len(e) for e in groups[0])
    histories = []
    for stage, n in enumerate(_stage_counts(cfg.stagger_schedule, n_max)):
        batches = [[make_batch(e, n) for e in g] for g in groups]
        batches = jax.tree_util.tree_map(lambda *x: jnp.stack(x), *batches) if per_member else batches[0]
        opt = jax.vmap(adam_init)(params)
        vals = []
        done = 0
        while done < cfg.epochs:
            length = min(CHUNK, cfg.epochs - done)
            params, opt, chunk_vals = _chunk_fn(cfg, length, per_member)(params, opt, batches)
            vals.append(np.asarray(chunk_vals))
            done += length
            if progress is not None:
                progress(stage, done, np.asarray(chunk_vals)[:, -1])
        histories.append(np.concatenate(vals, axis=1) if vals else np.zeros((params.shape[0], 0)))
    return params, histories


def staggered_train(experiments, cfg, params=None, progress=None):
    """Train one model from ``params`` (default: ``init_params(cfg.seed)``).

    Returns ``(params, [loss history per stage])``.
    """
    if params is None:
        params = init_params(cfg.seed, cfg.n_branches)
    out, hist = train_batch(experiments, cfg, jnp.asarray(params)[None], progress)
    return out[0], [h[0] for h in hist]


def train_seeds(experiments, cfg, seeds, progress=None, energy_scale=ENERGY_INIT_SCALE):
    """Train one model per seed in a single vectorized run.

    ``experiments`` is either one list shared by all seeds or, as a dict
    ``{name: [experiments]}``, several data sets that are each trained with
    every seed. The result is a list of ``(params, histories)`` in seed order,
    or a dict of such lists.
    """
    p0 = [init_params(s, cfg.n_branches, energy_scale) for s in seeds]
    if not isinstance(experiments, dict):
        out, hist = train_batch(experiments, cfg, jnp.stack(p0), progress)
        return [(out[i], [h[i] for h in hist]) for i in range(len(seeds))]
    names = list(experiments)
    groups = [experiments[k] for k in names for _ in seeds]
    out, hist = train_batch(groups, cfg, jnp.stack(p0 * len(names)), progress, per_member=True)
    res = [(out[i], [h[i] for h in hist]) for i in range(len(groups))]
    return {k: res[j * len(seeds) : (j + 1) * len(seeds)] for j, k in enumerate(names)}


# --------------------------------------------------------------------------
# files


def save_checkpoint(path, params, cfg=None, meta=None):
    cfg = cfg or TrainConfig()
    params = np.asarray(params, dtype=float)
    nb = params.size // N_BRANCH_PARAMS
    if params.size != nb * N_BRANCH_PARAMS:
        raise CheckpointError(f"parameter vector of length {params.size} does not split into branches")
    branches = []
    for k in range(nb):
        o = k * N_BRANCH_PARAMS
        branches.append({
            "energy": params[o : o + N_ENERGY_PARAMS].tolist(),
            "potential": params[o + N_ENERGY_PARAMS : o + N_BRANCH_PARAMS].tolist(),
        })  # fmt: skip
    doc = {
        "version": CHECKPOINT_VERSION,
        "n_branches": nb,
        "branches": branches,
        "integrator": cfg.integrator,
        "config": cfg.to_dict(),
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path):
    """Return ``(params, document)``."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"not a checkpoint: {exc}") from None
    if not isinstance(doc, dict):
        raise CheckpointError("not a checkpoint: expected a JSON object")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {doc.get('version')!r} is not {CHECKPOINT_VERSION}")
    try:
        parts = []
        for b in doc["branches"]:
            if len(b["energy"]) != N_ENERGY_PARAMS or len(b["potential"]) != N_POTENTIAL_PARAMS:
                raise CheckpointError("wrong parameter count in branch")
            parts += [b["energy"], b["potential"]]
        params = np.concatenate(parts).astype(float)
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from None
    if len(doc["branches"]) != doc.get("n_branches"):
        raise CheckpointError("branch count does not match n_branches")
    return params, doc


def write_history(path, histories):
    """Loss curves as ``stage,epoch,loss`` rows."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("stage", "epoch", "loss"))
        for stage, h in enumerate(histories):
            for epoch, val in enumerate(np.asarray(h)):
                w.writerow((stage, epoch, f"{val:.17g}"))


def read_history(path):
    with Path(path).open(encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    n_stages = 1 + max((int(r["stage"]) for r in rows), default=-1)
    out = [[] for _ in range(n_stages)]
    for r in rows:
        out[int(r["stage"])].append(float(r["loss"]))
    return [np.asarray(h) for h in out]


def weight_report(params, n_branches=2):
    """Output weights of every dual potential, one line per branch.

    The first four entries belong to the max activations, the last four to the
    exponential ones.
    """
    lines = []
    for k, w in enumerate(potential_output_weights(params, n_branches), start=1):
        lines.append(f"{k}w_omega = [" + ", ".join(f"{x:.7g}" for x in w) + "]")
    return "\n".join(lines)


def relative_rmse(pred, ref):
    """RMSE of ``pred`` against ``ref`` relative to ``max |ref|``."""
    pred, ref = np.asarray(pred), np.asarray(ref)
    return math.sqrt(float(np.mean((pred - ref) ** 2))) / float(np.max(np.abs(ref)))
