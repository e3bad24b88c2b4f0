"""
Command-line interface.

    icann generate --example {1,2,hyperelastic} --out-dir DIR
    icann train DATA.csv [DATA.csv ...] --out CKPT.json
    icann evaluate CKPT.json (--data FILE | --uniaxial-test) --out PRED.csv
    icann export-classical KIND [--const NAME=VALUE ...] --out CKPT.json

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O error.
Options of ``train`` can also come from a JSON config file (``--config``);
its values take precedence over command-line flags, which take precedence over
the built-in defaults.
"""

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import jax.numpy as jnp
import numpy as np

from . import datasets as ds
from .drivers import (
    incompressible_uniaxial_driver,
    surrogate_training_path,
    uniaxial_test_driver,
    uniaxial_test_stretch,
)
from .energy import neo_hooke_params
from .material import Branch, MaterialModel, NoConvergence, evaluate_path
from .potential import CLASSICAL_KINDS, InvalidConstant, classical_config
from .tensor3 import NotPositiveDefinite, to_voigt
from .trainer import (
    CheckpointError,
    ConfigError,
    TrainConfig,
    load_checkpoint,
    model_to_params,
    params_to_model,
    save_checkpoint,
    staggered_train,
    weight_report,
    write_history,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

PAPER_STAGGER = [70, 170, 240, None]
VOIGT_NAMES = ("S11", "S22", "S33", "S12", "S13", "S23")


def _log(msg):
    print(msg, file=sys.stderr)


# --------------------------------------------------------------------------
# generate


def cmd_generate(example, out_dir, seed=0, noise_sigma=None, integrator="explicit"):
    """Write ``train.csv`` (multiaxial, normalized) and ``test.csv`` (uniaxial drive) with sidecars.

    ``noise_sigma`` is in stress units and is added to the training stresses
    before normalization; ``None`` or 0 means clean data.
    """
    if example not in ds.EXAMPLES:
        raise ConfigError(f"unknown example {example!r}")
    am = ds.EXAMPLES[example]()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    train = ds.generate_reference(am, surrogate_training_path(), integrator, label=f"example-{example}-train")
    if noise_sigma:
        train = ds.add_noise(train, noise_sigma, seed)
    train = ds.normalize(train)
    meta = {"material": am.constants(), "seed": seed, "noise_sigma": noise_sigma or 0.0,
            "integrator": integrator}  # fmt: skip
    if example == "2":
        meta["paper_s_max_reference"] = ds.PAPER_S_MAX_EXAMPLE2
    train = replace(train, meta=meta)
    ds.write_csv(train, out_dir / "train.csv")

    t, lam = uniaxial_test_stretch()
    path, S = uniaxial_test_driver(am.model(), t, lam, integrator)
    test = ds.Experiment(path.t, path.F, np.asarray(to_voigt(S)) / train.s_max, train.s_max,
                         f"example-{example}-test", meta=meta)  # fmt: skip
    ds.write_csv(test, out_dir / "test.csv")
    _log(f"wrote {out_dir / 'train.csv'} ({len(train)} rows, s_max = {train.s_max:.10g})")
    _log(f"wrote {out_dir / 'test.csv'} ({len(test)} rows)")
    return train, test


# --------------------------------------------------------------------------
# train


def build_config(args, config_file=None):
    """Defaults < command-line flags < config file."""
    d = {}
    if args.get("integrator") is not None:
        d["integrator"] = args["integrator"]
    d["stagger_schedule"] = list(PAPER_STAGGER) if args.get("stagger") else [None]
    for flag, key in (("seed", "seed"), ("epochs", "epochs"), ("lr", "learning_rate"),
                      ("clip_norm", "clip_norm")):  # fmt: skip
        if args.get(flag) is not None:
            d[key] = args[flag]
    if config_file is not None:
        try:
            fromfile = json.loads(Path(config_file).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file: {exc}") from None
        if not isinstance(fromfile, dict):
            raise ConfigError("config file must hold a JSON object")
        d.update(fromfile)
    return TrainConfig.from_dict(d)


def cmd_train(data_files, out, cfg, history=None):
    experiments = [ds.ingest_csv(f) for f in data_files]
    _log(f"training on {len(experiments)} experiment(s), stages {cfg.stagger_schedule}, "
         f"{cfg.epochs} epochs each, {cfg.integrator} integrator")  # fmt: skip

    def progress(stage, done, vals):
        if done % 500 == 0 or done == cfg.epochs:
            _log(f"  stage {stage} epoch {done}: loss {vals[0]:.6e}")

    params, hist = staggered_train(experiments, cfg, progress=progress)
    meta = {"s_max": [e.s_max for e in experiments], "data": [str(f) for f in data_files],
            "final_loss": float(hist[-1][-1]) if len(hist[-1]) else None}  # fmt: skip
    save_checkpoint(out, params, cfg, meta)
    history = Path(history) if history else Path(out).with_name(Path(out).stem + "_history.csv")
    write_history(history, hist)
    print(weight_report(params, cfg.n_branches))
    return params, hist


# --------------------------------------------------------------------------
# evaluate


def _model_from_checkpoint(path):
    params, doc = load_checkpoint(path)
    return params_to_model(jnp.asarray(params), doc["n_branches"]), doc


def cmd_evaluate(checkpoint, out, data=None, uniaxial_test=False, integrator=None):
    """Predict stresses and write ``t``, predictions, data and errors as CSV; returns the MSE (or None)."""
    m, doc = _model_from_checkpoint(checkpoint)
    integrator = integrator or doc.get("integrator", "explicit")
    if (data is None) == (not uniaxial_test):
        raise ConfigError("pass exactly one of --data or --uniaxial-test")
    if uniaxial_test:
        t, lam = uniaxial_test_stretch()
        path, S = uniaxial_test_driver(m, t, lam, integrator)
        t, pred, ref, names = path.t, np.asarray(to_voigt(S)), None, VOIGT_NAMES
    else:
        e = ds.ingest_csv(data)
        if e.uniaxial:
            pred = incompressible_uniaxial_driver(m, e.t, e.stretch, integrator)[:, None]
            ref, names = e.S[:, :1], ("S11",)
        else:
            S = evaluate_path(m, e.t, np.swapaxes(e.F, -1, -2) @ e.F, integrator)
            pred, ref, names = np.asarray(to_voigt(S)), e.S, VOIGT_NAMES
        t = e.t
    header = ["t"] + [f"{n}_pred" for n in names]
    if ref is not None:
        header += [f"{n}_data" for n in names] + [f"{n}_err" for n in names]
    with Path(out).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(len(t)):
            row = [t[k], *pred[k]]
            if ref is not None:
                row += [*ref[k], *(pred[k] - ref[k])]
            w.writerow([f"{v:.17g}" for v in row])
    print(weight_report(model_to_params(m), m.n_branches))
    if ref is None:
        return None
    mse = float(np.mean((pred - ref) ** 2))
    print(f"mse {mse:.10e}")
    return mse


# --------------------------------------------------------------------------
# export-classical


def _parse_constants(items):
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"constant {item!r} is not NAME=VALUE")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"constant {item!r} has a non-numeric value") from None
    return out


def cmd_export_classical(kind, constants, out, mu=1.0, kappa=1.0):
    """Single-branch checkpoint: Neo-Hooke spring plus the classical dual potential ``kind``."""
    if kind not in CLASSICAL_KINDS:
        raise ConfigError(f"unknown classical potential {kind!r}; choose from {CLASSICAL_KINDS}")
    pot = classical_config(kind, **constants)
    m = MaterialModel((Branch(neo_hooke_params(mu, kappa), pot),))
    cfg = TrainConfig(n_branches=1)
    save_checkpoint(out, model_to_params(m), cfg, {"classical": kind, "constants": constants,
                                                   "mu": mu, "kappa": kappa})  # fmt: skip
    return m


# --------------------------------------------------------------------------


def _schedule_flag(p):
    p.add_argument("--integrator", choices=("explicit", "implicit"), default=None)
    p.add_argument("--seed", type=int, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="icann", description="Inelastic constitutive neural networks")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write reference training/test data")
    g.add_argument("--example", required=True, choices=sorted(ds.EXAMPLES))
    g.add_argument("--out-dir", required=True)
    g.add_argument("--noise-sigma", type=float, default=None, help="noise std in stress units")
    _schedule_flag(g)

    t = sub.add_parser("train", help="train a two-branch model")
    t.add_argument("data", nargs="+")
    t.add_argument("--out", required=True)
    t.add_argument("--history", default=None)
    t.add_argument("--config", default=None)
    t.add_argument("--stagger", action="store_true", help="stages of 70, 170, 240 and all points")
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--clip-norm", type=float, default=None)
    _schedule_flag(t)

    e = sub.add_parser("evaluate", help="predict stresses with a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--data", default=None)
    e.add_argument("--uniaxial-test", action="store_true")
    e.add_argument("--out", required=True)
    e.add_argument("--integrator", choices=("explicit", "implicit"), default=None)

    x = sub.add_parser("export-classical", help="checkpoint reproducing a classical potential")
    x.add_argument("kind", choices=CLASSICAL_KINDS)
    x.add_argument("--const", action="append", default=[], metavar="NAME=VALUE")
    x.add_argument("--mu", type=float, default=1.0)
    x.add_argument("--kappa", type=float, default=1.0)
    x.add_argument("--out", required=True)
    return parser


def run(argv):
    args = build_parser().parse_args(argv)
    if args.command == "generate":
        cmd_generate(args.example, args.out_dir, args.seed or 0, args.noise_sigma,
                     args.integrator or "explicit")  # fmt: skip
    elif args.command == "train":
        cfg = build_config(vars(args), args.config)
        cmd_train(args.data, args.out, cfg, args.history)
    elif args.command == "evaluate":
        cmd_evaluate(args.checkpoint, args.out, args.data, args.uniaxial_test, args.integrator)
    elif args.command == "export-classical":
        cmd_export_classical(args.kind, _parse_constants(args.const), args.out, args.mu, args.kappa)


def main(argv=None):
    try:
        run(sys.argv[1:] if argv is None else argv)
    except (ConfigError, CheckpointError, InvalidConstant) as exc:
        _log(f"error: {exc}")
        return EXIT_CONFIG
    except (NoConvergence, NotPositiveDefinite) as exc:
        _log(f"solver failure: {exc}")
        return EXIT_SOLVER
    except (OSError, ds.ParseError, ds.MonotonicityError, ds.DegenerateData) as exc:
        _log(f"I/O error: {exc}")
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
