"""
Reference data: analytic materials, noise, normalization and CSV/JSON files.

Multiaxial CSV files carry the full deformation gradient and the six Voigt
stress components::

    t,F11,F12,F13,F21,F22,F23,F31,F32,F33,S11,S22,S33,S12,S13,S23

Uniaxial files carry ``t,F11,S11`` only; their lateral stretches are unknown
and stored as NaN. Units and the normalization scale live in a sidecar JSON
next to the CSV (same stem, ``.json``).
"""

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .drivers import LoadPath
from .energy import NeoHooke
from .material import Branch, MaterialModel, evaluate_path
from .potential import CoshJ3Potential, QuadraticPotential, ZeroPotential
from .tensor3 import to_voigt

FULL_HEADER = (
    "t", "F11", "F12", "F13", "F21", "F22", "F23", "F31", "F32", "F33",
    "S11", "S22", "S33", "S12", "S13", "S23",
)  # fmt: skip
UNIAXIAL_HEADER = ("t", "F11", "S11")

NOISE_FRACTION = 0.02
PAPER_S_MAX_EXAMPLE2 = 125.1517  # MPa, on the original (unpublished) path


class ParseError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class MonotonicityError(ValueError):
    """Time stamps are not strictly increasing."""


class DegenerateData(ValueError):
    """All stresses vanish, so there is nothing to normalize by."""


@dataclass(frozen=True)
class AnalyticMaterial:
    """Two parallel Neo-Hooke springs; the second one flows through an analytic potential.

    ``potential`` is ``"cosh_j3"`` (``K1 (cosh(J3/(J2+1)) - 1)``),
    ``"quadratic"`` (``K1 2 J2 + K2 I2^2``) or ``"none"``.
    """

    mu: float
    kappa: float
    potential: str = "none"
    K1: float = 0.0
    K2: float = 0.0

    def __post_init__(self):
        if self.mu <= 0 or self.kappa <= 0:
            raise ValueError("mu and kappa must be positive")
        if self.K1 < 0 or self.K2 < 0:
            raise ValueError("K1 and K2 must be non-negative")
        if self.potential not in ("none", "cosh_j3", "quadratic"):
            raise ValueError(f"unknown potential {self.potential!r}")

    def model(self):
        if self.potential == "cosh_j3":
            pot = CoshJ3Potential(self.K1)
        elif self.potential == "quadratic":
            pot = QuadraticPotential(self.K1, self.K2)
        else:
            pot = ZeroPotential()
        spring = NeoHooke(self.mu, self.kappa)
        return MaterialModel((Branch(spring, ZeroPotential()), Branch(spring, pot)))

    def constants(self):
        return {"mu": self.mu, "kappa": self.kappa, "potential": self.potential,
                "K1": self.K1, "K2": self.K2}  # fmt: skip


def example1():
    return AnalyticMaterial(1.0, 1.0, "cosh_j3", K1=2.0)


def example2():
    return AnalyticMaterial(25.0, 50.0, "quadratic", K1=4e-5, K2=7.2e-4)


def hyperelastic():
    return AnalyticMaterial(1.0, 1.0, "none")


EXAMPLES = {"1": example1, "2": example2, "hyperelastic": hyperelastic}


@dataclass(frozen=True)
class Experiment:
    """Stress-time data of one loading path.

    ``S`` holds Voigt stresses ``(N, 6)``; for uniaxial data only column 0 is
    meaningful and the lateral entries of ``F`` are NaN. Physical stress is
    ``S * s_max``.
    """

    t: np.ndarray
    F: np.ndarray
    S: np.ndarray
    s_max: float = 1.0
    label: str = ""
    uniaxial: bool = False
    time_unit: str = "min"
    stress_unit: str = "MPa"
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def stretch(self):
        return self.F[:, 0, 0]

    def prefix(self, n):
        """First ``n`` samples."""
        return replace(self, t=self.t[:n], F=self.F[:n], S=self.S[:n])


def _check_time(t):
    if np.any(np.diff(t) <= 0):
        raise MonotonicityError("time stamps must be strictly increasing")


def generate_reference(am, path, integrator="explicit", label=""):
    """Stress response of ``am`` along ``path`` as an (un-normalized) experiment."""
    _check_time(path.t)
    S = evaluate_path(am.model(), path.t, path.C, integrator)
    return Experiment(
        np.asarray(path.t, dtype=float).copy(), np.asarray(path.F, dtype=float).copy(),
        np.asarray(to_voigt(S)), 1.0, label, meta={"material": am.constants()},
    )  # fmt: skip


def uniaxial_experiment(t, lam, s11, label="", **kw):
    t = np.asarray(t, dtype=float)
    _check_time(t)
    F = np.full((t.size, 3, 3), np.nan)
    F[:, 0, 0] = lam
    F[:, [0, 0, 1, 1, 2, 2], [1, 2, 0, 2, 0, 1]] = 0.0
    S = np.full((t.size, 6), np.nan)
    S[:, 0] = s11
    return Experiment(t, F, S, label=label, uniaxial=True, **kw)


def stress_max(e):
    return float(np.nanmax(np.abs(e.S)))


def add_noise(e, sigma=None, seed=0):
    """Add i.i.d. Gaussian noise of standard deviation ``sigma`` to every stress component.

    ``sigma`` defaults to 2 % of the largest absolute stress.
    """
    if sigma is None:
        sigma = NOISE_FRACTION * stress_max(e)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return e
    rng = np.random.default_rng(seed)
    return replace(e, S=e.S + rng.normal(0.0, sigma, e.S.shape))


def normalize(e):
    """Divide stresses by their largest absolute component; the factor is folded into ``s_max``."""
    m = stress_max(e)
    if not m > 0:
        raise DegenerateData("cannot normalize all-zero stresses")
    return replace(e, S=e.S / m, s_max=e.s_max * m)


def denormalize(e):
    return replace(e, S=e.S * e.s_max, s_max=1.0)


# --------------------------------------------------------------------------
# files


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def write_csv(e, path):
    """Write ``e`` as CSV (17 significant digits) plus its sidecar JSON."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if e.uniaxial:
            w.writerow(UNIAXIAL_HEADER)
            rows = np.column_stack([e.t, e.F[:, 0, 0], e.S[:, 0]])
        else:
            w.writerow(FULL_HEADER)
            rows = np.column_stack([e.t, e.F.reshape(-1, 9), e.S])
        for row in rows:
            w.writerow([f"{v:.17g}" for v in row])
    side = {"time_unit": e.time_unit, "stress_unit": e.stress_unit, "s_max": e.s_max,
            "label": e.label, "uniaxial": e.uniaxial, **e.meta}  # fmt: skip
    sidecar_path(path).write_text(json.dumps(side, indent=2) + "\n", encoding="utf-8")


def ingest_csv(path):
    """Read a dataset CSV (and its sidecar, if present)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(h.strip() for h in next(reader))
        except StopIteration:
            raise ParseError("empty file", 1) from None
        if header == FULL_HEADER:
            uniaxial = False
        elif header == UNIAXIAL_HEADER:
            uniaxial = True
        else:
            raise ParseError(f"unrecognized header {','.join(header)}", 1)
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(str(exc), line) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite value", line)
            rows.append(vals)
    if not rows:
        raise ParseError("no data rows", 2)
    data = np.array(rows)
    side = {}
    if sidecar_path(path).exists():
        try:
            side = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"sidecar: {exc}") from None
    known = ("time_unit", "stress_unit", "s_max", "label", "uniaxial")
    kw = {
        "s_max": float(side.get("s_max", 1.0)),
        "time_unit": side.get("time_unit", "min"),
        "stress_unit": side.get("stress_unit", "MPa"),
        "meta": {k: v for k, v in side.items() if k not in known},
    }
    label = side.get("label", path.stem)
    t = data[:, 0]
    _check_time(t)
    if uniaxial:
        return uniaxial_experiment(t, data[:, 1], data[:, 2], label, **kw)
    return Experiment(t, data[:, 1:10].reshape(-1, 3, 3), data[:, 10:16], label=label, **kw)


def path_of(e):
    """The :class:`LoadPath` of a multiaxial experiment."""
    if e.uniaxial:
        raise ValueError("uniaxial experiments have no complete deformation gradient")
    return LoadPath(e.t, e.F)
