"""Problem data model, validation and JSON I/O.

An instance is ``n`` agents, ``m`` divisible chores and one disutility
description per agent. Files look like::

    {"n": 2, "m": 2, "mode": "chores",
     "disutilities": [{"linear": [1, 2]}, {"ces": {"c": [1, 1], "rho": 2}}],
     "weights": [1, 0.5]}

Floats are written with ``repr`` so a parse/serialize round trip is exact.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DimensionMismatch, InfiniteDisutility, ParseError, ValidationError


class Mode(str, enum.Enum):
    CHORES = "chores"
    MIXED = "mixed"


@dataclass(frozen=True)
class Linear:
    coefficients: tuple

    @property
    def m(self) -> int:
        return len(self.coefficients)


@dataclass(frozen=True)
class CES:
    """``(sum_j c_j x_j**rho) ** (1/rho)`` with ``rho >= 1``."""

    coefficients: tuple
    rho: float

    @property
    def m(self) -> int:
        return len(self.coefficients)


DisutilitySpec = Union[Linear, CES]

# Shapes: allocation (n, m) with column sums 1, profile (n,), prices (m,).
Allocation = np.ndarray
DisutilityProfile = np.ndarray
PriceVector = np.ndarray


@dataclass(frozen=True)
class Instance:
    n: int
    m: int
    disutilities: tuple
    weights: tuple | None = None
    mode: Mode = Mode.CHORES

    def __post_init__(self):
        for name in ("n", "m"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ValidationError(f"{name} must be an integer")
            object.__setattr__(self, name, int(v))
        object.__setattr__(self, "disutilities", tuple(self.disutilities))
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        _validate(self)

    @property
    def is_linear(self) -> bool:
        return all(isinstance(s, Linear) for s in self.disutilities)

    def matrix(self) -> np.ndarray:
        """Coefficient matrix of an all-linear instance, shape ``(n, m)``."""
        if not self.is_linear:
            raise ValidationError("matrix() needs an all-linear instance")
        return np.array([s.coefficients for s in self.disutilities], dtype=float)

    def weight_vector(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(self.n)
        return np.asarray(self.weights, dtype=float)


def linear_instance(D, weights=None, mode=Mode.CHORES) -> Instance:
    """Build an all-linear instance from a coefficient matrix."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    specs = tuple(Linear(tuple(float(v) for v in row)) for row in D)
    return Instance(D.shape[0], D.shape[1], specs,
                    None if weights is None else tuple(weights), mode)


def _validate(inst: Instance) -> None:
    if inst.n < 1 or inst.m < 1:
        raise ValidationError(f"need n >= 1 and m >= 1, got n={inst.n}, m={inst.m}")
    if len(inst.disutilities) != inst.n:
        raise DimensionMismatch(
            f"{len(inst.disutilities)} disutilities for n={inst.n} agents")
    for i, spec in enumerate(inst.disutilities):
        if not isinstance(spec, (Linear, CES)):
            raise ValidationError(f"agent {i}: unknown disutility kind {type(spec).__name__}")
        if spec.m != inst.m:
            raise DimensionMismatch(f"agent {i}: {spec.m} coefficients for m={inst.m}")
        coeffs = spec.coefficients
        if any(not math.isfinite(c) for c in coeffs):
            raise InfiniteDisutility(f"agent {i}: non-finite coefficient")
        if isinstance(spec, CES):
            if inst.mode is Mode.MIXED:
                raise ValidationError("mixed mode supports linear disutilities only")
            if not (math.isfinite(spec.rho) and spec.rho >= 1):
                raise ValidationError(f"agent {i}: rho must be >= 1, got {spec.rho}")
            if any(c <= 0 for c in coeffs):
                raise ValidationError(f"agent {i}: CES coefficients must be positive")
        elif inst.mode is Mode.CHORES and any(c < 0 for c in coeffs):
            raise ValidationError(f"agent {i}: negative coefficient in chores mode")
    if inst.weights is not None:
        if len(inst.weights) != inst.n:
            raise DimensionMismatch(f"{len(inst.weights)} weights for n={inst.n}")
        if any(not (math.isfinite(w) and w > 0) for w in inst.weights):
            raise ValidationError("weights must be finite and positive")


# ---------------------------------------------------------------- JSON I/O

def _num(v, where: str) -> float:
    if isinstance(v, bool):
        raise ParseError(f"{where}: expected a number, got a boolean")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            raise ParseError(f"{where}: {v!r} is not a decimal number") from None
    raise ParseError(f"{where}: expected a number, got {type(v).__name__}")


def _num_list(v, where: str) -> tuple:
    if not isinstance(v, list):
        raise ParseError(f"{where}: expected a list")
    return tuple(_num(x, f"{where}[{k}]") for k, x in enumerate(v))


def _int(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"{where}: expected an integer")
    return v


def _spec_from_json(obj, i: int) -> DisutilitySpec:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ParseError(f"disutilities[{i}]: expected one of {{'linear': ...}}, {{'ces': ...}}")
    (kind, body), = obj.items()
    if kind == "linear":
        return Linear(_num_list(body, f"disutilities[{i}].linear"))
    if kind == "ces":
        if not isinstance(body, dict) or "c" not in body or "rho" not in body:
            raise ParseError(f"disutilities[{i}].ces: needs 'c' and 'rho'")
        return CES(_num_list(body["c"], f"disutilities[{i}].ces.c"),
                   _num(body["rho"], f"disutilities[{i}].ces.rho"))
    raise ParseError(f"disutilities[{i}]: unknown kind {kind!r}")


def instance_from_dict(obj) -> Instance:
    if not isinstance(obj, dict):
        raise ParseError("instance must be a JSON object")
    for key in ("n", "m", "disutilities"):
        if key not in obj:
            raise ParseError(f"missing field {key!r}")
    mode = obj.get("mode", "chores")
    if mode not in ("chores", "mixed"):
        raise ParseError(f"mode must be 'chores' or 'mixed', got {mode!r}")
    if not isinstance(obj["disutilities"], list):
        raise ParseError("disutilities must be a list")
    specs = tuple(_spec_from_json(s, i) for i, s in enumerate(obj["disutilities"]))
    weights = obj.get("weights")
    if weights is not None:
        weights = _num_list(weights, "weights")
    return Instance(_int(obj["n"], "n"), _int(obj["m"], "m"), specs, weights, Mode(mode))


def parse_instance(text) -> Instance:
    """Parse and validate an instance from UTF-8 JSON text (``str`` or ``bytes``)."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from None
    return instance_from_dict(obj)


def instance_to_dict(inst: Instance) -> dict:
    specs = []
    for s in inst.disutilities:
        if isinstance(s, Linear):
            specs.append({"linear": list(s.coefficients)})
        else:
            specs.append({"ces": {"c": list(s.coefficients), "rho": s.rho}})
    out = {"n": inst.n, "m": inst.m, "mode": inst.mode.value, "disutilities": specs}
    if inst.weights is not None:
        out["weights"] = list(inst.weights)
    return out


def serialize_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=1) + "\n"


def dump_result(result: dict) -> str:
    """Deterministic JSON text for a result dictionary (numpy values allowed)."""
    return json.dumps(_plain(result), indent=1, sort_keys=True, allow_nan=False) + "\n"


def load_result(text) -> dict:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed result JSON: {exc}") from None
    for key in ("allocation", "prices", "epsilon"):
        if key not in obj:
            raise ParseError(f"result missing {key!r}")
    return obj


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, enum.Enum):
        return v.value
    return v


# ------------------------------------------------------------ allocations

@dataclass(frozen=True)
class AllocationReport:
    feasible_exact: bool
    feasible_relaxed: bool
    max_column_residual: float


def validate_allocation(inst: Instance, x, tol: float = 1e-9) -> AllocationReport:
    """Check ``x`` against the exact (column sums 1) and relaxed (column sums >= 1) sets."""
    x = np.asarray(x, dtype=float)
    if x.shape != (inst.n, inst.m):
        raise DimensionMismatch(f"allocation shape {x.shape}, expected {(inst.n, inst.m)}")
    cols = x.sum(axis=0)
    nonneg = bool(np.all(x >= -tol))
    resid = float(np.max(np.abs(cols - 1.0)))
    return AllocationReport(
        feasible_exact=nonneg and resid <= tol,
        feasible_relaxed=nonneg and bool(np.all(cols >= 1.0 - tol)),
        max_column_residual=resid,
    )


# ----------------------------------------------------------- preprocessing

@dataclass(frozen=True)
class Preprocessed:
    """A chores instance with zero-disutility chores removed.

    ``kept`` lists the original indices of the chores left in ``instance``;
    ``free`` maps each removed chore to the agent that takes all of it at
    price zero.
    """

    instance: Instance | None
    original: Instance
    kept: tuple
    free: dict = field(default_factory=dict)

    def reinsert(self, x, p):
        """Expand a reduced allocation and price vector to the original chores."""
        n, m = self.original.n, self.original.m
        full_x = np.zeros((n, m))
        full_p = np.zeros(m)
        if self.kept:
            full_x[:, list(self.kept)] = np.asarray(x, dtype=float)
            full_p[list(self.kept)] = np.asarray(p, dtype=float)
        for j, i in self.free.items():
            full_x[i, j] = 1.0
        return full_x, full_p


def preprocess(inst: Instance) -> Preprocessed:
    """Strip chores that some agent finds costless (linear chores mode only)."""
    if inst.mode is not Mode.CHORES:
        return Preprocessed(inst, inst, tuple(range(inst.m)), {})
    free = {}
    for j in range(inst.m):
        for i, spec in enumerate(inst.disutilities):
            if isinstance(spec, Linear) and spec.coefficients[j] == 0.0:
                free[j] = i
                break
    if not free:
        return Preprocessed(inst, inst, tuple(range(inst.m)), {})
    kept = tuple(j for j in range(inst.m) if j not in free)
    reduced = None
    if kept:
        specs = []
        for s in inst.disutilities:
            c = tuple(s.coefficients[j] for j in kept)
            specs.append(Linear(c) if isinstance(s, Linear) else CES(c, s.rho))
        reduced = Instance(inst.n, len(kept), tuple(specs), inst.weights, inst.mode)
    return Preprocessed(reduced, inst, kept, free)

