"""Disutility oracles: value, gradient, Hessian and Lipschitz metadata.

Every oracle is 1-homogeneous, convex and nondecreasing on the nonnegative
orthant. The two-sided constant ``L`` satisfies, on the box ``[0, 2]^m``,

    |D(x + t e_j) - D(x)| >= t / L      and      dD/dx_j <= L

which is the coordinate-wise form of the bounds the general solver relies on.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionMismatch, GradientSingularity, NegativeInput
from .instance import CES, Instance, Linear

GRAD_FLOOR = 1e-9
BOX = 2.0
_NEG_SLACK = 1e-12


def _check_point(x, m):
    x = np.asarray(x, dtype=float)
    if x.shape != (m,):
        raise DimensionMismatch(f"bundle has shape {x.shape}, expected ({m},)")
    if np.any(x < -_NEG_SLACK) or not np.all(np.isfinite(x)):
        raise NegativeInput("bundle must be finite and nonnegative")
    return np.maximum(x, 0.0)


class DisutilityOracle:
    """Common interface; subclasses provide ``_value``, ``_gradient``, ``_hessian``."""

    spec = None
    L = 1.0

    @property
    def m(self) -> int:
        return self.spec.m

    def value(self, x) -> float:
        return self._value(_check_point(x, self.m))

    def gradient(self, x, floor: float | None = None) -> np.ndarray:
        """Partial derivatives at ``x``.

        With ``floor`` set, coordinates below it are raised to it first; this
        is how callers avoid the CES singularity at the origin.
        """
        x = _check_point(x, self.m)
        if floor is not None and np.any(x < floor):
            x = np.maximum(x, floor)
        return self._gradient(x)

    def hessian(self, x) -> np.ndarray:
        return self._hessian(_check_point(x, self.m))


class LinearOracle(DisutilityOracle):
    def __init__(self, spec: Linear):
        self.spec = spec
        self.coef = np.asarray(spec.coefficients, dtype=float)
        self.L = lipschitz_constant(spec)

    def _value(self, x):
        return float(self.coef @ x)

    def _gradient(self, x):
        return self.coef.copy()

    def _hessian(self, x):
        return np.zeros((self.m, self.m))


class CESOracle(DisutilityOracle):
    def __init__(self, spec: CES, grad_floor: float = GRAD_FLOOR, bound: float = BOX):
        self.spec = spec
        self.coef = np.asarray(spec.coefficients, dtype=float)
        self.rho = float(spec.rho)
        self.L = lipschitz_constant(spec, grad_floor, bound)

    def _value(self, x):
        s = x.max()
        if s == 0.0:
            return 0.0
        if self.rho == 1.0:
            return float(self.coef @ x)
        # scale first so large rho does not overflow
        return float(s * (self.coef @ (x / s) ** self.rho) ** (1.0 / self.rho))

    def _gradient(self, x):
        if self.rho == 1.0:
            return self.coef.copy()
        D = self._value(x)
        if D == 0.0:
            raise GradientSingularity("CES gradient is undefined at the origin for rho > 1")
        return self.coef * (x / D) ** (self.rho - 1.0)

    def _hessian(self, x):
        if self.rho == 1.0:
            return np.zeros((self.m, self.m))
        D = self._value(x)
        if D == 0.0:
            raise GradientSingularity("CES Hessian is undefined at the origin")
        g = self.coef * (x / D) ** (self.rho - 1.0)
        with np.errstate(divide="ignore"):
            diag = self.coef * (x / D) ** (self.rho - 2.0)
        return (self.rho - 1.0) / D * (np.diag(diag) - np.outer(g, g))


def make_oracle(spec, grad_floor: float = GRAD_FLOOR, bound: float = BOX) -> DisutilityOracle:
    if isinstance(spec, Linear):
        return LinearOracle(spec)
    if isinstance(spec, CES):
        return CESOracle(spec, grad_floor, bound)
    raise TypeError(f"unsupported disutility spec {type(spec).__name__}")


def lipschitz_constant(spec, grad_floor: float = GRAD_FLOOR, bound: float = BOX) -> float:
    """Two-sided constant ``L`` for one disutility.

    Linear: ``max(max_j D_j, 1 / min_j D_j)`` (absolute values, zeros
    ignored). CES: the largest partial derivative is ``c_j ** (1/rho)``; the
    smallest over ``[grad_floor, bound]^m`` is attained with ``x_j`` at the
    floor and every other coordinate at the bound.
    """
    c = np.abs(np.asarray(spec.coefficients, dtype=float))
    if isinstance(spec, Linear) or spec.rho == 1.0:
        nz = c[c > 0]
        if nz.size == 0:
            return 1.0
        return float(max(nz.max(), 1.0 / nz.min()))
    rho = float(spec.rho)
    upper = float(np.max(c ** (1.0 / rho)))
    lower = np.inf
    for j in range(c.size):
        x = np.full(c.size, bound)
        x[j] = grad_floor
        D = (c @ x ** rho) ** (1.0 / rho)
        lower = min(lower, c[j] * (grad_floor / D) ** (rho - 1.0))
    if lower == 0.0:
        # the floor derivative underflows for very large rho
        return math.inf
    return float(max(upper, 1.0 / lower))


class ProfileMap:
    """The per-agent oracles of an instance, evaluated together."""

    def __init__(self, oracles):
        self.oracles = list(oracles)
        if not self.oracles:
            raise DimensionMismatch("need at least one oracle")
        ms = {o.m for o in self.oracles}
        if len(ms) != 1:
            raise DimensionMismatch(f"oracles disagree on m: {sorted(ms)}")
        self.n = len(self.oracles)
        self.m = ms.pop()
        self.L = max(o.L for o in self.oracles)
        self.is_linear = all(isinstance(o, LinearOracle) for o in self.oracles)
        self._D = (np.array([o.coef for o in self.oracles]) if self.is_linear else None)

    @classmethod
    def from_instance(cls, inst: Instance, grad_floor: float = GRAD_FLOOR) -> "ProfileMap":
        return cls(make_oracle(s, grad_floor) for s in inst.disutilities)

    @property
    def matrix(self) -> np.ndarray:
        if self._D is None:
            raise TypeError("matrix is only defined for all-linear profile maps")
        return self._D

    def profile(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n, self.m):
            raise DimensionMismatch(f"allocation shape {x.shape}, expected {(self.n, self.m)}")
        if self._D is not None:
            if np.any(x < -_NEG_SLACK):
                raise NegativeInput("allocation must be nonnegative")
            return (self._D * np.maximum(x, 0.0)).sum(axis=1)
        return np.array([o.value(row) for o, row in zip(self.oracles, x)])

    def full_bundle_values(self, scale: float = 1.0) -> np.ndarray:
        """``D_i(scale * 1)`` for every agent."""
        return np.array([o.value(np.full(self.m, scale)) for o in self.oracles])


def value(o: DisutilityOracle, x) -> float:
    return o.value(x)


def gradient(o: DisutilityOracle, x, floor: float | None = None) -> np.ndarray:
    return o.gradient(x, floor)


def profile(pm: ProfileMap, x) -> np.ndarray:
    return pm.profile(x)
