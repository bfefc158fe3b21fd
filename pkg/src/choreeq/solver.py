"""Exterior-point loops that produce approximate KKT certificates.

Both loops keep an infeasible profile ``d`` strictly below the feasible set,
project it onto ``D + R^n_>=0``, build the supporting hyperplane at the
projection and jump to the point of that hyperplane maximizing the log-Nash
potential ``sum(eta_i log d_i)``. They stop once the jump is shorter than
``epsilon`` in the ``logd`` metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .disutility import ProfileMap
from .errors import (IterationCapExceeded, NonpositiveEntry, ParameterError, SolverStall)
from .geometry import (delta_bound, hyperplane_max_nsw, nearest_point_general,
                       nearest_point_linear, pareto_lift, support_value,
                       support_value_general, supporting_hyperplane)
from .instance import Instance

TRACE_COLUMNS = ("iter", "potential", "dist_to_feasible", "logd_step", "branch")

# Relative distance below which a linear query counts as lying on D. The
# error of the projected normal grows like (machine eps * scale) / distance
# and the error of reusing the previous normal like the distance itself;
# they cross near 1e-8.
ON_FACE_TOL = 1e-8


@dataclass(frozen=True)
class SolverParams:
    epsilon: float = 0.05
    eps1: float | None = None
    eps2: float | None = None
    eps3: float | None = None
    max_iters: int = 10000
    weights: tuple | None = None
    trace: bool = True
    qp_tol: float = 1e-14

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ParameterError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        for name in ("eps1", "eps2", "eps3"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ParameterError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be at least 1")
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
            if any(not w > 0 for w in self.weights):
                raise ParameterError("weights must be positive")

    def general_split(self, n: int, m: int, L: float):
        """Resolve ``(eps1, eps2, eps3)`` for the general loop.

        Defaults: ``eps3 = epsilon``; ``eps2 = n^4 m^3 L^3 eps1^(1/6)`` capped
        below ``eps3 / 10``; ``eps1`` is the smaller of
        ``epsilon * 1e-6 / (n^4 m^4 L^6)`` and ``eps2^3 / (48 n^7 m L^6)``.
        Explicit values are checked against the same ordering.
        """
        eps3 = self.epsilon if self.eps3 is None else self.eps3
        base1 = self.epsilon * 1e-6 / (n ** 4 * m ** 4 * L ** 6)
        eps1_seed = base1 if self.eps1 is None else self.eps1
        if self.eps2 is None:
            eps2 = min(n ** 4 * m ** 3 * L ** 3 * eps1_seed ** (1.0 / 6.0), eps3 / 10.0)
        else:
            eps2 = self.eps2
        cap1 = eps2 ** 3 / (48.0 * n ** 7 * m * L ** 6)
        eps1 = min(base1, cap1) if self.eps1 is None else self.eps1
        if eps1 > cap1 * (1 + 1e-12):
            raise ParameterError(f"eps1={eps1:.3e} exceeds eps2^3/(48 n^7 m L^6)={cap1:.3e}")
        if eps2 < 10.0 * n ** 3 * m ** 3 * L ** 3 * eps1:
            raise ParameterError("eps2 must be at least 10 n^3 m^3 L^3 eps1")
        if eps2 >= eps3:
            raise ParameterError("eps2 must be smaller than eps3")
        return float(eps1), float(eps2), float(eps3)


@dataclass(frozen=True)
class TraceRow:
    iter: int
    potential: float
    dist_to_feasible: float
    logd_step: float
    branch: str

    def as_tuple(self):
        return (self.iter, self.potential, self.dist_to_feasible, self.logd_step, self.branch)


@dataclass
class KktCertificate:
    """Approximate KKT point ``(a, d, x)`` with measured error terms.

    ``gamma`` is ``max_i max(a_i d_i / eta_i, eta_i / (a_i d_i))``; ``lambda_``
    bounds the column sums of ``x`` multiplicatively; ``delta`` is the measured
    slack of the hyperplane ``<a, y> >= sum(eta)`` over the feasible set.
    ``potential_trace`` holds ``L(d^1), L(d^1_*), L(d^2), ...`` in order.
    """

    a: np.ndarray
    d: np.ndarray
    x: np.ndarray
    gamma: float
    lambda_: float
    delta: float
    iterations: int
    potential_trace: list
    trace: list = field(default_factory=list)
    mode: str = "linear"
    branch: str = "stop"
    weights: np.ndarray | None = None
    bounds: dict = field(default_factory=dict)


# ------------------------------------------------------------------ helpers

def log_nsw(d, weights=None) -> float:
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise NonpositiveEntry("log-Nash potential needs a strictly positive profile")
    logs = np.log(d)
    if weights is None:
        return float(logs.sum())
    return float((np.asarray(weights, dtype=float) * logs).sum())


def log_dist(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(~(x > 0)) or np.any(~(y > 0)):
        raise NonpositiveEntry("logd needs strictly positive vectors")
    return float(np.abs(np.log(x / y)).sum())


def round_down(d, digits: int = 12) -> np.ndarray:
    """Round each positive entry down to ``digits`` significant digits."""
    d = np.asarray(d, dtype=float)
    out = np.empty_like(d)
    for k, v in enumerate(d):
        if v <= 0 or not math.isfinite(v):
            out[k] = v
            continue
        e = math.floor(math.log10(v))
        scale = 10.0 ** (digits - 1 - e)
        r = math.floor(v * scale) / scale
        while r > v:
            r = math.nextafter(r, 0.0)
        out[k] = r
    return out


def initial_point_linear(inst) -> np.ndarray:
    """``(m * min_ij D_ij / (2n)) * 1``, strictly below the feasible set."""
    D = inst.matrix() if isinstance(inst, Instance) else np.asarray(inst, dtype=float)
    n, m = D.shape
    return np.full(n, m * float(D.min()) / (2.0 * n))


def initial_allocation_general(pm: ProfileMap, spread: bool = True) -> np.ndarray:
    """Starting allocation for the general loop.

    ``spread=False`` puts ``1/(2 n L^2)`` on entry (0, 0) only, which leaves
    every other agent at zero disutility. The default spreads
    ``1/(2 n m L^2)`` over every entry so all agents start strictly positive.
    """
    n, m, L = pm.n, pm.m, pm.L
    if spread:
        return np.full((n, m), 1.0 / (2.0 * n * m * L ** 2))
    x0 = np.zeros((n, m))
    x0[0, 0] = 1.0 / (2.0 * n * L ** 2)
    return x0


def initial_point_general(pm: ProfileMap, spread: bool = True) -> np.ndarray:
    return pm.profile(initial_allocation_general(pm, spread))


def iteration_bound(inst, epsilon: float) -> int:
    """``16 (n^2/eps^2) (n log(m maxD) - n log(m minD / 2n))`` for a linear instance."""
    D = inst.matrix() if isinstance(inst, Instance) else np.asarray(inst, dtype=float)
    n, m = D.shape
    span = n * math.log(m * D.max()) - n * math.log(m * D.min() / (2.0 * n))
    return math.ceil(16.0 * n ** 2 / epsilon ** 2 * span)


def measured_gamma(a, d, weights=None) -> float:
    eta = np.ones(len(a)) if weights is None else np.asarray(weights, dtype=float)
    r = np.asarray(a) * np.asarray(d) / eta
    return float(np.max(np.maximum(r, 1.0 / r)))


def measured_lambda(x) -> float:
    cols = np.asarray(x).sum(axis=0)
    return float(np.max(np.maximum(cols, 1.0 / cols)))


@dataclass(frozen=True)
class ProgressReport:
    monotone: bool
    violations: list
    bound: float
    gains: list

    @property
    def ok(self) -> bool:
        return self.monotone and not self.violations


def progress_check(potential_trace, epsilon: float, n: int, weights=None,
                   slack: float = 1e-12) -> ProgressReport:
    """Check monotonicity of the checkpoints and the per-iteration gain.

    The trace alternates ``L(d^k), L(d^k_*)``; iteration ``k`` gains
    ``L(d^{k+1}) - L(d^k)`` and must gain at least ``eps^2 min(eta) / (16 n^2)``.
    """
    tr = list(potential_trace)
    min_eta = 1.0 if weights is None else float(np.min(weights))
    bound = epsilon ** 2 * min_eta / (16.0 * n ** 2)
    monotone = all(b >= a - slack for a, b in zip(tr, tr[1:]))
    iterates = tr[0::2]
    gains = [b - a for a, b in zip(iterates, iterates[1:])]
    violations = [(k + 1, g) for k, g in enumerate(gains) if g < bound - slack]
    return ProgressReport(monotone, violations, bound, gains)


# -------------------------------------------------------------- linear loop

def solve_kkt_linear(inst, params: SolverParams = SolverParams(), *, allowed=None,
                     d0=None, rescale: bool = True) -> KktCertificate:
    """Exterior-point loop for linear disutilities.

    ``allowed`` and ``rescale`` are forwarded to the projection; the signed
    (mixed) pipeline uses them together with a custom ``d0``.
    """
    D = inst.matrix() if isinstance(inst, Instance) else np.asarray(inst, dtype=float)
    n, m = D.shape
    eps = params.epsilon
    eta = None if params.weights is None else np.asarray(params.weights, dtype=float)
    d = round_down(initial_point_linear(D) if d0 is None else np.asarray(d0, dtype=float))
    potentials = []
    rows = []
    a_prev = None

    def certificate(a, d_star, x, k, branch):
        slack = max(0.0, float(a @ d_star) - support_value(D, a, allowed))
        return KktCertificate(
            a=a, d=d_star, x=x, gamma=measured_gamma(a, d_star, eta),
            lambda_=measured_lambda(x), delta=slack, iterations=k,
            potential_trace=potentials, trace=rows if params.trace else [],
            mode="linear", branch=branch, weights=eta,
            bounds={"gamma": math.exp(eps), "lambda": 1.0, "delta": 0.0})

    for k in range(1, params.max_iters + 1):
        potentials.append(log_nsw(d, eta))
        r = nearest_point_linear(D, d, params.qp_tol, allowed=allowed, rescale=rescale)
        d_star = np.maximum(r.d_star, d)
        potentials.append(log_nsw(d_star, eta))
        if a_prev is not None and r.distance <= ON_FACE_TOL * float(np.linalg.norm(d)):
            # The query already lies on the face supported by the previous
            # hyperplane; d_star - d is rounding noise there, while a_prev
            # is an accurate normal with a_prev * d = eta.
            rows.append(TraceRow(k, potentials[-2], r.distance, 0.0, "on_face"))
            return certificate(a_prev, d_star, r.x_star, k, "on_face")
        h = supporting_hyperplane(d, d_star, weights=eta)
        d_next = hyperplane_max_nsw(h, eta)
        step = log_dist(d_next, d_star)
        if step < eps:
            rows.append(TraceRow(k, potentials[-2], r.distance, step, "stop"))
            return certificate(h.a, d_star, r.x_star, k, "stop")
        rows.append(TraceRow(k, potentials[-2], r.distance, step, "continue"))
        a_prev = h.a
        d = round_down(d_next)
    raise IterationCapExceeded(f"no KKT point within {params.max_iters} iterations", rows)


# ------------------------------------------------------------- general loop

def solve_kkt_general(pm, params: SolverParams = SolverParams(), *, d0=None) -> KktCertificate:
    """Exterior-point loop for convex 1-homogeneous disutilities.

    Each projection is followed by a lift of ``2 L eps1`` on every allocation
    entry. If the lifted point is within ``eps2`` of the query, the previous
    normal is returned together with the allocation rescaled row-wise to the
    current profile.
    """
    if isinstance(pm, Instance):
        pm = ProfileMap.from_instance(pm)
    n, m, L = pm.n, pm.m, pm.L
    eps1, eps2, eps3 = params.general_split(n, m, L)
    eta = None if params.weights is None else np.asarray(params.weights, dtype=float)
    d = round_down(initial_point_general(pm) if d0 is None else np.asarray(d0, dtype=float))
    potentials = []
    rows = []
    a_prev = None
    analytic = _general_bounds(n, m, L, eps1, eps2, eps3)
    for k in range(1, params.max_iters + 1):
        potentials.append(log_nsw(d, eta))
        r = nearest_point_general(pm, d, eps1)
        lifted = pareto_lift(pm, r, eps1)
        d_plus = lifted.d_star
        if np.any(d_plus < d):
            raise SolverStall("lifted nearest point does not dominate the query")
        potentials.append(log_nsw(d_plus, eta))
        gap = float(np.linalg.norm(d_plus - d))
        if gap <= eps2:
            if a_prev is None:
                raise SolverStall("early-exit branch reached on the first iteration")
            y = lifted.x_star * (d / d_plus)[:, None]
            rows.append(TraceRow(k, potentials[-2], r.distance, 0.0, "early"))
            return _general_certificate(pm, a_prev, d, y, k, potentials, rows, params,
                                        eta, "early", analytic)
        h = supporting_hyperplane(d, d_plus, delta=analytic["delta"], weights=eta)
        d_next = hyperplane_max_nsw(h, eta)
        step = log_dist(d_next, d_plus)
        if step < eps3:
            rows.append(TraceRow(k, potentials[-2], r.distance, step, "stop"))
            return _general_certificate(pm, h.a, d_plus, lifted.x_star, k, potentials, rows,
                                        params, eta, "stop", analytic)
        rows.append(TraceRow(k, potentials[-2], r.distance, step, "continue"))
        a_prev = h.a
        d = round_down(d_next)
    raise IterationCapExceeded(f"no KKT point within {params.max_iters} iterations", rows)


def _general_bounds(n, m, L, eps1, eps2, eps3):
    alpha = 48.0 * n ** 7 * m * L ** 6 * eps1 / eps2 ** 3
    return {
        "eps1": eps1, "eps2": eps2, "eps3": eps3,
        "gamma": math.exp(eps3),
        "lambda": 1.0 + 3.0 * m * n ** 2 * L ** 3 * (alpha + eps2),
        "delta": delta_bound(n, m, L, eps1, eps2),
    }


def _general_certificate(pm, a, d, x, k, potentials, rows, params, eta, branch, analytic):
    offset = float(len(a) if eta is None else eta.sum())
    inner = float(a @ d)
    if abs(inner - offset) > 1e-8 * offset:
        raise SolverStall(f"<a, d> = {inner!r} differs from {offset!r}")
    slack = max(0.0, offset - support_value_general(pm, a))
    return KktCertificate(
        a=a, d=d, x=x, gamma=measured_gamma(a, d, eta), lambda_=measured_lambda(x),
        delta=slack, iterations=k, potential_trace=potentials,
        trace=rows if params.trace else [], mode="general", branch=branch,
        weights=eta, bounds=dict(analytic))


def with_weights(params: SolverParams, weights) -> SolverParams:
    return replace(params, weights=None if weights is None else tuple(weights))
