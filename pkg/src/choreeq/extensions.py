"""Mixed manna (goods and chores together) and unequal incomes.

Mixed instances store utilities ``U`` (any sign). Agents in ``N+`` like at
least one item; agents in ``N-`` like nothing. An instance is

* positive when some allocation gives every agent in ``N+`` positive utility
  and every agent in ``N-`` zero,
* null when some allocation gives everybody exactly zero,
* negative otherwise.

Positive instances are solved with the Eisenberg-Gale program, null ones by
their witness with zero prices, and negative ones by flipping signs and
running the chores exterior-point loop with a few pairs masked out.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .barrier import barrier_minimize
from .disutility import ProfileMap
from .equilibrium import (EquilibriumCertificate, VerifyReport, from_kkt_general, from_kkt_linear,
                          income_residual, linear_optimal_cost, linprog_tight, verify_ceei)
from .errors import SearchFailed, SolverStall, ValidationError
from .geometry import nearest_point_linear
from .instance import Instance, Mode, linear_instance
from .solver import SolverParams, round_down, solve_kkt_general, solve_kkt_linear, with_weights

log = logging.getLogger(__name__)

WITNESS_TOL = 1e-9


class Category(str, enum.Enum):
    POSITIVE = "Positive"
    NULL = "Null"
    NEGATIVE = "Negative"


@dataclass(frozen=True)
class MixedClassification:
    category: Category
    witness: np.ndarray | None
    value: float = 0.0  # optimum s of the positive LP


def _utilities(inst) -> np.ndarray:
    if isinstance(inst, Instance):
        if not inst.is_linear:
            raise ValidationError("mixed manna needs linear utilities")
        return inst.matrix()
    return np.asarray(inst, dtype=float)


def agent_split(U):
    """Boolean masks ``(N+, N-)``."""
    pos = (np.asarray(U) > 0).any(axis=1)
    return pos, ~pos


def _column_equalities(n, m, extra_cols=0):
    A = np.zeros((m, n * m + extra_cols))
    for j in range(m):
        A[j, j:n * m:m] = 1.0
    return A


def _positive_lp(U):
    n, m = U.shape
    plus, minus = agent_split(U)
    N = n * m
    # variables: x (row-major) then s; maximize s, with s <= 1 to keep it bounded
    cost = np.zeros(N + 1)
    cost[-1] = -1.0
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for i in range(n):
        row = np.zeros(N + 1)
        row[i * m:(i + 1) * m] = U[i]
        if plus[i]:
            r = -row
            r[-1] = 1.0
            A_ub.append(r)
            b_ub.append(0.0)
        else:
            A_eq.append(row)
            b_eq.append(0.0)
    A_eq = np.vstack([_column_equalities(n, m, 1)] + ([np.array(A_eq)] if A_eq else []))
    b_eq = np.concatenate([np.ones(m), b_eq])
    res = linprog_tight(cost, A_ub=np.array(A_ub), b_ub=np.array(b_ub), A_eq=A_eq, b_eq=b_eq,
                        bounds=[(0.0, None)] * N + [(None, 1.0)])
    if res.status != 0:
        return -np.inf, None
    return float(res.x[-1]), np.maximum(res.x[:N].reshape(n, m), 0.0)


def _null_lp(U):
    n, m = U.shape
    N = n * m
    A_eq = np.zeros((m + n, N))
    A_eq[:m] = _column_equalities(n, m)
    for i in range(n):
        A_eq[m + i, i * m:(i + 1) * m] = U[i]
    b_eq = np.concatenate([np.ones(m), np.zeros(n)])
    res = linprog_tight(np.zeros(N), A_eq=A_eq, b_eq=b_eq, bounds=[(0.0, None)] * N)
    if res.status != 0:
        return None
    x = np.maximum(res.x.reshape(n, m), 0.0)
    if np.max(np.abs(A_eq @ x.ravel() - b_eq)) > WITNESS_TOL:
        return None
    return x


def classify_mixed(inst) -> MixedClassification:
    """Positive, Null or Negative, decided by two linear programs."""
    U = _utilities(inst)
    plus, _ = agent_split(U)
    if plus.any():
        s, x = _positive_lp(U)
        if s > WITNESS_TOL:
            return MixedClassification(Category.POSITIVE, x, s)
    x = _null_lp(U)
    if x is not None:
        return MixedClassification(Category.NULL, x, 0.0)
    return MixedClassification(Category.NEGATIVE, None, 0.0)


def witness_residual(U, cls: MixedClassification) -> float:
    """Violation of the category's defining constraints by its witness."""
    U = np.asarray(U, dtype=float)
    x = cls.witness
    plus, minus = agent_split(U)
    util = (U * x).sum(axis=1)
    r = max(float(np.max(np.abs(x.sum(axis=0) - 1.0))), float(max(0.0, -x.min())))
    if cls.category is Category.POSITIVE:
        r = max(r, float(np.max(np.abs(util[minus]), initial=0.0)))
        r = max(r, float(max(0.0, cls.value - util[plus].min())))
    else:
        r = max(r, float(np.max(np.abs(util))))
    return r


# --------------------------------------------------------- Eisenberg-Gale

def _eg_start(U, witness, plus, goods):
    """Strictly interior point for the EG barrier built from a positive witness."""
    x = witness[plus].copy()
    util = (U[plus] * x).sum(axis=1)
    scale = float(np.abs(U).sum()) + 1.0
    tau = min(0.25, 0.25 * float(util.min()) / scale)
    x[:, goods] *= (1.0 - tau)
    return x + tau / (4.0 * x.shape[0])


def eisenberg_gale(U, witness, *, t_final: float = 1e12):
    """Maximize ``sum_{i in N+} log U_i(x_i)``.

    Goods (items somebody likes) satisfy ``sum_i x_ij <= 1``, the rest
    ``sum_i x_ij >= 1``. Agents in ``N-`` only keep items worth zero to them,
    taken from the witness. Returns the full allocation and the prices
    ``p_j = max_{i in N+} U_ij / U_i(x_i)``.
    """
    U = np.asarray(U, dtype=float)
    n, m = U.shape
    plus, minus = agent_split(U)
    goods = (U > 0).any(axis=0)
    Up = U[plus]
    k = Up.shape[0]
    # items the N- agents hold in the witness stay with them
    held = witness[minus].sum(axis=0)
    need = np.where(goods, 1.0, 1.0 - held)
    sign = np.where(goods, 1.0, -1.0)

    def evaluate(v, t, derivatives):
        x = v.reshape(k, m)
        if np.any(x <= 0):
            return np.inf if not derivatives else (np.inf, None, None)
        col = sign * (need - x.sum(axis=0))
        util = (Up * x).sum(axis=1)
        active = need > 0
        if np.any(util <= 0) or np.any(col[active] <= 0):
            return np.inf if not derivatives else (np.inf, None, None)
        # chores already covered by N- agents carry no constraint
        colc = np.where(active, col, 1.0)
        f = -t * np.log(util).sum() - np.log(x).sum() - np.log(colc).sum()
        if not derivatives:
            return f
        g = (-t * Up / util[:, None] - 1.0 / x + np.where(active, sign / colc, 0.0)).ravel()
        H = np.zeros((k * m, k * m))
        for i in range(k):
            sl = slice(i * m, (i + 1) * m)
            H[sl, sl] += t * np.outer(Up[i], Up[i]) / util[i] ** 2
        H += np.diag(1.0 / v ** 2)
        w = np.where(active, 1.0 / colc ** 2, 0.0)
        H += np.tile(np.diag(w), (k, k))
        return f, g, H

    x0 = _eg_start(U, witness, plus, goods)
    v, _, _ = barrier_minimize(evaluate, x0.ravel(), t_final=t_final)
    xp = v.reshape(k, m)
    x = np.zeros((n, m))
    x[plus] = xp
    x[minus] = witness[minus]
    util = (Up * xp).sum(axis=1)
    p = (Up / util[:, None]).max(axis=0)
    return x, p


def verify_goods_market(U, x, p, epsilon: float, agents=None) -> VerifyReport:
    """Equal-budget market check in utility terms.

    Budgets are ``b_i = <x_i, p>`` over ``agents`` (default ``N+``). (1)
    budgets agree within ``1 - eps``; (2) each agent gets at least
    ``(1 - eps)`` of the best utility affordable at her budget; (3) goods
    are allocated with column sums in ``[1 - eps, 1 + eps]``.
    """
    U = np.asarray(U, dtype=float)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if agents is None:
        agents = agent_split(U)[0]
    b = x[agents] @ p
    r1 = income_residual(b)
    util = (U[agents] * x[agents]).sum(axis=1)
    best = np.array([-linear_optimal_cost(-u, -p, -bi) for u, bi in zip(U[agents], b)])
    with np.errstate(invalid="ignore"):
        r2 = np.where(best > 0, np.maximum(0.0, 1.0 - util / np.where(best > 0, best, 1.0)),
                      np.where(util >= best, 0.0, np.inf))
    r2 = float(r2.max(initial=0.0))
    r3 = float(np.max(np.abs(x.sum(axis=0) - 1.0)))
    passed = r1 <= epsilon and r2 <= epsilon and r3 <= epsilon
    return VerifyReport(bool(passed), r1, r2, r3, float(epsilon), b, best)


# ---------------------------------------------------------- negative case

def pareto_mask(U) -> np.ndarray:
    """An item somebody likes never goes to an agent who does not like it."""
    U = np.asarray(U, dtype=float)
    liked = (U > 0).any(axis=0)
    return np.where(liked[None, :], U > 0, True)


def initial_point_mixed_negative(inst, *, allowed=None, max_steps: int = 200,
                                 start: float | None = None) -> np.ndarray:
    """Positive ``delta * 1`` outside ``D + R^n_>=0`` for ``D = -U``.

    Starts at ``delta = start`` (default ``m * max|D_ij|``, which is always
    feasible) and halves until the point is clearly infeasible.
    """
    D = -_utilities(inst)
    n, m = D.shape
    delta = m * float(np.abs(D).max()) if start is None else float(start)
    for _ in range(max_steps):
        q = np.full(n, delta)
        r = nearest_point_linear(D, q, allowed=allowed, rescale=False)
        if r.distance > 1e-9 * delta * np.sqrt(n):
            return round_down(q)
        delta /= 2.0
    raise SearchFailed(f"no infeasible start found in {max_steps} halvings; "
                       "the instance is probably not negative")


def solve_mixed(inst, epsilon: float = 0.05, params: SolverParams | None = None):
    """Route a mixed instance to its category's pipeline.

    Returns ``(classification, certificate)``. For the negative case the
    certificate is for the sign-flipped chores instance ``D = -U``.
    """
    U = _utilities(inst)
    cls = classify_mixed(U)
    n, m = U.shape
    if cls.category is Category.POSITIVE:
        x, p = eisenberg_gale(U, cls.witness)
        report = verify_goods_market(U, x, p, epsilon)
        return cls, EquilibriumCertificate(x, p, float(epsilon), report, "MixedPositive")
    if cls.category is Category.NULL:
        x = cls.witness
        util = (U * x).sum(axis=1)
        r = float(max(np.abs(util).max(), np.abs(x.sum(axis=0) - 1.0).max()))
        report = VerifyReport(r <= WITNESS_TOL, 0.0, float(np.abs(util).max()),
                              float(np.abs(x.sum(axis=0) - 1.0).max()), float(epsilon),
                              np.zeros(n), np.zeros(n))
        return cls, EquilibriumCertificate(x, np.zeros(m), float(epsilon), report, "MixedNull")
    D = -U
    allowed = pareto_mask(U)
    params = SolverParams(epsilon) if params is None else params
    d0 = initial_point_mixed_negative(U, allowed=allowed)
    chores = linear_instance(D, mode=Mode.MIXED)
    cert = solve_kkt_linear(chores, params, allowed=allowed, d0=d0, rescale=False)
    eq = from_kkt_linear(chores, cert, allowed=allowed)
    report = verify_ceei(chores, eq.x, eq.p, 2.0 * params.epsilon)
    return cls, EquilibriumCertificate(eq.x, eq.p, 2.0 * params.epsilon, report, "MixedNegative",
                                       cert)


# -------------------------------------------------------- unequal incomes

WEIGHT_RATIO_WARN = 1e6


def normalize_weights(weights) -> np.ndarray:
    eta = np.asarray(weights, dtype=float)
    if eta.ndim != 1 or np.any(~(eta > 0)) or not np.all(np.isfinite(eta)):
        raise ValidationError("weights must be finite and strictly positive")
    eta = eta / eta.max()
    ratio = 1.0 / float(eta.min())
    if ratio >= WEIGHT_RATIO_WARN:
        warnings.warn(f"weight ratio {ratio:.3g} is large; the iteration bound grows with it",
                      RuntimeWarning, stacklevel=3)
    return eta


def solve_weighted(inst, weights, epsilon: float = 0.05,
                   params: SolverParams | None = None) -> EquilibriumCertificate:
    """Exterior-point loop with incomes ``eta`` (rescaled so ``max eta = 1``)."""
    eta = normalize_weights(weights)
    if isinstance(inst, Instance) and len(eta) != inst.n:
        raise ValidationError(f"{len(eta)} weights for {inst.n} agents")
    params = with_weights(SolverParams(epsilon) if params is None else params, eta)
    if isinstance(inst, Instance) and not inst.is_linear:
        pm = ProfileMap.from_instance(inst)
        return from_kkt_general(pm, solve_kkt_general(pm, params))
    cert = solve_kkt_linear(inst, params)
    return from_kkt_linear(inst, cert)
