"""From KKT certificates to priced allocations, and independent checks.

Prices are payments per unit of chore. An allocation with prices is an
``eps``-equilibrium when

1. earnings ``e_i = <x_i, p>`` (divided by ``eta_i``) agree within a factor ``1 - eps``;
2. each agent's disutility is within ``1 - eps`` of the cheapest bundle that
   earns ``e_i`` at prices ``p``;
3. every column sum lies in ``[1 - eps, 1 + eps]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from .barrier import barrier_minimize
from .disutility import GRAD_FLOOR, LinearOracle, ProfileMap
from .errors import DimensionMismatch, InfeasibleRecovery, SolverStall, ZeroColumn, ZeroPrices
from .geometry import allocation_barrier, support_point_general
from .instance import Instance, Mode, linear_instance
from .solver import KktCertificate, measured_gamma

RECOVERY_TOL = 1e-9
_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


@dataclass(frozen=True)
class VerifyReport:
    passed: bool
    income_ratio_worst: float
    optimal_bundle_worst: float
    feasibility_worst: float
    epsilon: float
    earnings: np.ndarray = field(repr=False, default=None)
    optimal_costs: np.ndarray = field(repr=False, default=None)

    @property
    def residuals(self) -> dict:
        return {"income_ratio_worst": self.income_ratio_worst,
                "optimal_bundle_worst": self.optimal_bundle_worst,
                "feasibility_worst": self.feasibility_worst}


@dataclass
class EquilibriumCertificate:
    x: np.ndarray
    p: np.ndarray
    epsilon: float
    report: VerifyReport
    mode: str = "LinearStrong"
    kkt: KktCertificate | None = None
    weights: np.ndarray | None = None
    measured: dict | None = None

    @property
    def residuals(self) -> dict:
        return self.report.residuals

    @property
    def passed(self) -> bool:
        return self.report.passed


def _pm(obj) -> ProfileMap:
    if isinstance(obj, ProfileMap):
        return obj
    if isinstance(obj, Instance):
        return ProfileMap.from_instance(obj)
    return ProfileMap.from_instance(linear_instance(obj, mode=Mode.MIXED))


def linprog_tight(c, **kw):
    return linprog(c, method="highs", options=dict(_HIGHS), **kw)


# ------------------------------------------------------- certificate -> CEEI

def recover_allocation(D, d, a=None, allowed=None) -> np.ndarray:
    """Solve ``{x >= 0, column sums 1, <D_i, x_i> = d_i}`` by linear programming.

    With a normal ``a`` the LP minimizes the waste ``sum (a_i D_ij - p_j) x_ij``,
    which steers mass onto the cheapest edges.
    """
    D = np.asarray(D, dtype=float)
    d = np.asarray(d, dtype=float)
    n, m = D.shape
    A_eq = np.zeros((m + n, n * m))
    for j in range(m):
        A_eq[j, j::m] = 1.0
    for i in range(n):
        A_eq[m + i, i * m:(i + 1) * m] = D[i]
    b_eq = np.concatenate([np.ones(m), d])
    if a is None:
        cost = np.zeros(n * m)
    else:
        W = np.asarray(a, dtype=float)[:, None] * D
        Wm = W if allowed is None else np.where(allowed, W, np.inf)
        cost = (W - Wm.min(axis=0)).ravel()
    if allowed is None:
        bounds = [(0.0, None)] * (n * m)
    else:
        bounds = [(0.0, None if ok else 0.0) for ok in np.asarray(allowed, bool).ravel()]
    res = linprog_tight(cost, A_eq=A_eq, b_eq=b_eq, bounds=bounds)
    if res.status != 0 or res.x is None:
        raise InfeasibleRecovery(f"allocation recovery LP failed: {res.message}")
    x = np.maximum(res.x.reshape(n, m), 0.0)
    resid = float(np.max(np.abs(A_eq @ x.ravel() - b_eq)))
    if resid > RECOVERY_TOL * max(1.0, float(np.abs(d).max())):
        raise InfeasibleRecovery(f"recovered allocation has residual {resid:.2e}")
    return x


def from_kkt_linear(inst, cert: KktCertificate, *, allowed=None) -> EquilibriumCertificate:
    """Linear rule: ``p_j = min_i a_i D_ij`` and an LP-recovered allocation."""
    pm = _pm(inst)
    D = pm.matrix
    x = recover_allocation(D, cert.d, cert.a, allowed)
    W = cert.a[:, None] * D
    if allowed is not None:
        W = np.where(allowed, W, np.inf)
    p = W.min(axis=0)
    eps = 2.0 * (cert.gamma - 1.0) + RECOVERY_TOL
    report = verify_ceei(pm, x, p, eps, weights=cert.weights)
    return EquilibriumCertificate(x, p, eps, report, "LinearStrong", cert, cert.weights)


def general_prices(pm, a, x, floor: float = GRAD_FLOOR) -> np.ndarray:
    """``p_j = min_i a_i dD_i/dx_ij`` at the allocation ``x``."""
    pm = _pm(pm)
    C = np.array([a[i] * o.gradient(x[i], floor) for i, o in enumerate(pm.oracles)])
    return C.min(axis=0)


def epsilon_from_errors(gamma: float, lambda_: float, delta: float) -> float:
    return max(3.0 * (gamma - 1.0) + 5.0 * delta, lambda_ - 1.0)


def from_kkt_general(pm, cert: KktCertificate) -> EquilibriumCertificate:
    """Gradient prices at the tangency point; ``eps`` from measured errors.

    The certificate allocation may over- or under-allocate chores by a factor
    ``lambda``. Its columns are normalized first, giving an exactly feasible
    pre-image ``x`` whose profile is within ``lambda`` of ``d``. The triple
    ``(a, D(x), x)`` is then re-measured (``gamma`` and the support slack
    ``delta`` against ``<a, D(x)>``), and ``eps = 3 (gamma - 1) + 5 delta``.
    The income argument needs exact feasibility, which is why the raw
    ``lambda`` is not used directly.

    Prices are ``p_j = min_i a_i dD_i/dx_ij`` at the minimizer of
    ``<a, D(z)>`` over the relaxed feasible set, where the hyperplane with
    normal ``a`` supports the sublevel set.
    """
    pm = _pm(pm)
    x = np.asarray(cert.x, dtype=float)
    cols = x.sum(axis=0)
    if np.any(cols <= 0):
        raise ZeroColumn("a chore is not allocated at all")
    x = x / cols
    d = pm.profile(x)
    lower, z = support_point_general(pm, cert.a)
    gamma = measured_gamma(cert.a, d, cert.weights)
    delta = max(0.0, float(cert.a @ d) - lower)
    p = general_prices(pm, cert.a, z)
    eps = epsilon_from_errors(gamma, 1.0, delta)
    report = verify_ceei(pm, x, p, eps, weights=cert.weights)
    measured = {"gamma": gamma, "lambda": 1.0, "delta": delta,
                "certificate_epsilon": epsilon_from_errors(cert.gamma, cert.lambda_, cert.delta)}
    return EquilibriumCertificate(x, p, eps, report, "General", cert, cert.weights, measured)


# ------------------------------------------------------------ verification

def linear_optimal_cost(D_row, p, budget: float, tie_tol: float = 1e-9) -> float:
    """``min <D_row, y>`` over ``y >= 0`` with ``<p, y> >= budget`` (signs allowed).

    Solved through the one-variable dual ``max lam * budget`` subject to
    ``lam * p_j <= D_j`` and ``lam >= 0``. Returns ``inf`` when no bundle
    earns the budget and ``-inf`` when the cost is unbounded below.

    With prices of both signs the dual interval ``[lo, hi]`` is empty exactly
    when trading a paid item against a paying one is profitable without
    limit. In equilibrium the agent is indifferent (``lo == hi``), so an
    inversion within ``tie_tol`` (relative) counts as a tie.
    """
    D_row = np.asarray(D_row, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any((p == 0) & (D_row < 0)):
        return -math.inf
    pos, neg = p > 0, p < 0
    hi = float(np.min(D_row[pos] / p[pos])) if pos.any() else math.inf
    lo = max(0.0, float(np.max(D_row[neg] / p[neg])) if neg.any() else 0.0)
    if lo > hi:
        if lo - hi > tie_tol * max(abs(lo), abs(hi)):
            return -math.inf
        lo = hi
    if budget > 0:
        return math.inf if hi == math.inf else hi * budget
    return lo * budget


def convex_optimal_cost(oracle, p, budget: float, tol: float = 1e-12) -> float:
    """``budget * min{D(y) : y >= 0, <p, y> = 1}`` by direct minimization.

    Only chores with positive price can contribute earnings, so
    ``y_j = w_j / p_j`` with ``w`` on the unit simplex.
    """
    p = np.asarray(p, dtype=float)
    if budget <= 0:
        return 0.0
    idx = np.flatnonzero(p > 0)
    if idx.size == 0:
        return math.inf

    def bundle(w):
        y = np.zeros(p.size)
        y[idx] = np.maximum(w, 0.0) / p[idx]
        return y

    def f(w):
        return oracle.value(bundle(w))

    def grad(w):
        y = bundle(w)
        return oracle.gradient(y, GRAD_FLOOR)[idx] / p[idx]

    k = idx.size
    best = math.inf
    starts = [np.full(k, 1.0 / k)] + [np.eye(k)[j] * (1 - 1e-6) + 1e-6 / k for j in range(k)]
    for w0 in starts:
        res = minimize(f, w0, jac=grad, method="SLSQP", bounds=[(0.0, 1.0)] * k,
                       constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0,
                                     "jac": lambda w: np.ones(k)}],
                       options={"ftol": tol, "maxiter": 500})
        w = np.maximum(res.x, 0.0)
        w = w / w.sum()
        best = min(best, f(w))
    return budget * best


def optimal_costs(pm, p, budgets) -> np.ndarray:
    pm = _pm(pm)
    out = np.empty(pm.n)
    for i, o in enumerate(pm.oracles):
        if isinstance(o, LinearOracle):
            out[i] = linear_optimal_cost(o.coef, p, budgets[i])
        else:
            out[i] = convex_optimal_cost(o, p, budgets[i])
    return out


def income_residual(earnings, weights=None) -> float:
    e = np.asarray(earnings, dtype=float)
    eta = np.ones_like(e) if weights is None else np.asarray(weights, dtype=float)
    r = e / eta
    hi, lo = float(r.max()), float(r.min())
    if hi == lo:
        return 0.0
    if hi <= 0:
        return math.inf
    return max(0.0, 1.0 - lo / hi)


def bundle_residuals(d, opt) -> np.ndarray:
    """Smallest ``eps`` with ``(1 - eps) d_i <= opt_i`` for each agent."""
    out = np.zeros(len(d))
    for i, (di, oi) in enumerate(zip(d, opt)):
        if di <= oi:
            continue
        out[i] = 1.0 - oi / di if di > 0 else math.inf
    return out


def verify_ceei(inst, x, p, epsilon: float, weights=None) -> VerifyReport:
    """Check the three equilibrium conditions at tolerance ``epsilon``."""
    pm = _pm(inst)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if x.shape != (pm.n, pm.m) or p.shape != (pm.m,):
        raise DimensionMismatch(f"x {x.shape} / p {p.shape} do not match n={pm.n}, m={pm.m}")
    if not np.any(p != 0):
        raise ZeroPrices("price vector is identically zero")
    if weights is None and isinstance(inst, Instance) and inst.weights is not None:
        weights = inst.weights
    earnings = x @ p
    r1 = income_residual(earnings, weights)
    d = pm.profile(x)
    opt = optimal_costs(pm, p, earnings)
    r2 = float(bundle_residuals(d, opt).max())
    r3 = float(np.max(np.abs(x.sum(axis=0) - 1.0)))
    passed = r1 <= epsilon and r2 <= epsilon and r3 <= epsilon
    return VerifyReport(bool(passed), r1, r2, r3, float(epsilon), earnings, opt)


# ---------------------------------------------------------------- EF / PO

def ef_po_round(inst, x) -> np.ndarray:
    """Divide every column by its sum so the allocation is exactly feasible."""
    pm = _pm(inst)
    x = np.asarray(x, dtype=float)
    alpha = x.sum(axis=0)
    if np.any(alpha <= 0):
        raise ZeroColumn("a chore is not allocated at all")
    y = x / alpha
    before, after = pm.profile(x), pm.profile(y)
    lo, hi = before / alpha.max(), before / alpha.min()
    slack = 1e-12 * (1.0 + np.abs(before))
    if np.any(after < lo - slack) or np.any(after > hi + slack):
        raise SolverStall("column rescaling moved a disutility outside its bounds")
    return y


@dataclass(frozen=True)
class EFReport:
    min_ratio: float
    passed: bool


def check_ef(inst, y, epsilon: float) -> EFReport:
    """Envy check: ``D_i(y_k) >= (1 - 4 eps) D_i(y_i)`` for every ordered pair."""
    pm = _pm(inst)
    y = np.asarray(y, dtype=float)
    worst = math.inf
    for i, o in enumerate(pm.oracles):
        own = o.value(y[i])
        if own <= 0:
            continue
        for k in range(pm.n):
            if k != i:
                worst = min(worst, o.value(y[k]) / own)
    return EFReport(worst, bool(worst >= 1.0 - 4.0 * epsilon))


@dataclass(frozen=True)
class POReport:
    t_star: float
    passed: bool


def _po_lp(D, c):
    n, m = D.shape
    N = n * m
    cost = np.zeros(N + 1)
    cost[-1] = 1.0
    A_ub = np.zeros((n, N + 1))
    for i in range(n):
        A_ub[i, i * m:(i + 1) * m] = D[i]
        A_ub[i, -1] = -c[i]
    A_eq = np.zeros((m, N + 1))
    for j in range(m):
        A_eq[j, j:N:m] = 1.0
    res = linprog_tight(cost, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=np.ones(m),
                        bounds=[(0.0, None)] * N + [(None, None)])
    if res.status != 0:
        raise SolverStall(f"Pareto LP failed: {res.message}")
    return float(res.fun)


def _po_convex(pm, c):
    n, m = pm.n, pm.m
    active = [i for i in range(n) if c[i] > 0]
    # agents with zero disutility must stay at zero; drop their variables
    na = len(active)
    N = na * m
    orc = [pm.oracles[i] for i in active]
    ca = np.asarray([c[i] for i in active])

    def evaluate(v, t, derivatives):
        zf, s = v[:N], v[N]
        base = allocation_barrier(zf, na, m, derivatives)
        if not np.isfinite(base if not derivatives else base[0]):
            return np.inf
        z = zf.reshape(na, m)
        vals = np.array([o._value(z[k]) for k, o in enumerate(orc)])
        slack = s * ca - vals
        if np.any(slack <= 0):
            return np.inf
        if not derivatives:
            return base + t * s - np.log(slack).sum()
        f, gz, Hz = base
        g = np.concatenate([gz, [t]])
        H = np.zeros((N + 1, N + 1))
        H[:N, :N] = Hz
        for k, o in enumerate(orc):
            sl = slice(k * m, (k + 1) * m)
            gk = o._gradient(z[k])
            grad_s = np.zeros(N + 1)
            grad_s[sl] = -gk
            grad_s[N] = ca[k]
            g -= grad_s / slack[k]
            H += np.outer(grad_s, grad_s) / slack[k] ** 2
            H[sl, sl] += o._hessian(z[k]) / slack[k]
        return f + t * s - np.log(slack).sum(), g, H

    z0 = np.full(N, 1.5 / na)
    vals0 = np.array([o._value(np.full(m, 1.5 / na)) for o in orc])
    s0 = float(np.max(vals0 / ca)) + 1.0
    v, t, _ = barrier_minimize(evaluate, np.concatenate([z0, [s0]]), t_final=1e11)
    return float(v[N]) - (2 * N + m + na) / t


def check_po(inst, y, epsilon: float) -> POReport:
    """Smallest uniform factor ``t`` by which every agent's disutility can be scaled.

    Passes when ``t* > 1 - 2 eps - 1e-9``.
    """
    pm = _pm(inst)
    y = np.asarray(y, dtype=float)
    c = pm.profile(y)
    if pm.is_linear:
        t_star = _po_lp(pm.matrix, c)
    else:
        t_star = _po_convex(pm, c)
    return POReport(t_star, bool(t_star > 1.0 - 2.0 * epsilon - 1e-9))
