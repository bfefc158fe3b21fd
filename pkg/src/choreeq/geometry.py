"""Nearest feasible points in disutility space and supporting hyperplanes.

The feasible region in disutility space is ``D + R^n_>=0`` where ``D`` is the
image of the fractional allocations. Two projections are provided:

* :func:`nearest_point_linear` runs Wolfe's minimum-norm-point method. For
  linear disutilities ``D`` is a polytope whose vertices are integral
  assignments, and minimizing a linear function over it only needs the
  cheapest agent per chore. The method terminates with an exact affine
  solve, so the result is accurate to rounding error.
* :func:`nearest_point_general` solves the convex program
  ``min sum(beta**2)  s.t.  D_i(z_i) <= q_i + beta_i,  sum_i z_ij >= 1``
  with a log-barrier Newton method.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barrier import barrier_minimize
from .disutility import ProfileMap
from .errors import (DegenerateDirection, DimensionMismatch, NonpositiveEntry, SolverStall,
                     ZeroNormalEntry)
from .instance import Instance


@dataclass(frozen=True)
class NearestPointResult:
    x_star: np.ndarray
    d_star: np.ndarray
    distance: float
    tolerance_used: float
    query: np.ndarray
    gap: float = 0.0


@dataclass(frozen=True)
class Hyperplane:
    a: np.ndarray
    offset: float
    delta: float = 0.0

    @property
    def degenerate(self) -> bool:
        """True when some normal entry is not strictly positive."""
        return bool(np.any(self.a <= 0.0))


def _as_profile_map(obj) -> ProfileMap:
    if isinstance(obj, ProfileMap):
        return obj
    if isinstance(obj, Instance):
        return ProfileMap.from_instance(obj)
    raise TypeError(f"expected Instance or ProfileMap, got {type(obj).__name__}")


def _as_matrix(obj) -> np.ndarray:
    if isinstance(obj, Instance):
        return obj.matrix()
    if isinstance(obj, ProfileMap):
        return obj.matrix
    D = np.asarray(obj, dtype=float)
    if D.ndim != 2:
        raise DimensionMismatch("coefficient matrix must be two-dimensional")
    return D


# ------------------------------------------------------------ Wolfe's method

class _LinearPolytope:
    """``D + [0, B]^n`` for a linear instance, shifted by ``-q``.

    Vertices are pairs (assignment of chores to agents, subset of boosted
    coordinates); ``allowed`` masks out forbidden (agent, chore) pairs.
    """

    def __init__(self, D, q, allowed=None):
        self.D = D
        self.q = q
        self.n, self.m = D.shape
        if allowed is None:
            self.cost_mask = np.zeros_like(D)
        else:
            allowed = np.asarray(allowed, dtype=bool)
            if not np.all(allowed.any(axis=0)):
                raise DimensionMismatch("every chore needs at least one allowed agent")
            self.cost_mask = np.where(allowed, 0.0, np.inf)
        pos = np.maximum(np.where(np.isfinite(self.cost_mask), D, 0.0), 0.0)
        self.B = float(max(0.0, q.max()) + pos.sum(axis=1).max()
                       + np.abs(np.minimum(D, 0.0)).sum() + 1.0)
        self._cols = np.arange(self.m)

    def vertex(self, assign, boost):
        v = np.bincount(assign, weights=self.D[assign, self._cols], minlength=self.n)
        return v + self.B * boost - self.q

    def minimize(self, c):
        assign = np.argmin(c[:, None] * self.D + self.cost_mask, axis=0)
        boost = (c < 0).astype(float)
        return self.vertex(assign, boost), assign, boost


def _affine_min_norm(S):
    """Weights ``mu`` (summing to 1) of the min-norm point of ``aff(S)``."""
    s0 = S[0]
    if len(S) == 1:
        return np.ones(1)
    B = (S[1:] - s0).T
    w = np.linalg.lstsq(B, -s0, rcond=None)[0]
    return np.concatenate([[1.0 - w.sum()], w])


def _wolfe(P: _LinearPolytope, tol: float, max_iter: int):
    c0 = np.ones(P.n)
    v, assign, boost = P.minimize(c0)
    S = [v]
    atoms = [(assign, boost)]
    lam = np.ones(1)
    x = v.copy()
    gap = np.inf
    eps_w = 1e-14
    for _ in range(max_iter):
        v, assign, boost = P.minimize(x)
        scale = max(max(float(s @ s) for s in S), float(v @ v), 1e-300)
        gap = float(x @ x - x @ v)
        if gap <= tol * scale:
            break
        if any(np.array_equal(assign, a) and np.array_equal(boost, b) for a, b in atoms):
            break  # numerically optimal: the oracle returned a corral point
        S.append(v)
        atoms.append((assign, boost))
        lam = np.append(lam, 0.0)
        for _minor in range(10 * (P.n + 2)):
            A = np.array(S)
            mu = _affine_min_norm(A)
            if np.all(mu > eps_w):
                lam = mu
                x = mu @ A
                break
            neg = mu <= eps_w
            denom = lam[neg] - mu[neg]
            theta = float(np.min(np.where(denom > 0, lam[neg] / np.where(denom > 0, denom, 1), 1.0)))
            lam = (1.0 - theta) * lam + theta * mu
            keep = lam > eps_w
            if not keep.any():
                keep[np.argmax(lam)] = True
            S = [s for s, k in zip(S, keep) if k]
            atoms = [a for a, k in zip(atoms, keep) if k]
            lam = lam[keep] / lam[keep].sum()
            x = lam @ np.array(S)
    else:
        raise SolverStall(f"minimum-norm-point iteration did not converge (gap {gap:.3e})")
    return x, lam, atoms, gap


def _allocation_from_atoms(n, m, lam, atoms, B):
    X = np.zeros((n, m))
    boost = np.zeros(n)
    cols = np.arange(m)
    for w, (assign, b) in zip(lam, atoms):
        X[assign, cols] += w
        boost += w * B * b
    return X, boost


def _repair(pm_values, x, q, full_values):
    """Raise ``x`` row by row until its profile dominates ``q``.

    Rows with positive disutility are scaled (1-homogeneity); rows with zero
    disutility receive an even spread of every chore.
    """
    target = np.maximum(pm_values, q)
    x = x.copy()
    for i in range(x.shape[0]):
        if target[i] > pm_values[i]:
            if pm_values[i] > 0:
                x[i] *= target[i] / pm_values[i]
            elif full_values[i] > 0:
                x[i] += target[i] / full_values[i]
    return x, target


def nearest_point_linear(inst, query, tol: float = 1e-14, *, allowed=None,
                         rescale: bool = True, max_iter: int = 10000) -> NearestPointResult:
    """Project ``query`` onto ``D + R^n_>=0`` for a linear instance.

    Parameters
    ----------
    inst : Instance, ProfileMap or array
        Linear coefficients ``D`` of shape ``(n, m)``.
    query : array
        Point to project.
    tol : float
        Relative stopping gap of the min-norm-point iteration. At exit the
        normal ``r = y - query`` satisfies ``<r, v> >= <r, y> - tol * scale``
        for every vertex ``v``.
    allowed : bool array, optional
        Mask of (agent, chore) pairs that may receive mass.
    rescale : bool
        Scale rows up so the returned allocation's profile equals ``d_star``.
        Disabled in the signed (mixed) setting, where only the componentwise
        max with the query is applied.
    """
    D = _as_matrix(inst)
    q = np.asarray(query, dtype=float)
    n, m = D.shape
    if q.shape != (n,):
        raise DimensionMismatch(f"query has shape {q.shape}, expected ({n},)")
    P = _LinearPolytope(D, q, allowed)
    x, lam, atoms, gap = _wolfe(P, tol, max_iter)
    X, _ = _allocation_from_atoms(n, m, lam, atoms, P.B)
    values = (D * X).sum(axis=1)
    if rescale:
        full = (D * (np.isfinite(P.cost_mask))).sum(axis=1)
        X, d_star = _repair(values, X, q, full)
        d_star = (D * X).sum(axis=1)
    else:
        d_star = np.maximum(values, q)
    return NearestPointResult(X, d_star, float(np.linalg.norm(d_star - q)), tol, q, gap)


# ---------------------------------------------------- general convex program

def allocation_barrier(zf, n: int, m: int, derivatives: bool):
    """Barrier for ``0 < z < 2`` and ``sum_i z_ij > 1`` on a flattened ``n x m`` allocation.

    Returns ``inf`` outside the domain, the value otherwise, and with
    ``derivatives`` also the gradient and Hessian.
    """
    col = zf.reshape(n, m).sum(axis=0) - 1.0
    if np.any(zf <= 0) or np.any(zf >= 2) or np.any(col <= 0):
        return np.inf if not derivatives else (np.inf, None, None)
    f = -np.log(col).sum() - np.log(zf).sum() - np.log(2.0 - zf).sum()
    if not derivatives:
        return f
    g = -1 / zf + 1 / (2 - zf) - np.tile(1 / col, n)
    H = np.diag(1 / zf ** 2 + 1 / (2 - zf) ** 2) + np.tile(np.diag(1 / col ** 2), (n, n))
    return f, g, H


NEAREST_TOL_FLOOR = 1e-11


def _snap(z, grid):
    if grid < 1e-15:
        return z  # below double resolution for entries of order one
    snapped = np.round(z / grid) * grid
    short = snapped.sum(axis=0) < 1.0
    if np.any(short):
        snapped[:, short] = np.ceil(z[:, short] / grid) * grid
    return np.maximum(snapped, 0.0)


def nearest_point_general(pm, query, eps1: float, *, tol: float | None = None) -> NearestPointResult:
    """Project ``query`` onto ``D + R^n_>=0`` through the convex program.

    Variables are ``z`` (``n x m``, kept in ``(0, 2)``) and ``beta``. The
    barrier path is followed until ``t`` reaches about ``10 / tol``; ``tol``
    defaults to ``max(eps1, NEAREST_TOL_FLOOR)`` because ``eps1`` is often
    far below what double precision can resolve.
    """
    pm = _as_profile_map(pm)
    q = np.asarray(query, dtype=float)
    n, m = pm.n, pm.m
    if q.shape != (n,):
        raise DimensionMismatch(f"query has shape {q.shape}, expected ({n},)")
    tol_used = max(eps1, NEAREST_TOL_FLOOR) if tol is None else tol
    N = n * m
    oracles = pm.oracles
    M = 2.0 * float(pm.full_bundle_values(2.0).max()) + float(np.abs(q).max()) + 1.0

    def evaluate(v, t, derivatives):
        zf = v[:N]
        beta = v[N:]
        base = allocation_barrier(zf, n, m, derivatives)
        if not np.isfinite(base if not derivatives else base[0]) or np.any(np.abs(beta) >= M):
            return np.inf
        z = zf.reshape(n, m)
        vals = np.array([o._value(z[i]) for i, o in enumerate(oracles)])
        s = q + beta - vals
        if np.any(s <= 0):
            return np.inf
        extra = (t * float(beta @ beta) - np.log(s).sum()
                 - np.log(M - beta).sum() - np.log(M + beta).sum())
        if not derivatives:
            return base + extra
        fz, gz, Hz = base
        g = np.empty(N + n)
        H = np.zeros((N + n, N + n))
        g[N:] = 2 * t * beta + 1 / (M - beta) - 1 / (M + beta) - 1 / s
        H[N:, N:] = np.diag(2 * t + 1 / (M - beta) ** 2 + 1 / (M + beta) ** 2 + 1 / s ** 2)
        g[:N] = gz
        H[:N, :N] = Hz
        for i, o in enumerate(oracles):
            sl = slice(i * m, (i + 1) * m)
            gi = o._gradient(z[i])
            g[sl] += gi / s[i]
            H[sl, sl] += np.outer(gi, gi) / s[i] ** 2 + o._hessian(z[i]) / s[i]
            H[sl, N + i] -= gi / s[i] ** 2
            H[N + i, sl] -= gi / s[i] ** 2
        return fz + extra, g, H

    z0 = np.full((n, m), 1.5 / n)
    beta0 = np.array([o._value(z0[i]) for i, o in enumerate(oracles)]) - q + 1.0
    t_final = float(min(1e13, max(1e4, 10.0 / tol_used)))
    v, _, _ = barrier_minimize(evaluate, np.concatenate([z0.ravel(), beta0]), t_final=t_final)
    z = _snap(v[:N].reshape(n, m), eps1 / 2.0 ** 20)
    values = pm.profile(z)
    z, _ = _repair(values, z, q, pm.full_bundle_values())
    d_star = pm.profile(z)
    # the row rescale can land an ulp below the query; eps1 is too small to cover that
    for _ in range(8):
        short = d_star < q
        if not short.any():
            break
        z[short] *= np.nextafter(q[short] / d_star[short], np.inf)[:, None]
        d_star = pm.profile(z)
    return NearestPointResult(z, d_star, float(np.linalg.norm(d_star - q)), tol_used, q)


def pareto_lift(pm, r: NearestPointResult, eps1: float) -> NearestPointResult:
    """Add ``2 * L * eps1`` to every allocation entry and recompute the profile."""
    pm = _as_profile_map(pm)
    shift = 2.0 * pm.L * eps1
    x = r.x_star + shift
    d = pm.profile(x)
    return NearestPointResult(x, d, float(np.linalg.norm(d - r.query)), r.tolerance_used,
                              r.query, r.gap)


# ------------------------------------------------------------- hyperplanes

def supporting_hyperplane(query, d_plus, delta: float = 0.0, weights=None) -> Hyperplane:
    """Normal ``a`` proportional to ``d_plus - query`` with ``<a, d_plus> = sum(weights)``."""
    q = np.asarray(query, dtype=float)
    dp = np.asarray(d_plus, dtype=float)
    if q.shape != dp.shape:
        raise DimensionMismatch("query and d_plus differ in shape")
    r = dp - q
    denom = float(r @ dp)
    if not np.any(r != 0.0) or denom <= 0.0:
        raise DegenerateDirection("d_plus coincides with the query; no separating direction")
    offset = float(len(q) if weights is None else np.sum(weights))
    return Hyperplane(offset / denom * r, offset, float(delta))


def hyperplane_max_nsw(h: Hyperplane, weights=None) -> np.ndarray:
    """Maximizer of ``sum(eta_i log d_i)`` on ``<a, d> = sum(eta)``, i.e. ``eta / a``."""
    if np.any(h.a <= 0.0):
        raise ZeroNormalEntry("hyperplane normal has a nonpositive entry")
    eta = np.ones_like(h.a) if weights is None else np.asarray(weights, dtype=float)
    return eta / h.a


def delta_bound(n: int, m: int, L: float, eps1: float, eps2: float) -> float:
    """Worst-case hyperplane slack of the general method."""
    return 9.0 * n ** 5 * m * L ** 3 * eps1 / eps2 ** 2


def support_value(inst, a, allowed=None) -> float:
    """``min over x in F of <a, D(x)>`` for a linear instance: ``sum_j min_i a_i D_ij``."""
    D = _as_matrix(inst)
    a = np.asarray(a, dtype=float)
    W = a[:, None] * D
    if allowed is not None:
        W = np.where(np.asarray(allowed, dtype=bool), W, np.inf)
    return float(W.min(axis=0).sum())



def support_value_general(pm, a, *, t_final: float = 1e12) -> float:
    """Lower bound on ``min over z in F' of sum_i a_i D_i(z_i)``."""
    return support_point_general(pm, a, t_final=t_final)[0]


def support_point_general(pm, a, *, t_final: float = 1e12):
    """Minimize ``sum_i a_i D_i(z_i)`` over allocations with column sums >= 1.

    Returns ``(lower_bound, z)``: ``z`` is the barrier minimizer (strictly
    feasible, so its value is an upper bound) and ``lower_bound`` subtracts
    the central-path gap. For linear maps the exact vertex answer is used.
    """
    pm = _as_profile_map(pm)
    a = np.asarray(a, dtype=float)
    if pm.is_linear:
        W = a[:, None] * pm.matrix
        z = np.zeros_like(W)
        z[np.argmin(W, axis=0), np.arange(pm.m)] = 1.0
        return float(W.min(axis=0).sum()), z
    n, m = pm.n, pm.m
    N = n * m
    oracles = pm.oracles

    def evaluate(v, t, derivatives):
        base = allocation_barrier(v, n, m, derivatives)
        z = v.reshape(n, m)
        if not derivatives:
            if not np.isfinite(base):
                return np.inf
            return base + t * sum(a[i] * o._value(z[i]) for i, o in enumerate(oracles))
        f, g, H = base
        if not np.isfinite(f):
            return np.inf
        f = f + t * sum(a[i] * o._value(z[i]) for i, o in enumerate(oracles))
        for i, o in enumerate(oracles):
            sl = slice(i * m, (i + 1) * m)
            g[sl] += t * a[i] * o._gradient(z[i])
            H[sl, sl] += t * a[i] * o._hessian(z[i])
        return f, g, H

    v0 = np.full(N, 1.5 / n)
    v, _, _ = barrier_minimize(evaluate, v0, t_final=t_final)
    z = v.reshape(n, m)
    upper = float(sum(a[i] * o._value(z[i]) for i, o in enumerate(oracles)))
    return upper - (2 * N + m) / t_final, z


def check_positive(v, what: str = "vector") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if np.any(~(v > 0)):
        raise NonpositiveEntry(f"{what} must be strictly positive")
    return v
