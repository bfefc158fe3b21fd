"""Brute-force grid validators for tiny instances.

Everything here enumerates. Nothing is shared with the solver code paths
beyond the disutility oracles, so agreement between the two is evidence
that both are right.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .disutility import CESOracle, LinearOracle, ProfileMap
from .equilibrium import VerifyReport, bundle_residuals, income_residual
from .errors import DimensionMismatch, GridTooLarge, UnsupportedDims, ValidationError
from .instance import Instance

GRID_CAP = 10 ** 8


@dataclass(frozen=True)
class GridSpec:
    resolution: int
    dims: tuple

    def __post_init__(self):
        if int(self.resolution) != self.resolution or self.resolution < 2:
            raise ValidationError("grid resolution must be an integer >= 2")
        n, m = self.dims
        if n < 1 or m < 1:
            raise ValidationError("grid dims must be positive")

    @property
    def column_points(self) -> int:
        """Number of grid points on one column simplex."""
        n, _ = self.dims
        return math.comb(self.resolution + n - 1, n - 1)

    @property
    def size(self) -> int:
        return self.column_points ** self.dims[1]


def simplex_grid(parts: int, resolution: int) -> np.ndarray:
    """All vectors of ``parts`` multiples of ``1/resolution`` summing to one."""
    rows = []
    for bars in itertools.combinations(range(resolution + parts - 1), parts - 1):
        edges = (-1,) + bars + (resolution + parts - 1,)
        rows.append([edges[k + 1] - edges[k] - 1 for k in range(parts)])
    return np.array(rows, dtype=float) / resolution


def _as_pm(obj) -> ProfileMap:
    if isinstance(obj, ProfileMap):
        return obj
    if isinstance(obj, Instance):
        return ProfileMap.from_instance(obj)
    from .instance import Mode, linear_instance
    return ProfileMap.from_instance(linear_instance(obj, mode=Mode.MIXED))


def batch_values(oracle, Y) -> np.ndarray:
    """Disutility of every row of ``Y`` (shape ``(N, m)``)."""
    Y = np.asarray(Y, dtype=float)
    if isinstance(oracle, LinearOracle):
        return Y @ oracle.coef
    if isinstance(oracle, CESOracle):
        if oracle.rho == 1.0:
            return Y @ oracle.coef
        s = Y.max(axis=1)
        safe = np.where(s > 0, s, 1.0)
        v = safe * ((Y / safe[:, None]) ** oracle.rho @ oracle.coef) ** (1.0 / oracle.rho)
        return np.where(s > 0, v, 0.0)
    return np.array([oracle.value(y) for y in Y])


def _profiles(pm: ProfileMap, g: GridSpec):
    """Profiles of every grid allocation, with the column choices that produced them."""
    if g.size > GRID_CAP:
        raise GridTooLarge(f"grid has {g.size} points, cap is {GRID_CAP}")
    n, m = pm.n, pm.m
    S = simplex_grid(n, g.resolution)  # (K, n)
    idx = np.array(np.meshgrid(*[np.arange(len(S))] * m, indexing="ij")).reshape(m, -1).T
    prof = np.empty((len(idx), n))
    for i, o in enumerate(pm.oracles):
        prof[:, i] = batch_values(o, S[idx, i])
    return prof, S, idx


def _allocation(S, row):
    return S[row].T.copy()


def grid_nearest_point(pm, query, g: GridSpec, *, closure: bool = False):
    """Minimal ``||D(x) - query||`` over grid allocations.

    With ``closure`` the distance is to ``D(x) + R^n_>=0`` instead, i.e.
    only coordinates where ``D(x)`` exceeds the query count. Returns
    ``(distance, x_best)``.
    """
    pm = _as_pm(pm)
    q = np.asarray(query, dtype=float)
    if q.shape != (pm.n,):
        raise DimensionMismatch(f"query has shape {q.shape}, expected ({pm.n},)")
    if tuple(g.dims) != (pm.n, pm.m):
        raise DimensionMismatch(f"grid dims {g.dims} do not match {(pm.n, pm.m)}")
    prof, S, idx = _profiles(pm, g)
    diff = prof - q
    if closure:
        diff = np.maximum(diff, 0.0)
    dist = np.sqrt((diff ** 2).sum(axis=1))
    k = int(np.argmin(dist))
    return float(dist[k]), _allocation(S, idx[k])


def grid_error_bound(pm, g: GridSpec) -> float:
    """``L * m / resolution``: how far the grid optimum can be from the true one."""
    pm = _as_pm(pm)
    return pm.L * pm.m / g.resolution


# ------------------------------------------------------------- KKT scan

@dataclass(frozen=True)
class KktCandidate:
    d: np.ndarray
    a: np.ndarray


def _lower_chain(points):
    """Pareto-minimal part of the lower convex hull of 2-d points."""
    pts = sorted(set(map(tuple, np.round(points, 12))))
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    # keep the strictly decreasing prefix
    chain = [hull[0]]
    for p in hull[1:]:
        if p[1] < chain[-1][1]:
            chain.append(p)
        else:
            break
    return np.array(chain)


def _u_of(a, d):
    """``a_1 d_1`` after scaling ``a`` so that ``<a, d> = 2``."""
    return 2.0 * a[0] * d[0] / float(a @ d)


def grid_kkt_scan(inst, g: GridSpec, gamma: float):
    """KKT candidates on the lower boundary of ``D`` for two agents.

    The boundary is the Pareto-minimal lower hull of the grid profiles. Each
    hull vertex is tested with every normal in its cone (between the normals
    of its two edges) and each edge is sampled at ``resolution`` interior
    points with the edge normal. A point is a candidate when some admissible
    ``a`` with ``<a, d> = 2`` has ``1/gamma <= a_i d_i <= gamma``.
    """
    pm = _as_pm(inst)
    if pm.n != 2 or pm.m > 3:
        raise UnsupportedDims("grid_kkt_scan supports n = 2 and m <= 3 only")
    prof, _, _ = _profiles(pm, g)
    chain = _lower_chain(prof)
    lo_u = max(1.0 / gamma, 2.0 - gamma)
    hi_u = min(gamma, 2.0 - 1.0 / gamma)
    out = []
    if len(chain) == 1:
        return out
    normals = []
    for p, q in zip(chain[:-1], chain[1:]):
        nrm = np.array([p[1] - q[1], q[0] - p[0]])  # points up-right, both >= 0
        normals.append(nrm / nrm.sum())
    # vertices: the cone is spanned by the neighbouring edge normals
    for k, d in enumerate(chain):
        cone = []
        if k > 0:
            cone.append(normals[k - 1])
        if k < len(normals):
            cone.append(normals[k])
        if np.any(d <= 0):
            continue
        us = [_u_of(c, d) for c in cone]
        lo, hi = max(min(us), lo_u), min(max(us), hi_u)
        if lo <= hi:
            u = 0.5 * (lo + hi)
            # the normal in the cone that hits this u, normalized to <a, d> = 2
            a = np.array([u / d[0], (2.0 - u) / d[1]])
            out.append(KktCandidate(np.array(d), a))
    for k, (p, q) in enumerate(zip(chain[:-1], chain[1:])):
        nrm = normals[k]
        for s in np.arange(1, g.resolution) / g.resolution:
            d = (1 - s) * p + s * q
            if np.any(d <= 0) or np.any(nrm <= 0):
                continue
            a = 2.0 * nrm / float(nrm @ d)
            if lo_u <= a[0] * d[0] <= hi_u:
                out.append(KktCandidate(d, a))
    return out


def candidate_clusters(cands, gap: float):
    """Group candidates whose profiles chain together within ``gap``."""
    if not cands:
        return []
    pts = sorted((c.d for c in cands), key=lambda d: d[0])
    clusters = [[pts[0]]]
    for d in pts[1:]:
        if np.linalg.norm(d - clusters[-1][-1]) <= gap:
            clusters[-1].append(d)
        else:
            clusters.append([d])
    return [np.array(c) for c in clusters]


# ------------------------------------------------------- exhaustive verify

def grid_optimal_cost(oracle, p, budget: float, resolution: int) -> float:
    """``budget * min D(y)`` over grid bundles with ``<y, p> = 1``.

    Only chores with a positive price can earn anything; the others stay at
    zero. Bundles are ``y_j = z_j / p_j`` with ``z`` on the simplex grid.
    """
    p = np.asarray(p, dtype=float)
    paid = p > 0
    if budget <= 0:
        return 0.0
    if not paid.any():
        return math.inf
    k = int(paid.sum())
    if math.comb(resolution + k - 1, k - 1) > GRID_CAP:
        raise GridTooLarge("bundle grid too large")
    Z = simplex_grid(k, resolution)
    Y = np.zeros((len(Z), len(p)))
    Y[:, paid] = Z / p[paid]
    return budget * float(batch_values(oracle, Y).min())


def exhaustive_verify(inst, x, p, epsilon: float, g: GridSpec, weights=None) -> VerifyReport:
    """Like ``verify_ceei`` but condition (2) is checked by grid enumeration.

    The grid minimum is an upper bound on the true optimal cost, so a pass
    here can only be more lenient than the exact check by the grid error.
    """
    pm = _as_pm(inst)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if x.shape != (pm.n, pm.m) or p.shape != (pm.m,):
        raise DimensionMismatch("allocation or prices do not match the instance")
    if weights is None and isinstance(inst, Instance) and inst.weights is not None:
        weights = inst.weights
    earnings = x @ p
    r1 = income_residual(earnings, weights)
    d = pm.profile(x)
    opt = np.array([grid_optimal_cost(o, p, e, g.resolution)
                    for o, e in zip(pm.oracles, earnings)])
    r2 = float(bundle_residuals(d, opt).max())
    r3 = float(np.max(np.abs(x.sum(axis=0) - 1.0)))
    passed = r1 <= epsilon and r2 <= epsilon and r3 <= epsilon
    return VerifyReport(bool(passed), r1, r2, r3, float(epsilon), earnings, opt)
