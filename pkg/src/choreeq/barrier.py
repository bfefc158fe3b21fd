"""Small dense log-barrier interior-point driver.

The caller supplies ``evaluate(v, t, derivatives)`` returning the barrier
objective ``t * f0(v) - sum(log g_k(v))`` (``inf`` outside the domain) and,
when ``derivatives`` is true, its gradient and Hessian. Problems here have at
most a few dozen variables, so dense Newton steps are cheap.
"""

from __future__ import annotations

import numpy as np

from .errors import SolverStall


def _newton_direction(g, H):
    # Symmetric diagonal scaling keeps the solve usable when barrier terms
    # span many orders of magnitude.
    d = np.sqrt(np.maximum(np.diag(H), 1e-300))
    Hs = H / np.outer(d, d)
    rhs = -g / d
    try:
        step = np.linalg.solve(Hs, rhs)
    except np.linalg.LinAlgError:
        step = np.linalg.lstsq(Hs, rhs, rcond=None)[0]
    return step / d


def barrier_minimize(evaluate, v0, *, t0: float = 1.0, mu: float = 10.0,
                     t_final: float = 1e12, newton_tol: float = 1e-9,
                     max_newton: int = 50, max_total: int = 20000):
    """Follow the central path from ``t0`` until ``t >= t_final``.

    Returns ``(v, t, steps)``. Raises :class:`SolverStall` when the starting
    point is outside the domain or the total Newton budget runs out.
    """
    v = np.asarray(v0, dtype=float).copy()
    t = float(t0)
    if not np.isfinite(evaluate(v, t, False)):
        raise SolverStall("barrier start point is not strictly feasible")
    steps = 0
    while True:
        for _ in range(max_newton):
            f, g, H = evaluate(v, t, True)
            dv = _newton_direction(g, H)
            decrement = -float(g @ dv)
            if not np.isfinite(decrement) or decrement / 2.0 <= newton_tol:
                break
            alpha = 1.0
            while alpha > 1e-16:
                f_new = evaluate(v + alpha * dv, t, False)
                if np.isfinite(f_new) and f_new <= f - 0.25 * alpha * decrement:
                    break
                alpha *= 0.5
            else:
                break  # no descent possible at this precision
            v = v + alpha * dv
            steps += 1
            if steps > max_total:
                raise SolverStall(f"barrier method exceeded {max_total} Newton steps")
        if t >= t_final:
            return v, t, steps
        t = min(t * mu, t_final)
