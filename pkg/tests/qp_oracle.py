"""Brute-force QP oracle: solve the KKT system of every active set."""

from itertools import combinations

import numpy as np


def enumerate_active_sets(H, c, G, h, A=None, b=None, feas_tol=1e-9):
    """Minimum of 0.5 x'Hx + c'x over {Gx <= h, Ax = b}, or None if infeasible.

    ``H`` must be positive definite.  Every subset of inequalities is tried as
    the active set; the best primal- and dual-feasible KKT point wins.
    """
    n = len(c)
    A = np.zeros((0, n)) if A is None else A
    b = np.zeros(0) if b is None else b
    best = None
    m = len(h)
    for r in range(0, min(m, n - len(b)) + 1):
        for active in combinations(range(m), r):
            act = list(active)
            K_rows = np.vstack([A, G[act]]) if len(b) + r else np.zeros((0, n))
            rhs = np.concatenate([b, h[act]])
            k = len(rhs)
            K = np.block([[H, K_rows.T], [K_rows, np.zeros((k, k))]])
            try:
                sol = np.linalg.solve(K, np.concatenate([-c, rhs]))
            except np.linalg.LinAlgError:
                continue
            x, mult = sol[:n], sol[n:]
            if np.any(mult[len(b):] < -feas_tol):
                continue
            if m and np.max(G @ x - h) > feas_tol:
                continue
            obj = 0.5 * x @ H @ x + c @ x
            if best is None or obj < best[1] - 1e-12:
                best = (x, obj)
    return best
