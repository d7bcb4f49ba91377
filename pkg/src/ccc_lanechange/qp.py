"""Dense convex QP solver.

Solves::

    minimise    0.5 x'Hx + c'x
    subject to  A_eq x  = b_eq
                G x    <= h

with the dual active-set method of Goldfarb and Idnani.  The method starts
from the unconstrained minimiser and adds violated constraints one at a time,
so it is cheap when few constraints bind, which is the common case for the
trajectory problems in this package.  Infeasibility is detected exactly: it is
declared when a violated constraint can be neither added nor made addable by
dropping an active one.

Positive semidefinite ``H`` is handled with proximal-point iterations on
``H + rho I``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, solve_triangular

from .errors import InfeasibleError, NoConvergenceError

# squared sine below which a constraint counts as dependent on the active set
DEPENDENT_TOL = 1e-14


@dataclass
class QpProblem:
    H: np.ndarray
    c: np.ndarray
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    const: float = 0.0
    labels: list[tuple[str, int]] = field(default_factory=list)  # (name, row count) blocks of G

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = self.H.shape[0]
        self.c = np.asarray(self.c, dtype=float).reshape(n)
        if self.G is None:
            self.G, self.h = np.zeros((0, n)), np.zeros(0)
        if self.A_eq is None:
            self.A_eq, self.b_eq = np.zeros((0, n)), np.zeros(0)
        self.G = np.asarray(self.G, dtype=float).reshape(-1, n)
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        if self.H.shape != (n, n) or len(self.h) != len(self.G) or len(self.b_eq) != len(self.A_eq):
            raise ValueError("inconsistent QP dimensions")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def row_label(self, i: int) -> str:
        for name, count in self.labels:
            if i < count:
                return f"{name}[{i}]"
            i -= count
        return f"row[{i}]"

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.c @ x + self.const)

    def max_violation(self, x: np.ndarray) -> float:
        viol = 0.0
        if len(self.h):
            viol = max(viol, float(np.max(self.G @ x - self.h)))
        if len(self.b_eq):
            viol = max(viol, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        return viol


@dataclass
class QpSolution:
    x: np.ndarray
    objective: float
    lam: np.ndarray  # inequality multipliers, >= 0
    mu: np.ndarray  # equality multipliers
    iterations: int

    def kkt_residual(self, qp: QpProblem) -> float:
        """Max-norm of stationarity, complementarity and dual infeasibility."""
        grad = qp.H @ self.x + qp.c + qp.G.T @ self.lam + qp.A_eq.T @ self.mu
        slack = qp.h - qp.G @ self.x if len(qp.h) else np.zeros(0)
        parts = [np.max(np.abs(grad), initial=0.0),
                 np.max(np.abs(self.lam * slack), initial=0.0),
                 np.max(-self.lam, initial=0.0)]
        return float(max(parts))


def solve_qp(qp: QpProblem, tol: float = 1e-9, max_iter: int | None = None) -> QpSolution:
    """Solve ``qp``; raises :class:`InfeasibleError` or :class:`NoConvergenceError`."""
    try:
        factor = cho_factor(qp.H, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return _solve_proximal(qp, tol, max_iter)
    if np.min(np.abs(np.diag(factor[0]))) < 1e-10 * max(1.0, np.max(np.abs(np.diag(qp.H)))):
        return _solve_proximal(qp, tol, max_iter)
    return _goldfarb_idnani(qp, np.tril(factor[0]), tol, max_iter)


def _solve_proximal(qp: QpProblem, tol: float, max_iter: int | None) -> QpSolution:
    scale = max(1.0, float(np.max(np.abs(qp.H)))) if qp.H.size else 1.0
    rho = 1e-2 * scale
    Hr = qp.H + rho * np.eye(qp.n)
    L = np.linalg.cholesky(Hr)
    x = np.zeros(qp.n)
    total = 0
    for _ in range(5000):
        sub = QpProblem(Hr, qp.c - rho * x, qp.G, qp.h, qp.A_eq, qp.b_eq, qp.const)
        sol = _goldfarb_idnani(sub, L, tol, max_iter)
        total += sol.iterations
        step = np.max(np.abs(sol.x - x), initial=0.0)
        x = sol.x
        if step <= 1e-12 * max(1.0, np.max(np.abs(x), initial=0.0)):
            return QpSolution(x, qp.objective(x), sol.lam, sol.mu, total)
    raise NoConvergenceError("proximal iterations did not settle")


def _goldfarb_idnani(qp: QpProblem, L: np.ndarray, tol: float,
                     max_iter: int | None) -> QpSolution:
    n = qp.n
    m_eq, m_in = len(qp.b_eq), len(qp.h)
    # every constraint stored as  N_j' x >= b_j
    N = np.vstack([qp.A_eq, -qp.G]) if m_eq + m_in else np.zeros((0, n))
    b = np.concatenate([qp.b_eq, -qp.h])
    row_scale = np.maximum(1.0, np.abs(b))
    if max_iter is None:
        max_iter = 10 * (n + m_eq + m_in) + 50

    Linv = solve_triangular(L, np.eye(n), lower=True, check_finite=False)
    x = -Linv.T @ (Linv @ qp.c)
    NL = N @ Linv.T  # row j holds L^-1 n_j
    active: list[int] = []
    u = np.zeros(0)
    eq_sign = np.ones(m_eq)
    it = 0

    def directions(p_vec):
        w = Linv @ p_vec
        if active:
            B = NL[active].T
            if m_eq:
                B = B * np.array([eq_sign[j] if j < m_eq else 1.0 for j in active])
            try:
                r = np.linalg.solve(B.T @ B, B.T @ w)
            except np.linalg.LinAlgError:
                r, *_ = np.linalg.lstsq(B, w, rcond=None)
            resid = w - B @ r
        else:
            r, resid = np.zeros(0), w
        return Linv.T @ resid, r, float(resid @ resid), float(w @ w)

    pending_eq = list(range(m_eq))
    while True:
        if pending_eq:
            p = pending_eq.pop(0)
            s_p = N[p] @ x - b[p]
            if s_p > 0:
                eq_sign[p] = -1.0
                s_p = -s_p
            if abs(s_p) <= tol * row_scale[p]:
                z, _, zz, ww = directions(N[p] * eq_sign[p])
                if zz <= DEPENDENT_TOL * max(ww, 1.0):
                    continue  # redundant equality
        else:
            if not m_in:
                break
            s = N[m_eq:] @ x - b[m_eq:]
            viol = s / row_scale[m_eq:]
            if active:
                viol[[j - m_eq for j in active if j >= m_eq]] = np.inf
            j = int(np.argmin(viol))
            if viol[j] >= -tol:
                break
            p = m_eq + j
            s_p = s[j]

        n_p = N[p] * (eq_sign[p] if p < m_eq else 1.0)
        b_p = b[p] * (eq_sign[p] if p < m_eq else 1.0)
        u_plus = np.append(u, 0.0)
        while True:
            it += 1
            if it > max_iter:
                raise NoConvergenceError(f"no convergence after {max_iter} iterations")
            z, r, zz, ww = directions(n_p)
            t1, k_drop = np.inf, -1
            for idx, j in enumerate(active):
                if j >= m_eq and r[idx] > 1e-14:
                    ratio = u_plus[idx] / r[idx]
                    if ratio < t1:
                        t1, k_drop = ratio, idx
            if zz <= DEPENDENT_TOL * max(ww, 1.0):
                if k_drop < 0:
                    raise InfeasibleError("constraints are inconsistent")
                u_plus[:-1] -= t1 * r
                u_plus[-1] += t1
                del active[k_drop]
                u_plus = np.delete(u_plus, k_drop)
                continue
            t2 = -(n_p @ x - b_p) / (z @ n_p)
            t = min(t1, t2)
            x = x + t * z
            u_plus[:-1] -= t * r
            u_plus[-1] += t
            if t2 <= t1:
                active.append(p)
                u = u_plus
                break
            del active[k_drop]
            u_plus = np.delete(u_plus, k_drop)

    lam = np.zeros(m_in)
    mu = np.zeros(m_eq)
    for idx, j in enumerate(active):
        if j >= m_eq:
            lam[j - m_eq] = u[idx]
        else:
            mu[j] = -u[idx] * eq_sign[j]
    if qp.max_violation(x) > 1e3 * tol * float(np.max(row_scale, initial=1.0)):
        raise InfeasibleError("residual constraint violation")
    return QpSolution(x, qp.objective(x), lam, mu, it)


