"""Optimal control problems transcribed to convex QPs.

Longitudinal problems run on a uniform grid with the heading pinned at zero,
where the bicycle model reduces to a double integrator.  States are
eliminated by rolling the dynamics forward, so positions and speeds are
affine in the controls and every path or terminal constraint becomes a linear
inequality on the control vector.

Two schemes are available:

``euler``
    one constant control per interval, forward-Euler states, rectangle-rule
    cost.  This is exactly what the plant integrator does, so a plan computed
    with it is reproduced to rounding by the simulator.
``foh``
    controls at the nodes, linear in between, exact integration of states and
    cost.  Second-order accurate; used to validate against closed-form optima.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np

from .errors import InfeasibleError
from .model import SafetyParams, VehicleParams
from .qp import QpProblem, solve_qp

SCHEMES = ("euler", "foh")
TERMINAL_SPEED_MODES = ("none", "soft", "band", "exact")


@dataclass(frozen=True)
class CostWeights:
    alpha_t: float = 0.6
    alpha_u: float = 0.4
    alpha_v: float = 0.5
    alpha_phi: float = 1.0

    def __post_init__(self):
        if min(self.alpha_t, self.alpha_u, self.alpha_v, self.alpha_phi) < 0:
            raise ValueError("cost weights must be non-negative")


class Track(Protocol):
    def at(self, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


@dataclass(frozen=True)
class ConstantSpeedTrack:
    """A vehicle cruising at constant speed, e.g. the slow obstacle."""

    x0: float
    v: float
    t0: float = 0.0

    def at(self, grid):
        grid = np.asarray(grid, dtype=float)
        return self.x0 + self.v * (grid - self.t0), np.full(grid.shape, self.v)


@dataclass(frozen=True, eq=False)
class Headway:
    """Gap constraint against another vehicle's trajectory.

    ``other_ahead``: the other vehicle leads and ``self`` is the follower,
    ``x_other - x_self >= tau * v_self + delta``.  Otherwise the other vehicle
    follows, ``x_self - x_other >= tau * v_other + delta``.
    """

    other: Track
    other_ahead: bool
    safety: SafetyParams
    terminal_only: bool = False
    label: str = ""


@dataclass(frozen=True, eq=False)
class OcpSpec:
    x0: float
    v0: float
    t_start: float
    t_end: float
    n_grid: int
    bounds: VehicleParams = field(default_factory=VehicleParams)
    weights: CostWeights = field(default_factory=CostWeights)
    v_d: float | None = None
    terminal_speed: str = "soft"
    terminal_speed_tol: float | None = None
    terminal_position: float | None = None
    headway: tuple[Headway, ...] = ()
    accel_bounds: bool = True
    speed_bounds: bool = True
    scheme: str = "euler"
    # behaviour objective: set ``compliance`` to switch from the planner's
    # energy/disruption cost to the compliance-weighted tracking cost
    u_ref: np.ndarray | None = None
    compliance: float | None = None
    disruption: str = "terminal"
    step: float | None = None  # exact grid spacing; overrides the derived one

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.n_grid < 1:
            raise ValueError("n_grid must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.terminal_speed not in TERMINAL_SPEED_MODES:
            raise ValueError(f"unknown terminal speed mode {self.terminal_speed!r}")
        if self.disruption not in ("terminal", "running"):
            raise ValueError(f"unknown disruption mode {self.disruption!r}")
        if self.compliance is not None:
            if not 0.0 <= self.compliance <= 1.0:
                raise ValueError("compliance must lie in [0, 1]")
            if self.u_ref is None or len(self.u_ref) != self.n_controls:
                raise ValueError("behaviour objective needs a reference control per grid slot")

    @property
    def dt(self) -> float:
        if self.step is not None:
            return self.step
        return (self.t_end - self.t_start) / self.n_grid

    @property
    def grid(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_grid + 1)

    @property
    def n_controls(self) -> int:
        return self.n_grid + (self.scheme == "foh")

    @property
    def target_speed(self) -> float:
        return self.bounds.v_d if self.v_d is None else self.v_d


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: np.ndarray
    u: np.ndarray
    x: np.ndarray
    v: np.ndarray
    cost: float = 0.0
    scheme: str = "euler"

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def t_end(self) -> float:
        return float(self.grid[-1])

    def node(self, t: float) -> int:
        k = (t - self.grid[0]) / self.dt
        j = int(round(k))
        if abs(k - j) > 1e-6 or not 0 <= j < len(self.grid):
            raise ValueError(f"time {t} is not a node of this trajectory")
        return j

    def at(self, grid):
        """Positions and speeds on ``grid``; coasts at the final speed past the end."""
        grid = np.asarray(grid, dtype=float)
        k = (grid - self.grid[0]) / self.dt
        j = np.rint(k).astype(int)
        if np.any(np.abs(k - j) > 1e-6) or np.any(j < 0):
            raise ValueError("grid is not aligned with this trajectory")
        last = len(self.grid) - 1
        inside = np.minimum(j, last)
        over = np.maximum(j - last, 0) * self.dt
        return self.x[inside] + self.v[last] * over * (j > last), self.v[inside]

    def control_at(self, t: float) -> float:
        """Piecewise-constant control in force at ``t`` (zero past the end)."""
        j = int(math.floor((t - self.grid[0]) / self.dt + 1e-9))
        return float(self.u[j]) if 0 <= j < len(self.u) else 0.0


@lru_cache(maxsize=256)
def rollup_matrices(n: int, dt: float, scheme: str = "euler") -> tuple[np.ndarray, np.ndarray]:
    """Matrices ``Bx, Bv`` with ``x_j = x0 + j dt v0 + Bx[j] u`` and ``v_j = v0 + Bv[j] u``.

    Results are cached and returned read-only.
    """
    Bx, Bv = _rollup(n, dt, scheme)
    Bx.flags.writeable = False
    Bv.flags.writeable = False
    return Bx, Bv


def _rollup(n, dt, scheme):
    j = np.arange(n + 1)[:, None]
    if scheme == "euler":
        i = np.arange(n)[None, :]
        Bv = np.where(i < j, dt, 0.0)
        Bx = np.where(i < j, dt * dt * (j - 1 - i), 0.0)
        return Bx, Bv
    i = np.arange(n + 1)[None, :]
    # node i contributes to interval i (left end) and interval i-1 (right end)
    left = (i < j).astype(float)
    right = ((i >= 1) & (i <= j)).astype(float)
    Bv = 0.5 * dt * (left + right)
    # integrate v over each earlier interval and add the in-interval parts
    Bx = np.zeros((n + 1, n + 1))
    for row in range(1, n + 1):
        Bx[row] = Bx[row - 1] + dt * Bv[row - 1]
        Bx[row, row - 1] += dt * dt / 3.0
        Bx[row, row] += dt * dt / 6.0
    return Bx, Bv


@lru_cache(maxsize=256)
def _energy_hessian(n: int, dt: float, scheme: str) -> np.ndarray:
    """Hessian of ``integral u^2 dt`` written as ``u' E u``."""
    if scheme == "euler":
        E = dt * np.eye(n)
    else:
        E = np.zeros((n + 1, n + 1))
        k = np.arange(n)
        np.add.at(E, (k, k), dt / 3.0)
        np.add.at(E, (k + 1, k + 1), dt / 3.0)
        E[k, k + 1] = dt / 6.0
        E[k + 1, k] = dt / 6.0
    E.flags.writeable = False
    return E


def transcribe(spec: OcpSpec) -> QpProblem:
    n, dt, scheme = spec.n_grid, spec.dt, spec.scheme
    m = spec.n_controls
    Bx, Bv = rollup_matrices(n, dt, scheme)
    x_free = spec.x0 + dt * np.arange(n + 1) * spec.v0
    v_free = np.full(n + 1, float(spec.v0))
    E = _energy_hessian(n, dt, scheme)
    vd = spec.target_speed
    bN = Bv[n]

    H = np.zeros((m, m))
    c = np.zeros(m)
    const = 0.0
    if spec.compliance is None:
        w = spec.weights
        H += w.alpha_u * E  # (alpha_u / 2) * u'Eu  ->  Hessian alpha_u E
        if spec.terminal_speed == "soft":
            H += 2.0 * w.alpha_v * np.outer(bN, bN)
            c += 2.0 * w.alpha_v * (spec.v0 - vd) * bN
            const += w.alpha_v * (spec.v0 - vd) ** 2
    else:
        P, r = spec.compliance, np.asarray(spec.u_ref, dtype=float)
        # P (u - r)^2 + (1 - P) u^2  =  u^2 - 2 P r u + P r^2
        H += 2.0 * E
        c += -2.0 * P * (E @ r)
        const += P * float(r @ E @ r)
        sw = 1.0 - P
        if spec.disruption == "terminal":
            H += 2.0 * sw * np.outer(bN, bN)
            c += 2.0 * sw * (spec.v0 - vd) * bN
            const += sw * (spec.v0 - vd) ** 2
        else:
            B = Bv[1:]
            H += 2.0 * sw * dt * B.T @ B
            c += 2.0 * sw * dt * B.T @ np.full(n, spec.v0 - vd)
            const += sw * dt * n * (spec.v0 - vd) ** 2

    blocks: list[np.ndarray] = []
    bounds: list[np.ndarray] = []
    labels: list[tuple[str, int]] = []

    def add(rows, rhs, label):
        rows = np.atleast_2d(rows)
        blocks.append(rows)
        bounds.append(np.atleast_1d(np.asarray(rhs, dtype=float)))
        labels.append((label, len(rows)))

    p = spec.bounds
    if spec.accel_bounds:
        eye = np.eye(m)
        add(eye, np.full(m, p.u_max), "u_max")
        add(-eye, np.full(m, -p.u_min), "u_min")
    if spec.speed_bounds:
        add(Bv[1:], p.v_max - spec.v0 + np.zeros(n), "v_max")
        add(-Bv[1:], spec.v0 - p.v_min + np.zeros(n), "v_min")

    grid = spec.grid
    for hw in spec.headway:
        xo, vo = hw.other.at(grid)
        tau, delta = hw.safety.tau_react, hw.safety.delta_len
        nodes = np.array([n]) if hw.terminal_only else np.arange(1, n + 1)
        if hw.other_ahead:
            add(Bx[nodes] + tau * Bv[nodes],
                xo[nodes] - delta - x_free[nodes] - tau * v_free[nodes],
                f"{hw.label}gap_to_lead")
        else:
            add(-Bx[nodes], x_free[nodes] - xo[nodes] - tau * vo[nodes] - delta,
                f"{hw.label}gap_to_rear")

    A_eq: list[np.ndarray] = []
    b_eq: list[float] = []
    if spec.terminal_speed == "band":
        tol = p.delta_v if spec.terminal_speed_tol is None else spec.terminal_speed_tol
        add(bN, vd + tol - spec.v0, "v_terminal_hi")
        add(-bN, spec.v0 - (vd - tol), "v_terminal_lo")
    elif spec.terminal_speed == "exact":
        A_eq.append(bN)
        b_eq.append(vd - spec.v0)
    if spec.terminal_position is not None:
        A_eq.append(Bx[n])
        b_eq.append(spec.terminal_position - x_free[n])

    return QpProblem(
        H, c,
        np.vstack(blocks) if blocks else np.zeros((0, m)),
        np.concatenate(bounds) if bounds else np.zeros(0),
        np.array(A_eq).reshape(-1, m), np.array(b_eq),
        const=const, labels=labels,
    )


def rollout(spec: OcpSpec, u: np.ndarray, cost: float = 0.0) -> Trajectory:
    """States from controls, computed with the same arithmetic as the plant."""
    n, dt = spec.n_grid, spec.dt
    x = np.empty(n + 1)
    v = np.empty(n + 1)
    x[0], v[0] = spec.x0, spec.v0
    if spec.scheme == "euler":
        for k in range(n):
            x[k + 1] = x[k] + v[k] * dt
            v[k + 1] = v[k] + u[k] * dt
    else:
        for k in range(n):
            x[k + 1] = x[k] + v[k] * dt + dt * dt * (2 * u[k] + u[k + 1]) / 6.0
            v[k + 1] = v[k] + 0.5 * dt * (u[k] + u[k + 1])
    return Trajectory(spec.grid, np.asarray(u, dtype=float), x, v, cost, spec.scheme)


def solve_fixed_time_ocp(spec: OcpSpec, tol: float = 1e-9) -> Trajectory:
    """Solve a fixed-horizon problem; raises :class:`InfeasibleError`."""
    qp = transcribe(spec)
    sol = solve_qp(qp, tol=tol)
    return rollout(spec, sol.x, sol.objective)


def solve_free_time_ocp(spec: OcpSpec, T_max: float, time_step: float,
                        grid_dt: float | None = None, tol: float = 1e-9,
                        ) -> tuple[float, Trajectory]:
    """Scan terminal times ``t_start + j * time_step <= T_max``.

    Each candidate costs ``alpha_t (t_f - t_start)`` plus the inner fixed-time
    optimum.  With ``grid_dt`` the grid spacing is held fixed and the number
    of intervals grows with the horizon; otherwise ``spec.n_grid`` is used for
    every candidate.  Ties go to the smaller ``t_f``.  The scan stops once the
    time cost alone exceeds the best total, which cannot discard an optimum
    because every other term is non-negative.
    """
    if T_max <= spec.t_start:
        raise ValueError("T_max must exceed t_start")
    alpha_t = spec.weights.alpha_t
    best: tuple[float, Trajectory] | None = None
    best_cost = math.inf
    j = 1
    while True:
        t_f = spec.t_start + j * time_step
        if t_f > T_max + 1e-9:
            break
        if alpha_t * (t_f - spec.t_start) > best_cost + 1e-9:
            break
        if _cost_lower_bound(spec, t_f) > best_cost + 1e-9:
            j += 1
            continue
        n = spec.n_grid if grid_dt is None else max(1, int(round(j * time_step / grid_dt)))
        try:
            traj = solve_fixed_time_ocp(replace(spec, t_end=t_f, n_grid=n), tol=tol)
        except InfeasibleError:
            j += 1
            continue
        total = traj.cost + alpha_t * (t_f - spec.t_start)
        if total < best_cost - 1e-9:
            best_cost = total
            best = (t_f, replace(traj, cost=total))
        j += 1
    if best is None:
        raise InfeasibleError(f"no feasible terminal time up to {T_max}")
    return best


def _cost_lower_bound(spec: OcpSpec, t_f: float) -> float:
    """Time cost plus the least energy any control needs to meet the terminal speed.

    By Cauchy-Schwarz, ``integral u^2 >= (v(t_f) - v0)^2 / T`` for every scheme,
    and the remaining constraints and terms can only add cost.
    """
    T = t_f - spec.t_start
    bound = spec.weights.alpha_t * T
    if spec.compliance is not None:
        return bound
    vd = spec.target_speed
    if spec.terminal_speed == "exact":
        gap = abs(vd - spec.v0)
    elif spec.terminal_speed == "band":
        tol = spec.bounds.delta_v if spec.terminal_speed_tol is None else spec.terminal_speed_tol
        gap = max(0.0, abs(vd - spec.v0) - tol)
    else:
        return bound
    return bound + 0.5 * spec.weights.alpha_u * gap * gap / T


def analytic_min_energy_oracle(x0: float, v0: float, horizon: float, v_f: float,
                               x_f: float | None = None, n_grid: int = 50,
                               alpha_u: float = 1.0, t_start: float = 0.0) -> Trajectory:
    """Closed-form minimum-energy double-integrator transfer.

    Speed-only terminal condition: constant control.  Position and speed:
    control linear in time, position cubic.  States are exact, sampled on a
    uniform grid; ``u`` holds the control at the nodes; ``cost`` is the exact
    ``integral (alpha_u / 2) u^2 dt``.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    T = horizon
    if x_f is None:
        a, b = (v_f - v0) / T, 0.0
    else:
        # v_f - v0 = aT + bT^2/2 ;  x_f - x0 - v0 T = aT^2/2 + bT^3/6
        A = np.array([[T, T * T / 2], [T * T / 2, T ** 3 / 6]])
        a, b = np.linalg.solve(A, [v_f - v0, x_f - x0 - v0 * T])
    s = T * np.arange(n_grid + 1) / n_grid
    u = a + b * s
    v = v0 + a * s + b * s ** 2 / 2
    x = x0 + v0 * s + a * s ** 2 / 2 + b * s ** 3 / 6
    energy = a * a * T + a * b * T * T + b * b * T ** 3 / 3
    return Trajectory(t_start + s, u, x, v, 0.5 * alpha_u * energy, "foh")


def solve_hdv_behavior_ocp(ref: Trajectory, P: float, spec: OcpSpec,
                           tol: float = 1e-9) -> Trajectory:
    """Compliance-weighted trade-off between tracking ``ref`` and selfish driving.

    Minimises ``sum [P (u - u_ref)^2 + (1 - P) u^2] dt`` plus ``(1 - P)`` times
    the speed disruption, subject to the bounds and headway rows of ``spec``.
    """
    if len(ref.u) != spec.n_controls:
        raise ValueError("reference is not defined on the spec grid")
    bspec = replace(spec, u_ref=np.asarray(ref.u, dtype=float), compliance=float(P),
                    terminal_speed="none" if spec.terminal_speed == "soft" else spec.terminal_speed)
    return solve_fixed_time_ocp(bspec, tol=tol)


@dataclass(frozen=True, eq=False)
class LateralTrajectory:
    grid: np.ndarray
    phi: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    v: float
    cost: float

    @property
    def duration(self) -> float:
        return float(self.grid[-1] - self.grid[0])


def lateral_matrices(n: int, dt: float, v: float, L_w: float) -> tuple[np.ndarray, np.ndarray]:
    """``By, Bth`` with ``y_j = y0 + j dt v th0 + By[j] phi`` and ``th_j = th0 + Bth[j] phi``.

    Small-angle form of the bicycle model: ``y' = v (theta + phi)``,
    ``theta' = (v / L_w) phi``, forward Euler.
    """
    a = dt * v / L_w
    b = dt * v
    j = np.arange(n + 1)[:, None]
    i = np.arange(n)[None, :]
    Bth = np.where(i < j, a, 0.0)
    By = np.where(i < j, b * (a * (j - 1 - i) + 1.0), 0.0)
    return By, Bth


def solve_lateral_ocp(v_const: float, L_w: float, l: float, T_max: float,
                      weights: CostWeights, params: VehicleParams | None = None,
                      time_step: float = 0.05, t_start: float = 0.0, y0: float = 0.0,
                      tol: float = 1e-9) -> tuple[float, LateralTrajectory]:
    """Minimum time-plus-steering-energy lane change at constant speed.

    Moves from ``(y0, theta=0)`` to ``(y0 + l, theta=0)`` keeping
    ``-l/2 <= y - y0 <= 3l/2``.  The grid spacing equals ``time_step`` so the
    plan can be replayed by the plant integrator.
    """
    params = params or VehicleParams()
    best: tuple[float, LateralTrajectory] | None = None
    best_cost = math.inf
    j = 1
    while t_start + j * time_step <= T_max + 1e-9:
        T = j * time_step
        if weights.alpha_t * T > best_cost + 1e-9:
            break
        n = j
        dt = T / n
        By, Bth = lateral_matrices(n, dt, v_const, L_w)
        H = weights.alpha_phi * dt * np.eye(n)
        G, h = [], []
        for k in range(n):
            e = np.zeros(n)
            e[k] = 1.0
            G += [e, -e]
            h += [params.phi_max, -params.phi_min]
        for k in range(1, n + 1):
            G += [By[k], -By[k]]
            h += [1.5 * l, 0.5 * l]
        qp = QpProblem(H, np.zeros(n), np.array(G), np.array(h),
                       np.vstack([By[n], Bth[n]]), np.array([l, 0.0]))
        try:
            sol = solve_qp(qp, tol=tol)
        except InfeasibleError:
            j += 1
            continue
        total = sol.objective + weights.alpha_t * T
        if total < best_cost - 1e-9:
            best_cost = total
            grid = t_start + dt * np.arange(n + 1)
            best = (t_start + T, LateralTrajectory(
                grid, sol.x, y0 + By @ sol.x, Bth @ sol.x, v_const, total))
        j += 1
    if best is None:
        raise InfeasibleError(f"lane change impossible within {T_max - t_start:.3g} s")
    return best


def energy_of(traj: Trajectory) -> float:
    """``integral u^2 dt`` of a trajectory (rectangle rule for piecewise-constant controls)."""
    u = np.asarray(traj.u, dtype=float)
    if len(u) == 0:
        return 0.0
    dt = traj.dt
    if traj.scheme == "foh":
        return float(dt * np.sum(u[:-1] ** 2 + u[:-1] * u[1:] + u[1:] ** 2) / 3.0)
    return float(dt * np.sum(u ** 2))
