"""Refundable-toll compliance controllers.

Each agent carries a local cost ``c`` and a windowed average ``M_bar`` of its
instantaneous compliance ``M``; a single global cost ``C`` is shared by the
population.  The compliance probability is a clamped weighted sum of the
agent's proclivity and the two costs.  All updates are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

from .errors import ConfigError
from .model import VehicleState


class MeasurementMode(str, Enum):
    MICROSCOPIC = "microscopic"
    MACROSCOPIC = "macroscopic"


@dataclass(frozen=True)
class ComplianceConfig:
    Q_star: float = 1.0
    alpha: float = 2.0
    beta: float = 0.1
    gamma: float = 0.7
    w_q: float = 1.0
    w_c: float = 0.5
    w_i: float = 0.5
    e_max: float = 0.2
    measurement_mode: MeasurementMode = MeasurementMode.MICROSCOPIC
    M_bar0: float = 1.0  # agents start out trusted
    update_global: bool = True
    update_local: bool = True

    def __post_init__(self):
        if not 0.0 <= self.Q_star <= 1.0:
            raise ConfigError("Q_star must lie in [0, 1]")
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError("controller gains must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        for name in ("w_q", "w_c", "w_i"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.e_max <= 0:
            raise ConfigError("e_max must be positive")
        if not 0.0 <= self.M_bar0 <= 1.0:
            raise ConfigError("M_bar0 must lie in [0, 1]")
        object.__setattr__(self, "measurement_mode", MeasurementMode(self.measurement_mode))


@dataclass(frozen=True)
class AgentComplianceState:
    q: float
    c: float = 0.0
    M_bar: float = 1.0
    P: float = 0.0
    is_controllable: bool = False
    M: float = math.nan  # last instantaneous measurement

    @classmethod
    def initial(cls, q: float, controllable: bool,
                cfg: ComplianceConfig) -> AgentComplianceState:
        agent = cls(q=q, M_bar=cfg.M_bar0, is_controllable=controllable)
        return replace(agent, P=compliance_probability(agent, GlobalControllerState(), cfg))


@dataclass(frozen=True)
class GlobalControllerState:
    C: float = 0.0


def clamp_unit(x: float) -> float:
    if x > 1.0:
        return 1.0
    if x < 0.0:
        return 0.0
    return x


def measure_error(actual: VehicleState, reference: VehicleState) -> float:
    """Euclidean deviation over the longitudinal (x, v) components."""
    return math.hypot(actual.x - reference.x, actual.v - reference.v)


def instantaneous_compliance(e: float, cfg: ComplianceConfig) -> float:
    if cfg.e_max <= 0:
        raise ConfigError("e_max must be positive")
    if e < 0:
        raise ValueError(f"negative error {e}")
    if cfg.measurement_mode is MeasurementMode.MACROSCOPIC:
        return 1.0 if e <= cfg.e_max else 0.0
    return max(1.0 - e / cfg.e_max, 0.0)


def update_windowed_average(M_bar_prev: float, M_k: float, gamma: float) -> float:
    return gamma * M_bar_prev + (1.0 - gamma) * M_k


def update_global(g: GlobalControllerState, mean_M: float,
                  cfg: ComplianceConfig) -> GlobalControllerState:
    return GlobalControllerState(C=max(0.0, g.C + cfg.alpha * (cfg.Q_star - mean_M)))


def update_local(a: AgentComplianceState, cfg: ComplianceConfig) -> AgentComplianceState:
    return replace(a, c=max(0.0, a.c + cfg.beta * (cfg.Q_star - a.M_bar)))


def compliance_probability(a: AgentComplianceState, g: GlobalControllerState,
                           cfg: ComplianceConfig) -> float:
    if a.is_controllable:
        return 1.0
    return clamp_unit(cfg.w_q * a.q + cfg.w_c * g.C + cfg.w_i * a.c)


def step_all(agents: Sequence[AgentComplianceState], g: GlobalControllerState,
             errors: Sequence[float], cfg: ComplianceConfig,
             ) -> tuple[list[AgentComplianceState], GlobalControllerState]:
    """Advance every controller by one sampling step.

    Order: instantaneous compliance, windowed average, global cost (from the
    mean instantaneous compliance), local cost (from the windowed average),
    probability.  ``cfg.update_global`` / ``cfg.update_local`` freeze the
    respective cost for single-controller ablations.
    """
    if len(agents) != len(errors):
        raise ValueError("need exactly one error measurement per agent")
    if all(a.is_controllable for a in agents):
        return list(agents), g

    measured = []
    for a, e in zip(agents, errors):
        M = 1.0 if a.is_controllable else instantaneous_compliance(e, cfg)
        measured.append(replace(a, M=M, M_bar=update_windowed_average(a.M_bar, M, cfg.gamma)))

    if cfg.update_global and measured:
        g = update_global(g, sum(a.M for a in measured) / len(measured), cfg)

    out = []
    for a in measured:
        if cfg.update_local and not a.is_controllable:
            a = update_local(a, cfg)
        out.append(replace(a, P=compliance_probability(a, g, cfg)))
    return out, g
