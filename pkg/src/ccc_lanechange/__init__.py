"""Compliance-controlled cooperative lane changing in mixed CAV/HDV traffic."""

from .compliance import (AgentComplianceState, ComplianceConfig, GlobalControllerState,
                         MeasurementMode, clamp_unit, compliance_probability,
                         instantaneous_compliance, measure_error, step_all, update_global,
                         update_local, update_windowed_average)
from .engine import (ControllerMode, ManeuverResult, SimConfig, ablation_run, metrics,
                     run_maneuver, sweep_initial_compliance)
from .errors import (AllPairsInfeasibleError, BoundViolation, CccError, ConfigError, DomainError,
                     InfeasibleError, NoConvergenceError, ScenarioError)
from .model import (ControlInput, RoadGeometry, SafetyParams, Scenario, Vehicle, VehicleClass,
                    VehicleParams, VehicleState, safety_distance, speed_disruption,
                    step_dynamics, validate_scenario)
from .ocp import (CostWeights, OcpSpec, Trajectory, analytic_min_energy_oracle, energy_of,
                  solve_fixed_time_ocp, solve_free_time_ocp, solve_hdv_behavior_ocp,
                  solve_lateral_ocp)
from .planner import candidate_set, lateral_trigger, plan_references
from .qp import QpProblem, solve_qp
from .scenario_io import load_scenario, save_scenario, write_traces

__version__ = "0.1.0"
