"""Distributed Nash equilibrium seeking for networks of heterogeneous linear agents."""

from .engine import (SwarmState, TelemetryRow, TrajectoryLog, consensus_error,
                     consensus_estimate, init_state, lyapunov_value,
                     reference_update, run, step, tracking_update)
from .game import (GameSpec, GradientConvention, NePoint,
                   best_response_fixed_point, closed_form_ne, cost,
                   project_box, pseudo_gradient, solve_ne)
from .graph import (CommGraph, DropoutMask, apply_dropout, build_complete,
                    build_ring, is_strongly_connected, metropolis_weights)
from .plant import (PlantModel, RegulatorGains, check_controllability,
                    check_regulator_rank, control_input, plant_step,
                    solve_regulator_equations, spectral_radius,
                    synthesize_gains, synthesize_stabilizing_gain)
from .scenario import Scenario, load_bundled, load_scenario, parse_scenario

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
