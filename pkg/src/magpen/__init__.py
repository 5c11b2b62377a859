"""Electromagnetic haptic drawing guidance.

Closed-loop, time-free contouring control of a moving electromagnet that
gently pulls a pen toward a reference path, plus the analytic dipole force
model it is built on, a deterministic simulation harness, accuracy metrics,
and a live WebSocket session server.
"""

from .dynamics import (AdmissibleSets, ControlInput, KalmanConfig, PenEstimate,
                       SystemState, kalman_init, kalman_predict, kalman_update,
                       project_input, project_state, step)
from .em import (FieldFit, FitError, MagnetModel, actuation_force,
                 actuation_force_tilted, field_bz, fit_dipole,
                 force_strength_ratio, tilt_gain)
from .metrics import MetricsReport, hausdorff_like, resample_equidistant, session_metrics
from .mpcc import (Controller, CostWeights, HorizonSolution, cost_gradient,
                   desired_force, solve, stage_cost)
from .paths import ReferencePath, build_path, load_path_json, make_shape
from .simulate import (ScenarioConfig, SimulatedUser, curvature_sweep,
                       dispersion_experiment, run_scenario, user_step)
from .trace import SessionTrace

__version__ = "0.1.0"
