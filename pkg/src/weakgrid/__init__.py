"""Desk-scale simulator of a grid-following power converter in weak-grid
faults, with swappable outer-loop controllers: the conventional dual-PI
layer and an offset-free subspace predictive controller."""

from .conventional import (ConventionalGains, ConventionalState,
                           ControlReferences, PiGains, inner_layer,
                           outer_layer)
from .frames import DqVector, active_power, rotate
from .ispc import (ControllerGains, HankelSet, IoLog, IspcConfig,
                   IspcController, IspcRuntime, Predictor, RankReport,
                   SubspacePredictor, build_hankel, check_persistency,
                   compute_gains, control_step, estimate_predictor, excite,
                   increments, optimal_sequence, predict_outputs)
from .metrics import (Metrics, classify_stability, compute_metrics,
                      oscillation_amplitude, rmse, settling_time)
from .plant import (FaultEvent, OutputSample, PlantParams, PlantState,
                    apply_fault_schedule, derivative, measure_outputs,
                    rk4_step)
from .scenario import (ScenarioConfig, ScenarioResult, identify_nominal,
                       init_steady_state, run_scenario)
from .sweep import CriticalResult, critical_reactance
from .trace import Trace

__version__ = "0.1.0"
