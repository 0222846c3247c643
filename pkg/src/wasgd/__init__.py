"""Weighted-average SGD: averaging schemes, online inference and optimal weights."""

from .averaging import (SchemeConfig, WeightVector, check_theorem2, check_weight_conditions,
                        finalize_suffix, make_averager, materialize_weights, parse_scheme, prefactor,
                        prefactor_numeric, smoothness_sum)
from .errors import (ConfigError, InsufficientBuffer, LevelNotTabulated, NonFinite,
                     NotAvailable, NotSpd, OutOfOrder, Unsupported, WasgdError,
                     ZeroInitError, ZeroRegressor)
from .inference import (CriticalValueTable, PluginState, RandomScalingState,
                        plugin_interval, plugin_update, rs_interval, rs_update,
                        simulate_critical_values)
from .models import (ModelSpec, Observation, SandwichTruth, draw, expectile_model, gradient,
                     linear_model, logistic_model, mean_model, sandwich_truth)
from .numerics import RngStream, gaussian_vector, invert_spd, ks_distance
from .optimal import (CovarianceEstimate, WeightSolution, blue_weights, closed_form_weights,
                      closed_form_weights_with_init, estimate_sigma, oracle_weights_expectile,
                      theta_diag_check)
from .sgd import SgdState, StepSchedule, run_batch, run_trajectory, sgd_step, step_size

__version__ = "0.1.0"
