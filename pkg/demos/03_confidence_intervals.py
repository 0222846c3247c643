"""
Online confidence intervals from one pass
=========================================

A single SGD run feeds three sinks at once: an averager, a plug-in sandwich
accumulator and the random-scaling accumulators. Nothing else is stored.
"""

# %%
import numpy as np

from wasgd import (PluginState, RandomScalingState, RngStream, StepSchedule, linear_model,
                   make_averager, parse_scheme, plugin_interval, rs_interval, run_trajectory)
from wasgd.inference import default_table

model = linear_model((1.0, -2.0, 0.0, 0.0, 4.0))
schedule = StepSchedule(0.5, 0.505)
scheme = parse_scheme("suffix:kappa=0.5")
avg = make_averager(scheme, horizon=50_000)
plug = PluginState(model)
rs = RandomScalingState()
run_trajectory(schedule, model, 50_000, RngStream(7), sinks=[avg, rs], observers=[plug])

# %% Prefactor 2 for kappa = 0.5 widens both intervals by sqrt(2).
table = default_table()
lo_p, hi_p = plugin_interval(plug, avg.estimate, 2.0, 0.95)
lo_r, hi_r = rs_interval(rs, avg.estimate, 2.0, 0.95, table)
print("x*        ", model.x_star_array)
print("estimate  ", np.round(avg.estimate, 4))
print("plug-in   ", np.round(np.c_[lo_p, hi_p], 4).tolist())
print("rand-scale", np.round(np.c_[lo_r, hi_r], 4).tolist())
print("critical value", table.quantile(0.95), "from", table.provenance)
