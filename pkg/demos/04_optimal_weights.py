"""
Optimal (BLUE) weights
======================

For the mean model with eta_1 = 1 the optimal weights have a closed form,
coincide with the adaptive scheme, and reproduce the sample mean. For the
expectile model they are estimated from a Monte-Carlo iterate covariance.
"""

# %%
import numpy as np

from wasgd import (RngStream, SchemeConfig, StepSchedule, blue_weights, closed_form_weights,
                   estimate_sigma, materialize_weights, mean_model, oracle_weights_expectile)

schedule = StepSchedule(1.0, 0.505)
n = 20
closed = closed_form_weights(np.ones(n), schedule)
adaptive = materialize_weights(SchemeConfig("adaptive", alpha=0.505), n).w
print("closed form == adaptive:", np.allclose(closed.c, adaptive), " predicted MSE", closed.predicted_mse)

# %% The same weights from a simulated covariance matrix.
sigma = estimate_sigma(mean_model(0.0), schedule, n, 20_000, RngStream(1))
print("sup gap, Monte-Carlo vs closed form:", np.max(np.abs(blue_weights(sigma).c - closed.c)))

# %% Expectile regression (rho = 0.8): the last iterate still gets the most weight.
oracle = oracle_weights_expectile(0.8, schedule, 30, 10_000, RngStream(2)).c
print("oracle weights (last five):", np.round(oracle[-5:], 3))
for name in ("adaptive", "uniform"):
    cfg = SchemeConfig(name, alpha=0.505) if name == "adaptive" else SchemeConfig(name)
    print(f"sup distance to oracle, {name}: {np.max(np.abs(materialize_weights(cfg, 30).w - oracle)):.3f}")
