"""
Averaging schemes and their weights
===================================

Every scheme is a streaming sink: push iterates one at a time and read the
current estimate. Here we look at the implied weights, the variance
prefactor n * sum(w**2), and the weight-condition report.
"""

# %%
import numpy as np

from wasgd import (SchemeConfig, StepSchedule, Unsupported, check_weight_conditions, make_averager,
                   materialize_weights, parse_scheme, prefactor, prefactor_numeric)

schemes = [parse_scheme(s) for s in
           ("uniform", "poly:gamma=3", "suffix:kappa=0.5", "online-suffix", "adaptive:alpha=0.505")]

# %% Weights at a small horizon. The adaptive scheme puts n^(alpha-1) on the last iterate.
n = 10
for cfg in schemes:
    w = materialize_weights(cfg, n).w
    print(f"{cfg.name:22s}", np.array2string(w, precision=3, suppress_small=True))

# %% Streaming and materialized weights agree.
xs = np.cumsum(np.random.default_rng(0).normal(size=(500, 2)), axis=0) / np.arange(1, 501)[:, None]
for cfg in schemes:
    avg = make_averager(cfg)
    for i, x in enumerate(xs, start=1):
        avg.push(i, x)
    gap = np.max(np.abs(avg.estimate - materialize_weights(cfg, 500).w @ xs))
    print(f"{cfg.name:22s} streaming vs weights: {gap:.1e}")

# %% Prefactors converge to their closed forms.
for cfg in schemes:
    try:
        limit = f"{prefactor(cfg):.4f}"
    except Unsupported:
        limit = "n/a"
    vals = [prefactor_numeric(cfg, m) for m in (10**2, 10**3, 10**4, 10**5)]
    print(f"{cfg.name:22s} limit {limit:>7s}  numeric", np.round(vals, 4))

# %% The condition report for one scheme (same text as `wasgd check-scheme`).
print(check_weight_conditions(SchemeConfig("suffix", kappa=0.5), 10**4, 0.5, StepSchedule()).describe())
