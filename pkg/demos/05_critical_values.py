"""
Random-scaling critical values
==============================

The pivot W(1) / sqrt(int (W(r) - r W(1))^2 dr) has no closed-form law. It is
simulated on a grid; the sine-series expansion of the Brownian bridge gives a
grid-free check. The shipped table uses 1e6 paths on a 1e4 grid.
"""

# %%
import numpy as np

from wasgd import RngStream, simulate_critical_values
from wasgd.inference import bridge_pivots_spectral, default_table

quick = simulate_critical_values(1000, 100_000, rng=RngStream(5))
series = np.quantile(np.abs(bridge_pivots_spectral(500_000, RngStream(6))), 0.95)
print("grid simulation  q_0.975 =", round(quick.quantile(0.95), 3))
print("sine series      q_0.975 =", round(float(series), 3))
print("shipped table    q_0.975 =", round(default_table().quantile(0.95), 3))
