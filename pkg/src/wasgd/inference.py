"""Online confidence intervals for weighted-average SGD estimates.

Two routes: a plug-in sandwich estimate ``A^{-1} S A^{-T}`` from running
Hessian and gradient outer-product sums, and random scaling, which
studentizes with centered partial sums of the iterates and uses quantiles of
``W(1) / sqrt(int_0^1 (W(r) - r W(1))^2 dr)``.

All state classes accept a leading batch axis (one row per replication).
"""

import csv
import hashlib
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .errors import LevelNotTabulated
from .models import ModelSpec, Observation, gradient, hessian
from .numerics import DEFAULT_RIDGE, RngStream, invert_spd, symmetrize

CRITICAL_VALUE_FILE = "rs_critical_values.csv"


class PluginState:
    """Running sums of per-observation Hessians and gradient outer products.

    The Hessian is evaluated at the pre-step iterate ``x_{i-1}`` so the
    estimate is built in the same single pass as SGD.
    """

    def __init__(self, model: ModelSpec, batch_shape=()):
        d = model.d
        self.model = model
        self.A_acc = np.zeros(tuple(batch_shape) + (d, d))
        self.S_acc = np.zeros(tuple(batch_shape) + (d, d))
        self.n = 0

    def observe(self, x, obs: Observation):
        plugin_update(self, self.model, x, obs)

    def sandwich(self, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
        """``V_hat = A_hat^{-1} S_hat A_hat^{-T}``, batched over leading axes."""
        a_hat = self.A_acc / self.n
        s_hat = self.S_acc / self.n
        batch = a_hat.shape[:-2]
        flat_a = a_hat.reshape((-1,) + a_hat.shape[-2:])
        inv = np.stack([invert_spd(m, ridge) for m in flat_a]).reshape(a_hat.shape)
        return symmetrize(inv @ s_hat @ np.swapaxes(inv, -1, -2)).reshape(batch + a_hat.shape[-2:])


def plugin_update(state: PluginState, model: ModelSpec, x, obs: Observation) -> PluginState:
    g = gradient(model, x, obs)
    state.A_acc += hessian(model, x, obs)
    state.S_acc += g[..., :, None] * g[..., None, :]
    state.n += 1
    return state


def _z(level: float) -> float:
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    return float(ndtri((1 + level) / 2))


def plugin_interval(state: PluginState, estimate, prefactor_w: float, level: float = 0.95,
                    ridge: float = DEFAULT_RIDGE):
    """``estimate_j +/- z * sqrt(w V_jj / n)``; returns ``(lo, hi)`` arrays."""
    if state.n < state.model.d:
        raise ValueError("plug-in interval needs at least d observations")
    v = state.sandwich(ridge)
    diag = np.diagonal(v, axis1=-2, axis2=-1)
    half = _z(level) * np.sqrt(prefactor_w * diag / state.n)
    est = np.asarray(estimate, float)
    return est - half, est + half


class RandomScalingState:
    """Accumulators for the random-scaling matrix.

    With partial sums ``P_s = sum_{i<=s} y_i`` the matrix is
    ``n^{-2} [sum P_s P_s' - (sum s P_s) ybar' - ybar (sum s P_s)' + (sum s^2) ybar ybar']``
    where ``ybar = P_n / n``. Iterates are shifted by the first one
    (``y_i = x_i - x_1``); the matrix is shift invariant and the shift keeps
    the sums from cancelling catastrophically when the iterates sit far from
    the origin.
    """

    def __init__(self):
        self.t = 0
        self.shift = None
        self.S_partial = None
        self.M_ss = None
        self.M_s1 = None
        self.m_s2 = 0.0

    def push(self, i, x):
        rs_update(self, x)

    @property
    def mean(self):
        return self.shift + self.S_partial / self.t

    def matrix(self) -> np.ndarray:
        n = self.t
        ybar = self.S_partial / n
        cross = self.M_s1[..., :, None] * ybar[..., None, :]
        v = (self.M_ss - cross - np.swapaxes(cross, -1, -2)
             + self.m_s2 * ybar[..., :, None] * ybar[..., None, :])
        return symmetrize(v / n ** 2)


def rs_update(state: RandomScalingState, x) -> RandomScalingState:
    x = np.asarray(x, dtype=float)
    if state.t == 0:
        state.shift = x.copy()
        state.S_partial = np.zeros_like(x)
        state.M_ss = np.zeros(x.shape + x.shape[-1:])
        state.M_s1 = np.zeros_like(x)
    state.t += 1
    s = state.t
    state.S_partial = state.S_partial + (x - state.shift)
    p = state.S_partial
    state.M_ss += p[..., :, None] * p[..., None, :]
    state.M_s1 += s * p
    state.m_s2 += float(s) * s
    return state


def rs_matrix_direct(xs) -> np.ndarray:
    """Two-pass evaluation of the random-scaling matrix from a stored path (n, d)."""
    xs = np.asarray(xs, dtype=float)
    n = xs.shape[0]
    centered = np.cumsum(xs - xs.mean(axis=0), axis=0) / np.sqrt(n)
    return centered.T @ centered / n


@dataclass
class CriticalValueTable:
    levels: np.ndarray
    quantiles: np.ndarray
    grid: int
    paths: int
    seed: int

    def __post_init__(self):
        self.levels = np.asarray(self.levels, float)
        self.quantiles = np.asarray(self.quantiles, float)
        if np.any(np.diff(self.quantiles) <= 0) or np.any(np.diff(self.levels) <= 0):
            raise ValueError("levels and quantiles must be strictly increasing")

    def quantile(self, level: float) -> float:
        """Two-sided critical value: the ``(1 + level)/2`` quantile of the pivot."""
        target = (1 + level) / 2
        hit = np.flatnonzero(np.isclose(self.levels, target, rtol=0, atol=1e-9))
        if hit.size == 0:
            raise LevelNotTabulated(f"no critical value for level {level} "
                                    f"(probability {target}) in the table")
        return float(self.quantiles[hit[0]])

    @property
    def provenance(self) -> str:
        return f"grid={self.grid},paths={self.paths},seed={self.seed}"

    def digest(self) -> str:
        body = ",".join(f"{l!r}:{q!r}" for l, q in zip(self.levels, self.quantiles))
        return hashlib.sha256(f"{self.provenance};{body}".encode()).hexdigest()[:12]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["level", "quantile", "grid", "paths", "seed"])
            for lvl, q in zip(self.levels, self.quantiles):
                writer.writerow([repr(float(lvl)), repr(float(q)), self.grid, self.paths, self.seed])

    @classmethod
    def read_csv(cls, path) -> "CriticalValueTable":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
        if not rows:
            raise ValueError(f"empty critical-value file {path}")
        return cls([float(r["level"]) for r in rows], [float(r["quantile"]) for r in rows],
                   int(rows[0]["grid"]), int(rows[0]["paths"]), int(rows[0]["seed"]))


def default_table() -> CriticalValueTable:
    """The shipped table (simulated once by the ``critical-values`` command)."""
    ref = resources.files("wasgd") / "data" / CRITICAL_VALUE_FILE
    with resources.as_file(ref) as path:
        return CriticalValueTable.read_csv(path)


def rs_interval(state: RandomScalingState, estimate, prefactor_w: float, level: float = 0.95,
                table: CriticalValueTable = None):
    """``estimate_j +/- q * sqrt(w (V_rs)_jj / n)``; returns ``(lo, hi)`` arrays."""
    if table is None:
        table = default_table()
    q = table.quantile(level)
    diag = np.diagonal(state.matrix(), axis1=-2, axis2=-1)
    half = q * np.sqrt(prefactor_w * diag / state.t)
    est = np.asarray(estimate, float)
    return est - half, est + half


# -- pivot simulation ------------------------------------------------------

DEFAULT_LEVELS = (0.005, 0.025, 0.05, 0.1, 0.5, 0.9, 0.95, 0.975, 0.995)


def brownian_pivots(increments) -> np.ndarray:
    """Pivot ``W(1) / sqrt(int (W(r) - r W(1))^2 dr)`` for each row of increments.

    Rows are i.i.d. Gaussian increments of one path on a uniform grid of
    ``N`` cells; the integral is the right-endpoint Riemann sum. The pivot is
    scale free, so the increments need not be normalized by ``sqrt(N)``.
    """
    w = np.cumsum(increments, axis=1)
    n = w.shape[1]
    k = np.arange(1, n + 1, dtype=float)
    w1 = w[:, -1]
    # sum_k (W_k - (k/N) W_N)^2 expanded to avoid a second (paths, N) array
    sq = np.einsum("ij,ij->i", w, w) - 2 * w1 * (w @ k) / n + w1 ** 2 * (k @ k) / n ** 2
    return w1 / np.sqrt(sq / n)


def simulate_pivots(grid: int, paths: int, rng: RngStream, chunk: int = 500) -> np.ndarray:
    out = np.empty(paths)
    done = 0
    while done < paths:
        m = min(chunk, paths - done)
        out[done:done + m] = brownian_pivots(rng.normal((m, grid)))
        done += m
    return out


def simulate_critical_values(grid: int, paths: int, levels: Sequence[float] = DEFAULT_LEVELS,
                             rng: RngStream = None, seed: int = 0,
                             enforce_minimums: bool = True) -> CriticalValueTable:
    """Empirical quantiles of the random-scaling pivot.

    Upper-tail quantiles are symmetrized through ``|pivot|`` (the law is
    symmetric): the ``p`` quantile for ``p > 1/2`` is the ``2p - 1`` quantile
    of ``|pivot|`` and lower tails are its negation.
    """
    if enforce_minimums and (grid < 1000 or paths < 10**5):
        raise ValueError("critical values need grid >= 1e3 and paths >= 1e5")
    if rng is None:
        rng = RngStream(seed, 0)
    piv = np.abs(simulate_pivots(grid, paths, rng))
    levels = np.sort(np.asarray(levels, float))
    quant = np.empty(levels.size)
    for j, p in enumerate(levels):
        if p == 0.5:
            quant[j] = 0.0
        else:
            q = np.quantile(piv, abs(2 * p - 1))
            quant[j] = q if p > 0.5 else -q
    return CriticalValueTable(levels, quant, grid, paths, rng.seed)


def bridge_pivots_spectral(paths: int, rng: RngStream, terms: int = 200) -> np.ndarray:
    """Pivot draws from the sine-series expansion of the Brownian bridge.

    ``int_0^1 B(r)^2 dr = sum_k Z_k^2 / (k pi)^2`` and ``B`` is independent of
    ``W(1)``; the series tail beyond ``terms`` is replaced by its mean. This
    is a grid-free cross-check for ``simulate_critical_values``.
    """
    k = np.arange(1, terms + 1, dtype=float)
    lam = 1.0 / (k * np.pi) ** 2
    tail = 1.0 / 6.0 - lam.sum()  # sum over all k of 1/(k pi)^2 is 1/6
    out = np.empty(paths)
    chunk = 20_000
    for start in range(0, paths, chunk):
        m = min(chunk, paths - start)
        z = rng.normal((m, terms + 1))
        out[start:start + m] = z[:, 0] / np.sqrt((z[:, 1:] ** 2) @ lam + tail)
    return out
