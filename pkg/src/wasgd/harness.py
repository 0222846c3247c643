"""Monte-Carlo replication harness behind the ``wasgd simulate`` commands.

Replications are grouped into fixed-size chunks. Each chunk runs its
trajectories as one vectorized batch, and replication r always draws from
``RngStream(seed, r)``. Results are therefore identical for any worker count.
"""

import dataclasses
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .averaging import (SchemeConfig, SuffixAverager, interval_prefactor, make_averager,
                        materialize_weights, parse_scheme)
from .errors import ConfigError
from .inference import (CriticalValueTable, PluginState, RandomScalingState, default_table,
                        plugin_interval, rs_interval)
from .models import (ModelSpec, expectile_model, linear_model, logistic_model, mean_model,
                     sandwich_truth)
from .numerics import RngStream, ks_distance
from .optimal import oracle_weights_expectile
from .sgd import StepSchedule, run_batch

log = logging.getLogger(__name__)

EXPERIMENTS = ("normality", "mse", "coverage", "oracle_weights", "weights_compare",
               "critical_values")
DEFAULT_REPS = {"normality": 450, "mse": 400, "coverage": 500, "oracle_weights": 50000,
                "weights_compare": 50000}
CHUNK_REPS = 64
ASYMPTOTIC_MIN_N = 1000
DEFAULT_XSTAR = (1.0, -2.0, 0.0, 0.0, 4.0)


@dataclass
class ExperimentConfig:
    experiment: str
    model: ModelSpec
    schedule: StepSchedule = field(default_factory=StepSchedule)
    schemes: list = field(default_factory=list)
    n: int = 100_000
    reps: Optional[int] = None
    seed: int = 0
    output: Optional[str] = None
    workers: int = 1
    level: float = 0.95
    method: str = "plugin"
    checkpoints: Optional[list] = None
    x0: Optional[list] = None
    sandwich_reps: int = 10**6

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.reps is None:
            self.reps = DEFAULT_REPS.get(self.experiment, 1)
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.method not in ("plugin", "random_scaling"):
            raise ConfigError("method must be plugin or random_scaling")
        self.schemes = [s if isinstance(s, SchemeConfig) else parse_scheme(s)
                        for s in self.schemes]
        self.schemes = [s.bind_alpha(self.schedule.alpha) for s in self.schemes]

    def canonical(self) -> dict:
        """Everything that determines the output (not the path or worker count)."""
        d = {
            "experiment": self.experiment,
            "model": dataclasses.asdict(self.model),
            "schedule": dataclasses.asdict(self.schedule),
            "schemes": [dataclasses.asdict(s) for s in self.schemes],
            "n": self.n, "reps": self.reps, "seed": self.seed, "level": self.level,
            "method": self.method, "checkpoints": self.checkpoints, "x0": self.x0,
            "sandwich_reps": self.sandwich_reps,
        }
        return json.loads(json.dumps(d, default=list))

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def build_model(kind: str, dim: Optional[int] = None, xstar=None, sigma: float = 1.0,
                rho: float = 0.8, response: str = "norm") -> ModelSpec:
    if kind == "mean":
        return mean_model(0.0 if xstar is None else float(np.atleast_1d(xstar)[0]), sigma)
    if kind == "expectile":
        return expectile_model(rho, response)
    if xstar is None:
        d = 5 if dim is None else dim
        xstar = DEFAULT_XSTAR if d == 5 else (0.0,) * d
    if dim is not None and len(xstar) != dim:
        raise ConfigError(f"--xstar has {len(xstar)} entries but --dim is {dim}")
    if kind == "linear":
        return linear_model(xstar, sigma)
    if kind == "logistic":
        return logistic_model(xstar)
    raise ConfigError(f"unknown model {kind!r}")


@dataclass
class Report:
    experiment: str
    columns: list
    rows: list
    summary: list = field(default_factory=list)
    header: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def to_csv(self) -> str:
        lines = [f"# {h}" for h in self.header]
        lines += [f"# flag: {f}" for f in self.flags]
        lines.append(",".join(self.columns))
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def summary_text(self) -> str:
        if not self.summary:
            return ""
        keys = list(self.summary[0])
        out = ["  ".join(f"{k:>14}" for k in keys)]
        for rec in self.summary:
            out.append("  ".join(f"{_fmt(rec[k]):>14}" for k in keys))
        return "\n".join(out)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _header(cfg: ExperimentConfig, table: Optional[CriticalValueTable] = None):
    cv = f"{table.provenance},sha={table.digest()}" if table is not None else "none"
    return [f"wasgd {cfg.experiment} config_hash={cfg.config_hash()} seed={cfg.seed} "
            f"critical_values={cv}"]


# -- replication engine ----------------------------------------------------


class _SchemeTracker:
    """Streams iterates into one averager and snapshots it at checkpoints."""

    def __init__(self, cfg: SchemeConfig, checkpoints, alpha):
        self.checkpoints = list(checkpoints)
        self._wanted = set(self.checkpoints)
        self.snapshots = {}
        if cfg.kind == "suffix":
            # one fixed-horizon tail sum per checkpoint keeps memory O(d)
            self.suffix = {c: SuffixAverager(cfg.kappa, horizon=c) for c in self.checkpoints}
            self.averager = None
        else:
            self.suffix = None
            self.averager = make_averager(cfg, alpha=alpha)

    def push(self, i, x):
        if self.suffix is None:
            self.averager.push(i, x)
            if i in self._wanted:
                self.snapshots[i] = self.averager.estimate.copy()
            return
        for c, avg in self.suffix.items():
            if i <= c:
                avg.push(i, x)
                if i == c:
                    self.snapshots[c] = avg.estimate.copy()


def run_chunk(cfg: ExperimentConfig, start: int, count: int, checkpoints, want_plugin=False,
              want_rs=False):
    """Simulate replications ``start .. start+count-1``; returns per-rep arrays."""
    rngs = [RngStream(cfg.seed, r) for r in range(start, start + count)]
    trackers = [_SchemeTracker(s, checkpoints, cfg.schedule.alpha) for s in cfg.schemes]
    observers, sinks = [], list(trackers)
    plugin = rs = None
    if want_plugin:
        plugin = PluginState(cfg.model, (count,))
        observers.append(plugin)
    if want_rs:
        rs = RandomScalingState()
        sinks.append(rs)
    run_batch(cfg.schedule, cfg.model, cfg.n, rngs, sinks, x0=cfg.x0, observers=observers)
    estimates = {s.name: {c: t.snapshots[c] for c in checkpoints}
                 for s, t in zip(cfg.schemes, trackers)}
    return estimates, plugin, rs


def _chunks(reps):
    return [(s, min(CHUNK_REPS, reps - s)) for s in range(0, reps, CHUNK_REPS)]


def _map_chunks(cfg, fn, *args):
    jobs = _chunks(cfg.reps)
    if cfg.workers <= 1 or len(jobs) == 1:
        return [fn(cfg, s, c, *args) for s, c in jobs]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(fn, cfg, s, c, *args) for s, c in jobs]
        return [f.result() for f in futures]


def _require_schemes(cfg):
    if not cfg.schemes:
        raise ConfigError("at least one --scheme is required")


# -- normality -------------------------------------------------------------


def _normality_chunk(cfg, start, count):
    est, _, _ = run_chunk(cfg, start, count, [cfg.n])
    return {k: v[cfg.n] for k, v in est.items()}


def run_normality(cfg: ExperimentConfig) -> Report:
    """Standardized errors ``sqrt(n)(x_n - x*)_j / sqrt(w V_jj)`` with and without w."""
    _require_schemes(cfg)
    truth = sandwich_truth(cfg.model, cfg.sandwich_reps, RngStream(cfg.seed, 2**62))
    v_diag = np.diag(truth.V)
    x_star = cfg.model.x_star_array
    parts = _map_chunks(cfg, _normality_chunk)
    rows, summary = [], []
    for s in cfg.schemes:
        err = np.concatenate([p[s.name] for p in parts]) - x_star
        unscaled = np.sqrt(cfg.n) * err / np.sqrt(v_diag)
        w = interval_prefactor(s, cfg.n, cfg.schedule.alpha)
        scaled = unscaled / np.sqrt(w)
        for j in range(cfg.model.d):
            for r in range(cfg.reps):
                rows.append([s.name, j, r, scaled[r, j], unscaled[r, j]])
            for variant, z in (("scaled", scaled[:, j]), ("unscaled", unscaled[:, j])):
                summary.append({"scheme": s.name, "coord": j, "variant": variant,
                                "prefactor": w, "ks": ks_distance(z), "mean": float(z.mean()),
                                "var": float(z.var(ddof=1))})
    header = _header(cfg) + [f"sandwich={truth.source}"]
    return Report("normality", ["scheme", "coord", "rep", "std_error_scaled",
                                "std_error_unscaled"], rows, summary, header)


# -- mse -------------------------------------------------------------------


def _checkpoints(cfg):
    cps = cfg.checkpoints or [cfg.n]
    cps = sorted(set(int(c) for c in cps))
    if cps[0] < 1 or cps[-1] > cfg.n:
        raise ConfigError("checkpoints must lie in [1, n]")
    return cps


def _mse_chunk(cfg, start, count, checkpoints):
    est, _, _ = run_chunk(cfg, start, count, checkpoints)
    return est


def run_mse(cfg: ExperimentConfig) -> Report:
    """Coordinate-averaged MSE and the SD of squared errors at each checkpoint."""
    _require_schemes(cfg)
    if cfg.model.kind not in ("mean", "linear"):
        raise ConfigError("mse experiment supports mean and linear models")
    cps = _checkpoints(cfg)
    parts = _map_chunks(cfg, _mse_chunk, cps)
    x_star = cfg.model.x_star_array
    rows, summary, mse_at = [], [], {}
    for s in cfg.schemes:
        for c in cps:
            err = np.concatenate([p[s.name][c] for p in parts]) - x_star
            sq = np.mean(err ** 2, axis=1)
            mse, sd = float(sq.mean()), float(sq.std(ddof=1)) if cfg.reps > 1 else 0.0
            mse_at[s.name, c] = mse
            rows.append([s.name, c, mse, sd])
            summary.append({"scheme": s.name, "n": c, "mse": mse, "sd": sd,
                            "se": sd / np.sqrt(cfg.reps)})
    base = next((s.name for s in cfg.schemes if s.kind == "adaptive"), None)
    for rec in summary:
        rec["ratio_to_adaptive"] = (rec["mse"] / mse_at[base, rec["n"]]
                                    if base and mse_at[base, rec["n"]] > 0 else float("nan"))
    return Report("mse", ["scheme", "n", "mse", "sd"], rows, summary, _header(cfg))


# -- coverage --------------------------------------------------------------


def _coverage_chunk(cfg, start, count):
    plugin = cfg.method == "plugin"
    est, pstate, rstate = run_chunk(cfg, start, count, [cfg.n], want_plugin=plugin,
                                    want_rs=not plugin)
    if plugin:
        v = pstate.sandwich()
        diag = np.diagonal(v, axis1=-2, axis2=-1)
    else:
        diag = np.diagonal(rstate.matrix(), axis1=-2, axis2=-1)
    return {k: e[cfg.n] for k, e in est.items()}, diag


def run_coverage(cfg: ExperimentConfig, method: Optional[str] = None,
                 table: Optional[CriticalValueTable] = None) -> Report:
    """Empirical coverage and mean half-width of two-sided intervals per coordinate."""
    _require_schemes(cfg)
    if method is not None:
        cfg = dataclasses.replace(cfg, method=method)
    if cfg.method == "plugin" and cfg.model.kind == "expectile":
        raise ConfigError("plug-in intervals are unavailable for the expectile model")
    if cfg.method == "random_scaling":
        table = table or default_table()
        crit = table.quantile(cfg.level)
    else:
        table = None
        from scipy.special import ndtri
        crit = float(ndtri((1 + cfg.level) / 2))
    parts = _map_chunks(cfg, _coverage_chunk)
    diag = np.concatenate([p[1] for p in parts])
    x_star = cfg.model.x_star_array
    rows, summary, flags = [], [], []
    if cfg.n < ASYMPTOTIC_MIN_N:
        flags.append(f"below-asymptotic-regime: n={cfg.n} < {ASYMPTOTIC_MIN_N}")
    for s in cfg.schemes:
        est = np.concatenate([p[0][s.name] for p in parts])
        w = interval_prefactor(s, cfg.n, cfg.schedule.alpha)
        half = crit * np.sqrt(w * diag / cfg.n)
        hit = np.abs(est - x_star) <= half
        for j in range(cfg.model.d):
            cov, mhw = float(hit[:, j].mean()), float(half[:, j].mean())
            rows.append([s.name, j, cov, mhw])
            summary.append({"scheme": s.name, "coord": j, "coverage": cov,
                            "mean_halfwidth": mhw, "prefactor": w})
    header = _header(cfg, table) + [f"method={cfg.method} level={cfg.level!r} "
                                    f"critical_value={crit!r}"]
    return Report("coverage", ["scheme", "coord", "coverage", "mean_halfwidth"], rows,
                  summary, header, flags)


def interval_for(cfg_scheme, state, estimate, n, alpha, level=0.95, table=None):
    """Single-trajectory interval with the scheme's prefactor (plug-in or random scaling)."""
    w = interval_prefactor(cfg_scheme, n, alpha)
    if isinstance(state, PluginState):
        return plugin_interval(state, estimate, w, level)
    return rs_interval(state, estimate, w, level, table)


# -- oracle weights --------------------------------------------------------

DEFAULT_COMPARE = ("adaptive", "uniform", "poly:gamma=3", "suffix:kappa=0.5")


def run_weights_compare(cfg: ExperimentConfig) -> Report:
    """Monte-Carlo oracle weights next to the closed-form schemes at horizon n."""
    if cfg.model.kind != "expectile":
        raise ConfigError("weights-compare uses the expectile model")
    if cfg.n > 200:
        raise ConfigError("weights-compare needs n <= 200")
    schemes = cfg.schemes or [parse_scheme(s).bind_alpha(cfg.schedule.alpha)
                              for s in DEFAULT_COMPARE]
    oracle = oracle_weights_expectile(cfg.model.rho, cfg.schedule, cfg.n, cfg.reps,
                                      RngStream(cfg.seed, 0), cfg.model.response,
                                      cfg.model.response_args, x0=cfg.x0).c
    rows = [["oracle", i, w] for i, w in enumerate(oracle, start=1)]
    summary = [{"scheme": "oracle", "argmax": int(np.argmax(oracle)) + 1,
                "sup_dist_to_oracle": 0.0}]
    for s in schemes:
        w = materialize_weights(s, cfg.n, cfg.schedule.alpha).w
        rows += [[s.name, i, v] for i, v in enumerate(w, start=1)]
        summary.append({"scheme": s.name, "argmax": int(np.flatnonzero(w == w.max())[-1]) + 1,
                        "sup_dist_to_oracle": float(np.max(np.abs(w - oracle)))})
    header = _header(cfg) + [f"expectile response={cfg.model.response}"
                             f"{list(cfg.model.response_args) or ''} (assumed; not stated "
                             f"in the source experiment) rho={cfg.model.rho}"]
    return Report("weights_compare", ["scheme", "index", "weight"], rows, summary, header)


def run_oracle_weights(cfg: ExperimentConfig) -> Report:
    if cfg.model.kind != "expectile":
        raise ConfigError("oracle-weights uses the expectile model")
    sol = oracle_weights_expectile(cfg.model.rho, cfg.schedule, cfg.n, cfg.reps,
                                   RngStream(cfg.seed, 0), cfg.model.response,
                                   cfg.model.response_args, x0=cfg.x0)
    rows = [[i, w] for i, w in enumerate(sol.c, start=1)]
    header = _header(cfg) + [f"predicted_mse={sol.predicted_mse!r}"]
    return Report("oracle_weights", ["index", "weight"], rows, [], header)


RUNNERS = {
    "normality": run_normality,
    "mse": run_mse,
    "coverage": run_coverage,
    "weights_compare": run_weights_compare,
    "oracle_weights": run_oracle_weights,
}


def run_experiment(cfg: ExperimentConfig) -> Report:
    report = RUNNERS[cfg.experiment](cfg)
    if cfg.output:
        report.write(cfg.output)
    return report
