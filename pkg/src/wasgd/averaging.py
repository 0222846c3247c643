"""Averaging schemes for SGD iterates.

Each scheme is available in two forms that must agree: a streaming averager
with O(d) state (``push(i, x_i)`` then ``.estimate``) and the materialized
weight vector ``w_{n,1..n}`` at a fixed horizon. The offline suffix average
is the one exception to O(d) memory; ``online-suffix`` is its streaming
replacement.
"""

import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, InsufficientBuffer, OutOfOrder, Unsupported
from .sgd import StepSchedule

SCHEME_KINDS = ("uniform", "poly", "suffix", "online_suffix", "adaptive", "explicit", "last")


@dataclass(frozen=True)
class SchemeConfig:
    kind: str
    gamma: Optional[float] = None
    kappa: Optional[float] = None
    # adaptive only; None means "use the step-size alpha"
    alpha: Optional[float] = None
    weights: Optional[tuple] = None
    label: Optional[str] = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ConfigError(f"unknown averaging scheme {self.kind!r}")
        if self.kind == "poly" and (self.gamma is None or self.gamma < 1):
            raise ConfigError("poly averaging needs gamma >= 1")
        if self.kind == "suffix" and (self.kappa is None or not 0 < self.kappa < 1):
            raise ConfigError("suffix averaging needs 0 < kappa < 1")
        if self.kind == "adaptive" and self.alpha is not None and not 0.5 <= self.alpha < 1:
            raise ConfigError("adaptive alpha must lie in [0.5, 1)")
        if self.kind == "explicit" and not self.weights:
            raise ConfigError("explicit scheme needs a nonempty weight list")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind == "poly":
            return f"poly:gamma={self.gamma:g}"
        if self.kind == "suffix":
            return f"suffix:kappa={self.kappa:g}"
        if self.kind == "online_suffix":
            return "online-suffix"
        if self.kind == "adaptive" and self.alpha is not None:
            return f"adaptive:alpha={self.alpha:g}"
        return self.kind

    def bind_alpha(self, alpha: float) -> "SchemeConfig":
        """Adaptive schemes without their own alpha take the step-size alpha."""
        if self.kind == "adaptive" and self.alpha is None:
            return SchemeConfig("adaptive", alpha=alpha, label=self.label or "adaptive")
        return self


def parse_scheme(text: str, base_dir=None) -> SchemeConfig:
    """Parse ``uniform``, ``poly:gamma=3``, ``suffix:kappa=0.5``, ``online-suffix``,
    ``adaptive[:alpha=0.6]``, ``last`` or ``explicit:@weights.csv``."""
    text = text.strip()
    head, _, rest = text.partition(":")
    head = head.replace("-", "_").lower()
    if head == "explicit":
        if not rest.startswith("@"):
            raise ConfigError("explicit scheme is written explicit:@file.csv")
        path = Path(rest[1:])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return load_explicit(path)
    params = {}
    if rest:
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise ConfigError(f"bad scheme parameter {item!r} in {text!r}")
            try:
                params[key.strip().lower()] = float(value)
            except ValueError:
                raise ConfigError(f"non-numeric value in {text!r}") from None
    allowed = {"uniform": set(), "poly": {"gamma"}, "suffix": {"kappa"},
               "online_suffix": set(), "adaptive": {"alpha"}, "last": set()}
    if head not in allowed:
        raise ConfigError(f"unknown averaging scheme {text!r}")
    if set(params) - allowed[head]:
        raise ConfigError(f"unexpected parameters for {head}: {sorted(set(params) - allowed[head])}")
    return SchemeConfig(head, **params)


def load_explicit(path) -> SchemeConfig:
    """Read one weight per line and run the weight-condition checks (warn only)."""
    try:
        lines = Path(path).read_text().split()
        weights = tuple(float(v.split(",")[-1]) for v in lines if v.strip())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read explicit weights from {path}: {exc}") from None
    cfg = SchemeConfig("explicit", weights=weights, label=f"explicit:{Path(path).name}")
    n = len(weights)
    if n >= 2:
        report = check_weight_conditions(cfg, n, lam=0.5, schedule=StepSchedule())
        if not report.ok():
            warnings.warn(f"explicit weights from {path} fail the weight conditions:\n"
                          f"{report.describe()}", stacklevel=2)
    return cfg


# -- helpers ---------------------------------------------------------------


def suffix_length(n: int, kappa: float) -> int:
    """``ceil(kappa * n)`` computed on the decimal value of kappa (0.3 * 10 is 3)."""
    return max(1, math.ceil(Fraction(repr(float(kappa))) * n))


def block_index(t: int) -> int:
    """``ceil(log2 t)`` in integer arithmetic."""
    return (t - 1).bit_length()


def online_suffix_start(t: int) -> int:
    """First iterate index in the online suffix window at time t."""
    m = block_index(t)
    return (1 << (m - 2)) + 1 if m >= 2 else 1


# -- streaming averagers ---------------------------------------------------


class Averager:
    """Base class: tracks the update count and rejects out-of-order pushes."""

    def __init__(self):
        self.t = 0
        self.estimate = None

    def push(self, i, x):
        if i != self.t + 1:
            raise OutOfOrder(f"expected iterate {self.t + 1}, got {i}")
        x = np.asarray(x, dtype=float)
        self.t = i
        self._update(x)

    def _update(self, x):
        raise NotImplementedError


class UniformAverager(Averager):
    def _update(self, x):
        if self.t == 1:
            self.estimate = x.copy()
        else:
            self.estimate = ((self.t - 1) * self.estimate + x) / self.t


class PolyAverager(Averager):
    def __init__(self, gamma):
        super().__init__()
        self.gamma = gamma

    def _update(self, x):
        r = (self.gamma + 1) / (self.gamma + self.t)
        if self.t == 1:
            self.estimate = x.copy()
        else:
            self.estimate = (1 - r) * self.estimate + r * x


class AdaptiveAverager(Averager):
    """Weights ``(1 + i^a - (i+1)^a)/n`` for ``i < n`` and ``n^(a-1)`` on the last.

    Moving from n to n+1 rescales old weights by n/(n+1), so only the previous
    iterate has to be kept.
    """

    def __init__(self, alpha):
        super().__init__()
        self.alpha = alpha
        self.x_prev = None

    def _update(self, x):
        if self.t == 1:
            self.estimate = x.copy()
        else:
            n, a = self.t - 1, self.alpha
            self.estimate = (n / (n + 1) * self.estimate
                             + (1 - (n + 1) ** a) / (n + 1) * self.x_prev
                             + (n + 1) ** (a - 1) * x)
        self.x_prev = x.copy()


class OnlineSuffixAverager(Averager):
    """Average of the last two dyadic blocks (block m ends at iterate 2^m)."""

    def __init__(self):
        super().__init__()
        self.m = 0
        self.s0 = 0.0
        self.s1 = 0.0

    def _update(self, x):
        if self.t > (1 << self.m):
            self.m += 1
            self.s0 = self.s1
            self.s1 = x.copy()
        else:
            self.s1 = self.s1 + x
        lag = (1 << (self.m - 2)) if self.m >= 2 else 0
        self.estimate = (self.s0 + self.s1) / (self.t - lag)


class SuffixAverager(Averager):
    """Equal-weight mean of the last ``ceil(kappa n)`` iterates.

    With a known ``horizon`` only the running tail sum is kept. Otherwise the
    iterates still inside the window are buffered, which costs O(kappa n)
    memory.
    """

    def __init__(self, kappa, horizon=None):
        super().__init__()
        self.kappa = kappa
        self.horizon = horizon
        if horizon is not None:
            self._start = horizon - suffix_length(horizon, kappa) + 1
            self._sum = 0.0
            self._count = 0
        else:
            self.buffer = deque()

    def _update(self, x):
        if self.horizon is not None:
            if self.t > self.horizon:
                raise OutOfOrder(f"suffix averager was built for horizon {self.horizon}")
            if self.t >= self._start:
                self._sum = self._sum + x
                self._count += 1
            if self.t == self.horizon:
                self.estimate = self._sum / self._count
            return
        self.buffer.append(x.copy())
        keep = suffix_length(self.t, self.kappa)
        while len(self.buffer) > keep:
            self.buffer.popleft()
        self.estimate = finalize_suffix(self.buffer, self.t, self.kappa)


class ExplicitAverager(Averager):
    def __init__(self, weights):
        super().__init__()
        self.weights = np.asarray(weights, dtype=float)

    def _update(self, x):
        if self.t > self.weights.size:
            raise OutOfOrder(f"explicit weights cover only {self.weights.size} iterates")
        term = self.weights[self.t - 1] * x
        self.estimate = term if self.t == 1 else self.estimate + term


class LastIterate(Averager):
    def _update(self, x):
        self.estimate = x.copy()


def make_averager(cfg: SchemeConfig, horizon: int = None, alpha: float = None) -> Averager:
    """Streaming averager for ``cfg``; ``alpha`` fills in an unbound adaptive alpha."""
    if cfg.kind == "uniform":
        return UniformAverager()
    if cfg.kind == "poly":
        return PolyAverager(cfg.gamma)
    if cfg.kind == "suffix":
        return SuffixAverager(cfg.kappa, horizon)
    if cfg.kind == "online_suffix":
        return OnlineSuffixAverager()
    if cfg.kind == "adaptive":
        a = cfg.alpha if cfg.alpha is not None else alpha
        if a is None:
            raise ConfigError("adaptive averaging needs alpha (from the scheme or the schedule)")
        return AdaptiveAverager(a)
    if cfg.kind == "explicit":
        return ExplicitAverager(cfg.weights)
    return LastIterate()


def finalize_suffix(buffer, n: int, kappa: float) -> np.ndarray:
    """Mean of the last ``ceil(kappa n)`` entries of ``buffer`` (newest last)."""
    m = suffix_length(n, kappa)
    if len(buffer) < m:
        raise InsufficientBuffer(f"need the last {m} iterates, buffer holds {len(buffer)}")
    tail = list(buffer)[-m:]
    return np.sum(tail, axis=0) / m


# -- materialized weights --------------------------------------------------


@dataclass
class WeightVector:
    n: int
    w: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.shape != (self.n,):
            raise ValueError("weight vector length must equal n")


def materialize_weights(cfg: SchemeConfig, n: int, alpha: float = None) -> WeightVector:
    if n < 1:
        raise ValueError("n must be >= 1")
    i = np.arange(1, n + 1, dtype=float)
    if cfg.kind == "uniform":
        w = np.full(n, 1.0 / n)
    elif cfg.kind == "poly":
        g = cfg.gamma
        # theta_{n,i} = theta_{n,i+1} * i / (gamma + i), theta_{n,n} = (g+1)/(g+n)
        ratios = i[:-1] / (g + i[:-1])
        w = np.empty(n)
        w[-1] = (g + 1) / (g + n)
        if n > 1:
            w[:-1] = w[-1] * np.cumprod(ratios[::-1])[::-1]
    elif cfg.kind == "suffix":
        m = suffix_length(n, cfg.kappa)
        w = np.zeros(n)
        w[n - m:] = 1.0 / m
    elif cfg.kind == "online_suffix":
        start = online_suffix_start(n)
        w = np.zeros(n)
        w[start - 1:] = 1.0 / (n - start + 1)
    elif cfg.kind == "adaptive":
        a = cfg.alpha if cfg.alpha is not None else alpha
        if a is None:
            raise ConfigError("adaptive weights need alpha")
        w = (1 + i ** a - (i + 1) ** a) / n
        w[-1] = float(n) ** (a - 1)
    elif cfg.kind == "explicit":
        if len(cfg.weights) != n:
            raise ValueError(f"explicit weights have length {len(cfg.weights)}, not {n}")
        w = np.array(cfg.weights, dtype=float)
    else:
        w = np.zeros(n)
        w[-1] = 1.0
    return WeightVector(n, w)


def prefactor(cfg: SchemeConfig) -> float:
    """Limit of ``n * sum(w**2)``, the variance inflation over uniform averaging."""
    if cfg.kind in ("uniform", "adaptive"):
        return 1.0
    if cfg.kind == "poly":
        g = cfg.gamma
        return (g + 1) ** 2 / (2 * g + 1)
    if cfg.kind == "suffix":
        return 1.0 / cfg.kappa
    raise Unsupported(f"no closed-form prefactor for {cfg.name}")


def prefactor_numeric(cfg: SchemeConfig, n: int, alpha: float = None) -> float:
    """``n * sum(w_{n,i}**2)`` at horizon n.

    For the adaptive scheme the terminal weight ``n^(alpha-1)`` is left out:
    it multiplies ``x_n``, whose error is ``O(n^(-alpha/2))``, so it does not
    contribute to the limiting variance.
    """
    w = materialize_weights(cfg, n, alpha).w
    if cfg.kind == "adaptive":
        w = w[:-1]
    return float(n * np.dot(w, w))


def interval_prefactor(cfg: SchemeConfig, n: int, alpha: float = None) -> float:
    """Closed-form prefactor when one exists, else the numeric value at n."""
    try:
        return prefactor(cfg)
    except Unsupported:
        return prefactor_numeric(cfg, n, alpha)


# -- weight-condition validator --------------------------------------------


def smoothness_sum(w, steps, lam: float, method: str = "auto") -> float:
    """``sum_i sum_{k>i} |w_k - w_i| eta_i exp(-lam sum_{t=i+1}^k eta_t)``.

    ``steps[i-1]`` is eta_i. For monotone weights ``|w_k - w_i|`` telescopes
    into nonnegative adjacent differences and the sum follows an O(n)
    backward recursion. Otherwise each row i is evaluated directly.
    """
    w = np.asarray(w, dtype=float)
    steps = np.asarray(steps, dtype=float)
    n = w.size
    diffs = np.diff(w)
    if method == "auto":
        if np.all(diffs >= 0):
            method = "monotone"
        elif np.all(diffs <= 0):
            method, diffs = "monotone", -diffs
        else:
            method = "direct"
    if method == "monotone":
        decay = np.exp(-lam * steps[1:])  # decay[i-1] = exp(-lam eta_{i+1})
        tail = 0.0   # T_{i+1}: sum_{k>i+1} (w_k - w_{i+1}) exp(...)
        mass = 0.0   # E_{i+1}: sum_{k>i+1} exp(...)
        total = 0.0
        for j in range(n - 2, -1, -1):
            tail = decay[j] * (tail + diffs[j] * (1.0 + mass))
            mass = decay[j] * (1.0 + mass)
            total += steps[j] * tail
        return float(total)
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    total = 0.0
    cum = np.cumsum(steps)
    for i in range(n - 1):
        gap = cum[i + 1:] - cum[i]
        total += steps[i] * np.dot(np.abs(w[i + 1:] - w[i]), np.exp(-lam * gap))
    return float(total)


@dataclass
class ConditionReport:
    scheme: str
    n: int
    lam: float
    sum_error: float
    max_scaled_weight: float
    last_scaled_weight: float
    last_weight_exempt: bool
    prefactor_numeric: float
    smoothness_sum: float
    max_adjacent_diff: float
    c_tilde: float
    notes: list = field(default_factory=list)

    @property
    def simple_condition_holds(self) -> bool:
        return self.max_adjacent_diff * self.n ** 2 <= self.c_tilde

    def ok(self, c: float = 10.0, sum_tol: float = 1e-8) -> bool:
        bounded = self.max_scaled_weight <= c and (
            self.last_weight_exempt or self.last_scaled_weight <= c)
        return self.sum_error <= sum_tol and bounded

    def describe(self) -> str:
        lines = [
            f"scheme                      {self.scheme}",
            f"n                           {self.n}",
            f"lambda                      {self.lam:g}",
            f"|sum w - 1|                 {self.sum_error:.3e}",
            f"max n|w_i| (i < n)          {self.max_scaled_weight:.6g}",
            f"n|w_n|                      {self.last_scaled_weight:.6g}"
            + ("  (exempt: vanishes after scaling)" if self.last_weight_exempt else ""),
            f"n sum w^2                   {self.prefactor_numeric:.6g}",
            f"smoothness double sum       {self.smoothness_sum:.6g}",
            f"max |w_(i+1) - w_i| n^2     {self.max_adjacent_diff * self.n ** 2:.6g}"
            f"  (<= {self.c_tilde:g}: {self.simple_condition_holds})",
        ]
        lines += [f"note: {s}" for s in self.notes]
        return "\n".join(lines)


def check_weight_conditions(cfg: SchemeConfig, n: int, lam: float, schedule: StepSchedule,
                   c_tilde: float = 10.0) -> ConditionReport:
    """Evaluate the three weight conditions of the weighted-average CLT at horizon n.

    ``lam`` is ``min(lambda_min(A), 1/(2 eta))``.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    w = materialize_weights(cfg, n, schedule.alpha).w
    exempt = cfg.kind == "adaptive"
    notes = []
    if exempt:
        notes.append("adaptive terminal weight n^(alpha-1) is exempt from the C/n bound; "
                     "it is excluded from n sum w^2")
    pref = prefactor_numeric(cfg, n, schedule.alpha)
    return ConditionReport(
        scheme=cfg.name,
        n=n,
        lam=lam,
        sum_error=float(abs(w.sum() - 1.0)),
        max_scaled_weight=float(n * np.max(np.abs(w[:-1]))),
        last_scaled_weight=float(n * abs(w[-1])),
        last_weight_exempt=exempt,
        prefactor_numeric=pref,
        smoothness_sum=smoothness_sum(w, schedule.steps(n), lam),
        max_adjacent_diff=float(np.max(np.abs(np.diff(w)))),
        c_tilde=c_tilde,
        notes=notes,
    )


# name used by external callers
check_theorem2 = check_weight_conditions


def default_lambda(schedule: StepSchedule, a_min_eig: float = 1.0) -> float:
    return min(a_min_eig, 1.0 / (2.0 * schedule.eta))
