"""Plain SGD with polynomially decaying steps, driven as a single pass."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import NonFinite
from .models import ModelSpec, Observation, draw_block, gradient, observation_from_normals
from .numerics import RngStream

BLOCK = 1024


@dataclass(frozen=True)
class StepSchedule:
    """Learning rate ``eta * i**-alpha``; ``override_first`` replaces step 1."""

    eta: float = 1.0
    alpha: float = 0.505
    override_first: Optional[float] = None

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    def step(self, i: int) -> float:
        if i < 1:
            raise ValueError("step index starts at 1")
        if i == 1 and self.override_first is not None:
            return float(self.override_first)
        return self.eta * float(i) ** -self.alpha

    def steps(self, n: int, start: int = 1) -> np.ndarray:
        """Vector of ``step(i)`` for ``i = start .. start + n - 1``."""
        i = np.arange(start, start + n, dtype=float)
        out = self.eta * i ** -self.alpha
        if start == 1 and n > 0 and self.override_first is not None:
            out[0] = self.override_first
        return out


def step_size(schedule: StepSchedule, i: int) -> float:
    return schedule.step(i)


@dataclass(frozen=True)
class SgdState:
    x: np.ndarray
    i: int = 0
    x_prev: Optional[np.ndarray] = None

    @classmethod
    def start(cls, x0) -> "SgdState":
        x0 = np.array(x0, dtype=float)
        return cls(x0, 0, x0.copy())


def sgd_step(state: SgdState, schedule: StepSchedule, model: ModelSpec,
             obs: Observation) -> SgdState:
    i = state.i + 1
    with np.errstate(over="ignore", invalid="ignore"):
        x_new = state.x - schedule.step(i) * gradient(model, state.x, obs)
    if not np.all(np.isfinite(x_new)):
        raise NonFinite(f"iterate became non-finite at step {i}; step size too large?")
    return SgdState(x_new, i, state.x)


def run_trajectory(schedule: StepSchedule, model: ModelSpec, n: int, rng: RngStream,
                   sinks: Sequence = (), x0=None, observers: Sequence = ()) -> SgdState:
    """Run ``n`` SGD steps on fresh draws, streaming every iterate to ``sinks``.

    Each sink gets ``sink.push(i, x_i)`` once per step, in order. Each observer
    gets ``observer.observe(x_{i-1}, obs_i)`` before step ``i`` is applied.
    Only O(d) state is kept here; draws are fetched in blocks.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    state = SgdState.start(np.zeros(model.d) if x0 is None else x0)
    done = 0
    while done < n:
        m = min(BLOCK, n - done)
        block = draw_block(model, rng, m)
        for j in range(m):
            obs = block[j]
            for ob in observers:
                ob.observe(state.x, obs)
            state = sgd_step(state, schedule, model, obs)
            for sink in sinks:
                sink.push(state.i, state.x)
        done += m
    return state


def run_batch(schedule: StepSchedule, model: ModelSpec, n: int,
              rngs: Sequence[RngStream], sinks: Sequence = (), x0=None,
              observers: Sequence = (), regressors: Optional[np.ndarray] = None) -> np.ndarray:
    """Run one independent trajectory per stream in ``rngs``, vectorized.

    Iterates have shape ``(len(rngs), d)``; sinks and observers see the whole
    batch at once. Replication ``r`` reproduces ``run_trajectory`` with
    ``rngs[r]`` up to floating-point summation order in the gradient.

    ``regressors`` (shape ``(n, d)``) fixes the regressor sequence across
    replications for linear and mean models; the streams then supply only
    the noise.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    reps = len(rngs)
    x = np.zeros((reps, model.d)) if x0 is None else np.array(
        np.broadcast_to(x0, (reps, model.d)), dtype=float)
    steps = schedule.steps(n)
    done = 0
    while done < n:
        m = min(BLOCK, n - done)
        if regressors is None:
            z = np.stack([r.normal((m, model.draws_per_observation)) for r in rngs])
            block = observation_from_normals(model, z)
        else:
            block = _fixed_regressor_block(model, rngs, regressors[done:done + m])
        for j in range(m):
            obs = Observation(block.a[:, j], block.b[:, j])
            for ob in observers:
                ob.observe(x, obs)
            with np.errstate(over="ignore", invalid="ignore"):
                x = x - steps[done + j] * gradient(model, x, obs)
            if not np.all(np.isfinite(x)):
                bad = np.flatnonzero(~np.all(np.isfinite(x), axis=1))
                raise NonFinite(
                    f"iterate became non-finite at step {done + j + 1} "
                    f"(replications {bad[:5].tolist()})")
            for sink in sinks:
                sink.push(done + j + 1, x)
        done += m
    return x


def _fixed_regressor_block(model, rngs, a_block):
    if model.kind not in ("linear", "mean"):
        raise ValueError("fixed regressors apply to linear and mean models only")
    noise = np.stack([r.normal(len(a_block)) for r in rngs])
    a = np.broadcast_to(a_block, noise.shape + (model.d,))
    b = a @ model.x_star_array + model.noise_sigma * noise
    return Observation(a, b)
