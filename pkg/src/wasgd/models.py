"""Loss models: mean estimation, linear, logistic and expectile regression.

Every model turns a fixed number of standard normal draws into one
observation, so drawing a block of observations in one call consumes the
stream exactly like drawing them one at a time. Non-normal pieces (the
logistic label, non-normal expectile responses) use inverse transforms of a
normal draw.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.stats
from scipy.optimize import brentq
from scipy.special import expit, ndtr

from .errors import NotAvailable, Unsupported
from .numerics import RngStream, invert_spd, symmetrize

KINDS = ("mean", "linear", "logistic", "expectile")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    d: int
    x_star: tuple
    noise_sigma: float = 1.0
    rho: float = 0.5
    # expectile only: scipy.stats distribution name and its shape/loc/scale args
    response: str = "norm"
    response_args: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if len(self.x_star) != self.d:
            raise ValueError("x_star must have length d")
        if self.kind in ("mean", "expectile") and self.d != 1:
            raise ValueError(f"{self.kind} model is one-dimensional")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")

    @property
    def x_star_array(self) -> np.ndarray:
        return np.asarray(self.x_star, dtype=float)

    @property
    def draws_per_observation(self) -> int:
        if self.kind in ("linear", "logistic"):
            return self.d + 1
        return 1

    def response_distribution(self):
        return getattr(scipy.stats, self.response)(*self.response_args)


def mean_model(x_star: float = 0.0, noise_sigma: float = 1.0) -> ModelSpec:
    return ModelSpec("mean", 1, (float(x_star),), noise_sigma=noise_sigma)


def linear_model(x_star, noise_sigma: float = 1.0) -> ModelSpec:
    x_star = tuple(float(v) for v in np.atleast_1d(x_star))
    return ModelSpec("linear", len(x_star), x_star, noise_sigma=noise_sigma)


def logistic_model(x_star) -> ModelSpec:
    x_star = tuple(float(v) for v in np.atleast_1d(x_star))
    return ModelSpec("logistic", len(x_star), x_star)


def expectile_model(rho: float, response: str = "norm", response_args=()) -> ModelSpec:
    """Scalar expectile model; ``x_star`` is the rho-expectile of the response law."""
    dist = getattr(scipy.stats, response)(*response_args)
    return ModelSpec(
        "expectile", 1, (expectile_of(dist, rho),), rho=rho,
        response=response, response_args=tuple(response_args),
    )


def expectile_of(dist, rho: float) -> float:
    """Root of ``rho E(y-x)+ = (1-rho) E(x-y)+`` for a frozen scipy distribution."""
    if dist.dist.name == "norm":
        loc, scale = dist.mean(), dist.std()

        def balance(x):
            z = (x - loc) / scale
            pdf, cdf = scipy.stats.norm.pdf(z), ndtr(z)
            above = scale * (pdf - z * (1 - cdf))
            below = scale * (z * cdf + pdf)
            return rho * above - (1 - rho) * below
    else:
        def balance(x):
            above = dist.expect(lambda y: y - x, lb=x)
            below = dist.expect(lambda y: x - y, ub=x)
            return rho * above - (1 - rho) * below

    lo, hi = dist.ppf(1e-9), dist.ppf(1 - 1e-9)
    return float(brentq(balance, lo, hi, xtol=1e-14, rtol=1e-14))


@dataclass
class Observation:
    """One observation, or a block of them along leading axes.

    ``a`` has shape ``(..., d)``; ``b`` has shape ``(...)``. For the expectile
    model ``a`` is a column of ones and ``b`` holds the response ``y``.
    """

    a: np.ndarray
    b: np.ndarray

    def __getitem__(self, index):
        return Observation(self.a[index], self.b[index])


def observation_from_normals(model: ModelSpec, z: np.ndarray) -> Observation:
    """Map standard normals of shape ``(..., draws_per_observation)`` to data."""
    z = np.asarray(z, dtype=float)
    x_star = model.x_star_array
    if model.kind == "linear":
        a = z[..., : model.d]
        b = a @ x_star + model.noise_sigma * z[..., model.d]
    elif model.kind == "logistic":
        a = z[..., : model.d]
        p_plus = expit(a @ x_star)
        b = np.where(ndtr(z[..., model.d]) < p_plus, 1.0, -1.0)
    elif model.kind == "mean":
        a = np.ones(z.shape[:-1] + (1,))
        b = x_star[0] + model.noise_sigma * z[..., 0]
    else:
        a = np.ones(z.shape[:-1] + (1,))
        if model.response == "norm" and not model.response_args:
            b = z[..., 0].copy()
        else:
            b = model.response_distribution().ppf(ndtr(z[..., 0]))
    return Observation(a, b)


def draw(model: ModelSpec, rng: RngStream) -> Observation:
    return observation_from_normals(model, rng.normal(model.draws_per_observation))


def draw_block(model: ModelSpec, rng: RngStream, count: int) -> Observation:
    """``count`` consecutive observations; identical to ``count`` calls of draw()."""
    return observation_from_normals(
        model, rng.normal((count, model.draws_per_observation))
    )


def gradient(model: ModelSpec, x, obs: Observation) -> np.ndarray:
    """Stochastic gradient of the per-observation loss at ``x``.

    Broadcasts over leading axes of ``x`` and ``obs``. For the expectile loss
    the indicator ``1{y < x}`` is strict, so at ``y == x`` the result is 0.
    """
    x = np.asarray(x, dtype=float)
    a, b = obs.a, obs.b
    if model.kind in ("linear", "mean"):
        resid = np.sum(a * x, axis=-1) - b
        return a * resid[..., None]
    if model.kind == "logistic":
        margin = b * np.sum(a * x, axis=-1)
        return a * (-b * expit(-margin))[..., None]
    y = b[..., None]
    weight = np.where(y < x, 1.0 - model.rho, model.rho)
    return 2.0 * weight * (x - y)


def hessian(model: ModelSpec, x, obs: Observation) -> np.ndarray:
    """Per-observation Hessian, shape ``(..., d, d)``."""
    a = obs.a
    outer = a[..., :, None] * a[..., None, :]
    if model.kind in ("linear", "mean"):
        return outer
    if model.kind == "logistic":
        p = expit(np.sum(a * np.asarray(x, dtype=float), axis=-1))
        return outer * (p * (1 - p))[..., None, None]
    raise Unsupported("expectile loss has no Hessian at the kink; plug-in is disabled")


@dataclass
class SandwichTruth:
    A: np.ndarray
    S: np.ndarray
    V: np.ndarray
    source: str = "analytic"
    extra: dict = field(default_factory=dict)


def sandwich_truth(model: ModelSpec, reps: int = 10**6, rng: RngStream = None,
                   chunk: int = 100_000) -> SandwichTruth:
    """True ``A``, ``S`` and ``V = A^{-1} S A^{-T}`` at ``x_star``.

    Linear and mean models are analytic. The logistic model averages the
    Hessian and gradient outer product over ``reps`` fresh draws.
    """
    d = model.d
    if model.kind in ("linear", "mean"):
        eye = np.eye(d)
        s2 = model.noise_sigma ** 2
        return SandwichTruth(eye, s2 * eye, s2 * eye, "analytic")
    if model.kind == "expectile":
        raise NotAvailable("no closed-form sandwich for the expectile model")
    if reps < 10**4:
        raise ValueError("Monte-Carlo sandwich needs reps >= 1e4")
    if rng is None:
        rng = RngStream(0, 0)
    x_star = model.x_star_array
    a_sum = np.zeros((d, d))
    s_sum = np.zeros((d, d))
    done = 0
    while done < reps:
        m = min(chunk, reps - done)
        obs = draw_block(model, rng, m)
        a_sum += hessian(model, x_star, obs).sum(axis=0)
        g = gradient(model, x_star, obs)
        s_sum += g.T @ g
        done += m
    A = symmetrize(a_sum / reps)
    S = symmetrize(s_sum / reps)
    a_inv = invert_spd(A)
    V = symmetrize(a_inv @ S @ a_inv.T)
    return SandwichTruth(A, S, V, f"monte_carlo({reps})")
