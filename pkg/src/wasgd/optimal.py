"""Minimum-MSE (best linear unbiased) weights for averaging SGD iterates.

The general solution is ``c = Sigma^{-1} 1 / (1' Sigma^{-1} 1)`` for the
iterate error Gram matrix ``Sigma_ij = E (x_i - x*)'(x_j - x*)``. For scalar
linear models with the first step ``eta_1 = a_1^{-2}`` the solution has a
closed form; a variant keeps a weight on the starting point ``x_0``.
These routines cover scalar models only: for d > 1 the Gram matrix of
inner products is well defined but the module makes no claim about it.
"""

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ZeroInitError, ZeroRegressor
from .models import ModelSpec
from .numerics import RngStream, invert_spd, symmetrize
from .sgd import StepSchedule, run_batch


@dataclass
class CovarianceEstimate:
    n: int
    sigma_hat: np.ndarray
    reps: int
    # per-entry Monte-Carlo standard error, when estimated by simulation
    std_error: Optional[np.ndarray] = None


@dataclass
class WeightSolution:
    c: np.ndarray
    predicted_mse: float
    includes_init: bool = False


def blue_weights(sigma, ridge: Optional[float] = None) -> WeightSolution:
    """``c = (Sigma + ridge I)^{-1} 1`` normalized to sum to one.

    Default ridge is ``1e-10 * trace(Sigma) / n``; it is only applied when the
    Cholesky pivots call for it.
    """
    mat = sigma.sigma_hat if isinstance(sigma, CovarianceEstimate) else np.asarray(sigma, float)
    mat = symmetrize(np.atleast_2d(mat))
    n = mat.shape[0]
    if ridge is None:
        ridge = 1e-10 * np.trace(mat) / n
    inv_one = invert_spd(mat, ridge).sum(axis=1)
    total = inv_one.sum()
    return WeightSolution(inv_one / total, float(1.0 / total))


def _validated_a_sq(a_sq):
    a_sq = np.asarray(a_sq, dtype=float).ravel()
    if a_sq.size < 1:
        raise ValueError("need at least one regressor")
    if np.any(a_sq <= 0):
        raise ZeroRegressor("all squared regressors must be positive")
    return a_sq


def _inverse_steps(schedule: StepSchedule, n: int) -> np.ndarray:
    return 1.0 / schedule.steps(n)


def closed_form_weights(a_sq, schedule: StepSchedule, noise_sigma: float = 1.0,
                        strict: bool = True) -> WeightSolution:
    """Optimal weights for the scalar linear model when ``eta_1 = 1 / a_1^2``.

    ``c_i = (a_{i+1}^2 + 1/eta_i - 1/eta_{i+1}) / S_n`` for ``i < n`` and
    ``c_n = 1 / (eta_n S_n)`` with ``S_n = sum a_i^2``. The minimal MSE is
    ``noise_sigma^2 / S_n``.
    """
    a_sq = _validated_a_sq(a_sq)
    n = a_sq.size
    inv_eta = _inverse_steps(schedule, n)
    if strict and not np.isclose(inv_eta[0], a_sq[0], rtol=1e-12, atol=0):
        raise ValueError("closed form requires the first step eta_1 = 1 / a_1^2 "
                         "(set StepSchedule.override_first)")
    s_n = a_sq.sum()
    c = np.empty(n)
    c[:-1] = (a_sq[1:] + inv_eta[:-1] - inv_eta[1:]) / s_n
    c[-1] = inv_eta[-1] / s_n
    return WeightSolution(c, noise_sigma ** 2 / s_n)


def closed_form_weights_with_init(a_sq, schedule: StepSchedule, sigma: float,
                                  init_error: float) -> WeightSolution:
    """n + 1 optimal weights on ``(x_0, x_1, ..., x_n)`` for a general first step.

    ``c_0 = ((sigma/e_0)^2 + a_1^2 - 1/eta_1) / S_n`` with
    ``S_n = (sigma/e_0)^2 + sum a_i^2`` and ``e_0 = x_0 - x*``; the other
    weights follow ``closed_form_weights`` with the enlarged ``S_n``.
    """
    a_sq = _validated_a_sq(a_sq)
    if init_error == 0 or not np.isfinite(init_error):
        raise ZeroInitError("initial error x_0 - x* must be finite and nonzero")
    n = a_sq.size
    inv_eta = _inverse_steps(schedule, n)
    ratio_sq = (sigma / init_error) ** 2
    s_n = ratio_sq + a_sq.sum()
    c = np.empty(n + 1)
    c[0] = (ratio_sq + a_sq[0] - inv_eta[0]) / s_n
    c[1:-1] = (inv_eta[:-1] + a_sq[1:] - inv_eta[1:]) / s_n
    c[-1] = inv_eta[-1] / s_n
    return WeightSolution(c, sigma ** 2 / s_n, includes_init=True)


def two_step_init_estimate(iterates, observations_b, a, fraction: float = 0.1):
    """Plug-in ``(sigma, x*)`` from the first ``floor(fraction n)`` iterates.

    ``x*`` is estimated by their uniform average and ``sigma`` by the residual
    standard deviation of the matching observations. Feed the results to
    ``closed_form_weights_with_init`` with ``init_error = x_0 - x*_hat``.
    """
    iterates = np.asarray(iterates, dtype=float).ravel()
    k = max(2, int(np.floor(fraction * iterates.size)))
    x_hat = iterates[:k].mean()
    resid = np.asarray(observations_b, float)[:k] - np.asarray(a, float)[:k] * x_hat
    return float(np.std(resid, ddof=1)), float(x_hat)


# -- Monte-Carlo covariance of the iterates --------------------------------


class _GramSink:
    """Accumulates ``sum_r e_r e_r'`` over replications, one column per step."""

    def __init__(self, x_star, n, reps):
        self.x_star = x_star
        self.errors = np.empty((reps, n))

    def push(self, i, x):
        self.errors[:, i - 1] = x[:, 0] - self.x_star[0]


def estimate_sigma(model: ModelSpec, schedule: StepSchedule, n: int, reps: int,
                   rng: RngStream, x0=None, chunk: int = 10_000) -> CovarianceEstimate:
    """Monte-Carlo Gram matrix of iterate errors over ``reps`` trajectories.

    Linear and mean models reuse one regressor sequence across replications
    (drawn from ``rng`` itself); the expectile model draws fresh data each
    replication. Replication r uses stream ``rng.spawn(1 + r)``.
    """
    if model.d != 1:
        raise ValueError("iterate covariance weights are implemented for scalar models")
    if n > 500:
        raise ValueError("estimate_sigma stores an n x n matrix; n must be <= 500")
    if reps < 1000:
        raise ValueError("reps must be >= 1000")
    regressors = None
    if model.kind in ("linear", "mean"):
        regressors = (np.ones((n, 1)) if model.kind == "mean"
                      else rng.normal((n, 1)))
    x_star = model.x_star_array
    gram = np.zeros((n, n))
    gram_sq = np.zeros((n, n))
    done = 0
    while done < reps:
        m = min(chunk, reps - done)
        streams = [rng.spawn(1 + done + r) for r in range(m)]
        sink = _GramSink(x_star, n, m)
        run_batch(schedule, model, n, streams, [sink], x0=x0, regressors=regressors)
        e = sink.errors
        gram += e.T @ e
        gram_sq += (e ** 2).T @ (e ** 2)
        done += m
    mean = symmetrize(gram / reps)
    var = np.maximum(gram_sq / reps - mean ** 2, 0.0)
    return CovarianceEstimate(n, mean, reps, np.sqrt(var / reps))


def exact_sigma_linear(a_sq, schedule: StepSchedule, noise_sigma: float = 1.0,
                       init_error: float = 0.0) -> CovarianceEstimate:
    """Exact iterate-error Gram matrix for the scalar linear model, given a_i^2.

    ``Var(e_i) = (1 - eta_i a_i^2)^2 Var(e_{i-1}) + eta_i^2 a_i^2 sigma^2`` and
    ``Cov(e_i, e_j) = prod_{k=i+1}^{j} (1 - eta_k a_k^2) Var(e_i)`` for j > i.
    """
    a_sq = np.asarray(a_sq, dtype=float).ravel()
    n = a_sq.size
    eta = schedule.steps(n)
    contraction = 1.0 - eta * a_sq
    var = np.empty(n)
    prev = init_error ** 2
    for i in range(n):
        prev = contraction[i] ** 2 * prev + eta[i] ** 2 * a_sq[i] * noise_sigma ** 2
        var[i] = prev
    sigma = np.diag(var)
    for i in range(n):
        factor = 1.0
        for j in range(i + 1, n):
            factor *= contraction[j]
            sigma[i, j] = sigma[j, i] = factor * var[i]
    return CovarianceEstimate(n, sigma, reps=0)


def theta_diag_check(a_sq, schedule: StepSchedule, sigma_est, noise_sigma: float = 1.0) -> float:
    """Off-diagonal mass of ``Theta Sigma Theta'`` relative to ``min(D)``.

    ``Theta`` is unit lower bidiagonal with subdiagonal ``eta_i a_i^2 - 1``
    (i >= 2) and ``D = diag(sigma^2 a_i^2 eta_i^2)``. A true Gram matrix of a
    scalar linear SGD run started with ``eta_1 = 1/a_1^2`` is diagonalized
    exactly, so the returned ratio is ~0 up to sampling noise.
    """
    a_sq = np.asarray(a_sq, dtype=float).ravel()
    n = a_sq.size
    mat = sigma_est.sigma_hat if isinstance(sigma_est, CovarianceEstimate) else np.asarray(sigma_est)
    if n == 1:
        return 0.0
    eta = schedule.steps(n)
    theta = np.eye(n)
    theta[np.arange(1, n), np.arange(n - 1)] = eta[1:] * a_sq[1:] - 1.0
    diag_d = noise_sigma ** 2 * a_sq * eta ** 2
    rotated = theta @ mat @ theta.T
    off = rotated - np.diag(np.diag(rotated))
    return float(np.max(np.abs(off)) / np.min(diag_d))


def oracle_weights_expectile(rho: float, schedule: StepSchedule, n: int, reps: int,
                             rng: RngStream, response: str = "norm",
                             response_args=(), x0=None) -> WeightSolution:
    from .models import expectile_model

    if n > 200:
        raise ValueError("oracle weights are limited to n <= 200")
    model = expectile_model(rho, response, response_args)
    sigma = estimate_sigma(model, schedule, n, reps, rng, x0=x0)
    return blue_weights(sigma)


def write_weights_csv(path, weights, scheme: Optional[str] = None, header_lines=()):
    """``index,weight`` rows (1-based), or ``scheme,index,weight`` when named."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "weight"] if scheme is None else ["scheme", "index", "weight"])
        for i, w in enumerate(np.asarray(weights, float), start=1):
            row = [i, repr(float(w))]
            writer.writerow(row if scheme is None else [scheme] + row)


def mean_model_exact_sigma(n: int, schedule: StepSchedule, noise_sigma: float = 1.0):
    """Gram matrix of the mean model (a_i = 1), started so that x_1 = b_1."""
    return exact_sigma_linear(np.ones(n), schedule, noise_sigma)

