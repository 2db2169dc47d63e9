"""Forward noising, reverse-step statistics, and the noise-prediction loss.

Discrete-time Gaussian diffusion in the parameterization of Ho et al.
(2020).  Feature maps are float64 arrays of shape (frames, bins) and all
operations below act elementwise on that grid:

    forward transition   q(x_t | x_{t-1}) = N(sqrt(alpha_t) x_{t-1}, beta_t I)
    jump marginal        x_t = sqrt(alpha_bar_t) x_0 + sqrt(1-alpha_bar_t) eps
    reverse mean         mu = (x_t - beta_t / sqrt(1-alpha_bar_t) * eps_hat)
                              / sqrt(alpha_t)
    reverse step         x_{t-1} = mu + sqrt(var_t) z,   z ~ N(0, I)

The final step t = 1 emits the mean with no added noise.
"""

from __future__ import annotations

import math

import numpy as np

from .rng import SeedStream
from .schedule import NoiseSchedule

VARIANCE_KINDS = ("posterior", "beta")


def as_feature_map(x) -> np.ndarray:
    """Validate and return a float64 (frames, bins) array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"feature map must be 2-D and non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature map contains non-finite values")
    return arr


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def forward_step(x_prev: np.ndarray, t: int, sched: NoiseSchedule, seed: SeedStream) -> np.ndarray:
    """One forward transition: sqrt(alpha_t) x_{t-1} + sqrt(1-alpha_t) eps."""
    x_prev = as_feature_map(x_prev)
    a = sched.alpha_at(t)
    eps = seed.normal(x_prev.shape)
    return math.sqrt(a) * x_prev + math.sqrt(1.0 - a) * eps


def forward_jump(x0: np.ndarray, t: int, sched: NoiseSchedule, seed: SeedStream):
    """Jump straight from x_0 to x_t; returns (x_t, eps) with the drawn noise.

    The returned eps is the regression target when training a noise
    estimator with :func:`mse`.
    """
    x0 = as_feature_map(x0)
    bar = sched.alpha_bar_at(t)
    eps = seed.normal(x0.shape)
    xt = math.sqrt(bar) * x0 + math.sqrt(1.0 - bar) * eps
    return xt, eps


def mean_from_noise(x_t: np.ndarray, noise_pred: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Reverse-step mean implied by a noise estimate:

        (1/sqrt(alpha_t)) * (x_t - (1-alpha_t)/sqrt(1-alpha_bar_t) * noise_pred)
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    noise_pred = np.asarray(noise_pred, dtype=np.float64)
    _check_same_shape(x_t, noise_pred)
    a = sched.alpha_at(t)
    bar = sched.alpha_bar_at(t)
    if bar >= 1.0:
        raise ZeroDivisionError(f"alpha_bar at step {t} is 1; noise coefficient undefined")
    coef = (1.0 - a) / math.sqrt(1.0 - bar)
    return (x_t - coef * noise_pred) / math.sqrt(a)


def step_variance(t: int, sched: NoiseSchedule, kind: str = "posterior") -> float:
    """Fixed reverse-step variance at step t.

    "posterior" gives beta_tilde_t = (1-alpha_bar_{t-1})/(1-alpha_bar_t) beta_t
    (with beta_1 at the boundary); "beta" uses beta_t unchanged.  Both are
    x_t-independent.
    """
    if kind not in VARIANCE_KINDS:
        raise ValueError(f"unknown variance kind {kind!r}")
    b = sched.beta_at(t)
    if kind == "beta" or t == 1:
        return b
    prev_bar = sched.alpha_bar_at(t - 1)
    bar = sched.alpha_bar_at(t)
    return (1.0 - prev_bar) / (1.0 - bar) * b


def reverse_step(
    x_t: np.ndarray,
    mean: np.ndarray,
    t: int,
    sched: NoiseSchedule,
    seed: SeedStream,
    variance_kind: str = "posterior",
) -> np.ndarray:
    """Draw x_{t-1} ~ N(mean, var_t I); at t = 1 return the mean itself."""
    x_t = np.asarray(x_t, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    _check_same_shape(x_t, mean)
    sched._check_step(t)
    if t == 1:
        return mean
    var = step_variance(t, sched, variance_kind)
    return mean + math.sqrt(var) * seed.normal(mean.shape)


def mse(noise: np.ndarray, noise_pred: np.ndarray) -> float:
    """Mean of squared elementwise differences (the noise-prediction loss)."""
    noise = np.asarray(noise, dtype=np.float64)
    noise_pred = np.asarray(noise_pred, dtype=np.float64)
    _check_same_shape(noise, noise_pred)
    return float(np.mean((noise - noise_pred) ** 2))
