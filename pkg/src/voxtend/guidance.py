"""Speaker-embedding-guided reverse diffusion.

Two conditioning routes over the same reverse chain:

* external gradient guidance — perturb the reverse-step mean with the
  gradient of the embedding similarity f(x_t) . e, scaled by the
  guidance scale and the step variance (classifier-guidance style,
  Dhariwal & Nichol 2021);
* built-in classifier-free guidance — blend conditional and
  unconditional noise predictions, eps_u + s (eps_c - eps_u)
  (Ho & Salimans 2022), then convert to a mean as usual.

Both loops start from x_T ~ N(0, I), consume the seed identically, and
degenerate bit-exactly to the unguided chain at scale 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Callable, Optional

import numpy as np

from .diffusion import mean_from_noise, reverse_step, step_variance
from .errors import ConfigError
from .estimators import MeanPoolEmbedder, check_unit_norm
from .rng import SeedStream
from .schedule import NoiseSchedule

GUIDANCE_MODES = ("external", "built-in")

# defaults per mode, applied when a config leaves the scale unset
DEFAULT_SCALES = {"external": 2.0, "built-in": 3.0}

NoiseFn = Callable[[np.ndarray, int], np.ndarray]
CondNoiseFn = Callable[[np.ndarray, int, Optional[np.ndarray]], np.ndarray]


@dataclass(frozen=True)
class GuidanceConfig:
    mode: str
    scale: float
    target_frames: int

    def __post_init__(self):
        if self.mode not in GUIDANCE_MODES:
            raise ValueError(f"unknown guidance mode {self.mode!r}")
        if not (math.isfinite(self.scale) and self.scale >= 0.0):
            raise ValueError(f"guidance scale must be finite and >= 0, got {self.scale}")
        if self.target_frames < 1:
            raise ValueError("target_frames must be >= 1")


def cfg_mix(noise_uncond: np.ndarray, noise_cond: np.ndarray, scale: float) -> np.ndarray:
    """Classifier-free blend: uncond + scale * (cond - uncond).

    scale 0 and 1 return exact copies of the respective branch, so the
    degenerate samplers are bit-identical to the unmixed ones.
    """
    noise_uncond = np.asarray(noise_uncond, dtype=np.float64)
    noise_cond = np.asarray(noise_cond, dtype=np.float64)
    if noise_uncond.shape != noise_cond.shape:
        raise ValueError(f"shape mismatch: {noise_uncond.shape} vs {noise_cond.shape}")
    if scale == 0.0:
        return noise_uncond.copy()
    if scale == 1.0:
        return noise_cond.copy()
    return noise_uncond + scale * (noise_cond - noise_uncond)


def guided_mean(mean: np.ndarray, variance: float, grad: np.ndarray, scale: float) -> np.ndarray:
    """Gradient-guided mean: mean + scale * variance * grad, elementwise."""
    mean = np.asarray(mean, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if mean.shape != grad.shape:
        raise ValueError(f"shape mismatch: {mean.shape} vs {grad.shape}")
    if variance < 0.0:
        raise ValueError("variance must be nonnegative")
    if scale == 0.0:
        return mean.copy()
    return mean + scale * variance * grad


def embedding_similarity(x_t: np.ndarray, ref_emb: np.ndarray, embedder: MeanPoolEmbedder) -> float:
    """Dot product between the map's embedding and the reference, in [-1, 1]."""
    ref_emb = check_unit_norm(ref_emb)
    sim = float(embedder.embed(x_t) @ ref_emb)
    return min(1.0, max(-1.0, sim))


def _run_chain(mean_fn, frames: int, bins: int, sched: NoiseSchedule, seed: SeedStream) -> np.ndarray:
    x = seed.normal((frames, bins))
    for t in range(sched.total_steps, 0, -1):
        x = reverse_step(x, mean_fn(x, t), t, sched, seed)
    return x


def _checked_noise(noise_fn, x: np.ndarray, t: int, emb=None) -> np.ndarray:
    eps = noise_fn(x, t) if emb is _UNCOND else noise_fn(x, t, emb)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x.shape:
        raise ConfigError(f"estimator returned shape {eps.shape} for input {x.shape}")
    return eps


_UNCOND = object()


def sample_unguided(noise_fn: NoiseFn, frames: int, bins: int,
                    sched: NoiseSchedule, seed: SeedStream) -> np.ndarray:
    """Plain reverse chain from pure noise with an unconditional estimator."""
    def mean_fn(x, t):
        return mean_from_noise(x, _checked_noise(noise_fn, x, t, _UNCOND), t, sched)

    return _run_chain(mean_fn, frames, bins, sched, seed)


def sample_external(ref_emb: np.ndarray, cfg: GuidanceConfig, noise_fn: NoiseFn,
                    embedder: MeanPoolEmbedder, sched: NoiseSchedule, seed: SeedStream,
                    trace: Optional[IO[str]] = None) -> np.ndarray:
    """Reverse chain whose mean is nudged along the similarity gradient.

    At each step: estimate the noise, form the plain mean, add
    scale * variance * grad of (embedding(x_t) . ref_emb), then draw the
    next sample.  With trace set, writes one "t=<int> sim=<decimal>"
    line per step for the current x_t.
    """
    if cfg.mode != "external":
        raise ConfigError(f"expected external mode, got {cfg.mode!r}")
    ref_emb = check_unit_norm(ref_emb)

    def mean_fn(x, t):
        if trace is not None:
            trace.write(f"t={t} sim={embedding_similarity(x, ref_emb, embedder):.6f}\n")
        mu = mean_from_noise(x, _checked_noise(noise_fn, x, t, _UNCOND), t, sched)
        grad = embedder.embed_grad(x, ref_emb)
        return guided_mean(mu, step_variance(t, sched), grad, cfg.scale)

    return _run_chain(mean_fn, cfg.target_frames, embedder.bins, sched, seed)


def sample_builtin(ref_emb: np.ndarray, cfg: GuidanceConfig, cond_noise_fn: CondNoiseFn,
                   bins: int, sched: NoiseSchedule, seed: SeedStream) -> np.ndarray:
    """Reverse chain driven by the classifier-free noise blend.

    The estimator is evaluated twice per step, with the reference
    embedding and with None (null condition); the blended prediction is
    converted to a mean and sampled from.
    """
    if cfg.mode != "built-in":
        raise ConfigError(f"expected built-in mode, got {cfg.mode!r}")
    ref_emb = check_unit_norm(ref_emb)

    def mean_fn(x, t):
        eps_u = _checked_noise(cond_noise_fn, x, t, None)
        eps_c = _checked_noise(cond_noise_fn, x, t, ref_emb)
        return mean_from_noise(x, cfg_mix(eps_u, eps_c, cfg.scale), t, sched)

    return _run_chain(mean_fn, cfg.target_frames, bins, sched, seed)
