"""Noise estimators and a differentiable mean-pool speaker embedder.

Three players, all NumPy with exact hand-written math:

* :class:`AnalyticGaussianEstimator` — the closed-form optimum of the
  noise-MSE loss when the clean data are isotropic Gaussian.  Plugged
  into the reverse chain it makes the whole sampler analytically
  checkable.
* :class:`SmallNetEstimator` — a two-hidden-layer MLP over flattened
  feature maps with a sinusoidal timestep table and an additive
  condition projection.  A learned null token replaces the projected
  condition on unconditional calls, so one net serves both branches of
  classifier-free sampling.  Gradients are hand-derived; training is
  plain fixed-rate gradient descent with conditional dropout.
* :class:`MeanPoolEmbedder` — frame-mean pooling, linear projection, L2
  normalization, with the exact input gradient of the similarity to a
  reference embedding.

Checkpoints are a self-describing text format ("voxtend-net v1") of
named 2-D tensors printed at 17 significant digits, which round-trips
float64 exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Optional, Sequence

import numpy as np

from .diffusion import as_feature_map
from .errors import ConfigError, DegenerateEmbeddingError, FormatError, TrainingDivergence
from .rng import SeedStream
from .schedule import NoiseSchedule

NET_MAGIC = "voxtend-net v1"


# ---------------------------------------------------------------------------
# analytic reference estimator


@dataclass(frozen=True)
class AnalyticGaussianEstimator:
    """Optimal noise predictor for x_0 ~ N(mean0, var0 I).

    With x_t = sqrt(ab) x_0 + sqrt(1-ab) eps and ab = alpha_bar_t, the
    posterior mean of eps given x_t is

        sqrt(1-ab) (x_t - sqrt(ab) mean0) / (ab var0 + 1 - ab),

    which is exactly the minimizer of the noise-MSE loss.
    """

    mean0: np.ndarray | float
    var0: float
    sched: NoiseSchedule

    def __post_init__(self):
        if not self.var0 > 0.0:
            raise ValueError(f"var0 must be positive, got {self.var0}")

    def __call__(self, x_t: np.ndarray, t: int) -> np.ndarray:
        bar = self.sched.alpha_bar_at(t)
        num = math.sqrt(1.0 - bar) * (x_t - math.sqrt(bar) * self.mean0)
        return num / (bar * self.var0 + 1.0 - bar)


# ---------------------------------------------------------------------------
# mean-pool embedder


def _pairwise_frame_sum(x: np.ndarray) -> np.ndarray:
    # Halving-tree sum over frames: splitting 2F rows at F reproduces the
    # F-row tree twice, so pooling is bitwise invariant under duplication.
    n = x.shape[0]
    if n == 1:
        return x[0]
    mid = n // 2
    return _pairwise_frame_sum(x[:mid]) + _pairwise_frame_sum(x[mid:])


def meanpool_frames(x: np.ndarray) -> np.ndarray:
    """Mean over frames via a pairwise tree (duplication-exact)."""
    x = as_feature_map(x)
    return _pairwise_frame_sum(x) / x.shape[0]


def normalize_embedding(v: np.ndarray) -> np.ndarray:
    """Scale a vector to unit L2 norm; zero vectors are degenerate."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        raise DegenerateEmbeddingError("cannot normalize a (near-)zero vector")
    return v / n


def check_unit_norm(v: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if abs(n - 1.0) > tol:
        raise ValueError(f"embedding norm {n} is not 1 within {tol}")
    return v


class MeanPoolEmbedder:
    """Unit-norm embedding of a feature map: normalize(W @ frame mean)."""

    def __init__(self, projection: np.ndarray):
        self.projection = np.asarray(projection, dtype=np.float64)
        if self.projection.ndim != 2:
            raise ValueError("projection must be a (dim, bins) matrix")

    @property
    def dim(self) -> int:
        return self.projection.shape[0]

    @property
    def bins(self) -> int:
        return self.projection.shape[1]

    @classmethod
    def random(cls, dim: int, bins: int, seed: SeedStream) -> "MeanPoolEmbedder":
        """Embedder with orthonormal projection rows (requires dim <= bins)."""
        if dim > bins:
            raise ValueError(f"need dim <= bins, got {dim} > {bins}")
        q, _ = np.linalg.qr(seed.normal((bins, dim)))
        return cls(q.T.copy())

    def _check_bins(self, x: np.ndarray) -> None:
        if x.shape[1] != self.bins:
            raise ValueError(f"feature map has {x.shape[1]} bins, embedder expects {self.bins}")

    def embed(self, x: np.ndarray) -> np.ndarray:
        x = as_feature_map(x)
        self._check_bins(x)
        return normalize_embedding(self.projection @ meanpool_frames(x))

    def embed_grad(self, x: np.ndarray, ref_emb: np.ndarray) -> np.ndarray:
        """Exact gradient of embed(x) . ref_emb with respect to every element of x.

        Chain rule through the frame mean, the projection, and the
        normalization; each frame contributes 1/F of the pooled mean, so
        all rows of the gradient are identical.
        """
        x = as_feature_map(x)
        self._check_bins(x)
        ref_emb = check_unit_norm(ref_emb)
        y = self.projection @ meanpool_frames(x)
        n = float(np.linalg.norm(y))
        if n < 1e-12:
            raise DegenerateEmbeddingError("gradient undefined at a zero pooled projection")
        unit = y / n
        # d(unit . ref)/dy: component of ref orthogonal to unit, shrunk by 1/n
        gy = (ref_emb - float(unit @ ref_emb) * unit) / n
        gp = self.projection.T @ gy / x.shape[0]
        return np.tile(gp, (x.shape[0], 1))


# ---------------------------------------------------------------------------
# small trainable estimator


def _silu(z: np.ndarray) -> np.ndarray:
    return z * _sigmoid(z)


def _silu_grad(z: np.ndarray) -> np.ndarray:
    s = _sigmoid(z)
    return s * (1.0 + z * (1.0 - s))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _timestep_table(total_steps: int, width: int) -> np.ndarray:
    # Fixed sin/cos table indexed by raw step 0..T (row 0 unused).
    pos = np.arange(total_steps + 1, dtype=np.float64)[:, None]
    idx = np.arange(width // 2, dtype=np.float64)[None, :]
    ang = pos / (10000.0 ** (2.0 * idx / width))
    tab = np.zeros((total_steps + 1, width))
    tab[:, 0::2] = np.sin(ang)
    tab[:, 1::2] = np.cos(ang)
    return tab


class SmallNetEstimator:
    """MLP noise estimator over flattened (frames, bins) maps.

    Forward pass, x flattened to a vector of length N = frames * bins:

        z1 = W1 x + b1 + Wt temb[t] + (Wc e  if conditioned else  u)
        z2 = W2 silu(z1) + b2
        out = W3 silu(z2) + b3            (reshaped back to frames x bins)

    ``u`` is the learned null-condition token; unconditional calls never
    touch the condition projection Wc.
    """

    PARAM_NAMES = ("w1", "b1", "wt", "wc", "null_token", "w2", "b2", "w3", "b3")

    def __init__(
        self,
        frames: int,
        bins: int,
        emb_dim: int,
        total_steps: int,
        hidden: Sequence[int] = (256, 256),
        temb_width: int = 16,
        seed: Optional[SeedStream] = None,
    ):
        if len(hidden) != 2:
            raise ValueError("hidden must give exactly two layer widths")
        if temb_width % 2 != 0:
            raise ValueError("temb_width must be even")
        self.frames = int(frames)
        self.bins = int(bins)
        self.emb_dim = int(emb_dim)
        self.total_steps = int(total_steps)
        self.hidden = (int(hidden[0]), int(hidden[1]))
        self.temb_width = int(temb_width)
        self._temb = _timestep_table(self.total_steps, self.temb_width)

        n = self.frames * self.bins
        h1, h2 = self.hidden
        shapes = {
            "w1": (h1, n),
            "b1": (h1,),
            "wt": (h1, self.temb_width),
            "wc": (h1, self.emb_dim),
            "null_token": (h1,),
            "w2": (h2, h1),
            "b2": (h2,),
            "w3": (n, h2),
            "b3": (n,),
        }
        # fan-in of the linear map each tensor feeds (biases and the null
        # token use their layer's fan-in)
        fan_in = {
            "w1": n, "b1": n, "wt": self.temb_width, "wc": self.emb_dim,
            "null_token": self.emb_dim, "w2": h1, "b2": h1, "w3": h2, "b3": h2,
        }
        self.params: dict[str, np.ndarray] = {}
        for name in self.PARAM_NAMES:
            if seed is None:
                self.params[name] = np.zeros(shapes[name])
            else:
                bound = 1.0 / math.sqrt(fan_in[name])
                self.params[name] = (seed.random(shapes[name]) * 2.0 - 1.0) * bound

    # -- basic plumbing -----------------------------------------------------

    def copy(self) -> "SmallNetEstimator":
        dup = SmallNetEstimator(
            self.frames, self.bins, self.emb_dim, self.total_steps,
            self.hidden, self.temb_width, seed=None,
        )
        for name in self.PARAM_NAMES:
            dup.params[name] = self.params[name].copy()
        return dup

    def _check_inputs(self, x_t: np.ndarray, t, emb) -> None:
        if x_t.shape != (self.frames, self.bins):
            raise ConfigError(
                f"estimator expects {self.frames}x{self.bins} maps, got {x_t.shape}"
            )
        if emb is not None and np.shape(emb) != (self.emb_dim,):
            raise ConfigError(
                f"condition must have dim {self.emb_dim}, got shape {np.shape(emb)}"
            )

    # -- forward ------------------------------------------------------------

    def __call__(self, x_t: np.ndarray, t: int, emb: Optional[np.ndarray] = None) -> np.ndarray:
        """Predict the noise in x_t; emb=None routes the null-condition token."""
        x_t = np.asarray(x_t, dtype=np.float64)
        self._check_inputs(x_t, t, emb)
        if not 1 <= t <= self.total_steps:
            raise ValueError(f"step {t} outside 1..{self.total_steps}")
        x = x_t.reshape(1, -1)
        ts = np.array([t])
        if emb is None:
            conds = np.zeros((1, self.emb_dim))
            mask = np.array([False])
        else:
            conds = np.asarray(emb, dtype=np.float64).reshape(1, -1)
            mask = np.array([True])
        out, _ = self._forward_batch(x, ts, conds, mask)
        return out[0].reshape(self.frames, self.bins)

    def _forward_batch(self, x, ts, conds, mask):
        p = self.params
        cond_term = np.where(mask[:, None], conds @ p["wc"].T, p["null_token"])
        z1 = x @ p["w1"].T + p["b1"] + self._temb[ts] @ p["wt"].T + cond_term
        h1 = _silu(z1)
        z2 = h1 @ p["w2"].T + p["b2"]
        h2 = _silu(z2)
        out = h2 @ p["w3"].T + p["b3"]
        return out, (x, ts, conds, mask, z1, h1, z2, h2)

    # -- loss and gradients ---------------------------------------------------

    def loss_and_grads_from_noisy(self, x_ts, ts, embs, noise_targets):
        """Loss and exact parameter gradients on pre-noised samples.

        Arguments are parallel sequences: noisy maps, step indices,
        conditions (None entries take the null token), and the noise each
        map actually received.  The loss is the mean over items of the
        per-item noise MSE.
        """
        batch = len(x_ts)
        if batch == 0:
            raise ValueError("empty batch")
        n = self.frames * self.bins
        x = np.stack([np.asarray(m, dtype=np.float64).reshape(-1) for m in x_ts])
        eps = np.stack([np.asarray(m, dtype=np.float64).reshape(-1) for m in noise_targets])
        ts = np.asarray(ts, dtype=np.int64)
        mask = np.array([e is not None for e in embs])
        conds = np.zeros((batch, self.emb_dim))
        for i, e in enumerate(embs):
            if e is not None:
                conds[i] = np.asarray(e, dtype=np.float64)

        out, cache = self._forward_batch(x, ts, conds, mask)
        _, _, _, _, z1, h1, z2, h2 = cache
        p = self.params

        diff = out - eps
        loss = float(np.mean(diff ** 2))

        d_out = 2.0 * diff / (batch * n)        # d loss / d out
        grads = {
            "w3": d_out.T @ h2,
            "b3": d_out.sum(axis=0),
        }
        d_h2 = d_out @ p["w3"]
        d_z2 = d_h2 * _silu_grad(z2)
        grads["w2"] = d_z2.T @ h1
        grads["b2"] = d_z2.sum(axis=0)
        d_h1 = d_z2 @ p["w2"]
        d_z1 = d_h1 * _silu_grad(z1)
        grads["w1"] = d_z1.T @ x
        grads["b1"] = d_z1.sum(axis=0)
        grads["wt"] = d_z1.T @ self._temb[ts]
        grads["wc"] = (d_z1 * mask[:, None]).T @ conds
        grads["null_token"] = d_z1[~mask].sum(axis=0) if (~mask).any() else np.zeros_like(p["null_token"])
        return loss, grads

    def loss_and_grads(self, batch, sched: NoiseSchedule, seed: SeedStream):
        """Draw (x_t, eps) for each (x0, t, emb|None) item, then backprop.

        Noise is drawn in item order from ``seed``, exactly as per-item
        forward jumps would.
        """
        if len(batch) == 0:
            raise ValueError("empty batch")
        x0s = np.stack([np.asarray(b[0], dtype=np.float64).reshape(-1) for b in batch])
        ts = np.asarray([b[1] for b in batch], dtype=np.int64)
        embs = [b[2] for b in batch]
        bars = np.array([sched.alpha_bar_at(int(t)) for t in ts])
        eps = seed.normal(x0s.shape)
        x_ts = np.sqrt(bars)[:, None] * x0s + np.sqrt(1.0 - bars)[:, None] * eps
        return self.loss_and_grads_from_noisy(x_ts, ts, embs, eps)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 32
    learning_rate: float = 1e-3
    p_uncond: float = 0.1


def train_estimator(dataset, net: SmallNetEstimator, hyper: TrainConfig,
                    sched: NoiseSchedule, seed: SeedStream):
    """Plain gradient descent on the noise objective with conditional dropout.

    The minimized objective is the summed squared error per map,
    ||eps - eps_hat||^2, i.e. element count times the per-element mean
    that loss_and_grads returns; the recorded loss curve stays the
    per-element mean.  ``dataset`` must provide
    sample_batch(n, seed) -> (x0 maps, embeddings).  Returns (trained
    copy of net, per-step loss curve).  Raises TrainingDivergence as
    soon as the loss stops being finite.
    """
    net = net.copy()
    step_scale = hyper.learning_rate * net.frames * net.bins
    losses: list[float] = []
    for step in range(hyper.steps):
        x0s, embs = dataset.sample_batch(hyper.batch_size, seed)
        ts = seed.integers(1, sched.total_steps + 1, size=hyper.batch_size)
        drop = seed.random(hyper.batch_size) < hyper.p_uncond
        batch = [
            (x0s[i], int(ts[i]), None if drop[i] else embs[i])
            for i in range(hyper.batch_size)
        ]
        loss, grads = net.loss_and_grads(batch, sched, seed)
        if not math.isfinite(loss):
            raise TrainingDivergence(step, loss)
        for name in net.PARAM_NAMES:
            net.params[name] -= step_scale * grads[name]
        losses.append(loss)
    return net, losses


def smoothed(losses: Sequence[float], window: int = 50) -> list[float]:
    """Trailing moving average of a loss curve."""
    out = []
    acc = 0.0
    for i, v in enumerate(losses):
        acc += v
        if i >= window:
            acc -= losses[i - window]
        out.append(acc / min(i + 1, window))
    return out


# ---------------------------------------------------------------------------
# checkpoint format


def _write_tensor(sink: IO[str], name: str, arr: np.ndarray) -> None:
    mat = arr.reshape(1, -1) if arr.ndim == 1 else arr
    sink.write(f"tensor {name} {mat.shape[0]} {mat.shape[1]}\n")
    for row in mat:
        sink.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def _read_tensors(source: IO[str]) -> dict[str, np.ndarray]:
    lines = [ln.rstrip("\n") for ln in source]
    if not lines or lines[0] != NET_MAGIC:
        raise FormatError(f"missing magic line {NET_MAGIC!r}")
    tensors: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        if not lines[i]:
            i += 1
            continue
        parts = lines[i].split()
        if len(parts) != 4 or parts[0] != "tensor":
            raise FormatError(f"line {i + 1}: expected tensor header, got {lines[i]!r}")
        name, rows, cols = parts[1], int(parts[2]), int(parts[3])
        if i + rows >= len(lines):
            raise FormatError(f"tensor {name}: truncated data")
        data = []
        for r in range(rows):
            vals = lines[i + 1 + r].split()
            if len(vals) != cols:
                raise FormatError(f"tensor {name} row {r}: expected {cols} values")
            data.append([float(v) for v in vals])
        tensors[name] = np.array(data, dtype=np.float64)
        i += 1 + rows
    return tensors


def save_net(net: SmallNetEstimator, sink: IO[str]) -> None:
    sink.write(NET_MAGIC + "\n")
    geometry = np.array([[net.frames, net.bins, net.emb_dim, net.total_steps,
                          net.hidden[0], net.hidden[1], net.temb_width]], dtype=np.float64)
    _write_tensor(sink, "geometry", geometry)
    for name in net.PARAM_NAMES:
        _write_tensor(sink, name, net.params[name])


def load_net(source: IO[str]) -> SmallNetEstimator:
    tensors = _read_tensors(source)
    if "geometry" not in tensors:
        raise FormatError("checkpoint has no geometry tensor")
    g = [int(v) for v in tensors["geometry"][0]]
    if len(g) != 7:
        raise FormatError("geometry tensor must hold 7 values")
    net = SmallNetEstimator(g[0], g[1], g[2], g[3], hidden=(g[4], g[5]), temb_width=g[6])
    for name in net.PARAM_NAMES:
        if name not in tensors:
            raise FormatError(f"checkpoint is missing tensor {name!r}")
        want = net.params[name].shape
        got = tensors[name]
        net.params[name] = got[0] if len(want) == 1 else got
        if net.params[name].shape != want:
            raise FormatError(f"tensor {name!r} has shape {got.shape}, expected {want}")
    return net


def save_embedder(emb: MeanPoolEmbedder, sink: IO[str]) -> None:
    sink.write(NET_MAGIC + "\n")
    _write_tensor(sink, "projection", emb.projection)


def load_embedder(source: IO[str]) -> MeanPoolEmbedder:
    tensors = _read_tensors(source)
    if "projection" not in tensors:
        raise FormatError("embedder checkpoint has no projection tensor")
    return MeanPoolEmbedder(tensors["projection"])
