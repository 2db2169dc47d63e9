"""Synthetic cluster world for training and protocol tests.

K isotropic Gaussian clusters in feature-map space play the role of K
speakers.  Each cluster mean repeats one spectral row; the rows are
simplex directions built from rows of the embedder projection, so they
sum to zero (the mixture is centered, which keeps unconditional
sampling balanced) and the reference embeddings are maximally
separated.  Guidance success is checkable against a nearest-cluster
rule.
"""

from __future__ import annotations

import numpy as np

from .estimators import MeanPoolEmbedder
from .rng import SeedStream


class ToyWorld:
    """Cluster geometry, its embedder, and deterministic samplers."""

    def __init__(self, seed: SeedStream, clusters: int = 2, frames: int = 8, bins: int = 8,
                 emb_dim: int = 4, mean_scale: float = 2.0, cluster_std: float = 0.3):
        if clusters > emb_dim:
            raise ValueError(f"need clusters <= emb_dim, got {clusters} > {emb_dim}")
        self.clusters = clusters
        self.frames = frames
        self.bins = bins
        self.mean_scale = mean_scale
        self.cluster_std = cluster_std
        self.embedder = MeanPoolEmbedder.random(emb_dim, bins, seed.derive("embedder"))
        basis = self.embedder.projection[:clusters]
        directions = basis - basis.mean(axis=0)  # zero-sum simplex (K=2: antipodal)
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        rows = mean_scale * directions
        self.mean_maps = np.stack([np.tile(r, (frames, 1)) for r in rows])
        self.ref_embeddings = np.stack([self.embedder.embed(m) for m in self.mean_maps])

    def sample(self, n: int, seed: SeedStream):
        """Draw n maps and their cluster labels."""
        labels = seed.integers(0, self.clusters, size=n)
        noise = seed.normal((n, self.frames, self.bins))
        return self.mean_maps[labels] + self.cluster_std * noise, labels

    def sample_batch(self, n: int, seed: SeedStream):
        """Dataset protocol for train_estimator: (maps, reference embeddings)."""
        maps, labels = self.sample(n, seed)
        return maps, self.ref_embeddings[labels]

    def nearest_cluster(self, x: np.ndarray) -> int:
        """Index of the cluster mean nearest in Frobenius distance."""
        d = ((self.mean_maps - np.asarray(x)[None]) ** 2).sum(axis=(1, 2))
        return int(np.argmin(d))

    def mixture_mean_map(self) -> np.ndarray:
        return self.mean_maps.mean(axis=0)

    def mixture_var(self) -> float:
        """Average per-element variance of the cluster mixture."""
        spread = ((self.mean_maps - self.mixture_mean_map()) ** 2).mean()
        return float(self.cluster_std ** 2 + spread)

    def make_trials(self, n_same: int, n_diff: int, seed: SeedStream,
                    pool_per_cluster: int = 24):
        """Utterance pool plus same/different trial pairs over it.

        Returns (utterances, trials): a dict id -> feature map, and a list
        of (enroll_id, test_id, is_same) tuples with n_same + n_diff
        entries.  Pairs are drawn with replacement from the pool.
        """
        utterances = {}
        labels = {}
        draw = seed.derive("utterances")
        for k in range(self.clusters):
            for j in range(pool_per_cluster):
                uid = f"spk{k}_utt{j:03d}"
                utterances[uid] = self.mean_maps[k] + self.cluster_std * draw.normal(
                    (self.frames, self.bins))
                labels[uid] = k
        ids_by_cluster = [
            [u for u in utterances if labels[u] == k] for k in range(self.clusters)
        ]
        pick = seed.derive("pairs")
        trials = []
        for _ in range(n_same):
            k = int(pick.integers(0, self.clusters))
            pool = ids_by_cluster[k]
            i, j = pick.integers(0, len(pool), size=2)
            trials.append((pool[int(i)], pool[int(j)], True))
        for _ in range(n_diff):
            k1 = int(pick.integers(0, self.clusters))
            k2 = int((k1 + 1 + pick.integers(0, self.clusters - 1)) % self.clusters)
            i = int(pick.integers(0, len(ids_by_cluster[k1])))
            j = int(pick.integers(0, len(ids_by_cluster[k2])))
            trials.append((ids_by_cluster[k1][i], ids_by_cluster[k2][j], False))
        return utterances, trials
