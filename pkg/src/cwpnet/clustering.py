"""Seeded K-Means over degradation representations."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_ITER = 100


class NotFittedError(RuntimeError):
    pass


@dataclass
class ClusterModel:
    k: int
    seed: int = 0
    centroids: np.ndarray | None = None
    inertia: float = float("nan")
    n_iter: int = 0
    labels: np.ndarray | None = field(default=None, repr=False)

    @property
    def fitted(self) -> bool:
        return self.centroids is not None


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _seed_centroids(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++: first centre uniform, later ones with probability ~ D^2."""
    n = len(points)
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(points, points[chosen]).min(axis=1)
    while len(chosen) < k:
        total = d2.sum()
        if total <= 0:
            # every remaining point coincides with a centre
            idx = next(i for i in range(n) if i not in chosen)
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(points, points[idx : idx + 1])[:, 0])
    return points[chosen].copy()


def kmeans_fit(points, k: int, seed: int = 0) -> ClusterModel:
    """Lloyd iterations from k-means++ seeding.

    Stops when assignments no longer change or after 100 iterations.  Empty
    clusters keep their previous centroid.  The result depends only on
    ``seed`` and the order of ``points``.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"points must form an (n, d) array, got shape {x.shape}")
    if len(x) < k:
        raise ValueError(f"kmeans_fit needs at least K={k} points, got {len(x)}")
    if k < 1:
        raise ValueError("K must be positive")
    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(x, k, rng)
    labels = None
    it = 0
    for it in range(1, MAX_ITER + 1):
        new = np.argmin(_sq_dists(x, centroids), axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = x[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    d2 = _sq_dists(x, centroids)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(len(x)), labels].sum())
    return ClusterModel(k=k, seed=seed, centroids=centroids, inertia=inertia, n_iter=it, labels=labels)


def kmeans_assign(model: ClusterModel, rep) -> int | np.ndarray:
    """Nearest centroid; ties go to the lowest index.  Accepts one vector or a batch."""
    if not model.fitted:
        raise NotFittedError("cluster model has not been fitted")
    r = np.asarray(rep, dtype=np.float64)
    single = r.ndim == 1
    idx = np.argmin(_sq_dists(np.atleast_2d(r), model.centroids), axis=1)
    return int(idx[0]) if single else idx
