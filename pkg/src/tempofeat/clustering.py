"""Seeded k-means (k-means++ initialisation, Lloyd iterations) for the cluster feature."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class KMeansModel:
    k: int
    centroids: np.ndarray
    inertia: float
    iterations_run: int
    seed: int
    labels: np.ndarray = field(default=None, repr=False)
    inertia_history: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "centroids": self.centroids.tolist(),
            "inertia": self.inertia,
            "iterations_run": self.iterations_run,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KMeansModel":
        return cls(k=int(d["k"]), centroids=np.asarray(d["centroids"], dtype=np.float64),
                   inertia=float(d["inertia"]), iterations_run=int(d.get("iterations_run", 0)),
                   seed=int(d["seed"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "KMeansModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _sq_dists(points, centroids):
    # exact per-coordinate differences; no |a|^2 - 2ab + |b|^2 shortcut
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _assign(points, centroids, chunk=8192):
    labels = np.empty(len(points), dtype=np.int64)
    d2 = np.empty(len(points))
    for s in range(0, len(points), chunk):
        d = _sq_dists(points[s:s + chunk], centroids)
        lab = d.argmin(axis=1)  # first minimum -> smallest index on ties
        labels[s:s + chunk] = lab
        d2[s:s + chunk] = d[np.arange(len(lab)), lab]
    return labels, d2


def _plusplus(points, k, rng):
    n = len(points)
    centres = [points[rng.integers(n)]]
    closest = _sq_dists(points, np.asarray(centres)).ravel()
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # fewer distinct points than k; take the first unused index
            idx = len(centres) % n
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centres.append(points[idx])
        closest = np.minimum(closest, _sq_dists(points, points[idx][None, :]).ravel())
    return np.asarray(centres, dtype=np.float64)


def kmeans_fit(points, k: int = 10, max_iter: int = 300, tol: float = 1e-6,
               seed: int = 0) -> KMeansModel:
    """Lloyd's algorithm from a seeded k-means++ start.

    Stops when no label changes or the largest centroid move is below ``tol``.
    An emptied cluster is re-seeded at the point farthest from its centroid.
    ``inertia_history`` holds the inertia after every assignment step.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(points) < k:
        raise ValueError(f"k-means needs at least k={k} points, got {len(points)}")
    rng = np.random.default_rng(seed)
    centroids = _plusplus(points, k, rng)
    labels, d2 = _assign(points, centroids)
    history = [float(d2.sum())]
    it = 0
    for it in range(1, max_iter + 1):
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, points)
        new = centroids.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        for j in np.flatnonzero(~filled):
            far = int(np.argmax(d2))
            new[j] = points[far]
            d2[far] = 0.0
        shift = float(np.max(np.sqrt(((new - centroids) ** 2).sum(axis=1))))
        centroids = new
        new_labels, d2 = _assign(points, centroids)
        history.append(float(d2.sum()))
        changed = bool((new_labels != labels).any())
        labels = new_labels
        if not changed or shift < tol:
            break
    return KMeansModel(k=k, centroids=centroids, inertia=history[-1], iterations_run=it,
                       seed=seed, labels=labels, inertia_history=tuple(history))


def kmeans_assign(model: KMeansModel, point) -> int:
    """Index of the nearest centroid, smallest index on ties."""
    p = np.asarray(point, dtype=np.float64).reshape(1, -1)
    return int(_assign(p, model.centroids)[0][0])


def kmeans_assign_many(model: KMeansModel, points) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    return _assign(points, model.centroids)[0]
