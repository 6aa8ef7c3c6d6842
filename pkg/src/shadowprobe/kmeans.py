"""Lloyd's k-means and a SuLQ-style differentially private variant.

The private variant perturbs every training-set access made by the
update step: per-cluster per-dimension sums and per-cluster counts each
receive Gaussian noise N(0, sigma) (sigma is the standard deviation),
with point values clamped to per-dimension bounds before summation and
noisy counts floored at 1. Assignment ties go to the lowest centroid
index. An emptied centroid is reseeded to the point farthest from its
nearest centroid, so k never shrinks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContractError, RandomSource


@dataclass(eq=False)
class KMeansModel:
    centroids: np.ndarray
    converged: bool
    iterations_run: int
    objective_trace: list

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(eq=False)
class SulqParams:
    """clamp is a (low, high) pair of per-dimension bounds; when None it
    is derived from the observed min/max of the training points."""

    sigma: float
    clamp: tuple | None = None

    def __post_init__(self):
        if self.sigma <= 0:
            raise ContractError("sigma must be positive")
        if self.clamp is not None:
            low, high = self.clamp
            low = np.asarray(low, dtype=np.float64)
            high = np.asarray(high, dtype=np.float64)
            if low.shape != high.shape or np.any(low >= high):
                raise ContractError("clamp bounds must satisfy low < high per dimension")
            self.clamp = (low, high)


def clamp_from_points(points) -> tuple:
    points = np.asarray(points, dtype=np.float64)
    low = points.min(axis=0)
    high = points.max(axis=0)
    high = np.where(high > low, high, low + 1.0)
    return low, high


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ContractError(f"points must be a non-empty (n, d) array, got shape {pts.shape}")
    return pts


def _distances_sq(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return (diff * diff).sum(axis=2)


def within_cluster_ss(points: np.ndarray, centroids: np.ndarray,
                      assignment: np.ndarray) -> float:
    diff = points - centroids[assignment]
    return float((diff * diff).sum())


def _init_centroids(points: np.ndarray, k: int, rng: RandomSource) -> np.ndarray:
    distinct = np.unique(points, axis=0)
    pool = distinct if len(distinct) >= k else points
    idx = rng.choice(len(pool), size=k, replace=False)
    return pool[idx].copy()


def _reseed_empty(points, centroids, assignment, counts):
    for c in np.nonzero(counts == 0)[0]:
        d = _distances_sq(points, centroids).min(axis=1)
        far = int(np.argmax(d))
        centroids[c] = points[far]
        assignment = np.argmin(_distances_sq(points, centroids), axis=1)
        counts = np.bincount(assignment, minlength=len(centroids))
    return centroids, assignment, counts


def _lloyd(points, k, max_iters, rng, noise=None):
    points = _as_points(points)
    if k < 1:
        raise ContractError("k must be >= 1")
    if k > len(points):
        raise ContractError(f"k={k} exceeds number of points ({len(points)})")
    centroids = _init_centroids(points, k, rng)
    trace = []
    assignment = None
    converged = False
    iterations = 0
    for _ in range(max_iters):
        new_assignment = np.argmin(_distances_sq(points, centroids), axis=1)
        counts = np.bincount(new_assignment, minlength=k)
        centroids, new_assignment, counts = _reseed_empty(points, centroids, new_assignment, counts)
        obj = within_cluster_ss(points, centroids, new_assignment)
        if noise is None and trace and obj > trace[-1] + 1e-8 * max(1.0, trace[-1]):
            raise ArithmeticError(f"within-cluster objective increased: {trace[-1]} -> {obj}")
        trace.append(obj)
        if assignment is not None and np.array_equal(new_assignment, assignment):
            converged = True
            break
        assignment = new_assignment
        iterations += 1
        if noise is None:
            for c in range(k):
                centroids[c] = points[assignment == c].mean(axis=0)
        else:
            centroids = noise(points, assignment, counts)
    return KMeansModel(centroids, converged, iterations, trace)


def kmeans_train(points, k: int, max_iters: int = 100,
                 rng: RandomSource | None = None) -> KMeansModel:
    """Plain Lloyd iterations until assignments stabilize or max_iters.

    Initial centroids are k distinct points sampled uniformly without
    replacement. The within-cluster sum of squared distances is recorded
    per iteration and checked to be non-increasing.
    """
    if rng is None:
        raise ContractError("kmeans_train requires a RandomSource")
    return _lloyd(points, k, max_iters, rng)


def sulq_kmeans_train(points, k: int, max_iters: int, params: SulqParams,
                      rng: RandomSource | None = None) -> KMeansModel:
    """Lloyd iterations with noisy aggregate accesses in the update step."""
    if rng is None:
        raise ContractError("sulq_kmeans_train requires a RandomSource")
    points = _as_points(points)
    low, high = params.clamp if params.clamp is not None else clamp_from_points(points)
    if low.shape != (points.shape[1],):
        raise ContractError("clamp bounds must match point dimension")
    clamped = np.clip(points, low, high)
    sigma = params.sigma

    def noisy_update(pts, assignment, counts):
        k_, d = len(counts), pts.shape[1]
        sums = np.zeros((k_, d))
        np.add.at(sums, assignment, clamped)
        sums += rng.normal(0.0, sigma, size=(k_, d))
        noisy_counts = np.maximum(counts + rng.normal(0.0, sigma, size=k_), 1.0)
        return sums / noisy_counts[:, None]

    return _lloyd(points, k, max_iters, rng, noise=noisy_update)


def assign(model: KMeansModel, x) -> int:
    """Index of the nearest centroid; ties go to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.dim:
        raise ContractError(f"point has shape {x.shape}, model expects dimension {model.dim}")
    d = ((model.centroids - x[None, :]) ** 2).sum(axis=1)
    return int(np.argmin(d))
