"""Lineage vector sets: capped k-means, the extended + and * operations, set-set similarity."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-6


class DimensionMismatch(ValueError):
    """Operands carry vectors of different dimension or different cardinality caps."""


@dataclass(frozen=True, eq=False)
class LineageVectorSet:
    """An immutable set of at most ``max_vectors`` lineage vectors.

    `vectors` is a read-only (n, D) array with 1 <= n <= max_vectors.
    """

    vectors: np.ndarray
    max_vectors: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.vectors, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("vectors must form a 2-D (n, D) array")
        if self.max_vectors < 1:
            raise ValueError("max_vectors must be >= 1")
        if not 1 <= arr.shape[0] <= self.max_vectors:
            raise ValueError(f"cardinality {arr.shape[0]} outside [1, {self.max_vectors}]")
        if not np.all(np.isfinite(arr)):
            raise ValueError("vectors must be finite")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "vectors", arr)

    @classmethod
    def of(cls, vectors: Iterable[Sequence[float]] | np.ndarray, max_vectors: int) -> "LineageVectorSet":
        arr = np.atleast_2d(np.asarray(list(vectors) if not isinstance(vectors, np.ndarray) else vectors, dtype=np.float64))
        return cls(arr, max_vectors)

    @classmethod
    def single(cls, vector: Sequence[float] | np.ndarray, max_vectors: int) -> "LineageVectorSet":
        return cls(np.asarray(vector, dtype=np.float64).reshape(1, -1), max_vectors)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    @property
    def has_zero_vector(self) -> bool:
        return bool(np.any(np.all(self.vectors == 0.0, axis=1)))


@dataclass(frozen=True)
class SimilarityParams:
    """Balance between the best pair and the average of all pairs."""

    w_max: float = 1.0
    w_avg: float = 1.0

    def __post_init__(self) -> None:
        if self.w_max < 0 or self.w_avg < 0:
            raise ValueError("weights must be nonnegative")
        if self.w_max + self.w_avg <= 0:
            raise ValueError("w_max + w_avg must be positive")


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:  # all remaining points coincide with a chosen center
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[j]) ** 2, axis=1))
    return centers


def kmeans_cap(vectors: np.ndarray | Sequence[Sequence[float]], k: int, seed: int) -> np.ndarray:
    """Return the input unchanged when it fits, else exactly k seeded k-means centers.

    Seeded k-means++ init, Lloyd iterations capped at 100, center-shift
    tolerance 1e-6; empty clusters are re-seeded with the point farthest from
    its current center, so exactly k centers always come back.
    """
    points = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if points.shape[0] == 0:
        raise ValueError("vectors must be nonempty")
    if k < 1:
        raise ValueError("k must be >= 1")
    if points.shape[0] <= k:
        return points.copy()
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(points, k, rng)
    for _ in range(KMEANS_MAX_ITER):
        # squared distances point -> center
        d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)
        assigned = d2[np.arange(points.shape[0]), labels]
        sizes = np.bincount(labels, minlength=k)
        for j in range(k):
            if sizes[j] > 0:
                continue
            # re-seed an empty cluster with the farthest point that can be spared
            order = np.argsort(-assigned, kind="stable")
            pick = next(int(i) for i in order if sizes[labels[int(i)]] > 1)
            sizes[labels[pick]] -= 1
            labels[pick] = j
            sizes[j] = 1
            assigned[pick] = 0.0
        new_centers = np.empty_like(centers)
        for j in range(k):
            new_centers[j] = points[labels == j].mean(axis=0)
        shift = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if shift <= KMEANS_TOL:
            break
    return centers


def _check_compatible(a: LineageVectorSet, b: LineageVectorSet) -> None:
    if a.dimension != b.dimension:
        raise DimensionMismatch(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    if a.max_vectors != b.max_vectors:
        raise DimensionMismatch(f"max_vectors mismatch: {a.max_vectors} vs {b.max_vectors}")


def tv_add(a: LineageVectorSet, b: LineageVectorSet, *, seed: int = 0) -> LineageVectorSet:
    """Alternative use of data: the union of both sets, clustered back under the cap."""
    _check_compatible(a, b)
    union = np.concatenate([a.vectors, b.vectors], axis=0)
    if union.shape[0] > a.max_vectors:
        union = kmeans_cap(union, a.max_vectors, seed)
    return LineageVectorSet(union, a.max_vectors)


def tv_mul(a: LineageVectorSet, b: LineageVectorSet, *, seed: int = 0) -> LineageVectorSet:
    """Joint use of data: all pairwise averages, clustered back under the cap."""
    _check_compatible(a, b)
    pairs = (a.vectors[:, None, :] + b.vectors[None, :, :]) / 2.0
    products = pairs.reshape(-1, a.dimension)
    if products.shape[0] > a.max_vectors:
        products = kmeans_cap(products, a.max_vectors, seed)
    return LineageVectorSet(products, a.max_vectors)


def _normalize_rows(arr: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(arr, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return arr / safe  # zero rows stay zero: cosine against them is 0


def pairwise_cosines(a: LineageVectorSet, b: LineageVectorSet) -> np.ndarray:
    if a.dimension != b.dimension:
        raise DimensionMismatch(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    return _normalize_rows(a.vectors) @ _normalize_rows(b.vectors).T


def set_similarity(a: LineageVectorSet, b: LineageVectorSet, params: SimilarityParams) -> float:
    """Weighted blend of the best pairwise cosine and the average pairwise cosine."""
    ps = pairwise_cosines(a, b)
    return float((params.w_max * ps.max() + params.w_avg * ps.mean()) / (params.w_max + params.w_avg))


def top_k_similar(
    target: LineageVectorSet,
    candidates: Sequence[tuple[int, LineageVectorSet]],
    k: int,
    params: SimilarityParams,
) -> list[tuple[int, float]]:
    """Candidates ranked by similarity descending; ties broken by ascending id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scored = [(cid, set_similarity(target, lvs, params)) for cid, lvs in candidates]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[: min(k, len(scored))]
