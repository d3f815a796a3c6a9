"""Set-of-vectors similarity search reduced to dot products over long vectors.

A candidate set V of cardinality k is indexed, for every assumed target
cardinality n, as one long vector of dimension n*k*D; a target set A is
expanded into |A|*k long target vectors per candidate cardinality k.  Each
target/candidate dot product then evaluates the full set-set similarity under
one "which pair is maximal" assumption, so the global dot-product maximum
recovers the exhaustive argmax exactly.  The index itself is exact (scanned
arrays); an approximate vector backend could be slotted behind the same
structure keys.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from .columns import ColumnLineageMap, cv_similarity
from .embedding import ColumnWeights
from .vectorset import LineageVectorSet, SimilarityParams, set_similarity


class ZeroVectorError(ValueError):
    """Long vectors require unit-normalizable members; zero vectors carry no direction."""


class EmptyIndexError(LookupError):
    pass


Payload = Union[LineageVectorSet, ColumnLineageMap]


def _normalized_members(vs: LineageVectorSet) -> np.ndarray:
    norms = np.linalg.norm(vs.vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ZeroVectorError("vector set contains a zero vector")
    return vs.vectors / norms


def long_candidate(vs: LineageVectorSet, n: int) -> np.ndarray:
    """n copies of each normalized member, in member order: dimension n*|V|*D."""
    if n < 1:
        raise ValueError("n must be >= 1")
    members = _normalized_members(vs)
    return np.repeat(members, n, axis=0).reshape(-1)


def long_target_base(vs: LineageVectorSet, k: int) -> np.ndarray:
    """All normalized members concatenated in order, then duplicated k times."""
    if k < 1:
        raise ValueError("k must be >= 1")
    members = _normalized_members(vs)
    return np.tile(members.reshape(-1), k)


def selector_block(i: int, j: int, set_size: int) -> int:
    """Block index of the all-ones selector block for member i against copy j (1-based)."""
    return (j - 1) * set_size + (i - 1)


def long_targets(vs: LineageVectorSet, k: int, params: SimilarityParams) -> np.ndarray:
    """The |A|*k long target vectors for candidate cardinality k, one per (i, j).

    Row order is j-major: (1,1)..(|A|,1), (1,2)..(|A|,2), ...  Each row blends
    the single-pair selector with the all-pairs average so that its dot with a
    matching long candidate vector yields the set similarity under the
    assumption that pair (i, j) is the maximal one.
    """
    size = len(vs)
    dim = vs.dimension
    base = long_target_base(vs, k)
    total = params.w_max + params.w_avg
    avg_part = (params.w_avg / (size * k)) * base
    rows = np.empty((size * k, size * k * dim))
    for j in range(1, k + 1):
        for i in range(1, size + 1):
            block = selector_block(i, j, size)
            masked = np.zeros_like(base)
            masked[block * dim : (block + 1) * dim] = base[block * dim : (block + 1) * dim]
            rows[block] = (params.w_max * masked + avg_part) / total
    return rows


@dataclass
class VectorSetIndex:
    """Search-structure grid over candidate long vectors, one per (n, k) shape.

    Inserting a candidate of cardinality k populates S(n, k) for every assumed
    target cardinality n in [1, M].  Sets containing a zero vector cannot be
    reduced and fall back to exhaustive scoring at search time.  Build is
    single-writer; searches only read.
    """

    max_cardinality: int
    dimension: int
    _structures: dict[tuple[int, int], list[tuple[int, np.ndarray]]] = field(default_factory=dict)
    _sets: dict[int, LineageVectorSet] = field(default_factory=dict)
    _fallback: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.max_cardinality < 1:
            raise ValueError("max_cardinality must be >= 1")

    def __len__(self) -> int:
        return len(self._sets)

    def insert(self, candidate_id: int, vs: LineageVectorSet) -> None:
        if candidate_id in self._sets:
            raise ValueError(f"candidate {candidate_id} already indexed")
        if len(vs) > self.max_cardinality:
            raise ValueError(f"cardinality {len(vs)} exceeds index bound {self.max_cardinality}")
        if vs.dimension != self.dimension:
            raise ValueError(f"dimension {vs.dimension} != index dimension {self.dimension}")
        self._sets[candidate_id] = vs
        if vs.has_zero_vector:
            self._fallback.append(candidate_id)
            return
        for n in range(1, self.max_cardinality + 1):
            self._structures.setdefault((n, len(vs)), []).append((candidate_id, long_candidate(vs, n)))

    def _exhaustive_best(
        self, target: LineageVectorSet, params: SimilarityParams, ids: Sequence[int]
    ) -> tuple[float, int] | None:
        best: tuple[float, int] | None = None
        for cid in ids:
            score = set_similarity(target, self._sets[cid], params)
            if best is None or score > best[0] or (score == best[0] and cid < best[1]):
                best = (score, cid)
        return best

    def search(self, target: LineageVectorSet, params: SimilarityParams) -> tuple[int, float]:
        """Best candidate id plus its re-scored set similarity; ties go to the smaller id."""
        if not self._sets:
            raise EmptyIndexError("no candidates")
        if target.has_zero_vector:
            best = self._exhaustive_best(target, params, sorted(self._sets))
            assert best is not None
            return best[1], best[0]
        best: tuple[float, int] | None = None
        for k in range(1, self.max_cardinality + 1):
            entries = self._structures.get((len(target), k))
            if not entries:
                continue
            targets = long_targets(target, k, params)
            matrix = np.stack([vec for _, vec in entries])
            scores = targets @ matrix.T  # (|A|*k, candidates)
            per_candidate = scores.max(axis=0)
            top = float(per_candidate.max())
            for idx in np.flatnonzero(per_candidate == top):
                cid = entries[int(idx)][0]
                if best is None or top > best[0] or (top == best[0] and cid < best[1]):
                    best = (top, cid)
        fallback_best = self._exhaustive_best(target, params, self._fallback)
        if fallback_best is not None and (
            best is None
            or fallback_best[0] > best[0]
            or (fallback_best[0] == best[0] and fallback_best[1] < best[1])
        ):
            best = fallback_best
        assert best is not None
        winner = best[1]
        return winner, set_similarity(target, self._sets[winner], params)

    def topk(self, target: LineageVectorSet, k_results: int, params: SimilarityParams) -> list[tuple[int, float]]:
        """Top-k assembled from the per-target-vector winners; only top-1 is guaranteed exact."""
        if k_results < 1:
            raise ValueError("k_results must be >= 1")
        if not self._sets:
            raise EmptyIndexError("no candidates")
        pool: set[int] = set(self._fallback)
        if target.has_zero_vector:
            pool = set(self._sets)
        else:
            for k in range(1, self.max_cardinality + 1):
                entries = self._structures.get((len(target), k))
                if not entries:
                    continue
                targets = long_targets(target, k, params)
                matrix = np.stack([vec for _, vec in entries])
                scores = targets @ matrix.T
                for row in scores:
                    pool.add(entries[int(np.argmax(row))][0])
        rescored = [(cid, set_similarity(target, self._sets[cid], params)) for cid in sorted(pool)]
        rescored.sort(key=lambda item: (-item[1], item[0]))
        return rescored[: min(k_results, len(rescored))]


def exhaustive_topk(
    target: Payload,
    candidates: Sequence[tuple[int, Payload]],
    k: int,
    params: SimilarityParams,
    *,
    weights: ColumnWeights = ColumnWeights(),
    containment_threshold: float = 0.0,
) -> list[tuple[int, float | None]]:
    """Brute-force ranking over vector sets or column maps.

    Column-map candidates filtered by the containment check rank after all
    scored candidates (by ascending id) with a None score.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scored: list[tuple[int, float]] = []
    filtered: list[tuple[int, None]] = []
    for cid, payload in candidates:
        if isinstance(target, LineageVectorSet):
            if not isinstance(payload, LineageVectorSet):
                raise TypeError("candidate payloads must match the target payload kind")
            scored.append((cid, set_similarity(target, payload, params)))
        else:
            if not isinstance(payload, ColumnLineageMap):
                raise TypeError("candidate payloads must match the target payload kind")
            score = cv_similarity(target, payload, params, weights, containment_threshold)
            if score is None:
                filtered.append((cid, None))
            else:
                scored.append((cid, score))
    scored.sort(key=lambda item: (-item[1], item[0]))
    filtered.sort(key=lambda item: item[0])
    ranked: list[tuple[int, float | None]] = [*scored, *filtered]
    return ranked[: min(k, len(ranked))]
