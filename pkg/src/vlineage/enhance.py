"""Ranking enhancements: creation-timestamp filter, query DAG weighting, column emphasis."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TYPE_CHECKING

from .columns import ColumnLineageMap, cv_similarity
from .embedding import ColumnWeights
from .vectorset import SimilarityParams

if TYPE_CHECKING:  # pragma: no cover
    from .engine import TupleRecord


def decay_weight(distance: int) -> float:
    """Similarity multiplier for a query at the given dependency distance."""
    if distance <= 0:
        return 1.0  # a candidate written by the target's own query
    return max(0.5, 1.0 - (distance - 1) / 10.0)


class UnknownQueryError(KeyError):
    pass


@dataclass
class QueryDependencyDAG:
    """Bounded DAG of "query q depends on query p" edges.

    Bounds keep the structure constant-size: at most ``max_nodes`` queries are
    remembered (oldest evicted first) and dependency chains are never followed
    beyond ``max_height``.  Queries outside the remembered sub-DAG score the
    small ``outsider_weight`` instead of being filtered out entirely.
    """

    max_nodes: int = 1024
    max_height: int = 10
    outsider_weight: float = 0.25
    _nodes: list[str] = field(default_factory=list)
    _deps: dict[str, set[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.max_nodes < 1 or self.max_height < 1:
            raise ValueError("max_nodes and max_height must be >= 1")
        floor = decay_weight(self.max_height)
        if not 0.0 < self.outsider_weight < floor:
            raise ValueError(f"outsider_weight must lie in (0, {floor})")

    @property
    def nodes(self) -> list[str]:
        return list(self._nodes)

    def edges(self) -> list[tuple[str, str]]:
        return sorted((q, p) for q, deps in self._deps.items() for p in deps)

    def __contains__(self, query_id: str) -> bool:
        return query_id in self._deps

    def register(self, query_id: str, deps: Iterable[str]) -> None:
        """Add a fresh query node; queries only depend on strictly earlier ones."""
        if query_id in self._deps:
            raise ValueError(f"query {query_id!r} already registered")
        self._nodes.append(query_id)
        self._deps[query_id] = {d for d in deps if d in self._deps and d != query_id}
        while len(self._nodes) > self.max_nodes:
            self._evict_oldest()

    def _evict_oldest(self) -> None:
        victim = self._nodes.pop(0)
        self._deps.pop(victim, None)
        for deps in self._deps.values():
            deps.discard(victim)

    def distance(self, q: str, p: str) -> int | None:
        """Shortest dependency distance from q to p, never looking past max_height."""
        if q not in self._deps:
            raise UnknownQueryError(q)
        if p == q:
            return 0
        frontier = deque([(q, 0)])
        seen = {q}
        while frontier:
            node, d = frontier.popleft()
            if d == self.max_height:
                continue
            for dep in self._deps.get(node, ()):
                if dep == p:
                    return d + 1
                if dep not in seen:
                    seen.add(dep)
                    frontier.append((dep, d + 1))
        return None

    def weight(self, q: str, p: str | None) -> float:
        """Distance-decayed weight for a candidate's query, outsider weight otherwise."""
        if q not in self._deps:
            raise UnknownQueryError(q)
        if p is None or p not in self._deps:
            return self.outsider_weight
        d = self.distance(q, p)
        if d is None:
            return self.outsider_weight
        return decay_weight(d)


class _BoostedWeights:
    """Column weights with the columns of interest multiplied up."""

    def __init__(self, base: ColumnWeights, interest: frozenset[str], boost: float) -> None:
        self._base = base
        self._interest = interest
        self._boost = boost

    def weight(self, column: str) -> float:
        w = self._base.weight(column)
        return w * self._boost if column in self._interest else w


def weighted_column_similarity(
    target: ColumnLineageMap,
    candidate: ColumnLineageMap,
    interest: frozenset[str],
    boost: float,
    params: SimilarityParams,
    weights: ColumnWeights = ColumnWeights(),
    containment_threshold: float = 1.0,
) -> float | None:
    """Column-map similarity with query-mentioned columns weighted ``boost`` times higher."""
    if boost <= 1.0:
        raise ValueError("boost must be > 1")
    return cv_similarity(
        target,
        candidate,
        params,
        weights=_BoostedWeights(weights, interest, boost),
        containment_threshold=containment_threshold,
    )


def apply_enhancements(
    target: "TupleRecord",
    scored: Sequence[tuple["TupleRecord", float | None]],
    dag: QueryDependencyDAG | None,
) -> list[tuple["TupleRecord", float | None]]:
    """Drop candidates no older than the target and decay scores by query distance.

    Base-table candidates keep their score; filtered (None-scored) candidates
    survive the reweighting untouched so they can still trail the ranking.
    """
    survivors = [(rec, score) for rec, score in scored if rec.created_at < target.created_at]
    if dag is not None:
        if target.creating_query is None:
            raise ValueError("DAG weighting requires a computed target tuple")
        reweighted: list[tuple["TupleRecord", float | None]] = []
        for rec, score in survivors:
            if score is None or rec.creating_query is None:
                reweighted.append((rec, score))
            else:
                reweighted.append((rec, score * dag.weight(target.creating_query, rec.creating_query)))
        survivors = reweighted
    ranked = [(rec, score) for rec, score in survivors if score is not None]
    filtered = [(rec, score) for rec, score in survivors if score is None]
    ranked.sort(key=lambda item: (-item[1], item[0].id))  # type: ignore[operator]
    filtered.sort(key=lambda item: item[0].id)
    return ranked + filtered
