"""Per-column ("gene") lineage maps: column-level + and *, native-column rules, dropping."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence, Union

import numpy as np

from .embedding import ColumnWeights, Value, WordModel, bare_name, textify_value
from .vectorset import LineageVectorSet, SimilarityParams, set_similarity, tv_add, tv_mul


class MissingSourceColumn(KeyError):
    """A native-column assignment names a source column absent from the map."""


@dataclass(frozen=True)
class Constant:
    """A literal value assigned to a native column (INSERT ... SELECT 'const' ...)."""

    value: Value


AssignmentSource = Union[str, Constant]  # source column full name, or a literal


class WeightLookup(Protocol):
    def weight(self, column: str) -> float: ...


@dataclass(frozen=True, eq=False)
class ColumnLineageMap:
    """Full column name -> lineage vector set, with native/inherited bookkeeping.

    ``native_columns`` are the tuple's own data columns; ``inherited_columns``
    arrived from ancestors.  A column may sit in both sets only transiently
    while a query is being evaluated; classification resolves the overlap.
    ``touched`` records which columns the current query combined or assigned,
    and feeds the retention ranking when columns must be dropped.
    """

    entries: Mapping[str, LineageVectorSet]
    native_columns: frozenset[str]
    inherited_columns: frozenset[str]
    touched: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        entries = dict(self.entries)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "native_columns", frozenset(self.native_columns))
        object.__setattr__(self, "inherited_columns", frozenset(self.inherited_columns))
        object.__setattr__(self, "touched", frozenset(self.touched) & set(entries))
        if set(entries) != self.native_columns | self.inherited_columns:
            raise ValueError("entry keys must equal native_columns | inherited_columns")

    @classmethod
    def native(cls, entries: Mapping[str, LineageVectorSet]) -> "ColumnLineageMap":
        return cls(entries, frozenset(entries), frozenset())

    @property
    def lineage_columns(self) -> frozenset[str]:
        return self.native_columns | self.inherited_columns

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, column: str) -> LineageVectorSet:
        return self.entries[column]

    def __contains__(self, column: str) -> bool:
        return column in self.entries


def _merge(
    cv1: ColumnLineageMap,
    cv2: ColumnLineageMap,
    combine,
    seed: int,
) -> ColumnLineageMap:
    entries: dict[str, LineageVectorSet] = {}
    touched = set(cv1.touched) | set(cv2.touched)
    for column, lvs in cv1.entries.items():
        if column in cv2.entries:
            entries[column] = combine(lvs, cv2.entries[column], seed=seed)
            touched.add(column)
        else:
            entries[column] = lvs
    for column, lvs in cv2.entries.items():
        if column not in entries:
            entries[column] = lvs
    return ColumnLineageMap(
        entries,
        cv1.native_columns | cv2.native_columns,
        cv1.inherited_columns | cv2.inherited_columns,
        frozenset(touched),
    )


def cv_add(cv1: ColumnLineageMap, cv2: ColumnLineageMap, *, seed: int = 0) -> ColumnLineageMap:
    """Column-wise alternative use: shared columns via the set +, others copied through."""
    return _merge(cv1, cv2, tv_add, seed)


def cv_mul(cv1: ColumnLineageMap, cv2: ColumnLineageMap, *, seed: int = 0) -> ColumnLineageMap:
    """Column-wise joint use: shared columns via the set *, others copied through."""
    return _merge(cv1, cv2, tv_mul, seed)


def initial_vector(column: str, value: Value, model: WordModel) -> np.ndarray:
    """Embedding of a constant, textified under the target column's bare name."""
    tokens = textify_value(bare_name(column), value)
    if not tokens:
        return np.zeros(model.dimension)
    return np.mean([model.vector(t) for t in tokens], axis=0)


def finalize_native(
    cv: ColumnLineageMap,
    assignments: Sequence[tuple[str, AssignmentSource]],
    model: WordModel,
    *,
    max_vectors: int,
    seed: int = 0,
) -> ColumnLineageMap:
    """Resolve the result tuple's native columns after a query's + / * phase.

    All sources are read against the incoming map (simultaneous-assignment
    semantics).  For each target native column A: a plain source column is
    copied in, a constant becomes a fresh singleton vector set, and, when A
    itself was inherited, the incoming lineage for A is combined with the new
    value via * instead of being overwritten.
    """
    new_values: dict[str, LineageVectorSet] = {}
    for target, source in assignments:
        inherited_here = target in cv.entries
        if isinstance(source, Constant):
            fresh = LineageVectorSet.single(initial_vector(target, source.value, model), max_vectors)
        else:
            if source not in cv.entries:
                raise MissingSourceColumn(source)
            fresh = cv.entries[source]
        if inherited_here and (isinstance(source, Constant) or source != target):
            new_values[target] = tv_mul(cv.entries[target], fresh, seed=seed)
        else:
            new_values[target] = fresh

    entries: dict[str, LineageVectorSet] = {}
    for column, lvs in cv.entries.items():
        entries[column] = new_values.get(column, lvs)
    for target, lvs in new_values.items():
        if target not in entries:
            entries[target] = lvs
    targets = frozenset(t for t, _ in assignments)
    return ColumnLineageMap(
        entries,
        native_columns=targets,
        inherited_columns=frozenset(cv.entries) - targets,
        touched=cv.touched | targets,
    )


def drop_columns(cv: ColumnLineageMap, bound: int) -> ColumnLineageMap:
    """Bound the number of lineage columns, native columns first.

    Inherited columns are ranked most-recently-touched first (ties by
    ascending name) before truncation; a nonpositive bound disables dropping.
    """
    if bound <= 0 or len(cv) <= bound:
        return cv
    natives = sorted(cv.native_columns)
    inherited = sorted(
        cv.inherited_columns - cv.native_columns,
        key=lambda c: (0 if c in cv.touched else 1, c),
    )
    kept = (natives + inherited)[:bound]
    kept_set = set(kept)
    return ColumnLineageMap(
        {c: cv.entries[c] for c in kept},
        cv.native_columns & kept_set,
        cv.inherited_columns & kept_set,
        cv.touched & kept_set,
    )


def containment_rate(target: ColumnLineageMap, candidate: ColumnLineageMap) -> float:
    """Fraction of the candidate's lineage columns reflected in the target's."""
    cand_cols = candidate.lineage_columns
    if not cand_cols:
        return 1.0
    return len(cand_cols & target.lineage_columns) / len(cand_cols)


def cv_similarity(
    target: ColumnLineageMap,
    candidate: ColumnLineageMap,
    params: SimilarityParams,
    weights: WeightLookup = ColumnWeights(),
    containment_threshold: float = 1.0,
) -> float | None:
    """Weighted average of set similarities over mutual columns, or None when filtered.

    Candidates whose lineage columns are insufficiently contained in the
    target's cannot be ancestors and are filtered outright (None).
    """
    if containment_rate(target, candidate) < containment_threshold:
        return None
    mutual = sorted(target.lineage_columns & candidate.lineage_columns)
    if not mutual:
        return 0.0
    total = 0.0
    acc = 0.0
    for column in mutual:
        w = weights.weight(column)
        acc += w * set_similarity(target.entries[column], candidate.entries[column], params)
        total += w
    if total == 0.0:
        raise ValueError("all mutual-column weights are zero")
    return acc / total
