"""In-memory relational store with lineage propagation, an exact lineage oracle, and persistence.

Concurrency: mutations (inserts) are serialized behind a single writer lock;
queries and lineage reads work off per-table id snapshots taken at query
start, so they may run concurrently with at most one writer.
"""
from __future__ import annotations

import csv
import json
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .columns import ColumnLineageMap, Constant, cv_add, cv_mul, drop_columns, finalize_native
from .config import Config
from .embedding import (
    ColumnWeights,
    Value,
    WordModel,
    bare_name,
    column_vector,
    tuple_vector,
)
from .enhance import QueryDependencyDAG
from .plans import (
    And,
    ColumnRef,
    Comparison,
    Const,
    DistinctGroup,
    Filter,
    Join,
    Plan,
    Project,
    Scan,
    columns_of_interest,
    eval_predicate,
    gene_map,
    output_columns,
    parse_plan,
    plan_to_text,
    to_gene_name,
)
from .vectorset import LineageVectorSet, tv_add, tv_mul

VECTOR_DECIMALS = 9  # fixed-precision decimal text in the persisted store


class EngineError(Exception):
    pass


class SchemaError(EngineError):
    pass


class UnknownTupleError(EngineError):
    pass


@dataclass
class TupleRecord:
    """A stored tuple with its lineage payloads and exact direct-lineage ids."""

    id: int
    table: str
    values: dict[str, Value]
    created_at: int
    creating_query: str | None
    cols_of_interest: frozenset[str] | None
    tv: LineageVectorSet
    cv: ColumnLineageMap
    exact_direct: frozenset[int]

    @property
    def is_base(self) -> bool:
        return self.creating_query is None

    @property
    def has_empty_text(self) -> bool:
        """True for tuples whose every column textified to nothing."""
        return self.tv.has_zero_vector and len(self.tv) == 1


@dataclass(frozen=True)
class HierarchicalLineage:
    """Per-level exact lineage: levels[0] is the target, levels[i] its depth-i ancestors."""

    levels: tuple[frozenset[int], ...]

    @property
    def exact_lineage(self) -> frozenset[int]:
        out: frozenset[int] = frozenset()
        for level in self.levels[1:]:
            out |= level
        return out

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def levels_containing(self, tuple_id: int) -> list[int]:
        return [i for i, level in enumerate(self.levels) if i >= 1 and tuple_id in level]

    def union_through(self, level: int) -> frozenset[int]:
        out: frozenset[int] = frozenset()
        for lvl in self.levels[1 : level + 1]:
            out |= lvl
        return out


@dataclass(frozen=True)
class QueryInfo:
    query_id: str
    plan: Plan
    target_table: str
    cols_of_interest: frozenset[str]


@dataclass
class ResultRow:
    values: dict[str, Value]
    tv: LineageVectorSet | None
    cv: ColumnLineageMap | None
    exact_direct: frozenset[int]


def _equality_pairs(
    predicate, left_cols: set[str], right_cols: set[str]
) -> tuple[list[tuple[str, str]], list]:
    """Split a join predicate into hashable left=right column pairs and a residual."""
    conjuncts = list(predicate.items) if isinstance(predicate, And) else [predicate]
    pairs: list[tuple[str, str]] = []
    residual = []
    for item in conjuncts:
        if (
            isinstance(item, Comparison)
            and item.op == "="
            and isinstance(item.left, ColumnRef)
            and isinstance(item.right, ColumnRef)
        ):
            l, r = item.left.name, item.right.name
            if l in left_cols and r in right_cols:
                pairs.append((l, r))
                continue
            if l in right_cols and r in left_cols:
                pairs.append((r, l))
                continue
        residual.append(item)
    return pairs, residual


class LineageStore:
    """Tables, tuples, lineage vectors, the query log, and the dependency DAG."""

    def __init__(
        self,
        config: Config,
        model: WordModel | None = None,
        column_weights: ColumnWeights | None = None,
    ) -> None:
        self.config = config
        self.model = model if model is not None else WordModel(config.dimension, fallback_seed=config.seed)
        if self.model.dimension != config.dimension:
            raise SchemaError(
                f"model dimension {self.model.dimension} != configured dimension {config.dimension}"
            )
        self.column_weights = column_weights if column_weights is not None else ColumnWeights()
        self.schemas: dict[str, list[str]] = {}
        self.records: dict[int, TupleRecord] = {}
        self.queries: dict[str, QueryInfo] = {}
        self.dag = QueryDependencyDAG(
            max_nodes=config.dag_max_nodes,
            max_height=config.dag_max_height,
            outsider_weight=config.outsider_weight,
        )
        self._table_ids: dict[str, list[int]] = {}
        self._next_id = 1
        self._next_ts = 1
        self._write_lock = threading.RLock()

    # -- tables and base tuples ---------------------------------------------

    def create_table(self, name: str, columns: Sequence[str]) -> None:
        with self._write_lock:
            if name in self.schemas:
                raise SchemaError(f"table {name!r} already exists")
            if not columns:
                raise SchemaError("a table needs at least one column")
            self.schemas[name] = list(columns)
            self._table_ids[name] = []

    def table_ids(self, table: str) -> list[int]:
        if table not in self.schemas:
            raise SchemaError(f"unknown table {table!r}")
        return list(self._table_ids[table])

    def all_ids(self) -> list[int]:
        return sorted(self.records)

    def tables_as_rows(self) -> dict[str, list[dict[str, Value]]]:
        """Plain row dicts per table, e.g. for corpus extraction."""
        return {
            table: [self.records[tid].values for tid in ids]
            for table, ids in self._table_ids.items()
        }

    def insert_base(self, table: str, values: Mapping[str, Value]) -> TupleRecord:
        """Store an explicitly inserted tuple with its initial singleton lineage vectors."""
        with self._write_lock:
            if table not in self.schemas:
                raise SchemaError(f"unknown table {table!r}")
            schema = self.schemas[table]
            if set(values) != set(schema):
                raise SchemaError(
                    f"schema mismatch for {table!r}: expected {schema}, got {sorted(values)}"
                )
            full_values = {f"{table}.{c}": values[c] for c in schema}
            tv = LineageVectorSet.single(
                tuple_vector(full_values, self.model, self.column_weights),
                self.config.max_vectors,
            )
            cv = ColumnLineageMap.native(
                {
                    col: LineageVectorSet.single(
                        column_vector(full_values, col, self.model), self.config.max_vectors
                    )
                    for col in full_values
                }
            )
            record = TupleRecord(
                id=self._take_id(),
                table=table,
                values={c: values[c] for c in schema},
                created_at=self._take_ts(),
                creating_query=None,
                cols_of_interest=None,
                tv=tv,
                cv=cv,
                exact_direct=frozenset(),
            )
            self._store(record)
            return record

    def ingest_csv(self, path: str | Path, table: str) -> list[TupleRecord]:
        """Load a UTF-8 CSV with a header row; empty cells become nulls."""
        path = Path(path)
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError(f"{path}: empty CSV") from None
            if table not in self.schemas:
                self.create_table(table, header)
            elif self.schemas[table] != header:
                raise SchemaError(
                    f"{path}: header {header} does not match table {table!r} schema"
                )
            out = []
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise SchemaError(f"{path}:{lineno}: expected {len(header)} cells")
                values = {c: (cell if cell != "" else None) for c, cell in zip(header, row)}
                out.append(self.insert_base(table, values))
        return out

    def _take_id(self) -> int:
        out = self._next_id
        self._next_id += 1
        return out

    def _take_ts(self) -> int:
        out = self._next_ts
        self._next_ts += 1
        return out

    def _store(self, record: TupleRecord) -> None:
        self.records[record.id] = record
        self._table_ids[record.table].append(record.id)

    def record(self, tuple_id: int) -> TupleRecord:
        try:
            return self.records[tuple_id]
        except KeyError:
            raise UnknownTupleError(f"unknown tuple id {tuple_id}") from None

    # -- execution -----------------------------------------------------------

    def execute(
        self,
        plan: Plan,
        query_id: str | None = None,
        *,
        allowed_ids: frozenset[int] | set[int] | None = None,
        compute_lineage: bool = True,
    ) -> list[ResultRow]:
        """Run a plan and return rows with composed lineage, sorted by output values.

        ``query_id`` is informational here; materialization happens through
        insert_select.  ``allowed_ids`` restricts every scan to the given
        tuples (used by lineage verification).
        """
        out_cols = output_columns(plan, self.schemas)
        rows = self._run(plan, allowed_ids, compute_lineage)
        rows.sort(key=lambda row: tuple(repr(row.values[c]) for c in out_cols))
        return rows

    def _run(
        self, plan: Plan, allowed: frozenset[int] | set[int] | None, lineage: bool
    ) -> list[ResultRow]:
        if isinstance(plan, Scan):
            ids = self.table_ids(plan.table)
            if allowed is not None:
                ids = [i for i in ids if i in allowed]
            rows = []
            for tid in ids:
                rec = self.records[tid]
                values = {f"{plan.rel}.{c}": rec.values[c] for c in self.schemas[plan.table]}
                rows.append(
                    ResultRow(
                        values,
                        rec.tv if lineage else None,
                        rec.cv if lineage else None,
                        frozenset({tid}),
                    )
                )
            return rows
        if isinstance(plan, Filter):
            return [
                row
                for row in self._run(plan.child, allowed, lineage)
                if eval_predicate(plan.predicate, row.values)
            ]
        if isinstance(plan, Join):
            return self._run_join(plan, allowed, lineage)
        if isinstance(plan, Project):
            return [self._project_row(plan, row, lineage) for row in self._run(plan.child, allowed, lineage)]
        if isinstance(plan, DistinctGroup):
            return self._run_distinct(plan, allowed, lineage)
        raise TypeError(f"not a plan node: {plan!r}")

    def _run_join(
        self, plan: Join, allowed: frozenset[int] | set[int] | None, lineage: bool
    ) -> list[ResultRow]:
        left_rows = self._run(plan.left, allowed, lineage)
        right_rows = self._run(plan.right, allowed, lineage)
        left_cols = set(output_columns(plan.left, self.schemas))
        right_cols = set(output_columns(plan.right, self.schemas))
        pairs, residual = _equality_pairs(plan.predicate, left_cols, right_cols)
        seed = self.config.seed

        def combine(l: ResultRow, r: ResultRow) -> ResultRow:
            values = {**l.values, **r.values}
            tv = cvv = None
            if lineage:
                tv = tv_mul(l.tv, r.tv, seed=seed)
                cvv = cv_mul(l.cv, r.cv, seed=seed)
            return ResultRow(values, tv, cvv, l.exact_direct | r.exact_direct)

        out: list[ResultRow] = []
        if pairs:
            buckets: dict[tuple, list[ResultRow]] = {}
            for r in right_rows:
                key = tuple(r.values[rc] for _, rc in pairs)
                if None in key:  # missing data never joins, SQL-style
                    continue
                buckets.setdefault(key, []).append(r)
            for l in left_rows:
                key = tuple(l.values[lc] for lc, _ in pairs)
                if None in key:
                    continue
                for r in buckets.get(key, ()):
                    merged = {**l.values, **r.values}
                    if all(eval_predicate(p, merged) for p in residual):
                        out.append(combine(l, r))
        else:
            for l in left_rows:
                for r in right_rows:
                    merged = {**l.values, **r.values}
                    if eval_predicate(plan.predicate, merged):
                        out.append(combine(l, r))
        return out

    def _project_row(self, plan: Project, row: ResultRow, lineage: bool) -> ResultRow:
        genes = gene_map(plan.child)
        values: dict[str, Value] = {}
        assignments = []
        for out, source in plan.assignments:
            full = plan.output_name(out)
            if isinstance(source, ColumnRef):
                values[full] = row.values[source.name]
                assignments.append((full, to_gene_name(source.name, genes)))
            else:
                values[full] = source.value
                assignments.append((full, Constant(source.value)))
        cv = None
        if lineage:
            cv = finalize_native(
                row.cv,
                assignments,
                self.model,
                max_vectors=self.config.max_vectors,
                seed=self.config.seed,
            )
        return ResultRow(values, row.tv, cv, row.exact_direct)

    def _run_distinct(
        self, plan: DistinctGroup, allowed: frozenset[int] | set[int] | None, lineage: bool
    ) -> list[ResultRow]:
        child_rows = self._run(plan.child, allowed, lineage)
        cols = list(plan.columns) if plan.columns else output_columns(plan.child, self.schemas)
        seed = self.config.seed
        groups: dict[tuple, ResultRow] = {}
        for row in child_rows:
            key = tuple(row.values[c] for c in cols)
            if key not in groups:
                groups[key] = ResultRow(
                    {c: row.values[c] for c in cols}, row.tv, row.cv, row.exact_direct
                )
            else:
                acc = groups[key]
                if lineage:
                    acc.tv = tv_add(acc.tv, row.tv, seed=seed)
                    acc.cv = cv_add(acc.cv, row.cv, seed=seed)
                acc.exact_direct |= row.exact_direct
        return list(groups.values())

    # -- materialization ------------------------------------------------------

    def _materialization_plan(self, plan: Plan, target_table: str) -> Plan:
        if isinstance(plan, Project):
            return replace(plan, table=target_table)
        outs = output_columns(plan, self.schemas)
        return Project(
            plan, tuple((bare_name(c), ColumnRef(c)) for c in outs), table=target_table
        )

    def insert_select(self, plan: Plan, target_table: str, query_id: str) -> list[TupleRecord]:
        """Materialize a query's results as computed tuples with composed lineage."""
        with self._write_lock:
            if query_id in self.queries:
                raise EngineError(f"query id {query_id!r} already used")
            prepared = self._materialization_plan(plan, target_table)
            target_cols = [bare_name(c) for c in output_columns(prepared, self.schemas)]
            if target_table not in self.schemas:
                self.create_table(target_table, target_cols)
            elif self.schemas[target_table] != target_cols:
                raise SchemaError(
                    f"plan output {target_cols} does not match table {target_table!r} schema"
                )
            # interest comes from the query as written, not the select-* wrapping
            coi = columns_of_interest(plan)
            rows = self.execute(prepared, query_id)
            bound = self.config.column_bound
            new_records: list[TupleRecord] = []
            for row in rows:
                cv = row.cv
                if bound > 0:
                    cv = drop_columns(cv, bound)
                cv = ColumnLineageMap(  # clear per-query recency marks before storing
                    cv.entries, cv.native_columns, cv.inherited_columns, frozenset()
                )
                record = TupleRecord(
                    id=self._take_id(),
                    table=target_table,
                    values={bare_name(c): v for c, v in row.values.items()},
                    created_at=self._take_ts(),
                    creating_query=query_id,
                    cols_of_interest=coi,
                    tv=row.tv,
                    cv=cv,
                    exact_direct=row.exact_direct,
                )
                self._store(record)
                new_records.append(record)
            self.queries[query_id] = QueryInfo(query_id, prepared, target_table, coi)
            deps: set[str] = set()
            for record in new_records:
                for ancestor in self.exact_lineage(record.id):
                    creator = self.records[ancestor].creating_query
                    if creator is not None:
                        deps.add(creator)
            self.dag.register(query_id, deps)
            return new_records

    # -- the exact oracle ------------------------------------------------------

    def distant_lineage(self, tuple_id: int) -> HierarchicalLineage:
        """Levels of exact lineage by repeated direct-lineage expansion."""
        record = self.record(tuple_id)
        levels: list[frozenset[int]] = [frozenset({record.id})]
        while True:
            nxt: set[int] = set()
            for tid in levels[-1]:
                nxt |= self.records[tid].exact_direct
            if not nxt:
                break
            levels.append(frozenset(nxt))
        return HierarchicalLineage(tuple(levels))

    def exact_lineage(self, tuple_id: int) -> frozenset[int]:
        return self.distant_lineage(tuple_id).exact_lineage

    def verify_lineage(self, tuple_id: int, candidates: Iterable[int]) -> bool:
        """Re-run the creating query on just the candidates; is the tuple derivable?"""
        record = self.record(tuple_id)
        if record.creating_query is None:
            raise EngineError(f"tuple {tuple_id} is a base tuple; nothing to verify")
        info = self.queries.get(record.creating_query)
        if info is None:
            raise EngineError(f"no stored plan for query {record.creating_query!r}")
        rows = self.execute(info.plan, allowed_ids=frozenset(candidates), compute_lineage=False)
        wanted = record.values
        return any({bare_name(c): v for c, v in row.values.items()} == wanted for row in rows)

    # -- persistence ------------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write the line-delimited lineage store plus a metadata sidecar.

        Record lines are JSON objects with fields in the order
        ``id, table, values, ts, query, tv, cv, direct``; vectors are
        space-separated fixed-precision decimals.
        """
        path = Path(path)
        lines = []
        for tid in sorted(self.records):
            lines.append(json.dumps(_record_to_json(self.records[tid]), separators=(",", ":")))
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        meta = {
            "column_weights": {
                "default": self.column_weights.default_weight,
                "weights": dict(self.column_weights.weights),
            },
            "tables": {t: cols for t, cols in self.schemas.items()},
            "table_order": list(self.schemas),
            "queries": {
                q.query_id: {
                    "plan": plan_to_text(q.plan),
                    "target": q.target_table,
                    "coi": sorted(q.cols_of_interest),
                }
                for q in self.queries.values()
            },
            "query_order": list(self.queries),
            "dag_nodes": self.dag.nodes,
            "dag_edges": self.dag.edges(),
            "next_id": self._next_id,
            "next_ts": self._next_ts,
        }
        meta_path = Path(str(path) + ".meta.json")
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(
        cls,
        path: str | Path,
        config: Config,
        model: WordModel | None = None,
        column_weights: ColumnWeights | None = None,
    ) -> "LineageStore":
        path = Path(path)
        meta_path = Path(str(path) + ".meta.json")
        if not path.exists() or not meta_path.exists():
            raise EngineError(f"no store at {path}")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        if column_weights is None and "column_weights" in meta:
            column_weights = ColumnWeights(
                dict(meta["column_weights"]["weights"]),
                float(meta["column_weights"]["default"]),
            )
        store = cls(config, model=model, column_weights=column_weights)
        for table in meta["table_order"]:
            store.create_table(table, meta["tables"][table])
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            record = _record_from_json(json.loads(line), config, meta)
            store._store(record)
        store._next_id = int(meta["next_id"])
        store._next_ts = int(meta["next_ts"])
        for qid in meta["query_order"]:
            entry = meta["queries"][qid]
            store.queries[qid] = QueryInfo(
                qid, parse_plan(entry["plan"]), entry["target"], frozenset(entry["coi"])
            )
        edges: dict[str, set[str]] = {}
        for q, p in meta["dag_edges"]:
            edges.setdefault(q, set()).add(p)
        for node in meta["dag_nodes"]:
            store.dag.register(node, edges.get(node, set()))
        return store


def _format_vector(vec: np.ndarray) -> str:
    return " ".join(f"{float(x):.{VECTOR_DECIMALS}f}" for x in vec)


def _parse_vector(text: str) -> np.ndarray:
    return np.array([float(p) for p in text.split()], dtype=np.float64)


def _record_to_json(record: TupleRecord) -> dict:
    return {
        "id": record.id,
        "table": record.table,
        "values": record.values,
        "ts": record.created_at,
        "query": record.creating_query,
        "tv": [_format_vector(v) for v in record.tv.vectors],
        "cv": {
            "native": sorted(record.cv.native_columns),
            "inherited": sorted(record.cv.inherited_columns),
            "columns": {
                col: [_format_vector(v) for v in lvs.vectors]
                for col, lvs in record.cv.entries.items()
            },
        },
        "direct": sorted(record.exact_direct),
    }


def _record_from_json(obj: dict, config: Config, meta: dict) -> TupleRecord:
    max_vectors = config.max_vectors
    tv = LineageVectorSet(
        np.stack([_parse_vector(v) for v in obj["tv"]]), max_vectors
    )
    cv_obj = obj["cv"]
    entries = {
        col: LineageVectorSet(np.stack([_parse_vector(v) for v in vecs]), max_vectors)
        for col, vecs in cv_obj["columns"].items()
    }
    cv = ColumnLineageMap(entries, frozenset(cv_obj["native"]), frozenset(cv_obj["inherited"]))
    query = obj["query"]
    coi: frozenset[str] | None = None
    if query is not None:
        coi = frozenset(meta["queries"].get(query, {}).get("coi", []))
    return TupleRecord(
        id=int(obj["id"]),
        table=obj["table"],
        values=dict(obj["values"]),
        created_at=int(obj["ts"]),
        creating_query=query,
        cols_of_interest=coi,
        tv=tv,
        cv=cv,
        exact_direct=frozenset(int(x) for x in obj["direct"]),
    )
