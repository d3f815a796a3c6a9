"""Command-line interface: ingestion, corpora, querying, lineage exploration, evaluation."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .columns import MissingSourceColumn
from .config import Config, ConfigError, load_config
from .embedding import ModelFormatError, WordModel, extract_corpora, load_model
from .engine import EngineError, LineageStore
from .evaluate import (
    ScenarioError,
    ScenarioSpec,
    build_scenario,
    candidate_group,
    rank_candidates,
    run_experiment,
)
from .plans import PlanError, PlanParseError, PredicateTypeError, parse_plan

USAGE_ERROR = 1
DATA_ERROR = 2

_DATA_ERRORS = (
    EngineError,
    PlanError,
    PlanParseError,
    PredicateTypeError,
    ConfigError,
    ModelFormatError,
    ScenarioError,
    MissingSourceColumn,
    OSError,
    ValueError,
    KeyError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 1 on usage problems, per the documented codes
        self.print_usage(sys.stderr)
        raise SystemExit(self.exit_with_usage(message))

    def exit_with_usage(self, message: str) -> int:
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return USAGE_ERROR


def _build_parser() -> _Parser:
    parser = _Parser(prog="vlineage", description=__doc__)
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--store", help="lineage store path (overrides config store_path)")
    parser.add_argument("--model", help="word2vec text model path (overrides config model_path)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="load a CSV file as base tuples")
    p.add_argument("csv")
    p.add_argument("--table", required=True)

    p = sub.add_parser("corpus", help="emit the two word-vector training corpora")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--key-every-columns", type=int, default=3)
    p.add_argument("--key-every-tuples", type=int, default=8)

    p = sub.add_parser("exec", help="run a plan file and print its rows (no store mutation)")
    p.add_argument("planfile")

    p = sub.add_parser("insert-select", help="materialize a plan's results with lineage")
    p.add_argument("planfile")
    p.add_argument("--into", required=True, metavar="TABLE")
    p.add_argument("--query-id", required=True)

    p = sub.add_parser("lineage", help="rank lineage candidates for a tuple")
    p.add_argument("tuple_id", type=int)
    p.add_argument("--method", choices=("tv", "cv"), default="cv")
    p.add_argument("--top", type=int, default=20)
    p.add_argument("--group", choices=("base", "views"), default="base")
    p.add_argument("--no-enhance", action="store_true")
    p.add_argument("--boost-columns", action="store_true", help="boost the query's columns of interest")

    p = sub.add_parser("verify", help="re-run the creating query over the top-k candidates")
    p.add_argument("tuple_id", type=int)
    p.add_argument("--top", type=int, default=20)
    p.add_argument("--method", choices=("tv", "cv"), default="cv")

    p = sub.add_parser("evaluate", help="score explanations for target tuples")
    p.add_argument("--targets", help="comma-separated tuple ids")
    p.add_argument("--targets-table", default="exp4", help="use all tuples of this table")
    p.add_argument("--method", choices=("tv", "cv"), default="cv")
    p.add_argument("--group", choices=("base", "views"), default="base")
    p.add_argument("--no-enhance", action="store_true")
    p.add_argument("--boost-columns", action="store_true")
    p.add_argument("--out", help="directory for report files")

    p = sub.add_parser("scenario", help="build the synthetic materialized-view store")
    p.add_argument("--seed", type=int)
    p.add_argument("--rows", type=int, default=1000, help="rows per base table")
    return parser


def _load_setup(args) -> tuple[Config, WordModel | None, str]:
    config = load_config(args.config) if args.config else Config()
    store_path = args.store or config.store_path
    if not store_path:
        raise ConfigError("no store path: pass --store or set store_path in the config")
    model = None
    model_path = args.model or config.model_path
    if model_path:
        model = load_model(model_path)
        config = config.with_overrides(dimension=model.dimension)
    return config, model, store_path


def _open_store(args, must_exist: bool = True) -> tuple[LineageStore, str]:
    config, model, store_path = _load_setup(args)
    if Path(store_path).exists():
        return LineageStore.load(store_path, config, model=model), store_path
    if must_exist:
        raise EngineError(f"no store at {store_path}")
    return LineageStore(config, model=model), store_path


def _print_table(header: list[str], rows: list[list[str]]) -> None:
    table = [header] + rows
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    for row in table:
        print("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())


def _cmd_ingest(args) -> int:
    store, store_path = _open_store(args, must_exist=False)
    records = store.ingest_csv(args.csv, args.table)
    store.save(store_path)
    print(f"ingested {len(records)} tuples into {args.table}")
    return 0


def _cmd_corpus(args) -> int:
    store, _ = _open_store(args)
    columns_corpus, tuples_corpus = extract_corpora(
        store.tables_as_rows(), args.key_every_columns, args.key_every_tuples
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "columns_corpus.txt").write_text(columns_corpus, encoding="utf-8")
    (out / "tuples_corpus.txt").write_text(tuples_corpus, encoding="utf-8")
    print(f"wrote {out / 'columns_corpus.txt'} and {out / 'tuples_corpus.txt'}")
    return 0


def _cmd_exec(args) -> int:
    store, _ = _open_store(args)
    plan = parse_plan(Path(args.planfile).read_text(encoding="utf-8"))
    rows = store.execute(plan, compute_lineage=False)
    if not rows:
        print("(no rows)")
        return 0
    columns = list(rows[0].values)
    _print_table(columns, [[repr(r.values[c]) for c in columns] for r in rows])
    print(f"({len(rows)} rows)")
    return 0


def _cmd_insert_select(args) -> int:
    store, store_path = _open_store(args)
    plan = parse_plan(Path(args.planfile).read_text(encoding="utf-8"))
    records = store.insert_select(plan, args.into, args.query_id)
    store.save(store_path)
    print(f"materialized {len(records)} tuples into {args.into} as query {args.query_id}")
    return 0


def _ranked_candidates(store: LineageStore, args) -> list[tuple[int, float | None]]:
    target = store.record(args.tuple_id)
    candidates = [r for r in candidate_group(store, args.group) if r.id != target.id]
    return rank_candidates(
        store,
        target,
        candidates,
        args.method,
        enhanced=not getattr(args, "no_enhance", False),
        use_column_boost=getattr(args, "boost_columns", False),
    )


def _cmd_lineage(args) -> int:
    store, _ = _open_store(args)
    ranking = _ranked_candidates(store, args)[: args.top]
    lineage = store.distant_lineage(args.tuple_id)
    exact = lineage.exact_lineage
    rows = []
    for rank, (cid, score) in enumerate(ranking, start=1):
        record = store.records[cid]
        levels = ",".join(str(i) for i in lineage.levels_containing(cid))
        rows.append(
            [
                str(rank),
                str(cid),
                record.table,
                "filtered" if score is None else f"{score:.4f}",
                levels,
                "yes" if cid in exact else "no",
            ]
        )
    _print_table(["rank", "tuple-id", "table", "similarity", "levels", "lineage"], rows)
    return 0


def _cmd_verify(args) -> int:
    store, _ = _open_store(args)
    candidates = [r for r in store.records.values() if r.id != args.tuple_id]
    target = store.record(args.tuple_id)
    ranking = rank_candidates(store, target, candidates, args.method, enhanced=True)
    top = [cid for cid, _ in ranking[: args.top]]
    verified = store.verify_lineage(args.tuple_id, top)
    print("verified" if verified else "not verified")
    return 0


def _cmd_evaluate(args) -> int:
    store, _ = _open_store(args)
    if args.targets:
        targets = [int(t) for t in args.targets.split(",") if t.strip()]
    else:
        if args.targets_table not in store.schemas:
            raise EngineError(f"no table {args.targets_table!r}; pass --targets or --targets-table")
        targets = store.table_ids(args.targets_table)
    report = run_experiment(
        store,
        targets,
        args.method,
        group=args.group,
        enhancements=not args.no_enhance,
        use_column_boost=args.boost_columns,
    )
    sys.stdout.write(report.to_text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"eval_{args.method}_{args.group}"
        (out / f"{stem}.txt").write_text(report.to_text(), encoding="utf-8")
        (out / f"{stem}.csv").write_text(report.to_csv(), encoding="utf-8")
        print(f"wrote {out / (stem + '.txt')} and {out / (stem + '.csv')}")
    return 0


def _cmd_scenario(args) -> int:
    config, _, store_path = _load_setup(args)
    store = build_scenario(config, seed=args.seed, spec=ScenarioSpec(rows_per_table=args.rows))
    store.save(store_path)
    total = len(store.records)
    views = len(store.queries)
    print(f"built scenario: {total} tuples, {views} materialized views -> {store_path}")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "corpus": _cmd_corpus,
    "exec": _cmd_exec,
    "insert-select": _cmd_insert_select,
    "lineage": _cmd_lineage,
    "verify": _cmd_verify,
    "evaluate": _cmd_evaluate,
    "scenario": _cmd_scenario,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except _DATA_ERRORS as exc:
        message = str(exc) or exc.__class__.__name__
        print(f"vlineage {args.command}: error: {message}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
