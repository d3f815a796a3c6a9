"""Explanation-quality metrics, the synthetic materialized-view scenario, and reports."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import AbstractSet, Literal, Sequence

from .columns import cv_similarity
from .config import Config
from .embedding import ColumnWeights
from .engine import HierarchicalLineage, LineageStore, TupleRecord
from .enhance import apply_enhancements, weighted_column_similarity
from .plans import parse_plan, scanned_tables
from .vectorset import SimilarityParams, set_similarity

Method = Literal["tv", "cv"]
Group = Literal["base", "views"]

PRECISION_FRACTIONS = (1.0, 0.75, 0.50, 0.25)
REPORT_LEVELS = 4  # fixed CSV layout; the default scenario reaches exactly this depth


class ScenarioError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def precision(approx: Sequence[int], exact: AbstractSet[int], k: int) -> float:
    """Share of the top-k returned explanations that are exact lineage members."""
    if k < 1:
        raise ValueError("k must be >= 1")
    prefix = approx[:k]
    if not prefix:
        return 0.0
    return len(set(prefix) & exact) / len(prefix)


def recall_level(approx: Sequence[int], lineage: HierarchicalLineage, level: int) -> float | None:
    """Per-level recall over the top-D prefix, D = unique lineage size through this level."""
    if level < 1:
        raise ValueError("level must be >= 1")
    if level > lineage.depth:
        return None
    wanted = lineage.levels[level]
    if not wanted:
        return None
    depth_budget = len(lineage.union_through(level))
    prefix = set(approx[:depth_budget])
    return len(prefix & wanted) / len(wanted)


def random_baseline(lineage_size: int, n_candidates: int) -> float:
    """Expected precision of ranking the candidates uniformly at random."""
    if n_candidates <= 0:
        raise ValueError("n_candidates must be positive")
    return lineage_size / n_candidates


# ---------------------------------------------------------------------------
# Ranking
# ---------------------------------------------------------------------------

def _order_scored(
    scored: Sequence[tuple[TupleRecord, float | None]]
) -> list[tuple[TupleRecord, float | None]]:
    ranked = [(rec, s) for rec, s in scored if s is not None]
    filtered = [(rec, s) for rec, s in scored if s is None]
    ranked.sort(key=lambda item: (-item[1], item[0].id))  # type: ignore[operator]
    filtered.sort(key=lambda item: item[0].id)
    return ranked + filtered


def rank_candidates(
    store: LineageStore,
    target: TupleRecord,
    candidates: Sequence[TupleRecord],
    method: Method,
    *,
    enhanced: bool = True,
    use_column_boost: bool = False,
) -> list[tuple[int, float | None]]:
    """Rank candidate records against a target, optionally applying enhancements.

    The column-of-interest boost is a separate switch because it mainly helps
    direct-lineage questions; the timestamp filter and DAG weighting are what
    `enhanced` turns on.
    """
    params = SimilarityParams(store.config.w_max, store.config.w_avg)
    threshold = store.config.effective_containment_threshold
    scored: list[tuple[TupleRecord, float | None]] = []
    if method == "tv":
        for rec in candidates:
            scored.append((rec, set_similarity(target.tv, rec.tv, params)))
    elif method == "cv":
        interest = target.cols_of_interest or frozenset()
        for rec in candidates:
            if use_column_boost and interest:
                score = weighted_column_similarity(
                    target.cv,
                    rec.cv,
                    interest,
                    store.config.interest_boost,
                    params,
                    store.column_weights,
                    threshold,
                )
            else:
                score = cv_similarity(target.cv, rec.cv, params, store.column_weights, threshold)
            scored.append((rec, score))
    else:
        raise ValueError(f"unknown method {method!r}")
    if enhanced:
        dag = store.dag if target.creating_query is not None else None
        ordered = apply_enhancements(target, scored, dag)
    else:
        ordered = _order_scored(scored)
    return [(rec.id, score) for rec, score in ordered]


def materialized_tables(store: LineageStore) -> set[str]:
    return {info.target_table for info in store.queries.values()}


def candidate_group(store: LineageStore, group: Group) -> list[TupleRecord]:
    """All tuples of either the base tables or the materialized views."""
    views = materialized_tables(store)
    if group == "base":
        tables = [t for t in store.schemas if t not in views]
    elif group == "views":
        tables = [t for t in store.schemas if t in views]
    else:
        raise ValueError(f"unknown candidate group {group!r}")
    out: list[TupleRecord] = []
    for table in tables:
        for tid in store.table_ids(table):
            out.append(store.records[tid])
    return out


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TargetMetrics:
    target_id: int
    table: str
    total_lineage: int
    level_sizes: tuple[int, ...]
    precisions: tuple[float, ...]  # aligned with PRECISION_FRACTIONS
    recalls: tuple[float | None, ...]  # aligned with levels 1..REPORT_LEVELS
    baseline: float
    flags: str = ""


@dataclass(frozen=True)
class EvalReport:
    method: Method
    group: Group
    enhanced: bool
    candidate_count: int
    rows: tuple[TargetMetrics, ...]

    def mean_precision(self, fraction: float = 1.0) -> float:
        idx = PRECISION_FRACTIONS.index(fraction)
        if not self.rows:
            return 0.0
        return sum(r.precisions[idx] for r in self.rows) / len(self.rows)

    def csv_header(self) -> str:
        cols = ["target_id", "table", "method", "group", "enhanced", "candidates", "total_lineage"]
        cols += [f"level{i}" for i in range(1, REPORT_LEVELS + 1)]
        cols += [f"precision_{int(f * 100)}" for f in PRECISION_FRACTIONS]
        cols += [f"recall_l{i}" for i in range(1, REPORT_LEVELS + 1)]
        cols += ["random_baseline", "flags"]
        return ",".join(cols)

    def to_csv(self) -> str:
        lines = [self.csv_header()]
        for r in self.rows:
            cells = [
                str(r.target_id),
                r.table,
                self.method,
                self.group,
                "1" if self.enhanced else "0",
                str(self.candidate_count),
                str(r.total_lineage),
            ]
            cells += [str(s) for s in r.level_sizes]
            cells += [f"{p:.4f}" for p in r.precisions]
            cells += ["" if rec is None else f"{rec:.4f}" for rec in r.recalls]
            cells += [f"{r.baseline:.6f}", r.flags]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header = self.csv_header().split(",")
        table = [header]
        for line in self.to_csv().splitlines()[1:]:
            table.append(line.split(","))
        widths = [max(len(row[i]) for row in table) for i in range(len(header))]
        out = []
        for row in table:
            out.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        return "\n".join(out) + "\n"


def run_experiment(
    store: LineageStore,
    targets: Sequence[int],
    method: Method,
    *,
    group: Group = "base",
    enhancements: bool = True,
    use_column_boost: bool = False,
) -> EvalReport:
    """Rank each target against the candidate group and score the explanations."""
    candidates_all = candidate_group(store, group)
    if not candidates_all:
        raise ScenarioError(f"candidate group {group!r} is empty")
    rows: list[TargetMetrics] = []
    for tid in targets:
        target = store.record(tid)
        if target.creating_query is None:
            raise ScenarioError(f"target {tid} is a base tuple")
        candidates = [rec for rec in candidates_all if rec.id != tid]
        ranking = rank_candidates(
            store,
            target,
            candidates,
            method,
            enhanced=enhancements,
            use_column_boost=use_column_boost,
        )
        approx = [cid for cid, _ in ranking]
        lineage = store.distant_lineage(tid)
        exact = lineage.exact_lineage
        total = len(exact)
        flags = ""
        if not approx:
            precisions = tuple(0.0 for _ in PRECISION_FRACTIONS)
            flags = "empty_ranking"
        else:
            precisions = tuple(
                precision(approx, exact, max(1, round(f * total))) for f in PRECISION_FRACTIONS
            )
        sizes = tuple(
            len(lineage.levels[i]) if i <= lineage.depth else 0
            for i in range(1, REPORT_LEVELS + 1)
        )
        recalls = tuple(
            recall_level(approx, lineage, i) if approx else None
            for i in range(1, REPORT_LEVELS + 1)
        )
        rows.append(
            TargetMetrics(
                target_id=tid,
                table=target.table,
                total_lineage=total,
                level_sizes=sizes,
                precisions=precisions,
                recalls=recalls,
                baseline=random_baseline(total, len(candidates)),
                flags=flags,
            )
        )
    return EvalReport(method, group, enhancements, len(candidates_all) - 1, tuple(rows))


# ---------------------------------------------------------------------------
# Synthetic scenario: three base tables and a hierarchy of materialized views
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ViewSpec:
    name: str
    query_id: str
    plan_text: str


_PRODUCT_COLUMNS = "ndb_no = products.ndb_no, name = products.name, manufacturer = products.manufacturer, ingredients = products.ingredients"
_PRODUCT_GROUP = "products.ndb_no, products.name, products.manufacturer, products.ingredients"


def _nutrient_view(nutrient: str) -> str:
    return (
        "project(distinct(filter(join(scan(products), scan(nutrients), "
        "products.ndb_no = nutrients.ndb_no), "
        f"nutrients.nutrient_name = '{nutrient}'), {_PRODUCT_GROUP}), {_PRODUCT_COLUMNS})"
    )


def _preparation_view(state: str) -> str:
    return (
        "project(distinct(filter(join(scan(products), scan(serving_size), "
        "products.ndb_no = serving_size.ndb_no), "
        f"serving_size.preparation_state = '{state}'), {_PRODUCT_GROUP}), {_PRODUCT_COLUMNS})"
    )


DEFAULT_VIEWS: tuple[ViewSpec, ...] = (
    ViewSpec("sugars", "q_sugars", _nutrient_view("sugars")),
    ViewSpec("protein", "q_protein", _nutrient_view("protein")),
    ViewSpec("unprepared", "q_unprepared", _preparation_view("unprepared")),
    ViewSpec("readytodrink", "q_readytodrink", _preparation_view("readytodrink")),
    ViewSpec(
        "exp2",
        "q_exp2",
        "project(distinct(filter(join(scan(unprepared as u), scan(protein as pr), "
        "u.manufacturer = pr.manufacturer), contains(pr.ingredients, 'water')), "
        "u.manufacturer), manufacturer = u.manufacturer)",
    ),
    ViewSpec(
        "exp3",
        "q_exp3",
        "project(distinct(filter(join(scan(exp2), scan(sugars as sgr), "
        "exp2.manufacturer = sgr.manufacturer), contains(sgr.name, 'rice')), "
        "sgr.manufacturer, sgr.name), manufacturer = sgr.manufacturer, name = sgr.name)",
    ),
    ViewSpec(
        "exp4",
        "q_exp4",
        "project(distinct(filter(join(scan(exp3), scan(readytodrink as rtd), "
        "exp3.manufacturer = rtd.manufacturer), contains(rtd.name, 'mango')), "
        "rtd.manufacturer, rtd.name), manufacturer = rtd.manufacturer, name = rtd.name)",
    ),
)


@dataclass(frozen=True)
class ScenarioSpec:
    rows_per_table: int = 1000
    n_manufacturers: int = 100
    views: tuple[ViewSpec, ...] = DEFAULT_VIEWS
    target_table: str = "exp4"


DEFAULT_SCENARIO = ScenarioSpec()

# Identifier and descriptive columns carry the lineage signal; low-cardinality
# measurement columns mostly crowd the similarity scores, so they are damped.
SCENARIO_COLUMN_WEIGHTS = ColumnWeights(
    {
        "ndb_no": 3.0,
        "name": 2.0,
        "manufacturer": 2.0,
        "ingredients": 1.0,
        "nutrient_name": 1.0,
        "output_value": 0.5,
        "output_uom": 0.25,
        "household_serving": 0.5,
        "household_serving_size_uom": 0.25,
        "preparation_state": 1.0,
    }
)

_MAKER_FIRST = (
    "golden silver crimson azure emerald amber ivory copper scarlet cobalt "
    "coral jade ruby pearl onyx topaz indigo violet sienna umber"
).split()
_MAKER_SECOND = (
    "orchards farms foods kitchens mills gardens harvest pantry creamery bakers "
    "roasters growers fields valley grove springs cellars works table provisions"
).split()
_NAME_NOUNS = (
    "beverage soup sauce snack cereal cookie cracker juice blend mix bar chips "
    "yogurt granola pasta bread tea roast butter jam salsa stew wrap bites "
    "crisps smoothie porridge pudding muffin waffle"
).split()
_NAME_FLAVORS = (
    "apple banana cherry peach carrot tomato ginger lemon lime berry grape melon "
    "plum apricot coconut almond cashew oat honey vanilla cocoa mint basil chili "
    "garlic onion pepper maple caramel citrus"
).split()
_INGREDIENTS = (
    "corn wheat milk soy yeast oil vinegar starch cocoa honey barley oats pepper "
    "garlic onion celery carrot tomato lemon cream butter"
).split()
_NUTRIENT_NAMES = ("sugars", "protein", "fat", "sodium")
_PREPARATION_STATES = ("prepared", "unprepared", "readytodrink")


def _generate_base_rows(
    rng: random.Random, count: int, n_manufacturers: int
) -> dict[str, list[dict[str, object]]]:
    makers = rng.sample([f"{a} {b}" for a in _MAKER_FIRST for b in _MAKER_SECOND], n_manufacturers)
    products = []
    for i in range(count):
        words = [rng.choice(_NAME_FLAVORS), rng.choice(_NAME_FLAVORS), rng.choice(_NAME_NOUNS)]
        special = rng.random()
        if special < 0.16:
            words.insert(rng.randrange(len(words) + 1), "rice")
        elif special < 0.30:
            words.insert(rng.randrange(len(words) + 1), "mango")
        parts = rng.sample(_INGREDIENTS, rng.randint(2, 4))
        if rng.random() < 0.60:
            parts.insert(0, "water")
        if rng.random() < 0.40:
            parts.append("sugar")
        if rng.random() < 0.35:
            parts.append("salt")
        products.append(
            {
                "ndb_no": str(10000000 + i),
                "name": " ".join(words),
                "manufacturer": rng.choice(makers),
                "ingredients": " ".join(parts),
            }
        )
    nutrients = []
    for _ in range(count):
        product = products[rng.randrange(count)]
        nutrients.append(
            {
                "ndb_no": product["ndb_no"],
                "nutrient_name": rng.choice(_NUTRIENT_NAMES),
                "output_value": round(rng.uniform(0.1, 95.0), 1),
                "output_uom": rng.choice(("g", "mg")),
            }
        )
    servings = []
    for product in products:
        servings.append(
            {
                "ndb_no": product["ndb_no"],
                "household_serving": rng.choice((0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0)),
                "household_serving_size_uom": rng.choice(("cup", "tablespoon", "teaspoon")),
                "preparation_state": rng.choice(_PREPARATION_STATES),
            }
        )
    return {"products": products, "nutrients": nutrients, "serving_size": servings}


def _topological_views(views: Sequence[ViewSpec], base_tables: set[str]) -> list[ViewSpec]:
    by_name = {v.name: v for v in views}
    deps: dict[str, set[str]] = {}
    for view in views:
        refs = scanned_tables(parse_plan(view.plan_text))
        deps[view.name] = {r for r in refs if r in by_name}
        unknown = refs - base_tables - set(by_name)
        if unknown:
            raise ScenarioError(f"view {view.name!r} scans unknown table(s) {sorted(unknown)}")
    ordered: list[ViewSpec] = []
    done: set[str] = set()
    pending = list(views)
    while pending:
        progress = False
        remaining = []
        for view in pending:
            if deps[view.name] <= done:
                ordered.append(view)
                done.add(view.name)
                progress = True
            else:
                remaining.append(view)
        if not progress:
            raise ScenarioError(f"cyclic view spec: {[v.name for v in remaining]}")
        pending = remaining
    return ordered


def build_scenario(
    config: Config | None = None,
    seed: int | None = None,
    spec: ScenarioSpec = DEFAULT_SCENARIO,
) -> LineageStore:
    """Deterministically populate a store with base data and the view hierarchy."""
    config = config if config is not None else Config()
    if seed is not None:
        config = config.with_overrides(seed=seed)
    rng = random.Random(config.seed)
    store = LineageStore(config, column_weights=SCENARIO_COLUMN_WEIGHTS)
    base_rows = _generate_base_rows(rng, spec.rows_per_table, spec.n_manufacturers)
    for table, rows in base_rows.items():
        store.create_table(table, list(rows[0].keys()))
        for row in rows:
            store.insert_base(table, row)
    for view in _topological_views(spec.views, set(base_rows)):
        store.insert_select(parse_plan(view.plan_text), view.name, view.query_id)
    return store


def default_targets(store: LineageStore, spec: ScenarioSpec = DEFAULT_SCENARIO) -> list[int]:
    if spec.target_table not in store.schemas:
        raise ScenarioError(f"no target table {spec.target_table!r} in store")
    return store.table_ids(spec.target_table)
