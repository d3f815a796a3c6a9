"""Logical query plans: operator tree, predicate expressions, and the plan text format."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union


class PlanError(ValueError):
    """A plan references columns or tables that cannot be resolved."""


class PlanParseError(ValueError):
    """The plan text does not conform to the documented grammar."""


class PredicateTypeError(TypeError):
    """A predicate compares values of incompatible types."""


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnRef:
    name: str  # full name, e.g. "products.name"


@dataclass(frozen=True)
class Const:
    value: object


Operand = Union[ColumnRef, Const]

_COMPARATORS = {"=", "!=", "<", "<=", ">", ">="}


@dataclass(frozen=True)
class Comparison:
    op: str
    left: Operand
    right: Operand

    def __post_init__(self) -> None:
        if self.op not in _COMPARATORS:
            raise ValueError(f"unknown comparator {self.op!r}")


@dataclass(frozen=True)
class Contains:
    haystack: Operand
    needle: Operand


@dataclass(frozen=True)
class And:
    items: tuple["Predicate", ...]


@dataclass(frozen=True)
class Or:
    items: tuple["Predicate", ...]


@dataclass(frozen=True)
class Not:
    item: "Predicate"


Predicate = Union[Comparison, Contains, And, Or, Not]


def _operand_value(op: Operand, row: Mapping[str, object]) -> object:
    if isinstance(op, Const):
        return op.value
    try:
        return row[op.name]
    except KeyError:
        raise PlanError(f"unresolvable column {op.name!r}") from None


def _is_number(v: object) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_comparable(a: object, b: object, op: str) -> None:
    if a is None or b is None:
        return
    if _is_number(a) != _is_number(b):
        raise PredicateTypeError(f"cannot apply {op!r} to {type(a).__name__} and {type(b).__name__}")


def eval_predicate(pred: Predicate, row: Mapping[str, object]) -> bool:
    if isinstance(pred, Comparison):
        a = _operand_value(pred.left, row)
        b = _operand_value(pred.right, row)
        _check_comparable(a, b, pred.op)
        if a is None or b is None:
            return False  # SQL-style: comparisons against missing data never hold
        if pred.op == "=":
            return a == b
        if pred.op == "!=":
            return a != b
        if pred.op == "<":
            return a < b
        if pred.op == "<=":
            return a <= b
        if pred.op == ">":
            return a > b
        return a >= b
    if isinstance(pred, Contains):
        hay = _operand_value(pred.haystack, row)
        needle = _operand_value(pred.needle, row)
        if hay is None or needle is None:
            return False
        if not isinstance(hay, str) or not isinstance(needle, str):
            raise PredicateTypeError("contains() requires text operands")
        return needle in hay
    if isinstance(pred, And):
        return all(eval_predicate(p, row) for p in pred.items)
    if isinstance(pred, Or):
        return any(eval_predicate(p, row) for p in pred.items)
    if isinstance(pred, Not):
        return not eval_predicate(pred.item, row)
    raise TypeError(f"not a predicate: {pred!r}")


def predicate_columns(pred: Predicate) -> set[str]:
    if isinstance(pred, Comparison):
        return {o.name for o in (pred.left, pred.right) if isinstance(o, ColumnRef)}
    if isinstance(pred, Contains):
        return {o.name for o in (pred.haystack, pred.needle) if isinstance(o, ColumnRef)}
    if isinstance(pred, (And, Or)):
        out: set[str] = set()
        for item in pred.items:
            out |= predicate_columns(item)
        return out
    if isinstance(pred, Not):
        return predicate_columns(pred.item)
    raise TypeError(f"not a predicate: {pred!r}")


# ---------------------------------------------------------------------------
# Plan nodes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scan:
    table: str
    alias: str | None = None

    @property
    def rel(self) -> str:
        return self.alias or self.table


@dataclass(frozen=True)
class Filter:
    child: "Plan"
    predicate: Predicate


@dataclass(frozen=True)
class Join:
    left: "Plan"
    right: "Plan"
    predicate: Predicate


@dataclass(frozen=True)
class Project:
    child: "Plan"
    assignments: tuple[tuple[str, Operand], ...]  # (output column, source)
    table: str | None = None  # relation name carried by the outputs

    def output_name(self, out: str) -> str:
        return f"{self.table}.{out}" if self.table else out


@dataclass(frozen=True)
class DistinctGroup:
    child: "Plan"
    columns: tuple[str, ...] = ()  # full names; empty = all child columns


Plan = Union[Scan, Filter, Join, Project, DistinctGroup]


def output_columns(plan: Plan, schemas: Mapping[str, Sequence[str]]) -> list[str]:
    """Full output column names of a node; raises PlanError on anything unresolvable."""
    if isinstance(plan, Scan):
        if plan.table not in schemas:
            raise PlanError(f"unknown table {plan.table!r}")
        return [f"{plan.rel}.{c}" for c in schemas[plan.table]]
    if isinstance(plan, Filter):
        cols = output_columns(plan.child, schemas)
        _check_resolvable(predicate_columns(plan.predicate), cols)
        return cols
    if isinstance(plan, Join):
        left = output_columns(plan.left, schemas)
        right = output_columns(plan.right, schemas)
        overlap = set(left) & set(right)
        if overlap:
            raise PlanError(f"join sides share columns {sorted(overlap)}; alias one side")
        cols = left + right
        _check_resolvable(predicate_columns(plan.predicate), cols)
        return cols
    if isinstance(plan, Project):
        child_cols = output_columns(plan.child, schemas)
        refs = {s.name for _, s in plan.assignments if isinstance(s, ColumnRef)}
        _check_resolvable(refs, child_cols)
        outs = [plan.output_name(out) for out, _ in plan.assignments]
        if len(set(outs)) != len(outs):
            raise PlanError("duplicate output column in projection")
        if not outs:
            raise PlanError("projection must keep at least one column")
        return outs
    if isinstance(plan, DistinctGroup):
        child_cols = output_columns(plan.child, schemas)
        if not plan.columns:
            return child_cols
        _check_resolvable(set(plan.columns), child_cols)
        return list(plan.columns)
    raise TypeError(f"not a plan node: {plan!r}")


def _check_resolvable(refs: set[str], available: Sequence[str]) -> None:
    missing = refs - set(available)
    if missing:
        raise PlanError(f"unresolvable column(s) {sorted(missing)}; in scope: {sorted(available)}")


def gene_map(plan: Plan) -> dict[str, str]:
    """Map each value-namespace relation to the relation its lineage genes carry.

    Scan aliases rename the value columns only; the per-column lineage keeps
    the canonical ``table.attr`` names, so projection sources must be
    translated back before lineage lookups.
    """
    if isinstance(plan, Scan):
        return {plan.rel: plan.table}
    if isinstance(plan, Filter):
        return gene_map(plan.child)
    if isinstance(plan, Join):
        return {**gene_map(plan.left), **gene_map(plan.right)}
    if isinstance(plan, Project):
        return {plan.table: plan.table} if plan.table else {}
    if isinstance(plan, DistinctGroup):
        return gene_map(plan.child)
    raise TypeError(f"not a plan node: {plan!r}")


def to_gene_name(column: str, mapping: Mapping[str, str]) -> str:
    if "." not in column:
        return column
    rel, attr = column.split(".", 1)
    return f"{mapping.get(rel, rel)}.{attr}"


def scanned_tables(plan: Plan) -> set[str]:
    if isinstance(plan, Scan):
        return {plan.table}
    if isinstance(plan, Filter):
        return scanned_tables(plan.child)
    if isinstance(plan, Join):
        return scanned_tables(plan.left) | scanned_tables(plan.right)
    if isinstance(plan, (Project, DistinctGroup)):
        return scanned_tables(plan.child)
    raise TypeError(f"not a plan node: {plan!r}")


def columns_of_interest(plan: Plan) -> frozenset[str]:
    """Full column names mentioned in projections and predicates, per query."""
    if isinstance(plan, Scan):
        return frozenset()
    if isinstance(plan, Filter):
        return columns_of_interest(plan.child) | predicate_columns(plan.predicate)
    if isinstance(plan, Join):
        return (
            columns_of_interest(plan.left)
            | columns_of_interest(plan.right)
            | predicate_columns(plan.predicate)
        )
    if isinstance(plan, Project):
        refs = {s.name for _, s in plan.assignments if isinstance(s, ColumnRef)}
        return columns_of_interest(plan.child) | refs
    if isinstance(plan, DistinctGroup):
        return columns_of_interest(plan.child)
    raise TypeError(f"not a plan node: {plan!r}")


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------
#
# plan     := node
# node     := scan | filter | join | project | distinct
# scan     := "scan" "(" NAME ["as" NAME] ")"
# filter   := "filter" "(" node "," expr ")"
# join     := "join" "(" node "," node "," expr ")"
# project  := "project" "(" node "," assign {"," assign} ")" ["as" NAME]
# distinct := "distinct" "(" node {"," colref} ")"
# assign   := NAME "=" (colref | literal)
# expr     := or-chain of and-chains; "not" prefix; comparisons with
#             = != < <= > >=; contains(operand, operand); parentheses
# colref   := NAME "." NAME
# literal  := 'single quoted text' | number

_TOKEN_RE_SPEC = [
    ("WS", r"\s+"),
    ("NUMBER", r"-?\d+(?:\.\d+)?"),
    ("QNAME", r"[A-Za-z_][A-Za-z0-9_]*\.[A-Za-z_][A-Za-z0-9_]*"),
    ("NAME", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("STRING", r"'[^']*'"),
    ("OP", r"!=|<=|>=|=|<|>"),
    ("LPAREN", r"\("),
    ("RPAREN", r"\)"),
    ("COMMA", r","),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in _TOKEN_RE_SPEC))


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PlanParseError(f"unexpected character {text[pos]!r} at offset {pos}")
        if m.lastgroup != "WS":
            tokens.append(_Token(m.lastgroup or "", m.group(), pos))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str) -> None:
        self.tokens = _tokenize(text)
        self.index = 0

    def peek(self) -> _Token | None:
        return self.tokens[self.index] if self.index < len(self.tokens) else None

    def next(self) -> _Token:
        tok = self.peek()
        if tok is None:
            raise PlanParseError("unexpected end of plan text")
        self.index += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> _Token:
        tok = self.next()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text or kind.lower()
            raise PlanParseError(f"expected {want} at offset {tok.pos}, found {tok.text!r}")
        return tok

    def accept_name(self, word: str) -> bool:
        tok = self.peek()
        if tok is not None and tok.kind == "NAME" and tok.text == word:
            self.index += 1
            return True
        return False

    # -- plan nodes ---------------------------------------------------------

    def parse_plan(self) -> Plan:
        tok = self.expect("NAME")
        if tok.text == "scan":
            self.expect("LPAREN")
            table = self.expect("NAME").text
            alias = None
            if self.accept_name("as"):
                alias = self.expect("NAME").text
            self.expect("RPAREN")
            return Scan(table, alias)
        if tok.text == "filter":
            self.expect("LPAREN")
            child = self.parse_plan()
            self.expect("COMMA")
            pred = self.parse_expr()
            self.expect("RPAREN")
            return Filter(child, pred)
        if tok.text == "join":
            self.expect("LPAREN")
            left = self.parse_plan()
            self.expect("COMMA")
            right = self.parse_plan()
            self.expect("COMMA")
            pred = self.parse_expr()
            self.expect("RPAREN")
            return Join(left, right, pred)
        if tok.text == "project":
            self.expect("LPAREN")
            child = self.parse_plan()
            assignments: list[tuple[str, Operand]] = []
            while self.peek() is not None and self.peek().kind == "COMMA":  # type: ignore[union-attr]
                self.next()
                out = self.expect("NAME").text
                self.expect("OP", "=")
                assignments.append((out, self.parse_operand()))
            self.expect("RPAREN")
            table = None
            if self.accept_name("as"):
                table = self.expect("NAME").text
            if not assignments:
                raise PlanParseError("project requires at least one assignment")
            return Project(child, tuple(assignments), table)
        if tok.text == "distinct":
            self.expect("LPAREN")
            child = self.parse_plan()
            columns: list[str] = []
            while self.peek() is not None and self.peek().kind == "COMMA":  # type: ignore[union-attr]
                self.next()
                columns.append(self.expect("QNAME").text)
            self.expect("RPAREN")
            return DistinctGroup(child, tuple(columns))
        raise PlanParseError(f"unknown operator {tok.text!r} at offset {tok.pos}")

    # -- expressions --------------------------------------------------------

    def parse_expr(self) -> Predicate:
        items = [self.parse_and()]
        while self.accept_name("or"):
            items.append(self.parse_and())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def parse_and(self) -> Predicate:
        items = [self.parse_unary()]
        while self.accept_name("and"):
            items.append(self.parse_unary())
        return items[0] if len(items) == 1 else And(tuple(items))

    def parse_unary(self) -> Predicate:
        if self.accept_name("not"):
            return Not(self.parse_unary())
        tok = self.peek()
        if tok is not None and tok.kind == "NAME" and tok.text == "contains":
            self.next()
            self.expect("LPAREN")
            hay = self.parse_operand()
            self.expect("COMMA")
            needle = self.parse_operand()
            self.expect("RPAREN")
            return Contains(hay, needle)
        if tok is not None and tok.kind == "LPAREN":
            self.next()
            inner = self.parse_expr()
            self.expect("RPAREN")
            return inner
        left = self.parse_operand()
        op = self.expect("OP").text
        right = self.parse_operand()
        return Comparison(op, left, right)

    def parse_operand(self) -> Operand:
        tok = self.next()
        if tok.kind == "QNAME":
            return ColumnRef(tok.text)
        if tok.kind == "STRING":
            return Const(tok.text[1:-1])
        if tok.kind == "NUMBER":
            return Const(float(tok.text) if "." in tok.text else int(tok.text))
        raise PlanParseError(f"expected a column or literal at offset {tok.pos}, found {tok.text!r}")


def parse_plan(text: str) -> Plan:
    parser = _Parser(text)
    plan = parser.parse_plan()
    trailing = parser.peek()
    if trailing is not None:
        raise PlanParseError(f"trailing input at offset {trailing.pos}: {trailing.text!r}")
    return plan


# ---------------------------------------------------------------------------
# Serialization back to the text format (round-trips through parse_plan)
# ---------------------------------------------------------------------------

def _operand_to_text(op: Operand) -> str:
    if isinstance(op, ColumnRef):
        return op.name
    value = op.value
    if isinstance(value, str):
        return f"'{value}'"
    if isinstance(value, bool):
        raise ValueError("boolean literals are not part of the plan grammar")
    return repr(value)


def _expr_to_text(pred: Predicate, parent: str = "") -> str:
    if isinstance(pred, Comparison):
        return f"{_operand_to_text(pred.left)} {pred.op} {_operand_to_text(pred.right)}"
    if isinstance(pred, Contains):
        return f"contains({_operand_to_text(pred.haystack)}, {_operand_to_text(pred.needle)})"
    if isinstance(pred, And):
        body = " and ".join(_expr_to_text(p, "and") for p in pred.items)
        return f"({body})" if parent == "not" else body
    if isinstance(pred, Or):
        body = " or ".join(_expr_to_text(p, "or") for p in pred.items)
        return f"({body})" if parent in ("and", "not") else body
    if isinstance(pred, Not):
        return f"not ({_expr_to_text(pred.item)})"
    raise TypeError(f"not a predicate: {pred!r}")


def plan_to_text(plan: Plan) -> str:
    if isinstance(plan, Scan):
        return f"scan({plan.table} as {plan.alias})" if plan.alias else f"scan({plan.table})"
    if isinstance(plan, Filter):
        return f"filter({plan_to_text(plan.child)}, {_expr_to_text(plan.predicate)})"
    if isinstance(plan, Join):
        return (
            f"join({plan_to_text(plan.left)}, {plan_to_text(plan.right)}, "
            f"{_expr_to_text(plan.predicate)})"
        )
    if isinstance(plan, Project):
        assigns = ", ".join(f"{out} = {_operand_to_text(src)}" for out, src in plan.assignments)
        text = f"project({plan_to_text(plan.child)}, {assigns})"
        return f"{text} as {plan.table}" if plan.table else text
    if isinstance(plan, DistinctGroup):
        if plan.columns:
            cols = ", ".join(plan.columns)
            return f"distinct({plan_to_text(plan.child)}, {cols})"
        return f"distinct({plan_to_text(plan.child)})"
    raise TypeError(f"not a plan node: {plan!r}")
