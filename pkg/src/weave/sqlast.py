"""AST node types for the accepted SQL subset, plus a deterministic pretty-printer.

The parser produces these nodes verbatim; later passes (classification, IR
lowering, evaluation) share them. Nodes are frozen so ASTs can be hashed and
compared structurally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

AGGREGATES = ("sum", "count", "min", "max", "all_different")

COMPARISONS = ("=", "!=", "<", "<=", ">", ">=")
ARITH_OPS = ("+", "-", "*")


@dataclass(frozen=True)
class ColRef:
    table: Optional[str]  # None until resolved against a scope
    column: str

    def render(self) -> str:
        return f"{self.table}.{self.column}" if self.table else self.column


@dataclass(frozen=True)
class IntLit:
    value: int

    def render(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class StrLit:
    value: str

    def render(self) -> str:
        return "'" + self.value.replace("'", "''") + "'"


@dataclass(frozen=True)
class BoolLit:
    value: bool

    def render(self) -> str:
        return "true" if self.value else "false"


@dataclass(frozen=True)
class BinOp:
    op: str  # and/or, comparisons, + - *
    left: "Expr"
    right: "Expr"

    def render(self) -> str:
        return f"({self.left.render()} {self.op} {self.right.render()})"


@dataclass(frozen=True)
class NotOp:
    operand: "Expr"

    def render(self) -> str:
        return f"(not {self.operand.render()})"


@dataclass(frozen=True)
class AggCall:
    func: str  # one of AGGREGATES
    arg: "Expr"

    def render(self) -> str:
        return f"{self.func}({self.arg.render()})"


@dataclass(frozen=True)
class InSubquery:
    needle: "Expr"
    query: "QueryAst"
    negated: bool = False

    def render(self) -> str:
        op = "not in" if self.negated else "in"
        return f"({self.needle.render()} {op} ({self.query.render()}))"


@dataclass(frozen=True)
class ScalarSubquery:
    query: "QueryAst"

    def render(self) -> str:
        return f"({self.query.render()})"


Expr = Union[ColRef, IntLit, StrLit, BoolLit, BinOp, NotOp, AggCall, InSubquery, ScalarSubquery]


@dataclass(frozen=True)
class Star:
    def render(self) -> str:
        return "*"


@dataclass(frozen=True)
class SelectItem:
    expr: Union[Expr, Star]
    alias: Optional[str] = None

    def render(self) -> str:
        text = self.expr.render()
        return f"{text} as {self.alias}" if self.alias else text


@dataclass(frozen=True)
class Join:
    table: str
    on: Expr

    def render(self) -> str:
        return f"join {self.table} on {self.on.render()}"


@dataclass(frozen=True)
class QueryAst:
    projection: tuple[SelectItem, ...]
    base: str
    joins: tuple[Join, ...] = ()
    where: Optional[Expr] = None
    group_by: tuple[ColRef, ...] = ()
    having: Optional[Expr] = None

    def sources(self) -> tuple[str, ...]:
        return (self.base,) + tuple(j.table for j in self.joins)

    def render(self) -> str:
        parts = ["select " + ", ".join(item.render() for item in self.projection)]
        parts.append("from " + self.base)
        parts.extend(j.render() for j in self.joins)
        if self.where is not None:
            parts.append("where " + self.where.render())
        if self.group_by:
            parts.append("group by " + ", ".join(c.render() for c in self.group_by))
        if self.having is not None:
            parts.append("having " + self.having.render())
        return " ".join(parts)


# View classes. AUX is assigned during classification: a variable-dependent,
# unannotated view consumed by a constraint view.
INPUT, HARD, SOFT, AUX = "input", "hard", "soft", "aux"


@dataclass
class ViewDef:
    name: str
    ast: QueryAst
    klass: Optional[str] = None  # None = unannotated until classified
    line: int = 0

    def render(self) -> str:
        prefix = ""
        if self.klass == HARD:
            prefix = "-- @hard_constraint\n"
        elif self.klass == SOFT:
            prefix = "-- @soft_constraint\n"
        return f"{prefix}create view {self.name} as {self.ast.render()};"


def walk_expr(expr: Expr):
    """Yield every node of an expression tree, including subquery interiors."""
    yield expr
    if isinstance(expr, BinOp):
        yield from walk_expr(expr.left)
        yield from walk_expr(expr.right)
    elif isinstance(expr, NotOp):
        yield from walk_expr(expr.operand)
    elif isinstance(expr, AggCall):
        yield from walk_expr(expr.arg)
    elif isinstance(expr, InSubquery):
        yield from walk_expr(expr.needle)
        yield from walk_query(expr.query)
    elif isinstance(expr, ScalarSubquery):
        yield from walk_query(expr.query)


def walk_query(query: QueryAst):
    """Yield every expression node in a query, recursively."""
    for item in query.projection:
        if not isinstance(item.expr, Star):
            yield from walk_expr(item.expr)
    for join in query.joins:
        yield from walk_expr(join.on)
    if query.where is not None:
        yield from walk_expr(query.where)
    for key in query.group_by:
        yield key
    if query.having is not None:
        yield from walk_expr(query.having)


def conjuncts(expr: Optional[Expr]) -> list[Expr]:
    """Split an expression on top-level AND; OR stays inside one conjunct."""
    if expr is None:
        return []
    if isinstance(expr, BinOp) and expr.op == "and":
        return conjuncts(expr.left) + conjuncts(expr.right)
    return [expr]


def conjoin(parts: list[Expr]) -> Optional[Expr]:
    out: Optional[Expr] = None
    for part in parts:
        out = part if out is None else BinOp("and", out, part)
    return out
