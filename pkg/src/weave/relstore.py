"""In-memory relational store for cluster state.

Tables are typed (integer/boolean/text); columns may be flagged as decision
columns whose cells hold either a concrete value or the explicit unset marker.
Input-only views are evaluated here with ordinary relational semantics; views
that touch decision columns belong to the compiler.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from . import sqlast
from .errors import StoreError
from .sqlast import (
    AggCall,
    BinOp,
    BoolLit,
    ColRef,
    InSubquery,
    IntLit,
    NotOp,
    QueryAst,
    ScalarSubquery,
    SelectItem,
    Star,
    StrLit,
    ViewDef,
)

INTEGER, BOOLEAN, TEXT = "integer", "boolean", "text"
DTYPES = (INTEGER, BOOLEAN, TEXT)


class _Unset:
    """Marker for a decision cell with no value yet. Singleton."""

    _instance: Optional["_Unset"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "?"


UNSET = _Unset()

Value = Union[int, bool, str, _Unset]
Row = tuple


@dataclass(frozen=True)
class ColumnDef:
    name: str
    dtype: str
    is_variable: bool = False

    def __post_init__(self):
        if self.dtype not in DTYPES:
            raise StoreError(f"unknown dtype {self.dtype!r} for column {self.name!r}")
        if self.is_variable and self.dtype == BOOLEAN:
            raise StoreError(
                f"column {self.name!r}: boolean decision columns are not supported; "
                "model them as 0/1 integers"
            )


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[ColumnDef, ...]
    primary_key: Optional[str] = None

    def __post_init__(self):
        if not self.columns:
            raise StoreError(f"table {self.name!r} declares no columns")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise StoreError(f"table {self.name!r} has duplicate column names")
        if self.primary_key is not None and self.primary_key not in names:
            raise StoreError(
                f"table {self.name!r}: primary key {self.primary_key!r} is not a column"
            )
        if any(c.is_variable for c in self.columns) and self.primary_key is None:
            raise StoreError(
                f"table {self.name!r} has decision columns and therefore needs a primary key"
            )

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise StoreError(f"table {self.name!r} has no column {name!r}")

    def column(self, name: str) -> ColumnDef:
        return self.columns[self.column_index(name)]

    @property
    def variable_columns(self) -> tuple[ColumnDef, ...]:
        return tuple(c for c in self.columns if c.is_variable)


@dataclass
class Relation:
    table: TableDef
    rows: list[Row] = field(default_factory=list)


@dataclass(frozen=True)
class Delta:
    table: str
    row_key: Value
    column: str
    new_value: Value


def check_value(col: ColumnDef, value: Value) -> Value:
    if isinstance(value, _Unset):
        if not col.is_variable:
            raise StoreError(f"column {col.name!r} is not a decision column; unset not allowed")
        return value
    if col.dtype == BOOLEAN:
        if not isinstance(value, bool):
            raise StoreError(f"column {col.name!r} expects a boolean, got {value!r}")
    elif col.dtype == INTEGER:
        if isinstance(value, bool) or not isinstance(value, int):
            raise StoreError(f"column {col.name!r} expects an integer, got {value!r}")
        if not (-(2**63) <= value < 2**63):
            raise StoreError(f"column {col.name!r}: value {value} outside 64-bit range")
    else:
        if not isinstance(value, str):
            raise StoreError(f"column {col.name!r} expects text, got {value!r}")
    return value


class Store:
    """Single-writer store; `snapshot()` hands immutable-by-convention copies to readers."""

    def __init__(self):
        self.tables: dict[str, TableDef] = {}
        self._rows: dict[str, list[Row]] = {}
        self._pk: dict[str, dict[Value, int]] = {}

    # -- schema & data -----------------------------------------------------

    def create_table(self, table: TableDef) -> None:
        if table.name in self.tables:
            raise StoreError(f"table {table.name!r} already defined")
        self.tables[table.name] = table
        self._rows[table.name] = []
        self._pk[table.name] = {}

    def insert_rows(self, table_name: str, rows: Iterable[Sequence[Value]]) -> int:
        table = self._table(table_name)
        count = 0
        for raw in rows:
            if len(raw) != len(table.columns):
                raise StoreError(
                    f"table {table_name!r}: row arity {len(raw)} != {len(table.columns)}"
                )
            row = tuple(check_value(col, v) for col, v in zip(table.columns, raw))
            if table.primary_key is not None:
                key = row[table.column_index(table.primary_key)]
                if key in self._pk[table_name]:
                    raise StoreError(f"table {table_name!r}: duplicate primary key {key!r}")
                self._pk[table_name][key] = len(self._rows[table_name])
            self._rows[table_name].append(row)
            count += 1
        return count

    def load_csv(self, table_name: str, text: str) -> int:
        table = self._table(table_name)
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise StoreError(f"table {table_name!r}: empty CSV") from None
        expected = [c.name for c in table.columns]
        if header != expected:
            raise StoreError(
                f"table {table_name!r}: CSV header {header!r} does not match columns {expected!r}"
            )
        rows = []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(table.columns):
                raise StoreError(f"table {table_name!r}: line {lineno}: wrong field count")
            parsed = []
            for col, cell in zip(table.columns, record):
                try:
                    parsed.append(_parse_cell(col, cell))
                except StoreError as exc:
                    raise StoreError(f"table {table_name!r}: line {lineno}: {exc}") from None
            rows.append(parsed)
        return self.insert_rows(table_name, rows)

    def export_csv(self, table_name: str) -> str:
        table = self._table(table_name)
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow([c.name for c in table.columns])
        for row in self._rows[table_name]:
            writer.writerow([_format_cell(v) for v in row])
        return out.getvalue()

    def apply_deltas(self, deltas: Iterable[Delta]) -> None:
        for delta in deltas:
            table = self._table(delta.table)
            if table.primary_key is None:
                raise StoreError(f"table {delta.table!r} has no primary key; cannot address rows")
            idx = self._pk[delta.table].get(delta.row_key)
            if idx is None:
                raise StoreError(f"table {delta.table!r}: no row with key {delta.row_key!r}")
            col_idx = table.column_index(delta.column)
            col = table.columns[col_idx]
            if not col.is_variable:
                raise StoreError(f"column {delta.column!r} is not a decision column")
            value = check_value(col, delta.new_value)
            row = list(self._rows[delta.table][idx])
            row[col_idx] = value
            self._rows[delta.table][idx] = tuple(row)

    # -- reads ---------------------------------------------------------------

    def relation(self, table_name: str) -> Relation:
        table = self._table(table_name)
        return Relation(table, list(self._rows[table_name]))

    def row_count(self, table_name: str) -> int:
        return len(self._rows[self._table(table_name).name])

    def rows(self, table_name: str) -> list[Row]:
        return self._rows[self._table(table_name).name]

    def primary_key_of(self, table_name: str, row: Row) -> Value:
        table = self._table(table_name)
        if table.primary_key is None:
            return tuple(row)
        return row[table.column_index(table.primary_key)]

    def snapshot(self) -> "Store":
        copy = Store()
        copy.tables = dict(self.tables)
        copy._rows = {name: list(rows) for name, rows in self._rows.items()}
        copy._pk = {name: dict(index) for name, index in self._pk.items()}
        return copy

    def eval_input_view(self, view: ViewDef, catalog: Mapping[str, ViewDef] | None = None) -> Relation:
        return _ViewEvaluator(self, catalog or {}).evaluate(view)

    def _table(self, name: str) -> TableDef:
        if name not in self.tables:
            raise StoreError(f"unknown table {name!r}")
        return self.tables[name]


def _parse_cell(col: ColumnDef, cell: str) -> Value:
    if col.is_variable and cell == "?":
        return UNSET
    if col.dtype == INTEGER:
        try:
            return int(cell)
        except ValueError:
            raise StoreError(f"cannot parse {cell!r} as integer") from None
    if col.dtype == BOOLEAN:
        if cell == "true":
            return True
        if cell == "false":
            return False
        raise StoreError(f"cannot parse {cell!r} as boolean (true/false)")
    return cell


def _format_cell(value: Value) -> str:
    if isinstance(value, _Unset):
        return "?"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


# -- input view evaluation ----------------------------------------------------
#
# Hash joins on equality predicates where possible, dict-based group-by, and a
# sorted projection so snapshots are stable. The test suite cross-checks this
# against a deliberately naive nested-loop evaluator.


@dataclass
class _Source:
    name: str
    columns: tuple[ColumnDef, ...]
    rows: list[Row]

    def column_index(self, name: str) -> Optional[int]:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        return None


class _ViewEvaluator:
    def __init__(self, store: Store, catalog: Mapping[str, ViewDef]):
        self.store = store
        self.catalog = catalog
        self._cache: dict[str, _Source] = {}

    def evaluate(self, view: ViewDef) -> Relation:
        source = self._materialize(view.name, view)
        columns = tuple(ColumnDef(c.name, c.dtype) for c in source.columns)
        rows = sorted(source.rows, key=_sort_key)
        return Relation(TableDef(view.name, columns), rows)

    # A source is a table or a (recursively evaluated) input view.
    def _source(self, name: str) -> _Source:
        if name in self._cache:
            return self._cache[name]
        if name in self.store.tables:
            table = self.store.tables[name]
            src = _Source(name, table.columns, self.store.rows(name))
        elif name in self.catalog:
            src = self._materialize(name, self.catalog[name])
        else:
            raise StoreError(f"unknown table or view {name!r}")
        self._cache[name] = src
        return src

    def _materialize(self, name: str, view: ViewDef) -> _Source:
        rows, columns = self._run_query(view.ast, outer=None)
        return _Source(name, columns, rows)

    def _run_query(self, query: QueryAst, outer: Optional[dict]) -> tuple[list[Row], tuple[ColumnDef, ...]]:
        sources = [self._source(n) for n in query.sources()]
        names = [s.name for s in sources]
        if len(set(names)) != len(names):
            raise StoreError(f"source {names!r} appears twice; self-joins are not supported")
        scope = {s.name: s for s in sources}

        bindings = self._join(query, sources, outer)
        if query.where is not None:
            bindings = [
                env for env in bindings if self._eval(query.where, scope, env, outer) is True
            ]

        if query.group_by or self._projection_has_aggregate(query):
            return self._aggregate(query, scope, bindings, outer)

        items = self._expand_projection(query, scope)
        out_rows = []
        for env in bindings:
            out_rows.append(tuple(self._eval(item.expr, scope, env, outer) for item in items))
        columns = tuple(
            ColumnDef(self._item_name(item, i), self._expr_dtype(item.expr, scope))
            for i, item in enumerate(items)
        )
        _check_unique([c.name for c in columns])
        return out_rows, columns

    def _join(self, query: QueryAst, sources: list[_Source], outer: Optional[dict]) -> list[dict]:
        scope = {s.name: s for s in sources}
        base = sources[0]
        envs = [{base.name: row} for row in base.rows]
        for join, src in zip(query.joins, sources[1:]):
            key_pair = self._hashable_join_key(join.on, scope, src)
            if key_pair is not None and outer is None:
                left_ref, right_ref = key_pair
                index: dict = {}
                right_idx = src.column_index(right_ref.column)
                for row in src.rows:
                    index.setdefault(row[right_idx], []).append(row)
                new_envs = []
                for env in envs:
                    left_src = scope[left_ref.table]
                    left_val = env[left_ref.table][left_src.column_index(left_ref.column)]
                    for row in index.get(left_val, ()):
                        merged = dict(env)
                        merged[src.name] = row
                        new_envs.append(merged)
                envs = new_envs
            else:
                new_envs = []
                for env in envs:
                    for row in src.rows:
                        merged = dict(env)
                        merged[src.name] = row
                        if self._eval(join.on, scope, merged, outer) is True:
                            new_envs.append(merged)
                envs = new_envs
        return envs

    def _hashable_join_key(self, on: sqlast.Expr, scope, src: _Source):
        """Return (left_ref, right_ref) if `on` is a plain equality usable as a hash join."""
        if not (isinstance(on, BinOp) and on.op == "="):
            return None
        left, right = on.left, on.right
        if not (isinstance(left, ColRef) and isinstance(right, ColRef)):
            return None
        left = self._resolve(left, scope)
        right = self._resolve(right, scope)
        if left is None or right is None:
            return None
        if right.table != src.name:
            left, right = right, left
        if right.table != src.name or left.table == src.name:
            return None
        return left, right

    def _aggregate(self, query: QueryAst, scope, bindings: list[dict], outer) -> tuple[list[Row], tuple[ColumnDef, ...]]:
        keys = [self._require_resolved(k, scope) for k in query.group_by]
        groups: dict[tuple, list[dict]] = {}
        order: list[tuple] = []
        for env in bindings:
            key = tuple(self._eval(k, scope, env, outer) for k in keys)
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(env)
        if not query.group_by:
            order = [()]
            groups.setdefault((), bindings)

        items = self._expand_projection(query, scope)
        out_rows = []
        for key in order:
            members = groups[key]
            if query.having is not None:
                ok = self._eval_agg_expr(query.having, scope, members, outer, key, keys)
                if ok is not True:
                    continue
            out_rows.append(
                tuple(
                    self._eval_agg_expr(item.expr, scope, members, outer, key, keys)
                    for item in items
                )
            )
        columns = tuple(
            ColumnDef(self._item_name(item, i), self._expr_dtype(item.expr, scope))
            for i, item in enumerate(items)
        )
        _check_unique([c.name for c in columns])
        return out_rows, columns

    def _projection_has_aggregate(self, query: QueryAst) -> bool:
        for item in query.projection:
            if not isinstance(item.expr, Star) and _contains_aggregate(item.expr):
                return True
        return query.having is not None

    def _eval_agg_expr(self, expr, scope, members: list[dict], outer, key: tuple, keys):
        if isinstance(expr, AggCall):
            values = [self._eval(expr.arg, scope, env, outer) for env in members]
            return _apply_aggregate(expr.func, values)
        if isinstance(expr, ColRef):
            resolved = self._require_resolved(expr, scope)
            for i, k in enumerate(keys):
                if k == resolved:
                    return key[i]
            if members:
                # Non-key column outside an aggregate: legal only when constant per
                # group (e.g. attributes of the key row); take it from any member.
                return self._eval(resolved, scope, members[0], outer)
            raise StoreError(f"column {expr.render()} referenced outside aggregate/group key")
        if isinstance(expr, BinOp):
            left = self._eval_agg_expr(expr.left, scope, members, outer, key, keys)
            right = self._eval_agg_expr(expr.right, scope, members, outer, key, keys)
            return _apply_binop(expr.op, left, right)
        if isinstance(expr, NotOp):
            value = self._eval_agg_expr(expr.operand, scope, members, outer, key, keys)
            return not value
        if isinstance(expr, (IntLit, StrLit, BoolLit)):
            return expr.value
        if isinstance(expr, ScalarSubquery):
            return self._scalar(expr.query, outer=None)
        raise StoreError(f"unsupported expression in aggregate context: {expr.render()}")

    def _expand_projection(self, query: QueryAst, scope) -> list[SelectItem]:
        items: list[SelectItem] = []
        for item in query.projection:
            if isinstance(item.expr, Star):
                for name in query.sources():
                    src = scope[name]
                    for col in src.columns:
                        items.append(SelectItem(ColRef(name, col.name)))
            else:
                resolved = self._resolve_expr(item.expr, scope)
                items.append(SelectItem(resolved, item.alias))
        return items

    def _item_name(self, item: SelectItem, index: int) -> str:
        if item.alias:
            return item.alias
        if isinstance(item.expr, ColRef):
            return item.expr.column
        return f"col{index}"

    # -- expression machinery ------------------------------------------------

    def _resolve(self, ref: ColRef, scope) -> Optional[ColRef]:
        if ref.table is not None:
            src = scope.get(ref.table)
            if src is None or src.column_index(ref.column) is None:
                return None
            return ref
        hits = [name for name, src in scope.items() if src.column_index(ref.column) is not None]
        if len(hits) == 1:
            return ColRef(hits[0], ref.column)
        return None

    def _require_resolved(self, ref: ColRef, scope) -> ColRef:
        resolved = self._resolve(ref, scope)
        if resolved is None:
            raise StoreError(f"cannot resolve column {ref.render()}")
        return resolved

    def _resolve_expr(self, expr, scope):
        if isinstance(expr, ColRef):
            return self._require_resolved(expr, scope)
        return expr

    def _expr_dtype(self, expr, scope) -> str:
        if isinstance(expr, ColRef):
            resolved = self._require_resolved(expr, scope)
            src = scope[resolved.table]
            return src.columns[src.column_index(resolved.column)].dtype
        if isinstance(expr, IntLit):
            return INTEGER
        if isinstance(expr, StrLit):
            return TEXT
        if isinstance(expr, BoolLit):
            return BOOLEAN
        if isinstance(expr, AggCall):
            return BOOLEAN if expr.func == "all_different" else INTEGER
        if isinstance(expr, BinOp):
            return INTEGER if expr.op in sqlast.ARITH_OPS else BOOLEAN
        if isinstance(expr, NotOp):
            return BOOLEAN
        if isinstance(expr, (InSubquery,)):
            return BOOLEAN
        if isinstance(expr, ScalarSubquery):
            return INTEGER
        raise StoreError(f"cannot type expression {expr!r}")

    def _eval(self, expr, scope, env: dict, outer: Optional[dict]):
        if isinstance(expr, ColRef):
            resolved = self._resolve(expr, scope)
            if resolved is not None and resolved.table in env:
                src = scope[resolved.table]
                value = env[resolved.table][src.column_index(resolved.column)]
            elif resolved is not None and outer is None:
                raise StoreError(
                    f"column {expr.render()} referenced before its source is joined"
                )
            elif outer is not None and resolved is None:
                value = self._eval(expr, outer["scope"], outer["env"], outer.get("outer"))
            else:
                raise StoreError(f"cannot resolve column {expr.render()}")
            if isinstance(value, _Unset):
                raise StoreError(
                    f"variable column in input view: {expr.render()} holds an unset cell"
                )
            return value
        if isinstance(expr, (IntLit, StrLit, BoolLit)):
            return expr.value
        if isinstance(expr, BinOp):
            if expr.op == "and":
                return self._eval(expr.left, scope, env, outer) is True and self._eval(
                    expr.right, scope, env, outer
                ) is True
            if expr.op == "or":
                return self._eval(expr.left, scope, env, outer) is True or self._eval(
                    expr.right, scope, env, outer
                ) is True
            left = self._eval(expr.left, scope, env, outer)
            right = self._eval(expr.right, scope, env, outer)
            return _apply_binop(expr.op, left, right)
        if isinstance(expr, NotOp):
            return not self._eval(expr.operand, scope, env, outer)
        if isinstance(expr, InSubquery):
            needle = self._eval(expr.needle, scope, env, outer)
            inner = {"scope": scope, "env": env, "outer": outer}
            rows, columns = self._run_query(expr.query, outer=inner)
            if len(columns) != 1:
                raise StoreError("IN subquery must project a single column")
            found = any(row[0] == needle for row in rows)
            return (not found) if expr.negated else found
        if isinstance(expr, ScalarSubquery):
            return self._scalar(expr.query, outer=None)
        if isinstance(expr, AggCall):
            raise StoreError(f"aggregate {expr.render()} outside group context")
        raise StoreError(f"unsupported expression {expr!r}")

    def _scalar(self, query: QueryAst, outer) -> int:
        rows, columns = self._run_query(query, outer)
        if len(columns) != 1 or len(rows) != 1:
            raise StoreError("scalar subquery must yield exactly one row and column")
        return rows[0][0]


def _apply_aggregate(func: str, values: list):
    if func == "count":
        return len(values)
    if func == "sum":
        return sum(values)
    if func == "min":
        if not values:
            raise StoreError("min over empty group")
        return min(values)
    if func == "max":
        if not values:
            raise StoreError("max over empty group")
        return max(values)
    if func == "all_different":
        return len(set(values)) == len(values)
    raise StoreError(f"unknown aggregate {func!r}")


def _apply_binop(op: str, left, right):
    if op in ("+", "-", "*"):
        if isinstance(left, bool) or isinstance(right, bool):
            raise StoreError(f"arithmetic on booleans: {left!r} {op} {right!r}")
        if not isinstance(left, int) or not isinstance(right, int):
            raise StoreError(f"arithmetic needs integers: {left!r} {op} {right!r}")
        return {"+": left + right, "-": left - right, "*": left * right}[op]
    if op in ("=", "!="):
        result = left == right
        return result if op == "=" else not result
    if op in ("<", "<=", ">", ">="):
        if isinstance(left, bool) or isinstance(right, bool) or not isinstance(left, int) or not isinstance(right, int):
            raise StoreError(f"ordering comparison needs integers: {left!r} {op} {right!r}")
        return {"<": left < right, "<=": left <= right, ">": left > right, ">=": left >= right}[op]
    raise StoreError(f"unknown operator {op!r}")


def _contains_aggregate(expr) -> bool:
    """True if the expression has an aggregate call outside any subquery."""
    if isinstance(expr, AggCall):
        return True
    if isinstance(expr, BinOp):
        return _contains_aggregate(expr.left) or _contains_aggregate(expr.right)
    if isinstance(expr, NotOp):
        return _contains_aggregate(expr.operand)
    return False


def _sort_key(row: Row):
    return tuple((str(type(v).__name__), v) for v in row)


def _check_unique(names: list[str]):
    if len(set(names)) != len(names):
        raise StoreError(f"duplicate output column names: {names!r}")
