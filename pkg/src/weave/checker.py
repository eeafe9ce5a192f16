"""Ground checker: re-evaluates hard views on concrete store values.

Completely separate from the solver pipeline: no interning, no constraint
nodes, just nested-loop evaluation of each hard view's for-all semantics. A
binding that reads an unset decision cell is vacuous (an unplaced row joins
nothing). Also provides a naive query evaluator used as the reference oracle
for the store's input-view evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import ir
from .errors import WeaveError
from .relstore import Store, _Unset
from .sqlast import (
    AUX,
    HARD,
    AggCall,
    BinOp,
    BoolLit,
    ColRef,
    InSubquery,
    IntLit,
    NotOp,
    QueryAst,
    ScalarSubquery,
    Star,
    StrLit,
    ViewDef,
)
from .sqlfront import Program


@dataclass(frozen=True)
class Violation:
    view: str
    row_keys: tuple

    def render(self) -> str:
        return f"{self.view}{list(self.row_keys)}"


class _SkipBinding(Exception):
    """Raised when evaluation reads an unset decision cell."""


class _Eval:
    def __init__(self, store: Store, program: Program):
        self.store = store
        self.program = program
        self._rows_cache: dict[str, tuple[list[str], list[tuple]]] = {}

    def source_rows(self, name: str) -> tuple[list[str], list[tuple]]:
        if name in self._rows_cache:
            return self._rows_cache[name]
        if name in self.program.tables:
            table = self.program.tables[name]
            result = ([c.name for c in table.columns], list(self.store.rows(name)))
        else:
            view = self.program.by_name(name)
            result = (
                [c.name for c in self.program.schemas[name]],
                self.view_rows(view),
            )
        self._rows_cache[name] = result
        return result

    def view_rows(self, view: ViewDef) -> list[tuple]:
        """Plain SQL semantics: rows satisfying every join and where predicate."""
        q = view.ast
        out = []
        for env in self._bindings(q, require=None):
            out.append(env)
        if q.group_by or self._has_aggregate(q):
            return self._grouped_rows(q, out)
        rows = []
        for env in out:
            try:
                rows.append(tuple(self._project(q, env)))
            except _SkipBinding:
                continue
        return rows

    def _bindings(self, q: QueryAst, require):
        """Bindings that satisfy joins+where (require=None) or joins only."""
        envs: list[dict] = [dict()]
        for name in q.sources():
            cols, rows = self.source_rows(name)
            envs = [dict(env, **{name: row}) for env in envs for row in rows]
        kept = []
        for env in envs:
            try:
                ok = True
                for join in q.joins:
                    if self.eval(join.on, q, env) is not True:
                        ok = False
                        break
                if ok and require is None and q.where is not None:
                    if self.eval(q.where, q, env) is not True:
                        ok = False
                if ok:
                    kept.append(env)
            except _SkipBinding:
                continue
        return kept

    def _has_aggregate(self, q: QueryAst) -> bool:
        def walk(expr) -> bool:
            if isinstance(expr, AggCall):
                return True
            if isinstance(expr, BinOp):
                return walk(expr.left) or walk(expr.right)
            if isinstance(expr, NotOp):
                return walk(expr.operand)
            return False

        return any(
            not isinstance(i.expr, Star) and walk(i.expr) for i in q.projection
        ) or q.having is not None

    def _grouped_rows(self, q: QueryAst, envs: list[dict]) -> list[tuple]:
        groups: dict[tuple, list[dict]] = {}
        order = []
        for env in envs:
            try:
                key = tuple(self.eval(k, q, env) for k in q.group_by)
            except _SkipBinding:
                continue
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(env)
        rows = []
        for key in order:
            members = groups[key]
            if q.having is not None:
                if self.eval_agg(q.having, q, members, key) is not True:
                    continue
            rows.append(
                tuple(
                    self.eval_agg(item.expr, q, members, key)
                    for item in q.projection
                    if not isinstance(item.expr, Star)
                )
            )
        return rows

    def _project(self, q: QueryAst, env: dict):
        for item in q.projection:
            if isinstance(item.expr, Star):
                for name in q.sources():
                    cols, _ = self.source_rows(name)
                    for i, _ in enumerate(cols):
                        value = env[name][i]
                        if isinstance(value, _Unset):
                            raise _SkipBinding
                        yield value
            else:
                yield self.eval(item.expr, q, env)

    def _resolve(self, ref: ColRef, q: QueryAst, env: dict):
        if ref.table is not None and ref.table in env:
            cols, _ = self.source_rows(ref.table)
            value = env[ref.table][cols.index(ref.column)]
            if isinstance(value, _Unset):
                raise _SkipBinding
            return value
        if ref.table is None:
            hits = []
            for name in q.sources():
                cols, _ = self.source_rows(name)
                if ref.column in cols:
                    hits.append(name)
            if len(hits) == 1:
                return self._resolve(ColRef(hits[0], ref.column), q, env)
        raise WeaveError(f"checker: cannot resolve {ref.render()}")

    def eval(self, expr, q: QueryAst, env: dict, outer: Optional[tuple] = None):
        if isinstance(expr, ColRef):
            if expr.table is not None and expr.table not in env and outer is not None:
                outer_q, outer_env, outer_outer = outer
                return self.eval(expr, outer_q, outer_env, outer_outer)
            return self._resolve(expr, q, env)
        if isinstance(expr, (IntLit, StrLit, BoolLit)):
            return expr.value
        if isinstance(expr, NotOp):
            return not self.eval(expr.operand, q, env, outer)
        if isinstance(expr, BinOp):
            if expr.op == "and":
                return (
                    self.eval(expr.left, q, env, outer) is True
                    and self.eval(expr.right, q, env, outer) is True
                )
            if expr.op == "or":
                return (
                    self.eval(expr.left, q, env, outer) is True
                    or self.eval(expr.right, q, env, outer) is True
                )
            from .relstore import _apply_binop

            return _apply_binop(
                expr.op,
                self.eval(expr.left, q, env, outer),
                self.eval(expr.right, q, env, outer),
            )
        if isinstance(expr, InSubquery):
            needle = self.eval(expr.needle, q, env, outer)
            found = False
            for row in self._subquery_rows(expr.query, (q, env, outer)):
                if row[0] == needle:
                    found = True
                    break
            return (not found) if expr.negated else found
        if isinstance(expr, ScalarSubquery):
            rows = self._subquery_rows(expr.query, None)
            if len(rows) != 1 or len(rows[0]) != 1:
                raise WeaveError("checker: scalar subquery must yield one value")
            return rows[0][0]
        if isinstance(expr, AggCall):
            raise WeaveError("checker: aggregate outside group context")
        raise WeaveError(f"checker: cannot evaluate {expr!r}")

    def _subquery_rows(self, q: QueryAst, outer) -> list[tuple]:
        envs: list[dict] = [dict()]
        for name in q.sources():
            cols, rows = self.source_rows(name)
            envs = [dict(env, **{name: row}) for env in envs for row in rows]
        out = []
        for env in envs:
            try:
                ok = True
                for join in q.joins:
                    if self.eval(join.on, q, env, outer) is not True:
                        ok = False
                        break
                if ok and q.where is not None:
                    if self.eval(q.where, q, env, outer) is not True:
                        ok = False
                if ok:
                    out.append(tuple(self._project_sub(q, env, outer)))
            except _SkipBinding:
                continue
        return out

    def _project_sub(self, q: QueryAst, env: dict, outer):
        for item in q.projection:
            if isinstance(item.expr, Star):
                raise WeaveError("checker: subquery must project explicit columns")
            yield self.eval(item.expr, q, env, outer)

    def eval_agg(self, expr, q: QueryAst, members: list[dict], key: tuple):
        if isinstance(expr, AggCall):
            values = []
            for env in members:
                values.append(self.eval(expr.arg, q, env))
            from .relstore import _apply_aggregate

            return _apply_aggregate(expr.func, values)
        if isinstance(expr, ColRef):
            for i, k in enumerate(q.group_by):
                if k == expr:
                    return key[i]
            if members:
                return self.eval(expr, q, members[0])
            raise WeaveError(f"checker: {expr.render()} outside group key")
        if isinstance(expr, BinOp):
            if expr.op in ("and", "or"):
                left = self.eval_agg(expr.left, q, members, key)
                right = self.eval_agg(expr.right, q, members, key)
                return (left and right) if expr.op == "and" else (left or right)
            from .relstore import _apply_binop

            return _apply_binop(
                expr.op,
                self.eval_agg(expr.left, q, members, key),
                self.eval_agg(expr.right, q, members, key),
            )
        if isinstance(expr, NotOp):
            return not self.eval_agg(expr.operand, q, members, key)
        if isinstance(expr, (IntLit, StrLit, BoolLit)):
            return expr.value
        if isinstance(expr, ScalarSubquery):
            return self.eval(expr, q, {})
        raise WeaveError(f"checker: cannot evaluate aggregate {expr!r}")


def _row_key(store: Store, program: Program, name: str, env_row) -> tuple:
    if name in program.tables:
        return (store.primary_key_of(name, env_row),)
    return (tuple(env_row),)


def check_hard_views(store: Store, program: Program) -> list[Violation]:
    """All hard-view violations on the store's current concrete values."""
    ev = _Eval(store, program)
    violations: list[Violation] = []
    for view in program.views:
        if view.klass != HARD:
            continue
        q = view.ast
        if q.group_by or ev._has_aggregate(q):
            violations.extend(_check_grouped(ev, store, program, view))
            continue
        # For-all semantics: a binding that satisfies the join predicates must
        # satisfy the whole where clause.
        for env in ev._bindings(q, require="joins"):
            try:
                if q.where is not None and ev.eval(q.where, q, env) is not True:
                    keys = tuple(
                        part
                        for name in q.sources()
                        for part in _row_key(store, program, name, env[name])
                    )
                    violations.append(Violation(view.name, keys))
            except _SkipBinding:
                continue
    return violations


def _check_grouped(ev: _Eval, store: Store, program: Program, view: ViewDef) -> list[Violation]:
    q = view.ast
    groups: dict[tuple, list[dict]] = {}
    order: list[tuple] = []
    for env in ev._bindings(q, require=None):
        try:
            key = tuple(ev.eval(k, q, env) for k in q.group_by)
        except _SkipBinding:
            continue
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(env)
    out = []
    for key in order:
        members = groups[key]
        ok = True
        if q.having is not None:
            ok = ev.eval_agg(q.having, q, members, key) is True
        if ok:
            for item in q.projection:
                if isinstance(item.expr, Star):
                    continue
                value = ev.eval_agg(item.expr, q, members, key)
                if value is False:
                    ok = False  # e.g. all_different head
                    break
        if not ok:
            out.append(Violation(view.name, key))
    return out


def naive_query_rows(store: Store, program: Program, view: ViewDef) -> list[tuple]:
    """Reference nested-loop evaluation; oracle for the store's evaluator."""
    rows = _Eval(store, program).view_rows(view)
    return sorted(rows, key=lambda r: tuple((str(type(v).__name__), v) for v in r))
