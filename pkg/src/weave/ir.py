"""Comprehension IR: lowered views, subquery unnesting, qualifier splitting.

A view becomes ``[head | binder <- source, ...; qualifiers]``. Join predicates
and WHERE conjuncts all land in the qualifier list (split on top-level AND).
Unnesting replaces IN subqueries with membership atoms over value sets that
are computed once per grounding, keyed by their correlation columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .errors import CompileError
from .relstore import Store
from .sqlast import (
    AUX,
    INPUT,
    AggCall,
    BinOp,
    BoolLit,
    ColRef,
    Expr,
    InSubquery,
    IntLit,
    NotOp,
    QueryAst,
    ScalarSubquery,
    SelectItem,
    Star,
    StrLit,
    ViewDef,
    conjuncts,
)
from .sqlfront import Program


@dataclass(frozen=True)
class Generator:
    binder: str
    source: str  # table, input view, or aux view; binder == source (no aliases)


@dataclass(frozen=True)
class ValueSetSpec:
    """A bind-time-computable set for membership atoms.

    ``query`` projects the correlation columns followed by the value column and
    carries no correlation conjuncts; grouping by the leading columns yields a
    keyed lookup.
    """

    query: QueryAst
    correlation: tuple[Expr, ...]  # outer key expressions, possibly empty

    @property
    def keyed(self) -> bool:
        return bool(self.correlation)


@dataclass(frozen=True)
class SetMembership:
    """needle IN value-set (or NOT IN). Appears as a leaf inside qualifier trees."""

    needle: Expr
    set_id: int
    negated: bool = False

    def render(self) -> str:
        op = "not in" if self.negated else "in"
        return f"({self.needle.render()} {op} S{self.set_id})"


Qual = Union[Expr, SetMembership]


@dataclass
class Comprehension:
    view_name: str
    klass: str
    head: tuple[SelectItem, ...]
    generators: tuple[Generator, ...]
    qualifiers: list
    group_key: tuple[ColRef, ...] = ()
    having: Optional[Expr] = None
    value_sets: list[ValueSetSpec] = field(default_factory=list)

    def render(self) -> str:
        gens = ", ".join(f"{g.binder} <- {g.source}" for g in self.generators)
        quals = ", ".join(_render_qual(q) for q in self.qualifiers)
        head = ", ".join(item.render() for item in self.head)
        text = f"[{head} | {gens}"
        if quals:
            text += f"; {quals}"
        if self.group_key:
            text += "; group by " + ", ".join(k.render() for k in self.group_key)
        if self.having is not None:
            text += "; having " + self.having.render()
        return text + "]"


@dataclass
class QualifierSplit:
    static_part: list
    dynamic_part: list


def _render_qual(qual) -> str:
    return qual.render()


def lower(view: ViewDef, program: Program) -> Comprehension:
    """Joins become generator pairs; ON and WHERE conjuncts become qualifiers."""
    ast = view.ast
    generators = tuple(Generator(name, name) for name in ast.sources())
    quals: list = []
    for join in ast.joins:
        quals.extend(conjuncts(join.on))
    quals.extend(conjuncts(ast.where))
    for gen in generators:
        if gen.source not in program.tables and gen.source not in program.schemas:
            raise CompileError(f"view {view.name!r}: unknown source {gen.source!r}")
    return Comprehension(
        view_name=view.name,
        klass=view.klass or "",
        head=ast.projection,
        generators=generators,
        qualifiers=quals,
        group_key=ast.group_by,
        having=ast.having,
    )


def unnest(comp: Comprehension, program: Program) -> Comprehension:
    """Replace IN subqueries by membership atoms over precomputed value sets."""
    out = Comprehension(
        view_name=comp.view_name,
        klass=comp.klass,
        head=comp.head,
        generators=comp.generators,
        qualifiers=[],
        group_key=comp.group_key,
        having=comp.having,
        value_sets=list(comp.value_sets),
    )
    inner_scope = {g.source for g in comp.generators}
    for qual in comp.qualifiers:
        out.qualifiers.append(_unnest_expr(qual, out, inner_scope, program))
    if comp.having is not None:
        out.having = _unnest_expr(comp.having, out, inner_scope, program)
    return out


def _unnest_expr(expr, comp: Comprehension, outer_sources: set, program: Program):
    if isinstance(expr, SetMembership) or isinstance(expr, (ColRef, IntLit, StrLit, BoolLit)):
        return expr
    if isinstance(expr, BinOp):
        return BinOp(
            expr.op,
            _unnest_expr(expr.left, comp, outer_sources, program),
            _unnest_expr(expr.right, comp, outer_sources, program),
        )
    if isinstance(expr, NotOp):
        return NotOp(_unnest_expr(expr.operand, comp, outer_sources, program))
    if isinstance(expr, AggCall):
        return AggCall(expr.func, _unnest_expr(expr.arg, comp, outer_sources, program))
    if isinstance(expr, ScalarSubquery):
        _require_input_only(expr.query, program, context=comp.view_name)
        return expr
    if isinstance(expr, InSubquery):
        spec = _build_value_set(expr, outer_sources, program, comp.view_name)
        comp.value_sets.append(spec)
        return SetMembership(expr.needle, len(comp.value_sets) - 1, expr.negated)
    raise CompileError(f"view {comp.view_name!r}: unsupported expression {expr!r}")


def _build_value_set(expr: InSubquery, outer_sources: set, program: Program, view_name: str) -> ValueSetSpec:
    query = expr.query
    _require_input_only(query, program, context=view_name)
    inner_sources = set(query.sources())
    correlation_outer: list[Expr] = []
    correlation_inner: list[ColRef] = []
    rest: list[Expr] = []
    for conj in conjuncts(query.where):
        pair = _correlation_pair(conj, inner_sources)
        if pair is None:
            _require_no_outer_refs(conj, inner_sources, view_name)
            rest.append(conj)
            continue
        outer_expr, inner_col = pair
        if _references_variable(outer_expr, program):
            raise CompileError(
                f"view {view_name!r}: correlation must be on input columns, "
                f"got {outer_expr.render()}"
            )
        correlation_outer.append(outer_expr)
        correlation_inner.append(inner_col)
    if len(query.projection) != 1 or isinstance(query.projection[0].expr, Star):
        raise CompileError(f"view {view_name!r}: IN subquery must project one column")
    value_item = query.projection[0]
    projection = tuple(
        [SelectItem(col, alias=f"corr{i}") for i, col in enumerate(correlation_inner)]
        + [SelectItem(value_item.expr, alias="value")]
    )
    where = None
    for conj in rest:
        where = conj if where is None else BinOp("and", where, conj)
    stripped = QueryAst(projection, query.base, query.joins, where, (), None)
    return ValueSetSpec(stripped, tuple(correlation_outer))


def _correlation_pair(conj, inner_sources: set):
    if not (isinstance(conj, BinOp) and conj.op == "="):
        return None
    left_outer = _is_outer_ref(conj.left, inner_sources)
    right_outer = _is_outer_ref(conj.right, inner_sources)
    if left_outer and not right_outer and isinstance(conj.right, ColRef):
        return conj.left, conj.right
    if right_outer and not left_outer and isinstance(conj.left, ColRef):
        return conj.right, conj.left
    return None


def _is_outer_ref(expr, inner_sources: set) -> bool:
    return isinstance(expr, ColRef) and expr.table is not None and expr.table not in inner_sources


def _require_no_outer_refs(expr, inner_sources: set, view_name: str):
    from .sqlast import walk_expr

    for node in walk_expr(expr):
        if _is_outer_ref(node, inner_sources):
            raise CompileError(
                f"view {view_name!r}: only equality correlation is supported, "
                f"found outer reference {node.render()}"
            )


def _require_input_only(query: QueryAst, program: Program, context: str):
    for name in query.sources():
        if name in program.tables:
            continue
        view = program.by_name(name)
        if view.klass != INPUT:
            raise CompileError(
                f"view {context!r}: subquery ranges over {name!r} which depends on "
                "decision columns; rewrite the policy"
            )
    from .sqlast import walk_query

    for node in walk_query(query):
        if _references_variable(node, program):
            raise CompileError(
                f"view {context!r}: subquery references decision column {node.render()}"
            )


def _references_variable(expr, program: Program) -> bool:
    from .sqlast import walk_expr

    for node in walk_expr(expr) if not isinstance(expr, ColRef) else [expr]:
        if isinstance(node, ColRef) and node.table in program.tables:
            col = program.tables[node.table].column(node.column)
            if col.is_variable:
                return True
    return False


# -- qualifier splitting --------------------------------------------------------


def tainted_binders(comp: Comprehension, program: Program) -> set[str]:
    """Binders whose rows are selected through decision values.

    A generator joined (by a top-level equality) to a decision column is
    tainted, as is anything equality-linked to a tainted binder; qualifiers over
    tainted binders are enforced, not filtered.
    """
    tainted: set[str] = set()
    edges: list[tuple[set, set]] = []  # (binders on var side, binders on other side)
    for qual in comp.qualifiers:
        if not (isinstance(qual, BinOp) and qual.op == "="):
            continue
        left_vars = _expr_has_variable(qual.left, program)
        right_vars = _expr_has_variable(qual.right, program)
        if left_vars and not right_vars:
            tainted |= _expr_binders(qual.right, program)
        elif right_vars and not left_vars:
            tainted |= _expr_binders(qual.left, program)
        elif not left_vars and not right_vars:
            edges.append((_expr_binders(qual.left, program), _expr_binders(qual.right, program)))
    changed = True
    while changed:
        changed = False
        for a, b in edges:
            if a & tainted and not b <= tainted:
                tainted |= b
                changed = True
            if b & tainted and not a <= tainted:
                tainted |= a
                changed = True
    return tainted


def _expr_binders(expr, program: Program) -> set[str]:
    from .sqlast import walk_expr

    out = set()
    for node in walk_expr(expr):
        if isinstance(node, ColRef) and node.table is not None:
            out.add(node.table)
    return out


def _expr_has_variable(expr, program: Program) -> bool:
    return _references_variable(expr, program)


def is_dynamic_qual(qual, comp: Comprehension, program: Program, tainted: set[str]) -> bool:
    if isinstance(qual, SetMembership):
        return is_dynamic_expr(qual.needle, program, tainted)
    return is_dynamic_expr(qual, program, tainted)


def is_dynamic_expr(expr, program: Program, tainted: set[str]) -> bool:
    from .sqlast import walk_expr

    for node in walk_expr(expr):
        if isinstance(node, SetMembership):
            if is_dynamic_expr(node.needle, program, tainted):
                return True
        if not isinstance(node, ColRef) or node.table is None:
            continue
        if node.table in tainted:
            return True
        if node.table in program.tables:
            if program.tables[node.table].column(node.column).is_variable:
                return True
        else:
            view = program.by_name(node.table)
            if view.klass == AUX:
                # Aux key columns are concrete; aux value columns are derived.
                if not _is_aux_key_column(view, node.column, program):
                    return True
    return False


def _is_aux_key_column(view: ViewDef, column: str, program: Program) -> bool:
    """Aux output columns that restate group keys are concrete at bind time."""
    ast = view.ast
    key_names = set()
    for item in ast.projection:
        if isinstance(item.expr, Star):
            continue
        name = item.alias or (item.expr.column if isinstance(item.expr, ColRef) else None)
        if name is None:
            continue
        if isinstance(item.expr, ColRef) and item.expr in ast.group_by:
            key_names.add(name)
    return column in key_names


def split_qualifiers(comp: Comprehension, program: Program) -> QualifierSplit:
    """Partition qualifiers into bind-time filters and enforced constraints."""
    tainted = tainted_binders(comp, program)
    static_part, dynamic_part = [], []
    for qual in comp.qualifiers:
        if is_dynamic_qual(qual, comp, program, tainted):
            dynamic_part.append(qual)
        else:
            static_part.append(qual)
    return QualifierSplit(static_part, dynamic_part)


# -- direct evaluation (tests and ground checks) ---------------------------------


def evaluate(comp: Comprehension, store: Store, program: Program) -> list[tuple]:
    """Evaluate a comprehension over a store with no unset cells in reach.

    Nested-loop semantics; used as an oracle for input views and for checking
    that unnesting preserves meaning on fully-ground stores.
    """
    sets = [_eval_value_set(spec, store, program) for spec in comp.value_sets]
    sources = {}
    for gen in comp.generators:
        sources[gen.source] = _source_rows(gen.source, store, program)

    bindings = [dict()]
    for gen in comp.generators:
        cols, rows = sources[gen.source]
        bindings = [dict(env, **{gen.binder: row}) for env in bindings for row in rows]

    def colval(env, ref: ColRef):
        cols, _ = sources[ref.table]
        return env[ref.table][cols.index(ref.column)]

    def ev(env, expr):
        if isinstance(expr, ColRef):
            return colval(env, expr)
        if isinstance(expr, (IntLit, StrLit, BoolLit)):
            return expr.value
        if isinstance(expr, NotOp):
            return not ev(env, expr.operand)
        if isinstance(expr, BinOp):
            if expr.op == "and":
                return ev(env, expr.left) is True and ev(env, expr.right) is True
            if expr.op == "or":
                return ev(env, expr.left) is True or ev(env, expr.right) is True
            from .relstore import _apply_binop

            return _apply_binop(expr.op, ev(env, expr.left), ev(env, expr.right))
        if isinstance(expr, SetMembership):
            needle = ev(env, expr.needle)
            keyed, lookup = sets[expr.set_id]
            if keyed:
                key = tuple(ev(env, k) for k in comp.value_sets[expr.set_id].correlation)
                members = lookup.get(key, frozenset())
            else:
                members = lookup
            return (needle not in members) if expr.negated else (needle in members)
        if isinstance(expr, ScalarSubquery):
            return _eval_scalar(expr.query, store, program)
        raise CompileError(f"cannot evaluate {expr!r}")

    bindings = [env for env in bindings if all(ev(env, q) is True for q in comp.qualifiers)]

    if not comp.group_key and not any(
        not isinstance(i.expr, Star) and _has_aggregate(i.expr) for i in comp.head
    ):
        out = []
        for env in bindings:
            row = []
            for item in comp.head:
                if isinstance(item.expr, Star):
                    for gen in comp.generators:
                        row.extend(env[gen.binder])
                else:
                    row.append(ev(env, item.expr))
            out.append(tuple(row))
        return sorted(out, key=_row_key)

    groups: dict[tuple, list] = {}
    for env in bindings:
        key = tuple(ev(env, k) for k in comp.group_key)
        groups.setdefault(key, []).append(env)
    if not comp.group_key:
        groups.setdefault((), [])

    def ev_agg(members, expr, key):
        if isinstance(expr, AggCall):
            values = [ev(env, expr.arg) for env in members]
            from .relstore import _apply_aggregate

            return _apply_aggregate(expr.func, values)
        if isinstance(expr, ColRef):
            for i, k in enumerate(comp.group_key):
                if k == expr:
                    return key[i]
            if members:
                return ev(members[0], expr)
            raise CompileError(f"{expr.render()} outside aggregate over empty group")
        if isinstance(expr, BinOp):
            from .relstore import _apply_binop

            if expr.op in ("and", "or"):
                left = ev_agg(members, expr.left, key)
                right = ev_agg(members, expr.right, key)
                return (left and right) if expr.op == "and" else (left or right)
            return _apply_binop(expr.op, ev_agg(members, expr.left, key), ev_agg(members, expr.right, key))
        if isinstance(expr, NotOp):
            return not ev_agg(members, expr.operand, key)
        if isinstance(expr, (IntLit, StrLit, BoolLit)):
            return expr.value
        if isinstance(expr, ScalarSubquery):
            return _eval_scalar(expr.query, store, program)
        raise CompileError(f"cannot evaluate aggregate expression {expr!r}")

    out = []
    for key in groups:
        members = groups[key]
        if comp.having is not None and ev_agg(members, comp.having, key) is not True:
            continue
        row = tuple(ev_agg(members, item.expr, key) for item in comp.head)
        out.append(row)
    return sorted(out, key=_row_key)


def _has_aggregate(expr) -> bool:
    if isinstance(expr, AggCall):
        return True
    if isinstance(expr, BinOp):
        return _has_aggregate(expr.left) or _has_aggregate(expr.right)
    if isinstance(expr, NotOp):
        return _has_aggregate(expr.operand)
    return False


def _source_rows(name: str, store: Store, program: Program):
    if name in program.tables:
        table = program.tables[name]
        return [c.name for c in table.columns], store.rows(name)
    view = program.by_name(name)
    if view.klass == INPUT:
        catalog = {v.name: v for v in program.views}
        rel = store.eval_input_view(view, catalog)
        return [c.name for c in rel.table.columns], rel.rows
    inner = unnest(lower(view, program), program)
    rows = evaluate(inner, store, program)
    return [c.name for c in program.schemas[name]], rows


def _eval_value_set(spec: ValueSetSpec, store: Store, program: Program):
    catalog = {v.name: v for v in program.views}
    rel = store.eval_input_view(ViewDef("<set>", spec.query, INPUT), catalog)
    if spec.keyed:
        lookup: dict[tuple, set] = {}
        for row in rel.rows:
            lookup.setdefault(tuple(row[:-1]), set()).add(row[-1])
        return True, lookup
    return False, {row[-1] for row in rel.rows}


def _eval_scalar(query: QueryAst, store: Store, program: Program) -> int:
    catalog = {v.name: v for v in program.views}
    rel = store.eval_input_view(ViewDef("<scalar>", query, INPUT), catalog)
    if len(rel.rows) != 1 or len(rel.rows[0]) != 1:
        raise CompileError("scalar subquery must produce exactly one value")
    return rel.rows[0][0]


def _row_key(row):
    return tuple((str(type(v).__name__), v) for v in row)
