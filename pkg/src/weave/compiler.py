"""Model synthesis and grounding.

`synthesize` turns classified views into per-view constraint schemes over the
comprehension IR. `bind` instantiates a template against a store snapshot:
decision variables for in-scope cells, interned categorical universes, derived
variables for auxiliary view columns, constraints with (view, row keys)
provenance, and the summed soft-view objective.

Encoding choices follow two rewrite families (toggleable for comparison runs):
counting under a decision-dependent filter becomes a sum of indicator literals
with zero auxiliary variables, and IN / all_different patterns become
membership and all_different global constraints.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from . import ir
from .errors import BindError, CompileError
from .model import (
    AllDifferent,
    BAnd,
    BConst,
    BNot,
    BOr,
    BoolExpr,
    CmpAtom,
    DERIVED,
    AUXILIARY,
    Element,
    GroundModel,
    LinearCmp,
    LinExpr,
    Lit,
    MaxOfList,
    MemberAtom,
    Membership,
    MinOfList,
    ReifiedCmp,
    Term,
    checked,
    lin_const,
    lin_lit,
    lin_var,
)
from .relstore import BOOLEAN, INTEGER, TEXT, UNSET, Relation, Store, TableDef, _Unset
from .sqlast import (
    AUX,
    HARD,
    INPUT,
    SOFT,
    AggCall,
    BinOp,
    BoolLit,
    ColRef,
    InSubquery,
    IntLit,
    NotOp,
    ScalarSubquery,
    SelectItem,
    Star,
    StrLit,
    ViewDef,
)
from .sqlfront import Program

PLAIN, JOIN_KEYED, MEMBER_KEYED, SCALAR = "plain", "join_keyed", "member_keyed", "scalar"


# -- template ---------------------------------------------------------------------


@dataclass
class Guard:
    var_ref: ColRef  # decision column
    key_ref: ColRef  # concrete column of another generator


@dataclass
class Scheme:
    view: ViewDef
    comp: ir.Comprehension
    split: ir.QualifierSplit
    guards: list[Guard]
    body: list  # dynamic qualifiers that are not guards
    flavor: str
    joined_keys: list[ColRef] = field(default_factory=list)
    static_keys: list[ColRef] = field(default_factory=list)
    key_binder: Optional[str] = None
    lookup_binders: set[str] = field(default_factory=set)
    var_refs: set[tuple[str, str]] = field(default_factory=set)  # decision cells touched
    refs_aux_values: bool = False  # body/head/having reads an aux view column


@dataclass
class VarGroupSpec:
    table: str
    column: str
    column_sources: list[tuple[str, str]] = field(default_factory=list)
    set_sources: list[tuple[str, int]] = field(default_factory=list)  # (view, set index)


@dataclass
class ModelTemplate:
    program: Program
    var_groups: dict[tuple[str, str], VarGroupSpec]
    schemes: list[Scheme]  # aux views first (dependency order), then hard, then soft
    rewrites: bool = True

    def render(self) -> str:
        lines = []
        for (table, column), spec in sorted(self.var_groups.items()):
            sources = ", ".join(f"{t}.{c}" for t, c in spec.column_sources)
            sets = ", ".join(f"{v}#S{i}" for v, i in spec.set_sources)
            extra = f" sets[{sets}]" if sets else ""
            lines.append(f"vargroup {table}.{column} :: universe[{sources}]{extra}")
        for scheme in self.schemes:
            lines.append(f"scheme {scheme.view.name} [{scheme.view.klass}/{scheme.flavor}]")
            lines.append("  " + scheme.comp.render())
        return "\n".join(lines) + "\n"


def synthesize(program: Program, rewrites: bool = True) -> ModelTemplate:
    var_groups: dict[tuple[str, str], VarGroupSpec] = {}
    for table in program.tables.values():
        for col in table.variable_columns:
            var_groups[(table.name, col.name)] = VarGroupSpec(table.name, col.name)

    schemes: list[Scheme] = []
    for view in program.views:
        if view.klass not in (HARD, SOFT, AUX):
            continue
        comp = ir.unnest(ir.lower(view, program), program)
        split = ir.split_qualifiers(comp, program)
        scheme = _analyze(view, comp, split, program)
        _collect_domain_sources(scheme, program, var_groups)
        schemes.append(scheme)

    for key, spec in var_groups.items():
        if not spec.column_sources and not spec.set_sources:
            raise CompileError(
                f"decision column {key[0]}.{key[1]} has no equality join or IN "
                "against an input column; its value universe is undefined"
            )
    ordered = (
        [s for s in schemes if s.view.klass == AUX]
        + [s for s in schemes if s.view.klass == HARD]
        + [s for s in schemes if s.view.klass == SOFT]
    )
    return ModelTemplate(program, var_groups, ordered, rewrites)


def _is_var_colref(expr, program: Program) -> bool:
    return (
        isinstance(expr, ColRef)
        and expr.table in program.tables
        and program.tables[expr.table].column(expr.column).is_variable
    )


def _analyze(view: ViewDef, comp: ir.Comprehension, split: ir.QualifierSplit, program: Program) -> Scheme:
    guards: list[Guard] = []
    body: list = []
    binders = {g.binder for g in comp.generators}
    for qual in split.dynamic_part:
        guard = _as_guard(qual, program, binders)
        if guard is not None:
            guards.append(guard)
        else:
            body.append(qual)

    var_refs: set[tuple[str, str]] = set()
    refs_aux = [False]

    def note_vars(expr):
        from .sqlast import walk_expr

        target = expr.needle if isinstance(expr, ir.SetMembership) else expr
        for node in walk_expr(target):
            if _is_var_colref(node, program):
                var_refs.add((node.table, node.column))
            elif isinstance(node, ColRef) and node.table is not None and node.table not in program.tables:
                view_ref = program.by_name(node.table)
                if view_ref.klass == AUX:
                    refs_aux[0] = True

    for guard in guards:
        var_refs.add((guard.var_ref.table, guard.var_ref.column))
    for qual in body:
        note_vars(qual)
    for item in comp.head:
        if not isinstance(item.expr, Star):
            note_vars(item.expr)
    if comp.having is not None:
        note_vars(comp.having)

    has_agg = comp.group_key or comp.having is not None or any(
        not isinstance(item.expr, Star) and _contains_agg(item.expr) for item in comp.head
    )
    if not has_agg:
        return Scheme(
            view, comp, split, guards, body, PLAIN,
            var_refs=var_refs, refs_aux_values=refs_aux[0],
        )

    guard_key_binders = {g.key_ref.table for g in guards}
    joined_keys = [k for k in comp.group_key if k.table in guard_key_binders]
    static_keys = [k for k in comp.group_key if k.table not in guard_key_binders]
    if joined_keys:
        if len({k.table for k in joined_keys}) > 1:
            raise CompileError(f"view {view.name!r}: group keys span several joined sources")
        key_binder = joined_keys[0].table
        return Scheme(
            view, comp, split, guards, body, JOIN_KEYED,
            joined_keys=joined_keys, static_keys=static_keys, key_binder=key_binder,
            var_refs=var_refs, refs_aux_values=refs_aux[0],
        )
    if comp.group_key:
        return Scheme(
            view, comp, split, guards, body, MEMBER_KEYED,
            static_keys=static_keys, lookup_binders=guard_key_binders,
            var_refs=var_refs, refs_aux_values=refs_aux[0],
        )
    return Scheme(
        view, comp, split, guards, body, SCALAR,
        lookup_binders=guard_key_binders, var_refs=var_refs, refs_aux_values=refs_aux[0],
    )


def _as_guard(qual, program: Program, binders: set[str]) -> Optional[Guard]:
    if not (isinstance(qual, BinOp) and qual.op == "="):
        return None
    left, right = qual.left, qual.right
    if _is_var_colref(left, program) and isinstance(right, ColRef):
        var_ref, key_ref = left, right
    elif _is_var_colref(right, program) and isinstance(left, ColRef):
        var_ref, key_ref = right, left
    else:
        return None
    if key_ref.table == var_ref.table:
        return None  # same-row comparison is an enforced predicate, not a join
    if _is_var_colref(key_ref, program):
        return None
    if key_ref.table not in binders:
        return None
    return Guard(var_ref, key_ref)


def _contains_agg(expr) -> bool:
    if isinstance(expr, AggCall):
        return True
    if isinstance(expr, BinOp):
        return _contains_agg(expr.left) or _contains_agg(expr.right)
    if isinstance(expr, NotOp):
        return _contains_agg(expr.operand)
    return False


def _collect_domain_sources(scheme: Scheme, program: Program, var_groups) -> None:
    for guard in scheme.guards:
        key = (guard.var_ref.table, guard.var_ref.column)
        source = (guard.key_ref.table, guard.key_ref.column)
        spec = var_groups[key]
        if source not in spec.column_sources:
            spec.column_sources.append(source)

    def scan(expr):
        if isinstance(expr, ir.SetMembership) and not expr.negated and _is_var_colref(expr.needle, program):
            key = (expr.needle.table, expr.needle.column)
            source = (scheme.view.name, expr.set_id)
            spec = var_groups[key]
            if source not in spec.set_sources:
                spec.set_sources.append(source)
        if isinstance(expr, BinOp):
            scan(expr.left)
            scan(expr.right)
        elif isinstance(expr, NotOp):
            scan(expr.operand)

    for qual in scheme.body:
        scan(qual)


# -- scope -----------------------------------------------------------------------


@dataclass
class Scope:
    """Which cells a solve may assign and how domains get widened."""

    mode: str = "pending"  # pending: unset cells only; all: every row's cells
    relax_unplaced: bool = False  # add the unplaced sentinel to pending domains
    stay_or_evict: bool = False  # placed cells become {current, unplaced}
    priority_column: Optional[str] = None
    eviction_objective: bool = False  # weighted placement objective, SQL softs dropped
    row_filter: Optional[Callable[[str, object], bool]] = None

    def covers(self, table: str, row_key, is_unset: bool) -> bool:
        if self.row_filter is not None and not self.row_filter(table, row_key):
            return False
        if self.mode == "pending":
            return is_unset
        return True


# -- grounding ---------------------------------------------------------------------


@dataclass
class GroundValue:
    kind: str  # const | lin | bool
    const: object = None
    lin: Optional[LinExpr] = None
    tree: object = None
    group: Optional[tuple[str, str]] = None  # interner tag for categorical values


def _gv_const(value, group=None) -> GroundValue:
    return GroundValue("const", const=value, group=group)


def _gv_lin(lin: LinExpr, group=None) -> GroundValue:
    return GroundValue("lin", lin=lin, group=group)


def _gv_bool(tree) -> GroundValue:
    return GroundValue("bool", tree=tree)


class Interner:
    """Bijection between column values and small ids.

    Integer columns intern to themselves so arithmetic stays meaningful; text
    columns intern in first-seen order. `freeze` reserves the unplaced slot
    right after the universe; late-seen values (stale placed cells) land past
    it so they can never collide with the sentinel.
    """

    def __init__(self, identity: bool = False):
        self.identity = identity
        self.to_id: dict[object, int] = {}
        self.id_to_value: dict[int, object] = {}
        self.unplaced_id: Optional[int] = None
        self._universe: list[int] = []
        self._next_late = 0

    def intern(self, value) -> int:
        existing = self.to_id.get(value)
        if existing is not None:
            return existing
        if self.identity:
            if isinstance(value, bool) or not isinstance(value, int):
                raise BindError(f"integer decision column got non-integer {value!r}")
            vid = value
            if self.unplaced_id is not None and vid >= self.unplaced_id:
                raise BindError(
                    f"value {value!r} arrived after the universe was frozen"
                )
        elif self.unplaced_id is None:
            vid = len(self._universe)
        else:
            vid = self._next_late
            self._next_late += 1
        self.to_id[value] = vid
        self.id_to_value[vid] = value
        if self.unplaced_id is None:
            self._universe.append(vid)
        return vid

    def freeze(self):
        if self.identity:
            self.unplaced_id = (max(self._universe) + 1) if self._universe else 0
        else:
            self.unplaced_id = len(self._universe)
        self._next_late = self.unplaced_id + 1

    def lookup(self, value) -> Optional[int]:
        return self.to_id.get(value)

    def decode(self, vid: int):
        if vid == self.unplaced_id:
            return UNSET
        return self.id_to_value.get(vid, UNSET)

    @property
    def universe_ids(self) -> list[int]:
        return list(self._universe)


class _AuxInstance:
    __slots__ = ("key", "columns")

    def __init__(self, key: tuple, columns: dict[str, GroundValue]):
        self.key = key
        self.columns = columns


class Grounder:
    def __init__(self, template: ModelTemplate, store: Store, scope: Scope):
        self.template = template
        self.program = template.program
        self.store = store
        self.scope = scope
        self.model = GroundModel()
        self.model.rewrites = template.rewrites
        self.catalog = {v.name: v for v in self.program.views}
        self.interners: dict[tuple[str, str], Interner] = {}
        self.relaxed_groups: set[tuple[str, str]] = set()
        # (table, col, row index) -> var id or interned constant or unplaced
        self.cell_vars: dict[tuple[str, str, int], int] = {}
        self.cell_consts: dict[tuple[str, str, int], int] = {}
        self.aux_instances: dict[str, list[_AuxInstance]] = {}
        self._input_cache: dict[str, Relation] = {}
        self._set_cache: dict[tuple[str, int], tuple] = {}
        self._element_cache: dict[tuple, int] = {}
        self._element_index: dict[int, int] = {}  # element var -> its index var
        self._lin_cache: dict[tuple, int] = {}

    # -- top level -------------------------------------------------------------

    def bind(self) -> GroundModel:
        self._check_drift()
        self._build_universes()
        self._build_vars()
        for scheme in self.template.schemes:
            if scheme.view.klass == AUX:
                self._ground_aux(scheme)
        objective_terms: list[LinExpr] = []
        for scheme in self.template.schemes:
            if scheme.view.klass == HARD:
                self._ground_hard(scheme)
            elif scheme.view.klass == SOFT and not self.scope.eviction_objective:
                objective_terms.append(self._ground_soft(scheme))
        if self.scope.eviction_objective:
            self.model.objective = self._placement_objective()
        elif objective_terms:
            expr = lin_const(0)
            for term in objective_terms:
                expr = expr.plus(term)
            self.model.objective = expr
        return self.model

    def _check_drift(self):
        for name, table in self.program.tables.items():
            if name not in self.store.tables:
                raise BindError(f"store drift: table {name!r} missing from the store")
            if self.store.tables[name] != table:
                raise BindError(f"store drift: table {name!r} no longer matches the schema")

    # -- universes & variables -----------------------------------------------------

    def _build_universes(self):
        for key, spec in self.template.var_groups.items():
            table = self.program.tables[key[0]]
            identity = table.column(key[1]).dtype == INTEGER
            interner = Interner(identity=identity)
            for table_name, column in spec.column_sources:
                for _, value in self._column_values(table_name, column):
                    interner.intern(value)
            for view_name, set_id in spec.set_sources:
                keyed, lookup = self._value_set(view_name, set_id)
                if keyed:
                    for members in lookup.values():
                        for value in sorted(members, key=str):
                            interner.intern(value)
                else:
                    for value in sorted(lookup, key=str):
                        interner.intern(value)
            interner.freeze()
            self.interners[key] = interner

    def _column_values(self, source: str, column: str):
        if source in self.program.tables:
            table = self.program.tables[source]
            idx = table.column_index(column)
            for row in self.store.rows(source):
                yield row, row[idx]
        else:
            rel = self._input_relation(source)
            idx = rel.table.column_index(column)
            for row in rel.rows:
                yield row, row[idx]

    def _input_relation(self, name: str) -> Relation:
        if name not in self._input_cache:
            view = self.catalog[name]
            self._input_cache[name] = self.store.eval_input_view(view, self.catalog)
        return self._input_cache[name]

    def _value_set(self, view_name: str, set_id: int):
        cache_key = (view_name, set_id)
        if cache_key not in self._set_cache:
            scheme = next(s for s in self.template.schemes if s.view.name == view_name)
            spec = scheme.comp.value_sets[set_id]
            keyed, lookup = ir._eval_value_set(spec, self.store, self.program)
            self._set_cache[cache_key] = (keyed, lookup)
        return self._set_cache[cache_key]

    def _priority(self, table: TableDef, row) -> int:
        col = self.scope.priority_column
        if col is None:
            return 0
        try:
            idx = table.column_index(col)
        except Exception:
            return 0
        value = row[idx]
        return value if isinstance(value, int) and not isinstance(value, bool) else 0

    def _build_vars(self):
        # Max pending priority bounds which placed rows may be evicted.
        max_pending_prio: Optional[int] = None
        if self.scope.stay_or_evict:
            for (table_name, column), spec in self.template.var_groups.items():
                table = self.program.tables[table_name]
                idx = table.column_index(column)
                for row in self.store.rows(table_name):
                    if isinstance(row[idx], _Unset):
                        prio = self._priority(table, row)
                        if max_pending_prio is None or prio > max_pending_prio:
                            max_pending_prio = prio

        for (table_name, column), spec in sorted(self.template.var_groups.items()):
            table = self.program.tables[table_name]
            idx = table.column_index(column)
            interner = self.interners[(table_name, column)]
            relaxed = self.scope.relax_unplaced or self.scope.stay_or_evict
            if relaxed:
                self.relaxed_groups.add((table_name, column))
            unplaced = interner.unplaced_id
            for row_idx, row in enumerate(self.store.rows(table_name)):
                cell = row[idx]
                row_key = self.store.primary_key_of(table_name, row)
                is_unset = isinstance(cell, _Unset)
                in_scope = self.scope.covers(table_name, row_key, is_unset)
                cell_key = (table_name, column, row_idx)
                if not in_scope:
                    if is_unset:
                        self.cell_consts[cell_key] = unplaced
                    else:
                        self.cell_consts[cell_key] = interner.intern(cell)
                    continue
                universe = interner.universe_ids
                if is_unset:
                    values = universe + ([unplaced] if relaxed else [])
                    if not values:
                        vid = self.model.new_var(
                            f"{table_name}[{row_key}].{column}", [0],
                            origin=(table_name, row_key, column),
                        )
                        self.model.add(
                            Membership(vid, frozenset()), "<empty domain>", (row_key,)
                        )
                        self.model.decoders[vid] = {}
                        self.cell_vars[cell_key] = vid
                        continue
                else:
                    current = interner.intern(cell)
                    if self.scope.stay_or_evict:
                        prio = self._priority(table, row)
                        evictable = max_pending_prio is not None and prio < max_pending_prio
                        values = [current] + ([unplaced] if evictable else [])
                    else:
                        values = universe
                vid = self.model.new_var(
                    f"{table_name}[{row_key}].{column}", values,
                    origin=(table_name, row_key, column),
                )
                decoder = dict(interner.id_to_value)
                decoder[unplaced] = UNSET
                self.model.decoders[vid] = decoder
                self.cell_vars[cell_key] = vid

    # -- binder environments ----------------------------------------------------------

    def _generator_rows(self, binder: str):
        """Yield (env_entry, row_keys_fragment) pairs for one generator."""
        if binder in self.program.tables:
            table = self.program.tables[binder]
            for row_idx, row in enumerate(self.store.rows(binder)):
                yield ("table", binder, row_idx, row), (self.store.primary_key_of(binder, row),)
        elif self.catalog[binder].klass == INPUT:
            rel = self._input_relation(binder)
            for row in rel.rows:
                yield ("input", binder, None, row), (tuple(row),)
        elif self.catalog[binder].klass == AUX:
            for inst in self.aux_instances[binder]:
                yield ("aux", binder, None, inst), (inst.key,)
        else:
            raise CompileError(f"cannot range over view {binder!r}")

    def _cell_value(self, table_name: str, column: str, row_idx: int) -> GroundValue:
        group = (table_name, column)
        cell_key = (table_name, column, row_idx)
        if cell_key in self.cell_vars:
            return _gv_lin(lin_var(self.cell_vars[cell_key]), group=group)
        return _gv_const(self.cell_consts[cell_key], group=group)

    def _col_value(self, entry, ref: ColRef) -> GroundValue:
        kind, binder, row_idx, payload = entry
        if kind == "table":
            table = self.program.tables[binder]
            col = table.column(ref.column)
            if col.is_variable:
                return self._cell_value(binder, ref.column, row_idx)
            return _gv_const(payload[table.column_index(ref.column)])
        if kind == "input":
            rel = self._input_relation(binder)
            return _gv_const(payload[rel.table.column_index(ref.column)])
        inst: _AuxInstance = payload
        if ref.column not in inst.columns:
            raise CompileError(f"aux view {binder!r} has no column {ref.column!r}")
        return inst.columns[ref.column]

    # -- expression evaluation over a binding -----------------------------------------

    def _eval(self, expr, env: dict, elements: Optional[dict] = None) -> GroundValue:
        if isinstance(expr, ColRef):
            if elements is not None and expr.table in elements:
                return elements[expr.table](expr)
            if expr.table not in env:
                raise CompileError(f"unbound source {expr.table!r} in {expr.render()}")
            return self._col_value(env[expr.table], expr)
        if isinstance(expr, IntLit):
            return _gv_const(expr.value)
        if isinstance(expr, StrLit):
            return _gv_const(expr.value)
        if isinstance(expr, BoolLit):
            return _gv_const(expr.value)
        if isinstance(expr, ScalarSubquery):
            return _gv_const(ir._eval_scalar(expr.query, self.store, self.program))
        if isinstance(expr, NotOp):
            inner = self._eval(expr.operand, env, elements)
            if inner.kind == "const":
                return _gv_const(not inner.const)
            if inner.kind == "bool":
                return _gv_bool(_negate_tree(inner.tree))
            raise CompileError("NOT over a non-boolean value")
        if isinstance(expr, ir.SetMembership):
            return self._eval_membership(expr, env, elements)
        if isinstance(expr, BinOp):
            return self._eval_binop(expr, env, elements)
        if isinstance(expr, AggCall):
            raise CompileError("aggregate outside an aggregation context")
        raise CompileError(f"cannot ground expression {expr!r}")

    def _eval_membership(self, expr: ir.SetMembership, env, elements) -> GroundValue:
        needle = self._eval(expr.needle, env, elements)
        scheme_view = self._current_view
        keyed, lookup = self._value_set(scheme_view, expr.set_id)
        spec = self._current_comp.value_sets[expr.set_id]
        if keyed:
            key = tuple(self._require_const(self._eval(k, env, elements)) for k in spec.correlation)
            members = lookup.get(key, set())
        else:
            members = lookup
        if needle.kind == "const":
            raw = needle.const
            if needle.group is not None:
                raw = self.interners[needle.group].decode(raw)
            inside = raw in members
            return _gv_const((not inside) if expr.negated else inside)
        var = self._lin_to_var(needle)
        interner = self.interners[needle.group] if needle.group else None
        if interner is None:
            ids = frozenset(int(v) for v in members if isinstance(v, int))
        else:
            ids = frozenset(
                interner.lookup(v) for v in members if interner.lookup(v) is not None
            )
        return _gv_bool(MemberAtom(var, ids, expr.negated))

    def _eval_binop(self, expr: BinOp, env, elements) -> GroundValue:
        op = expr.op
        if op in ("and", "or"):
            left = self._eval(expr.left, env, elements)
            right = self._eval(expr.right, env, elements)
            return _combine_bool(op, left, right)
        left = self._eval(expr.left, env, elements)
        right = self._eval(expr.right, env, elements)
        if op in ("+", "-", "*"):
            return self._arith(op, left, right)
        return self._compare(op, left, right)

    def _arith(self, op: str, left: GroundValue, right: GroundValue) -> GroundValue:
        if left.kind == "const" and right.kind == "const":
            from .relstore import _apply_binop

            return _gv_const(checked(_apply_binop(op, left.const, right.const)))
        llin = self._as_lin(left)
        rlin = self._as_lin(right)
        if op == "+":
            return _gv_lin(llin.plus(rlin))
        if op == "-":
            return _gv_lin(llin.plus(rlin.scaled(-1)))
        if not llin.terms:
            return _gv_lin(rlin.scaled(llin.const))
        if not rlin.terms:
            return _gv_lin(llin.scaled(rlin.const))
        raise CompileError("product of two decision-dependent expressions is not linear")

    def _compare(self, op: str, left: GroundValue, right: GroundValue) -> GroundValue:
        if left.kind == "const" and right.kind == "const":
            from .relstore import _apply_binop

            lval, rval = left.const, right.const
            if left.group is not None or right.group is not None:
                lval = self._decode_if_needed(left)
                rval = self._decode_if_needed(right)
            return _gv_const(_apply_binop(op, lval, rval))
        group = left.group or right.group
        if group is not None:
            left = self._intern_side(left, group)
            right = self._intern_side(right, group)
            if left.kind == "const" and left.const is None:
                return _gv_const(op == "!=")
            if right.kind == "const" and right.const is None:
                return _gv_const(op == "!=")
        left_atom, left_const = self._atom_operand(left)
        right_atom, right_const = self._atom_operand(right)
        return _gv_bool(CmpAtom(left_atom, left_const, op, right_atom, right_const))

    def _decode_if_needed(self, gv: GroundValue):
        if gv.group is None:
            return gv.const
        return self.interners[gv.group].decode(gv.const)

    def _intern_side(self, gv: GroundValue, group) -> GroundValue:
        if gv.group is not None:
            if gv.group != group:
                raise CompileError(
                    f"comparing decision columns with different universes: "
                    f"{gv.group} vs {group}"
                )
            return gv
        if gv.kind != "const":
            raise CompileError("cannot mix interned and arithmetic decision values")
        interned = self.interners[group].lookup(gv.const)
        return GroundValue("const", const=interned, group=group)

    def _as_lin(self, gv: GroundValue) -> LinExpr:
        if gv.kind == "lin":
            return gv.lin
        if gv.kind == "const":
            if isinstance(gv.const, bool) or not isinstance(gv.const, int):
                raise CompileError(f"expected an integer, got {gv.const!r}")
            return lin_const(gv.const)
        raise CompileError("boolean used in arithmetic context")

    def _atom_operand(self, gv: GroundValue):
        if gv.kind == "const":
            if not isinstance(gv.const, int) or isinstance(gv.const, bool):
                raise CompileError(f"cannot compare non-integer {gv.const!r} dynamically")
            return None, gv.const
        lin = self._as_lin(gv)
        if not lin.terms and lin.const is not None:
            return None, lin.const
        if len(lin.terms) == 1 and lin.const == 0 and lin.terms[0].coef == 1 and isinstance(lin.terms[0].atom, int):
            return lin.terms[0].atom, 0
        return self._materialize_lin(lin), 0

    def _lin_to_var(self, gv: GroundValue) -> int:
        lin = gv.lin
        if lin is not None and len(lin.terms) == 1 and lin.const == 0 and lin.terms[0].coef == 1 and isinstance(lin.terms[0].atom, int):
            return lin.terms[0].atom
        raise CompileError("expected a plain decision column reference")

    def _materialize_lin(self, lin: LinExpr, name: str = "expr") -> int:
        key = (tuple(lin.terms), lin.const)
        if key in self._lin_cache:
            return self._lin_cache[key]
        lo, hi = self._lin_bounds(lin)
        vid = self.model.new_var(f"<{name}>", range(lo, hi + 1), kind=DERIVED)
        defining = LinExpr(lin.terms + (Term(-1, vid),), lin.const)
        self.model.add(LinearCmp(defining, "=", 0), "<define>", (vid,), hard=False)
        self._lin_cache[key] = vid
        return vid

    def _lin_bounds(self, lin: LinExpr) -> tuple[int, int]:
        lo = hi = lin.const
        for term in lin.terms:
            if isinstance(term.atom, Lit):
                a_lo, a_hi = 0, 1
            else:
                values = self.model.vars[term.atom].values
                a_lo, a_hi = values[0], values[-1]
            parts = (term.coef * a_lo, term.coef * a_hi)
            lo = checked(lo + min(parts))
            hi = checked(hi + max(parts))
        return lo, hi

    def _require_const(self, gv: GroundValue):
        if gv.kind != "const":
            raise CompileError("expected a bind-time constant")
        return gv.const

    # -- static filtering ----------------------------------------------------------


    # -- member machinery -------------------------------------------------------------

    def _member_lit(self, guard: Guard, env: dict) -> Optional[object]:
        """Indicator that this member joins the current key row.

        Returns a Lit, True (statically joined), or None (cannot join).
        """
        var_gv = self._eval(guard.var_ref, env)
        key_gv = self._eval(guard.key_ref, env)
        group = var_gv.group
        if key_gv.kind != "const":
            raise CompileError(
                f"join on {guard.key_ref.render()} needs a bind-time-constant key"
            )
        interner = self.interners[group]
        key_id = interner.lookup(key_gv.const) if key_gv.group is None else key_gv.const
        if key_id is None:
            return None
        if var_gv.kind == "const":
            return True if var_gv.const == key_id else None
        var = self._lin_to_var(var_gv)
        return Lit(var, "=", key_id)

    def _lit_term(self, coef: int, lit, view: str, row_keys: tuple) -> LinExpr:
        """coef * indicator; naive mode spends an auxiliary 0/1 variable on it."""
        if lit is True:
            return lin_const(coef)
        if self.template.rewrites:
            return LinExpr((Term(coef, lit),))
        b = self.model.new_var("<opt>", (0, 1), kind=AUXILIARY)
        self.model.add(
            ReifiedCmp(b, CmpAtom(lit.var, 0, lit.op, None, lit.value)),
            view, row_keys, hard=False,
        )
        return LinExpr((Term(coef, b),))

    # -- aux views ----------------------------------------------------------------------

    def _ground_aux(self, scheme: Scheme):
        self._current_view = scheme.view.name
        self._current_comp = scheme.comp
        if scheme.flavor != JOIN_KEYED:
            raise CompileError(
                f"aux view {scheme.view.name!r}: only group-by over a joined input "
                "key is supported"
            )
        instances = []
        for key, env_key, members in self._join_keyed_groups(scheme):
            columns: dict[str, GroundValue] = {}
            for idx, item in enumerate(scheme.comp.head):
                if isinstance(item.expr, Star):
                    raise CompileError(
                        f"aux view {scheme.view.name!r}: select * is not meaningful here"
                    )
                gv = self._eval_group_expr(scheme, item.expr, env_key, members, key)
                name = item.alias or (
                    item.expr.column if isinstance(item.expr, ColRef) else f"col{idx}"
                )
                if gv.kind == "lin" and gv.lin.terms:
                    var = self._materialize_aux_column(scheme, name, key, gv.lin)
                    gv = _gv_lin(lin_var(var))
                columns[name] = gv
            instances.append(_AuxInstance(key, columns))
        self.aux_instances[scheme.view.name] = instances

    def _materialize_aux_column(self, scheme: Scheme, name: str, key: tuple, lin: LinExpr) -> int:
        lo, hi = self._lin_bounds(lin)
        vid = self.model.new_var(
            f"{scheme.view.name}[{','.join(map(str, key))}].{name}",
            range(lo, hi + 1),
            kind=DERIVED,
        )
        defining = LinExpr(lin.terms + (Term(-1, vid),), lin.const)
        self.model.add(LinearCmp(defining, "=", 0), scheme.view.name, key, hard=False)
        return vid

    def _join_keyed_groups(self, scheme: Scheme):
        """Yield (group key tuple, key env, member list) triples.

        Groups range over the key generator's rows (so empty groups exist, with
        sums over no members); members carry join-indicator literals. When no
        qualifier crosses member and key rows, members are bucketed without
        forming the full member-by-key product.
        """
        key_binder = scheme.key_binder
        member_binders = [g.binder for g in scheme.comp.generators if g.binder != key_binder]
        guards_on_key = [g for g in scheme.guards if g.key_ref.table == key_binder]
        other_guards = [g for g in scheme.guards if g.key_ref.table != key_binder]
        if other_guards:
            raise CompileError(
                f"view {scheme.view.name!r}: joins through several keyed sources "
                "are not supported"
            )
        if not guards_on_key:
            raise CompileError(
                f"view {scheme.view.name!r}: grouping by a joined key needs an "
                "equality join on a decision column"
            )

        key_rows = [
            env[key_binder]
            for env, _ in self._enumerate_envs(scheme, [key_binder], set())
        ]
        member_envs = [
            env for env, _ in self._enumerate_envs(scheme, member_binders, set())
        ]

        cross_static = any(
            key_binder in ir._expr_binders(qual, self.program)
            and (ir._expr_binders(qual, self.program) - {key_binder})
            for qual in scheme.split.static_part
        )
        fast = not cross_static and not scheme.body and len(guards_on_key) == 1

        key_meta = []  # (key id, joined raw values, key env)
        interner = self._interner_for_guard(guards_on_key[0])
        for key_entry in key_rows:
            key_env = {key_binder: key_entry}
            joined_vals = tuple(
                self._require_const(self._eval(k, key_env)) for k in scheme.joined_keys
            )
            key_gv = self._col_value(key_entry, guards_on_key[0].key_ref)
            key_id = (
                interner.lookup(key_gv.const) if key_gv.group is None else key_gv.const
            )
            key_meta.append((key_id, joined_vals, key_env))

        groups: dict[tuple, tuple[dict, list]] = {}
        order: list[tuple] = []

        def bucket(combo: tuple, joined_vals: tuple, key_env: dict, member):
            key = combo + joined_vals
            if key not in groups:
                groups[key] = (key_env, [])
                order.append(key)
            if member is not None:
                groups[key][1].append(member)

        if fast:
            guard = guards_on_key[0]
            combos_seen: list[tuple] = []
            by_const: dict[int, list] = {}
            var_members = []
            for env in member_envs:
                static_vals = tuple(
                    self._require_const(self._eval(k, env)) for k in scheme.static_keys
                )
                if static_vals not in combos_seen:
                    combos_seen.append(static_vals)
                var_gv = self._eval(guard.var_ref, env)
                if var_gv.kind == "const":
                    by_const.setdefault(var_gv.const, []).append((static_vals, env))
                else:
                    var_members.append((static_vals, self._lin_to_var(var_gv), env))
            if not scheme.static_keys:
                combos_seen = [()]
            for key_id, joined_vals, key_env in key_meta:
                for combo in combos_seen:
                    bucket(combo, joined_vals, key_env, None)
                if key_id is None:
                    continue
                for static_vals, env in by_const.get(key_id, ()):
                    bucket(static_vals, joined_vals, key_env, (static_vals, True, env))
                for static_vals, var, env in var_members:
                    lit = Lit(var, "=", key_id)
                    bucket(static_vals, joined_vals, key_env, (static_vals, lit, env))
        else:
            for key_id, joined_vals, key_env in key_meta:
                if not scheme.static_keys:
                    bucket((), joined_vals, key_env, None)
                key_entry = key_env[key_binder]
                for env in member_envs:
                    full = dict(env)
                    full[key_binder] = key_entry
                    if not self._static_ok_subset_exact(scheme, full, set(full)):
                        continue
                    static_vals = tuple(
                        self._require_const(self._eval(k, full)) for k in scheme.static_keys
                    )
                    lits = []
                    ok = True
                    for guard in guards_on_key:
                        lit = self._member_lit(guard, full)
                        if lit is None:
                            ok = False
                            break
                        if lit is not True:
                            lits.append(lit)
                    if not ok:
                        continue
                    if len(lits) > 1:
                        raise CompileError(
                            f"view {scheme.view.name!r}: a member row joins through "
                            "several decision columns at once"
                        )
                    for qual in scheme.body:
                        gv = self._eval(qual, full)
                        if gv.kind == "const":
                            if gv.const is not True:
                                ok = False
                                break
                        else:
                            raise CompileError(
                                f"view {scheme.view.name!r}: decision-dependent filter "
                                f"{qual!r} is not supported together with a joined group key"
                            )
                    if not ok:
                        continue
                    bucket(static_vals, joined_vals, key_env, (static_vals, lits[0] if lits else True, full))
        for key in order:
            env_key, members = groups[key]
            yield key, env_key, members

    def _group_key_values(self, scheme: Scheme, key: tuple) -> dict:
        values = {}
        for i, ref in enumerate(scheme.static_keys):
            values[ref] = key[i]
        offset = len(scheme.static_keys)
        for i, ref in enumerate(scheme.joined_keys):
            values[ref] = key[offset + i]
        return values

    def _eval_group_expr(self, scheme: Scheme, expr, key_env: dict, members, key: tuple, elements=None) -> GroundValue:
        """Evaluate a projection/having expression in group context."""
        if isinstance(expr, AggCall):
            return self._eval_aggregate(scheme, expr, members, elements)
        if isinstance(expr, ColRef):
            key_values = self._group_key_values(scheme, key)
            if expr in key_values:
                return _gv_const(key_values[expr])
            return self._eval(expr, key_env, elements)
        if isinstance(expr, (IntLit, StrLit, BoolLit, ScalarSubquery)):
            return self._eval(expr, {}, None)
        if isinstance(expr, NotOp):
            inner = self._eval_group_expr(scheme, expr.operand, key_env, members, key, elements)
            if inner.kind == "const":
                return _gv_const(not inner.const)
            return _gv_bool(_negate_tree(inner.tree))
        if isinstance(expr, BinOp):
            left = self._eval_group_expr(scheme, expr.left, key_env, members, key, elements)
            right = self._eval_group_expr(scheme, expr.right, key_env, members, key, elements)
            if expr.op in ("and", "or"):
                return _combine_bool(expr.op, left, right)
            if expr.op in ("+", "-", "*"):
                return self._arith(expr.op, left, right)
            return self._compare(expr.op, left, right)
        raise CompileError(f"unsupported expression in group context: {expr!r}")

    def _eval_aggregate(self, scheme: Scheme, agg: AggCall, members, elements_builder=None) -> GroundValue:
        view = scheme.view.name
        if agg.func == "count":
            expr = lin_const(0)
            for static_vals, lit, env in members:
                expr = expr.plus(self._lit_term(1, lit, view, static_vals))
            return _gv_lin(expr)
        if agg.func == "sum":
            expr = lin_const(0)
            for static_vals, lit, env in members:
                arg = self._eval(agg.arg, env, None)
                if lit is True:
                    expr = expr.plus(self._as_lin(arg))
                else:
                    value = self._require_const(arg)
                    if isinstance(value, bool) or not isinstance(value, int):
                        raise CompileError(f"view {view!r}: sum needs integer terms")
                    expr = expr.plus(self._lit_term(value, lit, view, static_vals))
            return _gv_lin(expr)
        raise CompileError(
            f"view {view!r}: aggregate {agg.func} needs unconditional group members"
        )

    # -- hard views -------------------------------------------------------------------

    def _ground_hard(self, scheme: Scheme):
        self._current_view = scheme.view.name
        self._current_comp = scheme.comp
        if scheme.flavor == PLAIN:
            self._ground_hard_plain(scheme)
        elif scheme.flavor == JOIN_KEYED:
            self._ground_hard_join_keyed(scheme)
        elif scheme.flavor in (MEMBER_KEYED, SCALAR):
            self._ground_hard_member_keyed(scheme)
        else:
            raise CompileError(f"view {scheme.view.name!r}: unsupported hard view shape")

    def _generator_entries(self, scheme: Scheme, binder: str, skip_const_rows: bool):
        """Rows of one generator, dropping rows that can never constrain.

        Unset out-of-scope cells never join (vacuous); fully-decided rows are
        skipped when the scheme's only decision references are this binder's
        own cells and it reads no derived aux columns (those rows restate
        facts, not decisions).
        """
        var_cols = [c for (t, c) in scheme.var_refs if t == binder]
        out = []
        for entry, fragment in self._generator_rows(binder):
            if entry[0] == "table" and var_cols:
                row_idx = entry[2]
                vacuous = False
                all_const = True
                for col in var_cols:
                    cell_key = (binder, col, row_idx)
                    const = self.cell_consts.get(cell_key)
                    if const is None:
                        all_const = False
                        continue
                    group = (binder, col)
                    if (
                        const == self.interners[group].unplaced_id
                        and group not in self.relaxed_groups
                    ):
                        vacuous = True
                        break
                if vacuous:
                    continue
                if skip_const_rows and all_const:
                    continue
            out.append((entry, fragment))
        return out

    def _plain_fast_skip(self, scheme: Scheme, binder: str) -> bool:
        """Placed rows of `binder` can be skipped when no other decision or
        derived value appears in the scheme (their instances are facts)."""
        if scheme.refs_aux_values:
            return False
        return all(t == binder for t, _ in scheme.var_refs)

    def _enumerate_envs(self, scheme: Scheme, binders: list[str], skip_const_for: set[str]):
        """Cross product with static-equality hash pushdown."""
        for qual in scheme.split.static_part:
            if not ir._expr_binders(qual, self.program):
                value = self._eval(qual, {})
                if value.kind == "const" and value.const is not True:
                    return []
        eq_quals = []
        for qual in scheme.split.static_part:
            if (
                isinstance(qual, BinOp)
                and qual.op == "="
                and isinstance(qual.left, ColRef)
                and isinstance(qual.right, ColRef)
            ):
                eq_quals.append(qual)

        envs: list[tuple[dict, dict]] = [(dict(), dict())]
        bound: list[str] = []
        for binder in binders:
            entries = self._generator_entries(scheme, binder, binder in skip_const_for)
            join_keys = []
            for qual in eq_quals:
                lt, rt = qual.left.table, qual.right.table
                if lt == binder and rt in bound:
                    join_keys.append((qual.right, qual.left))
                elif rt == binder and lt in bound:
                    join_keys.append((qual.left, qual.right))
            if join_keys and envs:
                index: dict[tuple, list] = {}
                for entry, fragment in entries:
                    probe = {binder: entry}
                    key = tuple(
                        self._require_const(self._eval(new_ref, probe)) for _, new_ref in join_keys
                    )
                    index.setdefault(key, []).append((entry, fragment))
                next_envs = []
                for env, kmap in envs:
                    key = tuple(
                        self._require_const(self._eval(bound_ref, env))
                        for bound_ref, _ in join_keys
                    )
                    for entry, fragment in index.get(key, ()):
                        cand = dict(env)
                        cand[binder] = entry
                        kcand = dict(kmap)
                        kcand[binder] = fragment
                        next_envs.append((cand, kcand))
                envs = next_envs
            else:
                next_envs = []
                for env, kmap in envs:
                    for entry, fragment in entries:
                        cand = dict(env)
                        cand[binder] = entry
                        kcand = dict(kmap)
                        kcand[binder] = fragment
                        next_envs.append((cand, kcand))
                envs = next_envs
            bound.append(binder)
            envs = [
                (env, kmap)
                for env, kmap in envs
                if self._static_ok_subset_exact(scheme, env, set(bound))
            ]
        return envs

    def _static_ok_subset_exact(self, scheme: Scheme, env: dict, bound: set) -> bool:
        for qual in scheme.split.static_part:
            binders = ir._expr_binders(qual, self.program)
            if binders and binders <= bound:
                value = self._eval(qual, env)
                if value.kind == "const" and value.const is not True:
                    return False
        return True

    def _bindings(self, scheme: Scheme):
        binders = [g.binder for g in scheme.comp.generators]
        skip_const = {b for b in binders if self._plain_fast_skip(scheme, b)}
        for env, kmap in self._enumerate_envs(scheme, binders, skip_const):
            yield env, kmap

    def _env_has_scope_var(self, scheme: Scheme, env: dict) -> bool:
        for table_name, column in scheme.var_refs:
            entry = env.get(table_name)
            if entry is None or entry[0] != "table":
                continue
            if (table_name, column, entry[2]) in self.cell_vars:
                return True
        return False

    def _ground_hard_plain(self, scheme: Scheme):
        view = scheme.view.name
        # Per decision variable: values the guard may take such that the
        # consequent is statically false; folded into one membership per row.
        forbidden: dict[tuple[int, tuple], set[int]] = {}
        anchor_of: dict[str, str] = {g.var_ref.table: g.var_ref.table for g in scheme.guards}
        for env, kmap in self._bindings(scheme):
            row_keys = tuple(
                part for gen in scheme.comp.generators for part in kmap[gen.binder]
            )
            guard_atoms: list[tuple[int, int, str]] = []  # (var, key id, var binder)
            vacuous = False
            for guard in scheme.guards:
                lit = self._member_lit(guard, env)
                if lit is None:
                    vacuous = True
                    break
                if lit is True:
                    continue
                guard_atoms.append((lit.var, lit.value, guard.var_ref.table))
            if vacuous:
                continue

            parts = []
            for qual in scheme.body:
                gv = self._eval(qual, env)
                if gv.kind == "const":
                    if gv.const is True:
                        continue
                    parts = [BConst(False)]
                    break
                parts.append(gv.tree)
            if parts == [BConst(False)]:
                consequent_false = True
                tree = BConst(False)
            elif not parts:
                continue  # consequent holds for this binding
            else:
                consequent_false = False
                tree = parts[0] if len(parts) == 1 else BAnd(tuple(parts))

            if (
                self.template.rewrites
                and consequent_false
                and len(guard_atoms) == 1
            ):
                var, key_id, var_binder = guard_atoms[0]
                anchor = kmap[var_binder]
                forbidden.setdefault((var, anchor), set()).add(key_id)
                continue

            if self.template.rewrites and not guard_atoms and isinstance(tree, MemberAtom):
                allowed = self._membership_values(tree)
                self.model.add(Membership(tree.var, allowed), view, row_keys)
                continue

            disjuncts = [CmpAtom(var, 0, "!=", None, key_id) for var, key_id, _ in guard_atoms]
            relax = self._relax_guards(env)
            disjuncts = relax + disjuncts
            if tree != BConst(False):
                tree = self._expand_membership_naive(tree)
                disjuncts.append(tree)
            if not disjuncts:
                # A violated instance with no decisions in reach restates prior
                # state, not a constraint; the ground checker still reports it.
                if self._env_has_scope_var(scheme, env):
                    self.model.add(BoolExpr(BConst(False)), view, row_keys)
                continue
            node = disjuncts[0] if len(disjuncts) == 1 else BOr(tuple(disjuncts))
            if isinstance(node, MemberAtom) and self.template.rewrites:
                self.model.add(Membership(node.var, self._membership_values(node)), view, row_keys)
            else:
                self.model.add(BoolExpr(node), view, row_keys)

        for (var, anchor), banned in forbidden.items():
            universe = set(self.model.vars[var].values)
            allowed = frozenset(universe - banned)
            self.model.add(Membership(var, allowed), scheme.view.name, anchor)

    def _membership_values(self, atom: MemberAtom) -> frozenset[int]:
        var_info = self.model.vars[atom.var]
        universe = set(var_info.values)
        values = set(atom.values)
        allowed = (universe - values) if atom.negated else (values & universe)
        origin = var_info.origin
        if origin is not None:
            group = (origin[0], origin[2])
            if group in self.relaxed_groups:
                allowed.add(self.interners[group].unplaced_id)
        return frozenset(allowed & universe)

    def _expand_membership_naive(self, tree):
        """Without rewrites, IN-atoms ground as plain disjunctions of equalities."""
        if self.template.rewrites:
            return tree
        if isinstance(tree, MemberAtom):
            if tree.negated:
                atoms = tuple(
                    CmpAtom(tree.var, 0, "!=", None, v) for v in sorted(tree.values)
                )
                return BAnd(atoms) if atoms else BConst(True)
            atoms = tuple(CmpAtom(tree.var, 0, "=", None, v) for v in sorted(tree.values))
            return BOr(atoms) if atoms else BConst(False)
        if isinstance(tree, BAnd):
            return BAnd(tuple(self._expand_membership_naive(c) for c in tree.children))
        if isinstance(tree, BOr):
            return BOr(tuple(self._expand_membership_naive(c) for c in tree.children))
        if isinstance(tree, BNot):
            return BNot(self._expand_membership_naive(tree.child))
        return tree

    def _relax_guards(self, env: dict) -> list:
        """In relaxed scopes a constraint is vacuous once any involved decision
        cell is unplaced."""
        out = []
        if not self.relaxed_groups:
            return out
        seen = set()
        for entry in env.values():
            kind, binder, row_idx, _ = entry
            if kind != "table":
                continue
            table = self.program.tables[binder]
            for col in table.variable_columns:
                group = (binder, col.name)
                if group not in self.relaxed_groups:
                    continue
                cell_key = (binder, col.name, row_idx)
                var = self.cell_vars.get(cell_key)
                if var is None or var in seen:
                    continue
                seen.add(var)
                out.append(CmpAtom(var, 0, "=", None, self.interners[group].unplaced_id))
        return out

    def _ground_hard_join_keyed(self, scheme: Scheme):
        view = scheme.view.name
        if scheme.comp.having is None:
            raise CompileError(
                f"view {view!r}: a grouped hard view needs a HAVING constraint"
            )
        for key, key_env, members in self._join_keyed_groups(scheme):
            gv = self._eval_group_expr(scheme, scheme.comp.having, key_env, members, key)
            involved = any(lit is not True for _, lit, _ in members) or any(
                self._env_has_scope_var(scheme, env) for _, _, env in members
            )
            self._emit_condition(gv, view, key, involved)

    def _ground_hard_member_keyed(self, scheme: Scheme):
        view = scheme.view.name
        groups = self._member_keyed_groups(scheme)
        head_aggs = [
            item.expr for item in scheme.comp.head
            if not isinstance(item.expr, Star) and _contains_agg(item.expr)
        ]
        for key, members in groups:
            elements = self._element_env(scheme, members)
            for expr in head_aggs:
                if isinstance(expr, AggCall) and expr.func == "all_different":
                    self._emit_all_different(scheme, expr, members, key, elements)
                elif scheme.comp.having is None:
                    raise CompileError(
                        f"view {view!r}: aggregate head without HAVING does not "
                        "constrain anything"
                    )
            if scheme.comp.having is not None:
                gv = self._eval_member_group_expr(scheme, scheme.comp.having, members, key, elements)
                involved = any(lits for _, lits in members) or any(
                    self._env_has_scope_var(scheme, env) for env, _ in members
                )
                self._emit_condition(gv, view, key, involved)

    def _member_keyed_groups(self, scheme: Scheme):
        member_binders = [
            g.binder for g in scheme.comp.generators if g.binder not in scheme.lookup_binders
        ]
        for qual in scheme.split.static_part:
            binders = ir._expr_binders(qual, self.program)
            if binders & scheme.lookup_binders:
                raise CompileError(
                    f"view {scheme.view.name!r}: filters over the joined lookup "
                    "source are not supported with member grouping"
                )

        groups: dict[tuple, list] = {}
        order: list[tuple] = []
        for env, _ in self._enumerate_envs(scheme, member_binders, set()):
            key = tuple(
                self._require_const(self._eval(k, env)) for k in scheme.static_keys
            )
            member = self._member_entry(scheme, env)
            if member is None:
                continue
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(member)
        if not scheme.static_keys and not order:
            order.append(())
            groups[()] = []
        return [(key, groups[key]) for key in order]

    def _member_entry(self, scheme: Scheme, env: dict):
        """(env, condition lits) for one member; None when statically excluded.

        An unplaced out-of-scope cell drops its row from every group, matching
        the checker's rule that unset cells never join.
        """
        lits: list[Lit] = []
        for qual in scheme.body:
            gv = self._eval(qual, env)
            if gv.kind == "const":
                if gv.const is not True:
                    return None
                continue
            tree = gv.tree
            if isinstance(tree, CmpAtom) and tree.right is None and tree.left is not None:
                lits.append(Lit(tree.left, tree.op, tree.right_const))
            else:
                raise CompileError(
                    f"view {scheme.view.name!r}: member filter {qual!r} is too "
                    "complex for aggregation"
                )
        return env, lits

    def _element_env(self, scheme: Scheme, members):
        """Column accessors for lookup binders: per member, an element variable."""
        if not scheme.lookup_binders:
            return None

        lookup_rows: dict[str, dict[int, tuple]] = {}
        for binder in scheme.lookup_binders:
            guard = next(g for g in scheme.guards if g.key_ref.table == binder)
            rows_by_id: dict[int, tuple] = {}
            for entry, _ in self._generator_rows(binder):
                key_gv = self._col_value(entry, guard.key_ref)
                kid = self._interner_for_guard(guard).lookup(key_gv.const)
                if kid is not None and kid not in rows_by_id:
                    rows_by_id[kid] = entry
            lookup_rows[binder] = rows_by_id
        return lookup_rows

    def _interner_for_guard(self, guard: Guard) -> Interner:
        return self.interners[(guard.var_ref.table, guard.var_ref.column)]

    def _member_element(self, scheme: Scheme, env: dict, ref: ColRef, lookup_rows) -> GroundValue:
        guard = next(g for g in scheme.guards if g.key_ref.table == ref.table)
        var_gv = self._eval(guard.var_ref, env)
        if var_gv.kind == "const":
            entry = lookup_rows[ref.table].get(var_gv.const)
            if entry is None:
                raise CompileError(
                    f"view {scheme.view.name!r}: placed value has no matching "
                    f"{ref.table!r} row"
                )
            return self._col_value(entry, ref)
        var = self._lin_to_var(var_gv)
        mapping = []
        for kid, entry in sorted(lookup_rows[ref.table].items()):
            value = self._col_value(entry, ref)
            const = self._require_const(value)
            if isinstance(const, bool):
                const = int(const)
            if not isinstance(const, int):
                raise CompileError(
                    f"view {scheme.view.name!r}: looked-up column {ref.render()} "
                    "must be integer-valued"
                )
            mapping.append((kid, const))
        unplaced = self._var_unplaced_id(var)
        if unplaced is not None:
            # Sentinel image for the unplaced state; constraints over the
            # element are guarded on the index anyway.
            sentinel = (max(v for _, v in mapping) + 1) if mapping else 0
            mapping.append((unplaced, sentinel))
        cache_key = (var, ref.table, ref.column, tuple(mapping))
        if cache_key in self._element_cache:
            return _gv_lin(lin_var(self._element_cache[cache_key]))
        values = sorted({v for _, v in mapping})
        target = self.model.new_var(
            f"<{ref.table}.{ref.column}[x{var}]>", values, kind=DERIVED
        )
        self.model.add(Element(target, var, tuple(mapping)), "<define>", (target,), hard=False)
        self._element_cache[cache_key] = target
        self._element_index[target] = var
        return _gv_lin(lin_var(target))

    def _member_operand(self, scheme: Scheme, expr, env: dict, lookup_rows) -> GroundValue:
        elements = None
        if lookup_rows:
            elements = {
                binder: (lambda ref, e=env: self._member_element(scheme, e, ref, lookup_rows))
                for binder in lookup_rows
            }
        return self._eval(expr, env, elements)

    def _emit_all_different(self, scheme: Scheme, agg: AggCall, members, key: tuple, lookup_rows):
        view = scheme.view.name
        operands: list[GroundValue] = []
        for env, lits in members:
            if lits:
                raise CompileError(
                    f"view {view!r}: all_different cannot range over a filtered "
                    "decision-dependent subset"
                )
            operands.append(self._member_operand(scheme, agg.arg, env, lookup_rows))
        consts = [gv.const for gv in operands if gv.kind == "const"]
        if len(set(consts)) != len(consts):
            self.model.add(BoolExpr(BConst(False)), view, key)
            return
        vars_: list[int] = []
        for gv in operands:
            if gv.kind == "lin":
                vars_.append(self._atom_operand(gv)[0])
        relaxed_vars = {v for v in vars_ if self._unplaced_guard(v)}
        if self.template.rewrites and not relaxed_vars:
            if len(vars_) >= 2:
                self.model.add(AllDifferent(tuple(vars_)), view, key)
            for gv in operands:
                if gv.kind == "lin":
                    var = self._atom_operand(gv)[0]
                    for c in consts:
                        self.model.add(
                            BoolExpr(CmpAtom(var, 0, "!=", None, c)), view, key
                        )
            return
        # Pairwise: required in naive mode, and in relaxed scopes where shared
        # unplaced values must not trip the matching propagator.
        items = [(gv, self._atom_operand(gv)) for gv in operands if gv.kind == "lin"]
        for i, (gv_a, (var_a, _)) in enumerate(items):
            for c in consts:
                guard = self._unplaced_guard(var_a)
                atom = CmpAtom(var_a, 0, "!=", None, c)
                self.model.add(
                    BoolExpr(BOr(tuple(guard + [atom]))) if guard else BoolExpr(atom),
                    view, key,
                )
            for gv_b, (var_b, _) in items[i + 1:]:
                guards = self._unplaced_guard(var_a) + self._unplaced_guard(var_b)
                atom = CmpAtom(var_a, 0, "!=", var_b, 0)
                node = BoolExpr(BOr(tuple(guards + [atom]))) if guards else BoolExpr(atom)
                self.model.add(node, view, key)

    def _var_unplaced_id(self, var: int) -> Optional[int]:
        origin = self.model.vars[var].origin
        if origin is None:
            return None
        group = (origin[0], origin[2])
        if group in self.relaxed_groups:
            return self.interners[group].unplaced_id
        return None

    def _unplaced_guard(self, var: int) -> list:
        index = self._element_index.get(var)
        if index is not None:
            return self._unplaced_guard(index)
        unplaced = self._var_unplaced_id(var)
        if unplaced is None:
            return []
        return [CmpAtom(var, 0, "=", None, unplaced)]

    def _eval_member_group_expr(self, scheme: Scheme, expr, members, key: tuple, lookup_rows) -> GroundValue:
        if isinstance(expr, AggCall):
            if expr.func in ("min", "max"):
                operands = []
                for env, lits in members:
                    if lits:
                        raise CompileError(
                            f"view {scheme.view.name!r}: {expr.func} cannot range "
                            "over a decision-dependent subset"
                        )
                    operands.append(self._member_operand(scheme, expr.arg, env, lookup_rows))
                return self._min_max_value(scheme, expr.func, operands)
            if expr.func in ("count", "sum"):
                return self._eval_aggregate_memberwise(scheme, expr, members, lookup_rows)
            raise CompileError(f"view {scheme.view.name!r}: unsupported aggregate {expr.func}")
        if isinstance(expr, (IntLit, BoolLit, StrLit, ScalarSubquery)):
            return self._eval(expr, {}, None)
        if isinstance(expr, NotOp):
            inner = self._eval_member_group_expr(scheme, expr.operand, members, key, lookup_rows)
            if inner.kind == "const":
                return _gv_const(not inner.const)
            return _gv_bool(_negate_tree(inner.tree))
        if isinstance(expr, BinOp):
            left = self._eval_member_group_expr(scheme, expr.left, members, key, lookup_rows)
            right = self._eval_member_group_expr(scheme, expr.right, members, key, lookup_rows)
            if expr.op in ("and", "or"):
                return _combine_bool(expr.op, left, right)
            if expr.op in ("+", "-", "*"):
                return self._arith(expr.op, left, right)
            return self._compare(expr.op, left, right)
        if isinstance(expr, ColRef):
            raise CompileError(
                f"view {scheme.view.name!r}: bare column {expr.render()} in a "
                "grouped constraint must be a group key"
            )
        raise CompileError(f"unsupported grouped expression {expr!r}")

    def _eval_aggregate_memberwise(self, scheme: Scheme, agg: AggCall, members, lookup_rows) -> GroundValue:
        view = scheme.view.name
        expr = lin_const(0)
        for env, lits in members:
            if agg.func == "count":
                term_value = 1
            else:
                arg = self._member_operand(scheme, agg.arg, env, lookup_rows)
                if lits:
                    term_value = self._require_const(arg)
                else:
                    expr = expr.plus(self._as_lin(arg))
                    continue
            if not lits:
                expr = expr.plus(lin_const(term_value))
            elif len(lits) == 1:
                expr = expr.plus(self._lit_term(term_value, lits[0], view, ()))
            else:
                raise CompileError(
                    f"view {view!r}: conjunction of decision-dependent filters "
                    "inside an aggregate is not supported"
                )
        return _gv_lin(expr)

    def _min_max_value(self, scheme: Scheme, func: str, operands: list[GroundValue]) -> GroundValue:
        consts = [gv.const for gv in operands if gv.kind == "const"]
        vars_: list[int] = []
        for gv in operands:
            if gv.kind == "lin":
                atom, const = self._atom_operand(gv)
                if atom is None:
                    consts.append(const)
                else:
                    vars_.append(atom)
        for c in consts:
            if isinstance(c, bool) or not isinstance(c, int):
                raise CompileError(f"view {scheme.view.name!r}: {func} needs integers")
        if not vars_:
            if not consts:
                raise CompileError(f"view {scheme.view.name!r}: {func} over nothing")
            return _gv_const(min(consts) if func == "min" else max(consts))
        if consts:
            folded = min(consts) if func == "min" else max(consts)
            pin = self.model.new_var(f"<{func}-const>", [folded], kind=DERIVED)
            vars_ = vars_ + [pin]
        lo = min(self.model.vars[v].values[0] for v in vars_)
        hi = max(self.model.vars[v].values[-1] for v in vars_)
        if any(self._unplaced_guard(v) for v in vars_):
            raise CompileError(
                f"view {scheme.view.name!r}: {func} over evictable rows is not "
                "supported in reconfiguration scope"
            )
        target = self.model.new_var(f"<{func}>", range(lo, hi + 1), kind=DERIVED)
        node = MinOfList(target, tuple(vars_)) if func == "min" else MaxOfList(target, tuple(vars_))
        self.model.add(node, scheme.view.name, (), hard=False)
        return _gv_lin(lin_var(target))

    def _emit_condition(self, gv: GroundValue, view: str, row_keys: tuple, involved_vars: bool = True):
        if gv.kind == "const":
            if gv.const is True:
                return
            if involved_vars:
                self.model.add(BoolExpr(BConst(False)), view, row_keys)
            return
        if gv.kind == "bool":
            tree = gv.tree
            if isinstance(tree, CmpAtom) and self._tree_as_linear(tree) is not None:
                self.model.add(self._tree_as_linear(tree), view, row_keys)
            else:
                self.model.add(BoolExpr(tree), view, row_keys)
            return
        raise CompileError(f"view {view!r}: constraint does not reduce to a condition")

    def _tree_as_linear(self, atom: CmpAtom) -> Optional[LinearCmp]:
        if atom.op not in ("<=", ">=", "=", "<", ">"):
            return None
        terms = []
        const = 0
        if atom.left is not None:
            terms.append(Term(1, atom.left))
        else:
            const += atom.left_const
        rhs = atom.right_const if atom.right is None else 0
        if atom.right is not None:
            terms.append(Term(-1, atom.right))
        op = atom.op
        if op == "<":
            op, rhs = "<=", rhs - 1
        elif op == ">":
            op, rhs = ">=", rhs + 1
        elif op == "!=":
            return None
        return LinearCmp(LinExpr(tuple(terms), const), op, rhs - 0)

    # -- soft views -----------------------------------------------------------------------

    def _ground_soft(self, scheme: Scheme) -> LinExpr:
        self._current_view = scheme.view.name
        self._current_comp = scheme.comp
        item = scheme.comp.head[0]
        if scheme.flavor == JOIN_KEYED:
            raise CompileError(
                f"soft view {scheme.view.name!r} must be scalar, not grouped"
            )
        members = None
        lookup_rows = None
        groups = self._member_keyed_groups(scheme)
        (key, members), = groups or [((), [])]
        lookup_rows = self._element_env(scheme, members)
        gv = self._eval_member_group_expr(scheme, item.expr, members, key, lookup_rows)
        if gv.kind == "const":
            value = gv.const
            if isinstance(value, bool) or not isinstance(value, int):
                raise CompileError(f"soft view {scheme.view.name!r} must be integer")
            return lin_const(value)
        return self._as_lin(gv)

    # -- objective for eviction scopes ---------------------------------------------------

    def _placement_objective(self) -> LinExpr:
        rows: list[tuple[int, int, bool, int]] = []  # (priority, var, placed, unplaced id)
        for (table_name, column), interner in self.interners.items():
            table = self.program.tables[table_name]
            idx = table.column_index(column)
            for row_idx, row in enumerate(self.store.rows(table_name)):
                cell_key = (table_name, column, row_idx)
                var = self.cell_vars.get(cell_key)
                if var is None:
                    continue
                prio = self._priority(table, row)
                placed = not isinstance(row[idx], _Unset)
                rows.append((prio, var, placed, interner.unplaced_id))
        n = len(rows)
        ranks = {p: i + 1 for i, p in enumerate(sorted({p for p, *_ in rows}))}
        expr = lin_const(0)
        for prio, var, placed, unplaced in rows:
            weight = checked((n + 1) ** ranks[prio])
            penalty = weight + (1 if placed else 0)
            expr = expr.plus(LinExpr((Term(-penalty, Lit(var, "=", unplaced)),)))
        return expr


def lits_to_lit(lits):
    if not lits:
        return True
    if len(lits) == 1:
        return lits[0]
    raise CompileError("several decision-dependent filters on one member")


def _negate_tree(tree):
    if isinstance(tree, BConst):
        return BConst(not tree.value)
    if isinstance(tree, CmpAtom):
        neg = {"=": "!=", "!=": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}[tree.op]
        return CmpAtom(tree.left, tree.left_const, neg, tree.right, tree.right_const)
    if isinstance(tree, MemberAtom):
        return MemberAtom(tree.var, tree.values, not tree.negated)
    if isinstance(tree, BNot):
        return tree.child
    if isinstance(tree, BAnd):
        return BOr(tuple(_negate_tree(c) for c in tree.children))
    if isinstance(tree, BOr):
        return BAnd(tuple(_negate_tree(c) for c in tree.children))
    raise CompileError(f"cannot negate {tree!r}")


def _combine_bool(op: str, left: GroundValue, right: GroundValue) -> GroundValue:
    def as_tree(gv: GroundValue):
        if gv.kind == "bool":
            return gv.tree
        if gv.kind == "const" and isinstance(gv.const, bool):
            return BConst(gv.const)
        raise CompileError("logical operator over a non-boolean value")

    lt, rt = as_tree(left), as_tree(right)
    if op == "and":
        if isinstance(lt, BConst):
            return _gv_bool(rt) if lt.value else _gv_const(False)
        if isinstance(rt, BConst):
            return _gv_bool(lt) if rt.value else _gv_const(False)
        return _gv_bool(BAnd((lt, rt)))
    if isinstance(lt, BConst):
        return _gv_const(True) if lt.value else _gv_bool(rt)
    if isinstance(rt, BConst):
        return _gv_const(True) if rt.value else _gv_bool(lt)
    return _gv_bool(BOr((lt, rt)))


def bind(template: ModelTemplate, store: Store, scope: Optional[Scope] = None) -> GroundModel:
    return Grounder(template, store, scope or Scope()).bind()
