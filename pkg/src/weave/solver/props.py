"""Propagators and the shared solver state.

Propagation is contracting and monotone: a propagator only ever removes values.
Cheap propagators (bounds, membership, reification, boolean trees) run to
fixpoint before each expensive one (all-different matching) gets a turn.
"""

from __future__ import annotations

from collections import deque
from typing import Optional

from ..model import (
    AllDifferent,
    BAnd,
    BConst,
    BNot,
    BOr,
    BoolExpr,
    CmpAtom,
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
)
from .alldiff import regin_prune
from .domain import Domain

TRUE, FALSE, UNKNOWN = True, False, None

CHEAP, EXPENSIVE = 0, 1


class Failure(Exception):
    def __init__(self, constraint_id: int):
        self.constraint_id = constraint_id
        super().__init__(f"constraint c{constraint_id} emptied a domain")


def _ceil_div(p: int, q: int) -> int:
    return -((-p) // q)


def _floor_div(p: int, q: int) -> int:
    return p // q


class State:
    """Domains plus a trail; propagators enqueue themselves via watchers."""

    def __init__(self, model: GroundModel):
        self.model = model
        self.doms: list[Optional[Domain]] = []
        for v in model.vars:
            dom = Domain.from_values(v.values)
            if dom is None:
                raise Failure(-1)  # guarded by bind: empty universes never get here
            self.doms.append(dom)
        self.trail: list[tuple[int, Domain]] = []
        self.props: list[Propagator] = []
        self.watchers: list[list[int]] = [[] for _ in model.vars]
        self._queued: list[bool] = []
        self._queues = (deque(), deque())
        self._running = -1
        self.propagations = 0
        for c in model.constraints:
            self.add_propagator(make_propagator(c.id, c.node))
        self.objective_bound: Optional[ObjectiveBoundProp] = None
        self.objective_bound_idx: Optional[int] = None
        if model.objective is not None:
            self.objective_bound = ObjectiveBoundProp(-1, model.objective)
            self.objective_bound_idx = len(self.props)
            self.add_propagator(self.objective_bound)

    def add_propagator(self, prop: "Propagator"):
        idx = len(self.props)
        self.props.append(prop)
        self._queued.append(False)
        for var in prop.watched:
            if 0 <= var < len(self.watchers):
                self.watchers[var].append(idx)
        self.enqueue(idx)

    def enqueue(self, idx: int):
        if not self._queued[idx]:
            self._queued[idx] = True
            self._queues[self.props[idx].priority].append(idx)

    def mark(self) -> int:
        return len(self.trail)

    def undo_to(self, mark: int):
        while len(self.trail) > mark:
            var, old = self.trail.pop()
            self.doms[var] = old
        for queue in self._queues:
            while queue:
                self._queued[queue.pop()] = False

    def set_dom(self, var: int, new: Optional[Domain], cid: int):
        old = self.doms[var]
        if new is old:
            return
        if new is None:
            raise Failure(cid)
        if new.ranges == old.ranges:
            return
        self.trail.append((var, old))
        self.doms[var] = new
        queued = self._queued
        props = self.props
        queues = self._queues
        running = self._running
        for idx in self.watchers[var]:
            # A propagator sees its own changes within the current pass.
            if idx != running and not queued[idx]:
                queued[idx] = True
                queues[props[idx].priority].append(idx)

    def assign(self, var: int, value: int, cid: int = -1):
        dom = self.doms[var]
        if value not in dom:
            raise Failure(cid)
        if not dom.is_singleton():
            self.set_dom(var, Domain.singleton(value), cid)

    def _run_to_local_fixpoint(self, idx: int):
        """Re-run one propagator until it stops changing domains; its own
        changes do not re-enqueue it, so this preserves the global fixpoint."""
        prop = self.props[idx]
        self._running = idx
        trail = self.trail
        while True:
            mark = len(trail)
            self.propagations += 1
            prop.run(self)
            if len(trail) == mark:
                return

    def propagate(self):
        cheap, expensive = self._queues
        try:
            while True:
                while cheap:
                    idx = cheap.popleft()
                    self._queued[idx] = False
                    self._run_to_local_fixpoint(idx)
                if expensive:
                    idx = expensive.popleft()
                    self._queued[idx] = False
                    self._run_to_local_fixpoint(idx)
                    continue
                if not cheap:
                    return
        finally:
            self._running = -1

    def assignment(self) -> dict[int, int]:
        return {i: d.value for i, d in enumerate(self.doms)}

    def all_singleton(self) -> bool:
        return all(d.is_singleton() for d in self.doms)


# -- atom machinery ---------------------------------------------------------------


def _negate_op(op: str) -> str:
    return {"=": "!=", "!=": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}[op]


def atom_truth(state: State, atom) -> Optional[bool]:
    if isinstance(atom, BConst):
        return atom.value
    if isinstance(atom, MemberAtom):
        dom = state.doms[atom.var]
        inside_all = all(v in atom.values for v in dom.values())
        inside_none = all(v not in atom.values for v in dom.values())
        if inside_all:
            return FALSE if atom.negated else TRUE
        if inside_none:
            return TRUE if atom.negated else FALSE
        return UNKNOWN
    return _cmp_truth(state, atom)


def _cmp_truth(state: State, atom: CmpAtom) -> Optional[bool]:
    if atom.left is None and atom.right is None:
        from ..model import _cmp

        return _cmp(atom.left_const, atom.op, atom.right_const)
    if atom.left is None:
        # constant op var: flip to var op' constant
        flipped = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "=", "!=": "!="}[atom.op]
        return _cmp_truth(state, CmpAtom(atom.right, 0, flipped, None, atom.left_const))
    ldom = state.doms[atom.left]
    if atom.right is None:
        c = atom.right_const
        if atom.op == "=":
            if c not in ldom:
                return FALSE
            return TRUE if ldom.is_singleton() else UNKNOWN
        if atom.op == "!=":
            if c not in ldom:
                return TRUE
            return FALSE if ldom.is_singleton() else UNKNOWN
        lo, hi = ldom.min, ldom.max
        if atom.op == "<":
            return TRUE if hi < c else (FALSE if lo >= c else UNKNOWN)
        if atom.op == "<=":
            return TRUE if hi <= c else (FALSE if lo > c else UNKNOWN)
        if atom.op == ">":
            return TRUE if lo > c else (FALSE if hi <= c else UNKNOWN)
        return TRUE if lo >= c else (FALSE if hi < c else UNKNOWN)
    rdom = state.doms[atom.right]
    if atom.op == "=":
        if ldom.max < rdom.min or rdom.max < ldom.min:
            return FALSE
        if ldom.is_singleton() and rdom.is_singleton():
            return TRUE if ldom.value == rdom.value else FALSE
        if ldom.intersect(rdom) is None:
            return FALSE
        return UNKNOWN
    if atom.op == "!=":
        eq = _cmp_truth(state, CmpAtom(atom.left, 0, "=", atom.right, 0))
        return UNKNOWN if eq is UNKNOWN else (not eq)
    if atom.op == "<":
        if ldom.max < rdom.min:
            return TRUE
        if ldom.min >= rdom.max:
            return FALSE
        return UNKNOWN
    if atom.op == "<=":
        if ldom.max <= rdom.min:
            return TRUE
        if ldom.min > rdom.max:
            return FALSE
        return UNKNOWN
    if atom.op == ">":
        return _cmp_truth(state, CmpAtom(atom.right, 0, "<", atom.left, 0))
    return _cmp_truth(state, CmpAtom(atom.right, 0, "<=", atom.left, 0))


def atom_enforce(state: State, atom, cid: int, negate: bool = False):
    if isinstance(atom, BConst):
        if atom.value == negate:
            raise Failure(cid)
        return
    if isinstance(atom, MemberAtom):
        inside = atom.negated == negate  # inside-membership after accounting for negation
        dom = state.doms[atom.var]
        if inside:
            state.set_dom(atom.var, dom.intersect_values(atom.values), cid)
        else:
            state.set_dom(atom.var, dom.subtract_values(atom.values), cid)
        return
    op = _negate_op(atom.op) if negate else atom.op
    _cmp_enforce(state, atom.left, atom.left_const, op, atom.right, atom.right_const, cid)


def _cmp_enforce(state: State, left, left_const, op, right, right_const, cid):
    if left is None and right is None:
        from ..model import _cmp

        if not _cmp(left_const, op, right_const):
            raise Failure(cid)
        return
    if left is None:
        flipped = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "=", "!=": "!="}[op]
        _cmp_enforce(state, right, 0, flipped, None, left_const, cid)
        return
    ldom = state.doms[left]
    if right is None:
        c = right_const
        if op == "=":
            state.set_dom(left, ldom.intersect_values(frozenset([c])) if c in ldom else None, cid)
        elif op == "!=":
            state.set_dom(left, ldom.remove_value(c), cid)
        elif op == "<":
            state.set_dom(left, ldom.remove_above(c - 1), cid)
        elif op == "<=":
            state.set_dom(left, ldom.remove_above(c), cid)
        elif op == ">":
            state.set_dom(left, ldom.remove_below(c + 1), cid)
        else:
            state.set_dom(left, ldom.remove_below(c), cid)
        return
    rdom = state.doms[right]
    if op == "=":
        meet = ldom.intersect(rdom)
        state.set_dom(left, meet, cid)
        state.set_dom(right, meet, cid)
    elif op == "!=":
        if ldom.is_singleton():
            state.set_dom(right, rdom.remove_value(ldom.value), cid)
        elif rdom.is_singleton():
            state.set_dom(left, ldom.remove_value(rdom.value), cid)
    elif op == "<":
        state.set_dom(left, ldom.remove_above(rdom.max - 1), cid)
        state.set_dom(right, state.doms[right].remove_below(ldom.min + 1), cid)
    elif op == "<=":
        state.set_dom(left, ldom.remove_above(rdom.max), cid)
        state.set_dom(right, state.doms[right].remove_below(ldom.min), cid)
    elif op == ">":
        _cmp_enforce(state, right, 0, "<", left, 0, cid)
    else:
        _cmp_enforce(state, right, 0, "<=", left, 0, cid)


def lit_atom(lit: Lit) -> CmpAtom:
    return CmpAtom(lit.var, 0, lit.op, None, lit.value)


# -- propagators ----------------------------------------------------------------------


class Propagator:
    priority = CHEAP

    def __init__(self, cid: int, watched: tuple[int, ...]):
        self.cid = cid
        self.watched = watched

    def run(self, state: State):
        raise NotImplementedError


class LinearProp(Propagator):
    """Bounds consistency over sums of variables and indicator literals.

    Terms are flattened to plain tuples up front; `run` does no allocation on
    the hot path beyond new domains.
    """

    def __init__(self, cid: int, node: LinearCmp):
        self.node = node
        watched = []
        # (coef, var, lit_op, lit_value); lit_op None for plain variables
        flat: list[tuple[int, int, Optional[str], int]] = []
        for term in node.expr.terms:
            if isinstance(term.atom, Lit):
                flat.append((term.coef, term.atom.var, term.atom.op, term.atom.value))
                watched.append(term.atom.var)
            else:
                flat.append((term.coef, term.atom, None, 0))
                watched.append(term.atom)
        self.variants: list[tuple[tuple, int]] = []
        if node.op in ("<=", "="):
            self.variants.append((tuple(flat), node.rhs - node.expr.const))
        if node.op in (">=", "="):
            negated = tuple((-c, v, op, val) for c, v, op, val in flat)
            self.variants.append((negated, -(node.rhs - node.expr.const)))
        super().__init__(cid, tuple(watched))

    def run(self, state: State):
        for terms, rhs in self.variants:
            self._prune_upper(state, terms, rhs)

    @staticmethod
    def _lit_bounds(dom, op: str, value: int) -> tuple[int, int]:
        if op == "=":
            if dom._size == 1:
                return (1, 1) if dom.ranges[0][0] == value else (0, 0)
            if value not in dom:
                return 0, 0
            return 0, 1
        if op == "!=":
            if dom._size == 1:
                return (0, 0) if dom.ranges[0][0] == value else (1, 1)
            if value not in dom:
                return 1, 1
            return 0, 1
        if op == "<=":
            if dom.ranges[-1][1] <= value:
                return 1, 1
            if dom.ranges[0][0] > value:
                return 0, 0
            return 0, 1
        if dom.ranges[0][0] >= value:  # '>='
            return 1, 1
        if dom.ranges[-1][1] < value:
            return 0, 0
        return 0, 1

    def _prune_upper(self, state: State, terms: tuple, rhs: int):
        doms = state.doms
        total_min = 0
        total_max = 0
        for coef, var, lit_op, lit_val in terms:
            ranges = doms[var].ranges
            if lit_op is None:
                lo, hi = ranges[0][0], ranges[-1][1]
            elif lit_op == "=":
                if len(ranges) == 1 and ranges[0][0] == ranges[0][1]:
                    lo = hi = 1 if ranges[0][0] == lit_val else 0
                elif lit_val in doms[var]:
                    lo, hi = 0, 1
                else:
                    lo = hi = 0
            elif lit_op == "!=":
                if len(ranges) == 1 and ranges[0][0] == ranges[0][1]:
                    lo = hi = 0 if ranges[0][0] == lit_val else 1
                elif lit_val in doms[var]:
                    lo, hi = 0, 1
                else:
                    lo = hi = 1
            else:
                lo, hi = self._lit_bounds(doms[var], lit_op, lit_val)
            if coef > 0:
                total_min += coef * lo
                total_max += coef * hi
            else:
                total_min += coef * hi
                total_max += coef * lo
        if total_min > rhs:
            raise Failure(self.cid)
        if total_max <= rhs:
            return  # entailed: no value can push the sum past the bound
        lit_bounds = self._lit_bounds
        for coef, var, lit_op, lit_val in terms:
            dom = doms[var]
            if lit_op is None:
                lo, hi = dom.ranges[0][0], dom.ranges[-1][1]
            else:
                lo, hi = lit_bounds(dom, lit_op, lit_val)
            contrib = coef * lo if coef > 0 else coef * hi
            slack = rhs - total_min + contrib
            if coef > 0:
                limit = slack // coef
                if lit_op is None:
                    if hi > limit:
                        state.set_dom(var, dom.remove_above(limit), self.cid)
                elif limit < 1:
                    if limit < 0:
                        raise Failure(self.cid)
                    self._force_lit(state, var, lit_op, lit_val, False)
            else:
                limit = -((-slack) // coef)  # ceil division
                if lit_op is None:
                    if lo < limit:
                        state.set_dom(var, dom.remove_below(limit), self.cid)
                elif limit > 0:
                    if limit > 1:
                        raise Failure(self.cid)
                    self._force_lit(state, var, lit_op, lit_val, True)

    def _force_lit(self, state: State, var: int, op: str, value: int, truth: bool):
        dom = state.doms[var]
        if op == "=":
            new = (dom.intersect_values(frozenset((value,))) if value in dom else None) if truth else dom.remove_value(value)
        elif op == "!=":
            new = dom.remove_value(value) if truth else (
                dom.intersect_values(frozenset((value,))) if value in dom else None
            )
        elif op == "<=":
            new = dom.remove_above(value) if truth else dom.remove_below(value + 1)
        else:  # '>='
            new = dom.remove_below(value) if truth else dom.remove_above(value - 1)
        state.set_dom(var, new, self.cid)


class ReifiedProp(Propagator):
    def __init__(self, cid: int, node: ReifiedCmp):
        self.node = node
        watched = [node.bool_var]
        for side in (node.atom.left, node.atom.right):
            if side is not None:
                watched.append(side)
        super().__init__(cid, tuple(watched))

    def run(self, state: State):
        b = state.doms[self.node.bool_var]
        if b.is_singleton():
            atom_enforce(state, self.node.atom, self.cid, negate=b.value == 0)
            return
        truth = _cmp_truth(state, self.node.atom)
        if truth is TRUE:
            state.assign(self.node.bool_var, 1, self.cid)
        elif truth is FALSE:
            state.assign(self.node.bool_var, 0, self.cid)


class BoolProp(Propagator):
    """Three-valued evaluation plus generalized unit propagation."""

    def __init__(self, cid: int, node: BoolExpr):
        self.tree = node.tree
        self.atoms = tuple(_collect_atoms(node.tree))
        watched = []
        for atom in self.atoms:
            if isinstance(atom, MemberAtom):
                watched.append(atom.var)
            else:
                for side in (atom.left, atom.right):
                    if side is not None:
                        watched.append(side)
        super().__init__(cid, tuple(watched))

    def _eval(self, state: State, node, assumed: dict) -> Optional[bool]:
        if isinstance(node, BConst):
            return node.value
        if isinstance(node, (CmpAtom, MemberAtom)):
            if node in assumed:
                return assumed[node]
            return atom_truth(state, node)
        if isinstance(node, BNot):
            inner = self._eval(state, node.child, assumed)
            return UNKNOWN if inner is UNKNOWN else (not inner)
        if isinstance(node, BAnd):
            result = TRUE
            for child in node.children:
                value = self._eval(state, child, assumed)
                if value is FALSE:
                    return FALSE
                if value is UNKNOWN:
                    result = UNKNOWN
            return result
        result = FALSE
        for child in node.children:
            value = self._eval(state, child, assumed)
            if value is TRUE:
                return TRUE
            if value is UNKNOWN:
                result = UNKNOWN
        return result

    def run(self, state: State):
        value = self._eval(state, self.tree, {})
        if value is FALSE:
            raise Failure(self.cid)
        if value is TRUE:
            return
        undecided = [a for a in self.atoms if atom_truth(state, a) is UNKNOWN]
        for atom in undecided:
            if self._eval(state, self.tree, {atom: True}) is FALSE:
                atom_enforce(state, atom, self.cid, negate=True)
            elif self._eval(state, self.tree, {atom: False}) is FALSE:
                atom_enforce(state, atom, self.cid)


class MembershipProp(Propagator):
    def __init__(self, cid: int, node: Membership):
        self.node = node
        super().__init__(cid, (node.var,))

    def run(self, state: State):
        dom = state.doms[self.node.var]
        state.set_dom(self.node.var, dom.intersect_values(self.node.allowed), self.cid)


class MinMaxProp(Propagator):
    def __init__(self, cid: int, target: int, sources: tuple[int, ...], is_min: bool):
        self.target = target
        self.sources = sources
        self.is_min = is_min
        super().__init__(cid, (target,) + sources)

    def run(self, state: State):
        if self.is_min:
            self._run_min(state)
        else:
            self._run_max(state)

    def _run_min(self, state: State):
        t = self.target
        best_min = min(state.doms[s].min for s in self.sources)
        best_max = min(state.doms[s].max for s in self.sources)
        dom = state.doms[t].remove_below(best_min)
        state.set_dom(t, None if dom is None else dom.remove_above(best_max), self.cid)
        tmin = state.doms[t].min
        for s in self.sources:
            state.set_dom(s, state.doms[s].remove_below(tmin), self.cid)
        tmax = state.doms[t].max
        witnesses = [s for s in self.sources if state.doms[s].min <= tmax]
        if not witnesses:
            raise Failure(self.cid)
        if len(witnesses) == 1:
            s = witnesses[0]
            state.set_dom(s, state.doms[s].remove_above(tmax), self.cid)

    def _run_max(self, state: State):
        t = self.target
        best_min = max(state.doms[s].min for s in self.sources)
        best_max = max(state.doms[s].max for s in self.sources)
        dom = state.doms[t].remove_below(best_min)
        state.set_dom(t, None if dom is None else dom.remove_above(best_max), self.cid)
        tmax = state.doms[t].max
        for s in self.sources:
            state.set_dom(s, state.doms[s].remove_above(tmax), self.cid)
        tmin = state.doms[t].min
        witnesses = [s for s in self.sources if state.doms[s].max >= tmin]
        if not witnesses:
            raise Failure(self.cid)
        if len(witnesses) == 1:
            s = witnesses[0]
            state.set_dom(s, state.doms[s].remove_below(tmin), self.cid)


class ElementProp(Propagator):
    def __init__(self, cid: int, node: Element):
        self.node = node
        self.table = dict(node.mapping)
        super().__init__(cid, (node.target, node.index))

    def run(self, state: State):
        node = self.node
        idx_dom = state.doms[node.index]
        tgt_dom = state.doms[node.target]
        images = set()
        keep = []
        for v in idx_dom.values():
            mapped = self.table.get(v)
            if mapped is not None and mapped in tgt_dom:
                keep.append(v)
                images.add(mapped)
        state.set_dom(node.index, Domain.from_values(keep), self.cid)
        state.set_dom(node.target, tgt_dom.intersect_values(frozenset(images)), self.cid)


class AllDifferentProp(Propagator):
    priority = EXPENSIVE

    def __init__(self, cid: int, node: AllDifferent):
        self.vars = node.vars
        super().__init__(cid, node.vars)

    def run(self, state: State):
        if len(self.vars) <= 1:
            return
        domains = [list(state.doms[v].values()) for v in self.vars]
        result = regin_prune(domains)
        if result is None:
            raise Failure(self.cid)
        for var_idx, removals in result:
            var = self.vars[var_idx]
            dom = state.doms[var].subtract_values(removals)
            state.set_dom(var, dom, self.cid)


class ObjectiveBoundProp(Propagator):
    """expr >= bound; the bound tightens monotonically as incumbents improve."""

    def __init__(self, cid: int, expr: LinExpr):
        self.linear = LinearProp(cid, LinearCmp(expr, ">=", 0))
        self.negated_terms, base_rhs = self.linear.variants[0]
        self.const = expr.const
        self.bound: Optional[int] = None
        super().__init__(cid, self.linear.watched)

    def run(self, state: State):
        if self.bound is None:
            return
        self.linear._prune_upper(state, self.negated_terms, -(self.bound - self.const))


def _collect_atoms(node) -> list:
    out = []

    def visit(n):
        if isinstance(n, (CmpAtom, MemberAtom)):
            if n not in out:
                out.append(n)
        elif isinstance(n, BNot):
            visit(n.child)
        elif isinstance(n, (BAnd, BOr)):
            for child in n.children:
                visit(child)

    visit(node)
    return out


def make_propagator(cid: int, node) -> Propagator:
    if isinstance(node, LinearCmp):
        return LinearProp(cid, node)
    if isinstance(node, ReifiedCmp):
        return ReifiedProp(cid, node)
    if isinstance(node, BoolExpr):
        return BoolProp(cid, node)
    if isinstance(node, Membership):
        return MembershipProp(cid, node)
    if isinstance(node, MinOfList):
        return MinMaxProp(cid, node.target, node.sources, is_min=True)
    if isinstance(node, MaxOfList):
        return MinMaxProp(cid, node.target, node.sources, is_min=False)
    if isinstance(node, Element):
        return ElementProp(cid, node)
    if isinstance(node, AllDifferent):
        return AllDifferentProp(cid, node)
    raise TypeError(f"no propagator for {node!r}")
