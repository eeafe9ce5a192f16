"""Solver-independent constraint model: variables, constraint nodes, grounding.

A grounded model holds integer variables (decision, derived, or auxiliary),
constraint nodes over them, a linear objective, and provenance mapping every
constraint back to the (view, row keys) pair it came from. Linear sums may
carry indicator literals directly, so counting rewrites introduce no auxiliary
variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import BindError

I64_MIN, I64_MAX = -(2**63), 2**63 - 1

DECISION, DERIVED, AUXILIARY = "decision", "derived", "aux"


def checked(value: int) -> int:
    if not (I64_MIN <= value <= I64_MAX):
        raise BindError(f"integer overflow during grounding: {value}")
    return value


@dataclass(frozen=True)
class Lit:
    """Indicator literal over one variable: 1 when `var op value` holds."""

    var: int
    op: str  # '=', '!=', '<=', '>='
    value: int

    def render(self) -> str:
        return f"[x{self.var} {self.op} {self.value}]"


Atom = Union[int, Lit]  # int = variable id


@dataclass(frozen=True)
class Term:
    coef: int
    atom: Atom

    def render(self) -> str:
        body = f"x{self.atom}" if isinstance(self.atom, int) else self.atom.render()
        return body if self.coef == 1 else f"{self.coef}*{body}"


@dataclass(frozen=True)
class LinExpr:
    terms: tuple[Term, ...] = ()
    const: int = 0

    def render(self) -> str:
        parts = [t.render() for t in self.terms]
        if self.const or not parts:
            parts.append(str(self.const))
        return " + ".join(parts)

    def plus(self, other: "LinExpr") -> "LinExpr":
        return LinExpr(self.terms + other.terms, checked(self.const + other.const))

    def scaled(self, k: int) -> "LinExpr":
        return LinExpr(
            tuple(Term(checked(t.coef * k), t.atom) for t in self.terms),
            checked(self.const * k),
        )


def lin_const(value: int) -> LinExpr:
    return LinExpr((), checked(value))


def lin_var(var: int) -> LinExpr:
    return LinExpr((Term(1, var),))


def lin_lit(lit: Lit) -> LinExpr:
    return LinExpr((Term(1, lit),))


# -- boolean trees ---------------------------------------------------------------


@dataclass(frozen=True)
class CmpAtom:
    left: Atom | None  # variable id or None when a constant
    left_const: int
    op: str  # '=', '!=', '<', '<=', '>', '>='
    right: Atom | None
    right_const: int

    def render(self) -> str:
        l = f"x{self.left}" if self.left is not None else str(self.left_const)
        r = f"x{self.right}" if self.right is not None else str(self.right_const)
        return f"({l} {self.op} {r})"


@dataclass(frozen=True)
class MemberAtom:
    var: int
    values: frozenset[int]
    negated: bool = False

    def render(self) -> str:
        op = "not in" if self.negated else "in"
        return f"(x{self.var} {op} {{{', '.join(map(str, sorted(self.values)))}}})"


@dataclass(frozen=True)
class BNot:
    child: "BNode"

    def render(self) -> str:
        return f"(not {self.child.render()})"


@dataclass(frozen=True)
class BAnd:
    children: tuple["BNode", ...]

    def render(self) -> str:
        return "(" + " and ".join(c.render() for c in self.children) + ")"


@dataclass(frozen=True)
class BOr:
    children: tuple["BNode", ...]

    def render(self) -> str:
        return "(" + " or ".join(c.render() for c in self.children) + ")"


@dataclass(frozen=True)
class BConst:
    value: bool

    def render(self) -> str:
        return "true" if self.value else "false"


BNode = Union[CmpAtom, MemberAtom, BNot, BAnd, BOr, BConst]


# -- constraint nodes --------------------------------------------------------------


@dataclass(frozen=True)
class LinearCmp:
    expr: LinExpr
    op: str  # '<=', '=', '>='
    rhs: int

    def render(self) -> str:
        return f"linear({self.expr.render()} {self.op} {self.rhs})"


@dataclass(frozen=True)
class ReifiedCmp:
    bool_var: int  # 0/1 variable
    atom: CmpAtom

    def render(self) -> str:
        return f"reified(x{self.bool_var} <-> {self.atom.render()})"


@dataclass(frozen=True)
class BoolExpr:
    tree: BNode

    def render(self) -> str:
        return f"bool({self.tree.render()})"


@dataclass(frozen=True)
class AllDifferent:
    vars: tuple[int, ...]

    def render(self) -> str:
        return f"all_different({', '.join(f'x{v}' for v in self.vars)})"


@dataclass(frozen=True)
class Membership:
    var: int
    allowed: frozenset[int]

    def render(self) -> str:
        return f"membership(x{self.var} in {{{', '.join(map(str, sorted(self.allowed)))}}})"


@dataclass(frozen=True)
class MinOfList:
    target: int
    sources: tuple[int, ...]

    def render(self) -> str:
        return f"min(x{self.target} = min({', '.join(f'x{v}' for v in self.sources)}))"


@dataclass(frozen=True)
class MaxOfList:
    target: int
    sources: tuple[int, ...]

    def render(self) -> str:
        return f"max(x{self.target} = max({', '.join(f'x{v}' for v in self.sources)}))"


@dataclass(frozen=True)
class Element:
    """target = mapping[index]; pairs cover every value the index may take."""

    target: int
    index: int
    mapping: tuple[tuple[int, int], ...]

    def render(self) -> str:
        pairs = ", ".join(f"{k}->{v}" for k, v in self.mapping)
        return f"element(x{self.target} = map(x{self.index}; {pairs}))"


ConstraintNode = Union[
    LinearCmp, ReifiedCmp, BoolExpr, AllDifferent, Membership, MinOfList, MaxOfList, Element
]


@dataclass
class VarInfo:
    id: int
    name: str
    values: tuple[int, ...]  # initial domain, ascending
    kind: str = DECISION
    # decode info for decision vars: (table, row_key, column)
    origin: Optional[tuple] = None


@dataclass
class GroundConstraint:
    id: int
    node: ConstraintNode
    view: str
    row_keys: tuple = ()
    hard: bool = True  # definitional constraints for derived vars are not removable

    @property
    def group(self) -> tuple:
        return (self.view, self.row_keys)


class GroundModel:
    def __init__(self):
        self.vars: list[VarInfo] = []
        self.constraints: list[GroundConstraint] = []
        self.objective: Optional[LinExpr] = None
        self.aux_var_count = 0  # optionality booleans introduced by naive encodings
        # decode map per decision var id: function int -> store value
        self.decoders: dict[int, dict[int, object]] = {}

    def new_var(self, name: str, values, kind: str = DECISION, origin=None) -> int:
        vid = len(self.vars)
        vals = tuple(sorted(set(int(v) for v in values)))
        for v in vals:
            checked(v)
        self.vars.append(VarInfo(vid, name, vals, kind, origin))
        if kind == AUXILIARY:
            self.aux_var_count += 1
        return vid

    def add(self, node: ConstraintNode, view: str, row_keys: tuple = (), hard: bool = True) -> int:
        cid = len(self.constraints)
        self.constraints.append(GroundConstraint(cid, node, view, row_keys, hard))
        return cid

    def groups(self) -> list[tuple]:
        """Removable provenance groups, in first-appearance order."""
        seen = []
        for c in self.constraints:
            if c.hard and c.group not in seen:
                seen.append(c.group)
        return seen

    def stats(self) -> dict:
        return {
            "vars": len(self.vars),
            "constraints": len(self.constraints),
            "aux_vars": self.aux_var_count,
        }

    def render(self) -> str:
        lines = []
        for v in self.vars:
            dom = _render_values(v.values)
            lines.append(f"var x{v.id} {v.name} :: {dom} [{v.kind}]")
        for c in self.constraints:
            origin = f"{c.view}{list(c.row_keys)}" if c.row_keys else c.view
            lines.append(f"c{c.id} {c.node.render()}  # {origin}")
        if self.objective is not None:
            lines.append(f"maximize {self.objective.render()}")
        return "\n".join(lines) + "\n"


def _render_values(values: tuple[int, ...]) -> str:
    if not values:
        return "{}"
    if len(values) == values[-1] - values[0] + 1:
        return f"{{{values[0]}..{values[-1]}}}"
    return "{" + ", ".join(map(str, values)) + "}"


# -- concrete evaluation -----------------------------------------------------------
#
# Used by the independent soundness checks and the brute-force oracles: evaluate
# a constraint node on a full assignment, no propagation machinery involved.


def eval_lit(lit: Lit, asg: dict[int, int]) -> bool:
    x = asg[lit.var]
    return {
        "=": x == lit.value,
        "!=": x != lit.value,
        "<=": x <= lit.value,
        ">=": x >= lit.value,
    }[lit.op]


def eval_lin(expr: LinExpr, asg: dict[int, int]) -> int:
    total = expr.const
    for term in expr.terms:
        if isinstance(term.atom, Lit):
            total += term.coef * (1 if eval_lit(term.atom, asg) else 0)
        else:
            total += term.coef * asg[term.atom]
    return total


def _cmp(a: int, op: str, b: int) -> bool:
    return {
        "=": a == b, "!=": a != b, "<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b,
    }[op]


def eval_bnode(node: BNode, asg: dict[int, int]) -> bool:
    if isinstance(node, BConst):
        return node.value
    if isinstance(node, CmpAtom):
        left = asg[node.left] if node.left is not None else node.left_const
        right = asg[node.right] if node.right is not None else node.right_const
        return _cmp(left, node.op, right)
    if isinstance(node, MemberAtom):
        inside = asg[node.var] in node.values
        return (not inside) if node.negated else inside
    if isinstance(node, BNot):
        return not eval_bnode(node.child, asg)
    if isinstance(node, BAnd):
        return all(eval_bnode(c, asg) for c in node.children)
    if isinstance(node, BOr):
        return any(eval_bnode(c, asg) for c in node.children)
    raise TypeError(f"unknown boolean node {node!r}")


def eval_constraint(node: ConstraintNode, asg: dict[int, int]) -> bool:
    if isinstance(node, LinearCmp):
        value = eval_lin(node.expr, asg)
        return _cmp(value, node.op, node.rhs)
    if isinstance(node, ReifiedCmp):
        atom = node.atom
        left = asg[atom.left] if atom.left is not None else atom.left_const
        right = asg[atom.right] if atom.right is not None else atom.right_const
        return (asg[node.bool_var] == 1) == _cmp(left, atom.op, right)
    if isinstance(node, BoolExpr):
        return eval_bnode(node.tree, asg)
    if isinstance(node, AllDifferent):
        values = [asg[v] for v in node.vars]
        return len(set(values)) == len(values)
    if isinstance(node, Membership):
        return asg[node.var] in node.allowed
    if isinstance(node, MinOfList):
        return asg[node.target] == min(asg[v] for v in node.sources)
    if isinstance(node, MaxOfList):
        return asg[node.target] == max(asg[v] for v in node.sources)
    if isinstance(node, Element):
        table = dict(node.mapping)
        return asg[node.index] in table and asg[node.target] == table[asg[node.index]]
    raise TypeError(f"unknown constraint node {node!r}")


def check_assignment(model: GroundModel, asg: dict[int, int]) -> list[int]:
    """Ids of violated constraints under a full assignment."""
    return [c.id for c in model.constraints if not eval_constraint(c.node, asg)]
