"""Presolve rewrites applied to a ground model before search.

Rules: substitute singleton-domain variables into linear sums, constant-fold
linear comparisons, and cover cliques of pairwise != constraints with a single
all_different (cliques of size >= 2 gain nothing below 3, so the threshold is 3).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..model import (
    AllDifferent,
    BoolExpr,
    CmpAtom,
    GroundModel,
    LinearCmp,
    LinExpr,
    Lit,
    Term,
    checked,
    eval_lit,
)

CLIQUE_THRESHOLD = 3


@dataclass
class PresolveLog:
    rewrites: list[str] = field(default_factory=list)

    def note(self, text: str):
        self.rewrites.append(text)

    @property
    def count(self) -> int:
        return len(self.rewrites)


def presolve(model: GroundModel) -> tuple[GroundModel, PresolveLog]:
    log = PresolveLog()
    singles = {
        v.id: v.values[0] for v in model.vars if len(v.values) == 1
    }

    out = GroundModel()
    out.vars = model.vars
    out.aux_var_count = model.aux_var_count
    out.decoders = model.decoders
    out.objective = model.objective

    neq_edges: dict[tuple[int, int], list] = {}
    kept = []
    for c in model.constraints:
        node = c.node
        if isinstance(node, LinearCmp) and singles:
            folded = _fold_linear(node, singles)
            if folded is not node:
                log.note(f"fold_constants:c{c.id}")
                node = folded
        if isinstance(node, LinearCmp) and not node.expr.terms:
            from ..model import _cmp

            if _cmp(node.expr.const, node.op, node.rhs):
                log.note(f"drop_satisfied:c{c.id}")
                continue
            # Keep a violated constant comparison: it fails at the root with
            # its own provenance.
        edge = _neq_edge(node)
        if edge is not None:
            neq_edges.setdefault(edge, []).append((c, node))
            continue
        kept.append((c, node))

    clique_cover = _greedy_cliques(set(neq_edges))
    covered: set[tuple[int, int]] = set()
    for clique in clique_cover:
        if len(clique) >= CLIQUE_THRESHOLD:
            for a, b in _pairs(clique):
                covered.add((a, b))
            out.add(AllDifferent(tuple(sorted(clique))), "<presolve>", (), hard=False)
            log.note(f"alldiff_clique:{len(clique)}")
    for edge, items in sorted(neq_edges.items()):
        if edge in covered:
            continue
        for c, node in items:
            kept.append((c, node))

    kept.sort(key=lambda pair: pair[0].id)
    for c, node in kept:
        out.add(node, c.view, c.row_keys, hard=c.hard)
    return out, log


def _fold_linear(node: LinearCmp, singles: dict[int, int]) -> LinearCmp:
    terms = []
    const = node.expr.const
    changed = False
    for term in node.expr.terms:
        atom = term.atom
        if isinstance(atom, int) and atom in singles:
            const = checked(const + term.coef * singles[atom])
            changed = True
        elif isinstance(atom, Lit) and atom.var in singles:
            const = checked(const + term.coef * (1 if eval_lit(atom, {atom.var: singles[atom.var]}) else 0))
            changed = True
        else:
            terms.append(term)
    if not changed:
        return node
    return LinearCmp(LinExpr(tuple(terms), const), node.op, node.rhs)


def _neq_edge(node) -> tuple[int, int] | None:
    if not isinstance(node, BoolExpr):
        return None
    atom = node.tree
    if not isinstance(atom, CmpAtom) or atom.op != "!=":
        return None
    if atom.left is None or atom.right is None:
        return None
    a, b = atom.left, atom.right
    return (a, b) if a < b else (b, a)


def _pairs(clique: list[int]):
    for i, a in enumerate(clique):
        for b in clique[i + 1:]:
            yield (a, b) if a < b else (b, a)


def _greedy_cliques(edges: set[tuple[int, int]]) -> list[list[int]]:
    """Greedy clique cover of the != graph; not maximum (that would be NP-hard)."""
    adj: dict[int, set[int]] = {}
    for a, b in edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    remaining = set(edges)
    cliques: list[list[int]] = []
    while remaining:
        # Seed with the lexicographically smallest remaining edge for determinism.
        a, b = min(remaining)
        clique = [a, b]
        candidates = sorted(adj[a] & adj[b])
        for c in candidates:
            if all((min(c, m), max(c, m)) in remaining for m in clique):
                clique.append(c)
        for pair in _pairs(clique):
            remaining.discard(pair)
        cliques.append(sorted(clique))
    return cliques
