"""Deletion-based unsatisfiable-core minimization.

Cores are computed over provenance groups (one group = every grounded
constraint a single view/row pair produced), so the result maps directly onto
SQL views and records. Each probe is a fresh bounded satisfiability solve over
a subset of groups; when every single-group deletion flips the remainder to
satisfiable, the core is minimal.
"""

from __future__ import annotations

from typing import Optional

from ..errors import SolveError
from ..model import GroundModel
from .presolve import presolve
from .search import Budget, SolveOutcome, search

DEFAULT_PROBE_NODES = 50_000


def subset_model(model: GroundModel, groups: set[tuple]) -> GroundModel:
    """Keep definitional constraints plus removable constraints in `groups`."""
    out = GroundModel()
    out.vars = model.vars
    out.aux_var_count = model.aux_var_count
    out.decoders = model.decoders
    out.objective = None  # satisfiability probes ignore the objective
    for c in model.constraints:
        if not c.hard or c.group in groups:
            out.add(c.node, c.view, c.row_keys, hard=c.hard)
    return out


def _probe(model: GroundModel, groups: list[tuple], nodes: int) -> str:
    candidate = subset_model(model, set(groups))
    simplified, _ = presolve(candidate)
    outcome, _ = search(simplified, Budget.of_nodes(nodes))
    return outcome.status


def extract_core(
    model: GroundModel, probe_nodes: int = DEFAULT_PROBE_NODES
) -> tuple[list[tuple], bool]:
    """Minimal unsatisfiable set of provenance groups, plus a minimality flag.

    Raises SolveError when the model is satisfiable (precondition violation).
    Budget exhaustion during a probe keeps the group and clears the flag.
    """
    groups = model.groups()
    status = _probe(model, groups, probe_nodes)
    if status == "optimal":
        raise SolveError("extract_core: model is satisfiable")
    minimal = status != "unknown"

    current = list(groups)
    i = 0
    while i < len(current):
        candidate = current[:i] + current[i + 1:]
        status = _probe(model, candidate, probe_nodes)
        if status == "unsat":
            current = candidate
        else:
            if status == "unknown":
                minimal = False
            i += 1
    return current, minimal
