"""DFS with first-fail branching and branch-and-bound maximization.

Branching picks the unassigned decision variable with the smallest domain
(ties to the lowest id) and tries values in ascending order. Each incumbent
posts `objective >= incumbent + 1`, so the incumbent trace is strictly
increasing. Budgets are node counts (deterministic) or wall-clock seconds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from ..model import DECISION, GroundModel, eval_lin
from .props import Failure, State

OPTIMAL, FEASIBLE, UNSAT, UNKNOWN_STATUS = "optimal", "feasible", "unsat", "unknown"


@dataclass
class Budget:
    nodes: Optional[int] = None
    seconds: Optional[float] = None

    @staticmethod
    def of_nodes(n: int) -> "Budget":
        return Budget(nodes=n)

    @staticmethod
    def of_seconds(s: float) -> "Budget":
        return Budget(seconds=s)


@dataclass
class SearchStats:
    nodes: int = 0
    failures: int = 0
    propagations: int = 0
    presolve_rewrites: int = 0
    wall_time: float = 0.0
    incumbent_trace: list = field(default_factory=list)  # (node_count, objective)


@dataclass
class SolveOutcome:
    status: str
    assignment: Optional[dict[int, int]] = None
    objective: Optional[int] = None
    timeout: bool = False
    core: Optional[list[int]] = None  # constraint ids
    core_minimal: Optional[bool] = None

    @property
    def is_sat(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE)


class _BudgetHit(Exception):
    pass


@dataclass
class _Frame:
    var: int
    values: list[int]
    next_idx: int
    mark: int


def search(model: GroundModel, budget: Optional[Budget] = None) -> tuple[SolveOutcome, SearchStats]:
    stats = SearchStats()
    start = time.monotonic()
    budget = budget or Budget()
    deadline = start + budget.seconds if budget.seconds is not None else None

    def finish(outcome: SolveOutcome) -> tuple[SolveOutcome, SearchStats]:
        stats.wall_time = time.monotonic() - start
        stats.propagations = state.propagations if state is not None else 0
        return outcome, stats

    state: Optional[State] = None
    try:
        state = State(model)
        state.propagate()
    except Failure as fail:
        stats.wall_time = time.monotonic() - start
        if state is not None:
            stats.propagations = state.propagations
        core = [fail.constraint_id] if fail.constraint_id >= 0 else []
        return SolveOutcome(UNSAT, core=core), stats

    branchables = [v.id for v in model.vars if v.kind == DECISION]
    best_asg: Optional[dict[int, int]] = None
    best_obj: Optional[int] = None
    has_objective = model.objective is not None

    def pick_var() -> Optional[int]:
        chosen = None
        chosen_size = None
        for vid in branchables:
            dom = state.doms[vid]
            if dom.is_singleton():
                continue
            if chosen is None or dom.size < chosen_size:
                chosen, chosen_size = vid, dom.size
        if chosen is not None:
            return chosen
        # Propagation normally pins derived variables; branch on any leftovers.
        for vid in range(len(state.doms)):
            if not state.doms[vid].is_singleton():
                return vid
        return None

    def charge_node():
        stats.nodes += 1
        if budget.nodes is not None and stats.nodes > budget.nodes:
            raise _BudgetHit
        if deadline is not None and time.monotonic() > deadline:
            raise _BudgetHit

    def try_next(frame: _Frame) -> bool:
        state.undo_to(frame.mark)
        while frame.next_idx < len(frame.values):
            value = frame.values[frame.next_idx]
            frame.next_idx += 1
            if value not in state.doms[frame.var]:
                continue
            charge_node()
            try:
                state.assign(frame.var, value)
                if state.objective_bound is not None and state.objective_bound.bound is not None:
                    state.enqueue(state.objective_bound_idx)
                state.propagate()
                return True
            except Failure:
                stats.failures += 1
                state.undo_to(frame.mark)
        return False

    frames: list[_Frame] = []
    try:
        if budget.nodes is not None and budget.nodes <= 0:
            raise _BudgetHit
        while True:
            var = pick_var()
            if var is None:
                asg = state.assignment()
                if not has_objective:
                    return finish(SolveOutcome(OPTIMAL, asg, None))
                obj = eval_lin(model.objective, asg)
                best_asg, best_obj = asg, obj
                stats.incumbent_trace.append((stats.nodes, obj))
                state.objective_bound.bound = obj + 1
                # Backtrack and keep searching for better incumbents.
                while frames and not try_next(frames[-1]):
                    frames.pop()
                if not frames:
                    return finish(SolveOutcome(OPTIMAL, best_asg, best_obj))
                continue
            dom = state.doms[var]
            frames.append(_Frame(var, list(dom.values()), 0, state.mark()))
            while frames and not try_next(frames[-1]):
                frames.pop()
            if not frames:
                if best_asg is not None:
                    return finish(SolveOutcome(OPTIMAL, best_asg, best_obj))
                return finish(SolveOutcome(UNSAT, core=None))
    except _BudgetHit:
        if best_asg is not None:
            return finish(SolveOutcome(FEASIBLE, best_asg, best_obj, timeout=True))
        return finish(SolveOutcome(UNKNOWN_STATUS, timeout=True))
