"""Engine lifecycle: compile once, connect to a store, solve on demand.

Every solve re-reads the store (no caching between calls; the store is the
source of truth). When the primary model is unsatisfiable and a caller asks
for escalation, a reconfiguration model runs with widened scope: placed rows
may be evicted (reset to unset), pending rows may stay unplaced, and the
objective maximizes placements weighted lexicographically by priority with a
small penalty per eviction. Priorities are also enforced as hard domain
restrictions: a placed row is only evictable below the highest pending
priority.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional, Union

from .checker import Violation, check_hard_views
from .compiler import ModelTemplate, Scope, bind, synthesize
from .errors import SolveError, WeaveError
from .model import DECISION, GroundModel
from .relstore import UNSET, Delta, Store
from .solver import Budget, SearchStats, SolveOutcome, extract_core, presolve, search
from .sqlfront import Program, classify_views, parse_program


@dataclass
class SolveReport:
    outcome: SolveOutcome
    deltas: list[Delta]
    stats: SearchStats
    escalated: bool = False
    model_stats: dict = field(default_factory=dict)
    core_groups: Optional[list[tuple]] = None
    core_minimal: Optional[bool] = None

    @property
    def status(self) -> str:
        return self.outcome.status

    def stats_json(self) -> dict:
        return {
            "nodes": self.stats.nodes,
            "failures": self.stats.failures,
            "propagations": self.stats.propagations,
            "presolve_rewrites": self.stats.presolve_rewrites,
            "vars": self.model_stats.get("vars", 0),
            "constraints": self.model_stats.get("constraints", 0),
            "aux_vars": self.model_stats.get("aux_vars", 0),
            "objective": self.outcome.objective,
            "status": self.outcome.status,
        }


class Engine:
    """Compiled policy set bound to a store."""

    def __init__(
        self,
        program: Program,
        template: ModelTemplate,
        reconfig_template: Optional[ModelTemplate] = None,
        priority_column: str = "priority",
        default_budget: Optional[Budget] = None,
    ):
        self.program = program
        self.template = template
        self.reconfig_template = reconfig_template
        self.priority_column = priority_column
        self.default_budget = default_budget or Budget.of_seconds(10.0)
        self.store: Optional[Store] = None

    def connect(self, store: Store) -> "Engine":
        self.store = store
        return self

    def solve(
        self,
        budget: Optional[Budget] = None,
        scope: Union[str, Scope] = "pending",
        escalate: bool = False,
    ) -> SolveReport:
        report = self.solve_once(budget, scope)
        if escalate and report.outcome.status == "unsat":
            return self.solve_or_escalate(budget, scope, primary_report=report)
        return report

    def _snapshot(self) -> Store:
        if self.store is None:
            raise SolveError("engine is not connected to a store")
        return self.store.snapshot()

    def _scope(self, scope: Union[str, Scope]) -> Scope:
        if isinstance(scope, Scope):
            return scope
        if scope == "pending":
            return Scope(mode="pending")
        if scope == "all":
            return Scope(mode="all")
        raise SolveError(f"unknown scope {scope!r}")

    def solve_once(
        self, budget: Optional[Budget] = None, scope: Union[str, Scope] = "pending"
    ) -> SolveReport:
        snapshot = self._snapshot()
        model = bind(self.template, snapshot, self._scope(scope))
        return self._run(model, budget, escalated=False)

    def solve_or_escalate(
        self,
        budget: Optional[Budget] = None,
        scope: Union[str, Scope] = "pending",
        primary_report: Optional[SolveReport] = None,
    ) -> SolveReport:
        if primary_report is None:
            primary_report = self.solve_once(budget, scope)
        if primary_report.outcome.status != "unsat":
            return primary_report
        if self.reconfig_template is None:
            raise SolveError("no reconfiguration model was compiled")
        base = self._scope(scope)
        reconfig_scope = Scope(
            mode="all",
            relax_unplaced=True,
            stay_or_evict=True,
            priority_column=self.priority_column,
            eviction_objective=True,
            row_filter=base.row_filter,
        )
        snapshot = self._snapshot()
        model = bind(self.reconfig_template, snapshot, reconfig_scope)
        report = self._run(model, budget, escalated=True)
        if report.outcome.status in ("unsat", "unknown"):
            # Fall back to the primary diagnosis: its core names the policies.
            primary_report.escalated = True
            return primary_report
        return report

    def _run(self, model: GroundModel, budget: Optional[Budget], escalated: bool) -> SolveReport:
        budget = budget or self.default_budget
        rewrites = getattr(model, "rewrites", True)
        if rewrites:
            simplified, log = presolve(model)
        else:
            from .solver.presolve import PresolveLog

            simplified, log = model, PresolveLog()
        outcome, stats = search(simplified, budget)
        stats.presolve_rewrites = log.count
        report = SolveReport(
            outcome=outcome,
            deltas=self._deltas(model, outcome),
            stats=stats,
            escalated=escalated,
            model_stats=model.stats(),
        )
        if outcome.status == "unsat":
            groups, minimal = extract_core(model)
            report.core_groups = groups
            report.core_minimal = minimal
        return report

    def _deltas(self, model: GroundModel, outcome: SolveOutcome) -> list[Delta]:
        if not outcome.is_sat or outcome.assignment is None:
            return []
        deltas = []
        for info in model.vars:
            if info.kind != DECISION or info.origin is None:
                continue
            table, row_key, column = info.origin
            value = model.decoders.get(info.id, {}).get(outcome.assignment[info.id], UNSET)
            deltas.append(Delta(table, row_key, column, value))
        return deltas

    def apply(self, report: SolveReport) -> None:
        if self.store is None:
            raise SolveError("engine is not connected to a store")
        self.store.apply_deltas(report.deltas)

    def explain_unsat(self, report: SolveReport) -> str:
        if report.outcome.status != "unsat":
            raise SolveError("explain_unsat needs an unsatisfiable report")
        lines = []
        if report.core_minimal is False:
            lines.append("! core may not be minimal (budget exhausted)")
        for view, row_keys in report.core_groups or []:
            rendered = ",".join(str(k) for k in row_keys)
            lines.append(f"{view}[{rendered}]")
        return "\n".join(lines)

    def check(self, store: Optional[Store] = None) -> list[Violation]:
        return check_hard_views(store or self.store, self.program)


def engine_compile(
    schema_text: str,
    reconfig_text: Optional[str] = None,
    rewrites: bool = True,
    priority_column: str = "priority",
    filename: str = "<sql>",
) -> Engine:
    tables, views = parse_program(schema_text, filename)
    program = classify_views(tables, views)
    template = synthesize(program, rewrites=rewrites)
    reconfig_template = None
    if reconfig_text is not None:
        r_tables, r_views = parse_program(reconfig_text, filename + " (reconfig)")
        r_program = classify_views(r_tables, r_views)
        if {t.name: t for t in r_tables} != {t.name: t for t in tables}:
            raise WeaveError(
                "reconfiguration schema must share the primary schema's tables"
            )
        reconfig_template = synthesize(r_program, rewrites=rewrites)
    else:
        reconfig_template = template
    return Engine(program, template, reconfig_template, priority_column)


def verify_deltas(engine: Engine, store: Store, deltas: list[Delta]) -> list[Violation]:
    """Apply deltas to a copy of the store and re-check every hard view."""
    trial = store.snapshot()
    trial.apply_deltas(deltas)
    return check_hard_views(trial, engine.program)


def parse_budget(text: str) -> Budget:
    """'5s', '200ms', or '50000n' (search nodes)."""
    text = text.strip()
    if text.endswith("ms"):
        return Budget.of_seconds(float(text[:-2]) / 1000.0)
    if text.endswith("s"):
        return Budget.of_seconds(float(text[:-1]))
    if text.endswith("n"):
        return Budget.of_nodes(int(text[:-1]))
    raise WeaveError(f"cannot parse budget {text!r} (want e.g. 5s, 200ms, 50000n)")
