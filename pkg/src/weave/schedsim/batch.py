"""Solver-backed batch scheduler.

Arrivals accumulate into batches of up to `b` pods, or until the batch window
elapses on the virtual clock after the last request. Every flush is one joint
solve over all pending (unset, not permanently failed) rows; an unsatisfiable
batch escalates to the reconfiguration model and, failing that, degrades to
one-pod-at-a-time solves so the rest of the batch still lands.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..compiler import Scope
from ..relstore import UNSET, Store, _Unset
from ..runtime import Engine, engine_compile
from ..solver import Budget
from .policies import compose
from .trace import Event, ScheduleTrace
from .workload import NodeSpec, PodSpec, build_store, insert_pod


@dataclass
class BatchConfig:
    b: int = 10
    window_ms: int = 200
    budget: Budget = field(default_factory=lambda: Budget.of_nodes(200_000))
    policies: tuple[str, ...] = ("node_predicates", "capacity_cpu", "capacity_mem")
    escalate: bool = True
    rewrites: bool = True


def _pending_scope(failed: set[str]) -> Scope:
    return Scope(mode="pending", row_filter=lambda table, key: key not in failed)


def _single_scope(pod_name: str) -> Scope:
    return Scope(mode="pending", row_filter=lambda table, key: key == pod_name)


def batch_schedule(
    nodes: list[NodeSpec],
    arrivals: list[PodSpec],
    config: Optional[BatchConfig] = None,
) -> tuple[ScheduleTrace, Store, Engine]:
    config = config or BatchConfig()
    if config.b < 1:
        raise ValueError("batch size must be at least 1")
    engine = engine_compile(compose(list(config.policies)), rewrites=config.rewrites)
    store = build_store(engine.program, nodes)
    engine.connect(store)

    trace = ScheduleTrace(label=f"batch(b={config.b})")
    trace.total_pods = len(arrivals)
    failed: set[str] = set()

    ordered = sorted(arrivals, key=lambda p: (p.arrival_ms, p.name))
    batches = _batches(ordered, config.b, config.window_ms)
    for batch_id, (flush_time, batch_pods) in enumerate(batches):
        for pod in batch_pods:
            insert_pod(store, pod)
        event = Event(time_ms=flush_time, batch=batch_id)
        placed_before = _placed_cells(store)
        report = engine.solve(
            config.budget, scope=_pending_scope(failed), escalate=config.escalate
        )
        if report.outcome.is_sat:
            engine.apply(report)
            event.escalated = report.escalated
            event.vars = report.model_stats.get("vars", 0)
            event.constraints = report.model_stats.get("constraints", 0)
            event.nodes_explored = report.stats.nodes
            _record(event, report.deltas, placed_before, failed)
        else:
            # Joint batch is infeasible even after escalation: place pods one
            # at a time so the feasible subset still lands.
            event.escalated = report.escalated
            pending = [
                pod.name for pod in batch_pods if pod.name not in failed
            ]
            for pod_name in pending:
                single = engine.solve(
                    config.budget, scope=_single_scope(pod_name), escalate=False
                )
                event.vars = max(event.vars, single.model_stats.get("vars", 0))
                event.nodes_explored += single.stats.nodes
                if single.outcome.is_sat:
                    engine.apply(single)
                    _record(event, single.deltas, placed_before, failed)
                else:
                    failed.add(pod_name)
                    event.failed.append(pod_name)
        trace.events.append(event)
    return trace, store, engine


def _batches(ordered: list[PodSpec], b: int, window_ms: int):
    out = []
    current: list[PodSpec] = []
    for i, pod in enumerate(ordered):
        current.append(pod)
        is_last = i + 1 == len(ordered)
        gap = None if is_last else ordered[i + 1].arrival_ms - pod.arrival_ms
        if len(current) == b:
            out.append((pod.arrival_ms, list(current)))
            current = []
        elif is_last or gap > window_ms:
            out.append((pod.arrival_ms + window_ms, list(current)))
            current = []
    return out


def _placed_cells(store: Store) -> dict[str, str]:
    table = store.tables["pending_pod"]
    name_idx = table.column_index("pod_name")
    node_idx = table.column_index("node_name")
    out = {}
    for row in store.rows("pending_pod"):
        if not isinstance(row[node_idx], _Unset):
            out[row[name_idx]] = row[node_idx]
    return out


def _record(event: Event, deltas, placed_before: dict[str, str], failed: set[str]):
    for delta in deltas:
        if delta.table != "pending_pod":
            continue
        pod = delta.row_key
        if isinstance(delta.new_value, _Unset):
            if pod in placed_before:
                event.evicted.append(pod)
            else:
                failed.add(pod)
                event.failed.append(pod)
        else:
            previous = placed_before.get(pod)
            if previous != delta.new_value:
                event.placed.append((pod, delta.new_value))
