"""Schedule traces shared by the greedy and solver-backed schedulers."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional


@dataclass
class Event:
    time_ms: int
    batch: int
    placed: list[tuple[str, str]] = field(default_factory=list)  # (pod, node)
    failed: list[str] = field(default_factory=list)
    evicted: list[str] = field(default_factory=list)
    vars: int = 0
    constraints: int = 0
    nodes_explored: int = 0
    escalated: bool = False


@dataclass
class ScheduleTrace:
    label: str
    events: list[Event] = field(default_factory=list)
    total_pods: int = 0

    def final_placements(self) -> dict[str, str]:
        placed: dict[str, str] = {}
        for event in self.events:
            for pod in event.evicted:
                placed.pop(pod, None)
            for pod, node in event.placed:
                placed[pod] = node
        return placed

    def placed_fraction(self) -> float:
        if self.total_pods == 0:
            return 1.0
        return len(self.final_placements()) / self.total_pods

    def failed_pods(self) -> set[str]:
        final = self.final_placements()
        out = set()
        for event in self.events:
            out.update(event.failed)
        return out - set(final)

    def eviction_count(self) -> int:
        return sum(len(e.evicted) for e in self.events)

    def placed_by_priority_over_time(self, priorities: dict[str, int]) -> list[tuple[int, dict[int, int]]]:
        placed: dict[str, str] = {}
        series = []
        for event in self.events:
            for pod in event.evicted:
                placed.pop(pod, None)
            for pod, node in event.placed:
                placed[pod] = node
            counts: dict[int, int] = {}
            for pod in placed:
                prio = priorities.get(pod, 0)
                counts[prio] = counts.get(prio, 0) + 1
            series.append((event.time_ms, counts))
        return series

    def model_sizes(self) -> list[tuple[int, int]]:
        """(cumulative placed before the event, vars in that invocation)."""
        total = 0
        out = []
        for event in self.events:
            if event.vars or event.constraints:
                out.append((total, event.vars))
            total += len(event.placed) - len(event.evicted)
        return out

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(
            ["time_ms", "batch", "placed", "failed", "evicted", "vars", "constraints", "nodes", "escalated"]
        )
        for e in self.events:
            writer.writerow(
                [
                    e.time_ms,
                    e.batch,
                    ";".join(f"{p}:{n}" for p, n in e.placed),
                    ";".join(e.failed),
                    ";".join(e.evicted),
                    e.vars,
                    e.constraints,
                    e.nodes_explored,
                    "true" if e.escalated else "false",
                ]
            )
        return out.getvalue()

    def metrics(self) -> dict:
        return {
            "label": self.label,
            "total_pods": self.total_pods,
            "placed": len(self.final_placements()),
            "placed_fraction": self.placed_fraction(),
            "failed": sorted(self.failed_pods()),
            "evictions": self.eviction_count(),
            "model_sizes": self.model_sizes(),
        }
