"""Greedy one-pod-at-a-time baseline.

Filters nodes by the active hard policies, ranks survivors by most spare
capacity (ties by node id), and places on the top-ranked node. No retries and
no preemption unless the preempting variant is selected, which mimics
single-node eviction of strictly lower-priority pods with retry backoff.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

from .trace import Event, ScheduleTrace
from .workload import NodeSpec, PodSpec


@dataclass
class GreedyConfig:
    policies: tuple[str, ...] = ("node_predicates", "capacity_cpu", "capacity_mem")
    preempt: bool = False
    backoff_ms: int = 500
    max_retries: int = 3


@dataclass
class _State:
    nodes: list[NodeSpec]
    placements: dict[str, str] = field(default_factory=dict)
    pods: dict[str, PodSpec] = field(default_factory=dict)

    def load(self, node: str) -> tuple[int, int]:
        cpu = mem = 0
        for pod_name, n in self.placements.items():
            if n == node:
                pod = self.pods[pod_name]
                cpu += pod.cpu
                mem += pod.mem
        return cpu, mem

    def pods_on(self, node: str) -> list[PodSpec]:
        return [self.pods[p] for p, n in self.placements.items() if n == node]


def _feasible(state: _State, pod: PodSpec, node: NodeSpec, policies, spread_total: int) -> bool:
    if "node_predicates" in policies:
        if node.unschedulable or node.memory_pressure or node.disk_pressure or not node.ready:
            return False
    cpu, mem = state.load(node.name)
    if "capacity_cpu" in policies and cpu + pod.cpu > node.cpu_capacity:
        return False
    if "capacity_mem" in policies and mem + pod.mem > node.mem_capacity:
        return False
    if "requested_node" in policies and pod.requested_node and node.name != pod.requested_node:
        return False
    if "node_affinity" in policies and (pod.has_node_affinity or pod.node_affinity):
        if node.name not in pod.node_affinity:
            return False
    if "node_anti_affinity" in policies and node.name in pod.node_anti_affinity:
        return False
    on_node = state.pods_on(node.name)
    if "pod_anti_affinity" in policies and pod.anti_affinity_group:
        if any(p.anti_affinity_group == pod.anti_affinity_group for p in on_node):
            return False
    if "zone_anti_affinity" in policies and pod.zone_anti_affinity_group:
        zones = {
            _zone(state, p) for p, placed in state.placements.items()
            if state.pods[p].zone_anti_affinity_group == pod.zone_anti_affinity_group
        }
        if node.zone_id in zones:
            return False
    if "pod_affinity" in policies and pod.role == "web":
        if not any(p.role == "cache" and p.app == pod.app for p in on_node):
            return False
    if "service_affinity" in policies and pod.service_group:
        zones = {
            _zone(state, p) for p, placed in state.placements.items()
            if state.pods[p].service_group == pod.service_group
        }
        if zones and node.zone_id not in zones:
            return False
    if "pods_per_node_cap" in policies and pod.capped_group:
        same = sum(1 for p in on_node if p.capped_group == pod.capped_group)
        if same + 1 > 2:
            return False
    if "even_spread" in policies and pod.spread_group:
        ready = sum(1 for n in state.nodes if n.ready)
        bound = math.ceil(spread_total / max(1, ready))
        same = sum(1 for p in on_node if p.spread_group == pod.spread_group)
        if same + 1 > bound:
            return False
    return True


def _zone(state: _State, pod_name: str) -> int:
    node_name = state.placements[pod_name]
    for node in state.nodes:
        if node.name == node_name:
            return node.zone_id
    raise KeyError(node_name)


def _rank(state: _State, pod: PodSpec, candidates: list[NodeSpec]) -> list[NodeSpec]:
    def spare_after(node: NodeSpec) -> int:
        cpu, mem = state.load(node.name)
        return (node.cpu_capacity - cpu - pod.cpu) + (node.mem_capacity - mem - pod.mem)

    return sorted(candidates, key=lambda n: (-spare_after(n), n.name))


def greedy_schedule(
    nodes: list[NodeSpec], arrivals: list[PodSpec], config: Optional[GreedyConfig] = None
) -> ScheduleTrace:
    config = config or GreedyConfig()
    state = _State(nodes=list(nodes))
    trace = ScheduleTrace(label="greedy-preempt" if config.preempt else "greedy")
    trace.total_pods = len(arrivals)
    spread_total = sum(1 for p in arrivals if p.spread_group)

    # (time, seq, retries, pod)
    queue: list[tuple[int, int, int, PodSpec]] = []
    for seq, pod in enumerate(sorted(arrivals, key=lambda p: (p.arrival_ms, p.name))):
        heapq.heappush(queue, (pod.arrival_ms, seq, 0, pod))
    seq_counter = len(arrivals)
    batch = 0

    while queue:
        now, _, retries, pod = heapq.heappop(queue)
        state.pods[pod.name] = pod
        candidates = [
            n for n in state.nodes if _feasible(state, pod, n, config.policies, spread_total)
        ]
        event = Event(time_ms=now, batch=batch)
        batch += 1
        if candidates:
            target = _rank(state, pod, candidates)[0]
            state.placements[pod.name] = target.name
            event.placed.append((pod.name, target.name))
            trace.events.append(event)
            continue
        if config.preempt:
            evicted = _try_preempt(state, pod, config.policies, spread_total)
            if evicted is not None:
                victims, target = evicted
                for victim in victims:
                    del state.placements[victim.name]
                    event.evicted.append(victim.name)
                    seq_counter += 1
                    heapq.heappush(
                        queue, (now + config.backoff_ms, seq_counter, 0, victim)
                    )
                state.placements[pod.name] = target
                event.placed.append((pod.name, target))
                trace.events.append(event)
                continue
            if retries < config.max_retries:
                seq_counter += 1
                heapq.heappush(queue, (now + config.backoff_ms, seq_counter, retries + 1, pod))
                trace.events.append(event)
                continue
        event.failed.append(pod.name)
        trace.events.append(event)
    return trace


def _try_preempt(state: _State, pod: PodSpec, policies, spread_total):
    """Evict the fewest strictly-lower-priority pods on one node; k8s-style
    single-node preemption."""
    best: Optional[tuple[int, str, list[PodSpec]]] = None
    for node in state.nodes:
        lower = sorted(
            (p for p in state.pods_on(node.name) if p.priority < pod.priority),
            key=lambda p: (p.priority, p.name),
        )
        if not lower:
            continue
        removed: list[PodSpec] = []
        feasible = False
        for victim in lower:
            removed.append(victim)
            del state.placements[victim.name]
            if _feasible(state, pod, node, policies, spread_total):
                feasible = True
                break
        for victim in removed:
            state.placements[victim.name] = node.name
        if feasible:
            candidate = (len(removed), node.name, list(removed))
            if best is None or candidate[:2] < best[:2]:
                best = candidate
    if best is None:
        return None
    _, node_name, victims = best
    return victims, node_name
