"""Synthetic clusters and workloads for the scheduler simulator."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Optional

from ..relstore import UNSET, Store
from ..sqlfront import Program


@dataclass(frozen=True)
class NodeSpec:
    name: str
    zone_id: int
    cpu_capacity: int
    mem_capacity: int
    unschedulable: bool = False
    memory_pressure: bool = False
    disk_pressure: bool = False
    ready: bool = True


@dataclass(frozen=True)
class PodSpec:
    name: str
    app: str = ""
    role: str = ""
    priority: int = 1
    cpu: int = 1
    mem: int = 1
    requested_node: str = ""
    node_affinity: tuple[str, ...] = ()  # empty = no affinity requirement
    has_node_affinity: bool = False
    node_anti_affinity: tuple[str, ...] = ()
    anti_affinity_group: str = ""
    zone_anti_affinity_group: str = ""
    service_group: str = ""
    spread_group: str = ""
    capped_group: str = ""
    arrival_ms: int = 0


@dataclass
class ClusterSpec:
    nodes: int = 10
    cpu_capacity: int = 10_000  # milli-units
    mem_capacity: int = 10_000
    zones: int = 2
    seed: int = 0

    def build(self) -> list[NodeSpec]:
        if self.nodes <= 0 or self.cpu_capacity <= 0 or self.mem_capacity <= 0:
            raise ValueError("cluster needs positive node count and capacities")
        return [
            NodeSpec(
                name=f"n{i:03d}",
                zone_id=i % max(1, self.zones),
                cpu_capacity=self.cpu_capacity,
                mem_capacity=self.mem_capacity,
            )
            for i in range(self.nodes)
        ]


@dataclass
class AppSpec:
    apps: int = 8
    cache_per_app: int = 5
    web_per_app: int = 5
    cpu_mean: float = 500.0  # exponential means, milli-units
    mem_mean: float = 500.0
    arrival_gap_ms: int = 20

    def __post_init__(self):
        if self.apps < 1 or self.cache_per_app < 1 or self.web_per_app < 0:
            raise ValueError("group sizes must be at least 1")
        if self.cpu_mean <= 0 or self.mem_mean <= 0:
            raise ValueError("demand means must be positive")


def _draw_demand(rng: random.Random, mean: float, cap: int) -> int:
    value = int(math.ceil(rng.expovariate(1.0 / mean)))
    return max(1, min(value, cap))


def generate_workload(cluster: ClusterSpec, apps: AppSpec, seed: int) -> tuple[list[NodeSpec], list[PodSpec]]:
    """Cache pods are mutually anti-affine per app; web pods are mutually
    anti-affine per app and must share a node with one of their app's caches.
    Deterministic for a fixed seed."""
    rng = random.Random(seed)
    nodes = cluster.build()
    pods: list[PodSpec] = []
    t = 0
    for a in range(apps.apps):
        app = f"app{a:02d}"
        for c in range(apps.cache_per_app):
            pods.append(
                PodSpec(
                    name=f"{app}-cache-{c}",
                    app=app,
                    role="cache",
                    cpu=_draw_demand(rng, apps.cpu_mean, cluster.cpu_capacity),
                    mem=_draw_demand(rng, apps.mem_mean, cluster.mem_capacity),
                    anti_affinity_group=f"{app}/cache",
                    arrival_ms=t,
                )
            )
            t += apps.arrival_gap_ms
        for w in range(apps.web_per_app):
            pods.append(
                PodSpec(
                    name=f"{app}-web-{w}",
                    app=app,
                    role="web",
                    cpu=_draw_demand(rng, apps.cpu_mean, cluster.cpu_capacity),
                    mem=_draw_demand(rng, apps.mem_mean, cluster.mem_capacity),
                    anti_affinity_group=f"{app}/web",
                    arrival_ms=t,
                )
            )
            t += apps.arrival_gap_ms
    return nodes, pods


def build_store(program: Program, nodes: list[NodeSpec], pods: Optional[list[PodSpec]] = None) -> Store:
    store = Store()
    for table in program.tables.values():
        store.create_table(table)
    store.insert_rows(
        "node",
        [
            (
                n.name, n.zone_id, n.cpu_capacity, n.mem_capacity,
                n.unschedulable, n.memory_pressure, n.disk_pressure, n.ready,
            )
            for n in nodes
        ],
    )
    for pod in pods or []:
        insert_pod(store, pod)
    return store


def pod_row(pod: PodSpec, node_name=UNSET, current_node: str = "") -> tuple:
    return (
        pod.name, pod.app, pod.role, pod.priority, pod.cpu, pod.mem,
        pod.requested_node != "", pod.requested_node,
        pod.has_node_affinity or bool(pod.node_affinity),
        pod.anti_affinity_group, pod.zone_anti_affinity_group,
        pod.service_group, pod.spread_group, pod.capped_group,
        current_node, node_name,
    )


def insert_pod(store: Store, pod: PodSpec, node_name=UNSET, current_node: str = "") -> None:
    store.insert_rows("pending_pod", [pod_row(pod, node_name, current_node)])
    if pod.node_affinity:
        store.insert_rows(
            "pod_node_affinity", [(pod.name, n) for n in pod.node_affinity]
        )
    if pod.node_anti_affinity:
        store.insert_rows(
            "pod_node_anti_affinity", [(pod.name, n) for n in pod.node_anti_affinity]
        )
