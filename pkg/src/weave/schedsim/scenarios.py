"""Canned experiments: greedy-vs-batch packing, heterogeneous workloads,
priority preemption waves, and migration-budget rebalancing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from ..compiler import Scope
from ..relstore import Store, _Unset
from ..runtime import Engine, engine_compile
from ..solver import Budget
from .batch import BatchConfig, batch_schedule
from .greedy import GreedyConfig, greedy_schedule
from .policies import compose, sim_schema
from .trace import ScheduleTrace
from .workload import AppSpec, ClusterSpec, NodeSpec, PodSpec, build_store, generate_workload

PACKING_POLICIES = ("node_predicates", "capacity_cpu", "capacity_mem")
HETERO_POLICIES = PACKING_POLICIES + ("pod_anti_affinity", "pod_affinity")


def packing_instance() -> tuple[list[NodeSpec], list[PodSpec]]:
    """Two nodes of capacity 10; arrivals sized 3, 7, 3, 7.

    Greedy parks the second 3 on the emptier node and strands the last 7; a
    joint solve packs {3,7} per node. The named figure gives no numeric sizes,
    so this instance is our own construction showing that failure mode.
    """
    nodes = [
        NodeSpec("a", 0, 10, 10_000),
        NodeSpec("b", 0, 10, 10_000),
    ]
    sizes = [3, 7, 3, 7]
    pods = [
        PodSpec(name=f"pod{i+1}", app="demo", cpu=size, mem=1, arrival_ms=i * 10)
        for i, size in enumerate(sizes)
    ]
    return nodes, pods


def greedy_vs_batch(b: int = 4, budget: Optional[Budget] = None) -> dict:
    nodes, pods = packing_instance()
    greedy = greedy_schedule(nodes, pods, GreedyConfig(policies=PACKING_POLICIES))
    batch, store, engine = batch_schedule(
        nodes,
        pods,
        BatchConfig(
            b=b,
            policies=PACKING_POLICIES,
            budget=budget or Budget.of_nodes(100_000),
            escalate=False,
        ),
    )
    return {
        "greedy": greedy,
        "batch": batch,
        "store": store,
        "engine": engine,
    }


def hetero_workload(
    seed: int,
    cluster: Optional[ClusterSpec] = None,
    apps: Optional[AppSpec] = None,
    b: int = 10,
    budget: Optional[Budget] = None,
) -> dict:
    cluster = cluster or ClusterSpec(nodes=10, cpu_capacity=10_000, mem_capacity=10_000)
    apps = apps or AppSpec(apps=8, cache_per_app=5, web_per_app=5, cpu_mean=900.0, mem_mean=900.0)
    nodes, pods = generate_workload(cluster, apps, seed)
    greedy = greedy_schedule(nodes, pods, GreedyConfig(policies=HETERO_POLICIES))
    batch, store, engine = batch_schedule(
        nodes,
        pods,
        BatchConfig(
            b=b,
            policies=HETERO_POLICIES,
            budget=budget or Budget.of_nodes(100_000),
            escalate=False,
        ),
    )
    return {"greedy": greedy, "batch": batch, "store": store, "engine": engine,
            "nodes": nodes, "pods": pods}


def preemption_waves(
    nodes: int = 10,
    per_wave: int = 10,
    wave_gap_ms: int = 5_000,
    capacity: int = 1_000,
) -> tuple[list[NodeSpec], list[PodSpec]]:
    """Three priority waves sized so only the highest wave fits."""
    node_specs = [NodeSpec(f"n{i:02d}", 0, capacity, capacity) for i in range(nodes)]
    pods = []
    for wave, (prio, label) in enumerate([(1, "low"), (2, "mid"), (3, "high")]):
        for i in range(per_wave):
            pods.append(
                PodSpec(
                    name=f"{label}-{i}",
                    app=label,
                    priority=prio,
                    cpu=capacity,
                    mem=capacity,
                    arrival_ms=wave * wave_gap_ms + i * 10,
                )
            )
    return node_specs, pods


def preemption_scenario(
    seed: int = 0,
    nodes: int = 10,
    per_wave: int = 10,
    budget: Optional[Budget] = None,
) -> dict:
    node_specs, pods = preemption_waves(nodes=nodes, per_wave=per_wave)
    greedy = greedy_schedule(
        node_specs, pods, GreedyConfig(policies=PACKING_POLICIES, preempt=True)
    )
    batch, store, engine = batch_schedule(
        node_specs,
        pods,
        BatchConfig(
            b=per_wave,
            policies=PACKING_POLICIES,
            budget=budget or Budget.of_nodes(300_000),
            escalate=True,
        ),
    )
    priorities = {p.name: p.priority for p in pods}
    return {
        "greedy": greedy,
        "batch": batch,
        "store": store,
        "engine": engine,
        "priorities": priorities,
        "pods": pods,
    }


# -- rebalancing ---------------------------------------------------------------


def _migration_budget_sql(k: int) -> str:
    return f"""
-- @hard_constraint
create view constraint_migration_budget as
select count(pending_pod.pod_name) from pending_pod
where pending_pod.node_name != pending_pod.current_node
having count(pending_pod.pod_name) <= {k};
"""


_BALANCE_SQL = """
-- @soft_constraint
create view constraint_balance_spread as
select min(mem_spare) - max(mem_spare) from spare_mem_per_node;
"""


@dataclass
class RebalanceResult:
    loads_before: dict[str, int]
    loads_after: dict[str, int]
    migrations: list[tuple[str, str, str]]  # (vm, from, to)
    spread_before: int
    spread_after: int
    greedy_spread: int
    capacities: dict[str, int]

    def spread(self, loads: dict[str, int]) -> int:
        return max(loads.values()) - min(loads.values())


def rebalance_instance(seed: int, hosts: int = 8, vms: int = 40, capacity: int = 16_000):
    """Deterministic skewed placement: every host is loaded, but unevenly.

    The node table is emitted emptiest-first so the solver's ascending value
    order tries the least-loaded hosts before the hot ones.
    """
    import random

    rng = random.Random(seed)
    counts = _skewed_counts(hosts, vms)
    sizes = [rng.randrange(800, 2000, 100) for _ in range(vms)]
    placements: dict[str, str] = {}
    loads = {f"h{i:02d}": 0 for i in range(hosts)}
    pods = []
    vm_idx = 0
    for host_i, count in enumerate(counts):
        host = f"h{host_i:02d}"
        for _ in range(count):
            name = f"vm{vm_idx:02d}"
            vm_idx += 1
            size = sizes[vm_idx - 1]
            placements[name] = host
            loads[host] += size
            pods.append(PodSpec(name=name, app="vm", role="vm", cpu=1, mem=size))
    order = sorted(loads, key=lambda h: (loads[h], h))
    node_specs = [NodeSpec(name, 0, capacity, capacity) for name in order]
    return node_specs, pods, placements


def _skewed_counts(hosts: int, vms: int) -> list[int]:
    """Front-loaded VM counts per host, at least one VM everywhere."""
    weights = [hosts - i for i in range(hosts)]  # hosts, hosts-1, ..., 1
    total = sum(weights)
    counts = [max(1, (vms * w) // total) for w in weights]
    while sum(counts) < vms:
        counts[counts.index(max(counts))] += 1
    while sum(counts) > vms:
        counts[counts.index(max(counts))] -= 1
    return counts


def rebalance_scenario(
    seed: int = 0,
    hosts: int = 8,
    vms: int = 40,
    k: int = 5,
    budget: Optional[Budget] = None,
) -> RebalanceResult:
    node_specs, pods, placements = rebalance_instance(seed, hosts, vms)
    text = (
        sim_schema()
        + _policy("capacity_mem")
        + _policy("load_balance_mem")
        + _migration_budget_sql(k)
        + _BALANCE_SQL
    )
    engine = engine_compile(text)
    store = build_store(engine.program, node_specs)
    from .workload import insert_pod

    for pod in pods:
        insert_pod(store, pod, node_name=placements[pod.name], current_node=placements[pod.name])
    engine.connect(store)

    capacities = {n.name: n.mem_capacity for n in node_specs}
    before = _mem_loads(store, node_specs)
    report = engine.solve(budget or Budget.of_nodes(400_000), scope="all")
    migrations = []
    if report.outcome.is_sat:
        for delta in report.deltas:
            if delta.table != "pending_pod" or isinstance(delta.new_value, _Unset):
                continue
            old = placements[delta.row_key]
            if delta.new_value != old:
                migrations.append((delta.row_key, old, delta.new_value))
        engine.apply(report)
    after = _mem_loads(store, node_specs)

    greedy_after = _greedy_rebalance(dict(before), {p.name: p.mem for p in pods},
                                     dict(placements), capacities, k)
    result = RebalanceResult(
        loads_before=before,
        loads_after=after,
        migrations=migrations,
        spread_before=max(before.values()) - min(before.values()),
        spread_after=max(after.values()) - min(after.values()),
        greedy_spread=max(greedy_after.values()) - min(greedy_after.values()),
        capacities=capacities,
    )
    return result


def _policy(name: str) -> str:
    from .policies import policies_pack

    return policies_pack()[name]


def _mem_loads(store: Store, node_specs: list[NodeSpec]) -> dict[str, int]:
    table = store.tables["pending_pod"]
    node_idx = table.column_index("node_name")
    mem_idx = table.column_index("mem_request")
    loads = {n.name: 0 for n in node_specs}
    for row in store.rows("pending_pod"):
        node = row[node_idx]
        if not isinstance(node, _Unset):
            loads[node] += row[mem_idx]
    return loads


def _greedy_rebalance(loads, sizes, placements, capacities, k) -> dict[str, int]:
    """Move the best single VM from the fullest to the emptiest host, k times."""
    for _ in range(k):
        hot = max(sorted(loads), key=lambda h: loads[h])
        cold = min(sorted(loads), key=lambda h: loads[h])
        spread = loads[hot] - loads[cold]
        if spread <= 0:
            break
        best_vm = None
        best_new_spread = spread
        for vm, host in sorted(placements.items()):
            if host != hot:
                continue
            size = sizes[vm]
            if loads[cold] + size > capacities[cold]:
                continue
            moved_hot = loads[hot] - size
            moved_cold = loads[cold] + size
            others = [v for h, v in loads.items() if h not in (hot, cold)]
            new_spread = max(others + [moved_hot, moved_cold]) - min(
                others + [moved_hot, moved_cold]
            )
            if new_spread < best_new_spread:
                best_new_spread = new_spread
                best_vm = vm
        if best_vm is None:
            break
        placements[best_vm] = cold
        loads[hot] -= sizes[best_vm]
        loads[cold] += sizes[best_vm]
    return loads
