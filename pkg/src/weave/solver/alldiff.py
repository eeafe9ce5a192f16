"""Matching-based all-different filtering.

Builds the variable/value bipartite graph, finds a maximum matching with
Hopcroft-Karp, fails when some variable stays unmatched, and prunes every edge
that lies neither on an alternating cycle (same SCC) nor on an alternating
path from a free value.
"""

from __future__ import annotations

from collections import deque
from typing import Optional

NIL = -1


def hopcroft_karp(n_left: int, n_right: int, adj: list[list[int]]) -> tuple[int, list[int], list[int]]:
    """Maximum bipartite matching; returns (size, match_left, match_right)."""
    match_l = [NIL] * n_left
    match_r = [NIL] * n_right
    dist = [0] * n_left
    INF = float("inf")

    def bfs() -> bool:
        queue = deque()
        for u in range(n_left):
            if match_l[u] == NIL:
                dist[u] = 0
                queue.append(u)
            else:
                dist[u] = INF
        found = False
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                w = match_r[v]
                if w == NIL:
                    found = True
                elif dist[w] is INF:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        return found

    def dfs(u: int) -> bool:
        for v in adj[u]:
            w = match_r[v]
            if w == NIL or (dist[w] == dist[u] + 1 and dfs(w)):
                match_l[u] = v
                match_r[v] = u
                return True
        dist[u] = INF
        return False

    size = 0
    while bfs():
        for u in range(n_left):
            if match_l[u] == NIL and dfs(u):
                size += 1
    return size, match_l, match_r


def _tarjan_scc(n: int, out_edges: list[list[int]]) -> list[int]:
    """Iterative Tarjan; returns component id per node."""
    index = [NIL] * n
    low = [0] * n
    on_stack = [False] * n
    comp = [NIL] * n
    stack: list[int] = []
    counter = 0
    comp_count = 0
    for root in range(n):
        if index[root] != NIL:
            continue
        work = [(root, 0)]
        while work:
            node, edge_idx = work.pop()
            if edge_idx == 0:
                index[node] = low[node] = counter
                counter += 1
                stack.append(node)
                on_stack[node] = True
            advanced = False
            edges = out_edges[node]
            while edge_idx < len(edges):
                nxt = edges[edge_idx]
                edge_idx += 1
                if index[nxt] == NIL:
                    work.append((node, edge_idx))
                    work.append((nxt, 0))
                    advanced = True
                    break
                if on_stack[nxt]:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            if low[node] == index[node]:
                while True:
                    member = stack.pop()
                    on_stack[member] = False
                    comp[member] = comp_count
                    if member == node:
                        break
                comp_count += 1
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
    return comp


def regin_prune(domains: list[list[int]]) -> Optional[list[tuple[int, list[int]]]]:
    """Return per-variable value removals, or None when no perfect matching exists."""
    n = len(domains)
    values = sorted({v for dom in domains for v in dom})
    if len(values) < n:
        return None
    val_idx = {v: i for i, v in enumerate(values)}
    m = len(values)
    adj = [[val_idx[v] for v in dom] for dom in domains]

    size, match_l, match_r = hopcroft_karp(n, m, adj)
    if size < n:
        return None

    # Directed graph: vars 0..n-1, values n..n+m-1.
    # Matched edge var->val; unmatched edge val->var.
    total = n + m
    out_edges: list[list[int]] = [[] for _ in range(total)]
    for u in range(n):
        for v in adj[u]:
            if match_l[u] == v:
                out_edges[u].append(n + v)
            else:
                out_edges[n + v].append(u)

    # Values reachable from free values along alternating paths.
    reachable_val = [False] * m
    queue = deque()
    seen = [False] * total
    for v in range(m):
        if match_r[v] == NIL:
            reachable_val[v] = True
            seen[n + v] = True
            queue.append(n + v)
    while queue:
        node = queue.popleft()
        for nxt in out_edges[node]:
            if not seen[nxt]:
                seen[nxt] = True
                if nxt >= n:
                    reachable_val[nxt - n] = True
                queue.append(nxt)

    comp = _tarjan_scc(total, out_edges)

    removals: list[tuple[int, list[int]]] = []
    for u in range(n):
        banned = []
        for v in adj[u]:
            if match_l[u] == v:
                continue
            if reachable_val[v]:
                continue
            if comp[u] == comp[n + v]:
                continue
            banned.append(values[v])
        if banned:
            removals.append((u, banned))
    return removals
