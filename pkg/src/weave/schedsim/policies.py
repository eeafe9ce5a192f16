"""Bundled schema and policy files, plus the policy line-count lint.

A policy file's size is counted the way the case study reports it: each
clause (select, from, every join, where, group by, having) is a line, and
every extra predicate separated by and/or adds one.
"""

from __future__ import annotations

from importlib import resources

from ..sqlast import BinOp, QueryAst
from ..sqlfront import parse_program

PACK = (
    "node_predicates",
    "capacity_cpu",
    "capacity_mem",
    "requested_node",
    "no_reassign",
    "node_affinity",
    "node_anti_affinity",
    "pod_anti_affinity",
    "zone_anti_affinity",
    "pod_affinity",
    "service_affinity",
    "load_balance_cpu",
    "load_balance_mem",
    "spread",
    "pods_per_node_cap",
    "even_spread",
)


def _read(name: str) -> str:
    return (resources.files(__package__) / "policies" / f"{name}.sql").read_text()


def sim_schema() -> str:
    return _read("schema")


def policies_pack() -> dict[str, str]:
    """All bundled policy files, keyed by policy name."""
    return {name: _read(name) for name in PACK}


def compose(policy_names: list[str]) -> str:
    """Schema plus the selected policy files as one program."""
    parts = [sim_schema()]
    pack = policies_pack()
    for name in policy_names:
        parts.append(pack[name])
    return "\n".join(parts)


def _predicates(expr) -> int:
    if isinstance(expr, BinOp) and expr.op in ("and", "or"):
        return _predicates(expr.left) + _predicates(expr.right)
    return 1


def query_line_count(ast: QueryAst) -> int:
    count = 2  # select + from
    for join in ast.joins:
        count += _predicates(join.on)  # join line carries its first predicate
    if ast.where is not None:
        count += _predicates(ast.where)
    if ast.group_by:
        count += 1
    if ast.having is not None:
        count += _predicates(ast.having)
    return count


def policy_line_count(text: str) -> int:
    _, views = parse_program(text)
    return sum(query_line_count(v.ast) for v in views)
