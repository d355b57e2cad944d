"""Communication plans for fully-connected, neighbor and interval debates.

Agents are 0-indexed internally; ``label(k)`` gives the 1-indexed display name.
Every topology goes through the same modular construction: agent ``k`` reads
``(k + l * gap) % n`` for ``l = 0 .. group_size - 1``. Neighbor is that
construction with ``gap = 1, group_size = 3``; fully-connected is
``gap = 1, group_size = n``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .errors import InvalidConfig


class TopologyKind(str, Enum):
    FULLY_CONNECTED = "fc"
    NEIGHBOR = "nc"
    INTERVAL = "ic"

    @classmethod
    def parse(cls, value: "str | TopologyKind") -> "TopologyKind":
        if isinstance(value, cls):
            return value
        aliases = {
            "fc": cls.FULLY_CONNECTED,
            "fully_connected": cls.FULLY_CONNECTED,
            "nc": cls.NEIGHBOR,
            "neighbor": cls.NEIGHBOR,
            "ic": cls.INTERVAL,
            "interval": cls.INTERVAL,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise InvalidConfig(f"unknown topology kind: {value!r}") from None


NEIGHBOR_GROUP_SIZE = 3


def label(index: int) -> str:
    return f"A{index + 1}"


@dataclass(frozen=True)
class CommunicationPlan:
    kind: TopologyKind
    n_agents: int
    group_size: int
    gap: int
    peers: tuple[tuple[int, ...], ...]
    references: tuple[tuple[int, ...], ...]
    degraded: bool = False
    warnings: tuple[str, ...] = ()

    def peers_of(self, k: int) -> tuple[int, ...]:
        return self.peers[k]

    def references_of(self, k: int) -> tuple[int, ...]:
        return self.references[k]


@dataclass(frozen=True)
class TopologyReport:
    message_count: int
    components: tuple[frozenset[int], ...]
    min_peer_distance: dict[int, int | None] = field(hash=False)
    # None means some agent never hears from some other agent.
    rounds_to_full_propagation: int | None

    @property
    def connected(self) -> bool:
        return len(self.components) == 1


def interval_gap(n_agents: int, group_size: int) -> int:
    return math.ceil(n_agents / group_size)


def _modular_plan(kind: TopologyKind, n: int, m: int, gap: int) -> CommunicationPlan:
    references = []
    peers = []
    warnings = []
    for k in range(n):
        raw = [(k + l * gap) % n for l in range(m)]
        refs: list[int] = []
        for j in raw:
            if j not in refs:
                refs.append(j)
        if len(refs) < len(raw):
            warnings.append(
                f"{label(k)}: offsets {raw} collide mod {n}; "
                f"{len(raw) - len(refs)} reference(s) dropped"
            )
        references.append(tuple(refs))
        peers.append(tuple(refs[1:]))
    return CommunicationPlan(
        kind=kind,
        n_agents=n,
        group_size=m,
        gap=gap,
        peers=tuple(peers),
        references=tuple(references),
        degraded=bool(warnings),
        warnings=tuple(warnings),
    )


def build_plan(kind: TopologyKind | str, n_agents: int, group_size: int = NEIGHBOR_GROUP_SIZE) -> CommunicationPlan:
    """Build the per-agent peer and reference sets for one topology.

    ``group_size`` counts the agent itself, so each agent has at most
    ``group_size - 1`` peers. It is ignored for fully-connected plans and
    fixed to 3 for neighbor plans. Wraparound collisions are removed and the
    plan is flagged ``degraded``.
    """
    kind = TopologyKind.parse(kind)
    if n_agents < 2:
        raise InvalidConfig(f"a communication plan needs at least 2 agents, got {n_agents}")
    if kind is TopologyKind.FULLY_CONNECTED:
        return _modular_plan(kind, n_agents, n_agents, 1)
    m = NEIGHBOR_GROUP_SIZE if kind is TopologyKind.NEIGHBOR else group_size
    if m < 2:
        raise InvalidConfig(f"group_size must be at least 2, got {m}")
    if m > n_agents:
        raise InvalidConfig(f"group_size {m} exceeds n_agents {n_agents}")
    gap = 1 if kind is TopologyKind.NEIGHBOR else interval_gap(n_agents, m)
    return _modular_plan(kind, n_agents, m, gap)


def solo_plan() -> CommunicationPlan:
    """Plan for a lone agent that only ever reads itself."""
    return CommunicationPlan(
        kind=TopologyKind.FULLY_CONNECTED,
        n_agents=1,
        group_size=1,
        gap=1,
        peers=((),),
        references=((0,),),
    )


def circular_distance(a: int, b: int, n: int) -> int:
    d = abs(a - b) % n
    return min(d, n - d)


def diversity_profile(plan: CommunicationPlan) -> dict[int, int | None]:
    """Minimum pairwise circular index distance inside each reference set.

    Agents whose reference set is a singleton map to None.
    """
    out: dict[int, int | None] = {}
    n = plan.n_agents
    for k, refs in enumerate(plan.references):
        ring = sorted(refs)
        if len(ring) < 2:
            out[k] = None
            continue
        # The closest pair on a ring is adjacent in sorted order.
        gaps = [b - a for a, b in zip(ring, ring[1:])]
        gaps.append(n - ring[-1] + ring[0])
        out[k] = min(gaps)
    return out


def _flow_successors(plan: CommunicationPlan) -> list[list[int]]:
    # Agent k reading j means j's response flows into k next round.
    succ: list[list[int]] = [[] for _ in range(plan.n_agents)]
    for k, refs in enumerate(plan.references):
        for j in refs:
            if j != k:
                succ[j].append(k)
    return succ


def _bfs_layers(succ: list[list[int]], source: int) -> dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in succ[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def analyze(plan: CommunicationPlan) -> TopologyReport:
    n = plan.n_agents
    succ = _flow_successors(plan)
    dist = [_bfs_layers(succ, j) for j in range(n)]

    components: list[frozenset[int]] = []
    assigned: set[int] = set()
    for k in range(n):
        if k in assigned:
            continue
        comp = frozenset(j for j in dist[k] if k in dist[j])
        assigned |= comp
        components.append(comp)

    if all(len(d) == n for d in dist):
        rounds = max(max(d.values()) for d in dist)
    else:
        rounds = None

    return TopologyReport(
        message_count=sum(len(p) for p in plan.peers),
        components=tuple(components),
        min_peer_distance=diversity_profile(plan),
        rounds_to_full_propagation=rounds,
    )


def overhead_equivalence_check(n_agents: int) -> bool:
    """True iff interval (m=3) and neighbor plans both cost exactly 2N messages."""
    if n_agents < 3:
        raise InvalidConfig("overhead comparison needs at least 3 agents")
    interval = build_plan(TopologyKind.INTERVAL, n_agents, 3)
    neighbor = build_plan(TopologyKind.NEIGHBOR, n_agents)
    if interval.degraded or neighbor.degraded:
        return False
    ic = analyze(interval).message_count
    nc = analyze(neighbor).message_count
    return ic == nc == 2 * n_agents


def coverage(plan: CommunicationPlan) -> set[int]:
    return set().union(*map(set, plan.references))


def to_dot(plan: CommunicationPlan) -> str:
    lines = [f'digraph "{plan.kind.value}_n{plan.n_agents}_m{plan.group_size}" {{']
    for k in range(plan.n_agents):
        lines.append(f"  {label(k)};")
    for k, peers in enumerate(plan.peers):
        for j in peers:
            lines.append(f"  {label(j)} -> {label(k)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def verification_report(plan: CommunicationPlan) -> tuple[str, list[str]]:
    """Human-readable summary plus a list of invariant violations."""
    report = analyze(plan)
    n = plan.n_agents
    violations: list[str] = []

    if coverage(plan) != set(range(n)):
        violations.append("reference sets do not cover every agent")
    for k in range(n):
        if plan.references[k][0] != k:
            violations.append(f"{label(k)} does not reference itself first")
        if k in plan.peers[k]:
            violations.append(f"{label(k)} lists itself as a peer")
        if any(not 0 <= j < n for j in plan.references[k]):
            violations.append(f"{label(k)} has an out-of-range reference")
    if plan.kind is TopologyKind.INTERVAL and plan.gap != interval_gap(n, plan.group_size):
        violations.append(f"gap {plan.gap} != ceil({n}/{plan.group_size})")
    if plan.kind is TopologyKind.FULLY_CONNECTED and report.message_count != n * (n - 1):
        violations.append("fully-connected message count is not N(N-1)")
    if report.message_count > n * (plan.group_size - 1):
        violations.append("message count exceeds N(m-1)")
    flat = [j for comp in report.components for j in comp]
    if sorted(flat) != list(range(n)):
        violations.append("components do not partition the agents")

    lines = [
        f"topology: {plan.kind.value}  N={n}  m={plan.group_size}  g={plan.gap}",
        f"messages per round: {report.message_count}",
    ]
    for k in range(n):
        refs = ", ".join(label(j) for j in plan.references[k])
        lines.append(
            f"  {label(k)}: references [{refs}]  min distance {report.min_peer_distance[k]}"
        )
    comps = " ".join(
        "{" + ",".join(label(j) for j in sorted(c)) + "}" for c in report.components
    )
    if report.connected:
        lines.append(f"components: 1 {comps}")
    else:
        lines.append(f"DISCONNECTED: {len(report.components)} components {comps}")
    rounds = report.rounds_to_full_propagation
    lines.append(f"rounds to full propagation: {rounds if rounds is not None else 'unreachable'}")
    for w in plan.warnings:
        lines.append(f"DEGRADED: {w}")
    for v in violations:
        lines.append(f"VIOLATION: {v}")
    return "\n".join(lines), violations
