"""Shared builders and independent brute-force oracles.

The oracles here deliberately avoid the library's own algorithms: cycle
structure comes from pairwise reachability, repair from literal rule
simulation, anchors from exhaustive scoring. Tests freeze expected values
computed by these.
"""

from __future__ import annotations

import itertools
import random

import pytest

from cogmap.graph import (
    CognitiveGraph,
    Concept,
    ConceptKind,
    DependencyEdge,
    Provenance,
    Relation,
    Status,
    label_similarity,
)


def make_concept(cid: str, kind: str = "preference", label: str = "", slot=None,
                 status: str = "grounded", confidence: float = 0.8,
                 provenance: str = "user_confirmed", evidence=None, turn: int = 0,
                 value=None) -> Concept:
    return Concept(
        id=cid, kind=ConceptKind(kind), label=label or f"concept {cid}", slot=slot,
        value=value, confidence=confidence, provenance=Provenance(provenance),
        status=Status(status),
        created_turn=turn,
        evidence=list(evidence) if evidence is not None
        else ([f"v-{cid}"] if status == "grounded" else []),
    )


def make_edge(eid: str, source: str, target: str, relation: str = "enable",
              strength: float = 0.7, status: str = "grounded", turn: int = 0,
              provenance: str = "user_confirmed") -> DependencyEdge:
    return DependencyEdge(
        id=eid, source=source, target=target, relation=Relation(relation),
        strength=strength, status=Status(status), provenance=Provenance(provenance),
        created_turn=turn,
    )


def make_graph(concepts, edges=(), turn: int = 0) -> CognitiveGraph:
    g = CognitiveGraph(turn_counter=turn)
    for c in concepts:
        g.concepts[c.id] = c
    for e in edges:
        g.edges[e.id] = e
    return g


def line_graph(n: int, relation: str = "enable") -> CognitiveGraph:
    concepts = [make_concept(f"c{i}", label=f"node {i}") for i in range(n)]
    edges = [make_edge(f"e{i}", f"c{i}", f"c{i+1}", relation) for i in range(n - 1)]
    return make_graph(concepts, edges)


# ---------------------------------------------------------------------------
# Brute-force oracles
# ---------------------------------------------------------------------------

def reachable(edges: set[tuple[str, str]], start: str) -> set[str]:
    seen = {start}
    frontier = [start]
    while frontier:
        node = frontier.pop()
        for s, t in edges:
            if s == node and t not in seen:
                seen.add(t)
                frontier.append(t)
    return seen


def scc_oracle(nodes, edge_pairs) -> list[set[str]]:
    """SCCs (size >= 2) via pairwise mutual reachability."""
    edge_set = set(edge_pairs)
    reach = {n: reachable(edge_set, n) for n in nodes}
    assigned = set()
    sccs = []
    for n in sorted(nodes):
        if n in assigned:
            continue
        comp = {m for m in nodes if m in reach[n] and n in reach[m]}
        if len(comp) >= 2:
            sccs.append(comp)
            assigned |= comp
    return sorted(sccs, key=min)


def repair_oracle(graph: CognitiveGraph) -> list[str]:
    """Removal order by literal rule simulation: in the first SCC (smallest
    member id), drop the min-strength edge, breaking ties by latest
    created_turn then largest id; repeat until acyclic."""
    live = {e.id for e in graph.backbone_edges()}
    removed = []
    while True:
        pairs = [(graph.edges[eid].source, graph.edges[eid].target) for eid in live]
        sccs = scc_oracle(list(graph.concepts), pairs)
        if not sccs:
            return removed
        comp = sccs[0]
        internal = [graph.edges[eid] for eid in sorted(live)
                    if graph.edges[eid].source in comp and graph.edges[eid].target in comp]
        lo = min(e.strength for e in internal)
        pool = [e for e in internal if e.strength == lo]
        hi_turn = max(e.created_turn for e in pool)
        pool = [e for e in pool if e.created_turn == hi_turn]
        victim = max(pool, key=lambda e: e.id)
        live.discard(victim.id)
        removed.append(victim.id)


def anchor_oracle(graph: CognitiveGraph, new_label: str, focus: str) -> str:
    """Exhaustive argmin of hops + 1 - similarity over reachable live nodes."""
    live = {c.id for c in graph.live_concepts()}
    adj = {cid: set() for cid in live}
    for e in graph.backbone_edges():
        if e.source in live and e.target in live:
            adj[e.source].add(e.target)
            adj[e.target].add(e.source)
    dist = {focus: 0}
    frontier = [focus]
    while frontier:
        nxt = []
        for n in frontier:
            for m in sorted(adj[n]):
                if m not in dist:
                    dist[m] = dist[n] + 1
                    nxt.append(m)
        frontier = nxt
    scored = [(dist[n] + 1.0 - label_similarity(graph.concepts[n].label, new_label), n)
              for n in sorted(dist)]
    return min(scored)[1]


def random_digraph(rng: random.Random, max_nodes: int = 6,
                   edge_prob: float = 0.35) -> CognitiveGraph:
    n = rng.randint(2, max_nodes)
    concepts = [make_concept(f"c{i}", label=f"node {i}") for i in range(n)]
    edges = []
    eid = 0
    for i, j in itertools.permutations(range(n), 2):
        if rng.random() < edge_prob:
            edges.append(make_edge(
                f"e{eid:03d}", f"c{i}", f"c{j}",
                relation=rng.choice(["enable", "constraint", "determine"]),
                strength=round(rng.random(), 3),
                turn=rng.randint(0, 5)))
            eid += 1
    return make_graph(concepts, edges)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xC06)
