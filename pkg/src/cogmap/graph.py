"""Typed causal graph of user reasoning and its structural maintenance.

Concepts (belief / constraint / preference / factual) are linked by directed
causal dependencies (enable / constraint / determine). Non-cancelled
dependency edges form the *backbone*, which must stay acyclic; undirected
conflict edges record tensions outside the backbone and never participate in
ordering or reachability. Cancelled items are tombstoned, never deleted, so
every revision stays traceable.

Maintenance passes keep the backbone healthy under continuous revision:

- ``detect_cycles`` / ``repair_cycles``: strongly connected components are
  found (Tarjan) and broken by cancelling the weakest internal edge until
  acyclic.
- ``compact_singletons``: a lone candidate sharing a slot key with a lone
  grounded concept is absorbed into the grounded one.
- ``attach_concept``: a new unconnected concept is anchored near the current
  focus via best-first search over the undirected backbone, guided by label
  similarity.
- ``topological_order``: deterministic order with ties broken by id.

Pure planning variants (``plan_cycle_repairs``, ``plan_singleton_merges``)
return the actions without mutating, so the revision layer can record them
as explicit patch ops.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional

from .errors import reject


class ConceptKind(str, Enum):
    BELIEF = "belief"
    CONSTRAINT = "constraint"
    PREFERENCE = "preference"
    FACTUAL = "factual"


class Relation(str, Enum):
    ENABLE = "enable"        # makes the target actionable without fixing its value
    CONSTRAINT = "constraint"  # restricts the target's feasible space
    DETERMINE = "determine"  # directly specifies the target's value


class Provenance(str, Enum):
    ASSISTANT_PROPOSED = "assistant_proposed"
    USER_CONFIRMED = "user_confirmed"
    CO_AUTHORED = "co_authored"
    TRANSFER_BASED = "transfer_based"


class Status(str, Enum):
    CANDIDATE = "candidate"
    GROUNDED = "grounded"
    DEPRECATED = "deprecated"
    CANCELLED = "cancelled"


class ConflictStatus(str, Enum):
    OPEN = "open"
    RESOLVED = "resolved"
    DISMISSED = "dismissed"


@dataclass
class Concept:
    id: str
    kind: ConceptKind
    label: str
    slot: Optional[str] = None
    value: Optional[str] = None
    confidence: float = 0.0
    provenance: Provenance = Provenance.ASSISTANT_PROPOSED
    status: Status = Status.CANDIDATE
    created_turn: int = 0
    evidence: list[str] = field(default_factory=list)  # EvidenceRecord ids, kept sorted

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "kind": self.kind.value,
            "label": self.label,
            "confidence": self.confidence,
            "provenance": self.provenance.value,
            "status": self.status.value,
            "created_turn": self.created_turn,
            "evidence": sorted(self.evidence),
        }
        if self.slot is not None:
            d["slot"] = self.slot
        if self.value is not None:
            d["value"] = self.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Concept":
        return cls(
            id=d["id"],
            kind=ConceptKind(d["kind"]),
            label=d["label"],
            slot=d.get("slot"),
            value=d.get("value"),
            confidence=d["confidence"],
            provenance=Provenance(d["provenance"]),
            status=Status(d["status"]),
            created_turn=d["created_turn"],
            evidence=sorted(d.get("evidence", [])),
        )


@dataclass
class DependencyEdge:
    id: str
    source: str
    target: str
    relation: Relation
    strength: float = 0.5
    status: Status = Status.CANDIDATE
    provenance: Provenance = Provenance.ASSISTANT_PROPOSED
    rationale: Optional[str] = None
    created_turn: int = 0

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "source": self.source,
            "target": self.target,
            "relation": self.relation.value,
            "strength": self.strength,
            "status": self.status.value,
            "provenance": self.provenance.value,
            "created_turn": self.created_turn,
        }
        if self.rationale is not None:
            d["rationale"] = self.rationale
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DependencyEdge":
        return cls(
            id=d["id"],
            source=d["source"],
            target=d["target"],
            relation=Relation(d["relation"]),
            strength=d["strength"],
            status=Status(d["status"]),
            provenance=Provenance(d["provenance"]),
            rationale=d.get("rationale"),
            created_turn=d["created_turn"],
        )


@dataclass
class ConflictEdge:
    """Undirected tension record; (a, b) is an unordered pair."""

    id: str
    a: str
    b: str
    description: str = ""
    status: ConflictStatus = ConflictStatus.OPEN

    def __post_init__(self):
        if self.b < self.a:  # normalize the unordered pair
            self.a, self.b = self.b, self.a

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "a": self.a,
            "b": self.b,
            "description": self.description,
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConflictEdge":
        return cls(id=d["id"], a=d["a"], b=d["b"], description=d.get("description", ""),
                   status=ConflictStatus(d["status"]))


@dataclass
class CognitiveGraph:
    concepts: dict[str, Concept] = field(default_factory=dict)
    edges: dict[str, DependencyEdge] = field(default_factory=dict)
    conflicts: dict[str, ConflictEdge] = field(default_factory=dict)
    turn_counter: int = 0

    # -- views ------------------------------------------------------------

    def backbone_edges(self) -> list[DependencyEdge]:
        """Non-cancelled dependency edges, sorted by id."""
        return [self.edges[eid] for eid in sorted(self.edges)
                if self.edges[eid].status != Status.CANCELLED]

    def live_concepts(self) -> list[Concept]:
        return [self.concepts[cid] for cid in sorted(self.concepts)
                if self.concepts[cid].status != Status.CANCELLED]

    def grounded_concepts(self) -> list[Concept]:
        return [c for c in self.live_concepts() if c.status == Status.GROUNDED]

    def successors(self) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {cid: [] for cid in self.concepts}
        for e in self.backbone_edges():
            if e.source in adj and e.target in self.concepts:
                adj[e.source].append(e.target)
        return adj

    def incident_edges(self, cid: str) -> list[DependencyEdge]:
        return [self.edges[eid] for eid in sorted(self.edges)
                if self.edges[eid].source == cid or self.edges[eid].target == cid]

    def backbone_degree(self, cid: str) -> int:
        return sum(1 for e in self.backbone_edges() if cid in (e.source, e.target))

    def max_backbone_degree(self) -> int:
        degree: dict[str, int] = {}
        for e in self.backbone_edges():
            degree[e.source] = degree.get(e.source, 0) + 1
            degree[e.target] = degree.get(e.target, 0) + 1
        return max(degree.values(), default=0)

    def has_backbone_path(self, start: str, goal: str) -> bool:
        """Directed reachability over the backbone (used for cycle guards)."""
        if start == goal:
            return True
        adj = self.successors()
        stack, seen = [start], {start}
        while stack:
            n = stack.pop()
            for m in adj.get(n, ()):
                if m == goal:
                    return True
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return False

    def descendants(self, cid: str) -> set[str]:
        adj = self.successors()
        out: set[str] = set()
        stack = list(adj.get(cid, ()))
        while stack:
            n = stack.pop()
            if n not in out:
                out.add(n)
                stack.extend(adj.get(n, ()))
        return out

    def find_duplicate(self, source: str, target: str, relation: Relation) -> Optional[DependencyEdge]:
        for e in self.backbone_edges():
            if (e.source, e.target, e.relation) == (source, target, relation):
                return e
        return None

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "concepts": {cid: c.to_dict() for cid, c in sorted(self.concepts.items())},
            "edges": {eid: e.to_dict() for eid, e in sorted(self.edges.items())},
            "conflicts": {xid: x.to_dict() for xid, x in sorted(self.conflicts.items())},
            "turn_counter": self.turn_counter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CognitiveGraph":
        return cls(
            concepts={k: Concept.from_dict(v) for k, v in d.get("concepts", {}).items()},
            edges={k: DependencyEdge.from_dict(v) for k, v in d.get("edges", {}).items()},
            conflicts={k: ConflictEdge.from_dict(v) for k, v in d.get("conflicts", {}).items()},
            turn_counter=d.get("turn_counter", 0),
        )


@dataclass
class Violation:
    invariant: str
    ids: list[str]

    def to_dict(self) -> dict:
        return {"invariant": self.invariant, "ids": sorted(self.ids)}


@dataclass
class ValidationReport:
    ok: bool
    violations: list[Violation]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_dict() for v in self.violations]}


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_backbone(graph: CognitiveGraph) -> ValidationReport:
    """Report every structural invariant violation; never mutates."""
    violations: list[Violation] = []

    for eid in sorted(graph.edges):
        e = graph.edges[eid]
        if e.source not in graph.concepts or e.target not in graph.concepts:
            violations.append(Violation("dangling-endpoint", [eid]))
        if e.source == e.target:
            violations.append(Violation("self-loop", [eid]))
        if not 0.0 <= e.strength <= 1.0:
            violations.append(Violation("strength-range", [eid]))

    for cid in sorted(graph.concepts):
        c = graph.concepts[cid]
        if not 0.0 <= c.confidence <= 1.0:
            violations.append(Violation("confidence-range", [cid]))
        if c.status == Status.GROUNDED and not c.evidence:
            violations.append(Violation("grounded-without-evidence", [cid]))

    seen_triples: dict[tuple, list[str]] = {}
    for e in graph.backbone_edges():
        seen_triples.setdefault((e.source, e.target, e.relation), []).append(e.id)
    for ids in seen_triples.values():
        if len(ids) > 1:
            violations.append(Violation("duplicate-edge", sorted(ids)))

    for scc in detect_cycles(graph):
        edge_ids = sorted(e.id for e in graph.backbone_edges()
                          if e.source in scc and e.target in scc)
        violations.append(Violation("backbone-cycle", edge_ids))

    return ValidationReport(ok=not violations, violations=violations)


# ---------------------------------------------------------------------------
# Cycle detection and repair
# ---------------------------------------------------------------------------

def _strongly_connected(nodes: Iterable[str], adj: dict[str, list[str]]) -> list[set[str]]:
    """Tarjan's algorithm, iterative; returns SCCs with >= 2 nodes."""
    index: dict[str, int] = {}
    lowlink: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    counter = [0]
    sccs: list[set[str]] = []

    for root in sorted(nodes):
        if root in index:
            continue
        work = [(root, iter(adj.get(root, ())))]
        index[root] = lowlink[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = lowlink[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(adj.get(w, ()))))
                    advanced = True
                    break
                elif w in on_stack:
                    lowlink[v] = min(lowlink[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[v])
            if lowlink[v] == index[v]:
                scc = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    scc.add(w)
                    if w == v:
                        break
                if len(scc) >= 2:
                    sccs.append(scc)
    return sorted(sccs, key=min)


def detect_cycles(graph: CognitiveGraph) -> list[set[str]]:
    """SCCs of the non-cancelled backbone with >= 2 nodes, by smallest member id."""
    adj: dict[str, list[str]] = {cid: [] for cid in graph.concepts}
    for e in graph.backbone_edges():
        if e.source in adj and e.target in graph.concepts:
            adj[e.source].append(e.target)
    for lst in adj.values():
        lst.sort()
    return _strongly_connected(graph.concepts.keys(), adj)


def _weakest(edges: list[DependencyEdge]) -> DependencyEdge:
    """Minimum strength; ties go to the most recently created, then largest id."""
    min_strength = min(e.strength for e in edges)
    pool = [e for e in edges if e.strength == min_strength]
    max_turn = max(e.created_turn for e in pool)
    pool = [e for e in pool if e.created_turn == max_turn]
    return max(pool, key=lambda e: e.id)


def plan_cycle_repairs(graph: CognitiveGraph) -> list[str]:
    """Edge ids to cancel, in removal order, leaving the backbone acyclic.

    Pure: simulates removals on a shadow edge set so callers can turn the
    plan into explicit patch ops.
    """
    removed: list[str] = []
    dead: set[str] = set()

    def live_edges() -> list[DependencyEdge]:
        return [e for e in graph.backbone_edges() if e.id not in dead]

    while True:
        adj: dict[str, list[str]] = {cid: [] for cid in graph.concepts}
        for e in live_edges():
            adj[e.source].append(e.target)
        for lst in adj.values():
            lst.sort()
        sccs = _strongly_connected(graph.concepts.keys(), adj)
        if not sccs:
            return removed
        scc = sccs[0]
        internal = [e for e in live_edges() if e.source in scc and e.target in scc]
        victim = _weakest(internal)
        dead.add(victim.id)
        removed.append(victim.id)


CYCLE_REPAIR_NOTE = "auto-removed: weakest edge inside a dependency cycle"


def repair_cycles(graph: CognitiveGraph) -> tuple[CognitiveGraph, list[str]]:
    """Cancel the weakest edge in each cycle until the backbone is acyclic.

    Idempotent on acyclic graphs. Cancelled edges are tombstoned with a
    system note, never deleted.
    """
    removed = plan_cycle_repairs(graph)
    for eid in removed:
        e = graph.edges[eid]
        e.status = Status.CANCELLED
        e.rationale = f"{e.rationale}; {CYCLE_REPAIR_NOTE}" if e.rationale else CYCLE_REPAIR_NOTE
    return graph, removed


# ---------------------------------------------------------------------------
# Anchor selection for new concepts
# ---------------------------------------------------------------------------

def label_similarity(a: str, b: str) -> float:
    """Jaccard overlap of lowercased whitespace tokens, in [0, 1]."""
    ta, tb = set(a.lower().split()), set(b.lower().split())
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


def anchor_score(graph: CognitiveGraph, node: str, new_label: str, hops: int) -> float:
    return hops + 1.0 - label_similarity(graph.concepts[node].label, new_label)


def attach_concept(graph: CognitiveGraph, new: Concept, focus: str) -> DependencyEdge:
    """Propose an anchoring edge for a not-yet-connected concept.

    Picks the anchor minimizing hops-from-focus + (1 - label similarity) via
    best-first search over the undirected backbone; the heuristic is the
    similarity deficit, admissible against unit hop costs. A concept sharing
    the new concept's slot key always wins (same decision variable). Pure:
    returns a candidate edge without mutating the graph.
    """
    if not graph.concepts or all(c.status == Status.CANCELLED for c in graph.concepts.values()):
        raise reject("no-anchor", "graph holds no live concepts")
    if focus not in graph.concepts:
        raise reject("unknown-focus", focus)

    def proposal(anchor: str) -> DependencyEdge:
        return DependencyEdge(
            id=f"proposal:{anchor}->{new.id}",
            source=anchor,
            target=new.id,
            relation=Relation.ENABLE,
            strength=0.5,
            status=Status.CANDIDATE,
            provenance=Provenance.ASSISTANT_PROPOSED,
            rationale="anchored near current focus",
            created_turn=graph.turn_counter,
        )

    live = {c.id for c in graph.live_concepts()}
    if new.slot is not None:
        mates = sorted(cid for cid in live if graph.concepts[cid].slot == new.slot)
        if mates:
            return proposal(mates[0])

    # undirected adjacency over the backbone, restricted to live concepts
    adj: dict[str, list[str]] = {cid: [] for cid in live}
    for e in graph.backbone_edges():
        if e.source in live and e.target in live:
            adj[e.source].append(e.target)
            adj[e.target].append(e.source)
    for lst in adj.values():
        lst.sort()

    if focus not in live:
        raise reject("unknown-focus", f"{focus} is cancelled")

    # Best-first search ordered by f = hops + (1 - similarity). The
    # similarity-deficit heuristic is consistent against unit hop costs
    # (|h(a) - h(b)| <= 1), so f never decreases along the pop sequence and
    # the anchor score of a node equals its f at first pop: the argmin is the
    # first pop, scanning on only to break score ties by smallest id.
    best_id: Optional[str] = None
    best_score = float("inf")
    dist: dict[str, int] = {focus: 0}
    heap: list[tuple[float, int, str]] = [(anchor_score(graph, focus, new.label, 0), 0, focus)]
    while heap:
        f, g, node = heapq.heappop(heap)
        if g > dist.get(node, g):
            continue
        if f > best_score:
            break
        if best_id is None or f < best_score or node < best_id:
            best_score, best_id = f, node
        for nb in adj[node]:
            ng = g + 1
            if ng < dist.get(nb, ng + 1):
                dist[nb] = ng
                heapq.heappush(heap, (anchor_score(graph, nb, new.label, ng), ng, nb))

    assert best_id is not None
    return proposal(best_id)


# ---------------------------------------------------------------------------
# Singleton-slot compaction
# ---------------------------------------------------------------------------

def plan_singleton_merges(graph: CognitiveGraph) -> list[tuple[str, str]]:
    """(candidate id, grounded id) pairs eligible for slot compaction."""
    by_slot: dict[str, list[Concept]] = {}
    for c in graph.live_concepts():
        if c.slot is not None:
            by_slot.setdefault(c.slot, []).append(c)
    merges: list[tuple[str, str]] = []
    for slot in sorted(by_slot):
        group = by_slot[slot]
        candidates = [c for c in group if c.status == Status.CANDIDATE]
        grounded = [c for c in group if c.status == Status.GROUNDED]
        if len(candidates) == 1 and len(grounded) == 1:
            merges.append((candidates[0].id, grounded[0].id))
    return merges


def merge_concept_into(graph: CognitiveGraph, source_id: str, target_id: str) -> None:
    """Absorb ``source_id`` into ``target_id``: max confidence, unioned
    evidence, incident edges re-targeted with duplicate boosting; the source
    is tombstoned."""
    if source_id not in graph.concepts or target_id not in graph.concepts:
        raise reject("unknown-target", f"merge {source_id} -> {target_id}")
    src, dst = graph.concepts[source_id], graph.concepts[target_id]
    dst.confidence = max(dst.confidence, src.confidence)
    dst.evidence = sorted(set(dst.evidence) | set(src.evidence))

    for e in graph.incident_edges(source_id):
        if e.status == Status.CANCELLED:
            continue
        ns = target_id if e.source == source_id else e.source
        nt = target_id if e.target == source_id else e.target
        if ns == nt:  # would become a self-loop
            e.status = Status.CANCELLED
            e.rationale = "collapsed by concept merge"
            continue
        dup = next((o for o in graph.backbone_edges()
                    if o.id != e.id and (o.source, o.target, o.relation) == (ns, nt, e.relation)), None)
        if dup is not None:
            dup.strength = max(dup.strength, e.strength)
            e.status = Status.CANCELLED
            e.rationale = f"deduplicated into {dup.id} by concept merge"
        else:
            e.source, e.target = ns, nt

    src.status = Status.CANCELLED


def compact_singletons(graph: CognitiveGraph) -> CognitiveGraph:
    """Merge each lone slot candidate into its lone grounded slot-mate; idempotent."""
    for source_id, target_id in plan_singleton_merges(graph):
        merge_concept_into(graph, source_id, target_id)
    return graph


# ---------------------------------------------------------------------------
# Ordering
# ---------------------------------------------------------------------------

def topological_order(graph: CognitiveGraph) -> list[str]:
    """Deterministic topological order of live concepts (ties by id)."""
    live = {c.id for c in graph.live_concepts()}
    indegree = {cid: 0 for cid in live}
    adj: dict[str, list[str]] = {cid: [] for cid in live}
    for e in graph.backbone_edges():
        if e.source in live and e.target in live:
            adj[e.source].append(e.target)
            indegree[e.target] += 1
    heap = [cid for cid in live if indegree[cid] == 0]
    heapq.heapify(heap)
    order: list[str] = []
    while heap:
        cid = heapq.heappop(heap)
        order.append(cid)
        for nb in sorted(adj[cid]):
            indegree[nb] -= 1
            if indegree[nb] == 0:
                heapq.heappush(heap, nb)
    if len(order) != len(live):
        raise reject("cyclic-backbone", "topological order requires an acyclic backbone")
    return order


def clone_graph(graph: CognitiveGraph) -> CognitiveGraph:
    """Deep-ish copy cheap enough for snapshots at these sizes."""
    return CognitiveGraph(
        concepts={cid: replace(c, evidence=list(c.evidence)) for cid, c in graph.concepts.items()},
        edges={eid: replace(e) for eid, e in graph.edges.items()},
        conflicts={xid: replace(x) for xid, x in graph.conflicts.items()},
        turn_counter=graph.turn_counter,
    )
