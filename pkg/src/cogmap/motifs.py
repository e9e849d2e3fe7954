"""Reusable reasoning patterns over the causal graph.

A motif is a small causal subgraph (at least two concepts joined by at least
one directed dependency) standing for a recurring reasoning move. Patterns
live in a cross-task library; instances are bound to one task's concepts and
carry a lifecycle (active / uncertain / deprecated / cancelled, the last
absorbing). Matching binds pattern roles to grounded concepts over grounded
backbone edges; abstraction strips task-specific labels back out of an
instance; transfer re-instantiates library patterns in a new task as
explicitly uncertain candidates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Optional

from .errors import reject
from .graph import CognitiveGraph, Concept, ConceptKind, Provenance, Relation, Status


class MotifStatus(str, Enum):
    ACTIVE = "active"
    UNCERTAIN = "uncertain"
    DEPRECATED = "deprecated"
    CANCELLED = "cancelled"


class MotifEvent(str, Enum):
    CONFIRM = "confirm"
    WEAKEN = "weaken"
    DEPRECATE = "deprecate"
    CANCEL = "cancel"
    EDGE_CANCELLED = "edge_cancelled"


class TaxonomyClass(str, Enum):
    CONSTRAINT = "constraint"
    PREFERENCE = "preference"
    TRADE_OFF = "trade_off"
    SEQUENTIAL = "sequential"
    CONDITIONAL = "conditional"


@dataclass
class MotifRole:
    name: str
    kinds: Optional[list[str]] = None  # None = any concept kind
    slot: Optional[str] = None         # None = any slot

    def admits(self, concept: Concept) -> bool:
        if self.kinds is not None and concept.kind.value not in self.kinds:
            return False
        if self.slot is not None and concept.slot != self.slot:
            return False
        return True

    def to_dict(self) -> dict:
        d: dict = {"name": self.name}
        if self.kinds is not None:
            d["kinds"] = sorted(self.kinds)
        if self.slot is not None:
            d["slot"] = self.slot
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MotifRole":
        return cls(name=d["name"], kinds=d.get("kinds"), slot=d.get("slot"))


@dataclass
class MotifEdgeTemplate:
    source_role: str
    target_role: str
    relation: Relation

    def to_dict(self) -> dict:
        return {"source_role": self.source_role, "target_role": self.target_role,
                "relation": self.relation.value}

    @classmethod
    def from_dict(cls, d: dict) -> "MotifEdgeTemplate":
        return cls(source_role=d["source_role"], target_role=d["target_role"],
                   relation=Relation(d["relation"]))


@dataclass
class MotifPattern:
    name: str
    taxonomy_class: TaxonomyClass
    roles: list[MotifRole]
    edges: list[MotifEdgeTemplate]
    reasoning_function: str = "constraint_propagation"
    usage_count: int = 0

    def __post_init__(self):
        if len(self.roles) < 2 or not self.edges:
            raise reject("bad-pattern",
                         f"{self.name}: a motif needs >= 2 roles and >= 1 edge")
        role_names = {r.name for r in self.roles}
        for t in self.edges:
            if t.source_role not in role_names or t.target_role not in role_names:
                raise reject("bad-pattern", f"{self.name}: edge template names unknown role")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "taxonomy_class": self.taxonomy_class.value,
            "roles": [r.to_dict() for r in self.roles],
            "edges": [t.to_dict() for t in self.edges],
            "reasoning_function": self.reasoning_function,
            "usage_count": self.usage_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MotifPattern":
        return cls(
            name=d["name"],
            taxonomy_class=TaxonomyClass(d["taxonomy_class"]),
            roles=[MotifRole.from_dict(r) for r in d["roles"]],
            edges=[MotifEdgeTemplate.from_dict(t) for t in d["edges"]],
            reasoning_function=d.get("reasoning_function", "constraint_propagation"),
            usage_count=d.get("usage_count", 0),
        )


@dataclass
class MotifInstance:
    id: str
    pattern: str
    bindings: dict[str, str]  # role name -> concept id
    edges: list[str]          # bound edge ids, aligned with the pattern templates
    status: MotifStatus = MotifStatus.UNCERTAIN
    provenance: Provenance = Provenance.ASSISTANT_PROPOSED
    task_id: str = ""
    rationale: str = ""
    history: list[dict] = field(default_factory=list)  # {event, turn, source}

    def bound_concepts(self) -> list[str]:
        return sorted(set(self.bindings.values()))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "pattern": self.pattern,
            "bindings": dict(sorted(self.bindings.items())),
            "edges": list(self.edges),
            "status": self.status.value,
            "provenance": self.provenance.value,
            "task_id": self.task_id,
            "rationale": self.rationale,
            "history": list(self.history),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MotifInstance":
        return cls(
            id=d["id"], pattern=d["pattern"], bindings=dict(d["bindings"]),
            edges=list(d["edges"]), status=MotifStatus(d["status"]),
            provenance=Provenance(d["provenance"]), task_id=d.get("task_id", ""),
            rationale=d.get("rationale", ""), history=list(d.get("history", [])),
        )


@dataclass
class TransferCandidate:
    id: str
    pattern: str
    proposed_bindings: dict[str, str]
    source_task: str
    status: str = "uncertain"  # uncertain | adopted | rejected
    provenance: Provenance = Provenance.TRANSFER_BASED

    def to_dict(self) -> dict:
        return {
            "id": self.id, "pattern": self.pattern,
            "proposed_bindings": dict(sorted(self.proposed_bindings.items())),
            "source_task": self.source_task, "status": self.status,
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransferCandidate":
        return cls(
            id=d["id"], pattern=d["pattern"],
            proposed_bindings=dict(d["proposed_bindings"]),
            source_task=d["source_task"], status=d.get("status", "uncertain"),
            provenance=Provenance(d.get("provenance", "transfer_based")),
        )


@dataclass
class MotifLibrary:
    patterns: dict[str, MotifPattern] = field(default_factory=dict)
    pattern_history: list[dict] = field(default_factory=list)  # {pattern, source_task, adopted}

    def store(self, pattern: MotifPattern, source_task: str, adopted: bool = True) -> None:
        existing = self.patterns.get(pattern.name)
        if existing is not None:
            existing.usage_count += 1
        else:
            self.patterns[pattern.name] = pattern
        self.pattern_history.append(
            {"pattern": pattern.name, "source_task": source_task, "adopted": adopted})

    def source_task_for(self, name: str) -> str:
        for entry in reversed(self.pattern_history):
            if entry["pattern"] == name:
                return entry["source_task"]
        return ""

    def to_dict(self) -> dict:
        return {
            "patterns": {k: v.to_dict() for k, v in sorted(self.patterns.items())},
            "pattern_history": list(self.pattern_history),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MotifLibrary":
        return cls(
            patterns={k: MotifPattern.from_dict(v) for k, v in d.get("patterns", {}).items()},
            pattern_history=list(d.get("pattern_history", [])),
        )


# ---------------------------------------------------------------------------
# Seed vocabulary
# ---------------------------------------------------------------------------

def load_vocabulary(path: str = "") -> list[MotifPattern]:
    """Load the motif vocabulary (JSON list of pattern records)."""
    if path:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    else:
        raw = json.loads(
            resources.files("cogmap.data").joinpath("motif_vocabulary.json").read_text("utf-8"))
    return [MotifPattern.from_dict(d) for d in raw]


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------

def match_motifs(graph: CognitiveGraph, vocabulary: list[MotifPattern],
                 task_id: str = "") -> list[MotifInstance]:
    """Every maximal binding of pattern roles to grounded concepts.

    A binding assigns distinct grounded concepts to roles such that all
    kind/slot filters hold and every edge template maps onto a grounded
    backbone edge of the required relation. Results come in deterministic
    order (pattern name, then sorted binding ids), without duplicates, with
    status uncertain and ids left unassigned.
    """
    grounded = {c.id: c for c in graph.grounded_concepts()}
    grounded_edges: dict[tuple[str, str, Relation], str] = {}
    for e in graph.backbone_edges():
        if e.status == Status.GROUNDED and e.source in grounded and e.target in grounded:
            grounded_edges[(e.source, e.target, e.relation)] = e.id

    instances: list[MotifInstance] = []
    for pattern in sorted(vocabulary, key=lambda p: p.name):
        bindings = _enumerate_bindings(pattern, grounded, grounded_edges)
        bindings = _keep_maximal(bindings)
        for binding in sorted(bindings, key=lambda b: tuple(sorted(b.values()))):
            edge_ids = [
                grounded_edges[(binding[t.source_role], binding[t.target_role], t.relation)]
                for t in pattern.edges
            ]
            instances.append(MotifInstance(
                id="",
                pattern=pattern.name,
                bindings=binding,
                edges=edge_ids,
                status=MotifStatus.UNCERTAIN,
                provenance=Provenance.ASSISTANT_PROPOSED,
                task_id=task_id,
                rationale=_describe(pattern, binding, grounded),
            ))
    return instances


def _enumerate_bindings(pattern, grounded, grounded_edges) -> list[dict[str, str]]:
    roles = pattern.roles
    results: list[dict[str, str]] = []
    ids = sorted(grounded)

    def backtrack(i: int, partial: dict[str, str], used: set[str]) -> None:
        if i == len(roles):
            for t in pattern.edges:
                key = (partial[t.source_role], partial[t.target_role], t.relation)
                if key not in grounded_edges:
                    return
            results.append(dict(partial))
            return
        role = roles[i]
        for cid in ids:
            if cid in used or not role.admits(grounded[cid]):
                continue
            partial[role.name] = cid
            used.add(cid)
            backtrack(i + 1, partial, used)
            used.discard(cid)
            del partial[role.name]

    backtrack(0, {}, set())
    return results


def _keep_maximal(bindings: list[dict[str, str]]) -> list[dict[str, str]]:
    """Drop any binding whose concept set is strictly contained in another's."""
    sets = [frozenset(b.values()) for b in bindings]
    keep = []
    for i, b in enumerate(bindings):
        if any(sets[i] < sets[j] for j in range(len(bindings)) if j != i):
            continue
        keep.append(b)
    # dedupe identical (pattern enumeration can't repeat, but be safe)
    seen: set[tuple] = set()
    out = []
    for b in keep:
        key = tuple(sorted(b.items()))
        if key not in seen:
            seen.add(key)
            out.append(b)
    return out


def _describe(pattern, binding, grounded) -> str:
    parts = [f"{role}={grounded[cid].label}" for role, cid in sorted(binding.items())]
    return f"{pattern.reasoning_function} over " + ", ".join(parts)


# ---------------------------------------------------------------------------
# Lifecycle
# ---------------------------------------------------------------------------

_TRANSITIONS: dict[tuple[MotifStatus, MotifEvent], MotifStatus] = {
    (MotifStatus.UNCERTAIN, MotifEvent.CONFIRM): MotifStatus.ACTIVE,
    (MotifStatus.UNCERTAIN, MotifEvent.WEAKEN): MotifStatus.UNCERTAIN,
    (MotifStatus.UNCERTAIN, MotifEvent.DEPRECATE): MotifStatus.DEPRECATED,
    (MotifStatus.UNCERTAIN, MotifEvent.CANCEL): MotifStatus.CANCELLED,
    (MotifStatus.UNCERTAIN, MotifEvent.EDGE_CANCELLED): MotifStatus.DEPRECATED,
    (MotifStatus.ACTIVE, MotifEvent.CONFIRM): MotifStatus.ACTIVE,
    (MotifStatus.ACTIVE, MotifEvent.WEAKEN): MotifStatus.UNCERTAIN,
    (MotifStatus.ACTIVE, MotifEvent.DEPRECATE): MotifStatus.DEPRECATED,
    (MotifStatus.ACTIVE, MotifEvent.CANCEL): MotifStatus.CANCELLED,
    (MotifStatus.ACTIVE, MotifEvent.EDGE_CANCELLED): MotifStatus.DEPRECATED,
    (MotifStatus.DEPRECATED, MotifEvent.CANCEL): MotifStatus.CANCELLED,
    (MotifStatus.DEPRECATED, MotifEvent.EDGE_CANCELLED): MotifStatus.DEPRECATED,
    # cancelled is absorbing: cancel / edge_cancelled are tolerated no-ops
    (MotifStatus.CANCELLED, MotifEvent.CANCEL): MotifStatus.CANCELLED,
    (MotifStatus.CANCELLED, MotifEvent.EDGE_CANCELLED): MotifStatus.CANCELLED,
}


def next_motif_status(status: MotifStatus, event: MotifEvent) -> MotifStatus:
    nxt = _TRANSITIONS.get((status, event))
    if nxt is None:
        raise reject("invalid-transition", f"{status.value} + {event.value}")
    return nxt


def update_motif_status(instance: MotifInstance, event: MotifEvent,
                        turn: int = 0, source: str = "system") -> MotifInstance:
    """Apply one lifecycle event; returns an updated copy, rejecting illegal
    transitions (cancelled is absorbing)."""
    nxt = next_motif_status(instance.status, event)
    updated = MotifInstance.from_dict(instance.to_dict())
    updated.status = nxt
    updated.history = instance.history + [
        {"event": event.value, "turn": turn, "source": source}]
    return updated


# ---------------------------------------------------------------------------
# Abstraction and transfer
# ---------------------------------------------------------------------------

def abstract_motif(instance: MotifInstance, graph: CognitiveGraph) -> MotifPattern:
    """Lift an active instance into a reusable pattern.

    Bound concepts become roles keeping only kind and slot filters; nothing
    task-specific (labels, values, ids) survives. Storing the result in a
    library is the caller's separate, explicit step.
    """
    if instance.status != MotifStatus.ACTIVE:
        raise reject("not-validated", f"instance {instance.id} is {instance.status.value}")
    roles = []
    role_for_concept: dict[str, str] = {}
    for role_name, cid in sorted(instance.bindings.items()):
        concept = graph.concepts[cid]
        roles.append(MotifRole(name=role_name, kinds=[concept.kind.value], slot=concept.slot))
        role_for_concept[cid] = role_name
    templates = []
    for eid in instance.edges:
        e = graph.edges[eid]
        templates.append(MotifEdgeTemplate(
            source_role=role_for_concept[e.source],
            target_role=role_for_concept[e.target],
            relation=e.relation,
        ))
    slots = sorted({r.slot for r in roles if r.slot is not None})
    name = instance.pattern + (":" + "+".join(slots) if slots else ":abstracted")
    base_class = _taxonomy_of(instance.pattern)
    return MotifPattern(
        name=name,
        taxonomy_class=base_class,
        roles=roles,
        edges=templates,
        reasoning_function=_reasoning_function_of(instance.pattern),
        usage_count=0,
    )


def _taxonomy_of(pattern_name: str) -> TaxonomyClass:
    base = pattern_name.split(":")[0]
    for p in load_vocabulary():
        if p.name == base:
            return p.taxonomy_class
    return TaxonomyClass.CONDITIONAL


def _reasoning_function_of(pattern_name: str) -> str:
    base = pattern_name.split(":")[0]
    for p in load_vocabulary():
        if p.name == base:
            return p.reasoning_function
    return "constraint_propagation"


def retrieve_transfer_candidates(
    library: MotifLibrary, task_context: list[Concept]
) -> list[TransferCandidate]:
    """Instantiate library patterns relevant to a fresh task as uncertain
    transfer candidates.

    Relevance is slot overlap between the task's concepts and the pattern's
    role filters (at least one role must overlap); ranking adds a mild
    usage-count bonus. Proposed bindings are partial: only slot-matched roles
    are pre-bound, and no concrete values from the source task are carried.
    """
    context_by_slot: dict[str, str] = {}
    for c in sorted(task_context, key=lambda c: c.id):
        if c.slot is not None and c.slot not in context_by_slot:
            context_by_slot[c.slot] = c.id

    scored: list[tuple[float, str, TransferCandidate]] = []
    for name in sorted(library.patterns):
        pattern = library.patterns[name]
        matched_roles = [r for r in pattern.roles
                         if r.slot is not None and r.slot in context_by_slot]
        overlap = len(matched_roles)
        if overlap < 1:
            continue
        score = overlap + 0.1 * math.log(1 + pattern.usage_count)
        candidate = TransferCandidate(
            id="",
            pattern=name,
            proposed_bindings={r.name: context_by_slot[r.slot] for r in matched_roles},
            source_task=library.source_task_for(name),
        )
        scored.append((score, name, candidate))

    scored.sort(key=lambda t: (-t[0], t[1]))
    return [c for _, _, c in scored]
