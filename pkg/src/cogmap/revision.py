"""Patch-based revision over the two-layer session state.

Every mutation of the reasoning structure flows through a :class:`GraphPatch`
— an atomic, invertible, logged list of ops. A computed :class:`PatchDiff`
classifies each patch: small local changes commit automatically, broader
ones are parked in a single review slot until the user approves or rejects
them. Committing also runs the structural normalization pipeline (slot
compaction, cycle repair, pending-edge re-admission, grounding, conflict
detection, motif maintenance and matching, transfer retrieval), all of whose
effects are recorded as explicit ops so nothing mutates silently.

State is layered: :class:`CognitiveState` holds user-grounded structure;
:class:`TaskPlanState` holds assistant/co-authored artifacts. Assistant
content lands in the plan layer only; explicit user confirmation promotes
it across the boundary.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .clarification import Probe, ProbeResponse, Verdict
from .config import RuntimeConfig
from .errors import reject
from .extraction import (
    ConceptCandidate,
    DependencyCandidate,
    EvidenceRecord,
    EvidenceSource,
    Speaker,
    Utterance,
    fuse_evidence,
    plan_groundings,
)
from .graph import (
    CognitiveGraph,
    Concept,
    ConceptKind,
    ConflictEdge,
    ConflictStatus,
    DependencyEdge,
    Provenance,
    Relation,
    Status,
    merge_concept_into,
    plan_cycle_repairs,
    plan_singleton_merges,
    CYCLE_REPAIR_NOTE,
)
from .motifs import (
    MotifEvent,
    MotifInstance,
    MotifLibrary,
    MotifPattern,
    MotifStatus,
    TransferCandidate,
    match_motifs,
    next_motif_status,
    retrieve_transfer_candidates,
)

# ---------------------------------------------------------------------------
# Ids
# ---------------------------------------------------------------------------

ID_PREFIXES = {
    "concept": "c", "edge": "e", "conflict": "x", "evidence": "v",
    "motif": "m", "probe": "p", "patch": "g", "transfer": "t", "plan": "d",
}

_ID_RE = re.compile(r"^([a-z])(\d{4,})$")


class IdAllocator:
    """Per-prefix counters; derived runtime state, rebuilt by scanning ids.

    Deliberately not serialized: replay reproduces allocations because the
    same compiles re-run, and a rejected patch must leave the serialized
    state byte-identical to before its compile.
    """

    def __init__(self):
        self.next: dict[str, int] = {}

    def fresh(self, kind: str) -> str:
        prefix = ID_PREFIXES[kind]
        n = self.next.get(prefix, 1)
        self.next[prefix] = n + 1
        return f"{prefix}{n:04d}"

    def note(self, item_id: str) -> None:
        m = _ID_RE.match(item_id)
        if m:
            prefix, num = m.group(1), int(m.group(2))
            self.next[prefix] = max(self.next.get(prefix, 1), num + 1)

    def rebuild(self, state: "SessionState") -> None:
        self.next = {}
        cog = state.cognitive
        for pool in (cog.graph.concepts, cog.graph.edges, cog.graph.conflicts,
                     cog.pending_edges, cog.motifs, cog.probes, cog.evidence,
                     state.plan.items):
            for item_id in pool:
                self.note(item_id)
        for t in cog.transfer_candidates:
            self.note(t.id)
        if state.pending_review is not None:
            patch, _ = state.pending_review
            self.note(patch.id)
            for op in patch.ops:
                for rec_key in ("concept", "edge", "conflict", "record", "item",
                                "motif", "candidate"):
                    rec = op.data.get(rec_key)
                    if isinstance(rec, dict) and "id" in rec:
                        self.note(rec["id"])


# ---------------------------------------------------------------------------
# State layers
# ---------------------------------------------------------------------------

class PlanItemKind(str, Enum):
    DRAFT = "draft"
    COMPARISON = "comparison"
    NOTE = "note"
    OPEN_QUESTION = "open_question"


@dataclass
class PlanItem:
    id: str
    kind: PlanItemKind
    text: str
    citations: list[str] = field(default_factory=list)  # cited concept ids
    provenance: Provenance = Provenance.ASSISTANT_PROPOSED
    created_turn: int = 0

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind.value, "text": self.text,
                "citations": sorted(self.citations),
                "provenance": self.provenance.value, "created_turn": self.created_turn}

    @classmethod
    def from_dict(cls, d: dict) -> "PlanItem":
        return cls(id=d["id"], kind=PlanItemKind(d["kind"]), text=d["text"],
                   citations=sorted(d.get("citations", [])),
                   provenance=Provenance(d["provenance"]),
                   created_turn=d.get("created_turn", 0))


@dataclass
class TaskPlanState:
    items: dict[str, PlanItem] = field(default_factory=dict)

    def drafts(self) -> list[PlanItem]:
        return [self.items[i] for i in sorted(self.items)
                if self.items[i].kind == PlanItemKind.DRAFT]

    def to_dict(self) -> dict:
        return {"items": {k: v.to_dict() for k, v in sorted(self.items.items())}}

    @classmethod
    def from_dict(cls, d: dict) -> "TaskPlanState":
        return cls(items={k: PlanItem.from_dict(v) for k, v in d.get("items", {}).items()})


@dataclass
class CognitiveState:
    graph: CognitiveGraph = field(default_factory=CognitiveGraph)
    motifs: dict[str, MotifInstance] = field(default_factory=dict)
    transfer_candidates: list[TransferCandidate] = field(default_factory=list)
    probes: dict[str, Probe] = field(default_factory=dict)
    probe_answers: dict[str, dict] = field(default_factory=dict)
    evidence: dict[str, EvidenceRecord] = field(default_factory=dict)
    pending_edges: dict[str, DependencyEdge] = field(default_factory=dict)
    task_history: list[str] = field(default_factory=list)
    library: MotifLibrary = field(default_factory=MotifLibrary)

    def to_dict(self) -> dict:
        return {
            "graph": self.graph.to_dict(),
            "motifs": {k: v.to_dict() for k, v in sorted(self.motifs.items())},
            "transfer_candidates": [t.to_dict() for t in
                                    sorted(self.transfer_candidates, key=lambda t: t.id)],
            "probes": {k: v.to_dict() for k, v in sorted(self.probes.items())},
            "probe_answers": {k: dict(v) for k, v in sorted(self.probe_answers.items())},
            "evidence": {k: v.to_dict() for k, v in sorted(self.evidence.items())},
            "pending_edges": {k: v.to_dict() for k, v in sorted(self.pending_edges.items())},
            "task_history": list(self.task_history),
            "library": self.library.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CognitiveState":
        return cls(
            graph=CognitiveGraph.from_dict(d.get("graph", {})),
            motifs={k: MotifInstance.from_dict(v) for k, v in d.get("motifs", {}).items()},
            transfer_candidates=[TransferCandidate.from_dict(t)
                                 for t in d.get("transfer_candidates", [])],
            probes={k: Probe.from_dict(v) for k, v in d.get("probes", {}).items()},
            probe_answers={k: dict(v) for k, v in d.get("probe_answers", {}).items()},
            evidence={k: EvidenceRecord.from_dict(v) for k, v in d.get("evidence", {}).items()},
            pending_edges={k: DependencyEdge.from_dict(v)
                           for k, v in d.get("pending_edges", {}).items()},
            task_history=list(d.get("task_history", [])),
            library=MotifLibrary.from_dict(d.get("library", {})),
        )


@dataclass
class SessionState:
    cognitive: CognitiveState = field(default_factory=CognitiveState)
    plan: TaskPlanState = field(default_factory=TaskPlanState)
    task_id: str = ""
    turn: int = 0
    task_started_turn: int = 0
    probe_budget_used: bool = False
    pending_review: Optional[tuple["GraphPatch", "PatchDiff"]] = None

    def __post_init__(self):
        # derived runtime attachments, never serialized
        self.alloc = IdAllocator()
        self.source_weights: dict | None = None  # runtime installs config table

    def to_dict(self) -> dict:
        d = {
            "cognitive": self.cognitive.to_dict(),
            "plan": self.plan.to_dict(),
            "task_id": self.task_id,
            "turn": self.turn,
            "task_started_turn": self.task_started_turn,
            "probe_budget_used": self.probe_budget_used,
        }
        if self.pending_review is not None:
            patch, diff = self.pending_review
            d["pending_review"] = {"patch": patch.to_dict(), "diff": diff.to_dict()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SessionState":
        state = cls(
            cognitive=CognitiveState.from_dict(d.get("cognitive", {})),
            plan=TaskPlanState.from_dict(d.get("plan", {})),
            task_id=d.get("task_id", ""),
            turn=d.get("turn", 0),
            task_started_turn=d.get("task_started_turn", 0),
            probe_budget_used=d.get("probe_budget_used", False),
        )
        if "pending_review" in d:
            state.pending_review = (GraphPatch.from_dict(d["pending_review"]["patch"]),
                                    PatchDiff.from_dict(d["pending_review"]["diff"]))
        state.alloc.rebuild(state)
        return state


# ---------------------------------------------------------------------------
# Patches
# ---------------------------------------------------------------------------

class PatchOrigin(str, Enum):
    USER_EDIT = "user_edit"
    EXTRACTION = "extraction"
    CLARIFICATION = "clarification"
    TRANSFER = "transfer"
    SYSTEM_CONSISTENCY = "system_consistency"


@dataclass
class PatchOp:
    kind: str
    data: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, "data": self.data}

    @classmethod
    def from_dict(cls, d: dict) -> "PatchOp":
        return cls(kind=d["kind"], data=dict(d["data"]))


@dataclass
class GraphPatch:
    id: str
    ops: list[PatchOp]
    origin: PatchOrigin
    turn: int

    def to_dict(self) -> dict:
        return {"id": self.id, "ops": [op.to_dict() for op in self.ops],
                "origin": self.origin.value, "turn": self.turn}

    @classmethod
    def from_dict(cls, d: dict) -> "GraphPatch":
        return cls(id=d["id"], ops=[PatchOp.from_dict(o) for o in d["ops"]],
                   origin=PatchOrigin(d["origin"]), turn=d["turn"])


class Scope(str, Enum):
    LOCAL = "local"
    NON_LOCAL = "non_local"


@dataclass
class PatchDiff:
    affected_concepts: set[str] = field(default_factory=set)
    affected_edges: set[str] = field(default_factory=set)
    affected_motifs: set[str] = field(default_factory=set)
    downstream_plan_items: set[str] = field(default_factory=set)
    scope: Scope = Scope.LOCAL

    def to_dict(self) -> dict:
        return {
            "affected_concepts": sorted(self.affected_concepts),
            "affected_edges": sorted(self.affected_edges),
            "affected_motifs": sorted(self.affected_motifs),
            "downstream_plan_items": sorted(self.downstream_plan_items),
            "scope": self.scope.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PatchDiff":
        return cls(
            affected_concepts=set(d.get("affected_concepts", [])),
            affected_edges=set(d.get("affected_edges", [])),
            affected_motifs=set(d.get("affected_motifs", [])),
            downstream_plan_items=set(d.get("downstream_plan_items", [])),
            scope=Scope(d["scope"]),
        )


# ---------------------------------------------------------------------------
# Op application with undo recording
# ---------------------------------------------------------------------------

def _snap_concept(c: Concept) -> PatchOp:
    return PatchOp("put_concept", {"concept": c.to_dict()})


def _snap_edge(e: DependencyEdge) -> PatchOp:
    return PatchOp("put_edge", {"edge": e.to_dict()})


def apply_op(state: SessionState, op: PatchOp, turn: int) -> list[PatchOp]:
    """Apply one op in place; returns the ops that undo it (reverse order
    handled by the caller). Raises without partial effects."""
    cog = state.cognitive
    graph = cog.graph
    kind, d = op.kind, op.data

    if kind == "add_concept":
        concept = Concept.from_dict(d["concept"])
        if concept.id in graph.concepts:
            raise reject("duplicate-id", concept.id)
        graph.concepts[concept.id] = concept
        return [PatchOp("delete_concept", {"id": concept.id})]

    if kind == "add_edge":
        edge = DependencyEdge.from_dict(d["edge"])
        if edge.id in graph.edges or edge.id in cog.pending_edges:
            raise reject("duplicate-id", edge.id)
        if edge.source not in graph.concepts or edge.target not in graph.concepts:
            raise reject("unknown-target", f"edge {edge.id} endpoints")
        if edge.source == edge.target:
            raise reject("self-loop", edge.id)
        if graph.find_duplicate(edge.source, edge.target, edge.relation) is not None:
            raise reject("duplicate-edge", edge.id)
        if graph.has_backbone_path(edge.target, edge.source):
            # admitting this edge would close a backbone cycle: park it and
            # record the tension explicitly instead
            cog.pending_edges[edge.id] = edge
            undo = [PatchOp("delete_pending_edge", {"id": edge.id})]
            conflict = ConflictEdge(
                id=state.alloc.fresh("conflict"), a=edge.source, b=edge.target,
                description=f"dependency {edge.id} would close a cycle; kept pending",
            )
            graph.conflicts[conflict.id] = conflict
            undo.append(PatchOp("delete_conflict", {"id": conflict.id}))
            return undo
        graph.edges[edge.id] = edge
        return [PatchOp("delete_edge", {"id": edge.id})]

    if kind == "set_confidence":
        c = graph.concepts.get(d["target"])
        if c is None:
            raise reject("unknown-target", d["target"])
        if not 0.0 <= d["value"] <= 1.0:
            raise reject("bad-weight", f"confidence {d['value']}")
        undo = [_snap_concept(c)]
        c.confidence = d["value"]
        return undo

    if kind == "set_strength":
        e = graph.edges.get(d["target"]) or cog.pending_edges.get(d["target"])
        if e is None:
            raise reject("unknown-target", d["target"])
        if not 0.0 <= d["value"] <= 1.0:
            raise reject("bad-weight", f"strength {d['value']}")
        undo = [_snap_edge(e)] if e.id in graph.edges else \
            [PatchOp("put_pending_edge", {"edge": e.to_dict()})]
        e.strength = d["value"]
        return undo

    if kind == "set_status":
        return _apply_set_status(state, d)

    if kind == "add_conflict":
        conflict = ConflictEdge.from_dict(d["conflict"])
        if conflict.id in graph.conflicts:
            raise reject("duplicate-id", conflict.id)
        if conflict.a not in graph.concepts or conflict.b not in graph.concepts:
            raise reject("unknown-target", f"conflict {conflict.id} endpoints")
        graph.conflicts[conflict.id] = conflict
        return [PatchOp("delete_conflict", {"id": conflict.id})]

    if kind == "merge_concepts":
        src, dst = d["source"], d["target"]
        if src not in graph.concepts or dst not in graph.concepts:
            raise reject("unknown-target", f"merge {src} -> {dst}")
        undo: list[PatchOp] = [_snap_concept(graph.concepts[src]),
                               _snap_concept(graph.concepts[dst])]
        undo.extend(_snap_edge(e) for e in graph.incident_edges(src))
        # duplicates found during re-targeting get boosted: snapshot every
        # edge incident to the merge target as well
        undo.extend(_snap_edge(e) for e in graph.incident_edges(dst))
        merge_concept_into(graph, src, dst)
        return undo

    if kind == "bind_motif":
        instance = MotifInstance.from_dict(d["motif"])
        if instance.id in cog.motifs:
            raise reject("duplicate-id", instance.id)
        if len(set(instance.bindings.values())) < 2 or not instance.edges:
            raise reject("bad-motif", f"{instance.id} needs >= 2 concepts and >= 1 edge")
        for cid in instance.bindings.values():
            if cid not in graph.concepts:
                raise reject("unknown-target", f"motif binding {cid}")
        for eid in instance.edges:
            if eid not in graph.edges:
                raise reject("unknown-target", f"motif edge {eid}")
        cog.motifs[instance.id] = instance
        return [PatchOp("delete_motif", {"id": instance.id})]

    if kind == "set_motif_status":
        instance = cog.motifs.get(d["motif"])
        if instance is None:
            raise reject("unknown-target", d["motif"])
        event = MotifEvent(d["event"])
        new_status = next_motif_status(instance.status, event)
        undo = [PatchOp("put_motif", {"motif": instance.to_dict()})]
        instance.status = new_status
        instance.history.append({"event": event.value, "turn": turn,
                                 "source": d.get("source", "system")})
        return undo

    if kind == "add_evidence":
        record = EvidenceRecord.from_dict(d["record"])
        if record.id in cog.evidence:
            raise reject("duplicate-id", record.id)
        target_concept = graph.concepts.get(record.target)
        target_edge = graph.edges.get(record.target) or cog.pending_edges.get(record.target)
        if target_concept is None and target_edge is None:
            raise reject("unknown-target", record.target)
        undo: list[PatchOp] = [PatchOp("delete_evidence", {"id": record.id})]
        if target_concept is not None:
            undo.append(_snap_concept(target_concept))
            cog.evidence[record.id] = record
            target_concept.confidence = fuse_evidence(
                target_concept.confidence, record, state_weights(state))
            target_concept.evidence = sorted(set(target_concept.evidence) | {record.id})
        else:
            undo.append(_snap_edge(target_edge) if target_edge.id in graph.edges
                        else PatchOp("put_pending_edge", {"edge": target_edge.to_dict()}))
            cog.evidence[record.id] = record
            target_edge.strength = fuse_evidence(
                target_edge.strength, record, state_weights(state))
        return undo

    if kind == "set_provenance":
        return _apply_set_provenance(state, d)

    if kind == "add_plan_item":
        item = PlanItem.from_dict(d["item"])
        if item.id in state.plan.items:
            raise reject("duplicate-id", item.id)
        state.plan.items[item.id] = item
        return [PatchOp("delete_plan_item", {"id": item.id})]

    if kind == "retag_plan_item":
        item = state.plan.items.get(d["item"])
        if item is None:
            raise reject("unknown-target", d["item"])
        undo = [PatchOp("put_plan_item", {"item": item.to_dict()})]
        item.provenance = Provenance(d["provenance"])
        return undo

    if kind == "add_transfer_candidate":
        candidate = TransferCandidate.from_dict(d["candidate"])
        if any(t.id == candidate.id for t in cog.transfer_candidates):
            raise reject("duplicate-id", candidate.id)
        cog.transfer_candidates.append(candidate)
        return [PatchOp("delete_transfer", {"id": candidate.id})]

    if kind == "set_transfer_status":
        candidate = next((t for t in cog.transfer_candidates if t.id == d["candidate"]), None)
        if candidate is None:
            raise reject("unknown-target", d["candidate"])
        undo = [PatchOp("put_transfer", {"candidate": candidate.to_dict()})]
        candidate.status = d["status"]
        return undo

    if kind == "release_pending_edge":
        edge = cog.pending_edges.get(d["id"])
        if edge is None:
            raise reject("unknown-target", d["id"])
        if graph.has_backbone_path(edge.target, edge.source):
            raise reject("cyclic-backbone", f"pending edge {edge.id} still closes a cycle")
        del cog.pending_edges[edge.id]
        graph.edges[edge.id] = edge
        return [PatchOp("delete_edge", {"id": edge.id}),
                PatchOp("put_pending_edge", {"edge": edge.to_dict()})]

    # --- restore ops (produced only by inversion) -------------------------

    if kind == "put_concept":
        prev = graph.concepts.get(d["concept"]["id"])
        undo = [_snap_concept(prev)] if prev else \
            [PatchOp("delete_concept", {"id": d["concept"]["id"]})]
        graph.concepts[d["concept"]["id"]] = Concept.from_dict(d["concept"])
        return undo
    if kind == "delete_concept":
        prev = graph.concepts.pop(d["id"], None)
        return [_snap_concept(prev)] if prev else []
    if kind == "put_edge":
        prev = graph.edges.get(d["edge"]["id"])
        undo = [_snap_edge(prev)] if prev else [PatchOp("delete_edge", {"id": d["edge"]["id"]})]
        graph.edges[d["edge"]["id"]] = DependencyEdge.from_dict(d["edge"])
        return undo
    if kind == "delete_edge":
        prev = graph.edges.pop(d["id"], None)
        return [_snap_edge(prev)] if prev else []
    if kind == "put_conflict":
        prev = graph.conflicts.get(d["conflict"]["id"])
        undo = [PatchOp("put_conflict", {"conflict": prev.to_dict()})] if prev else \
            [PatchOp("delete_conflict", {"id": d["conflict"]["id"]})]
        graph.conflicts[d["conflict"]["id"]] = ConflictEdge.from_dict(d["conflict"])
        return undo
    if kind == "delete_conflict":
        prev = graph.conflicts.pop(d["id"], None)
        return [PatchOp("put_conflict", {"conflict": prev.to_dict()})] if prev else []
    if kind == "put_motif":
        prev = cog.motifs.get(d["motif"]["id"])
        undo = [PatchOp("put_motif", {"motif": prev.to_dict()})] if prev else \
            [PatchOp("delete_motif", {"id": d["motif"]["id"]})]
        cog.motifs[d["motif"]["id"]] = MotifInstance.from_dict(d["motif"])
        return undo
    if kind == "delete_motif":
        prev = cog.motifs.pop(d["id"], None)
        return [PatchOp("put_motif", {"motif": prev.to_dict()})] if prev else []
    if kind == "put_evidence":
        prev = cog.evidence.get(d["record"]["id"])
        undo = [PatchOp("put_evidence", {"record": prev.to_dict()})] if prev else \
            [PatchOp("delete_evidence", {"id": d["record"]["id"]})]
        cog.evidence[d["record"]["id"]] = EvidenceRecord.from_dict(d["record"])
        return undo
    if kind == "delete_evidence":
        prev = cog.evidence.pop(d["id"], None)
        return [PatchOp("put_evidence", {"record": prev.to_dict()})] if prev else []
    if kind == "put_plan_item":
        prev = state.plan.items.get(d["item"]["id"])
        undo = [PatchOp("put_plan_item", {"item": prev.to_dict()})] if prev else \
            [PatchOp("delete_plan_item", {"id": d["item"]["id"]})]
        state.plan.items[d["item"]["id"]] = PlanItem.from_dict(d["item"])
        return undo
    if kind == "delete_plan_item":
        prev = state.plan.items.pop(d["id"], None)
        return [PatchOp("put_plan_item", {"item": prev.to_dict()})] if prev else []
    if kind == "put_transfer":
        cid = d["candidate"]["id"]
        prev = next((t for t in cog.transfer_candidates if t.id == cid), None)
        if prev is not None:
            undo = [PatchOp("put_transfer", {"candidate": prev.to_dict()})]
            cog.transfer_candidates = [t for t in cog.transfer_candidates if t.id != cid]
        else:
            undo = [PatchOp("delete_transfer", {"id": cid})]
        cog.transfer_candidates.append(TransferCandidate.from_dict(d["candidate"]))
        cog.transfer_candidates.sort(key=lambda t: t.id)
        return undo
    if kind == "delete_transfer":
        prev = next((t for t in cog.transfer_candidates if t.id == d["id"]), None)
        cog.transfer_candidates = [t for t in cog.transfer_candidates if t.id != d["id"]]
        return [PatchOp("put_transfer", {"candidate": prev.to_dict()})] if prev else []
    if kind == "put_pending_edge":
        prev = cog.pending_edges.get(d["edge"]["id"])
        undo = [PatchOp("put_pending_edge", {"edge": prev.to_dict()})] if prev else \
            [PatchOp("delete_pending_edge", {"id": d["edge"]["id"]})]
        cog.pending_edges[d["edge"]["id"]] = DependencyEdge.from_dict(d["edge"])
        return undo
    if kind == "delete_pending_edge":
        prev = cog.pending_edges.pop(d["id"], None)
        return [PatchOp("put_pending_edge", {"edge": prev.to_dict()})] if prev else []

    raise reject("unknown-op", kind)


def _apply_set_status(state: SessionState, d: dict) -> list[PatchOp]:
    graph = state.cognitive.graph
    target_kind, target = d["target_kind"], d["target"]
    new_status = Status(d["status"])
    if target_kind == "concept":
        c = graph.concepts.get(target)
        if c is None:
            raise reject("unknown-target", target)
        if c.status == Status.CANCELLED and new_status != Status.CANCELLED:
            raise reject("invalid-transition", f"{target}: cancelled is absorbing")
        if new_status == Status.GROUNDED and not c.evidence:
            raise reject("grounded-without-evidence", target)
        undo = [_snap_concept(c)]
        c.status = new_status
        return undo
    if target_kind == "edge":
        e = graph.edges.get(target)
        if e is None:
            raise reject("unknown-target", target)
        if e.status == Status.CANCELLED and new_status != Status.CANCELLED:
            raise reject("invalid-transition", f"{target}: cancelled is absorbing")
        undo = [_snap_edge(e)]
        e.status = new_status
        if d.get("note"):
            e.rationale = f"{e.rationale}; {d['note']}" if e.rationale else d["note"]
        return undo
    raise reject("unknown-target", f"{target_kind}:{target}")


def _apply_set_provenance(state: SessionState, d: dict) -> list[PatchOp]:
    graph = state.cognitive.graph
    target_kind, target = d["target_kind"], d["target"]
    provenance = Provenance(d["provenance"])
    if target_kind == "concept":
        c = graph.concepts.get(target)
        if c is None:
            raise reject("unknown-target", target)
        undo = [_snap_concept(c)]
        c.provenance = provenance
        return undo
    e = graph.edges.get(target) or state.cognitive.pending_edges.get(target)
    if e is None:
        raise reject("unknown-target", target)
    undo = [_snap_edge(e)] if e.id in graph.edges else \
        [PatchOp("put_pending_edge", {"edge": e.to_dict()})]
    e.provenance = provenance
    return undo


def state_weights(state: SessionState) -> dict | None:
    return getattr(state, "source_weights", None)


def apply_ops(state: SessionState, ops: list[PatchOp], turn: int) -> list[PatchOp]:
    """Apply ops atomically: on any failure every prior effect is rolled
    back before re-raising. Returns the undo ops (already reversed, ready to
    apply front-to-back)."""
    undo_stack: list[PatchOp] = []
    for op in ops:
        try:
            undo_ops = apply_op(state, op, turn)
        except Exception:
            for u in reversed(undo_stack):
                apply_op(state, u, turn)
            raise
        undo_stack.extend(undo_ops)
    return list(reversed(undo_stack))


def invert_patch(state: SessionState, patch: GraphPatch) -> GraphPatch:
    """Apply the patch and return its inverse; applying the inverse restores
    the prior canonical serialization byte-for-byte."""
    undo = apply_ops(state, patch.ops, patch.turn)
    return GraphPatch(id=f"{patch.id}-inverse", ops=undo,
                      origin=PatchOrigin.SYSTEM_CONSISTENCY, turn=patch.turn)


# ---------------------------------------------------------------------------
# Diff
# ---------------------------------------------------------------------------

def compute_diff(patch: GraphPatch, state: SessionState,
                 config: Optional[RuntimeConfig] = None) -> PatchDiff:
    """Blast radius of a patch against the current state; pure.

    Affected sets are op targets plus backbone descendants of the source of
    any status/strength-changed edge. Scope is local only when at most a few
    pre-existing items are touched, no existing determine edge is modified,
    and no active motif would change status.
    """
    cfg = config or RuntimeConfig()
    graph = state.cognitive.graph
    diff = PatchDiff()
    determine_touched = False
    active_motif_endangered = False

    existing_concepts = set(graph.concepts)
    existing_edges = set(graph.edges)
    existing_motifs = set(state.cognitive.motifs)

    def edge_blast(edge_id: str) -> None:
        diff.affected_edges.add(edge_id)
        e = graph.edges.get(edge_id)
        if e is None:
            return
        diff.affected_concepts.update((e.source, e.target))
        diff.affected_concepts.update(graph.descendants(e.source))

    for op in patch.ops:
        d = op.data
        if op.kind == "add_concept":
            diff.affected_concepts.add(d["concept"]["id"])
        elif op.kind == "add_edge":
            # an addition revises nothing about its endpoints; only changes
            # to existing edges propagate blast radius
            diff.affected_edges.add(d["edge"]["id"])
        elif op.kind == "set_confidence":
            diff.affected_concepts.add(d["target"])
        elif op.kind == "set_strength":
            edge_blast(d["target"])
            e = graph.edges.get(d["target"])
            if e is not None and e.relation == Relation.DETERMINE:
                determine_touched = True
        elif op.kind == "set_status":
            if d["target_kind"] == "concept":
                diff.affected_concepts.add(d["target"])
            else:
                edge_blast(d["target"])
                e = graph.edges.get(d["target"])
                if e is not None and e.relation == Relation.DETERMINE:
                    determine_touched = True
                if e is not None and Status(d["status"]) == Status.CANCELLED:
                    for m in state.cognitive.motifs.values():
                        if m.status == MotifStatus.ACTIVE and d["target"] in m.edges:
                            active_motif_endangered = True
        elif op.kind == "add_conflict":
            diff.affected_concepts.update((d["conflict"]["a"], d["conflict"]["b"]))
        elif op.kind == "merge_concepts":
            diff.affected_concepts.update((d["source"], d["target"]))
            diff.affected_concepts.update(graph.descendants(d["source"]))
            diff.affected_concepts.update(graph.descendants(d["target"]))
            for e in graph.incident_edges(d["source"]):
                diff.affected_edges.add(e.id)
        elif op.kind == "bind_motif":
            diff.affected_motifs.add(d["motif"]["id"])
        elif op.kind == "set_motif_status":
            diff.affected_motifs.add(d["motif"])
            m = state.cognitive.motifs.get(d["motif"])
            if (m is not None and m.status == MotifStatus.ACTIVE
                    and MotifEvent(d["event"]) != MotifEvent.CONFIRM):
                active_motif_endangered = True
        elif op.kind == "release_pending_edge":
            diff.affected_edges.add(d["id"])
        # add_evidence / set_provenance / plan / transfer ops accrue support
        # or live outside the graph: no structural blast radius

    for m in state.cognitive.motifs.values():
        if (set(m.bindings.values()) & diff.affected_concepts
                or set(m.edges) & diff.affected_edges):
            diff.affected_motifs.add(m.id)

    for item in state.plan.items.values():
        if set(item.citations) & diff.affected_concepts:
            diff.downstream_plan_items.add(item.id)

    touched_existing = (
        len(diff.affected_concepts & existing_concepts)
        + len(diff.affected_edges & existing_edges)
        + len(diff.affected_motifs & existing_motifs)
    )
    local = (touched_existing <= cfg.revision.local_max_items
             and not determine_touched
             and not active_motif_endangered)
    diff.scope = Scope.LOCAL if local else Scope.NON_LOCAL
    return diff


def touched_for_layout(ops: list[PatchOp], state: SessionState) -> set[str]:
    """Concept ids whose position may legitimately move after these ops.

    Called after application: an added or re-admitted edge can raise its
    target and everything below it; a cancellation can lower them; merges
    re-route structure through the surviving node. Everything else
    (confidence, strength, provenance, evidence, motifs, plan) never moves a
    node."""
    graph = state.cognitive.graph
    touched: set[str] = set()

    def below(cid: str) -> None:
        touched.add(cid)
        touched.update(graph.descendants(cid))

    for op in ops:
        d = op.data
        if op.kind == "add_concept":
            touched.add(d["concept"]["id"])
        elif op.kind == "add_edge":
            touched.add(d["edge"]["source"])
            below(d["edge"]["target"])
        elif op.kind == "release_pending_edge":
            e = graph.edges.get(d["id"]) or state.cognitive.pending_edges.get(d["id"])
            if e is not None:
                touched.add(e.source)
                below(e.target)
        elif op.kind == "merge_concepts":
            touched.add(d["source"])
            below(d["target"])
        elif op.kind == "set_status":
            if d["target_kind"] == "concept":
                below(d["target"])
            else:
                e = graph.edges.get(d["target"])
                if e is not None:
                    touched.add(e.source)
                    below(e.target)
    return touched


# ---------------------------------------------------------------------------
# Commit normalization
# ---------------------------------------------------------------------------

def _norm_apply(state: SessionState, ops: list[PatchOp], op: PatchOp, turn: int,
                undo_sink: list[PatchOp]) -> None:
    undo_sink.extend(apply_op(state, op, turn))
    ops.append(op)


def run_normalization(state: SessionState, config: RuntimeConfig,
                      vocabulary: list[MotifPattern], turn: int,
                      undo_sink: list[PatchOp]) -> list[PatchOp]:
    """Structural follow-up of a committed patch, as explicit ops.

    Order: singleton compaction, cycle repair, pending-edge re-admission,
    grounding, slot-conflict detection, motif maintenance for cancelled
    edges, motif matching, transfer retrieval. Deterministic end to end.
    """
    cog = state.cognitive
    graph = cog.graph
    ops: list[PatchOp] = []

    for source_id, target_id in plan_singleton_merges(graph):
        _norm_apply(state, ops, PatchOp("merge_concepts", {
            "source": source_id, "target": target_id,
            "note": "singleton slot compaction"}), turn, undo_sink)

    for eid in plan_cycle_repairs(graph):
        _norm_apply(state, ops, PatchOp("set_status", {
            "target_kind": "edge", "target": eid, "status": Status.CANCELLED.value,
            "note": CYCLE_REPAIR_NOTE}), turn, undo_sink)

    for eid in sorted(cog.pending_edges):
        edge = cog.pending_edges[eid]
        if edge.source in graph.concepts and edge.target in graph.concepts \
                and not graph.has_backbone_path(edge.target, edge.source) \
                and graph.find_duplicate(edge.source, edge.target, edge.relation) is None:
            _norm_apply(state, ops, PatchOp("release_pending_edge", {"id": eid}),
                        turn, undo_sink)

    for item_id in plan_groundings(graph, cog.evidence, config.grounding):
        target_kind = "concept" if item_id in graph.concepts else "edge"
        _norm_apply(state, ops, PatchOp("set_status", {
            "target_kind": target_kind, "target": item_id,
            "status": Status.GROUNDED.value}), turn, undo_sink)

    _detect_slot_conflicts(state, ops, turn, undo_sink)

    # motifs bound to a cancelled edge drop out of active/uncertain
    for mid in sorted(cog.motifs):
        m = cog.motifs[mid]
        if m.status in (MotifStatus.ACTIVE, MotifStatus.UNCERTAIN) and any(
                graph.edges.get(eid) is None or graph.edges[eid].status == Status.CANCELLED
                for eid in m.edges):
            _norm_apply(state, ops, PatchOp("set_motif_status", {
                "motif": mid, "event": MotifEvent.EDGE_CANCELLED.value,
                "source": "system"}), turn, undo_sink)

    known = {(m.pattern, tuple(sorted(m.bindings.items()))) for m in cog.motifs.values()}
    for inst in match_motifs(graph, vocabulary, task_id=state.task_id):
        key = (inst.pattern, tuple(sorted(inst.bindings.items())))
        if key in known:
            continue
        known.add(key)
        inst.id = state.alloc.fresh("motif")
        _norm_apply(state, ops, PatchOp("bind_motif", {"motif": inst.to_dict()}),
                    turn, undo_sink)

    if cog.library.patterns and cog.task_history:
        context = [c for c in graph.live_concepts()
                   if c.status in (Status.CANDIDATE, Status.GROUNDED)
                   and c.created_turn >= state.task_started_turn]
        proposed = {(t.pattern, t.source_task) for t in cog.transfer_candidates}
        for cand in retrieve_transfer_candidates(cog.library, context):
            if (cand.pattern, cand.source_task) in proposed:
                continue
            proposed.add((cand.pattern, cand.source_task))
            cand.id = state.alloc.fresh("transfer")
            _norm_apply(state, ops, PatchOp("add_transfer_candidate",
                                            {"candidate": cand.to_dict()}), turn, undo_sink)

    return ops


def _detect_slot_conflicts(state: SessionState, ops: list[PatchOp], turn: int,
                           undo_sink: list[PatchOp]) -> None:
    """Two grounded concepts sharing a slot is an explicit tension, never a
    silent merge."""
    graph = state.cognitive.graph
    by_slot: dict[str, list[str]] = {}
    for c in graph.grounded_concepts():
        if c.slot is not None:
            by_slot.setdefault(c.slot, []).append(c.id)
    existing_pairs = {(x.a, x.b) for x in graph.conflicts.values()
                      if x.status == ConflictStatus.OPEN}
    for slot in sorted(by_slot):
        ids = sorted(by_slot[slot])
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                pair = (ids[i], ids[j])
                if pair in existing_pairs:
                    continue
                existing_pairs.add(pair)
                conflict = ConflictEdge(
                    id=state.alloc.fresh("conflict"), a=ids[i], b=ids[j],
                    description=f"two grounded concepts contend for slot '{slot}'")
                _norm_apply(state, ops, PatchOp("add_conflict",
                                                {"conflict": conflict.to_dict()}),
                            turn, undo_sink)


# ---------------------------------------------------------------------------
# Commit / surface / review
# ---------------------------------------------------------------------------

@dataclass
class CommitOutcome:
    patch: GraphPatch
    diff: PatchDiff
    committed: bool
    normalization: list[PatchOp] = field(default_factory=list)
    touched: set[str] = field(default_factory=set)


def commit_patch(state: SessionState, patch: GraphPatch, config: RuntimeConfig,
                 vocabulary: list[MotifPattern], *, approved: bool = False) -> CommitOutcome:
    """Apply a patch atomically, then normalize. Non-local patches need an
    approval; any failure rolls back every effect."""
    diff = compute_diff(patch, state, config)
    if diff.scope == Scope.NON_LOCAL and not approved:
        raise reject("approval-required", f"patch {patch.id} is non-local")
    undo_sink: list[PatchOp] = []
    try:
        undo_sink.extend(reversed(apply_ops(state, patch.ops, patch.turn)))
        normalization = run_normalization(state, config, vocabulary, patch.turn, undo_sink)
    except Exception:
        for u in reversed(undo_sink):
            apply_op(state, u, patch.turn)
        raise
    touched = (set(diff.affected_concepts)
               | touched_for_layout(patch.ops, state)
               | touched_for_layout(normalization, state))
    return CommitOutcome(patch=patch, diff=diff, committed=True,
                         normalization=normalization, touched=touched)


def surface_patch(state: SessionState, patch: GraphPatch, diff: PatchDiff) -> CommitOutcome:
    """Park a non-local patch for review without touching any graph."""
    if state.pending_review is not None:
        raise reject("review-in-progress", state.pending_review[0].id)
    state.pending_review = (patch, diff)
    return CommitOutcome(patch=patch, diff=diff, committed=False)


def gate_patch(state: SessionState, patch: GraphPatch, config: RuntimeConfig,
               vocabulary: list[MotifPattern], *, approved: bool = False) -> CommitOutcome:
    """Route a patch: local (or approved) commits, non-local surfaces."""
    diff = compute_diff(patch, state, config)
    if diff.scope == Scope.LOCAL or approved:
        return commit_patch(state, patch, config, vocabulary, approved=approved)
    return surface_patch(state, patch, diff)


def approve_pending(state: SessionState, config: RuntimeConfig,
                    vocabulary: list[MotifPattern],
                    drop_ops: Optional[list[int]] = None) -> CommitOutcome:
    """Commit the parked patch, optionally minus user-removed ops."""
    if state.pending_review is None:
        raise reject("unknown-target", "no pending review")
    pending = state.pending_review
    patch, _ = pending
    state.pending_review = None
    if drop_ops:
        dropped = set(drop_ops)
        kept = [op for i, op in enumerate(patch.ops) if i not in dropped]
        patch = GraphPatch(id=patch.id, ops=kept, origin=patch.origin, turn=patch.turn)
    try:
        return commit_patch(state, patch, config, vocabulary, approved=True)
    except Exception:
        state.pending_review = pending  # a failed approval leaves the review open
        raise


def reject_pending(state: SessionState) -> GraphPatch:
    """Drop the parked patch; zero graph deltas."""
    if state.pending_review is None:
        raise reject("unknown-target", "no pending review")
    patch, _ = state.pending_review
    state.pending_review = None
    return patch


# ---------------------------------------------------------------------------
# Turn compilation
# ---------------------------------------------------------------------------

@dataclass
class TurnInputs:
    utterance: Optional[Utterance] = None
    concept_candidates: list[ConceptCandidate] = field(default_factory=list)
    dependency_candidates: list[DependencyCandidate] = field(default_factory=list)
    clarification_ops: list[PatchOp] = field(default_factory=list)
    direct_edits: list[dict] = field(default_factory=list)  # revise payloads


def _normalized_label(label: str) -> str:
    return " ".join(label.lower().split())


def compile_turn_to_patch(inputs: TurnInputs, state: SessionState,
                          config: RuntimeConfig) -> GraphPatch:
    """Merge one turn's inputs into a single ordered patch: direct edits
    first, then clarification effects, then extraction candidates. Assistant
    content never compiles into cognitive-layer ops here; it arrives via the
    plan-layer path."""
    ops: list[PatchOp] = []
    for edit in inputs.direct_edits:
        ops.extend(build_revise_ops(state, edit.get("kind", "structure"), edit, config))
    ops.extend(inputs.clarification_ops)
    ops.extend(_compile_extraction(inputs, state, config))
    origin = (PatchOrigin.USER_EDIT if inputs.direct_edits
              else PatchOrigin.CLARIFICATION if inputs.clarification_ops
              else PatchOrigin.EXTRACTION)
    return GraphPatch(id=state.alloc.fresh("patch"), ops=ops, origin=origin,
                      turn=state.turn)


def _compile_extraction(inputs: TurnInputs, state: SessionState,
                        config: RuntimeConfig) -> list[PatchOp]:
    graph = state.cognitive.graph
    ops: list[PatchOp] = []
    ref_to_id: dict[str, str] = {}
    live_by_label: dict[str, str] = {}
    live_by_slot: dict[str, str] = {}
    for c in graph.live_concepts():
        live_by_label.setdefault(f"{c.kind.value}:{_normalized_label(c.label)}", c.id)
        if c.slot is not None:
            live_by_slot.setdefault(c.slot, c.id)

    turn = inputs.utterance.turn if inputs.utterance else state.turn
    for i, cand in enumerate(inputs.concept_candidates):
        source = (EvidenceSource.ASSISTANT_STATEMENT if cand.predicted
                  else EvidenceSource.USER_STATEMENT)
        raw_conf = cand.concept.confidence or (
            config.extraction.marked_confidence if not cand.predicted else 0.5)
        key = f"{cand.concept.kind.value}:{_normalized_label(cand.concept.label)}"
        existing = live_by_label.get(key)
        if existing is not None:
            # restatement: accrue evidence instead of duplicating the node
            ref_to_id[f"new:{i}"] = existing
        else:
            cid = state.alloc.fresh("concept")
            concept = Concept(
                id=cid, kind=cand.concept.kind, label=cand.concept.label,
                slot=cand.concept.slot, value=cand.concept.value, confidence=0.0,
                provenance=Provenance.ASSISTANT_PROPOSED, status=Status.CANDIDATE,
                created_turn=turn, evidence=[],
            )
            ops.append(PatchOp("add_concept", {"concept": concept.to_dict()}))
            ref_to_id[f"new:{i}"] = cid
            live_by_label[key] = cid
            if concept.slot is not None:
                live_by_slot.setdefault(concept.slot, cid)
            existing = None
        target = ref_to_id[f"new:{i}"]
        record = EvidenceRecord(
            id=state.alloc.fresh("evidence"), target=target, turn=turn,
            source=source, weight=raw_conf)
        ops.append(PatchOp("add_evidence", {"record": record.to_dict()}))

    seen_triples: set[tuple] = set()
    for cand in inputs.dependency_candidates:
        src = _resolve_ref(cand.edge.source, ref_to_id, live_by_slot, live_by_label, graph)
        tgt = _resolve_ref(cand.edge.target, ref_to_id, live_by_slot, live_by_label, graph)
        if src is None or tgt is None or src == tgt:
            continue  # extractor noise: unresolvable or degenerate proposal
        triple = (src, tgt, cand.edge.relation)
        if triple in seen_triples:
            continue
        seen_triples.add(triple)
        dup = graph.find_duplicate(src, tgt, cand.edge.relation)
        if dup is not None:
            # re-proposed dependency boosts the existing edge instead
            boosted = max(dup.strength, cand.edge.strength)
            if boosted > dup.strength:
                ops.append(PatchOp("set_strength", {"target": dup.id, "value": boosted}))
            continue
        eid = state.alloc.fresh("edge")
        edge = DependencyEdge(
            id=eid, source=src, target=tgt, relation=cand.edge.relation,
            strength=0.0, status=Status.CANDIDATE,
            provenance=Provenance.ASSISTANT_PROPOSED,
            rationale=cand.edge.rationale, created_turn=turn)
        ops.append(PatchOp("add_edge", {"edge": edge.to_dict()}))
        record = EvidenceRecord(
            id=state.alloc.fresh("evidence"), target=eid, turn=turn,
            source=EvidenceSource.USER_STATEMENT, weight=cand.edge.strength)
        ops.append(PatchOp("add_evidence", {"record": record.to_dict()}))
    return ops


def _resolve_ref(ref: str, ref_to_id: dict, live_by_slot: dict, live_by_label: dict,
                 graph: CognitiveGraph) -> Optional[str]:
    if ref in ref_to_id:
        return ref_to_id[ref]
    if ref.startswith("id:"):
        cid = ref[3:]
        return cid if cid in graph.concepts else None
    if ref.startswith("slot:"):
        slot = ref[5:]
        ids = sorted(c.id for c in graph.live_concepts() if c.slot == slot)
        return ids[0] if ids else live_by_slot.get(slot)
    if ref.startswith("label:"):
        wanted = _normalized_label(ref[6:])
        ids = sorted(c.id for c in graph.live_concepts()
                     if _normalized_label(c.label) == wanted)
        if ids:
            return ids[0]
        for key, cid in sorted(live_by_label.items()):
            if key.split(":", 1)[1] == wanted:
                return cid
        return None
    return None


def compile_assistant_turn(utterance: Utterance, extraction_response: dict,
                           state: SessionState, config: RuntimeConfig) -> GraphPatch:
    """Assistant text becomes a plan draft plus evidence for structure it
    echoes; it never creates cognitive items directly."""
    graph = state.cognitive.graph
    ops: list[PatchOp] = []
    citations: list[str] = []
    for raw in extraction_response.get("concepts", []):
        matched = _match_existing(graph, raw)
        if matched is not None:
            citations.append(matched)
            record = EvidenceRecord(
                id=state.alloc.fresh("evidence"), target=matched, turn=utterance.turn,
                source=EvidenceSource.ASSISTANT_STATEMENT,
                weight=float(raw.get("confidence", 0.5)))
            ops.append(PatchOp("add_evidence", {"record": record.to_dict()}))
    item = PlanItem(
        id=state.alloc.fresh("plan"), kind=PlanItemKind.DRAFT, text=utterance.text,
        citations=sorted(set(citations)), provenance=Provenance.ASSISTANT_PROPOSED,
        created_turn=utterance.turn)
    ops.append(PatchOp("add_plan_item", {"item": item.to_dict()}))
    return GraphPatch(id=state.alloc.fresh("patch"), ops=ops,
                      origin=PatchOrigin.EXTRACTION, turn=state.turn)


def _match_existing(graph: CognitiveGraph, raw: dict) -> Optional[str]:
    wanted = _normalized_label(raw.get("label", ""))
    slot = raw.get("slot")
    for c in graph.live_concepts():
        if _normalized_label(c.label) == wanted:
            return c.id
    if slot is not None:
        ids = sorted(c.id for c in graph.live_concepts() if c.slot == slot)
        if ids:
            return ids[0]
    return None


# ---------------------------------------------------------------------------
# Direct revision
# ---------------------------------------------------------------------------

def build_revise_ops(state: SessionState, kind: str, payload: dict,
                     config: RuntimeConfig) -> list[PatchOp]:
    graph = state.cognitive.graph
    if kind == "confidence":
        target = payload["target"]
        c = graph.concepts.get(target)
        if c is None:
            raise reject("unknown-target", target)
        value = float(payload["value"])
        if value == c.confidence:
            raise reject("no-op-revision", f"confidence of {target} is already {value}")
        return [PatchOp("set_confidence", {"target": target, "value": value})]

    if kind == "concept":
        return _revise_concept(state, payload, config)

    if kind == "structure":
        return _revise_structure(state, payload, config)

    if kind == "status":
        target = payload["target"]
        target_kind = "concept" if target in graph.concepts else "edge"
        if target not in graph.concepts and target not in graph.edges:
            raise reject("unknown-target", target)
        current = (graph.concepts[target].status if target_kind == "concept"
                   else graph.edges[target].status)
        if current.value == payload["status"]:
            raise reject("no-op-revision", f"{target} already {current.value}")
        return [PatchOp("set_status", {
            "target_kind": target_kind, "target": target,
            "status": payload["status"], "note": payload.get("note")})]

    if kind == "motif":
        target = payload["motif"]
        if target not in state.cognitive.motifs:
            raise reject("unknown-target", target)
        event = MotifEvent(payload["action"])
        # reject illegal transitions at draft time, not mid-commit
        next_motif_status(state.cognitive.motifs[target].status, event)
        return [PatchOp("set_motif_status", {
            "motif": target, "event": event.value, "source": "user"})]

    raise reject("unknown-target", f"revision kind {kind}")


def _revise_concept(state: SessionState, payload: dict, config: RuntimeConfig) -> list[PatchOp]:
    graph = state.cognitive.graph
    mode = payload.get("mode", "replace" if payload.get("target") else "scope")
    if mode == "scope" or not payload.get("target"):
        # context-bounded update: a fresh scoped concept, not an overwrite
        cid = state.alloc.fresh("concept")
        concept = Concept(
            id=cid, kind=ConceptKind(payload.get("concept_kind", "preference")),
            label=payload["label"], slot=payload.get("slot"),
            value=payload.get("value"), confidence=0.0,
            provenance=Provenance.USER_CONFIRMED, status=Status.CANDIDATE,
            created_turn=state.turn, evidence=[])
        record = EvidenceRecord(
            id=state.alloc.fresh("evidence"), target=cid, turn=state.turn,
            source=EvidenceSource.USER_STATEMENT,
            weight=config.extraction.marked_confidence)
        return [PatchOp("add_concept", {"concept": concept.to_dict()}),
                PatchOp("add_evidence", {"record": record.to_dict()})]

    target = payload["target"]
    old = graph.concepts.get(target)
    if old is None:
        raise reject("unknown-target", target)
    new_label = payload.get("label", old.label)
    new_value = payload.get("value", old.value)
    new_slot = payload.get("slot", old.slot)
    if (new_label, new_value, new_slot) == (old.label, old.value, old.slot):
        raise reject("no-op-revision", f"{target} unchanged")
    cid = state.alloc.fresh("concept")
    successor = Concept(
        id=cid, kind=old.kind, label=new_label, slot=new_slot, value=new_value,
        confidence=0.0, provenance=Provenance.USER_CONFIRMED, status=old.status,
        created_turn=state.turn, evidence=[])
    tombstone = f"revised from label={old.label!r} value={old.value!r} slot={old.slot!r}"
    return [PatchOp("add_concept", {"concept": successor.to_dict()}),
            PatchOp("merge_concepts", {"source": target, "target": cid,
                                       "note": tombstone})]


def _revise_structure(state: SessionState, payload: dict,
                      config: RuntimeConfig) -> list[PatchOp]:
    graph = state.cognitive.graph
    action = payload.get("action", "add_edge")

    if action == "add_edge":
        src, tgt = payload["source"], payload["target"]
        if src not in graph.concepts or tgt not in graph.concepts:
            raise reject("unknown-target", f"{src}->{tgt}")
        relation = Relation(payload["relation"])
        strength = float(payload.get("strength", config.extraction.marked_confidence))
        dup = graph.find_duplicate(src, tgt, relation)
        if dup is not None:
            boosted = max(dup.strength, strength)
            if boosted == dup.strength:
                raise reject("no-op-revision", f"edge {dup.id} already present")
            return [PatchOp("set_strength", {"target": dup.id, "value": boosted})]
        eid = state.alloc.fresh("edge")
        edge = DependencyEdge(
            id=eid, source=src, target=tgt, relation=relation, strength=0.0,
            status=Status.CANDIDATE, provenance=Provenance.USER_CONFIRMED,
            rationale=payload.get("rationale"), created_turn=state.turn)
        record = EvidenceRecord(
            id=state.alloc.fresh("evidence"), target=eid, turn=state.turn,
            source=EvidenceSource.USER_STATEMENT, weight=strength)
        return [PatchOp("add_edge", {"edge": edge.to_dict()}),
                PatchOp("add_evidence", {"record": record.to_dict()})]

    if action == "cancel":
        eid = payload["edge"]
        e = state.cognitive.graph.edges.get(eid)
        if e is None:
            raise reject("unknown-target", eid)
        if e.status == Status.CANCELLED:
            raise reject("no-op-revision", f"{eid} already cancelled")
        return [PatchOp("set_status", {
            "target_kind": "edge", "target": eid, "status": Status.CANCELLED.value,
            "note": payload.get("note", "cancelled by user revision")})]

    if action == "retype":
        eid = payload["edge"]
        e = graph.edges.get(eid)
        if e is None:
            raise reject("unknown-target", eid)
        relation = Relation(payload["relation"])
        if relation == e.relation:
            raise reject("no-op-revision", f"{eid} is already {relation.value}")
        new_id = state.alloc.fresh("edge")
        successor = DependencyEdge(
            id=new_id, source=e.source, target=e.target, relation=relation,
            strength=e.strength, status=e.status,
            provenance=Provenance.USER_CONFIRMED, rationale=e.rationale,
            created_turn=state.turn)
        return [PatchOp("set_status", {
                    "target_kind": "edge", "target": eid,
                    "status": Status.CANCELLED.value,
                    "note": f"retyped {e.relation.value} -> {relation.value} as {new_id}"}),
                PatchOp("add_edge", {"edge": successor.to_dict()})]

    raise reject("unknown-target", f"structure action {action}")


def revise(state: SessionState, kind: str, payload: dict,
           config: Optional[RuntimeConfig] = None) -> GraphPatch:
    """Draft (not commit) a revision patch of the given kind."""
    cfg = config or RuntimeConfig()
    ops = build_revise_ops(state, kind, payload, cfg)
    return GraphPatch(id=state.alloc.fresh("patch"), ops=ops,
                      origin=PatchOrigin.USER_EDIT, turn=state.turn)


# ---------------------------------------------------------------------------
# Promotion across the plan/cognitive boundary
# ---------------------------------------------------------------------------

def promote_to_cognitive(state: SessionState, item_id: str,
                         confirmation: Optional[dict], config: RuntimeConfig,
                         vocabulary: list[MotifPattern],
                         extractor) -> Optional[CommitOutcome]:
    """Re-extract a confirmed plan item into user-confirmed candidates and
    ground them; the plan item itself is retagged co-authored.

    Promoting an already-promoted item is a no-op. Only an explicit user
    confirmation event referencing the item opens the gate.
    """
    item = state.plan.items.get(item_id)
    if item is None:
        raise reject("unknown-target", item_id)
    if not confirmation or confirmation.get("item") != item_id \
            or confirmation.get("source", "user") != "user":
        raise reject("promotion-gate", f"no user confirmation for {item_id}")

    utterance = Utterance(turn=state.turn, speaker=Speaker.USER, text=item.text)
    response = extractor.extract(utterance, [])
    from .extraction import candidates_from_response, fallback_concept
    concepts, deps = candidates_from_response(response, utterance, extractor.name)
    if not concepts:
        # confirmed content must not be dropped just because the lexicon
        # cannot decompose it
        concepts = [fallback_concept(item.text, state.turn, config.extraction)]

    if item.provenance == Provenance.CO_AUTHORED:
        # already promoted: re-promotion must not duplicate anything
        graph = state.cognitive.graph
        if all(_match_existing(graph, {"label": c.concept.label, "slot": c.concept.slot})
               is not None for c in concepts):
            return None

    ops: list[PatchOp] = []
    inputs = TurnInputs(utterance=utterance, concept_candidates=concepts,
                        dependency_candidates=deps)
    extraction_ops = _compile_extraction(inputs, state, config)
    for op in extraction_ops:
        if op.kind == "add_concept":
            op.data["concept"]["provenance"] = Provenance.USER_CONFIRMED.value
        if op.kind == "add_edge":
            op.data["edge"]["provenance"] = Provenance.USER_CONFIRMED.value
    ops.extend(extraction_ops)
    ops.append(PatchOp("retag_plan_item", {"item": item_id,
                                           "provenance": Provenance.CO_AUTHORED.value}))
    patch = GraphPatch(id=state.alloc.fresh("patch"), ops=ops,
                       origin=PatchOrigin.USER_EDIT, turn=state.turn)
    return commit_patch(state, patch, config, vocabulary, approved=True)


# ---------------------------------------------------------------------------
# Probe responses
# ---------------------------------------------------------------------------

def apply_probe_response(state: SessionState, probe: Probe, response: ProbeResponse,
                         config: RuntimeConfig,
                         vocabulary: Optional[list[MotifPattern]] = None
                         ) -> Optional[CommitOutcome]:
    vocab = vocabulary if vocabulary is not None else []
    motif = state.cognitive.motifs.get(probe.motif)
    if motif is None:
        raise reject("stale-motif", probe.motif)

    if response.verdict == Verdict.DEFER:
        # byte-for-byte no-op on the graphs; only the probe is marked answered
        state.cognitive.probe_answers[probe.id] = {
            "verdict": response.verdict.value, "detail": response.detail or "",
            "turn": state.turn,
        }
        return None

    ops: list[PatchOp] = []
    if response.verdict == Verdict.CONFIRM:
        ops.append(PatchOp("set_motif_status", {
            "motif": motif.id, "event": MotifEvent.CONFIRM.value, "source": "user"}))
        for cid in motif.bound_concepts():
            record = EvidenceRecord(
                id=state.alloc.fresh("evidence"), target=cid, turn=state.turn,
                source=EvidenceSource.CLARIFICATION_ANSWER, weight=1.0)
            ops.append(PatchOp("add_evidence", {"record": record.to_dict()}))
            concept = state.cognitive.graph.concepts[cid]
            if concept.provenance not in (Provenance.USER_CONFIRMED, Provenance.CO_AUTHORED):
                ops.append(PatchOp("set_provenance", {
                    "target_kind": "concept", "target": cid,
                    "provenance": Provenance.USER_CONFIRMED.value}))
        for eid in motif.edges:
            record = EvidenceRecord(
                id=state.alloc.fresh("evidence"), target=eid, turn=state.turn,
                source=EvidenceSource.CLARIFICATION_ANSWER, weight=1.0)
            ops.append(PatchOp("add_evidence", {"record": record.to_dict()}))
    elif response.verdict == Verdict.WEAKEN:
        ops.append(PatchOp("set_motif_status", {
            "motif": motif.id, "event": MotifEvent.WEAKEN.value, "source": "user"}))
        for eid in motif.edges:
            e = state.cognitive.graph.edges.get(eid)
            if e is not None:
                ops.append(PatchOp("set_strength", {
                    "target": eid, "value": e.strength * config.revision.weaken_factor}))
    elif response.verdict == Verdict.REFINE:
        try:
            detail = json.loads(response.detail or "")
            if not isinstance(detail, dict) or "kind" not in detail:
                raise ValueError("detail must be a revise payload")
        except ValueError as exc:
            raise reject("bad-refinement", str(exc)) from exc
        ops.extend(build_revise_ops(state, detail["kind"], detail, config))

    patch = GraphPatch(id=state.alloc.fresh("patch"), ops=ops,
                       origin=PatchOrigin.CLARIFICATION, turn=state.turn)
    if response.verdict == Verdict.REFINE:
        outcome = gate_patch(state, patch, config, vocab)
    else:
        outcome = commit_patch(state, patch, config, vocab, approved=True)
    state.cognitive.probe_answers[probe.id] = {
        "verdict": response.verdict.value,
        "detail": response.detail or "",
        "turn": state.turn,
    }
    return outcome
