"""Session engine: one writer folding events into state.

The same handlers serve live traffic and replay. Live calls build an input
event, apply it, and append whatever derived events (committed/surfaced
patches, issued probes) the processing produced. Replay feeds logged input
events through identical code with the external extractor disabled — logged
extraction results are used verbatim — and verifies that each derived event
matches the log, flagging the first divergent seq as nondeterminism.

Turn rhythm: a user utterance closes the previous turn and opens the next
(probe budget resets); assistant utterances, edits, probe answers, and
review decisions belong to the current turn. Task boundaries reset the
task-scoped layers while the motif library and task history persist.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import clarification as clar
from . import revision as rev
from .config import RuntimeConfig
from .errors import CogmapError, reject
from .extraction import (
    RuleBasedExtractor,
    Speaker,
    Utterance,
    candidates_from_response,
)
from .layout import LayoutSnapshot, compute_layout, stability_report
from .motifs import MotifStatus, abstract_motif, load_vocabulary
from .session import (
    DERIVED_KINDS,
    EventKind,
    EventLog,
    EventRecord,
    SessionArchive,
    canonical_json,
    state_digest,
)

CONTEXT_WINDOW = 6  # utterances of context handed to the extractor


@dataclass
class DerivedEvent:
    kind: EventKind
    payload: dict


@dataclass
class TurnOutcome:
    events: list[EventRecord] = field(default_factory=list)
    committed: bool = False
    surfaced: bool = False
    probe: Optional[dict] = None
    touched: set[str] = field(default_factory=set)


class SessionRuntime:
    """Single-writer runtime for one session."""

    def __init__(self, config: Optional[RuntimeConfig] = None, extractor=None,
                 session_id: str = "", clock: Optional[Callable[[], float]] = None):
        self.config = (config or RuntimeConfig()).validated()
        self.session_id = session_id
        self.extractor = extractor  # None while replaying
        self.vocabulary = load_vocabulary(self.config.vocabulary_path)
        self.state = rev.SessionState()
        self.state.source_weights = dict(self.config.source_weights)
        self.log = EventLog()
        self.clock = clock or time.time
        self.last_layout: Optional[LayoutSnapshot] = None
        self.layout_history: list[dict] = []
        self._probed_motifs: set[str] = set()
        self._task_open = False

    # -- live entry points --------------------------------------------------

    def start_task(self, task_id: str) -> TurnOutcome:
        return self._ingest(EventKind.TASK_START, {"task_id": task_id})

    def end_task(self) -> TurnOutcome:
        return self._ingest(EventKind.TASK_END, {"task_id": self.state.task_id})

    def user_turn(self, text: str) -> TurnOutcome:
        utterance = Utterance(turn=self.state.turn + 1, speaker=Speaker.USER, text=text)
        response, name = self._extract(utterance)
        payload = {"speaker": "user", "text": text,
                   "extraction": response, "extractor": name}
        return self._ingest(EventKind.UTTERANCE, payload, turn=utterance.turn)

    def assistant_turn(self, text: str) -> TurnOutcome:
        utterance = Utterance(turn=self.state.turn, speaker=Speaker.ASSISTANT, text=text)
        response, name = self._extract(utterance)
        payload = {"speaker": "assistant", "text": text,
                   "extraction": response, "extractor": name}
        return self._ingest(EventKind.UTTERANCE, payload)

    def _extract(self, utterance: Utterance) -> tuple[dict, str]:
        """Run the configured extractor, optionally degrading to the
        rule-based one when the remote service is unavailable. Whatever ran
        is logged verbatim, so replay never re-consults either."""
        client = self.extractor or RuleBasedExtractor(self.config.extraction)
        try:
            return client.extract(utterance, self._recent_context()), client.name
        except CogmapError as exc:
            if exc.code == "extractor-unavailable" and self.config.extractor.fall_back_to_rule:
                fallback = RuleBasedExtractor(self.config.extraction)
                return fallback.extract(utterance, self._recent_context()), fallback.name
            raise

    def edit(self, payload: dict, target_kind: str = "concept") -> TurnOutcome:
        kind = EventKind.EDGE_EDIT if target_kind == "edge" else EventKind.CONCEPT_EDIT
        return self._ingest(kind, payload)

    def edit_batch(self, edits: list[dict]) -> TurnOutcome:
        return self._ingest(EventKind.CONCEPT_EDIT, {"edits": edits})

    def motif_edit(self, motif_id: str, action: str) -> TurnOutcome:
        return self._ingest(EventKind.MOTIF_EDIT, {"motif": motif_id, "action": action})

    def answer_probe(self, probe_id: str, verdict: str,
                     detail: Optional[str] = None) -> TurnOutcome:
        payload = {"probe": probe_id, "verdict": verdict}
        if detail is not None:
            payload["detail"] = detail
        return self._ingest(EventKind.PROBE_ANSWERED, payload)

    def approve_patch(self, patch_id: str,
                      drop_ops: Optional[list[int]] = None) -> TurnOutcome:
        payload: dict = {"patch": patch_id}
        if drop_ops:
            payload["drop_ops"] = sorted(drop_ops)
        return self._ingest(EventKind.PATCH_APPROVED, payload)

    def reject_patch(self, patch_id: str) -> TurnOutcome:
        return self._ingest(EventKind.PATCH_REJECTED, {"patch": patch_id})

    def promote(self, item_id: str) -> TurnOutcome:
        return self._ingest(EventKind.PROMOTION, {"item": item_id})

    def uptake_transfer(self, candidate_id: str, action: str,
                        bindings: Optional[dict] = None) -> TurnOutcome:
        payload: dict = {"candidate": candidate_id, "action": action}
        if bindings:
            payload["bindings"] = dict(bindings)
        return self._ingest(EventKind.TRANSFER_UPTAKE, payload)

    def annotate(self, kind: str, text: str) -> TurnOutcome:
        return self._ingest(EventKind(kind), {"text": text})

    # -- shared machinery ----------------------------------------------------

    def _recent_context(self) -> list[Utterance]:
        out = []
        for e in reversed(self.log.events):
            if e.kind == EventKind.UTTERANCE:
                out.append(Utterance(turn=e.turn, speaker=Speaker(e.payload["speaker"]),
                                     text=e.payload["text"]))
                if len(out) >= CONTEXT_WINDOW:
                    break
        return list(reversed(out))

    def _ingest(self, kind: EventKind, payload: dict,
                turn: Optional[int] = None) -> TurnOutcome:
        event = EventRecord(seq=self.log.last_seq() + 1,
                            turn=self.state.turn if turn is None else turn,
                            timestamp=self.clock(), kind=kind, payload=payload)
        self.log.append(event)
        prior_turn = self.state.turn
        prior_budget = self.state.probe_budget_used
        prior_alloc = dict(self.state.alloc.next)
        try:
            derived = self._process_input(event)
        except Exception:
            # rejected input never pollutes the log; patch application is
            # atomic on its own, so only the turn scalars and the id
            # counters need restoring (burned ids would desync replay)
            self.log.events.pop()
            self.state.turn = prior_turn
            self.state.cognitive.graph.turn_counter = prior_turn
            self.state.probe_budget_used = prior_budget
            self.state.alloc.next = prior_alloc
            raise
        outcome = TurnOutcome(events=[event])
        for spec in derived:
            record = EventRecord(seq=self.log.last_seq() + 1, turn=self.state.turn,
                                 timestamp=self.clock(), kind=spec.kind,
                                 payload=spec.payload)
            self.log.append(record)
            outcome.events.append(record)
            if spec.kind == EventKind.PATCH_COMMITTED:
                outcome.committed = True
            elif spec.kind == EventKind.PATCH_SURFACED:
                outcome.surfaced = True
            elif spec.kind == EventKind.PROBE_ISSUED:
                outcome.probe = spec.payload["probe"]
        outcome.touched = self._refresh_layout(derived)
        return outcome

    def replay_events(self, events: list[EventRecord], *, until: Optional[int] = None,
                      observer: Optional[Callable] = None) -> None:
        i = 0
        while i < len(events):
            event = events[i]
            if until is not None and event.seq > until:
                return
            if event.kind in DERIVED_KINDS:
                raise reject("nondeterminism-detected",
                             f"orphan derived event at seq {event.seq}")
            self.log.append(event)
            derived = self._process_input(event)
            for spec in derived:
                i += 1
                if i >= len(events) or (until is not None and events[i].seq > until):
                    if until is not None:
                        return
                    raise reject("nondeterminism-detected",
                                 f"log ends before derived {spec.kind.value} "
                                 f"after seq {event.seq}")
                logged = events[i]
                if logged.kind != spec.kind or logged.turn != self.state.turn or \
                        canonical_json(logged.payload) != canonical_json(spec.payload):
                    raise reject("nondeterminism-detected",
                                 f"first divergent seq {logged.seq}")
                self.log.append(logged)
            self._refresh_layout(derived)
            if observer is not None:
                observer(self, event)
            i += 1

    def _refresh_layout(self, derived: list[DerivedEvent]) -> set[str]:
        touched: set[str] = set()
        mutated = False
        for spec in derived:
            if spec.kind == EventKind.PATCH_COMMITTED:
                mutated = True
                touched |= set(spec.payload.get("touched", []))
        if not mutated and self.last_layout is not None:
            return touched
        snapshot = compute_layout(self.state.cognitive.graph, previous=self.last_layout)
        report = None
        if self.last_layout is not None:
            report = stability_report(self.last_layout, snapshot, touched)
        self.layout_history.append({
            "seq": self.log.last_seq(), "snapshot": snapshot,
            "report": report, "touched": set(touched),
        })
        self.last_layout = snapshot
        return touched

    # -- event handlers -------------------------------------------------------

    def _process_input(self, event: EventRecord) -> list[DerivedEvent]:
        kind = event.kind
        if kind == EventKind.UTTERANCE:
            return self._on_utterance(event)
        if kind in (EventKind.CONCEPT_EDIT, EventKind.EDGE_EDIT):
            return self._on_edit(event)
        if kind == EventKind.MOTIF_EDIT:
            return self._on_motif_edit(event)
        if kind == EventKind.PROBE_ANSWERED:
            return self._on_probe_answered(event)
        if kind == EventKind.PATCH_APPROVED:
            return self._on_patch_approved(event)
        if kind == EventKind.PATCH_REJECTED:
            return self._on_patch_rejected(event)
        if kind == EventKind.PROMOTION:
            return self._on_promotion(event)
        if kind == EventKind.TRANSFER_UPTAKE:
            return self._on_transfer_uptake(event)
        if kind == EventKind.TASK_START:
            return self._on_task_start(event)
        if kind == EventKind.TASK_END:
            return self._on_task_end(event)
        return []  # text_* annotations carry no state effect

    def _committed_event(self, outcome: rev.CommitOutcome, approved: bool) -> DerivedEvent:
        return DerivedEvent(EventKind.PATCH_COMMITTED, {
            "patch": outcome.patch.to_dict(),
            "diff": outcome.diff.to_dict(),
            "normalization": [op.to_dict() for op in outcome.normalization],
            "approved": approved,
            "touched": sorted(outcome.touched),
        })

    def _surfaced_event(self, outcome: rev.CommitOutcome) -> DerivedEvent:
        return DerivedEvent(EventKind.PATCH_SURFACED, {
            "patch": outcome.patch.to_dict(), "diff": outcome.diff.to_dict()})

    def _gate_and_describe(self, patch: rev.GraphPatch, *,
                           approved: bool = False) -> list[DerivedEvent]:
        outcome = rev.gate_patch(self.state, patch, self.config, self.vocabulary,
                                 approved=approved)
        if outcome.committed:
            return [self._committed_event(outcome, approved)]
        return [self._surfaced_event(outcome)]

    def _on_utterance(self, event: EventRecord) -> list[DerivedEvent]:
        payload = event.payload
        speaker = Speaker(payload["speaker"])
        response = payload.get("extraction", {"concepts": [], "dependencies": []})
        if speaker == Speaker.USER:
            self.state.turn += 1
            self.state.cognitive.graph.turn_counter = self.state.turn
            self.state.probe_budget_used = False
            utterance = Utterance(turn=self.state.turn, speaker=speaker,
                                  text=payload["text"])
            concepts, deps = candidates_from_response(
                response, utterance, payload.get("extractor", "rule_based"))
            inputs = rev.TurnInputs(utterance=utterance, concept_candidates=concepts,
                                    dependency_candidates=deps)
            patch = rev.compile_turn_to_patch(inputs, self.state, self.config)
            derived = self._gate_and_describe(patch)
            if derived[0].kind == EventKind.PATCH_COMMITTED:
                probe_event = self._maybe_issue_probe()
                if probe_event is not None:
                    derived.append(probe_event)
            return derived
        utterance = Utterance(turn=self.state.turn, speaker=speaker, text=payload["text"])
        patch = rev.compile_assistant_turn(utterance, response, self.state, self.config)
        return self._gate_and_describe(patch)

    def _maybe_issue_probe(self) -> Optional[DerivedEvent]:
        if self.state.probe_budget_used:
            return None
        graph = self.state.cognitive.graph
        scored = []
        for mid in sorted(self.state.cognitive.motifs):
            motif = self.state.cognitive.motifs[mid]
            if motif.status != MotifStatus.UNCERTAIN or mid in self._probed_motifs \
                    or motif.task_id != self.state.task_id:
                continue
            scored.append(clar.score_impact(motif, graph, self.state,
                                            self.config.clarification))
        probe = clar.select_probe(scored, self.config.clarification, self.state.turn,
                                  budget_used=self.state.probe_budget_used,
                                  motifs=self.state.cognitive.motifs, graph=graph)
        if probe is None:
            return None
        probe.id = self.state.alloc.fresh("probe")
        self.state.cognitive.probes[probe.id] = probe
        self.state.probe_budget_used = True
        self._probed_motifs.add(probe.motif)
        return DerivedEvent(EventKind.PROBE_ISSUED, {"probe": probe.to_dict()})

    def _on_edit(self, event: EventRecord) -> list[DerivedEvent]:
        payload = event.payload
        edits = payload.get("edits") or [payload]
        inputs = rev.TurnInputs(direct_edits=edits)
        patch = rev.compile_turn_to_patch(inputs, self.state, self.config)
        return self._gate_and_describe(patch)

    def _on_motif_edit(self, event: EventRecord) -> list[DerivedEvent]:
        payload = event.payload
        if payload["motif"] not in self.state.cognitive.motifs:
            raise reject("unknown-target", payload["motif"])
        ops = [rev.PatchOp("set_motif_status", {
            "motif": payload["motif"], "event": payload["action"], "source": "user"})]
        patch = rev.GraphPatch(id=self.state.alloc.fresh("patch"), ops=ops,
                               origin=rev.PatchOrigin.USER_EDIT, turn=self.state.turn)
        return self._gate_and_describe(patch)

    def _on_probe_answered(self, event: EventRecord) -> list[DerivedEvent]:
        payload = event.payload
        response = clar.ProbeResponse(probe=payload["probe"],
                                      verdict=clar.Verdict(payload["verdict"]),
                                      detail=payload.get("detail"))
        outcome = clar.apply_response(response, self.state, self.config,
                                      vocabulary=self.vocabulary)
        if outcome is None:
            return []
        if outcome.committed:
            return [self._committed_event(outcome, approved=True)]
        return [self._surfaced_event(outcome)]

    def _on_patch_approved(self, event: EventRecord) -> list[DerivedEvent]:
        payload = event.payload
        if self.state.pending_review is None:
            raise reject("unknown-target", "no pending review")
        pending_id = self.state.pending_review[0].id
        if payload.get("patch") not in (None, pending_id):
            raise reject("unknown-target", f"pending patch is {pending_id}")
        outcome = rev.approve_pending(self.state, self.config, self.vocabulary,
                                      drop_ops=payload.get("drop_ops"))
        return [self._committed_event(outcome, approved=True)]

    def _on_patch_rejected(self, event: EventRecord) -> list[DerivedEvent]:
        payload = event.payload
        if self.state.pending_review is None:
            raise reject("unknown-target", "no pending review")
        pending_id = self.state.pending_review[0].id
        if payload.get("patch") not in (None, pending_id):
            raise reject("unknown-target", f"pending patch is {pending_id}")
        rev.reject_pending(self.state)
        return []

    def _on_promotion(self, event: EventRecord) -> list[DerivedEvent]:
        item_id = event.payload["item"]
        confirmation = {"item": item_id, "source": "user"}
        outcome = rev.promote_to_cognitive(
            self.state, item_id, confirmation, self.config, self.vocabulary,
            extractor=RuleBasedExtractor(self.config.extraction))
        if outcome is None:
            return []
        return [self._committed_event(outcome, approved=True)]

    def _on_transfer_uptake(self, event: EventRecord) -> list[DerivedEvent]:
        payload = event.payload
        candidate = next((t for t in self.state.cognitive.transfer_candidates
                          if t.id == payload["candidate"]), None)
        if candidate is None:
            raise reject("unknown-target", payload["candidate"])
        action = payload.get("action", "adopt")
        if action == "reject":
            ops = [rev.PatchOp("set_transfer_status",
                               {"candidate": candidate.id, "status": "rejected"})]
            patch = rev.GraphPatch(id=self.state.alloc.fresh("patch"), ops=ops,
                                   origin=rev.PatchOrigin.TRANSFER, turn=self.state.turn)
            outcome = rev.commit_patch(self.state, patch, self.config, self.vocabulary,
                                       approved=True)
            return [self._committed_event(outcome, approved=True)]
        if action != "adopt":
            raise reject("unknown-target", f"transfer action {action}")
        return self._adopt_transfer(candidate, payload.get("bindings") or {})

    def _adopt_transfer(self, candidate, extra_bindings: dict) -> list[DerivedEvent]:
        library = self.state.cognitive.library
        pattern = library.patterns.get(candidate.pattern)
        if pattern is None:
            raise reject("unknown-target", candidate.pattern)
        graph = self.state.cognitive.graph
        bindings = dict(candidate.proposed_bindings) | dict(extra_bindings)
        missing = [r.name for r in pattern.roles if r.name not in bindings]
        if missing:
            raise reject("unknown-target", f"unbound roles {missing}")
        for cid in bindings.values():
            if cid not in graph.concepts:
                raise reject("unknown-target", cid)

        ops: list[rev.PatchOp] = []
        edge_ids: list[str] = []
        for template in pattern.edges:
            src, tgt = bindings[template.source_role], bindings[template.target_role]
            existing = graph.find_duplicate(src, tgt, template.relation)
            if existing is not None:
                edge_ids.append(existing.id)
                continue
            eid = self.state.alloc.fresh("edge")
            edge = rev.DependencyEdge(
                id=eid, source=src, target=tgt, relation=template.relation,
                strength=0.5, status=rev.Status.CANDIDATE,
                provenance=rev.Provenance.TRANSFER_BASED,
                rationale=f"instantiated from library pattern {pattern.name}",
                created_turn=self.state.turn)
            ops.append(rev.PatchOp("add_edge", {"edge": edge.to_dict()}))
            edge_ids.append(eid)
        instance = rev.MotifInstance(
            id=self.state.alloc.fresh("motif"), pattern=pattern.name,
            bindings=bindings, edges=edge_ids, status=MotifStatus.UNCERTAIN,
            provenance=rev.Provenance.TRANSFER_BASED, task_id=self.state.task_id,
            rationale=f"transferred from task {candidate.source_task}",
            history=[{"event": "transferred", "turn": self.state.turn, "source": "user"}])
        ops.append(rev.PatchOp("bind_motif", {"motif": instance.to_dict()}))
        ops.append(rev.PatchOp("set_transfer_status",
                               {"candidate": candidate.id, "status": "adopted"}))
        patch = rev.GraphPatch(id=self.state.alloc.fresh("patch"), ops=ops,
                               origin=rev.PatchOrigin.TRANSFER, turn=self.state.turn)
        outcome = rev.commit_patch(self.state, patch, self.config, self.vocabulary,
                                   approved=True)
        return [self._committed_event(outcome, approved=True)]

    def _on_task_start(self, event: EventRecord) -> list[DerivedEvent]:
        task_id = event.payload["task_id"]
        if task_id == self.state.task_id:
            return []
        had_task = bool(self.state.task_id)
        self._finish_task()
        self.state.task_id = task_id
        self._task_open = True
        self.state.task_started_turn = self.state.turn
        self.state.plan.items = {}  # plan artifacts are per-task
        self.state.pending_review = None
        self.state.probe_budget_used = False
        if not had_task:
            return []
        # user-grounded structure persists across tasks, but the previous
        # epoch's concepts step back to deprecated: still visible and
        # traceable, yet outside compaction, grounding relief, matching,
        # and slot-conflict detection for the new task
        ops = [
            rev.PatchOp("set_status", {
                "target_kind": "concept", "target": c.id,
                "status": rev.Status.DEPRECATED.value,
                "note": None})
            for c in self.state.cognitive.graph.live_concepts()
            if c.status in (rev.Status.CANDIDATE, rev.Status.GROUNDED)
        ]
        if not ops:
            return []
        patch = rev.GraphPatch(id=self.state.alloc.fresh("patch"), ops=ops,
                               origin=rev.PatchOrigin.SYSTEM_CONSISTENCY,
                               turn=self.state.turn)
        outcome = rev.commit_patch(self.state, patch, self.config, self.vocabulary,
                                   approved=True)
        return [self._committed_event(outcome, approved=True)]

    def _on_task_end(self, event: EventRecord) -> list[DerivedEvent]:
        self._finish_task()
        return []

    def _finish_task(self) -> None:
        if not self._task_open or not self.state.task_id:
            return
        self._task_open = False
        cog = self.state.cognitive
        for mid in sorted(cog.motifs):
            motif = cog.motifs[mid]
            if motif.status == MotifStatus.ACTIVE:
                pattern = abstract_motif(motif, cog.graph)
                cog.library.store(pattern, source_task=self.state.task_id, adopted=True)
        cog.task_history.append(self.state.task_id)

    # -- inspection -----------------------------------------------------------

    def digest(self) -> str:
        return state_digest(self.state)

    def to_archive(self) -> SessionArchive:
        return SessionArchive(session_id=self.session_id, config=self.config,
                              events=list(self.log.events),
                              final_state_digest=self.digest())
