"""Build the bundled end-to-end session fixture.

Drives a full two-task planning session through the runtime with a scripted
extractor standing in for the remote model (responses are logged verbatim,
exactly as a live deployment would) and freezes the archive under
tests/fixtures/. The session exercises every interaction mode: silent
auto-revision, a clarification probe answered confirm, a deferred probe, a
surfaced bulk revision approved with one op dropped, an assistant draft
promoted into the cognitive layer, task handoff with library storage, and a
transfer candidate proposed in the follow-on task.

Run: python scripts/build_walkthrough_fixture.py [output-path]
"""

from __future__ import annotations

import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from cogmap.graph import Status  # noqa: E402
from cogmap.motifs import MotifStatus  # noqa: E402
from cogmap.runtime import SessionRuntime  # noqa: E402
from cogmap.session import replay, state_digest, write_archive  # noqa: E402

FIXTURE = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "walkthrough.jsonl"


class ScriptedExtractor:
    """Fixed per-utterance responses, spoken in the external wire format."""

    name = "external"

    RESPONSES = {
        "I want to take my family for a weekend trip nearby, ideally somewhere close to nature.": {
            "concepts": [
                {"label": "nature-centric getaway", "kind": "preference", "confidence": 0.75},
                {"label": "suburban destination", "kind": "preference", "confidence": 0.7},
                {"label": "camping", "kind": "belief", "slot": "accommodation_type",
                 "confidence": 0.5, "predicted": True},
            ],
            "dependencies": [
                {"source": "new:0", "target": "new:2", "relation": "enable",
                 "causal_kind": "direct", "strength": 0.55,
                 "rationale": "nature focus makes camping plausible"},
                {"source": "new:1", "target": "new:2", "relation": "enable",
                 "causal_kind": "direct", "strength": 0.55,
                 "rationale": "suburban reach keeps campsites in range"},
            ],
        },
        "We're bringing our two kids and the golden retriever.": {
            "concepts": [
                {"label": "travelling with two kids", "kind": "factual",
                 "slot": "group_size", "confidence": 0.7},
                {"label": "golden retriever joins", "kind": "factual", "confidence": 0.7},
            ],
            "dependencies": [],
        },
        "My husband has been having back pain lately, so comfort matters more than adventure.": {
            "concepts": [
                {"label": "husband back injury", "kind": "constraint",
                 "slot": "health_constraint", "confidence": 0.8},
                {"label": "comfort over adventure", "kind": "preference", "confidence": 0.7},
            ],
            "dependencies": [
                {"source": "new:0", "target": "label:camping", "relation": "constraint",
                 "causal_kind": "confounding", "strength": 0.55,
                 "rationale": "sleeping on the ground aggravates back pain"},
            ],
        },
        "Comfort is the priority; let's do a cabin hotel with nature views.": {
            "concepts": [
                {"label": "cabin hotel with nature views", "kind": "preference",
                 "slot": "accommodation_type", "confidence": 0.75},
            ],
            "dependencies": [
                {"source": "label:husband back injury", "target": "new:0",
                 "relation": "determine", "causal_kind": "intervention",
                 "strength": 0.6,
                 "rationale": "the back condition fixes the lodging choice"},
            ],
        },
        "For Saturday we're thinking an easy hike and a park picnic.": {
            "concepts": [
                {"label": "easy hike", "kind": "preference", "slot": "activity_type",
                 "confidence": 0.7},
                {"label": "park picnic", "kind": "preference", "confidence": 0.7},
            ],
            "dependencies": [
                {"source": "label:nature-centric getaway", "target": "new:0",
                 "relation": "enable", "causal_kind": "direct", "strength": 0.65},
                {"source": "label:nature-centric getaway", "target": "new:1",
                 "relation": "enable", "causal_kind": "direct", "strength": 0.65},
            ],
        },
        "It's going to rain heavily this weekend; outdoor activities are no longer viable.": {
            "concepts": [
                {"label": "heavy rainstorm forecast", "kind": "factual",
                 "slot": "weather", "confidence": 0.8},
            ],
            "dependencies": [
                {"source": "new:0", "target": "label:easy hike", "relation": "constraint",
                 "causal_kind": "confounding", "strength": 0.7},
                {"source": "new:0", "target": "label:park picnic",
                 "relation": "constraint", "causal_kind": "confounding", "strength": 0.7},
            ],
        },
        "Here's the revised plan: an indoor museum morning, then a cozy cabin afternoon.": {
            "concepts": [
                {"label": "cabin hotel with nature views", "kind": "preference",
                 "slot": "accommodation_type", "confidence": 0.6},
            ],
            "dependencies": [],
        },
        "Let's plan the quarterly team offsite; we need accessible accommodation because Jordan has a bad back too.": {
            "concepts": [
                {"label": "accessible offsite accommodation", "kind": "constraint",
                 "slot": "accommodation_type", "confidence": 0.75},
                {"label": "jordan back trouble", "kind": "constraint",
                 "slot": "health_constraint", "confidence": 0.7},
            ],
            "dependencies": [],
        },
    }

    def extract(self, utterance, context):
        return self.RESPONSES.get(utterance.text, {"concepts": [], "dependencies": []})


def find_concept(graph, label_part):
    hits = [c for c in graph.concepts.values() if label_part in c.label]
    assert hits, f"no concept matching {label_part!r}"
    return hits[0]


def build() -> SessionRuntime:
    ticker = iter(range(10_000))
    runtime = SessionRuntime(extractor=ScriptedExtractor(), session_id="walkthrough",
                             clock=lambda: float(next(ticker)))
    runtime.start_task("family-weekend")

    # silent auto-revision: preferences and a predicted candidate come in
    out = runtime.user_turn(
        "I want to take my family for a weekend trip nearby, ideally somewhere close to nature.")
    assert out.committed and out.probe is None
    graph = runtime.state.cognitive.graph
    camping = find_concept(graph, "camping")
    assert camping.status == Status.CANDIDATE  # predicted, never user-backed

    out = runtime.user_turn("We're bringing our two kids and the golden retriever.")
    assert out.committed and out.probe is None

    out = runtime.user_turn(
        "My husband has been having back pain lately, so comfort matters more than adventure.")
    assert out.committed and out.probe is None
    back = find_concept(graph, "back injury")
    assert back.status == Status.GROUNDED

    out = runtime.user_turn(
        "Comfort is the priority; let's do a cabin hotel with nature views.")
    assert out.committed and out.probe is None
    hotel = find_concept(graph, "cabin hotel")
    assert hotel.status == Status.GROUNDED
    determine_edges = [e for e in graph.edges.values()
                       if e.source == back.id and e.target == hotel.id
                       and e.relation.value == "determine"]
    assert len(determine_edges) == 1 and determine_edges[0].status == Status.GROUNDED

    # the uncertainty concentrated on that determine edge crosses the
    # threshold once the camping candidate folds into the confirmed hotel
    out = runtime.user_turn("For Saturday we're thinking an easy hike and a park picnic.")
    assert camping.status == Status.CANCELLED  # absorbed by the grounded slot-holder
    assert out.probe is not None, "expected the clarification probe this turn"
    assert out.probe["kind"] == "direct_confirmation"
    probe_id = out.probe["id"]
    conditional = runtime.state.cognitive.motifs[out.probe["motif"]]
    assert set(conditional.bindings.values()) == {back.id, hotel.id}

    out = runtime.answer_probe(probe_id, "confirm")
    assert out.committed
    assert conditional.status == MotifStatus.ACTIVE
    assert graph.concepts[back.id].provenance.value == "user_confirmed"

    out = runtime.user_turn(
        "It's going to rain heavily this weekend; outdoor activities are no longer viable.")
    assert out.committed
    second_probe = out.probe  # may or may not fire; defer it if it does
    if second_probe is not None:
        runtime.answer_probe(second_probe["id"], "defer")

    # user-driven bulk revision: deprecate the outdoor subtree, propose two
    # indoor swaps; the aquarium op gets dropped at approval
    hike = find_concept(graph, "easy hike")
    picnic = find_concept(graph, "park picnic")
    out = runtime.edit_batch([
        {"kind": "status", "target": hike.id, "status": "deprecated"},
        {"kind": "status", "target": picnic.id, "status": "deprecated"},
        {"kind": "concept", "mode": "scope", "label": "indoor museum visit",
         "concept_kind": "preference"},
        {"kind": "concept", "mode": "scope", "label": "city aquarium visit",
         "concept_kind": "preference"},
    ])
    assert out.surfaced and not out.committed
    pending = runtime.state.pending_review[0]
    aquarium_id = next(op.data["concept"]["id"] for op in pending.ops
                       if op.kind == "add_concept"
                       and "aquarium" in op.data["concept"]["label"])
    drop = [i for i, op in enumerate(pending.ops)
            if aquarium_id in json.dumps(op.to_dict())]
    assert len(drop) == 2  # the concept and its evidence record
    out = runtime.approve_patch(pending.id, drop_ops=drop)
    assert out.committed
    assert graph.concepts[hike.id].status == Status.DEPRECATED
    assert graph.concepts[picnic.id].status == Status.DEPRECATED
    assert any(c.label == "indoor museum visit" for c in graph.live_concepts())
    assert not any("aquarium" in c.label for c in graph.concepts.values())

    # assistant drafts the revised plan; the user pins it
    out = runtime.assistant_turn(
        "Here's the revised plan: an indoor museum morning, then a cozy cabin afternoon.")
    assert out.committed
    draft_id = sorted(runtime.state.plan.items)[0]
    assert runtime.state.plan.items[draft_id].provenance.value == "assistant_proposed"
    out = runtime.promote(draft_id)
    assert out.committed
    assert runtime.state.plan.items[draft_id].provenance.value == "co_authored"

    runtime.end_task()
    library = runtime.state.cognitive.library
    assert len(library.patterns) == 1
    stored = next(iter(library.patterns.values()))
    slots = {r.slot for r in stored.roles}
    assert slots == {"accommodation_type", "health_constraint"}

    # follow-on task: fresh epoch, library-driven transfer proposal
    runtime.start_task("team-offsite")
    out = runtime.user_turn(
        "Let's plan the quarterly team offsite; we need accessible accommodation "
        "because Jordan has a bad back too.")
    assert out.committed
    candidates = runtime.state.cognitive.transfer_candidates
    assert len(candidates) == 1
    assert candidates[0].pattern == stored.name
    assert candidates[0].status == "uncertain"
    assert candidates[0].source_task == "family-weekend"

    # the task-1 structure survives, one epoch back
    assert graph.edges[determine_edges[0].id].status == Status.GROUNDED
    assert conditional.status == MotifStatus.ACTIVE
    assert graph.concepts[hike.id].status == Status.DEPRECATED
    return runtime


def main() -> int:
    out_path = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else FIXTURE
    runtime = build()
    archive = runtime.to_archive()
    state = replay(archive)
    assert state_digest(state) == archive.final_state_digest
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_archive(archive, str(out_path))
    print(f"{len(archive.events)} events -> {out_path}")
    print(f"final digest: {archive.final_state_digest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
