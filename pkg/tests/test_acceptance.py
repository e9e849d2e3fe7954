"""Acceptance suite: one test per release criterion, tolerances pinned.

Each test prints a PASS line on success so a plain run reads as a checklist:

    pytest tests/test_acceptance.py -s
"""

import itertools
import pathlib
import random
import time

import pytest

from cogmap.clarification import ImpactScore, select_probe
from cogmap.config import ClarificationConfig, RuntimeConfig
from cogmap.errors import CogmapError
from cogmap.extraction import RuleBasedExtractor, Speaker, Utterance
from cogmap.graph import (
    Provenance,
    Relation,
    Status,
    clone_graph,
    detect_cycles,
    repair_cycles,
    validate_backbone,
)
from cogmap.motifs import MotifStatus, load_vocabulary, match_motifs
from cogmap.revision import GraphPatch, PatchOp, PatchOrigin, SessionState, commit_patch
from cogmap.runtime import SessionRuntime
from cogmap.session import (
    EventKind,
    read_archive,
    replay,
    serialize_state,
    state_digest,
)

from conftest import make_concept, make_edge, make_graph, repair_oracle, scc_oracle
from generators import drive_random_session
from test_motifs import match_oracle

FIXTURE = pathlib.Path(__file__).parent / "fixtures" / "walkthrough.jsonl"
CFG = RuntimeConfig()


def _report(name):
    print(f"\nACCEPTANCE  {name}: PASS")


# ---------------------------------------------------------------------------
# 1. Backbone safety
# ---------------------------------------------------------------------------

def _random_valid_patch(rng, state, turn):
    graph = state.cognitive.graph
    live = [c for c in graph.live_concepts()]
    ops = []
    for _ in range(rng.randint(1, 4)):
        roll = rng.random()
        if roll < 0.4 and len(graph.concepts) < 30:
            cid = f"c{rng.randrange(10_000):04d}"
            if cid in graph.concepts:
                continue
            concept = make_concept(cid, kind=rng.choice(
                ["belief", "constraint", "preference", "factual"]),
                slot=rng.choice([None, None, "budget", "weather"]),
                status="candidate", confidence=round(rng.random(), 2), evidence=[])
            ops.append(PatchOp("add_concept", {"concept": concept.to_dict()}))
            live.append(concept)
        elif roll < 0.75 and len(live) >= 2:
            a, b = rng.sample(live, 2)
            eid = f"e{rng.randrange(10_000):04d}"
            if eid in graph.edges or a.id == b.id:
                continue
            relation = rng.choice(list(Relation))
            if graph.find_duplicate(a.id, b.id, relation) is not None:
                continue
            edge = make_edge(eid, a.id, b.id, relation.value,
                             strength=round(rng.random(), 2),
                             status="candidate", turn=turn)
            ops.append(PatchOp("add_edge", {"edge": edge.to_dict()}))
        elif roll < 0.85 and live:
            ops.append(PatchOp("set_confidence", {
                "target": rng.choice(live).id, "value": round(rng.random(), 2)}))
        elif roll < 0.95 and graph.edges:
            eid = rng.choice(sorted(graph.edges))
            if graph.edges[eid].status == Status.CANCELLED:
                continue
            ops.append(PatchOp("set_status", {
                "target_kind": "edge", "target": eid,
                "status": rng.choice(["deprecated", "cancelled", "candidate"])}))
        elif live:
            c = rng.choice(live)
            if c.status == Status.CANCELLED:
                continue
            ops.append(PatchOp("set_status", {
                "target_kind": "concept", "target": c.id, "status": "deprecated"}))
    return GraphPatch(id=f"g{rng.randrange(10_000):04d}", ops=ops,
                      origin=PatchOrigin.USER_EDIT, turn=turn)


def test_backbone_safety_over_randomized_patch_sequences():
    """10,000 randomized valid patch sequences (<= 30 concepts) all end with
    a clean validation report, in under 60 s."""
    rng = random.Random(0xBACC)
    started = time.time()
    sequences = 10_000
    for _ in range(sequences):
        state = SessionState()
        state.task_id = "t"
        for turn in range(rng.randint(2, 5)):
            patch = _random_valid_patch(rng, state, turn)
            try:
                commit_patch(state, patch, CFG, [], approved=True)
            except CogmapError:
                continue  # op invalidated by earlier ops in this patch
            report = validate_backbone(state.cognitive.graph)
            assert report.ok, report.to_dict()
        report = validate_backbone(state.cognitive.graph)
        assert report.ok, report.to_dict()
    elapsed = time.time() - started
    assert elapsed < 60.0, f"took {elapsed:.1f}s"
    _report(f"backbone safety ({sequences} sequences, {elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# 2. Cycle-repair oracle
# ---------------------------------------------------------------------------

def test_cycle_repair_matches_bruteforce_oracle():
    """>= 5,000 strength-randomized digraphs with <= 6 nodes: repair output
    is acyclic, removals match the brute-force removal-search oracle exactly,
    and every removal is minimum-strength inside its component at the time."""
    rng = random.Random(0xCC1E)
    checked = 0
    for _ in range(5_000):
        n = rng.randint(2, 6)
        concepts = [make_concept(f"c{i}") for i in range(n)]
        edges = []
        eid = 0
        for i, j in itertools.permutations(range(n), 2):
            if rng.random() < 0.4:
                edges.append(make_edge(f"e{eid:03d}", f"c{i}", f"c{j}",
                                       strength=round(rng.random(), 3),
                                       turn=rng.randint(0, 4)))
                eid += 1
        g = make_graph(concepts, edges)
        expected = repair_oracle(clone_graph(g))

        shadow = clone_graph(g)
        _, removed = repair_cycles(g)
        assert removed == expected
        assert detect_cycles(g) == []
        # min-strength-at-removal, verified step by step on the shadow copy
        for eid_removed in removed:
            pairs = [(e.source, e.target) for e in shadow.backbone_edges()]
            comp = next(c for c in scc_oracle(list(shadow.concepts), pairs)
                        if shadow.edges[eid_removed].source in c)
            internal = [e for e in shadow.backbone_edges()
                        if e.source in comp and e.target in comp]
            assert shadow.edges[eid_removed].strength == \
                min(e.strength for e in internal)
            shadow.edges[eid_removed].status = Status.CANCELLED
        checked += 1
    _report(f"cycle-repair oracle ({checked} digraphs)")


# ---------------------------------------------------------------------------
# 3. Motif-matching oracle
# ---------------------------------------------------------------------------

def test_motif_matching_matches_bruteforce_enumeration():
    """>= 1,000 random graphs with <= 10 grounded concepts: zero
    discrepancies against brute-force role-assignment enumeration."""
    vocab = load_vocabulary()
    rng = random.Random(0x307F)
    for _ in range(1_000):
        n = rng.randint(2, 10)
        concepts = [
            make_concept(f"c{i}", kind=rng.choice(
                ["belief", "constraint", "preference", "factual"]),
                slot=rng.choice([None, None, "budget", "weather", "activity_type"]),
                status=rng.choice(["grounded", "grounded", "candidate"]))
            for i in range(n)
        ]
        edges = []
        eid = 0
        for i, j in itertools.permutations(range(n), 2):
            if rng.random() < 0.15:
                edges.append(make_edge(
                    f"e{eid:03d}", f"c{i}", f"c{j}",
                    relation=rng.choice(["enable", "constraint", "determine"]),
                    status=rng.choice(["grounded", "grounded", "candidate"])))
                eid += 1
        g = make_graph(concepts, edges)
        got = [(m.pattern, tuple(sorted(m.bindings.items())))
               for m in match_motifs(g, vocab)]
        assert got == match_oracle(g, vocab)
    _report("motif-matching oracle (1000 graphs)")


# ---------------------------------------------------------------------------
# 4. Clarification budget and formula
# ---------------------------------------------------------------------------

def test_clarification_budget_and_formula():
    """Replays show <= 1 probe per turn; hand-computed impact values
    reproduce to 1e-12; argmax is invariant under common positive scaling of
    the weights (threshold scaled identically) on 1,000 random score sets."""
    cfg = ClarificationConfig(alpha_u=0.4, alpha_s=0.25, alpha_c=0.2, alpha_t=0.15,
                              tau=0.5)
    assert ImpactScore.compute("m", 1, 1, 0, 1, cfg).value == pytest.approx(1.0, abs=1e-12)
    assert ImpactScore.compute("m", 0, 0.5, 1, 0, cfg).value == pytest.approx(0.125, abs=1e-12)

    # probe budget and auto-commit safety over replayed logs
    sessions = 0
    for seed in range(300):
        runtime = drive_random_session(seed, steps=7)
        archive = runtime.to_archive()
        probes_by_turn = {}
        for event in archive.events:
            if event.kind == EventKind.PROBE_ISSUED:
                probes_by_turn[event.turn] = probes_by_turn.get(event.turn, 0) + 1
            if event.kind == EventKind.PATCH_COMMITTED and not event.payload["approved"]:
                assert event.payload["diff"]["scope"] == "local"
        assert all(v <= 1 for v in probes_by_turn.values())
        replayed = replay(archive)
        assert state_digest(replayed) == archive.final_state_digest
        sessions += 1

    # argmax invariance
    rng = random.Random(0xA15)
    for _ in range(1_000):
        components = [
            {"unc": rng.random(), "cent": rng.random(), "cov": rng.random(),
             "risk": float(rng.random() < 0.4)}
            for _ in range(rng.randint(1, 8))
        ]
        factor = rng.choice([0.1, 0.5, 2.0, 7.5, 100.0])
        scaled = ClarificationConfig(
            alpha_u=cfg.alpha_u * factor, alpha_s=cfg.alpha_s * factor,
            alpha_c=cfg.alpha_c * factor, alpha_t=cfg.alpha_t * factor,
            tau=cfg.tau * factor)
        base_scores = [ImpactScore.compute(f"m{i}", config=cfg, **c)
                       for i, c in enumerate(components)]
        scaled_scores = [ImpactScore.compute(f"m{i}", config=scaled, **c)
                         for i, c in enumerate(components)]
        a = select_probe(base_scores, cfg, turn=1)
        b = select_probe(scaled_scores, scaled, turn=1)
        assert (a is None) == (b is None)
        if a is not None:
            assert a.motif == b.motif
    _report(f"clarification budget + formula ({sessions} sessions, 1000 score sets)")


# ---------------------------------------------------------------------------
# 5. Promotion gate
# ---------------------------------------------------------------------------

def _assert_gate(runtime, event):
    state = runtime.state
    graph = state.cognitive.graph
    for c in graph.concepts.values():
        if c.status == Status.GROUNDED and c.provenance == Provenance.ASSISTANT_PROPOSED:
            assert any(
                r.target == c.id and r.source.value in
                ("user_statement", "clarification_answer")
                for r in state.cognitive.evidence.values()
            ), f"{c.id} grounded without user support at seq {event.seq}"
    for e in graph.edges.values():
        if e.status == Status.GROUNDED and e.provenance == Provenance.ASSISTANT_PROPOSED:
            assert any(
                r.target == e.id and r.source.value in
                ("user_statement", "clarification_answer")
                for r in state.cognitive.evidence.values()
            ), f"{e.id} grounded without user support at seq {event.seq}"
    for m in state.cognitive.motifs.values():
        if m.status == MotifStatus.ACTIVE:
            assert any(h["event"] == "confirm" and h["source"] == "user"
                       for h in m.history), \
                f"{m.id} active without user confirm at seq {event.seq}"


def test_promotion_gate_over_randomized_logs():
    """10,000 randomized event logs: no replayed intermediate state holds
    grounded assistant-proposed content without user-sourced support, and no
    motif is active without a user confirm. Zero violations."""
    logs = 10_000
    for seed in range(logs):
        runtime = drive_random_session(seed, steps=4)
        archive = runtime.to_archive()
        replay(archive, observer=_assert_gate)
    _report(f"promotion gate ({logs} randomized logs)")


# ---------------------------------------------------------------------------
# 6. Replay determinism on the bundled fixture
# ---------------------------------------------------------------------------

def test_fixture_replays_to_documented_digest():
    """The bundled walkthrough archive replays to its recorded digest on two
    consecutive runs with byte-identical serializations, and the replayed
    graph holds the documented structure."""
    archive = read_archive(str(FIXTURE))
    first = replay(archive)
    second = replay(archive)
    assert state_digest(first) == archive.final_state_digest
    assert serialize_state(first) == serialize_state(second)

    graph = first.cognitive.graph
    back = next(c for c in graph.concepts.values() if "back injury" in c.label)
    hotel = next(c for c in graph.concepts.values() if "cabin hotel" in c.label)
    determine = [e for e in graph.edges.values()
                 if (e.source, e.target, e.relation) == (back.id, hotel.id,
                                                         Relation.DETERMINE)]
    assert len(determine) == 1 and determine[0].status == Status.GROUNDED
    bound = [m for m in first.cognitive.motifs.values()
             if determine[0].id in m.edges]
    assert bound and any(m.status == MotifStatus.ACTIVE for m in bound)

    outdoor = [c for c in graph.concepts.values()
               if c.label in ("easy hike", "park picnic")]
    assert len(outdoor) == 2
    assert all(c.status == Status.DEPRECATED for c in outdoor)

    assert first.task_id == "team-offsite"
    assert len(first.cognitive.transfer_candidates) == 1
    assert first.cognitive.transfer_candidates[0].status == "uncertain"
    _report("replay determinism (bundled fixture)")


# ---------------------------------------------------------------------------
# 7. Layout stability
# ---------------------------------------------------------------------------

def _assert_layout(runtime, event):
    if not runtime.layout_history:
        return
    entry = runtime.layout_history[-1]
    snapshot = entry["snapshot"]
    report = entry["report"]
    if report is not None:
        assert report == {"order_preserved": 1.0, "layer_preserved": 1.0}, \
            f"instability at seq {event.seq}: {report}"
    graph = runtime.state.cognitive.graph
    for e in graph.backbone_edges():
        if e.source in snapshot.positions and e.target in snapshot.positions:
            assert snapshot.positions[e.source]["layer"] < \
                snapshot.positions[e.target]["layer"]


def test_layout_stability_across_replays():
    """Every replayed fixture keeps stability_report at (1.0, 1.0) on every
    turn and layers every edge source above its target."""
    archive = read_archive(str(FIXTURE))
    replay(archive, observer=_assert_layout)
    for seed in range(150):
        runtime = drive_random_session(seed + 50_000, steps=6)
        replay(runtime.to_archive(), observer=_assert_layout)
    _report("layout stability (fixture + 150 random sessions)")


# ---------------------------------------------------------------------------
# 8. Extraction determinism
# ---------------------------------------------------------------------------

def test_extraction_reproduces_reference_sentences():
    """The rule-based extractor reproduces the reference conditional and
    slotted-preference outputs exactly, 100 runs in a row."""
    conditional = "I usually prefer affordable options, but I'd pay more for verified reviews"
    slotted = "I prefer budget hotels"
    expected_conditional = {
        "concepts": [
            {"label": "affordable options", "kind": "preference", "slot": "budget",
             "confidence": 0.7},
            {"label": "verified reviews", "kind": "preference", "slot": None,
             "confidence": 0.7},
        ],
        "dependencies": [
            {"source": "new:1", "target": "new:0", "relation": "constraint",
             "causal_kind": "confounding", "strength": 0.6,
             "rationale": "conditional clause qualifies the preceding statement"},
        ],
    }
    expected_slotted = {
        "concepts": [
            {"label": "budget hotels", "kind": "preference",
             "slot": "accommodation_type", "confidence": 0.7},
        ],
        "dependencies": [],
    }
    for turn in range(100):
        extractor = RuleBasedExtractor()
        got_c = extractor.extract(
            Utterance(turn=turn, speaker=Speaker.USER, text=conditional), [])
        got_s = extractor.extract(
            Utterance(turn=turn, speaker=Speaker.USER, text=slotted), [])
        assert got_c == expected_conditional
        assert got_s == expected_slotted
    _report("extraction determinism (100 runs)")
