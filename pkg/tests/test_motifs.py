"""Motif engine: matching vs brute force, lifecycle, abstraction, transfer."""

import itertools
import json
import random

import pytest

from cogmap.errors import CogmapError
from cogmap.graph import Relation, Status
from cogmap.motifs import (
    MotifEvent,
    MotifInstance,
    MotifLibrary,
    MotifPattern,
    MotifStatus,
    abstract_motif,
    load_vocabulary,
    match_motifs,
    retrieve_transfer_candidates,
    update_motif_status,
)

from conftest import make_concept, make_edge, make_graph


def match_oracle(graph, vocabulary):
    """Brute-force enumeration over all injective role assignments."""
    grounded = {c.id: c for c in graph.grounded_concepts()}
    edges = {}
    for e in graph.backbone_edges():
        if e.status == Status.GROUNDED and e.source in grounded and e.target in grounded:
            edges[(e.source, e.target, e.relation)] = e.id
    found = []
    for pattern in sorted(vocabulary, key=lambda p: p.name):
        hits = []
        for combo in itertools.permutations(sorted(grounded), len(pattern.roles)):
            binding = dict(zip([r.name for r in pattern.roles], combo))
            if not all(r.admits(grounded[binding[r.name]]) for r in pattern.roles):
                continue
            if not all((binding[t.source_role], binding[t.target_role], t.relation)
                       in edges for t in pattern.edges):
                continue
            hits.append(binding)
        sets = [frozenset(b.values()) for b in hits]
        hits = [b for i, b in enumerate(hits)
                if not any(sets[i] < sets[j] for j in range(len(hits)) if j != i)]
        for binding in sorted(hits, key=lambda b: tuple(sorted(b.values()))):
            found.append((pattern.name, tuple(sorted(binding.items()))))
    return found


class TestMatchMotifs:
    def test_budget_constraint_instance(self):
        g = make_graph(
            [
                make_concept("c1", kind="constraint", label="total budget limit",
                             slot="budget"),
                make_concept("c2", kind="factual", label="hotel cost"),
                make_concept("c3", kind="belief", label="hotel feasibility"),
            ],
            [
                make_edge("e1", "c1", "c2", "constraint"),
                make_edge("e2", "c2", "c3", "determine"),
            ],
        )
        vocab = load_vocabulary()
        hits = [m for m in match_motifs(g, vocab) if m.pattern == "budget-constraint"]
        assert len(hits) == 1
        assert hits[0].bindings == {"budget_limit": "c1", "option_cost": "c2",
                                    "option_feasibility": "c3"}
        assert hits[0].edges == ["e1", "e2"]
        assert hits[0].status == MotifStatus.UNCERTAIN

    def test_empty_graph(self):
        from cogmap.graph import CognitiveGraph
        assert match_motifs(CognitiveGraph(), load_vocabulary()) == []

    def test_single_concept_no_edges(self):
        g = make_graph([make_concept("c1")])
        assert match_motifs(g, load_vocabulary()) == []

    def test_candidate_edges_do_not_match(self):
        g = make_graph(
            [make_concept("c1"), make_concept("c2")],
            [make_edge("e1", "c1", "c2", "enable", status="candidate")],
        )
        assert match_motifs(g, load_vocabulary()) == []

    def test_matches_brute_force_on_random_graphs(self):
        vocab = load_vocabulary()
        rng = random.Random(23)
        kinds = ["belief", "constraint", "preference", "factual"]
        slots = [None, None, "budget", "weather", "activity_type"]
        for _ in range(120):
            n = rng.randint(2, 10)
            concepts = [
                make_concept(f"c{i}", kind=rng.choice(kinds), slot=rng.choice(slots),
                             label=f"node {i}")
                for i in range(n)
            ]
            edges = []
            eid = 0
            for i, j in itertools.permutations(range(n), 2):
                if rng.random() < 0.18:
                    edges.append(make_edge(
                        f"e{eid:03d}", f"c{i}", f"c{j}",
                        relation=rng.choice(["enable", "constraint", "determine"]),
                        status=rng.choice(["grounded", "grounded", "candidate"])))
                    eid += 1
            g = make_graph(concepts, edges)
            got = [(m.pattern, tuple(sorted(m.bindings.items())))
                   for m in match_motifs(g, vocab)]
            assert got == match_oracle(g, vocab)

    def test_instances_always_have_two_concepts_one_edge(self):
        vocab = load_vocabulary()
        rng = random.Random(31)
        for _ in range(50):
            n = rng.randint(2, 8)
            concepts = [make_concept(f"c{i}", kind=rng.choice(
                ["belief", "constraint", "preference", "factual"])) for i in range(n)]
            edges = [make_edge(f"e{i}", f"c{i}", f"c{i+1}",
                               rng.choice(["enable", "constraint", "determine"]))
                     for i in range(n - 1)]
            for m in match_motifs(make_graph(concepts, edges), vocab):
                assert len(set(m.bindings.values())) >= 2
                assert len(m.edges) >= 1


class TestLifecycle:
    def _instance(self, status="uncertain"):
        return MotifInstance(id="m1", pattern="generic-sequence",
                             bindings={"earlier_step": "c1", "later_step": "c2"},
                             edges=["e1"], status=MotifStatus(status))

    def test_confirm_activates(self):
        updated = update_motif_status(self._instance(), MotifEvent.CONFIRM)
        assert updated.status == MotifStatus.ACTIVE
        assert updated.history[-1]["event"] == "confirm"

    def test_cancelled_rejects_confirm(self):
        with pytest.raises(CogmapError) as err:
            update_motif_status(self._instance("cancelled"), MotifEvent.CONFIRM)
        assert err.value.code == "invalid-transition"

    def test_edge_cancelled_deprecates_active(self):
        updated = update_motif_status(self._instance("active"), MotifEvent.EDGE_CANCELLED)
        assert updated.status == MotifStatus.DEPRECATED

    def test_cancelled_absorbing_exhaustive(self):
        events = list(MotifEvent)
        for start in MotifStatus:
            for sequence in itertools.product(events, repeat=4):
                inst = self._instance(start.value)
                reached_cancelled = start == MotifStatus.CANCELLED
                for event in sequence:
                    try:
                        inst = update_motif_status(inst, event)
                    except CogmapError:
                        continue
                    if reached_cancelled:
                        assert inst.status == MotifStatus.CANCELLED
                    if inst.status == MotifStatus.CANCELLED:
                        reached_cancelled = True

    def test_weaken_moves_active_to_uncertain(self):
        assert update_motif_status(self._instance("active"),
                                   MotifEvent.WEAKEN).status == MotifStatus.UNCERTAIN


class TestAbstraction:
    def _setup(self):
        g = make_graph(
            [
                make_concept("c1", kind="constraint", label="husband back injury",
                             slot="health_constraint"),
                make_concept("c2", kind="preference", label="cabin hotel with nature views",
                             slot="accommodation_type"),
            ],
            [make_edge("e1", "c1", "c2", "determine")],
        )
        inst = MotifInstance(
            id="m1", pattern="generic-conditional",
            bindings={"condition": "c1", "outcome": "c2"},
            edges=["e1"], status=MotifStatus.ACTIVE, task_id="hk-trip",
            rationale="health determines lodging")
        return g, inst

    def test_roles_keep_kind_and_slot_only(self):
        g, inst = self._setup()
        pattern = abstract_motif(inst, g)
        assert {r.name for r in pattern.roles} == {"condition", "outcome"}
        by_name = {r.name: r for r in pattern.roles}
        assert by_name["condition"].kinds == ["constraint"]
        assert by_name["condition"].slot == "health_constraint"
        assert by_name["outcome"].slot == "accommodation_type"
        assert pattern.edges[0].relation == Relation.DETERMINE
        assert pattern.usage_count == 0

    def test_no_task_specific_leakage(self):
        g, inst = self._setup()
        blob = json.dumps(abstract_motif(inst, g).to_dict())
        for forbidden in ("c1", "c2", "e1", "hk-trip", "husband", "cabin"):
            assert forbidden not in blob

    def test_non_active_rejected(self):
        g, inst = self._setup()
        inst.status = MotifStatus.UNCERTAIN
        with pytest.raises(CogmapError) as err:
            abstract_motif(inst, g)
        assert err.value.code == "not-validated"

    def test_uniform_kind_filters(self):
        g = make_graph(
            [
                make_concept("c1", kind="constraint", label="limit a"),
                make_concept("c2", kind="constraint", label="limit b"),
            ],
            [make_edge("e1", "c1", "c2", "constraint")],
        )
        inst = MotifInstance(id="m1", pattern="generic-constraint",
                             bindings={"limiting_factor": "c1", "constrained_choice": "c2"},
                             edges=["e1"], status=MotifStatus.ACTIVE)
        pattern = abstract_motif(inst, g)
        assert all(r.kinds == ["constraint"] for r in pattern.roles)


class TestTransfer:
    def _library(self):
        lib = MotifLibrary()
        g, inst = TestAbstraction()._setup()
        pattern = abstract_motif(inst, g)
        lib.store(pattern, source_task="hk-trip")
        return lib, pattern

    def test_slot_overlap_retrieves(self):
        lib, pattern = self._library()
        context = [make_concept("n1", slot="accommodation_type", label="offsite lodging")]
        candidates = retrieve_transfer_candidates(lib, context)
        assert len(candidates) == 1
        cand = candidates[0]
        assert cand.pattern == pattern.name
        assert cand.status == "uncertain"
        assert cand.provenance.value == "transfer_based"
        assert cand.source_task == "hk-trip"
        assert cand.proposed_bindings == {"outcome": "n1"}

    def test_empty_library(self):
        assert retrieve_transfer_candidates(MotifLibrary(), [make_concept("n1")]) == []

    def test_zero_overlap_excluded(self):
        lib, _ = self._library()
        context = [make_concept("n1", slot="budget"), make_concept("n2")]
        assert retrieve_transfer_candidates(lib, context) == []

    def test_usage_count_ranks(self):
        lib, _ = self._library()
        other = MotifPattern.from_dict({
            "name": "rain-contingency", "taxonomy_class": "conditional",
            "roles": [{"name": "forecast", "slot": "weather"},
                      {"name": "plan", "slot": "accommodation_type"}],
            "edges": [{"source_role": "forecast", "target_role": "plan",
                       "relation": "determine"}],
        })
        lib.store(other, source_task="hk-trip")
        for _ in range(5):
            lib.store(other, source_task="later-task")
        context = [make_concept("n1", slot="accommodation_type"),
                   make_concept("n2", slot="weather")]
        candidates = retrieve_transfer_candidates(lib, context)
        assert candidates[0].pattern == "rain-contingency"  # overlap 2 beats 1

    def test_no_concrete_values_carried(self):
        lib, _ = self._library()
        context = [make_concept("n1", slot="accommodation_type")]
        blob = json.dumps([c.to_dict() for c in retrieve_transfer_candidates(lib, context)])
        assert "cabin" not in blob and "husband" not in blob
