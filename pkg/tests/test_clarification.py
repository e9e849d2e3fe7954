"""Clarification: impact formula, probe selection, response application."""

import random

import pytest

from cogmap.clarification import (
    ImpactScore,
    ProbeKind,
    ProbeResponse,
    Verdict,
    apply_response,
    score_impact,
    select_probe,
)
from cogmap.config import ClarificationConfig, RuntimeConfig
from cogmap.errors import CogmapError
from cogmap.extraction import EvidenceRecord, EvidenceSource
from cogmap.graph import Provenance, Status
from cogmap.motifs import MotifInstance, MotifStatus
from cogmap.revision import SessionState

from conftest import make_concept, make_edge, make_graph

ALPHAS = ClarificationConfig(alpha_u=0.4, alpha_s=0.25, alpha_c=0.2, alpha_t=0.15,
                             tau=0.5)


def session_with(graph, motifs=(), evidence=(), task_started_turn=0):
    state = SessionState()
    state.cognitive.graph = graph
    for m in motifs:
        state.cognitive.motifs[m.id] = m
    for r in evidence:
        state.cognitive.evidence[r.id] = r
    state.task_started_turn = task_started_turn
    state.task_id = "task-a"
    return state


def motif_over(graph, mid="m1", edges=("e1",), provenance="assistant_proposed",
               status="uncertain"):
    bindings = {}
    for i, eid in enumerate(edges):
        e = graph.edges[eid]
        bindings[f"src{i}"] = e.source
        bindings[f"dst{i}"] = e.target
    return MotifInstance(id=mid, pattern="generic-sequence", bindings=bindings,
                         edges=list(edges), status=MotifStatus(status),
                         provenance=Provenance(provenance), task_id="task-a")


class TestScoreImpact:
    def test_weighted_sum_extremes(self):
        score = ImpactScore.compute("m1", unc=1, cent=1, cov=0, risk=1, config=ALPHAS)
        assert score.value == pytest.approx(1.0, abs=1e-12)

    def test_low_uncertainty_covered_case(self):
        score = ImpactScore.compute("m1", unc=0, cent=0.5, cov=1, risk=0, config=ALPHAS)
        assert score.value == pytest.approx(0.125, abs=1e-12)

    def test_all_zero(self):
        score = ImpactScore.compute("m1", unc=0, cent=0, cov=1, risk=0, config=ALPHAS)
        assert score.value == pytest.approx(0.2 * 0, abs=1e-12) == 0.0

    def test_components_from_graph(self):
        g = make_graph(
            [
                make_concept("a", provenance="user_confirmed"),
                make_concept("b", provenance="assistant_proposed"),
                make_concept("c"),
            ],
            [
                make_edge("e1", "a", "b", strength=0.6),
                make_edge("e2", "b", "c", strength=0.8),
            ],
        )
        motif = motif_over(g, edges=("e1",))
        state = session_with(g, [motif])
        score = score_impact(motif, g, state, ALPHAS)
        assert score.unc == pytest.approx(0.4)
        # degrees: a=1, b=2, c=1; max 2; bound = {a, b}
        assert score.cent == pytest.approx((0.5 + 1.0) / 2)
        assert score.cov == pytest.approx(0.5)  # a user_confirmed, b not
        assert score.risk == 0.0
        expected = 0.4 * 0.4 + 0.25 * 0.75 + 0.2 * 0.5 + 0.15 * 0
        assert score.value == pytest.approx(expected, abs=1e-12)

    def test_transfer_risk_requires_current_task_evidence(self):
        g = make_graph(
            [make_concept("a"), make_concept("b")],
            [make_edge("e1", "a", "b", strength=0.5)],
        )
        motif = motif_over(g, provenance="transfer_based")
        stale = EvidenceRecord(id="v9", target="a", turn=2,
                               source=EvidenceSource.USER_STATEMENT, weight=0.5)
        state = session_with(g, [motif], evidence=[stale], task_started_turn=5)
        assert score_impact(motif, g, state, ALPHAS).risk == 1.0
        fresh = EvidenceRecord(id="v10", target="a", turn=6,
                               source=EvidenceSource.USER_STATEMENT, weight=0.5)
        state.cognitive.evidence["v10"] = fresh
        assert score_impact(motif, g, state, ALPHAS).risk == 0.0

    def test_stale_motif_rejected(self):
        g = make_graph([make_concept("a"), make_concept("b")],
                       [make_edge("e1", "a", "b")])
        motif = motif_over(g)
        motif.edges = ["missing"]
        state = session_with(g, [motif])
        with pytest.raises(CogmapError) as err:
            score_impact(motif, g, state, ALPHAS)
        assert err.value.code == "stale-motif"

    def test_degree_free_graph_gets_zero_centrality(self):
        g = make_graph([make_concept("a"), make_concept("b")],
                       [make_edge("e1", "a", "b", strength=0.7)])
        motif = motif_over(g)
        state = session_with(g, [motif])
        g.edges["e1"].status = Status.CANCELLED
        score = score_impact(motif, g, state, ALPHAS)
        assert score.cent == 0.0

    def test_normalized_alphas_keep_value_in_unit_interval(self):
        rng = random.Random(7)
        for _ in range(200):
            raw = [rng.random() + 1e-6 for _ in range(4)]
            total = sum(raw)
            cfg = ClarificationConfig(*(x / total for x in raw), tau=0.5)
            score = ImpactScore.compute("m", unc=rng.random(), cent=rng.random(),
                                        cov=rng.random(), risk=rng.random(), config=cfg)
            assert -1e-12 <= score.value <= 1.0 + 1e-12


class TestSelectProbe:
    def _scores(self, *values):
        return [ImpactScore(motif=f"m{i}", unc=0.5, cent=0.5, cov=0.5, risk=0,
                            value=v) for i, v in enumerate(values)]

    def test_highest_above_threshold_wins(self):
        probe = select_probe(self._scores(0.8, 0.6), ALPHAS, turn=3)
        assert probe is not None and probe.motif == "m0" and probe.issued_turn == 3

    def test_none_above_threshold(self):
        assert select_probe(self._scores(0.4, 0.3), ALPHAS, turn=1) is None

    def test_threshold_is_strict(self):
        assert select_probe(self._scores(0.5), ALPHAS, turn=1) is None

    def test_tie_breaks_to_smaller_motif_id(self):
        probe = select_probe(self._scores(0.7, 0.7), ALPHAS, turn=1)
        assert probe.motif == "m0"

    def test_budget_enforced(self):
        with pytest.raises(CogmapError) as err:
            select_probe(self._scores(0.9), ALPHAS, turn=1, budget_used=True)
        assert err.value.code == "probe-budget-exhausted"

    def test_argmax_invariant_under_common_scaling(self):
        rng = random.Random(13)
        for _ in range(1000):
            base = ClarificationConfig(alpha_u=0.4, alpha_s=0.25, alpha_c=0.2,
                                       alpha_t=0.15, tau=0.5)
            components = [
                {"unc": rng.random(), "cent": rng.random(),
                 "cov": rng.random(), "risk": float(rng.random() < 0.3)}
                for _ in range(rng.randint(1, 6))
            ]
            factor = rng.choice([0.25, 0.5, 2.0, 4.0, 10.0])
            scaled = ClarificationConfig(
                alpha_u=base.alpha_u * factor, alpha_s=base.alpha_s * factor,
                alpha_c=base.alpha_c * factor, alpha_t=base.alpha_t * factor,
                tau=base.tau * factor)
            base_scores = [ImpactScore.compute(f"m{i}", config=base, **c)
                           for i, c in enumerate(components)]
            scaled_scores = [ImpactScore.compute(f"m{i}", config=scaled, **c)
                             for i, c in enumerate(components)]
            p1 = select_probe(base_scores, base, turn=1)
            p2 = select_probe(scaled_scores, scaled, turn=1)
            assert (p1 is None) == (p2 is None)
            if p1 is not None:
                assert p1.motif == p2.motif

    def test_probe_kind_follows_dominant_component(self):
        risk_heavy = ImpactScore(motif="m", unc=0.1, cent=0.1, cov=0.9, risk=1.0,
                                 value=0.9)
        unc_heavy = ImpactScore(motif="m", unc=1.0, cent=0.1, cov=1.0, risk=0.0,
                                value=0.9)
        cent_heavy = ImpactScore(motif="m", unc=0.1, cent=1.0, cov=1.0, risk=0.0,
                                 value=0.9)
        from cogmap.clarification import choose_probe_kind
        assert choose_probe_kind(risk_heavy, ALPHAS) == ProbeKind.DIRECT_CONFIRMATION
        assert choose_probe_kind(unc_heavy, ALPHAS) == ProbeKind.COUNTERFACTUAL
        assert choose_probe_kind(cent_heavy, ALPHAS) == ProbeKind.MEDIATION_CHECK


class TestApplyResponse:
    def _session(self):
        g = make_graph(
            [
                make_concept("a", provenance="assistant_proposed", confidence=0.7),
                make_concept("b", provenance="assistant_proposed", confidence=0.7),
            ],
            [make_edge("e1", "a", "b", strength=0.8, status="grounded"),
             make_edge("e2", "a", "b", relation="constraint", strength=0.6,
                       status="grounded")],
        )
        motif = MotifInstance(id="m1", pattern="generic-sequence",
                              bindings={"earlier_step": "a", "later_step": "b"},
                              edges=["e1", "e2"], status=MotifStatus.UNCERTAIN,
                              provenance=Provenance.ASSISTANT_PROPOSED, task_id="t")
        state = session_with(g, [motif])
        from cogmap.clarification import Probe
        probe = Probe(id="p0001", motif="m1", kind=ProbeKind.DIRECT_CONFIRMATION,
                      text="?", issued_turn=1)
        state.cognitive.probes[probe.id] = probe
        return state

    def test_confirm_activates_and_adds_evidence(self):
        state = self._session()
        cfg = RuntimeConfig()
        before_conf = {c.id: c.confidence for c in state.cognitive.graph.concepts.values()}
        outcome = apply_response(ProbeResponse("p0001", Verdict.CONFIRM), state, cfg)
        assert outcome.committed
        motif = state.cognitive.motifs["m1"]
        assert motif.status == MotifStatus.ACTIVE
        assert any(h["event"] == "confirm" and h["source"] == "user"
                   for h in motif.history)
        for cid in ("a", "b"):
            c = state.cognitive.graph.concepts[cid]
            assert c.provenance == Provenance.USER_CONFIRMED
            assert c.confidence >= before_conf[cid]
        kinds = {r.source for r in state.cognitive.evidence.values()}
        assert EvidenceSource.CLARIFICATION_ANSWER in kinds
        assert state.cognitive.probe_answers["p0001"]["verdict"] == "confirm"

    def test_confirm_strictly_increases_cov(self):
        state = self._session()
        cfg = RuntimeConfig()
        g = state.cognitive.graph
        motif = state.cognitive.motifs["m1"]
        before = score_impact(motif, g, state, ALPHAS).cov
        apply_response(ProbeResponse("p0001", Verdict.CONFIRM), state, cfg)
        after = score_impact(state.cognitive.motifs["m1"], g, state, ALPHAS).cov
        assert after > before

    def test_weaken_halves_strengths(self):
        state = self._session()
        apply_response(ProbeResponse("p0001", Verdict.WEAKEN), state, RuntimeConfig())
        g = state.cognitive.graph
        assert g.edges["e1"].strength == pytest.approx(0.4)
        assert g.edges["e2"].strength == pytest.approx(0.3)
        assert state.cognitive.motifs["m1"].status == MotifStatus.UNCERTAIN

    def test_defer_changes_nothing_but_probe_record(self):
        state = self._session()
        from cogmap.session import serialize_state
        before = serialize_state(state)
        outcome = apply_response(ProbeResponse("p0001", Verdict.DEFER), state,
                                 RuntimeConfig())
        assert outcome is None
        after_dict = state.to_dict()
        assert after_dict["cognitive"]["probe_answers"]["p0001"]["verdict"] == "defer"
        del after_dict["cognitive"]["probe_answers"]["p0001"]
        import json
        assert json.loads(before)["cognitive"]["probe_answers"] == {}
        restored = json.loads(before)
        restored["cognitive"]["probe_answers"] = {}
        assert after_dict == restored

    def test_unknown_probe(self):
        state = self._session()
        with pytest.raises(CogmapError) as err:
            apply_response(ProbeResponse("nope", Verdict.CONFIRM), state, RuntimeConfig())
        assert err.value.code == "unknown-probe"

    def test_duplicate_answer(self):
        state = self._session()
        apply_response(ProbeResponse("p0001", Verdict.CONFIRM), state, RuntimeConfig())
        with pytest.raises(CogmapError) as err:
            apply_response(ProbeResponse("p0001", Verdict.DEFER), state, RuntimeConfig())
        assert err.value.code == "duplicate-answer"

    def test_refine_requires_detail(self):
        with pytest.raises(CogmapError) as err:
            ProbeResponse("p0001", Verdict.REFINE, detail="  ")
        assert err.value.code == "bad-response"

    def test_refine_drafts_revision(self):
        state = self._session()
        detail = '{"kind": "confidence", "target": "a", "value": 0.31}'
        outcome = apply_response(ProbeResponse("p0001", Verdict.REFINE, detail=detail),
                                 state, RuntimeConfig())
        assert outcome.committed  # one-item confidence tweak is local
        assert state.cognitive.graph.concepts["a"].confidence == 0.31
