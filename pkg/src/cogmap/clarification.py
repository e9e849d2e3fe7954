"""Selective clarification: impact scoring, one-probe-per-turn budget,
and response application.

Each uncertain motif gets an impact score — a fixed-weight blend of edge
uncertainty, structural centrality, evidence-coverage deficit, and transfer
risk. Only the single highest-impact candidate strictly above the threshold
is surfaced as a probe; everything else stays provisional in the background.
Responses (confirm / weaken / refine / defer) are applied as ordinary
patches so the whole exchange stays in the log.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Optional

from .config import ClarificationConfig
from .errors import reject
from .graph import CognitiveGraph, Provenance
from .motifs import MotifInstance, MotifStatus


class ProbeKind(str, Enum):
    DIRECT_CONFIRMATION = "direct_confirmation"
    COUNTERFACTUAL = "counterfactual"
    MEDIATION_CHECK = "mediation_check"


class Verdict(str, Enum):
    CONFIRM = "confirm"
    WEAKEN = "weaken"
    REFINE = "refine"
    DEFER = "defer"


@dataclass
class ImpactScore:
    motif: str
    unc: float
    cent: float
    cov: float
    risk: float
    value: float

    @classmethod
    def compute(cls, motif: str, unc: float, cent: float, cov: float, risk: float,
                config: ClarificationConfig) -> "ImpactScore":
        value = (config.alpha_u * unc + config.alpha_s * cent
                 + config.alpha_c * (1.0 - cov) + config.alpha_t * risk)
        return cls(motif=motif, unc=unc, cent=cent, cov=cov, risk=risk, value=value)

    def to_dict(self) -> dict:
        return {"motif": self.motif, "unc": self.unc, "cent": self.cent,
                "cov": self.cov, "risk": self.risk, "value": self.value}


@dataclass
class Probe:
    id: str
    motif: str
    kind: ProbeKind
    text: str
    issued_turn: int

    def to_dict(self) -> dict:
        return {"id": self.id, "motif": self.motif, "kind": self.kind.value,
                "text": self.text, "issued_turn": self.issued_turn}

    @classmethod
    def from_dict(cls, d: dict) -> "Probe":
        return cls(id=d["id"], motif=d["motif"], kind=ProbeKind(d["kind"]),
                   text=d["text"], issued_turn=d["issued_turn"])


@dataclass
class ProbeResponse:
    probe: str
    verdict: Verdict
    detail: Optional[str] = None

    def __post_init__(self):
        if self.verdict == Verdict.REFINE and not (self.detail or "").strip():
            raise reject("bad-response", "refine requires detail")

    def to_dict(self) -> dict:
        d = {"probe": self.probe, "verdict": self.verdict.value}
        if self.detail is not None:
            d["detail"] = self.detail
        return d


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

def score_impact(motif: MotifInstance, graph: CognitiveGraph, state,
                 config: ClarificationConfig) -> ImpactScore:
    """Impact of clarifying one motif candidate.

    unc: 1 - mean strength of bound edges. cent: mean backbone degree of
    bound concepts, normalized by the graph's max degree. cov: fraction of
    bound concepts already user-confirmed or co-authored. risk: 1 for a
    transfer-based instance with no current-task evidence on its items.
    ``state`` supplies the evidence map and the turn the task started.
    """
    if motif.status not in (MotifStatus.UNCERTAIN, MotifStatus.ACTIVE):
        raise reject("stale-motif", f"{motif.id} is {motif.status.value}")
    edges = []
    for eid in motif.edges:
        if eid not in graph.edges:
            raise reject("stale-motif", f"{motif.id} references missing edge {eid}")
        edges.append(graph.edges[eid])
    bound = motif.bound_concepts()
    for cid in bound:
        if cid not in graph.concepts:
            raise reject("stale-motif", f"{motif.id} references missing concept {cid}")

    unc = 1.0 - (sum(e.strength for e in edges) / len(edges)) if edges else 1.0

    max_degree = graph.max_backbone_degree()
    if max_degree == 0:
        cent = 0.0
    else:
        cent = sum(graph.backbone_degree(cid) for cid in bound) / (len(bound) * max_degree)

    confirmed = sum(
        1 for cid in bound
        if graph.concepts[cid].provenance in (Provenance.USER_CONFIRMED, Provenance.CO_AUTHORED)
    )
    cov = confirmed / len(bound) if bound else 0.0

    risk = 0.0
    if motif.provenance == Provenance.TRANSFER_BASED:
        evidence = state.cognitive.evidence
        started = state.task_started_turn
        items = set(bound) | set(motif.edges)
        current = any(r.target in items and r.turn >= started for r in evidence.values())
        if not current:
            risk = 1.0

    return ImpactScore.compute(motif.id, unc, cent, cov, risk, config)


# ---------------------------------------------------------------------------
# Probe selection
# ---------------------------------------------------------------------------

def _load_templates() -> dict:
    return json.loads(
        resources.files("cogmap.data").joinpath("probe_templates.json").read_text("utf-8"))


_TEMPLATES: dict | None = None


def probe_templates() -> dict:
    global _TEMPLATES
    if _TEMPLATES is None:
        _TEMPLATES = _load_templates()
    return _TEMPLATES


def choose_probe_kind(score: ImpactScore, config: ClarificationConfig) -> ProbeKind:
    """Pick the probe style matching the dominant uncertainty pattern.

    Transfer risk and missing coverage both call for direct confirmation;
    edge uncertainty calls for a counterfactual; centrality for a mediation
    check. Ties favor direct confirmation.
    """
    contributions = [
        (ProbeKind.DIRECT_CONFIRMATION,
         config.alpha_t * score.risk + config.alpha_c * (1.0 - score.cov)),
        (ProbeKind.COUNTERFACTUAL, config.alpha_u * score.unc),
        (ProbeKind.MEDIATION_CHECK, config.alpha_s * score.cent),
    ]
    best_kind, best = contributions[0]
    for kind, c in contributions[1:]:
        if c > best:
            best_kind, best = kind, c
    return best_kind


def render_probe_text(kind: ProbeKind, motif: MotifInstance,
                      graph: Optional[CognitiveGraph]) -> str:
    template = probe_templates()[kind.value]
    source = target = motif.pattern
    if graph is not None and motif.edges:
        first = graph.edges.get(motif.edges[0])
        if first is not None:
            source = graph.concepts[first.source].label
            target = graph.concepts[first.target].label
    return template.format(source=source, target=target)


def select_probe(scored: list[ImpactScore], config: ClarificationConfig, turn: int,
                 *, budget_used: bool = False,
                 motifs: Optional[dict[str, MotifInstance]] = None,
                 graph: Optional[CognitiveGraph] = None) -> Optional[Probe]:
    """At most one probe per turn: the highest-impact candidate strictly
    above tau (ties by smaller motif id), or nothing."""
    if budget_used:
        raise reject("probe-budget-exhausted", f"turn {turn} already issued a probe")
    above = [s for s in scored if s.value > config.tau]
    if not above:
        return None
    best = sorted(above, key=lambda s: (-s.value, s.motif))[0]
    kind = choose_probe_kind(best, config)
    motif = (motifs or {}).get(best.motif)
    text = render_probe_text(kind, motif, graph) if motif is not None else \
        f"Can you confirm the reasoning behind {best.motif}?"
    return Probe(id="", motif=best.motif, kind=kind, text=text, issued_turn=turn)


# ---------------------------------------------------------------------------
# Response application
# ---------------------------------------------------------------------------

def apply_response(response: ProbeResponse, state, config, vocabulary=None):
    """Fold a probe answer into the session as an ordinary patch.

    confirm: motif activates, bound items gain full-weight clarification
    evidence and user-confirmed provenance. weaken: bound edge strengths are
    scaled down and the motif drops to uncertain. refine: the structured
    detail drafts a revision patch routed through the normal local/non-local
    gate. defer: nothing changes except the probe being answered.

    Returns the revision outcome (committed patch or surfaced review), or
    None when nothing beyond the answer itself changed.
    """
    from . import revision  # local import; revision depends on these types

    probe = state.cognitive.probes.get(response.probe)
    if probe is None:
        raise reject("unknown-probe", response.probe)
    if response.probe in state.cognitive.probe_answers:
        raise reject("duplicate-answer", response.probe)
    return revision.apply_probe_response(state, probe, response, config,
                                         vocabulary=vocabulary)
