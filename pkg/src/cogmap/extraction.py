"""Utterance-to-candidate extraction and multi-turn evidence fusion.

Candidates are proposals, never committed state: the revision layer decides
what enters the graph and the grounding pass decides what is promoted.
The extractor behind :func:`extract_candidates` is pluggable; the built-in
rule-based extractor is a deterministic lexicon matcher good enough to serve
as a test oracle, while ``ExternalExtractor`` posts the same wire contract
to a remote model service.

Wire contract (JSON over HTTP):

    request:  {"utterance": {"turn", "speaker", "text"},
               "context": [utterance...], "schema_version": 1}
    response: {"concepts": [{"label", "kind", "slot"?, "value"?,
                             "confidence"?, "predicted"?}],
               "dependencies": [{"source", "target", "relation",
                                 "causal_kind", "strength"?, "rationale"?}]}

Dependency endpoints are reference strings: ``new:<index>`` into this
response's concept list, ``id:<concept-id>``, ``slot:<slot-key>`` or
``label:<text>`` against the existing graph.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Protocol

from .config import SOURCE_WEIGHTS, ExtractionConfig, ExtractorSettings
from .errors import reject
from .graph import Concept, ConceptKind, DependencyEdge, Provenance, Relation, Status


class Speaker(str, Enum):
    USER = "user"
    ASSISTANT = "assistant"


class EvidenceSource(str, Enum):
    USER_STATEMENT = "user_statement"
    ASSISTANT_STATEMENT = "assistant_statement"
    FUNCTION_CALL = "function_call"
    CLARIFICATION_ANSWER = "clarification_answer"


class CausalKind(str, Enum):
    DIRECT = "direct"
    MEDIATED = "mediated"
    CONFOUNDING = "confounding"
    INTERVENTION = "intervention"


# how each style of causal reasoning maps onto a backbone relation
RELATION_FOR_CAUSAL_KIND = {
    CausalKind.DIRECT: Relation.ENABLE,
    CausalKind.MEDIATED: Relation.ENABLE,
    CausalKind.CONFOUNDING: Relation.CONSTRAINT,
    CausalKind.INTERVENTION: Relation.DETERMINE,
}


@dataclass
class Utterance:
    turn: int
    speaker: Speaker
    text: str

    def to_dict(self) -> dict:
        return {"turn": self.turn, "speaker": self.speaker.value, "text": self.text}

    @classmethod
    def from_dict(cls, d: dict) -> "Utterance":
        return cls(turn=d["turn"], speaker=Speaker(d["speaker"]), text=d["text"])


@dataclass
class EvidenceRecord:
    id: str
    target: str  # concept or edge id
    turn: int
    source: EvidenceSource
    weight: float

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise reject("bad-weight", f"evidence weight {self.weight}")

    def to_dict(self) -> dict:
        return {"id": self.id, "target": self.target, "turn": self.turn,
                "source": self.source.value, "weight": self.weight}

    @classmethod
    def from_dict(cls, d: dict) -> "EvidenceRecord":
        return cls(id=d["id"], target=d["target"], turn=d["turn"],
                   source=EvidenceSource(d["source"]), weight=d["weight"])


@dataclass
class ConceptCandidate:
    concept: Concept  # id unassigned until compiled; status candidate
    source_turn: int
    extractor: str = "rule_based"  # "rule_based" | "external"
    predicted: bool = False  # inferred by the extractor, not stated by the user


@dataclass
class DependencyCandidate:
    edge: DependencyEdge  # source/target hold reference strings until compiled
    causal_kind: CausalKind
    source_turn: int

    def __post_init__(self):
        expected = RELATION_FOR_CAUSAL_KIND[self.causal_kind]
        if self.edge.relation != expected:
            raise reject(
                "bad-candidate",
                f"causal kind {self.causal_kind.value} maps to {expected.value},"
                f" got {self.edge.relation.value}",
            )


class ExtractorClient(Protocol):
    """Anything that turns an utterance plus context into the wire response."""

    name: str

    def extract(self, utterance: Utterance, context: list[Utterance]) -> dict: ...


# ---------------------------------------------------------------------------
# Rule-based reference extractor
# ---------------------------------------------------------------------------

# kind markers, checked in order: constraint beats belief beats preference
CONSTRAINT_MARKERS = ("must", "can't", "cannot", "need", "only if", "limit", "no more than", "have to")
BELIEF_MARKERS = ("i think", "probably", "believe", "likely", "i guess")
PREFERENCE_MARKERS = ("prefer", "like", "want", "ideally", "i'd pay", "pay more", "rather", "hope")

# slot keys by keyword; first match wins, so the more specific table rows come first
SLOT_LEXICON: list[tuple[str, tuple[str, ...]]] = [
    ("accommodation_type", ("hotel", "hotels", "hostel", "hostels", "cabin", "cabins",
                            "motel", "resort", "camping", "campsite", "airbnb", "accommodation")),
    ("activity_type", ("museum", "museums", "aquarium", "hiking", "picnic", "park",
                       "outdoor", "indoor", "activity", "activities")),
    ("budget", ("budget", "cost", "price", "afford", "affordable", "spend", "expensive", "cheap")),
    ("schedule", ("schedule", "weekend", "weekday", "morning", "evening", "dates")),
    ("weather", ("weather", "rain", "raining", "rainstorm", "sunny", "forecast")),
    ("group_size", ("family", "kids", "group", "solo", "couple")),
]

# "only if" is a constraint marker, not a clause boundary
_CLAUSE_SPLIT = re.compile(r",?\s+\b(?:but|unless)\b\s+|(?<!only )\bif\b\s+", flags=re.IGNORECASE)
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_STOPWORD_PREFIX = ("for", "to", "a", "an", "the", "more", "some")


def _match_marker(clause: str, markers: tuple[str, ...]) -> Optional[str]:
    low = f" {clause.lower()} "
    for m in markers:
        if f" {m} " in low or low.strip().startswith(m + " ") or low.strip() == m:
            return m
    return None


def _slot_for(clause: str) -> Optional[str]:
    tokens = re.findall(r"[a-z']+", clause.lower())
    for slot, keywords in SLOT_LEXICON:
        for kw in keywords:
            if kw in tokens:
                return slot
    return None


def _label_after_marker(clause: str, marker: str) -> str:
    low = clause.lower()
    idx = low.find(marker)
    rest = clause[idx + len(marker):].strip(" ,.;!?") if idx >= 0 else ""
    words = rest.split()
    while words and words[0].lower() in _STOPWORD_PREFIX:
        words.pop(0)
    label = " ".join(words)
    return label.lower() if label else clause.strip(" ,.;!?").lower()


def _has_named_entity(clause: str) -> bool:
    words = clause.split()
    for i, w in enumerate(words):
        bare = w.strip(",.;!?'\"()")
        if i > 0 and bare[:1].isupper() and bare.lower() != "i":
            return True
    return False


class RuleBasedExtractor:
    """Deterministic lexicon extractor; identical input gives identical output."""

    name = "rule_based"

    def __init__(self, config: ExtractionConfig | None = None):
        self.config = config or ExtractionConfig()

    def extract(self, utterance: Utterance, context: list[Utterance]) -> dict:
        concepts: list[dict] = []
        dependencies: list[dict] = []
        for sentence in _SENTENCE_SPLIT.split(utterance.text.strip()):
            if not sentence.strip():
                continue
            clause_concepts: list[int] = []
            clauses = [c for c in _CLAUSE_SPLIT.split(sentence) if c and c.strip()]
            conditional = len(clauses) > 1
            for clause in clauses:
                parsed = self._clause_concept(clause)
                if parsed is not None:
                    concepts.append(parsed)
                    clause_concepts.append(len(concepts) - 1)
            if conditional and len(clause_concepts) >= 2:
                # the qualifying clause constrains the base statement
                base, qualifier = clause_concepts[0], clause_concepts[1]
                dependencies.append({
                    "source": f"new:{qualifier}",
                    "target": f"new:{base}",
                    "relation": Relation.CONSTRAINT.value,
                    "causal_kind": CausalKind.CONFOUNDING.value,
                    "strength": self.config.edge_strength,
                    "rationale": "conditional clause qualifies the preceding statement",
                })
        return {"concepts": concepts, "dependencies": dependencies}

    def _clause_concept(self, clause: str) -> Optional[dict]:
        checks = [
            (CONSTRAINT_MARKERS, ConceptKind.CONSTRAINT),
            (BELIEF_MARKERS, ConceptKind.BELIEF),
            (PREFERENCE_MARKERS, ConceptKind.PREFERENCE),
        ]
        for markers, kind in checks:
            marker = _match_marker(clause, markers)
            if marker:
                return {
                    "label": _label_after_marker(clause, marker),
                    "kind": kind.value,
                    "slot": _slot_for(clause),
                    "confidence": self.config.marked_confidence,
                }
        if _has_named_entity(clause):
            return {
                "label": clause.strip(" ,.;!?").lower(),
                "kind": ConceptKind.FACTUAL.value,
                "slot": _slot_for(clause),
                "confidence": self.config.factual_confidence,
            }
        return None


class ExternalExtractor:
    """HTTP client for a remote extraction service speaking the wire contract."""

    name = "external"

    def __init__(self, settings: ExtractorSettings):
        self.settings = settings

    def extract(self, utterance: Utterance, context: list[Utterance]) -> dict:
        import httpx  # deferred: the core never needs it

        last: Exception | None = None
        for _ in range(1 + max(0, self.settings.retries)):
            try:
                response = httpx.post(
                    self.settings.endpoint,
                    json={
                        "utterance": utterance.to_dict(),
                        "context": [u.to_dict() for u in context],
                        "schema_version": 1,
                    },
                    headers={"authorization": f"Bearer {self.settings.api_key}"}
                    if self.settings.api_key else {},
                    timeout=self.settings.timeout_ms / 1000.0,
                )
                response.raise_for_status()
                return response.json()
            except Exception as exc:  # timeout, connection, HTTP error
                last = exc
        raise reject("extractor-unavailable", str(last)) from last


def candidates_from_response(
    response: dict, utterance: Utterance, extractor_name: str
) -> tuple[list[ConceptCandidate], list[DependencyCandidate]]:
    """Turn a wire response into candidate objects (ids left unassigned)."""
    concept_candidates: list[ConceptCandidate] = []
    for raw in response.get("concepts", []):
        predicted = bool(raw.get("predicted", False))
        concept = Concept(
            id="",
            kind=ConceptKind(raw["kind"]),
            label=raw["label"],
            slot=raw.get("slot"),
            value=raw.get("value"),
            confidence=0.0,  # set by evidence fusion when compiled
            provenance=Provenance.ASSISTANT_PROPOSED,
            status=Status.CANDIDATE,
            created_turn=utterance.turn,
        )
        concept_candidates.append(ConceptCandidate(
            concept=concept, source_turn=utterance.turn,
            extractor=extractor_name, predicted=predicted,
        ))
    dependency_candidates: list[DependencyCandidate] = []
    for raw in response.get("dependencies", []):
        kind = CausalKind(raw["causal_kind"])
        edge = DependencyEdge(
            id="",
            source=raw["source"],
            target=raw["target"],
            relation=Relation(raw["relation"]),
            strength=float(raw.get("strength", 0.5)),
            status=Status.CANDIDATE,
            provenance=Provenance.ASSISTANT_PROPOSED,
            rationale=raw.get("rationale"),
            created_turn=utterance.turn,
        )
        dependency_candidates.append(DependencyCandidate(
            edge=edge, causal_kind=kind, source_turn=utterance.turn,
        ))
    return concept_candidates, dependency_candidates


def fallback_concept(text: str, turn: int, config: ExtractionConfig | None = None,
                     kind: ConceptKind = ConceptKind.PREFERENCE) -> ConceptCandidate:
    """A whole-utterance candidate for confirmed content the lexicon cannot
    decompose (promotion must not drop what the user explicitly endorsed)."""
    cfg = config or ExtractionConfig()
    label = " ".join(text.strip(" ,.;!?").lower().split())
    concept = Concept(
        id="", kind=kind, label=label, slot=_slot_for(text), value=None,
        confidence=0.0, provenance=Provenance.ASSISTANT_PROPOSED,
        status=Status.CANDIDATE, created_turn=turn)
    candidate = ConceptCandidate(concept=concept, source_turn=turn,
                                 extractor="rule_based", predicted=False)
    candidate.concept.confidence = cfg.marked_confidence
    return candidate


def extract_candidates(
    utterance: Utterance,
    recent_context: list[Utterance],
    client: ExtractorClient,
) -> tuple[list[ConceptCandidate], list[DependencyCandidate]]:
    """Extract concept/dependency candidates from a user utterance.

    Assistant utterances yield no candidates (their text only ever produces
    evidence for existing structure). Nothing here touches committed state.
    """
    if utterance.speaker != Speaker.USER or not utterance.text.strip():
        return [], []
    response = client.extract(utterance, recent_context)
    return candidates_from_response(response, utterance, client.name)


# ---------------------------------------------------------------------------
# Evidence fusion and grounding
# ---------------------------------------------------------------------------

def fuse_evidence(current_confidence: float, record: EvidenceRecord,
                  source_weights: dict | None = None) -> float:
    """Noisy-OR style fusion: 1 - (1-c)(1 - w_source * weight).

    Monotone non-decreasing, never exceeds 1, order-independent up to float
    tolerance. Assistant-only support is downweighted via the source weight.
    """
    weights = source_weights or SOURCE_WEIGHTS
    if not 0.0 <= current_confidence <= 1.0:
        raise reject("bad-weight", f"confidence {current_confidence} outside [0,1]")
    if not 0.0 <= record.weight <= 1.0:
        raise reject("bad-weight", f"evidence weight {record.weight} outside [0,1]")
    w = weights[record.source.value if isinstance(record.source, EvidenceSource) else record.source]
    effective = w * record.weight
    if effective == 0.0:  # exact identity, no float noise on no-op evidence
        return current_confidence
    return 1.0 - (1.0 - current_confidence) * (1.0 - effective)


USER_SOURCES = {EvidenceSource.USER_STATEMENT, EvidenceSource.CLARIFICATION_ANSWER}


def has_user_support(item_id: str, evidence: dict[str, EvidenceRecord]) -> bool:
    return any(r.target == item_id and r.source in USER_SOURCES
               for r in evidence.values())


def grounding_threshold(graph, concept: Concept, config) -> float:
    """Base threshold, relaxed for empty-slot fillers, raised for hubs."""
    theta = config.base_threshold
    if concept.slot is not None:
        slot_grounded = any(
            c.slot == concept.slot and c.status == Status.GROUNDED and c.id != concept.id
            for c in graph.live_concepts()
        )
        if not slot_grounded:
            theta -= config.empty_slot_relief
    if graph.backbone_degree(concept.id) >= config.hub_degree:
        theta += config.hub_surcharge
    return theta


def plan_groundings(graph, evidence: dict[str, EvidenceRecord], config) -> list[str]:
    """Ids promotable candidate -> grounded, in promotion order.

    A concept is promotable when its fused confidence clears the local
    threshold; anything assistant-proposed additionally needs at least one
    user-sourced evidence record. An edge needs both endpoints grounded on
    top of the threshold on its strength. Iterates to a fixpoint so an edge
    whose endpoints ground in the same pass is promoted too. Pure.
    """
    promoted: list[str] = []
    grounded_now: set[str] = {c.id for c in graph.grounded_concepts()}
    while True:
        changed = False
        for c in sorted(graph.live_concepts(), key=lambda c: c.id):
            if c.status != Status.CANDIDATE or c.id in grounded_now or c.id in promoted:
                continue
            if not c.evidence:
                continue
            if c.provenance == Provenance.ASSISTANT_PROPOSED and not has_user_support(c.id, evidence):
                continue
            if c.confidence >= grounding_threshold(graph, c, config):
                promoted.append(c.id)
                grounded_now.add(c.id)
                changed = True
        for e in graph.backbone_edges():
            if e.status != Status.CANDIDATE or e.id in promoted:
                continue
            if e.source not in grounded_now or e.target not in grounded_now:
                continue
            if e.provenance == Provenance.ASSISTANT_PROPOSED and not has_user_support(e.id, evidence):
                continue
            if e.strength >= config.base_threshold:
                promoted.append(e.id)
                changed = True
        if not changed:
            return promoted


def ground_candidates(graph, evidence: dict[str, EvidenceRecord], config) -> list[str]:
    """Promote eligible candidates in place; returns the promoted ids."""
    promoted = plan_groundings(graph, evidence, config)
    for item_id in promoted:
        if item_id in graph.concepts:
            graph.concepts[item_id].status = Status.GROUNDED
        else:
            graph.edges[item_id].status = Status.GROUNDED
    return promoted
