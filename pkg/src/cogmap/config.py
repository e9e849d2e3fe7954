"""Tunable coefficients for grounding, clarification, and revision.

All values here are configuration, not constants: they were tuned by hand and
are frozen per session (the archive header embeds the full config so replay
uses the same numbers).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict

from .errors import reject

# evidence-source weights: user speech counts fully, tool output partially,
# assistant-only support is heavily downweighted
SOURCE_WEIGHTS = {
    "user_statement": 1.0,
    "clarification_answer": 1.0,
    "function_call": 0.6,
    "assistant_statement": 0.3,
}


@dataclass
class ClarificationConfig:
    """Weights of the probe-impact score and the issuing threshold.

    ``alpha_u`` weighs motif uncertainty, ``alpha_s`` structural centrality,
    ``alpha_c`` the evidence-coverage deficit, ``alpha_t`` transfer risk.
    A probe is issued only for the single highest-impact candidate whose
    score strictly exceeds ``tau``.
    """

    alpha_u: float = 0.40
    alpha_s: float = 0.25
    alpha_c: float = 0.20
    alpha_t: float = 0.15
    tau: float = 0.5

    def __post_init__(self):
        # weights may be uniformly scaled (argmax-invariance tests depend on
        # it); only session loading enforces normalization
        for name in ("alpha_u", "alpha_s", "alpha_c", "alpha_t"):
            if getattr(self, name) < 0:
                raise reject("bad-config", f"{name} must be >= 0")

    def require_normalized(self, tol: float = 1e-9) -> "ClarificationConfig":
        total = self.alpha_u + self.alpha_s + self.alpha_c + self.alpha_t
        if abs(total - 1.0) > tol:
            raise reject("bad-config", f"alpha weights sum to {total}, expected 1.0")
        if not 0.0 <= self.tau <= 1.0:
            raise reject("bad-config", f"tau {self.tau} outside [0,1]")
        return self


@dataclass
class GroundingConfig:
    """Candidate-promotion thresholds, adapted to the local structural role."""

    base_threshold: float = 0.6
    empty_slot_relief: float = 0.1  # subtracted when the concept fills an empty slot
    hub_surcharge: float = 0.1     # added when backbone degree >= hub_degree
    hub_degree: int = 3


@dataclass
class ExtractionConfig:
    """Initial evidence weights the rule-based extractor assigns."""

    marked_confidence: float = 0.7   # clause matched a kind marker
    factual_confidence: float = 0.55  # bare declarative with a named entity
    edge_strength: float = 0.6       # conditional dependency proposals


@dataclass
class RevisionConfig:
    """Auto-commit scope rule and response-application factors."""

    local_max_items: int = 2   # pre-existing items a local patch may touch
    weaken_factor: float = 0.5  # strength multiplier for a "weaken" verdict


@dataclass
class ExtractorSettings:
    """External extractor endpoint; unused when mode is ``rule``."""

    mode: str = "rule"  # "rule" | "external"
    endpoint: str = ""
    api_key: str = ""
    timeout_ms: int = 10000
    retries: int = 1
    fall_back_to_rule: bool = True  # degrade gracefully when the model is down


@dataclass
class RuntimeConfig:
    clarification: ClarificationConfig = field(default_factory=ClarificationConfig)
    grounding: GroundingConfig = field(default_factory=GroundingConfig)
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    revision: RevisionConfig = field(default_factory=RevisionConfig)
    extractor: ExtractorSettings = field(default_factory=ExtractorSettings)
    vocabulary_path: str = ""  # empty = packaged seed vocabulary
    source_weights: dict = field(default_factory=lambda: dict(SOURCE_WEIGHTS))

    def validated(self) -> "RuntimeConfig":
        self.clarification.require_normalized()
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RuntimeConfig":
        return cls(
            clarification=ClarificationConfig(**data.get("clarification", {})),
            grounding=GroundingConfig(**data.get("grounding", {})),
            extraction=ExtractionConfig(**data.get("extraction", {})),
            revision=RevisionConfig(**data.get("revision", {})),
            extractor=ExtractorSettings(**data.get("extractor", {})),
            vocabulary_path=data.get("vocabulary_path", ""),
            source_weights=dict(data.get("source_weights", SOURCE_WEIGHTS)),
        )


def load_config(path: str | None = None) -> RuntimeConfig:
    """Build a config from an optional JSON file plus environment overrides.

    Env vars: COGMAP_EXTRACTOR_ENDPOINT, COGMAP_EXTRACTOR_KEY,
    COGMAP_EXTRACTOR_TIMEOUT_MS, COGMAP_VOCABULARY_PATH.
    """
    cfg = RuntimeConfig()
    if path:
        with open(path, "r", encoding="utf-8") as f:
            cfg = RuntimeConfig.from_dict(json.load(f))
    env = os.environ
    if env.get("COGMAP_EXTRACTOR_ENDPOINT"):
        cfg.extractor.endpoint = env["COGMAP_EXTRACTOR_ENDPOINT"]
    if env.get("COGMAP_EXTRACTOR_KEY"):
        cfg.extractor.api_key = env["COGMAP_EXTRACTOR_KEY"]
    if env.get("COGMAP_EXTRACTOR_TIMEOUT_MS"):
        cfg.extractor.timeout_ms = int(env["COGMAP_EXTRACTOR_TIMEOUT_MS"])
    if env.get("COGMAP_VOCABULARY_PATH"):
        cfg.vocabulary_path = env["COGMAP_VOCABULARY_PATH"]
    return cfg.validated()
