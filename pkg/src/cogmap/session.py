"""Append-only event log, canonical serialization, and archives.

Everything that happens to a session is an :class:`EventRecord` with a
strictly increasing ``seq``. Input events carry what arrived (utterances
with their logged extraction results, edits, probe answers, approvals);
derived events record what the runtime did (probes issued, patches
committed or surfaced). Replay folds the input events back through the
runtime with the external extractor disabled and verifies both the derived
events and the final state digest, so any nondeterminism is caught at the
first divergent seq.

Serialization is canonical: sorted keys, sorted id arrays, ASCII JSON with
shortest round-trip floats. The digest is SHA-256 over those bytes; the
algorithm name travels in the archive header. Archive files are JSON lines:
one header, one line per event, one footer.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .config import RuntimeConfig
from .errors import reject
from .revision import SessionState

DIGEST_ALGORITHM = "sha256"
SCHEMA_VERSION = 1


class EventKind(str, Enum):
    UTTERANCE = "utterance"
    TEXT_RESTATEMENT = "text_restatement"
    TEXT_CORRECTION = "text_correction"
    TEXT_NEW_REWRITE = "text_new_rewrite"
    TEXT_CROSS_TASK_REUSE = "text_cross_task_reuse"
    CONCEPT_EDIT = "concept_edit"
    MOTIF_EDIT = "motif_edit"
    EDGE_EDIT = "edge_edit"
    TRANSFER_UPTAKE = "transfer_uptake"
    PROBE_ISSUED = "probe_issued"
    PROBE_ANSWERED = "probe_answered"
    PATCH_COMMITTED = "patch_committed"
    PATCH_SURFACED = "patch_surfaced"
    PATCH_APPROVED = "patch_approved"
    PATCH_REJECTED = "patch_rejected"
    PROMOTION = "promotion"
    TASK_START = "task_start"
    TASK_END = "task_end"


# events the runtime derives; everything else is input
DERIVED_KINDS = {EventKind.PROBE_ISSUED, EventKind.PATCH_COMMITTED, EventKind.PATCH_SURFACED}


@dataclass
class EventRecord:
    seq: int
    turn: int
    timestamp: float
    kind: EventKind
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "turn": self.turn, "timestamp": self.timestamp,
                "kind": self.kind.value, "payload": self.payload}

    @classmethod
    def from_dict(cls, d: dict) -> "EventRecord":
        return cls(seq=d["seq"], turn=d["turn"], timestamp=d["timestamp"],
                   kind=EventKind(d["kind"]), payload=dict(d["payload"]))


@dataclass
class EventLog:
    events: list[EventRecord] = field(default_factory=list)

    def last_seq(self) -> int:
        return self.events[-1].seq if self.events else 0

    def append(self, event: EventRecord) -> "EventLog":
        if event.seq != self.last_seq() + 1:
            raise reject("sequence-violation",
                         f"got seq {event.seq}, expected {self.last_seq() + 1}")
        self.events.append(event)
        return self

    def since(self, seq: int) -> list[EventRecord]:
        return [e for e in self.events if e.seq > seq]


def append_event(log: EventLog, event: EventRecord) -> EventLog:
    """Append-only with contiguous seqs; never reorders or mutates."""
    return log.append(event)


# ---------------------------------------------------------------------------
# Canonical serialization
# ---------------------------------------------------------------------------

def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=True).encode("ascii")


def serialize_state(state: SessionState) -> bytes:
    return canonical_json(state.to_dict())


def deserialize_state(data: bytes) -> SessionState:
    try:
        raw = json.loads(data.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise reject("parse-failure", f"byte offset {exc.pos}: {exc.msg}") from exc
    except UnicodeDecodeError as exc:
        raise reject("parse-failure", f"byte offset {exc.start}: invalid encoding") from exc
    return SessionState.from_dict(raw)


def state_digest(state: SessionState) -> str:
    return hashlib.sha256(serialize_state(state)).hexdigest()


# ---------------------------------------------------------------------------
# Archives
# ---------------------------------------------------------------------------

@dataclass
class SessionArchive:
    session_id: str
    config: RuntimeConfig
    events: list[EventRecord] = field(default_factory=list)
    final_state_digest: str = ""
    algorithm: str = DIGEST_ALGORITHM
    schema_version: int = SCHEMA_VERSION

    def header(self) -> dict:
        return {
            "record": "header",
            "session_id": self.session_id,
            "schema_version": self.schema_version,
            "algorithm": self.algorithm,
            "config": self.config.to_dict(),
        }

    def footer(self) -> dict:
        return {"record": "footer", "final_state_digest": self.final_state_digest,
                "events": len(self.events)}

    def to_lines(self) -> list[str]:
        lines = [canonical_json(self.header()).decode("ascii")]
        lines.extend(canonical_json(e.to_dict()).decode("ascii") for e in self.events)
        lines.append(canonical_json(self.footer()).decode("ascii"))
        return lines


def write_archive(archive: SessionArchive, path: str) -> None:
    with open(path, "w", encoding="ascii") as f:
        for line in archive.to_lines():
            f.write(line + "\n")


def read_archive(path: str) -> SessionArchive:
    with open(path, "rb") as f:
        data = f.read()
    return parse_archive(data)


def parse_archive(data: bytes) -> SessionArchive:
    offset = 0
    records: list[dict] = []
    for chunk in data.split(b"\n"):
        if chunk.strip():
            try:
                records.append(json.loads(chunk.decode("utf-8")))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                pos = offset + getattr(exc, "pos", 0)
                raise reject("parse-failure", f"byte offset {pos}") from exc
        offset += len(chunk) + 1
    if len(records) < 2 or records[0].get("record") != "header" \
            or records[-1].get("record") != "footer":
        raise reject("parse-failure", "archive needs a header and footer line")
    header, footer = records[0], records[-1]
    events = [EventRecord.from_dict(d) for d in records[1:-1]]
    if footer.get("events") not in (None, len(events)):
        raise reject("parse-failure",
                     f"footer declares {footer['events']} events, found {len(events)}")
    return SessionArchive(
        session_id=header.get("session_id", ""),
        config=RuntimeConfig.from_dict(header.get("config", {})),
        events=events,
        final_state_digest=footer.get("final_state_digest", ""),
        algorithm=header.get("algorithm", DIGEST_ALGORITHM),
        schema_version=header.get("schema_version", SCHEMA_VERSION),
    )


def replay(archive: SessionArchive, *, until: Optional[int] = None,
           verify_digest: bool = True, observer=None) -> SessionState:
    """Fold the archive's events through the runtime; external extractor
    stays disabled (only logged extraction results are used). Raises
    ``nondeterminism-detected`` at the first divergent seq."""
    from .runtime import SessionRuntime  # runtime builds on this module

    runtime = SessionRuntime(config=archive.config, extractor=None,
                             session_id=archive.session_id)
    runtime.replay_events(archive.events, until=until, observer=observer)
    if verify_digest and until is None and archive.final_state_digest:
        digest = state_digest(runtime.state)
        if digest != archive.final_state_digest:
            raise reject(
                "nondeterminism-detected",
                f"final digest {digest} != archived {archive.final_state_digest} "
                f"(divergence after seq {runtime.log.last_seq()})")
    return runtime.state
