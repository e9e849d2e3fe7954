"""Runtime that turns dialogue into a reviewable causal graph of user
reasoning, with reusable motifs, selective clarification, patch-based
revision, stable layout, and deterministic replay."""

from .config import (
    ClarificationConfig,
    ExtractionConfig,
    GroundingConfig,
    RevisionConfig,
    RuntimeConfig,
    load_config,
)
from .errors import CogmapError
from .graph import (
    CognitiveGraph,
    Concept,
    ConceptKind,
    ConflictEdge,
    DependencyEdge,
    Provenance,
    Relation,
    Status,
    ValidationReport,
    attach_concept,
    compact_singletons,
    detect_cycles,
    repair_cycles,
    topological_order,
    validate_backbone,
)
from .extraction import (
    EvidenceRecord,
    EvidenceSource,
    RuleBasedExtractor,
    Speaker,
    Utterance,
    extract_candidates,
    fuse_evidence,
    ground_candidates,
)
from .motifs import (
    MotifInstance,
    MotifLibrary,
    MotifPattern,
    MotifStatus,
    TransferCandidate,
    abstract_motif,
    load_vocabulary,
    match_motifs,
    retrieve_transfer_candidates,
    update_motif_status,
)
from .clarification import (
    ImpactScore,
    Probe,
    ProbeKind,
    ProbeResponse,
    Verdict,
    apply_response,
    score_impact,
    select_probe,
)
from .revision import (
    CognitiveState,
    CommitOutcome,
    GraphPatch,
    PatchDiff,
    PatchOp,
    Scope,
    SessionState,
    TaskPlanState,
    commit_patch,
    compile_turn_to_patch,
    compute_diff,
    promote_to_cognitive,
    revise,
    surface_patch,
)
from .layout import LayoutSnapshot, compute_layout, stability_report
from .session import (
    EventKind,
    EventLog,
    EventRecord,
    SessionArchive,
    append_event,
    deserialize_state,
    read_archive,
    replay,
    serialize_state,
    state_digest,
    write_archive,
)
from .runtime import SessionRuntime

__version__ = "0.1.0"
