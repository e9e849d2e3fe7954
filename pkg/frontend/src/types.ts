/**
 * Wire types mirroring the session service's JSON. The client renders these
 * verbatim; it never derives or mutates reasoning state locally.
 */

export type ConceptKind = "belief" | "constraint" | "preference" | "factual";
export type Relation = "enable" | "constraint" | "determine";
export type Provenance = "assistant_proposed" | "user_confirmed" | "co_authored" | "transfer_based";
export type ItemStatus = "candidate" | "grounded" | "deprecated" | "cancelled";
export type MotifStatus = "active" | "uncertain" | "deprecated" | "cancelled";
export type Verdict = "confirm" | "weaken" | "refine" | "defer";

export interface ConceptWire {
  id: string;
  kind: ConceptKind;
  label: string;
  slot?: string;
  value?: string;
  confidence: number;
  provenance: Provenance;
  status: ItemStatus;
  created_turn: number;
  evidence: string[];
}

export interface EdgeWire {
  id: string;
  source: string;
  target: string;
  relation: Relation;
  strength: number;
  status: ItemStatus;
  provenance: Provenance;
  rationale?: string;
  created_turn: number;
}

export interface ConflictWire {
  id: string;
  a: string;
  b: string;
  description: string;
  status: "open" | "resolved" | "dismissed";
}

export interface MotifWire {
  id: string;
  pattern: string;
  bindings: Record<string, string>;
  edges: string[];
  status: MotifStatus;
  provenance: Provenance;
  task_id: string;
  rationale: string;
  history: Array<{ event: string; turn: number; source: string }>;
}

export interface TransferWire {
  id: string;
  pattern: string;
  proposed_bindings: Record<string, string>;
  source_task: string;
  status: "uncertain" | "adopted" | "rejected";
  provenance: Provenance;
}

export interface ProbeWire {
  id: string;
  motif: string;
  kind: "direct_confirmation" | "counterfactual" | "mediation_check";
  text: string;
  issued_turn: number;
}

export interface PlanItemWire {
  id: string;
  kind: "draft" | "comparison" | "note" | "open_question";
  text: string;
  citations: string[];
  provenance: Provenance;
  created_turn: number;
}

export interface PatchOpWire {
  kind: string;
  data: Record<string, unknown>;
}

export interface PatchWire {
  id: string;
  ops: PatchOpWire[];
  origin: string;
  turn: number;
}

export interface DiffWire {
  affected_concepts: string[];
  affected_edges: string[];
  affected_motifs: string[];
  downstream_plan_items: string[];
  scope: "local" | "non_local";
}

export interface GraphWire {
  concepts: Record<string, ConceptWire>;
  edges: Record<string, EdgeWire>;
  conflicts: Record<string, ConflictWire>;
  turn_counter: number;
}

export interface SessionStateWire {
  cognitive: {
    graph: GraphWire;
    motifs: Record<string, MotifWire>;
    transfer_candidates: TransferWire[];
    probes: Record<string, ProbeWire>;
    probe_answers: Record<string, { verdict: Verdict; detail: string; turn: number }>;
    evidence: Record<string, unknown>;
    pending_edges: Record<string, EdgeWire>;
    task_history: string[];
    library: { patterns: Record<string, unknown>; pattern_history: unknown[] };
  };
  plan: { items: Record<string, PlanItemWire> };
  task_id: string;
  turn: number;
  task_started_turn: number;
  probe_budget_used: boolean;
  pending_review?: { patch: PatchWire; diff: DiffWire };
}

export interface LayoutWire {
  positions: Record<string, { layer: number; x: number }>;
  orderings: string[][];
  basis_turn: number;
}

export interface EventWire {
  seq: number;
  turn: number;
  timestamp: number;
  kind: string;
  payload: Record<string, unknown>;
}

/** One push-channel message: a full authoritative snapshot. */
export interface PushMessage {
  seq: number;
  state: SessionStateWire;
  layout: LayoutWire | null;
  events: EventWire[];
  surfaced_patch: { patch: PatchWire; diff: DiffWire } | null;
  probe: ProbeWire | null;
  digest: string;
}

/** A direct manipulation, mapped 1:1 onto a server revise payload. */
export type EditIntent =
  | { kind: "confidence"; target: string; value: number }
  | { kind: "status"; target: string; status: ItemStatus; note?: string }
  | { kind: "concept"; target?: string; mode?: "replace" | "scope"; label?: string;
      value?: string; slot?: string; concept_kind?: ConceptKind }
  | { kind: "structure"; action: "add_edge"; source: string; target: string;
      relation: Relation; strength?: number }
  | { kind: "structure"; action: "cancel"; edge: string; note?: string }
  | { kind: "structure"; action: "retype"; edge: string; relation: Relation };
