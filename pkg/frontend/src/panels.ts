/**
 * Pure view-model builders: one state snapshot in, five coordinated panel
 * models out. No panel keeps private truth — selecting an item anywhere
 * yields the identical highlight set everywhere, derived here once.
 */

import type {
  ConceptWire,
  DiffWire,
  EdgeWire,
  EventWire,
  LayoutWire,
  MotifWire,
  PatchWire,
  ProbeWire,
  PushMessage,
  SessionStateWire,
} from "./types.js";

export interface Selection {
  kind: "concept" | "edge" | "motif" | "transfer" | "plan" | "none";
  id: string;
}

export const NO_SELECTION: Selection = { kind: "none", id: "" };

/** Everything that should light up when `selection` is active. */
export function highlightSet(state: SessionStateWire, selection: Selection): Set<string> {
  const ids = new Set<string>();
  if (selection.kind === "none") return ids;
  ids.add(selection.id);
  const g = state.cognitive.graph;
  if (selection.kind === "concept") {
    for (const e of Object.values(g.edges)) {
      if (e.source === selection.id || e.target === selection.id) ids.add(e.id);
    }
    for (const m of Object.values(state.cognitive.motifs)) {
      if (Object.values(m.bindings).includes(selection.id)) ids.add(m.id);
    }
  } else if (selection.kind === "edge") {
    const e = g.edges[selection.id];
    if (e) {
      ids.add(e.source);
      ids.add(e.target);
    }
    for (const m of Object.values(state.cognitive.motifs)) {
      if (m.edges.includes(selection.id)) ids.add(m.id);
    }
  } else if (selection.kind === "motif") {
    const m = state.cognitive.motifs[selection.id];
    if (m) {
      for (const cid of Object.values(m.bindings)) ids.add(cid);
      for (const eid of m.edges) ids.add(eid);
    }
  } else if (selection.kind === "transfer") {
    const t = state.cognitive.transfer_candidates.find((t) => t.id === selection.id);
    if (t) for (const cid of Object.values(t.proposed_bindings)) ids.add(cid);
  } else if (selection.kind === "plan") {
    const item = state.plan.items[selection.id];
    if (item) for (const cid of item.citations) ids.add(cid);
  }
  return ids;
}

// ---------------------------------------------------------------------------
// Panel models
// ---------------------------------------------------------------------------

export interface DialogueEntry {
  turn: number;
  speaker: string;
  text: string;
}

export interface DialoguePanel {
  messages: DialogueEntry[];
  pendingProbe: ProbeWire | null;
  inputEnabled: boolean;
}

export interface ListRow {
  id: string;
  title: string;
  badge: string;         // status
  secondary: string;     // provenance / slot / pattern
  highlighted: boolean;
  dimmed: boolean;       // deprecated
  struck: boolean;       // cancelled
}

export interface ListsPanel {
  concepts: ListRow[];
  motifs: ListRow[];
  transfers: ListRow[];
  plan: ListRow[];
}

export interface GraphNodeView {
  id: string;
  label: string;
  kind: string;
  x: number;
  y: number;
  opacity: number;
  dashed: boolean;
  highlighted: boolean;
  conflicted: boolean;
}

export interface GraphEdgeView {
  id: string;
  from: string;
  to: string;
  relation: string;
  width: number;       // encodes strength
  dash: string;        // encodes relation (three distinct styles)
  opacity: number;     // encodes status
  highlighted: boolean;
}

export interface GraphPanel {
  nodes: GraphNodeView[];
  edges: GraphEdgeView[];
  conflicts: Array<{ id: string; a: string; b: string; description: string }>;
}

export interface MotifDetailPanel {
  motif: MotifWire | null;
  bindingLabels: Record<string, string>;
  consequences: string[];   // labels of downstream concepts and citing drafts
  historyLines: string[];
}

export interface ControlPanel {
  selection: Selection;
  selectionTitle: string;
  editorFields: Array<{ name: string; value: string }>;
  pendingPatch: { patch: PatchWire; diff: DiffWire; opSummaries: string[] } | null;
}

export interface Panels {
  dialogue: DialoguePanel;
  lists: ListsPanel;
  graph: GraphPanel;
  motifDetail: MotifDetailPanel;
  control: ControlPanel;
  highlights: Set<string>;
}

const RELATION_DASH: Record<string, string> = {
  enable: "",          // solid
  constraint: "6 3",   // dashed
  determine: "2 2",    // dotted
};

const STATUS_OPACITY: Record<string, number> = {
  candidate: 0.75,
  grounded: 1.0,
  deprecated: 0.35,
  cancelled: 0.15,
};

function conceptTitle(c: ConceptWire): string {
  return c.slot ? `${c.label} [${c.slot}]` : c.label;
}

export function dialogueFromEvents(events: EventWire[]): DialogueEntry[] {
  return events
    .filter((e) => e.kind === "utterance")
    .map((e) => ({
      turn: e.turn,
      speaker: String(e.payload.speaker ?? "user"),
      text: String(e.payload.text ?? ""),
    }));
}

export function openProbe(state: SessionStateWire): ProbeWire | null {
  const open = Object.values(state.cognitive.probes)
    .filter((p) => !(p.id in state.cognitive.probe_answers))
    .sort((a, b) => (a.id < b.id ? 1 : -1));
  return open[0] ?? null;
}

export function buildPanels(
  state: SessionStateWire,
  layout: LayoutWire | null,
  transcript: EventWire[],
  selection: Selection,
  connected = true,
): Panels {
  const highlights = highlightSet(state, selection);
  const g = state.cognitive.graph;

  const dialogue: DialoguePanel = {
    messages: dialogueFromEvents(transcript),
    pendingProbe: openProbe(state),
    inputEnabled: connected,
  };

  const conflicted = new Set<string>();
  for (const x of Object.values(g.conflicts)) {
    if (x.status === "open") {
      conflicted.add(x.a);
      conflicted.add(x.b);
    }
  }

  const conceptRows = Object.values(g.concepts)
    .sort((a, b) => a.id.localeCompare(b.id))
    .map<ListRow>((c) => ({
      id: c.id,
      title: conceptTitle(c),
      badge: c.status,
      secondary: `${c.kind} · ${c.provenance} · ${c.confidence.toFixed(2)}`,
      highlighted: highlights.has(c.id),
      dimmed: c.status === "deprecated",
      struck: c.status === "cancelled",
    }));

  const motifRows = Object.values(state.cognitive.motifs)
    .sort((a, b) => a.id.localeCompare(b.id))
    .map<ListRow>((m) => ({
      id: m.id,
      title: m.pattern,
      badge: m.status,
      secondary: Object.values(m.bindings)
        .map((cid) => g.concepts[cid]?.label ?? cid)
        .join(" → "),
      highlighted: highlights.has(m.id),
      dimmed: m.status === "deprecated",
      struck: m.status === "cancelled",
    }));

  const transferRows = state.cognitive.transfer_candidates
    .slice()
    .sort((a, b) => a.id.localeCompare(b.id))
    .map<ListRow>((t) => ({
      id: t.id,
      title: t.pattern,
      badge: t.status,
      secondary: `from ${t.source_task}`,
      highlighted: highlights.has(t.id),
      dimmed: t.status === "rejected",
      struck: false,
    }));

  const planRows = Object.values(state.plan.items)
    .sort((a, b) => a.id.localeCompare(b.id))
    .map<ListRow>((item) => ({
      id: item.id,
      title: item.text.length > 64 ? item.text.slice(0, 61) + "…" : item.text,
      badge: item.kind,
      secondary: item.provenance,
      highlighted: highlights.has(item.id),
      dimmed: false,
      struck: false,
    }));

  const nodes: GraphNodeView[] = [];
  if (layout) {
    for (const [cid, pos] of Object.entries(layout.positions)) {
      const c = g.concepts[cid];
      if (!c) continue;
      nodes.push({
        id: cid,
        label: c.label,
        kind: c.kind,
        x: pos.x,
        y: pos.layer,
        opacity: STATUS_OPACITY[c.status] ?? 1,
        dashed: c.status === "candidate",
        highlighted: highlights.has(cid),
        conflicted: conflicted.has(cid),
      });
    }
  }

  const edgeViews: GraphEdgeView[] = Object.values(g.edges)
    .filter((e) => e.status !== "cancelled")
    .filter((e) => !layout || (e.source in layout.positions && e.target in layout.positions))
    .sort((a, b) => a.id.localeCompare(b.id))
    .map((e) => ({
      id: e.id,
      from: e.source,
      to: e.target,
      relation: e.relation,
      width: 1 + 3 * e.strength,
      dash: RELATION_DASH[e.relation] ?? "",
      opacity: STATUS_OPACITY[e.status] ?? 1,
      highlighted: highlights.has(e.id),
    }));

  const graph: GraphPanel = {
    nodes,
    edges: edgeViews,
    conflicts: Object.values(g.conflicts)
      .filter((x) => x.status === "open")
      .map((x) => ({ id: x.id, a: x.a, b: x.b, description: x.description })),
  };

  const motifDetail = buildMotifDetail(state, selection);
  const control = buildControl(state, selection);

  return { dialogue, lists: { concepts: conceptRows, motifs: motifRows,
                              transfers: transferRows, plan: planRows },
           graph, motifDetail, control, highlights };
}

function buildMotifDetail(state: SessionStateWire, selection: Selection): MotifDetailPanel {
  const g = state.cognitive.graph;
  let motif: MotifWire | null = null;
  if (selection.kind === "motif") {
    motif = state.cognitive.motifs[selection.id] ?? null;
  } else if (selection.kind === "concept" || selection.kind === "edge") {
    motif = Object.values(state.cognitive.motifs)
      .sort((a, b) => a.id.localeCompare(b.id))
      .find((m) => selection.kind === "concept"
        ? Object.values(m.bindings).includes(selection.id)
        : m.edges.includes(selection.id)) ?? null;
  }
  if (!motif) {
    return { motif: null, bindingLabels: {}, consequences: [], historyLines: [] };
  }
  const bindingLabels: Record<string, string> = {};
  for (const [role, cid] of Object.entries(motif.bindings)) {
    bindingLabels[role] = g.concepts[cid]?.label ?? cid;
  }
  const bound = new Set(Object.values(motif.bindings));
  const consequences: string[] = [];
  for (const e of Object.values(g.edges)) {
    if (e.status !== "cancelled" && bound.has(e.source) && !bound.has(e.target)) {
      consequences.push(g.concepts[e.target]?.label ?? e.target);
    }
  }
  for (const item of Object.values(state.plan.items)) {
    if (item.citations.some((cid) => bound.has(cid))) {
      consequences.push(`draft ${item.id}`);
    }
  }
  const historyLines = motif.history.map(
    (h) => `turn ${h.turn}: ${h.event} (${h.source})`);
  return { motif, bindingLabels, consequences, historyLines };
}

function buildControl(state: SessionStateWire, selection: Selection): ControlPanel {
  const g = state.cognitive.graph;
  let title = "nothing selected";
  const fields: Array<{ name: string; value: string }> = [];
  if (selection.kind === "concept") {
    const c = g.concepts[selection.id];
    if (c) {
      title = conceptTitle(c);
      fields.push({ name: "label", value: c.label });
      fields.push({ name: "confidence", value: String(c.confidence) });
      fields.push({ name: "status", value: c.status });
    }
  } else if (selection.kind === "edge") {
    const e = g.edges[selection.id];
    if (e) {
      title = `${g.concepts[e.source]?.label ?? e.source} —${e.relation}→ ` +
        `${g.concepts[e.target]?.label ?? e.target}`;
      fields.push({ name: "relation", value: e.relation });
      fields.push({ name: "strength", value: String(e.strength) });
      fields.push({ name: "status", value: e.status });
    }
  } else if (selection.kind === "motif") {
    const m = state.cognitive.motifs[selection.id];
    if (m) {
      title = m.pattern;
      fields.push({ name: "status", value: m.status });
    }
  } else if (selection.kind === "plan") {
    const item = state.plan.items[selection.id];
    if (item) {
      title = `plan ${item.id}`;
      fields.push({ name: "provenance", value: item.provenance });
    }
  } else if (selection.kind === "transfer") {
    const t = state.cognitive.transfer_candidates.find((t) => t.id === selection.id);
    if (t) {
      title = `transfer ${t.pattern}`;
      fields.push({ name: "status", value: t.status });
    }
  }

  let pendingPatch: ControlPanel["pendingPatch"] = null;
  if (state.pending_review) {
    const { patch, diff } = state.pending_review;
    pendingPatch = { patch, diff, opSummaries: patch.ops.map(summarizeOp) };
  }
  return { selection, selectionTitle: title, editorFields: fields, pendingPatch };
}

export function summarizeOp(op: { kind: string; data: Record<string, unknown> }): string {
  const d = op.data as Record<string, any>;
  switch (op.kind) {
    case "add_concept": return `add concept “${d.concept?.label}”`;
    case "add_edge": return `add ${d.edge?.relation} edge ${d.edge?.source} → ${d.edge?.target}`;
    case "set_confidence": return `set confidence of ${d.target} to ${d.value}`;
    case "set_strength": return `set strength of ${d.target} to ${d.value}`;
    case "set_status": return `mark ${d.target} ${d.status}`;
    case "merge_concepts": return `merge ${d.source} into ${d.target}`;
    case "add_conflict": return `record conflict ${d.conflict?.a} ↔ ${d.conflict?.b}`;
    case "add_evidence": return `attach evidence to ${d.record?.target}`;
    default: return op.kind.replace(/_/g, " ");
  }
}

/** The server digest of the latest applied snapshot; what "rendered" means. */
export function renderedDigest(msg: PushMessage | null): string {
  return msg?.digest ?? "";
}
