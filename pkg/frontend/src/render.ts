/**
 * DOM rendering of the five panels. Rendering is a pure function of the
 * panel models: containers are rebuilt per snapshot (graphs are tens of
 * nodes, so diffing buys nothing), and callbacks report intent upward —
 * nothing here touches reasoning state.
 */

import type { Panels, Selection } from "./panels.js";
import type { Verdict } from "./types.js";

export interface RenderCallbacks {
  onSelect(selection: Selection): void;
  onSend(text: string): void;
  onProbeVerdict(probeId: string, verdict: Verdict, detail?: string): void;
  onApprove(patchId: string, dropOps: number[]): void;
  onReject(patchId: string): void;
  onFieldEdit(selection: Selection, field: string, value: string): void;
  onPromote(itemId: string): void;
  onTransfer(candidateId: string, action: "adopt" | "reject"): void;
}

const X_SCALE = 120;
const Y_SCALE = 90;
const PAD = 50;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className = "", text = ""): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

export class ConsoleView {
  private dropSelections = new Set<number>();

  constructor(private root: HTMLElement, private callbacks: RenderCallbacks) {}

  render(panels: Panels, banner: string | null): void {
    this.renderBanner(banner);
    this.renderDialogue(panels);
    this.renderLists(panels);
    this.renderGraph(panels);
    this.renderMotifDetail(panels);
    this.renderControl(panels);
  }

  private zone(id: string): HTMLElement {
    let zone = this.root.querySelector<HTMLElement>(`#${id}`);
    if (!zone) {
      zone = el("section");
      zone.id = id;
      this.root.appendChild(zone);
    }
    zone.replaceChildren();
    return zone;
  }

  private renderBanner(banner: string | null): void {
    const zone = this.zone("banner");
    if (banner) {
      zone.appendChild(el("div", "banner", banner));
    }
  }

  private renderDialogue(panels: Panels): void {
    const zone = this.zone("dialogue");
    zone.appendChild(el("h2", "", "Dialogue"));
    const list = el("div", "messages");
    for (const m of panels.dialogue.messages) {
      const row = el("div", `message ${m.speaker}`);
      row.appendChild(el("span", "turn", `t${m.turn}`));
      row.appendChild(el("span", "text", m.text));
      list.appendChild(row);
    }
    zone.appendChild(list);

    const probe = panels.dialogue.pendingProbe;
    if (probe) {
      const box = el("div", "probe");
      box.dataset.probeId = probe.id;
      box.appendChild(el("div", "probe-kind", probe.kind.replace(/_/g, " ")));
      box.appendChild(el("div", "probe-text", probe.text));
      const buttons = el("div", "probe-buttons");
      for (const verdict of ["confirm", "weaken", "defer"] as Verdict[]) {
        const b = el("button", `verdict ${verdict}`, verdict);
        b.onclick = () => this.callbacks.onProbeVerdict(probe.id, verdict);
        buttons.appendChild(b);
      }
      const refine = el("button", "verdict refine", "refine…");
      const detail = el("input");
      detail.placeholder = "structured refinement (JSON)";
      refine.onclick = () => {
        if (detail.value.trim()) {
          this.callbacks.onProbeVerdict(probe.id, "refine", detail.value);
        } else {
          detail.classList.add("invalid"); // refine without detail is blocked here
        }
      };
      buttons.appendChild(refine);
      box.appendChild(buttons);
      box.appendChild(detail);
      zone.appendChild(box);
    }

    const input = el("input", "say");
    input.placeholder = "say something…";
    input.disabled = !panels.dialogue.inputEnabled;
    input.onkeydown = (ev) => {
      if (ev.key === "Enter" && input.value.trim()) {
        this.callbacks.onSend(input.value.trim());
        input.value = "";
      }
    };
    zone.appendChild(input);
  }

  private listBlock(title: string, rows: Panels["lists"]["concepts"],
                    kind: Selection["kind"],
                    extra?: (row: typeof rows[number], node: HTMLElement) => void): HTMLElement {
    const block = el("div", "list-block");
    block.appendChild(el("h3", "", title));
    for (const row of rows) {
      const node = el("div", "row");
      node.dataset.id = row.id;
      if (row.highlighted) node.classList.add("highlight");
      if (row.dimmed) node.classList.add("dimmed");
      if (row.struck) node.classList.add("struck");
      node.appendChild(el("span", `badge ${row.badge}`, row.badge));
      node.appendChild(el("span", "title", row.title));
      node.appendChild(el("span", "secondary", row.secondary));
      node.onclick = () => this.callbacks.onSelect({ kind, id: row.id });
      extra?.(row, node);
      block.appendChild(node);
    }
    return block;
  }

  private renderLists(panels: Panels): void {
    const zone = this.zone("lists");
    zone.appendChild(el("h2", "", "Concepts · Motifs · Transfers"));
    zone.appendChild(this.listBlock("Concepts", panels.lists.concepts, "concept"));
    zone.appendChild(this.listBlock("Motifs", panels.lists.motifs, "motif"));
    zone.appendChild(this.listBlock("Transfer candidates", panels.lists.transfers,
      "transfer", (row, node) => {
        if (row.badge === "uncertain") {
          const adopt = el("button", "mini", "adopt");
          adopt.onclick = (ev) => {
            ev.stopPropagation();
            this.callbacks.onTransfer(row.id, "adopt");
          };
          const drop = el("button", "mini", "reject");
          drop.onclick = (ev) => {
            ev.stopPropagation();
            this.callbacks.onTransfer(row.id, "reject");
          };
          node.append(adopt, drop);
        }
      }));
    zone.appendChild(this.listBlock("Plan", panels.lists.plan, "plan",
      (row, node) => {
        if (row.secondary === "assistant_proposed") {
          const pin = el("button", "mini", "promote");
          pin.onclick = (ev) => {
            ev.stopPropagation();
            this.callbacks.onPromote(row.id);
          };
          node.appendChild(pin);
        }
      }));
  }

  private renderGraph(panels: Panels): void {
    const zone = this.zone("graph");
    zone.appendChild(el("h2", "", "Cognition graph"));
    const svgNS = "http://www.w3.org/2000/svg";
    const svg = document.createElementNS(svgNS, "svg");
    const maxX = Math.max(0, ...panels.graph.nodes.map((n) => n.x));
    const maxY = Math.max(0, ...panels.graph.nodes.map((n) => n.y));
    svg.setAttribute("viewBox",
      `0 0 ${maxX * X_SCALE + 2 * PAD} ${maxY * Y_SCALE + 2 * PAD}`);
    svg.setAttribute("class", "graph-canvas");

    const place = (id: string) => {
      const n = panels.graph.nodes.find((n) => n.id === id)!;
      return { cx: PAD + n.x * X_SCALE, cy: PAD + n.y * Y_SCALE };
    };

    for (const e of panels.graph.edges) {
      const a = place(e.from);
      const b = place(e.to);
      const line = document.createElementNS(svgNS, "line");
      line.setAttribute("x1", String(a.cx));
      line.setAttribute("y1", String(a.cy));
      line.setAttribute("x2", String(b.cx));
      line.setAttribute("y2", String(b.cy));
      line.setAttribute("stroke-width", String(e.highlighted ? e.width + 1.5 : e.width));
      line.setAttribute("opacity", String(e.opacity));
      if (e.dash) line.setAttribute("stroke-dasharray", e.dash);
      line.setAttribute("class", `edge ${e.relation}${e.highlighted ? " highlight" : ""}`);
      line.dataset.id = e.id;
      line.addEventListener("click",
        () => this.callbacks.onSelect({ kind: "edge", id: e.id }));
      svg.appendChild(line);
    }

    for (const x of panels.graph.conflicts) {
      const a = panels.graph.nodes.find((n) => n.id === x.a);
      const b = panels.graph.nodes.find((n) => n.id === x.b);
      if (!a || !b) continue;
      const line = document.createElementNS(svgNS, "line");
      line.setAttribute("x1", String(PAD + a.x * X_SCALE));
      line.setAttribute("y1", String(PAD + a.y * Y_SCALE));
      line.setAttribute("x2", String(PAD + b.x * X_SCALE));
      line.setAttribute("y2", String(PAD + b.y * Y_SCALE));
      line.setAttribute("class", "conflict");
      svg.appendChild(line);
    }

    for (const n of panels.graph.nodes) {
      const group = document.createElementNS(svgNS, "g");
      group.setAttribute("class",
        `node ${n.kind}${n.highlighted ? " highlight" : ""}${n.conflicted ? " conflicted" : ""}`);
      group.setAttribute("opacity", String(n.opacity));
      group.dataset.id = n.id;
      const { cx, cy } = place(n.id);
      const circle = document.createElementNS(svgNS, "circle");
      circle.setAttribute("cx", String(cx));
      circle.setAttribute("cy", String(cy));
      circle.setAttribute("r", "16");
      if (n.dashed) circle.setAttribute("stroke-dasharray", "3 2");
      const label = document.createElementNS(svgNS, "text");
      label.setAttribute("x", String(cx));
      label.setAttribute("y", String(cy + 30));
      label.textContent = n.label.length > 18 ? n.label.slice(0, 16) + "…" : n.label;
      group.append(circle, label);
      group.addEventListener("click",
        () => this.callbacks.onSelect({ kind: "concept", id: n.id }));
      svg.appendChild(group);
    }
    zone.appendChild(svg);
  }

  private renderMotifDetail(panels: Panels): void {
    const zone = this.zone("motif-detail");
    zone.appendChild(el("h2", "", "Motif"));
    const detail = panels.motifDetail;
    if (!detail.motif) {
      zone.appendChild(el("p", "empty", "select a motif, concept, or edge"));
      return;
    }
    zone.appendChild(el("h3", "", detail.motif.pattern));
    zone.appendChild(el("div", `badge ${detail.motif.status}`, detail.motif.status));
    zone.appendChild(el("p", "rationale", detail.motif.rationale));
    const bindings = el("ul", "bindings");
    for (const [role, label] of Object.entries(detail.bindingLabels)) {
      bindings.appendChild(el("li", "", `${role}: ${label}`));
    }
    zone.appendChild(bindings);
    if (detail.consequences.length) {
      zone.appendChild(el("h4", "", "Local consequences"));
      const list = el("ul", "consequences");
      for (const c of detail.consequences) list.appendChild(el("li", "", c));
      zone.appendChild(list);
    }
    const history = el("ul", "history");
    for (const line of detail.historyLines) history.appendChild(el("li", "", line));
    zone.appendChild(history);
  }

  private renderControl(panels: Panels): void {
    const zone = this.zone("control");
    zone.appendChild(el("h2", "", "Control"));
    const control = panels.control;
    zone.appendChild(el("h3", "", control.selectionTitle));
    for (const field of control.editorFields) {
      const row = el("div", "field");
      row.appendChild(el("label", "", field.name));
      const input = el("input");
      input.value = field.value;
      input.onkeydown = (ev) => {
        if (ev.key === "Enter") {
          this.callbacks.onFieldEdit(control.selection, field.name, input.value);
        }
      };
      row.appendChild(input);
      zone.appendChild(row);
    }

    const pending = control.pendingPatch;
    if (!pending) {
      this.dropSelections.clear();
      return;
    }
    const box = el("div", "pending-patch");
    box.appendChild(el("h4", "", `Pending revision ${pending.patch.id} ` +
      `(${pending.diff.scope.replace("_", "-")})`));
    pending.opSummaries.forEach((summary, i) => {
      const row = el("div", "op");
      const keep = el("input");
      keep.type = "checkbox";
      keep.checked = !this.dropSelections.has(i);
      keep.onchange = () => {
        if (keep.checked) this.dropSelections.delete(i);
        else this.dropSelections.add(i);
      };
      row.appendChild(keep);
      row.appendChild(el("span", "", summary));
      box.appendChild(row);
    });
    const blast = el("p", "blast",
      `touches ${pending.diff.affected_concepts.length} concepts, ` +
      `${pending.diff.affected_edges.length} edges, ` +
      `${pending.diff.affected_motifs.length} motifs, ` +
      `${pending.diff.downstream_plan_items.length} plan items`);
    box.appendChild(blast);
    const approve = el("button", "approve", "Approve");
    approve.onclick = () => {
      this.callbacks.onApprove(pending.patch.id, [...this.dropSelections].sort());
      this.dropSelections.clear();
    };
    const rejectBtn = el("button", "reject", "Reject");
    rejectBtn.onclick = () => {
      this.callbacks.onReject(pending.patch.id);
      this.dropSelections.clear();
    };
    box.append(approve, rejectBtn);
    zone.appendChild(box);
  }
}
