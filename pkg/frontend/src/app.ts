/**
 * Wiring: one SessionClient, one ConsoleView, one selection. Every pushed
 * snapshot re-renders all five panels; every user action round-trips and the
 * UI waits for the push — there is no optimistic state to diverge.
 */

import { SessionClient, RequestError } from "./client.js";
import { buildPanels, NO_SELECTION, Selection } from "./panels.js";
import { ConsoleView } from "./render.js";
import type { EditIntent, EventWire, ItemStatus, PushMessage, Relation, Verdict } from "./types.js";

export class App {
  private selection: Selection = NO_SELECTION;
  private transcript: EventWire[] = [];
  private banner: string | null = null;
  private view: ConsoleView;

  constructor(private client: SessionClient, root: HTMLElement) {
    this.view = new ConsoleView(root, {
      onSelect: (sel) => {
        this.selection = this.selection.id === sel.id ? NO_SELECTION : sel;
        this.renderLatest();
      },
      onSend: (text) => this.guard(() => this.client.sendUtterance(text)),
      onProbeVerdict: (probeId, verdict: Verdict, detail) =>
        this.guard(() => this.client.respondProbe(probeId, verdict, detail)),
      onApprove: (patchId, dropOps) =>
        this.guard(() => this.client.approvePatch(patchId, dropOps)),
      onReject: (patchId) => this.guard(() => this.client.rejectPatch(patchId)),
      onFieldEdit: (sel, field, value) => this.applyFieldEdit(sel, field, value),
      onPromote: (itemId) => this.guard(() => this.client.promote(itemId)),
      onTransfer: (candidateId, action) =>
        this.guard(() => this.client.uptakeTransfer(candidateId, action)),
    });
    client.onUpdate((msg) => this.onPush(msg));
    client.onDisconnect(() => {
      this.banner = "connection lost — read-only";
      this.renderLatest();
    });
  }

  async start(taskId: string): Promise<void> {
    if (!this.client.sessionId) {
      await this.client.createSession(taskId);
    }
    await this.client.subscribe();
  }

  private onPush(msg: PushMessage): void {
    for (const event of msg.events) {
      if (event.kind === "utterance") this.transcript.push(event);
    }
    this.banner = null;
    this.renderLatest();
  }

  renderLatest(): void {
    const msg = this.client.latest;
    if (!msg) return;
    const panels = buildPanels(msg.state, msg.layout, this.transcript,
      this.selection, this.client.connected);
    this.view.render(panels, this.banner);
  }

  /** Field edits map 1:1 onto revise payloads; the server decides the rest. */
  private applyFieldEdit(sel: Selection, field: string, value: string): void {
    let intent: EditIntent | null = null;
    if (sel.kind === "concept") {
      if (field === "confidence") {
        intent = { kind: "confidence", target: sel.id, value: Number(value) };
      } else if (field === "label") {
        intent = { kind: "concept", target: sel.id, mode: "replace", label: value };
      } else if (field === "status") {
        intent = { kind: "status", target: sel.id, status: value as ItemStatus };
      }
    } else if (sel.kind === "edge") {
      if (field === "relation") {
        intent = { kind: "structure", action: "retype", edge: sel.id,
                   relation: value as Relation };
      } else if (field === "status" && value === "cancelled") {
        intent = { kind: "structure", action: "cancel", edge: sel.id };
      }
    } else if (sel.kind === "motif" && field === "status") {
      this.guard(() => this.client.editMotif(sel.id,
        value as "confirm" | "weaken" | "deprecate" | "cancel"));
      return;
    }
    if (intent) {
      const payload = intent;
      this.guard(() => this.client.submitEdit(payload));
    }
  }

  private guard(action: () => Promise<unknown>): void {
    action().catch((err) => {
      this.banner = err instanceof RequestError
        ? `${err.code}: ${err.message}`
        : String(err);
      this.renderLatest();
    });
  }
}
