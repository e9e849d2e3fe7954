/**
 * Session client: HTTP actions plus the server-push subscription.
 *
 * The client is deliberately thin. Every semantic operation is one POST; the
 * UI applies nothing optimistically and re-renders only from pushed
 * snapshots, so the server stays the single source of truth. Push messages
 * are applied in seq order; anything arriving out of order is buffered until
 * the gap closes, and stale messages are dropped.
 */

import type { EditIntent, PushMessage, SessionStateWire, LayoutWire, Verdict } from "./types.js";

export interface PushSocket {
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => PushSocket;

export interface ClientOptions {
  baseUrl: string;
  fetchFn?: typeof fetch;
  socketFactory?: SocketFactory;
}

export class RequestError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
  }
}

export class SessionClient {
  readonly baseUrl: string;
  sessionId = "";
  latest: PushMessage | null = null;
  connected = false;

  private fetchFn: typeof fetch;
  private socketFactory: SocketFactory | null;
  private socket: PushSocket | null = null;
  private buffered = new Map<number, PushMessage>();
  private listeners: Array<(msg: PushMessage) => void> = [];
  private closeListeners: Array<() => void> = [];

  constructor(options: ClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/$/, "");
    this.fetchFn = options.fetchFn ?? fetch.bind(globalThis);
    // text frames only, so the browser socket narrows to PushSocket safely
    this.socketFactory = options.socketFactory ??
      (typeof WebSocket !== "undefined"
        ? (url) => new WebSocket(url) as unknown as PushSocket
        : null);
  }

  onUpdate(fn: (msg: PushMessage) => void): void {
    this.listeners.push(fn);
  }

  onDisconnect(fn: () => void): void {
    this.closeListeners.push(fn);
  }

  async createSession(taskId: string): Promise<string> {
    const body = await this.post("/sessions", { task_id: taskId });
    this.sessionId = body.session_id as string;
    return this.sessionId;
  }

  attach(sessionId: string): void {
    this.sessionId = sessionId;
  }

  /** Open the push channel; resolves after the hello snapshot arrives. */
  subscribe(): Promise<PushMessage> {
    if (!this.socketFactory) {
      return Promise.reject(new Error("no socket factory available"));
    }
    const wsBase = this.baseUrl.replace(/^http/, "ws");
    this.socket = this.socketFactory(`${wsBase}/sessions/${this.sessionId}/ws`);
    this.connected = true;
    return new Promise((resolve) => {
      let first = true;
      this.socket!.onmessage = (ev) => {
        const msg = JSON.parse(ev.data) as PushMessage;
        this.ingest(msg);
        if (first) {
          first = false;
          resolve(msg);
        }
      };
      this.socket!.onclose = () => {
        this.connected = false;
        for (const fn of this.closeListeners) fn();
      };
    });
  }

  close(): void {
    this.socket?.close();
    this.connected = false;
  }

  /** Apply a push message, holding back anything out of order. */
  ingest(msg: PushMessage): void {
    const current = this.latest?.seq ?? -1;
    if (msg.seq <= current) return; // stale
    this.buffered.set(msg.seq, msg);
    // release in ascending order; snapshots are cumulative, so the next
    // applicable one is simply the smallest buffered seq above current
    let advanced = true;
    while (advanced) {
      advanced = false;
      const pending = [...this.buffered.keys()].sort((a, b) => a - b);
      for (const seq of pending) {
        const lastSeq = this.latest?.seq ?? -1;
        const candidate = this.buffered.get(seq)!;
        if (seq <= lastSeq) {
          this.buffered.delete(seq);
          continue;
        }
        // contiguous with the last applied snapshot, counting its own events
        const covers = candidate.events.length > 0
          ? Math.min(...candidate.events.map((e) => e.seq))
          : seq;
        if (lastSeq === -1 || covers <= lastSeq + 1) {
          this.latest = candidate;
          this.buffered.delete(seq);
          for (const fn of this.listeners) fn(candidate);
          advanced = true;
        }
      }
    }
  }

  // -- actions (one POST each; no local mutation) --------------------------

  async sendUtterance(text: string, speaker: "user" | "assistant" = "user"): Promise<void> {
    await this.post(`/sessions/${this.sessionId}/turns`, { text, speaker });
  }

  async startTask(taskId: string): Promise<void> {
    await this.post(`/sessions/${this.sessionId}/tasks`, { task_id: taskId });
  }

  async endTask(): Promise<void> {
    await this.post(`/sessions/${this.sessionId}/tasks`, { action: "end" });
  }

  async submitEdit(intent: EditIntent): Promise<void> {
    await this.post(`/sessions/${this.sessionId}/edits`, intent as Record<string, unknown>);
  }

  async submitEditBatch(intents: EditIntent[]): Promise<void> {
    await this.post(`/sessions/${this.sessionId}/edits`, { edits: intents });
  }

  async editMotif(motifId: string, action: "confirm" | "weaken" | "deprecate" | "cancel"): Promise<void> {
    await this.post(`/sessions/${this.sessionId}/motifs/${motifId}`, { action });
  }

  async respondProbe(probeId: string, verdict: Verdict, detail?: string): Promise<void> {
    if (verdict === "refine" && !(detail ?? "").trim()) {
      throw new RequestError(0, "bad-response", "refine requires detail");
    }
    const body: Record<string, unknown> = { verdict };
    if (detail !== undefined) body.detail = detail;
    await this.post(`/sessions/${this.sessionId}/probes/${probeId}/response`, body);
  }

  async approvePatch(patchId: string, dropOps?: number[]): Promise<void> {
    await this.post(`/sessions/${this.sessionId}/patches/${patchId}/approve`,
      dropOps?.length ? { drop_ops: dropOps } : {});
  }

  async rejectPatch(patchId: string): Promise<void> {
    await this.post(`/sessions/${this.sessionId}/patches/${patchId}/reject`, {});
  }

  async promote(itemId: string): Promise<void> {
    await this.post(`/sessions/${this.sessionId}/promote`, { item: itemId });
  }

  async uptakeTransfer(candidateId: string, action: "adopt" | "reject",
                       bindings?: Record<string, string>): Promise<void> {
    const body: Record<string, unknown> = { action };
    if (bindings) body.bindings = bindings;
    await this.post(`/sessions/${this.sessionId}/transfers/${candidateId}`, body);
  }

  async fetchState(): Promise<{ state: SessionStateWire; digest: string; seq: number }> {
    const res = await this.fetchFn(`${this.baseUrl}/sessions/${this.sessionId}/state`);
    return res.json();
  }

  async fetchLayout(): Promise<LayoutWire> {
    const res = await this.fetchFn(`${this.baseUrl}/sessions/${this.sessionId}/layout`);
    return res.json();
  }

  private async post(path: string, body: Record<string, unknown>): Promise<Record<string, unknown>> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) {
      let code = "request-failed";
      let message = `${res.status}`;
      try {
        const detail = (await res.json()).detail;
        code = detail?.code ?? code;
        message = detail?.message ?? message;
      } catch { /* non-JSON error body */ }
      throw new RequestError(res.status, code, message);
    }
    return res.json();
  }
}
