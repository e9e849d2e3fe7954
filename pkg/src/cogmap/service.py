"""HTTP + WebSocket service hosting many independent sessions.

Endpoints (all JSON):

    POST /sessions                      {task_id?, config?} -> {session_id}
    POST /sessions/{id}/turns           {speaker?, text}
    POST /sessions/{id}/edits           {edits: [...]} or one revise payload
    POST /sessions/{id}/motifs/{mid}    {action}
    POST /sessions/{id}/probes/{pid}/response   {verdict, detail?}
    POST /sessions/{id}/patches/{pid}/approve   {drop_ops?}
    POST /sessions/{id}/patches/{pid}/reject
    POST /sessions/{id}/promote         {item}
    POST /sessions/{id}/transfers/{tid} {action, bindings?}
    GET  /sessions/{id}/state
    GET  /sessions/{id}/layout
    GET  /sessions/{id}/events?since=seq
    GET  /sessions/{id}/archive
    WS   /sessions/{id}/ws

After every processed input the push channel broadcasts
{seq, state, layout, events, surfaced_patch, probe, digest}; the client is
expected to render purely from these snapshots.
"""

from __future__ import annotations

import uuid
from typing import Optional

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse

from .config import RuntimeConfig
from .errors import CogmapError
from .extraction import ExternalExtractor
from .runtime import SessionRuntime, TurnOutcome
from .session import state_digest

_ERROR_STATUS = {
    "unknown-target": 404,
    "unknown-probe": 404,
    "unknown-focus": 404,
    "duplicate-answer": 409,
    "review-in-progress": 409,
    "approval-required": 409,
    "probe-budget-exhausted": 429,
    "sequence-violation": 409,
    "promotion-gate": 403,
}


class SessionHub:
    """In-memory registry of live sessions and their push subscribers."""

    def __init__(self, config: Optional[RuntimeConfig] = None):
        self.config = config or RuntimeConfig()
        self.sessions: dict[str, SessionRuntime] = {}
        self.subscribers: dict[str, list] = {}

    def create(self, task_id: str = "", config: Optional[RuntimeConfig] = None) -> str:
        session_id = uuid.uuid4().hex[:12]
        cfg = config or self.config
        extractor = None
        if cfg.extractor.mode == "external" and cfg.extractor.endpoint:
            extractor = ExternalExtractor(cfg.extractor)
        runtime = SessionRuntime(config=cfg, extractor=extractor, session_id=session_id)
        if task_id:
            runtime.start_task(task_id)
        self.sessions[session_id] = runtime
        self.subscribers[session_id] = []
        return session_id

    def get(self, session_id: str) -> SessionRuntime:
        runtime = self.sessions.get(session_id)
        if runtime is None:
            raise HTTPException(status_code=404, detail="unknown-session")
        return runtime

    def snapshot_message(self, session_id: str, outcome: Optional[TurnOutcome]) -> dict:
        runtime = self.get(session_id)
        surfaced = None
        if runtime.state.pending_review is not None:
            patch, diff = runtime.state.pending_review
            surfaced = {"patch": patch.to_dict(), "diff": diff.to_dict()}
        return {
            "seq": runtime.log.last_seq(),
            "state": runtime.state.to_dict(),
            "layout": runtime.last_layout.to_dict() if runtime.last_layout else None,
            "events": [e.to_dict() for e in (outcome.events if outcome else [])],
            "surfaced_patch": surfaced,
            "probe": outcome.probe if outcome else None,
            "digest": state_digest(runtime.state),
        }

    async def broadcast(self, session_id: str, message: dict) -> None:
        dead = []
        for ws in self.subscribers.get(session_id, []):
            try:
                await ws.send_json(message)
            except Exception:
                dead.append(ws)
        for ws in dead:
            self.subscribers[session_id].remove(ws)


def create_app(config: Optional[RuntimeConfig] = None) -> FastAPI:
    app = FastAPI(title="cogmap session service")
    # the console is typically served from another local port
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    hub = SessionHub(config)
    app.state.hub = hub

    async def run(session_id: str, fn) -> dict:
        runtime = hub.get(session_id)
        try:
            outcome = fn(runtime)  # synchronous, so per-session serialization holds
        except CogmapError as exc:
            raise HTTPException(status_code=_ERROR_STATUS.get(exc.code, 400),
                                detail={"code": exc.code, "message": str(exc)})
        message = hub.snapshot_message(session_id, outcome)
        await hub.broadcast(session_id, message)
        return message

    @app.post("/sessions")
    async def create_session(body: dict | None = None):
        body = body or {}
        cfg = RuntimeConfig.from_dict(body["config"]) if body.get("config") else None
        session_id = hub.create(task_id=body.get("task_id", ""), config=cfg)
        return {"session_id": session_id,
                "digest": state_digest(hub.get(session_id).state)}

    @app.post("/sessions/{session_id}/turns")
    async def post_turn(session_id: str, body: dict):
        speaker = body.get("speaker", "user")
        if speaker == "assistant":
            return await run(session_id, lambda r: r.assistant_turn(body["text"]))
        return await run(session_id, lambda r: r.user_turn(body["text"]))

    @app.post("/sessions/{session_id}/tasks")
    async def post_task(session_id: str, body: dict):
        if body.get("action") == "end":
            return await run(session_id, lambda r: r.end_task())
        return await run(session_id, lambda r: r.start_task(body["task_id"]))

    @app.post("/sessions/{session_id}/edits")
    async def post_edits(session_id: str, body: dict):
        edits = body.get("edits") or [body]
        return await run(session_id, lambda r: r.edit_batch(edits))

    @app.post("/sessions/{session_id}/motifs/{motif_id}")
    async def post_motif_edit(session_id: str, motif_id: str, body: dict):
        return await run(session_id, lambda r: r.motif_edit(motif_id, body["action"]))

    @app.post("/sessions/{session_id}/probes/{probe_id}/response")
    async def post_probe_response(session_id: str, probe_id: str, body: dict):
        return await run(session_id, lambda r: r.answer_probe(
            probe_id, body["verdict"], body.get("detail")))

    @app.post("/sessions/{session_id}/patches/{patch_id}/approve")
    async def post_approve(session_id: str, patch_id: str, body: dict | None = None):
        drop = (body or {}).get("drop_ops")
        return await run(session_id, lambda r: r.approve_patch(patch_id, drop_ops=drop))

    @app.post("/sessions/{session_id}/patches/{patch_id}/reject")
    async def post_reject(session_id: str, patch_id: str):
        return await run(session_id, lambda r: r.reject_patch(patch_id))

    @app.post("/sessions/{session_id}/promote")
    async def post_promote(session_id: str, body: dict):
        return await run(session_id, lambda r: r.promote(body["item"]))

    @app.post("/sessions/{session_id}/transfers/{candidate_id}")
    async def post_transfer(session_id: str, candidate_id: str, body: dict):
        return await run(session_id, lambda r: r.uptake_transfer(
            candidate_id, body.get("action", "adopt"), body.get("bindings")))

    @app.get("/sessions/{session_id}/state")
    async def get_state(session_id: str):
        runtime = hub.get(session_id)
        return {"state": runtime.state.to_dict(), "digest": state_digest(runtime.state),
                "seq": runtime.log.last_seq()}

    @app.get("/sessions/{session_id}/layout")
    async def get_layout(session_id: str):
        runtime = hub.get(session_id)
        return runtime.last_layout.to_dict() if runtime.last_layout else \
            {"positions": {}, "orderings": [], "basis_turn": 0}

    @app.get("/sessions/{session_id}/events")
    async def get_events(session_id: str, since: int = 0):
        runtime = hub.get(session_id)
        return {"events": [e.to_dict() for e in runtime.log.since(since)]}

    @app.get("/sessions/{session_id}/archive", response_class=PlainTextResponse)
    async def get_archive(session_id: str):
        runtime = hub.get(session_id)
        return "\n".join(runtime.to_archive().to_lines()) + "\n"

    @app.websocket("/sessions/{session_id}/ws")
    async def websocket_endpoint(websocket: WebSocket, session_id: str):
        if session_id not in hub.sessions:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        hub.subscribers[session_id].append(websocket)
        await websocket.send_json(hub.snapshot_message(session_id, None))
        try:
            while True:
                await websocket.receive_text()  # pings only; channel is server->client
        except WebSocketDisconnect:
            if websocket in hub.subscribers.get(session_id, []):
                hub.subscribers[session_id].remove(websocket)

    return app
