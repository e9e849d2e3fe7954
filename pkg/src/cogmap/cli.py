"""Command line: replay and inspect archives, run the service.

    cogmap replay <archive> [--verify-digest] [--dump-state PATH] [--until SEQ]
    cogmap inspect <archive> (--events | --motifs | --graph)
    cogmap serve [--port N] [--host H] [--extractor rule|external] [--config FILE]
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import load_config
from .errors import CogmapError
from .session import read_archive, replay, serialize_state, state_digest


def _cmd_replay(args) -> int:
    archive = read_archive(args.archive)
    state = replay(archive, until=args.until, verify_digest=args.verify_digest)
    digest = state_digest(state)
    print(f"replayed {len(archive.events)} events -> digest {digest}")
    if args.verify_digest:
        print(f"digest verified against archive ({archive.algorithm})")
    if args.dump_state:
        with open(args.dump_state, "wb") as f:
            f.write(serialize_state(state))
        print(f"state written to {args.dump_state}")
    return 0


def _cmd_inspect(args) -> int:
    archive = read_archive(args.archive)
    if args.events:
        for e in archive.events:
            print(f"{e.seq:5d}  turn {e.turn:3d}  {e.kind.value}")
        return 0
    state = replay(archive, verify_digest=False)
    if args.motifs:
        for mid in sorted(state.cognitive.motifs):
            m = state.cognitive.motifs[mid]
            print(f"{mid}  {m.pattern:30s} {m.status.value:10s} "
                  f"bindings={json.dumps(m.bindings, sort_keys=True)}")
        for t in sorted(state.cognitive.transfer_candidates, key=lambda t: t.id):
            print(f"{t.id}  transfer:{t.pattern:22s} {t.status:10s} "
                  f"from={t.source_task}")
        return 0
    if args.graph:
        graph = state.cognitive.graph
        for cid in sorted(graph.concepts):
            c = graph.concepts[cid]
            slot = f" slot={c.slot}" if c.slot else ""
            print(f"{cid}  [{c.kind.value:10s}] {c.status.value:10s} "
                  f"conf={c.confidence:.3f}{slot}  {c.label}")
        for eid in sorted(graph.edges):
            e = graph.edges[eid]
            print(f"{eid}  {e.source} -{e.relation.value}-> {e.target} "
                  f"[{e.status.value}] strength={e.strength:.3f}")
        for xid in sorted(graph.conflicts):
            x = graph.conflicts[xid]
            print(f"{xid}  {x.a} <-conflict-> {x.b} [{x.status.value}] {x.description}")
        return 0
    print("choose one of --events / --motifs / --graph", file=sys.stderr)
    return 2


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = load_config(args.config)
    config.extractor.mode = args.extractor
    app = create_app(config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cogmap")
    sub = parser.add_subparsers(dest="command", required=True)

    p_replay = sub.add_parser("replay", help="fold an archive back into a state")
    p_replay.add_argument("archive")
    p_replay.add_argument("--verify-digest", action="store_true")
    p_replay.add_argument("--dump-state", metavar="PATH")
    p_replay.add_argument("--until", type=int, metavar="SEQ")
    p_replay.set_defaults(fn=_cmd_replay)

    p_inspect = sub.add_parser("inspect", help="look inside an archive")
    p_inspect.add_argument("archive")
    group = p_inspect.add_mutually_exclusive_group()
    group.add_argument("--events", action="store_true")
    group.add_argument("--motifs", action="store_true")
    group.add_argument("--graph", action="store_true")
    p_inspect.set_defaults(fn=_cmd_inspect)

    p_serve = sub.add_parser("serve", help="run the HTTP/WebSocket service")
    p_serve.add_argument("--port", type=int, default=8100)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--extractor", choices=["rule", "external"], default="rule")
    p_serve.add_argument("--config", metavar="FILE")
    p_serve.set_defaults(fn=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CogmapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
