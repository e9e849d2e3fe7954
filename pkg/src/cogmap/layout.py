"""Deterministic layered drawing of the backbone with cross-revision
position stability.

Layers come from longest-path ranking; horizontal order from two barycenter
sweeps (downward then upward) seeded with the previous snapshot's orderings;
x-coordinates from a single-direction Brandes–Köpf style pass (median
predecessor alignment into blocks, then leftmost compaction at unit
spacing). Stability is a hard constraint, not a heuristic outcome: nodes
present in the previous snapshot keep their relative in-layer order, and the
sweeps only slot moved or new nodes around that fixed subsequence — so
recurring structure stays visually comparable from turn to turn.

Cancelled concepts are excluded; deprecated ones stay (the client styles
them). Crossing reduction never ends worse than its starting arrangement:
the best of the initial, one-sweep, and two-sweep orderings wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import reject
from .graph import CognitiveGraph, Status


@dataclass
class LayoutSnapshot:
    positions: dict[str, dict] = field(default_factory=dict)  # id -> {layer, x}
    orderings: list[list[str]] = field(default_factory=list)  # per-layer id sequences
    basis_turn: int = 0

    def layer_of(self, cid: str) -> Optional[int]:
        p = self.positions.get(cid)
        return None if p is None else p["layer"]

    def to_dict(self) -> dict:
        return {
            "positions": {k: dict(v) for k, v in sorted(self.positions.items())},
            "orderings": [list(layer) for layer in self.orderings],
            "basis_turn": self.basis_turn,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LayoutSnapshot":
        return cls(positions={k: dict(v) for k, v in d.get("positions", {}).items()},
                   orderings=[list(x) for x in d.get("orderings", [])],
                   basis_turn=d.get("basis_turn", 0))


def _layer_assignment(graph: CognitiveGraph) -> tuple[dict[str, int], list[tuple[str, str]]]:
    """Longest-path layer per live concept; raises on a cyclic backbone."""
    live = {c.id for c in graph.concepts.values() if c.status != Status.CANCELLED}
    edges = [(e.source, e.target) for e in graph.backbone_edges()
             if e.source in live and e.target in live]
    indegree = {cid: 0 for cid in live}
    adj: dict[str, list[str]] = {cid: [] for cid in live}
    for s, t in edges:
        adj[s].append(t)
        indegree[t] += 1
    order: list[str] = []
    frontier = sorted(cid for cid in live if indegree[cid] == 0)
    layer = {cid: 0 for cid in live}
    while frontier:
        cid = frontier.pop(0)
        order.append(cid)
        for nb in sorted(adj[cid]):
            layer[nb] = max(layer[nb], layer[cid] + 1)
            indegree[nb] -= 1
            if indegree[nb] == 0:
                frontier.append(nb)
        frontier.sort()
    if len(order) != len(live):
        raise reject("cyclic-backbone", "layout requires an acyclic backbone")
    return layer, edges


def _count_crossings(orderings: list[list[str]], layer: dict[str, int],
                     edges: list[tuple[str, str]]) -> int:
    """Crossings between edge pairs joining the same pair of layers."""
    pos = {cid: i for lane in orderings for i, cid in enumerate(lane)}
    by_span: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for s, t in edges:
        by_span.setdefault((layer[s], layer[t]), []).append((pos[s], pos[t]))
    total = 0
    for pairs in by_span.values():
        for i in range(len(pairs)):
            for j in range(i + 1, len(pairs)):
                (a, b), (c, d) = pairs[i], pairs[j]
                if (a - c) * (b - d) < 0:
                    total += 1
    return total


def _constrained_order(layer_ids: list[str], bary: dict[str, float],
                       fixed_groups: dict[str, tuple[int, int]]) -> list[str]:
    """Order one layer by barycenter while preserving each fixed group's
    internal sequence (queue merge: repeatedly take the queue head with the
    smallest key)."""
    queues: dict[object, list[str]] = {}
    for cid in layer_ids:
        group = fixed_groups.get(cid)
        key = ("fixed", group[0]) if group is not None else ("free", cid)
        queues.setdefault(key, []).append(cid)
    for key, members in queues.items():
        if key[0] == "fixed":
            members.sort(key=lambda cid: fixed_groups[cid][1])
    out: list[str] = []
    while any(queues.values()):
        best_key = None
        best_rank: tuple = ()
        for key in sorted(queues, key=str):
            members = queues[key]
            if not members:
                continue
            head = members[0]
            rank = (bary[head], head)
            if best_key is None or rank < best_rank:
                best_key, best_rank = key, rank
        out.append(queues[best_key].pop(0))
    return out


def _sweep(orderings: list[list[str]], layer: dict[str, int],
           neighbors: dict[str, list[str]], downward: bool,
           fixed_groups: dict[str, tuple[int, int]]) -> list[list[str]]:
    result = [list(x) for x in orderings]
    lanes = range(len(result)) if downward else range(len(result) - 1, -1, -1)
    for li in lanes:
        lane = result[li]
        norm = {}
        for idx, lst in enumerate(result):
            for i, cid in enumerate(lst):
                norm[cid] = (i + 0.5) / len(lst)
        bary = {}
        for cid in lane:
            ns = neighbors.get(cid, [])
            bary[cid] = (sum(norm[n] for n in ns) / len(ns)) if ns else norm[cid]
        result[li] = _constrained_order(lane, bary, fixed_groups)
    return result


def compute_layout(graph: CognitiveGraph,
                   previous: Optional[LayoutSnapshot] = None) -> LayoutSnapshot:
    """Layered positions for every live concept; deterministic, and stable
    against the previous snapshot."""
    layer, edges = _layer_assignment(graph)
    if not layer:
        return LayoutSnapshot(positions={}, orderings=[], basis_turn=graph.turn_counter)
    depth = max(layer.values()) + 1
    lanes: list[list[str]] = [[] for _ in range(depth)]

    # previous relative order is a hard constraint: nodes that shared a layer
    # before keep their order; everything else merges in by barycenter
    fixed_groups: dict[str, tuple[int, int]] = {}
    if previous is not None:
        for g, lane in enumerate(previous.orderings):
            for i, cid in enumerate(lane):
                fixed_groups[cid] = (g, i)

    for li in range(depth):
        members = sorted(cid for cid in layer if layer[cid] == li)
        if previous is not None:
            held = [cid for cid in members if cid in fixed_groups]
            held.sort(key=lambda cid: fixed_groups[cid])
            fresh = [cid for cid in members if cid not in fixed_groups]
            lanes[li] = held + fresh
        else:
            lanes[li] = members

    preds: dict[str, list[str]] = {cid: [] for cid in layer}
    succs: dict[str, list[str]] = {cid: [] for cid in layer}
    for s, t in edges:
        preds[t].append(s)
        succs[s].append(t)

    candidates = [lanes]
    swept_down = _sweep(candidates[-1], layer, preds, True, fixed_groups)
    candidates.append(swept_down)
    swept_up = _sweep(candidates[-1], layer, succs, False, fixed_groups)
    candidates.append(swept_up)

    best = min(candidates, key=lambda c: _count_crossings(c, layer, edges))
    xs = _assign_x(best, layer, preds)
    positions = {cid: {"layer": layer[cid], "x": xs[cid]} for cid in layer}
    return LayoutSnapshot(positions=positions, orderings=best,
                          basis_turn=graph.turn_counter)


def _assign_x(orderings: list[list[str]], layer: dict[str, int],
              preds: dict[str, list[str]]) -> dict[str, float]:
    """One-directional block alignment and compaction, unit spacing.

    Each node tries to align vertically with its median predecessor; aligned
    runs form blocks sharing one x, then blocks are compacted leftmost while
    keeping >= 1.0 separation inside every layer, so x strictly increases
    along each ordering.
    """
    pos = {cid: i for lane in orderings for i, cid in enumerate(lane)}
    root = {cid: cid for lane in orderings for cid in lane}
    align = {cid: cid for lane in orderings for cid in lane}

    for lane in orderings[1:]:
        r = -1
        for v in lane:
            # adjacent-layer predecessors only: without dummy nodes an edge
            # may span layers, and aligning across spans can knot blocks
            ps = sorted((u for u in preds[v] if layer[u] == layer[v] - 1),
                        key=lambda u: pos[u])
            if not ps:
                continue
            for mi in sorted({(len(ps) - 1) // 2, len(ps) // 2}):
                u = ps[mi]
                if align[v] == v and r < pos[u]:
                    align[u] = v
                    root[v] = root[u]
                    align[v] = root[v]
                    r = pos[u]
    x: dict[str, float] = {}

    def place_block(v: str) -> None:
        if v in x:
            return
        x[v] = 0.0
        w = v
        while True:
            lane = orderings[layer[w]]
            i = pos[w]
            if i > 0:
                left = lane[i - 1]
                place_block(root[left])
                x[v] = max(x[v], x[root[left]] + 1.0)
            w = align[w]
            if w == v:
                break

    for lane in orderings:
        for cid in lane:
            if root[cid] == cid:
                place_block(cid)
    final = {cid: x[root[cid]] for lane in orderings for cid in lane}
    # hard guarantee: x strictly increases along every lane
    for lane in orderings:
        running = float("-inf")
        for cid in lane:
            if final[cid] <= running:
                final[cid] = running + 1.0
            running = final[cid]
    return final


def stability_report(previous: LayoutSnapshot, current: LayoutSnapshot,
                     touched: set[str]) -> dict:
    """How well untouched nodes held their layer and in-layer order.

    Both fractions are 1.0 under the stability contract; computed over nodes
    present in both snapshots and not touched by the latest patch.
    """
    shared = [cid for cid in previous.positions
              if cid in current.positions and cid not in touched]
    if not shared:
        return {"order_preserved": 1.0, "layer_preserved": 1.0}

    kept_layer = sum(1 for cid in shared
                     if previous.positions[cid]["layer"] == current.positions[cid]["layer"])
    layer_preserved = kept_layer / len(shared)

    prev_rank = {cid: i for lane in previous.orderings for i, cid in enumerate(lane)}
    cur_rank = {cid: i for lane in current.orderings for i, cid in enumerate(lane)}
    pairs = 0
    kept = 0
    for i in range(len(shared)):
        for j in range(i + 1, len(shared)):
            u, v = shared[i], shared[j]
            if previous.positions[u]["layer"] != previous.positions[v]["layer"]:
                continue
            if current.positions[u]["layer"] != current.positions[v]["layer"]:
                continue
            pairs += 1
            before = prev_rank[u] < prev_rank[v]
            after = cur_rank[u] < cur_rank[v]
            if before == after:
                kept += 1
    order_preserved = kept / pairs if pairs else 1.0
    return {"order_preserved": order_preserved, "layer_preserved": layer_preserved}
