"""Layout: layering, determinism, stability, crossing non-worsening."""

import random

import pytest

from cogmap.errors import CogmapError
from cogmap.graph import CognitiveGraph, Status
from cogmap.layout import (
    LayoutSnapshot,
    _count_crossings,
    compute_layout,
    stability_report,
)

from conftest import line_graph, make_concept, make_edge, make_graph, random_digraph
from cogmap.graph import repair_cycles


class TestLayering:
    def test_empty(self):
        snap = compute_layout(CognitiveGraph())
        assert snap.positions == {} and snap.orderings == []

    def test_chain_layers(self):
        snap = compute_layout(line_graph(3))
        assert [snap.positions[f"c{i}"]["layer"] for i in range(3)] == [0, 1, 2]

    def test_longest_path_rank(self):
        g = make_graph(
            [make_concept(c) for c in "abcd"],
            [make_edge("e1", "a", "b"), make_edge("e2", "b", "d"),
             make_edge("e3", "a", "d"), make_edge("e4", "a", "c")],
        )
        snap = compute_layout(g)
        assert snap.positions["a"]["layer"] == 0
        assert snap.positions["b"]["layer"] == 1
        assert snap.positions["c"]["layer"] == 1
        assert snap.positions["d"]["layer"] == 2  # longest path a->b->d

    def test_edges_point_downward(self):
        rng = random.Random(2)
        for _ in range(80):
            g = random_digraph(rng, max_nodes=8)
            repair_cycles(g)
            snap = compute_layout(g)
            for e in g.backbone_edges():
                assert snap.positions[e.source]["layer"] < snap.positions[e.target]["layer"]

    def test_cancelled_excluded_deprecated_kept(self):
        g = make_graph([
            make_concept("a"),
            make_concept("b", status="deprecated"),
            make_concept("c", status="cancelled"),
        ])
        snap = compute_layout(g)
        assert set(snap.positions) == {"a", "b"}

    def test_cycle_rejected(self):
        g = make_graph([make_concept(c) for c in "ab"],
                       [make_edge("e1", "a", "b"), make_edge("e2", "b", "a")])
        with pytest.raises(CogmapError) as err:
            compute_layout(g)
        assert err.value.code == "cyclic-backbone"

    def test_x_strictly_increases_along_orderings(self):
        rng = random.Random(4)
        for _ in range(80):
            g = random_digraph(rng, max_nodes=9)
            repair_cycles(g)
            snap = compute_layout(g)
            for lane in snap.orderings:
                xs = [snap.positions[cid]["x"] for cid in lane]
                assert all(b > a for a, b in zip(xs, xs[1:]))


class TestDeterminism:
    def test_identical_inputs_identical_snapshots(self):
        rng = random.Random(6)
        for _ in range(40):
            g = random_digraph(rng, max_nodes=8)
            repair_cycles(g)
            first = compute_layout(g)
            again = compute_layout(g)
            assert first.to_dict() == again.to_dict()

    def test_seeded_recompute_matches(self):
        g = line_graph(5)
        base = compute_layout(g)
        assert compute_layout(g, base).to_dict() == compute_layout(g, base).to_dict()


class TestStability:
    def test_identical_snapshots_perfect(self):
        snap = compute_layout(line_graph(4))
        report = stability_report(snap, snap, touched=set())
        assert report == {"order_preserved": 1.0, "layer_preserved": 1.0}

    def test_leaf_addition_keeps_everything(self):
        g = line_graph(3)
        previous = compute_layout(g)
        g.concepts["c3"] = make_concept("c3", label="new leaf")
        g.edges["e9"] = make_edge("e9", "c2", "c3")
        current = compute_layout(g, previous)
        report = stability_report(previous, current, touched={"c3"})
        assert report == {"order_preserved": 1.0, "layer_preserved": 1.0}
        assert current.positions["c3"]["layer"] == 3
        for cid in ("c0", "c1", "c2"):
            assert current.positions[cid]["layer"] == previous.positions[cid]["layer"]

    def test_adversarial_layer_move_flagged(self):
        previous = LayoutSnapshot(
            positions={"a": {"layer": 0, "x": 0.0}, "b": {"layer": 1, "x": 0.0}},
            orderings=[["a"], ["b"]])
        current = LayoutSnapshot(
            positions={"a": {"layer": 1, "x": 0.0}, "b": {"layer": 1, "x": 1.0}},
            orderings=[[], ["a", "b"]])
        report = stability_report(previous, current, touched=set())
        assert report["layer_preserved"] < 1.0

    def test_untouched_relative_order_survives_insertions(self):
        rng = random.Random(8)
        for _ in range(60):
            g = random_digraph(rng, max_nodes=7, edge_prob=0.3)
            repair_cycles(g)
            previous = compute_layout(g)
            # add a fresh source pointing somewhere random
            target = rng.choice(sorted(g.concepts))
            g.concepts["z9"] = make_concept("z9", label="fresh angle")
            g.edges["ez9"] = make_edge("ez9", "z9", target)
            touched = {"z9", target} | g.descendants(target)
            current = compute_layout(g, previous)
            report = stability_report(previous, current, touched)
            assert report == {"order_preserved": 1.0, "layer_preserved": 1.0}


class TestCrossings:
    def test_sweeps_never_worse_than_id_order(self):
        rng = random.Random(10)
        for _ in range(80):
            g = random_digraph(rng, max_nodes=9, edge_prob=0.4)
            repair_cycles(g)
            snap = compute_layout(g)
            live = {c.id for c in g.concepts.values() if c.status != Status.CANCELLED}
            layer = {cid: snap.positions[cid]["layer"] for cid in live}
            depth = max(layer.values()) + 1 if layer else 0
            id_order = [sorted([cid for cid in live if layer[cid] == li])
                        for li in range(depth)]
            edges = [(e.source, e.target) for e in g.backbone_edges()]
            assert _count_crossings(snap.orderings, layer, edges) <= \
                _count_crossings(id_order, layer, edges)
