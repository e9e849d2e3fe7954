"""Event log, canonical serialization, archives, replay determinism."""

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogmap.config import RuntimeConfig
from cogmap.errors import CogmapError
from cogmap.runtime import SessionRuntime
from cogmap.session import (
    EventKind,
    EventLog,
    EventRecord,
    append_event,
    deserialize_state,
    parse_archive,
    read_archive,
    replay,
    serialize_state,
    state_digest,
    write_archive,
)


def ev(seq, kind="task_start", payload=None, turn=0):
    return EventRecord(seq=seq, turn=turn, timestamp=float(seq),
                       kind=EventKind(kind), payload=payload or {"task_id": "t"})


class TestAppendEvent:
    def test_first_event(self):
        log = append_event(EventLog(), ev(1))
        assert len(log.events) == 1

    def test_gap_rejected(self):
        log = append_event(EventLog(), ev(1))
        with pytest.raises(CogmapError) as err:
            append_event(log, ev(3))
        assert err.value.code == "sequence-violation"

    def test_duplicate_rejected(self):
        log = append_event(EventLog(), ev(1))
        with pytest.raises(CogmapError) as err:
            append_event(log, ev(1))
        assert err.value.code == "sequence-violation"

    def test_continues_past_replayed_archive(self):
        runtime = SessionRuntime(session_id="s", clock=lambda: 0.0)
        runtime.start_task("t1")
        runtime.user_turn("I prefer budget hotels")
        archive = runtime.to_archive()
        resumed = SessionRuntime(config=archive.config, session_id="s")
        resumed.replay_events(archive.events)
        out = resumed.user_turn("I want quiet places")
        assert out.events[0].seq == archive.events[-1].seq + 1


class TestSerialization:
    def test_empty_state_round_trip(self):
        from cogmap.revision import SessionState
        state = SessionState()
        data = serialize_state(state)
        assert deserialize_state(data) == state
        assert serialize_state(deserialize_state(data)) == data

    def test_keys_sorted_and_ascii(self):
        from cogmap.revision import SessionState
        data = serialize_state(SessionState())
        parsed = json.loads(data)
        assert list(parsed) == sorted(parsed)
        data.decode("ascii")

    def test_truncated_bytes_parse_failure(self):
        from cogmap.revision import SessionState
        data = serialize_state(SessionState())[:-5]
        with pytest.raises(CogmapError) as err:
            deserialize_state(data)
        assert err.value.code == "parse-failure"
        assert "byte offset" in str(err.value)

    def test_round_trip_after_random_session(self):
        rng = random.Random(19)
        sentences = [
            "I prefer budget hotels",
            "I think the museum is closed but the park stays open",
            "We can't spend more than $300",
            "My partner likes quiet cabins near water",
            "I'd pay more for verified reviews",
        ]
        for trial in range(20):
            runtime = SessionRuntime(session_id=f"s{trial}", clock=lambda: 0.0)
            runtime.start_task("t1")
            for _ in range(rng.randint(1, 5)):
                runtime.user_turn(rng.choice(sentences))
            data = serialize_state(runtime.state)
            restored = deserialize_state(data)
            assert serialize_state(restored) == data
            assert restored == runtime.state


class TestReplay:
    def _session(self):
        runtime = SessionRuntime(session_id="fix", clock=lambda: 0.0)
        runtime.start_task("trip")
        runtime.user_turn("I prefer budget hotels")
        runtime.user_turn(
            "I usually prefer affordable options, but I'd pay more for verified reviews")
        runtime.assistant_turn("Noted: budget hotels with verified reviews")
        runtime.end_task()
        return runtime

    def test_empty_archive(self):
        archive = SessionRuntime(session_id="x").to_archive()
        state = replay(archive)
        assert state_digest(state) == archive.final_state_digest

    def test_replay_twice_byte_identical(self):
        archive = self._session().to_archive()
        s1, s2 = replay(archive), replay(archive)
        assert serialize_state(s1) == serialize_state(s2)
        assert state_digest(s1) == archive.final_state_digest

    def test_tampered_payload_detected(self):
        archive = self._session().to_archive()
        for e in archive.events:
            if e.kind == EventKind.PATCH_COMMITTED:
                e.payload = dict(e.payload, approved=True)
                break
        with pytest.raises(CogmapError) as err:
            replay(archive)
        assert err.value.code == "nondeterminism-detected"

    def test_tampered_digest_detected(self):
        archive = self._session().to_archive()
        archive.final_state_digest = "0" * 64
        with pytest.raises(CogmapError) as err:
            replay(archive)
        assert err.value.code == "nondeterminism-detected"

    def test_until_prefix(self):
        runtime = self._session()
        archive = runtime.to_archive()
        first_commit = next(e.seq for e in archive.events
                            if e.kind == EventKind.PATCH_COMMITTED)
        state = replay(archive, until=first_commit, verify_digest=False)
        assert state.turn == 1

    def test_archive_file_round_trip(self, tmp_path):
        archive = self._session().to_archive()
        path = tmp_path / "session.jsonl"
        write_archive(archive, str(path))
        loaded = read_archive(str(path))
        assert loaded.final_state_digest == archive.final_state_digest
        assert [e.to_dict() for e in loaded.events] == \
            [e.to_dict() for e in archive.events]
        assert state_digest(replay(loaded)) == archive.final_state_digest

    def test_corrupt_archive_parse_failure(self):
        with pytest.raises(CogmapError) as err:
            parse_archive(b'{"record": "header"}\nnot json at all\n')
        assert err.value.code == "parse-failure"

    def test_log_completeness_structural_mutations_come_from_patches(self):
        runtime = self._session()
        archive = runtime.to_archive()
        committed_ops = []
        for e in archive.events:
            if e.kind == EventKind.PATCH_COMMITTED:
                committed_ops.extend(op["kind"] for op in e.payload["patch"]["ops"])
                committed_ops.extend(op["kind"] for op in e.payload["normalization"])
        graph = runtime.state.cognitive.graph
        assert len(graph.concepts) == committed_ops.count("add_concept")
        assert len(graph.edges) + len(runtime.state.cognitive.pending_edges) == \
            committed_ops.count("add_edge")
        grounded = [c for c in graph.concepts.values() if c.status.value == "grounded"]
        assert len(grounded) <= committed_ops.count("set_status") + \
            committed_ops.count("merge_concepts")
