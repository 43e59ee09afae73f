from __future__ import annotations

import random
import struct

import pytest

from arwall.canon import canonical_json
from arwall.protocol import (
    KINDS,
    ClientMirror,
    Envelope,
    FrameDecoder,
    FrameTooLarge,
    MalformedJson,
    ServerCore,
    UnknownKind,
    decode,
    encode,
)


def test_round_trip_every_kind():
    rng = random.Random(3)
    for kind in KINDS:
        payload = {
            "n": rng.randint(0, 10),
            "text": "päylöad",
            "nested": {"list": [1, 2.5, None, True]},
        }
        env = Envelope(kind=kind, payload=payload, sender="c1", seq=rng.randint(0, 99))
        assert decode(encode(env)) == env


def test_frame_layout_length_prefix():
    env = Envelope(kind="Ping", payload={})
    frame = encode(env)
    (length,) = struct.unpack(">I", frame[:4])
    assert length == len(frame) - 4


def test_truncated_frame_rejected():
    frame = encode(Envelope(kind="Ping", payload={}))
    with pytest.raises(MalformedJson):
        decode(frame[:-3])


def test_malformed_json_rejected():
    body = b"{not json"
    frame = struct.pack(">I", len(body)) + body
    with pytest.raises(MalformedJson):
        decode(frame)


def test_unknown_kind_rejected():
    body = canonical_bytes = canonical_json(
        {"seq": 0, "sender": "", "kind": "Nope", "payload": {}}
    ).encode()
    frame = struct.pack(">I", len(body)) + body
    with pytest.raises(UnknownKind):
        decode(frame)


def test_frame_too_large():
    with pytest.raises(FrameTooLarge):
        encode(Envelope(kind="Event", payload={"blob": "x" * (17 * 1024 * 1024)}))


def test_decoder_handles_partial_and_coalesced_frames():
    frames = [encode(Envelope(kind="Ping", payload={"i": i})) for i in range(3)]
    stream = b"".join(frames)
    decoder = FrameDecoder()
    got = []
    for i in range(0, len(stream), 7):  # drip-feed in 7-byte chunks
        got.extend(decoder.feed(stream[i:i + 7]))
    decoder.finish()
    assert [e.payload["i"] for e in got] == [0, 1, 2]


def test_decoder_finish_raises_mid_frame():
    decoder = FrameDecoder()
    decoder.feed(encode(Envelope(kind="Ping", payload={}))[:5])
    with pytest.raises(MalformedJson):
        decoder.finish()


# ---------------------------------------------------------------------------
# Server core logic (in-process, no transport)


class Pump:
    """Synchronous in-process message pump between one core and mirrors."""

    def __init__(self, config):
        self.core = ServerCore(config)
        self.mirrors: dict[str, ClientMirror] = {}

    def join(self, user, kind="hmd"):
        mirror = ClientMirror(user=user, client_kind=kind)
        cid = self.core.connect()
        self.mirrors[cid] = mirror
        self.deliver(self.core.handle(cid, mirror.hello()))
        return cid

    def deliver(self, outbound):
        while outbound:
            nxt = []
            for cid, env in outbound:
                mirror = self.mirrors[cid]
                for reply in mirror.handle(env):
                    nxt.extend(self.core.handle(cid, reply))
            outbound = nxt

    def send_event(self, cid, event_json):
        self.deliver(self.core.handle(cid, self.mirrors[cid].event(event_json)))


@pytest.fixture()
def pump(session_config):
    return Pump(session_config)


def test_single_client_delta_seq(pump):
    cid = pump.join("sue")
    mirror = pump.mirrors[cid]
    snapshot_seq = mirror.state["seq"]
    pump.send_event(cid, {"kind": "select", "user": "sue", "vis": "budget_gross",
                          "rows": [5], "mode": "replace"})
    assert mirror.state["seq"] == snapshot_seq + 1
    assert mirror.state["users"]["sue"]["selections"] == {"budget_gross": [5]}


def test_welcome_carries_model(pump):
    cid = pump.join("sue")
    model = pump.mirrors[cid].model
    assert model["display"]["width_px"] == 3840
    assert {v["id"] for v in model["views"]} == {
        "budget_gross", "duration_by_year", "movies_by_year", "votes_by_year"
    }


def test_three_clients_identical_delta_logs(pump):
    cids = [pump.join(u) for u in ("a", "b", "c")]
    rng = random.Random(5)
    for i in range(30):
        cid = cids[rng.randrange(3)]
        user = pump.mirrors[cid].user
        pump.send_event(cid, {"kind": "select", "user": user, "vis": "budget_gross",
                              "rows": rng.sample(range(200), 2), "mode": "replace"})
    logs = [pump.mirrors[c].delta_log for c in cids]
    # every client joined at a different seq, so compare the shared suffix
    n = min(len(l) for l in logs)
    assert n >= 30
    assert logs[0][-n:] == logs[1][-n:] == logs[2][-n:]


def test_convergence_after_quiescence(pump):
    cids = [pump.join(u) for u in ("a", "b")]
    pump.send_event(cids[0], {"kind": "stroke", "user": "a", "vis": "votes_by_year",
                              "points": [[0.1, 0.1], [0.5, 0.5]]})
    server = canonical_json(pump.core.state.to_json())
    for cid in cids:
        assert pump.mirrors[cid].state_canonical() == server


def test_dropped_delta_resyncs_via_snapshot(pump):
    cid_a = pump.join("a")
    cid_b = pump.join("b")
    mirror_b = pump.mirrors[cid_b]

    # drop one delta on the floor for b
    out = pump.core.handle(cid_a, pump.mirrors[cid_a].event(
        {"kind": "select", "user": "a", "vis": "budget_gross", "rows": [1],
         "mode": "replace"}))
    pump.deliver([(cid, env) for cid, env in out if cid != cid_b])
    assert mirror_b.state["seq"] < pump.core.state.seq

    # next delta reveals the gap; the mirror re-hellos and snapshots back in
    pump.send_event(cid_a, {"kind": "select", "user": "a", "vis": "budget_gross",
                            "rows": [2], "mode": "replace"})
    assert mirror_b.state_canonical() == canonical_json(pump.core.state.to_json())


def test_duplicate_delta_ignored(pump):
    cid = pump.join("a")
    mirror = pump.mirrors[cid]
    out = pump.core.handle(cid, mirror.event(
        {"kind": "select", "user": "a", "vis": "budget_gross", "rows": [7],
         "mode": "replace"}))
    pump.deliver(out)
    before = mirror.state_canonical()
    # replay the same delta envelope
    dup = [env for cid2, env in out if cid2 == cid and env.kind == "Delta"]
    assert dup
    assert mirror.handle(dup[0]) == []
    assert mirror.state_canonical() == before


def test_stale_event_triggers_snapshot_not_state_change(pump):
    cid = pump.join("a")
    for i in range(70):
        pump.send_event(cid, {"kind": "pose", "user": "a",
                              "position": [0.1 * (i % 10), 0.5, 1.0]})
    seq_before = pump.core.state.seq
    stale = Envelope(kind="Event", sender="a",
                     payload={"event": {"kind": "select", "user": "a",
                                        "vis": "budget_gross", "rows": [1],
                                        "mode": "replace"},
                              "at_seq": 0})
    out = pump.core.handle(cid, stale)
    assert pump.core.state.seq == seq_before  # not applied
    assert [env.kind for _, env in out] == ["Snapshot"]


def test_error_envelope_for_invalid_event(pump):
    cid = pump.join("a")
    out = pump.core.handle(cid, pump.mirrors[cid].event(
        {"kind": "select", "user": "a", "vis": "nope", "rows": [1],
         "mode": "replace"}))
    kinds = [env.kind for _, env in out]
    assert kinds == ["Error"]
    assert pump.core.state.seq == pump.mirrors[cid].state["seq"]


def test_scene_updates_only_to_affected_viewer(pump):
    cid_a = pump.join("a")
    cid_b = pump.join("b")
    out = pump.core.handle(cid_a, pump.mirrors[cid_a].event(
        {"kind": "select", "user": "a", "vis": "budget_gross", "rows": [42],
         "mode": "replace"}))
    scene_targets = [cid for cid, env in out if env.kind == "SceneUpdate"]
    assert scene_targets == [cid_a]  # b's scene did not change
    pump.deliver(out)
    assert pump.mirrors[cid_a].scene["nodes"]
    assert len(pump.mirrors[cid_a].scene["nodes"]) >= 3


def test_timeout_synthesizes_leave(pump):
    cid_a = pump.join("a")
    pump.join("b")
    assert "a" in pump.core.state.users
    pump.core.tick(0)
    out = pump.core.tick(20_000)  # well past the pong timeout
    assert cid_a not in pump.core.clients
    assert "a" not in pump.core.state.users
    # the first synthesized Leave was broadcast to the still-connected client
    delta_payloads = [env.payload for _, env in out if env.kind == "Delta"]
    assert any(p["users"].get("a", "x") is None for p in delta_payloads)
