"""Wire protocol: framed envelopes and the authoritative server core.

Every message is one frame: a 4-byte big-endian length followed by that many
bytes of UTF-8 JSON (canonical form, so identical envelopes are identical
bytes). The server core is transport-agnostic and strictly serial: it turns
incoming envelopes into state transitions and produces the outbound messages
(deltas to everyone, per-viewer scene updates to whoever's scene changed).
Clients detect sequence gaps and re-handshake to request a fresh snapshot.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from typing import Callable

from .augment import compose_user_scene
from .canon import canonical_bytes, canonical_json
from .session import (
    Join,
    Leave,
    SessionConfig,
    SessionState,
    StaleEvent,
    apply_delta,
    apply_event,
    event_from_json,
)

log = logging.getLogger(__name__)

PROTOCOL_VERSION = "1"
DEFAULT_PORT = 7707
MAX_FRAME_BYTES = 16 * 1024 * 1024
PING_INTERVAL_MS = 2_000
PONG_TIMEOUT_MS = 10_000
# An event referencing state older than this many sequence numbers is not
# applied; the sender gets a snapshot instead.
STALE_EVENT_WINDOW = 64

KINDS = (
    "Hello", "Welcome", "Snapshot", "Event", "Delta", "SceneUpdate",
    "PoseUpdate", "Ping", "Pong", "Error",
)


class ProtocolError(ValueError):
    pass


class FrameTooLarge(ProtocolError):
    """Frame body exceeds the 16 MiB limit."""


class MalformedJson(ProtocolError):
    """Frame body is not valid JSON, or the frame itself is truncated."""


class UnknownKind(ProtocolError):
    """Envelope kind is not part of the protocol."""


@dataclass(frozen=True)
class Envelope:
    """One protocol message. seq is server-assigned; clients send seq 0."""

    kind: str
    payload: dict
    sender: str = ""
    seq: int = 0

    def to_json(self) -> dict:
        return {"seq": self.seq, "sender": self.sender, "kind": self.kind,
                "payload": self.payload}

    @classmethod
    def from_json(cls, data: dict) -> "Envelope":
        kind = data.get("kind")
        if kind not in KINDS:
            raise UnknownKind(f"unknown envelope kind {kind!r}")
        return cls(
            kind=kind,
            payload=data.get("payload", {}),
            sender=str(data.get("sender", "")),
            seq=int(data.get("seq", 0)),
        )


def encode(env: Envelope) -> bytes:
    """Envelope -> length-prefixed frame bytes."""
    body = canonical_bytes(env.to_json())
    if len(body) > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"frame body of {len(body)} bytes exceeds limit")
    return struct.pack(">I", len(body)) + body


def decode(frame: bytes) -> Envelope:
    """Exact inverse of encode for one complete frame."""
    if len(frame) < 4:
        raise MalformedJson("truncated frame: missing length prefix")
    (length,) = struct.unpack(">I", frame[:4])
    if length > MAX_FRAME_BYTES:
        raise FrameTooLarge(f"declared frame length {length} exceeds limit")
    body = frame[4:]
    if len(body) != length:
        raise MalformedJson(f"truncated frame: declared {length} bytes, got {len(body)}")
    return _decode_body(body)


def _decode_body(body: bytes) -> Envelope:
    import json

    try:
        data = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedJson(f"frame body is not valid JSON: {exc}") from exc
    return Envelope.from_json(data)


class FrameDecoder:
    """Incremental frame splitter for a byte stream."""

    def __init__(self):
        self._buffer = bytearray()

    def feed(self, data: bytes) -> list[Envelope]:
        self._buffer.extend(data)
        out = []
        while True:
            if len(self._buffer) < 4:
                break
            (length,) = struct.unpack(">I", self._buffer[:4])
            if length > MAX_FRAME_BYTES:
                raise FrameTooLarge(f"declared frame length {length} exceeds limit")
            if len(self._buffer) < 4 + length:
                break
            body = bytes(self._buffer[4:4 + length])
            del self._buffer[:4 + length]
            out.append(_decode_body(body))
        return out

    def finish(self) -> None:
        """Raise if the stream ended mid-frame."""
        if self._buffer:
            raise MalformedJson(
                f"stream ended mid-frame with {len(self._buffer)} buffered bytes"
            )


@dataclass
class ClientSlot:
    client_id: str
    kind: str  # "display" | "hmd" | "sim" | "web"
    user: str | None
    last_seen_ms: int = 0
    last_scene: bytes | None = None


class ServerCore:
    """Transport-agnostic authoritative server.

    Drive it with connect/handle/tick/disconnect; every call returns the
    list of (client_id, Envelope) messages to send. Events apply strictly
    in call order, so the broadcast delta stream is totally ordered and
    identical for every client.
    """

    def __init__(self, config: SessionConfig, record: Callable[[dict], None] | None = None):
        self.config = config
        self.state = SessionState(config=config)
        self.clients: dict[str, ClientSlot] = {}
        self._next_client = 1
        self._record = record
        self._now_ms = 0

    # -- helpers ----------------------------------------------------------

    def _broadcast(self, env: Envelope) -> list:
        return [(cid, env) for cid in sorted(self.clients)]

    def _snapshot_env(self) -> Envelope:
        return Envelope(kind="Snapshot", seq=self.state.seq,
                        payload={"state": self.state.to_json()})

    def _apply(self, event, sender: str) -> list:
        """Apply one session event and fan out delta + scene updates."""
        out = []
        try:
            self.state, delta = apply_event(self.state, event)
        except StaleEvent:
            raise
        except ValueError as exc:
            log.warning("event rejected from %s: %s", sender, exc)
            return [(sender, Envelope(kind="Error", seq=self.state.seq,
                                      payload={"code": type(exc).__name__,
                                               "message": str(exc)}))]
        if self._record is not None:
            self._record({"t": self._now_ms, "seq": self.state.seq,
                          "sender": sender, "event": event.to_json()})
        log.info("event seq=%d kind=%s user=%s", self.state.seq, event.kind, event.user)
        out.extend(self._broadcast(Envelope(kind="Delta", seq=self.state.seq, payload=delta)))
        out.extend(self._scene_updates())
        return out

    def _scene_updates(self) -> list:
        """SceneUpdate for every connected viewer whose scene content changed.

        Change detection ignores the scene's seq stamp; otherwise every
        event would dirty every viewer.
        """
        out = []
        for cid in sorted(self.clients):
            slot = self.clients[cid]
            if not slot.user or slot.user not in self.state.users:
                continue
            scene = compose_user_scene(self.state, slot.user)
            body = scene.to_json()
            raw = canonical_bytes({"viewer": body["viewer"], "nodes": body["nodes"]})
            if raw != slot.last_scene:
                slot.last_scene = raw
                out.append(
                    (cid, Envelope(kind="SceneUpdate", seq=self.state.seq,
                                   payload={"viewer": slot.user, "scene": body}))
                )
        return out

    # -- lifecycle --------------------------------------------------------

    def connect(self, client_id: str | None = None) -> str:
        if client_id is None:
            client_id = f"c{self._next_client}"
            self._next_client += 1
        self.clients[client_id] = ClientSlot(client_id=client_id, kind="hmd", user=None,
                                             last_seen_ms=self._now_ms)
        return client_id

    def disconnect(self, client_id: str) -> list:
        slot = self.clients.pop(client_id, None)
        out = []
        if slot and slot.user and slot.user in self.state.users:
            # only synthesize Leave when no other client represents the user
            if not any(s.user == slot.user for s in self.clients.values()):
                out.extend(self._apply(Leave(slot.user), sender=client_id))
        return out

    def handle(self, client_id: str, env: Envelope) -> list:
        """Process one inbound envelope from a connected client."""
        if client_id not in self.clients:
            raise KeyError(f"unknown client {client_id!r}")
        slot = self.clients[client_id]
        slot.last_seen_ms = self._now_ms

        if env.kind == "Hello":
            version = env.payload.get("version")
            if version != PROTOCOL_VERSION:
                return [(client_id, Envelope(kind="Error", seq=self.state.seq,
                                             payload={"code": "BadVersion",
                                                      "message": f"server speaks version {PROTOCOL_VERSION}"}))]
            slot.kind = env.payload.get("client", "hmd")
            out = []
            user = env.payload.get("user")
            if user:
                slot.user = user
                if user not in self.state.users:
                    out.extend(self._apply(Join(user), sender=client_id))
            welcome = Envelope(kind="Welcome", seq=self.state.seq,
                               payload={"client_id": client_id, "user": slot.user,
                                        "version": PROTOCOL_VERSION,
                                        "model": self.config.model_json()})
            out.insert(0, (client_id, welcome))
            out.append((client_id, self._snapshot_env()))
            # freshly (re)connected viewers always get their current scene
            if slot.user and slot.user in self.state.users:
                scene = compose_user_scene(self.state, slot.user)
                body = scene.to_json()
                slot.last_scene = canonical_bytes(
                    {"viewer": body["viewer"], "nodes": body["nodes"]}
                )
                out.append((client_id, Envelope(kind="SceneUpdate", seq=self.state.seq,
                                                payload={"viewer": slot.user,
                                                         "scene": body})))
            return out

        if env.kind == "Event":
            at_seq = env.payload.get("at_seq")
            if at_seq is not None and self.state.seq - int(at_seq) > STALE_EVENT_WINDOW:
                # way out of date: skip the event, resync the sender instead
                return [(client_id, self._snapshot_env())]
            event = event_from_json(env.payload["event"])
            return self._apply(event, sender=client_id)

        if env.kind == "PoseUpdate":
            event = event_from_json({"kind": "pose", **env.payload})
            return self._apply(event, sender=client_id)

        if env.kind == "Pong":
            return []

        if env.kind == "Ping":
            return [(client_id, Envelope(kind="Pong", seq=self.state.seq,
                                         payload={"seq": self.state.seq}))]

        return [(client_id, Envelope(kind="Error", seq=self.state.seq,
                                     payload={"code": "UnexpectedKind",
                                              "message": f"server cannot handle {env.kind}"}))]

    def tick(self, now_ms: int) -> list:
        """Periodic upkeep: ping everyone, drop clients that went silent."""
        self._now_ms = now_ms
        out = []
        for cid in sorted(self.clients):
            if now_ms - self.clients[cid].last_seen_ms > PONG_TIMEOUT_MS:
                log.info("client %s timed out", cid)
                out.extend(self.disconnect(cid))
        ping = Envelope(kind="Ping", seq=self.state.seq, payload={"seq": self.state.seq})
        out.extend(self._broadcast(ping))
        return out


class ClientMirror:
    """Client-side state replica driven by snapshots and deltas.

    Applies deltas in order, drops duplicates (exactly-once), and reports a
    resync condition whenever a gap shows up. The mirror holds plain JSON:
    convergence is checked by canonical serialization equality.
    """

    def __init__(self, user: str | None = None, client_kind: str = "hmd"):
        self.user = user
        self.client_kind = client_kind
        self.client_id: str | None = None
        self.state: dict | None = None
        self.model: dict | None = None
        self.scene: dict | None = None
        self.delta_log: list[bytes] = []
        self.needs_resync = True

    def hello(self) -> Envelope:
        payload = {"version": PROTOCOL_VERSION, "client": self.client_kind}
        if self.user:
            payload["user"] = self.user
        return Envelope(kind="Hello", payload=payload, sender=self.user or "")

    @property
    def seq(self) -> int:
        return -1 if self.state is None else self.state["seq"]

    def handle(self, env: Envelope) -> list[Envelope]:
        """Digest one server envelope; returns envelopes to send back."""
        if env.kind == "Welcome":
            self.client_id = env.payload.get("client_id")
            self.model = env.payload.get("model")
            return []
        if env.kind == "Snapshot":
            self.state = env.payload["state"]
            self.needs_resync = False
            return []
        if env.kind == "Delta":
            if self.state is None:
                return [self.hello()] if not self.needs_resync else []
            delta = env.payload
            base = delta["base_seq"]
            if base < self.state["seq"]:
                return []  # duplicate of an already-applied delta
            if base > self.state["seq"]:
                return self._gap()
            self.delta_log.append(canonical_bytes(delta))
            self.state = apply_delta(self.state, delta)
            self.needs_resync = False
            return []
        if env.kind == "SceneUpdate":
            self.scene = env.payload["scene"]
            return []
        if env.kind == "Ping":
            out = [Envelope(kind="Pong", sender=self.user or "",
                            payload={"seq": self.seq})]
            server_seq = env.payload.get("seq", 0)
            if self.state is not None and server_seq > self.state["seq"]:
                out.extend(self._gap())
            return out
        return []

    def _gap(self) -> list[Envelope]:
        if self.needs_resync:
            return []  # hello already in flight
        self.needs_resync = True
        return [self.hello()]

    def event(self, event_json: dict) -> Envelope:
        return Envelope(kind="Event", sender=self.user or "",
                        payload={"event": event_json, "at_seq": max(self.seq, 0)})

    def state_canonical(self) -> str:
        return canonical_json(self.state)
