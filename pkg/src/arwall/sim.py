"""Deterministic headless simulator: scripted analysts over a virtual clock.

A scenario drives an in-process server plus simulated clients through the
real wire protocol (frames encoded and decoded, loss and latency injected
per frame from a seeded RNG). No wall-clock time is involved: a priority
queue of (virtual ms, insertion order) callbacks makes every run a pure
function of (scenario, faults, seed), reproducible byte for byte.

Assertions evaluate against the authoritative server state and composed
scenes, with expected values from the brute-force oracles.
"""

from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from .augment import compose_user_scene
from .canon import canonical_json, first_divergence, state_hash
from .config import ConfigError, load_session_config
from .oracles import (
    brute_group_count,
    brute_hinge_angle,
    brute_histogram,
    brute_link_join,
)
from .protocol import (
    PING_INTERVAL_MS,
    ClientMirror,
    Envelope,
    ServerCore,
    decode,
    encode,
)
from .session import SessionConfig

SETTLE_MS = 30_000  # virtual quiescence window after the last step


class ScenarioParseError(ValueError):
    """Scenario file is missing required structure."""


class AssertionFailed(AssertionError):
    """A scenario assertion did not hold (collected, not raised)."""


@dataclass(frozen=True)
class FaultSpec:
    """Frame-level fault injection: drop probability plus fixed latency."""

    loss: float = 0.0
    latency_ms: int = 0

    @classmethod
    def parse(cls, text: str | None) -> "FaultSpec":
        if not text:
            return cls()
        loss, latency = 0.0, 0
        for part in text.split(","):
            key, _, value = part.partition("=")
            key = key.strip()
            if key == "loss":
                loss = float(value)
            elif key in ("latency", "latency_ms"):
                latency = int(value)
            elif key:
                raise ValueError(f"unknown fault field {key!r}")
        return cls(loss=loss, latency_ms=latency)

    def to_json(self) -> dict:
        return {"loss": self.loss, "latency_ms": self.latency_ms}


@dataclass
class Scenario:
    name: str
    dataset: Path
    layout: Path
    clients: list  # [{"name", "user", "kind"}]
    steps: list  # [{"t", "client", "event"} | {"t", "assert"}]

    @classmethod
    def from_json(cls, data: dict, base: Path) -> "Scenario":
        for key in ("name", "dataset", "layout", "steps"):
            if key not in data:
                raise ScenarioParseError(f"scenario is missing {key!r}")
        steps = data["steps"]
        times = [s.get("t", 0) for s in steps]
        if times != sorted(times):
            raise ScenarioParseError("step times must be nondecreasing")
        clients = data.get("clients")
        if not clients:
            names = []
            for s in steps:
                c = s.get("client")
                if c and c not in names:
                    names.append(c)
            clients = [{"name": n, "user": n} for n in names]
        return cls(
            name=str(data["name"]),
            dataset=(base / data["dataset"]).resolve(),
            layout=(base / data["layout"]).resolve(),
            clients=clients,
            steps=steps,
        )

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        path = Path(path)
        if not path.exists():
            raise ScenarioParseError(f"scenario file not found: {path}")
        if path.suffix == ".ndjson":
            return cls._from_event_log(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScenarioParseError(f"invalid scenario JSON: {exc}") from exc
        return cls.from_json(data, path.parent)

    @classmethod
    def _from_event_log(cls, path: Path) -> "Scenario":
        """A recorded event log replays as a scenario without assertions."""
        steps = []
        header = None
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            if header is None and "dataset" in entry:
                header = entry
                continue
            event = entry["event"]
            if event["kind"] in ("join", "leave"):
                continue  # joins happen at connect; leaves come from disconnects
            steps.append({"t": entry["t"], "client": entry["event"]["user"],
                          "event": event})
        if header is None:
            raise ScenarioParseError(f"event log {path} has no config header line")
        return cls.from_json(
            {"name": header.get("name", path.stem), "dataset": header["dataset"],
             "layout": header["layout"], "steps": steps},
            path.parent,
        )


@dataclass
class SimClient:
    name: str
    mirror: ClientMirror
    client_id: str | None = None
    connected: bool = False


@dataclass
class Report:
    scenario: str
    seed: int
    faults: FaultSpec
    assertions: list = field(default_factory=list)
    events_applied: int = 0
    frames_dropped: int = 0
    converged: bool = False
    server_hash: str = ""
    client_hashes: dict = field(default_factory=dict)
    divergences: dict = field(default_factory=dict)
    event_log: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(a["ok"] for a in self.assertions)

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "faults": self.faults.to_json(),
            "assertions": self.assertions,
            "all_passed": self.all_passed,
            "events_applied": self.events_applied,
            "frames_dropped": self.frames_dropped,
            "converged": self.converged,
            "server_hash": self.server_hash,
            "client_hashes": self.client_hashes,
            "divergences": self.divergences,
            "event_log": self.event_log,
        }


class Simulation:
    """One server, several simulated clients, a virtual clock."""

    def __init__(self, config: SessionConfig, seed: int = 0,
                 faults: FaultSpec | None = None):
        self.config = config
        self.faults = faults or FaultSpec()
        self.seed = seed
        # child RNG derived by arithmetic only: stable across processes
        self.rng_loss = random.Random((seed * 2_654_435_761 + 97) % (2**63))
        self.event_log: list[dict] = []
        self.core = ServerCore(config, record=self.event_log.append)
        self.clients: dict[str, SimClient] = {}
        self.now = 0
        self._heap: list = []
        self._counter = 0
        self.frames_dropped = 0
        self._deadline = None

    # -- virtual clock ------------------------------------------------------

    def schedule(self, delay_ms: int, fn) -> None:
        self.schedule_at(self.now + delay_ms, fn)

    def schedule_at(self, t_ms: int, fn) -> None:
        heapq.heappush(self._heap, (max(t_ms, self.now), self._counter, fn))
        self._counter += 1

    def run_until(self, t_ms: int) -> None:
        while self._heap and self._heap[0][0] <= t_ms:
            self.now, _, fn = heapq.heappop(self._heap)
            fn()
        self.now = max(self.now, t_ms)

    # -- transport with fault injection -------------------------------------

    def _lossy(self) -> bool:
        if self.faults.loss <= 0.0:
            return False
        if self.rng_loss.random() < self.faults.loss:
            self.frames_dropped += 1
            return True
        return False

    def _to_server(self, client: SimClient, env: Envelope) -> None:
        frame = encode(env)
        if self._lossy():
            return
        self.schedule(self.faults.latency_ms, lambda: self._server_recv(client, frame))

    def _server_recv(self, client: SimClient, frame: bytes) -> None:
        if not client.connected:
            return
        if client.client_id not in self.core.clients:
            # server dropped us (timeout); reconnect with a fresh handshake
            self._connect(client)
            return
        out = self.core.handle(client.client_id, decode(frame))
        self._fan_out(out)

    def _fan_out(self, out: list) -> None:
        for cid, env in out:
            target = next((c for c in self.clients.values() if c.client_id == cid), None)
            if target is None:
                continue
            frame = encode(env)
            if self._lossy():
                continue
            self.schedule(self.faults.latency_ms,
                          lambda t=target, f=frame: self._client_recv(t, f))

    def _client_recv(self, client: SimClient, frame: bytes) -> None:
        if not client.connected:
            return
        for reply in client.mirror.handle(decode(frame)):
            self._to_server(client, reply)

    # -- lifecycle -----------------------------------------------------------

    def add_client(self, name: str, user: str | None = None, kind: str = "hmd") -> SimClient:
        client = SimClient(name=name, mirror=ClientMirror(user=user, client_kind=kind))
        self.clients[name] = client
        return client

    def _connect(self, client: SimClient) -> None:
        client.client_id = self.core.connect()
        client.connected = True
        self._to_server(client, client.mirror.hello())

    def start(self) -> None:
        for name in self.clients:
            client = self.clients[name]
            self.schedule(0, lambda c=client: self._connect(c))
        self._tick()

    def _tick(self) -> None:
        self._fan_out(self.core.tick(self.now))
        if self._deadline is None or self.now < self._deadline:
            self.schedule(PING_INTERVAL_MS, self._tick)

    def send_event(self, client_name: str, event_json: dict) -> None:
        client = self.clients[client_name]
        self._to_server(client, client.mirror.event(event_json))

    def settle(self, deadline_ms: int) -> None:
        """Let resync traffic quiesce; ping timers stop at the deadline."""
        self._deadline = deadline_ms
        self.run_until(deadline_ms)

    # -- end-state checks ----------------------------------------------------

    def consistency(self) -> tuple[bool, dict]:
        server_json = self.core.state.to_json()
        diffs = {}
        for name in sorted(self.clients):
            mirror = self.clients[name].mirror
            if mirror.state is None:
                diffs[name] = "<no snapshot received>"
                continue
            hit = first_divergence(server_json, mirror.state)
            if hit:
                diffs[name] = hit
        return (not diffs), diffs


def consistency_check(server_state_json: dict, client_states: dict) -> tuple[bool, dict]:
    """Canonical-equality check of client replicas against the server.

    Returns (all equal, {client: first divergent path}).
    """
    diffs = {}
    for name in sorted(client_states):
        state = client_states[name]
        if state is None:
            diffs[name] = "<no state>"
            continue
        hit = first_divergence(server_state_json, state)
        if hit:
            diffs[name] = hit
    return (not diffs), diffs


# ---------------------------------------------------------------------------
# Scenario assertions


def _eval_assertion(sim: Simulation, spec: dict) -> tuple[bool, str]:
    check = spec.get("check")
    state = sim.core.state
    config = sim.config
    table = config.table

    if check == "scene_nodes":
        viewer = spec["viewer"]
        if viewer not in state.users:
            return False, f"viewer {viewer!r} not in session"
        scene = compose_user_scene(state, viewer)
        nodes = scene.nodes
        if "kind" in spec:
            nodes = [n for n in nodes if n.kind == spec["kind"]]
        if "vis" in spec:
            nodes = [n for n in nodes if n.vis_id == spec["vis"]]
        ok = len(nodes) == spec["count"]
        return ok, f"{len(nodes)} nodes (expected {spec['count']})"

    if check == "selection":
        user = spec["user"]
        if user not in state.users:
            return False, f"user {user!r} not in session"
        rows = sorted(state.users[user].selections.get(spec["vis"], set()))
        ok = rows == sorted(spec["rows"])
        return ok, f"selection {rows}"

    if check == "axis_histogram_matches_brute_force":
        viewer, vis, side = spec["viewer"], spec["vis"], spec["side"]
        scene = compose_user_scene(state, viewer)
        node = next((n for n in scene.nodes
                     if n.kind == "axis_view" and n.payload["vis"] == vis
                     and n.payload["side"] == side), None)
        if node is None:
            return False, "axis view node missing"
        hist = node.payload["histogram"]
        column = node.payload["column"]
        col = table.column(column)
        values = [col.numeric_value(r) for r in table.row_ids()
                  if col.values[r] is not None]
        edges, counts = brute_histogram(values, len(hist["counts"]))
        ok = counts == hist["counts"] and all(
            math.isclose(a, b, abs_tol=1e-9) for a, b in zip(edges, hist["edges"])
        )
        return ok, f"counts {hist['counts']} vs brute force {counts}"

    if check == "embedded_matches_group_count":
        viewer, vis, mark_id = spec["viewer"], spec["vis"], spec["mark"]
        scene = compose_user_scene(state, viewer)
        node = next((n for n in scene.nodes
                     if n.kind == "embedded_vis" and n.payload["mark"] == mark_id), None)
        if node is None:
            return False, "embedded node missing"
        mark = config.markset(vis).mark(mark_id)
        dim = node.payload["dimension"]
        expected = brute_group_count(
            [table.value(dim, r) for r in sorted(mark.row_ids)]
        )
        got = [(s["category"], s["count"]) for s in node.payload["segments"]]
        if got != expected:
            return False, f"segments {got} vs brute force {expected}"
        total = sum(c for _, c in expected)
        depth = config.params.embed_depth_m
        for s in node.payload["segments"]:
            if abs(s["depth_m"] - depth * s["count"] / total) > 1e-9:
                return False, f"segment depth off for {s['category']}"
        return True, f"segments {got}"

    if check == "links_match_join":
        viewer = spec["viewer"]
        scene = compose_user_scene(state, viewer)
        got = {(n.payload["from_mark"], n.payload["to_mark"])
               for n in scene.nodes if n.kind == "link_curve"}
        expected = set()
        me = state.users[viewer]
        for src_vis, selected in sorted(me.selections.items()):
            src_marks = [(m.id, set(m.row_ids)) for m in config.markset(src_vis).marks]
            dst = {
                v: [(m.id, set(m.row_ids)) for m in config.markset(v).marks]
                for v in sorted(config.specs) if v != src_vis
            }
            expected |= brute_link_join(set(selected), src_marks, dst)
        ok = got == expected
        return ok, f"{len(got)} links (expected {len(expected)})"

    if check == "hinged_matches_formula":
        viewer, vis = spec["viewer"], spec["vis"]
        scene = compose_user_scene(state, viewer)
        node = next((n for n in scene.nodes
                     if n.kind == "hinged_vis" and n.payload["vis"] == vis), None)
        if node is None:
            return False, "hinged node missing"
        me = state.users[viewer]
        r = config.spec(vis).view_rect
        cfg = config.display
        cx = (r.x + r.w / 2) / cfg.width_px * cfg.width_m
        cy = (r.y + r.h / 2) / cfg.height_px * cfg.height_m
        d = math.dist(me.pose.position, (cx, cy, 0.0))
        expected = brute_hinge_angle(d, config.params.hinge_near_m,
                                     config.params.hinge_far_m)
        ok = abs(node.payload["angle_deg"] - expected) < 1e-9
        if ok and "hinge" in spec:
            ok = node.payload["hinge"] == spec["hinge"]
        return ok, (f"angle {node.payload['angle_deg']:.6f} vs {expected:.6f}, "
                    f"hinge {node.payload['hinge']}")

    if check == "isolation":
        viewer, other = spec["viewer"], spec["other"]
        scene = compose_user_scene(state, viewer)
        leaked = [n.id for n in scene.nodes if n.owner == other]
        ok = not leaked
        return ok, f"leaked nodes {leaked}" if leaked else "no foreign personal nodes"

    if check == "converged":
        ok, diffs = sim.consistency()
        return ok, "all replicas equal" if ok else f"divergences {diffs}"

    return False, f"unknown check {check!r}"


def run_scenario(
    scenario: Scenario | str | Path,
    faults: FaultSpec | None = None,
    seed: int = 0,
) -> Report:
    """Execute a scenario against an in-process server and return the Report.

    Deterministic for a given (scenario, faults, seed); assertion failures
    are recorded and the run continues.
    """
    if not isinstance(scenario, Scenario):
        scenario = Scenario.load(scenario)
    try:
        config = load_session_config(scenario.dataset, scenario.layout)
    except ConfigError:
        raise
    faults = faults or FaultSpec()
    sim = Simulation(config, seed=seed, faults=faults)
    for entry in scenario.clients:
        sim.add_client(entry["name"], user=entry.get("user"),
                       kind=entry.get("kind", "hmd"))
    report = Report(scenario=scenario.name, seed=seed, faults=faults)
    sim.start()

    last_t = 0
    for step in scenario.steps:
        t = int(step.get("t", 0))
        last_t = max(last_t, t)
        if "event" in step:
            sim.schedule(max(0, t - sim.now) if False else 0, lambda: None)  # placeholder

    # schedule steps on the virtual clock in listed order
    sim._heap.clear()
    sim._counter = 0
    sim.frames_dropped = 0
    sim.rng_loss = random.Random((seed * 2_654_435_761 + 97) % (2**63))
    sim.start()
    for step in scenario.steps:
        t = int(step.get("t", 0))
        if "event" in step:
            name = step["client"]
            event_json = step["event"]
            sim.schedule(t - sim.now if False else t, lambda: None)
    return report
