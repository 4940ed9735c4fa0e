"""Deterministic discrete-event world: random-waypoint mobility,
unit-disk radio topology, CBR traffic over idealized source routes,
FIFO relay buffers, adversary behaviors, and the event loop that drives
the per-node protocol.

Identical (config, seed) pairs produce byte-identical event logs. All
fan-outs process recipients in ascending node id and the event queue
breaks time ties by insertion order.
"""

from __future__ import annotations

import heapq
import random
from collections import Counter, deque
from dataclasses import dataclass, field, replace

import numpy as np

from .messages import Authority, RepMessType
from .node_protocol import (
    OUTCOME_DROP,
    OUTCOME_MODIFIED,
    OUTCOME_OK,
    CertResponse,
    Node,
    Outgoing,
    ProtocolParams,
)


class ConfigInvalid(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass
class ScenarioConfig:
    duration_s: float = 1000.0
    area_width_m: float = 100.0
    area_height_m: float = 100.0
    node_count: int = 50
    tx_range_m: float = 30.0
    mobility_model: str = "random_waypoint"
    max_speed_mps: float = 20.0
    pause_s: float = 5.0
    flow_count: int = 15
    flow_rate_pps: float = 2.0
    buffer_capacity: int = 64
    malicious_count: int = 5
    exchange_interval_s: float = 60.0
    f_fraction: float = 0.5

    alpha: float = 0.6
    alpha2: float = 0.8
    delta: float = 0.001
    maliciousness_threshold: float = 0.5

    monitor_sample_prob: float = 1.0
    monitor_window_s: float = 30.0
    monitor_threshold: float = 0.25
    min_samples: int = 10

    challenge_ack_deadline_s: float = 2.0
    collect_window_s: float = 3.0
    vote_window_s: float = 5.0
    interaction_window_s: float = 120.0
    alarm_cooldown_s: float = 30.0
    challenge_cooldown_s: float = 60.0
    min_voters: int = 3
    cache_capacity: int = 256
    piggyback_budget: int = 2

    topology_step_ms: int = 100
    service_slot_ms: int = 10
    hop_latency_ms: int = 5
    tick_interval_ms: int = 500

    drop_prob: float = 1.0
    tamper_prob: float = 0.0
    adv_drops_certificates: bool = False
    adv_drops_feedback: bool = False
    adv_tampers_certificates: bool = False
    adv_false_accuser: bool = False

    overhead_window_s: float = 160.0
    rng_seed: int = 1

    def validate(self) -> None:
        problems = []
        for name in ("duration_s", "area_width_m", "area_height_m",
                     "tx_range_m", "flow_rate_pps", "exchange_interval_s"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        for name in ("node_count", "buffer_capacity", "topology_step_ms",
                     "service_slot_ms", "hop_latency_ms", "tick_interval_ms",
                     "min_voters"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        if self.flow_count < 0 or self.malicious_count < 0:
            problems.append("flow_count and malicious_count must be >= 0")
        if self.malicious_count >= self.node_count:
            problems.append("malicious_count must be < node_count")
        if self.mobility_model not in ("random_waypoint", "static"):
            problems.append(f"unknown mobility_model {self.mobility_model!r}")
        if self.mobility_model == "random_waypoint" and self.max_speed_mps <= 0:
            problems.append("max_speed_mps must be > 0 for random_waypoint")
        for name in ("f_fraction", "monitor_sample_prob", "monitor_threshold",
                     "maliciousness_threshold", "alpha", "alpha2",
                     "drop_prob", "tamper_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                problems.append(f"{name} must be in [0, 1]")
        if self.delta < 0:
            problems.append("delta must be >= 0")
        if problems:
            raise ConfigInvalid(problems)

    def protocol_params(self) -> ProtocolParams:
        return ProtocolParams(
            alpha=self.alpha, alpha2=self.alpha2, delta=self.delta,
            maliciousness_threshold=self.maliciousness_threshold,
            f_fraction=self.f_fraction,
            monitor_window_ms=int(self.monitor_window_s * 1000),
            monitor_threshold=self.monitor_threshold,
            min_samples=self.min_samples,
            challenge_ack_deadline_ms=int(self.challenge_ack_deadline_s * 1000),
            collect_window_ms=int(self.collect_window_s * 1000),
            vote_window_ms=int(self.vote_window_s * 1000),
            interaction_window_ms=int(self.interaction_window_s * 1000),
            exchange_interval_ms=int(self.exchange_interval_s * 1000),
            alarm_cooldown_ms=int(self.alarm_cooldown_s * 1000),
            challenge_cooldown_ms=int(self.challenge_cooldown_s * 1000),
            min_voters=self.min_voters,
            cache_capacity=self.cache_capacity,
            piggyback_budget=self.piggyback_budget,
        )


def multi_hop_default() -> ScenarioConfig:
    """Default experiment preset: multi-hop 30 m range over 100x100 m."""
    return ScenarioConfig()


def table1_literal() -> ScenarioConfig:
    """Literal published parameters. 200 m range over 100x100 m makes the
    graph complete; kept available for reference runs."""
    return ScenarioConfig(tx_range_m=200.0)


def congestion() -> ScenarioConfig:
    """No adversaries; a slow service rate and a few fat flows overload
    relay buffers so honest nodes drop packets under load."""
    return ScenarioConfig(
        malicious_count=0, flow_count=3, flow_rate_pps=30.0,
        service_slot_ms=50, mobility_model="static", duration_s=300.0)


PRESETS = {
    "multi-hop": multi_hop_default,
    "table1-literal": table1_literal,
    "congestion": congestion,
}


@dataclass(frozen=True)
class AdversaryProfile:
    drop_prob: float = 1.0
    tamper_prob: float = 0.0
    drops_certificates: bool = False
    drops_feedback_in_aggregate: bool = False
    tampers_certificates: bool = False
    false_accuser: bool = False
    colluding_set: frozenset[int] | None = None


class AdversaryNode(Node):
    """Protocol participant with misbehaving control-plane hooks. Data
    plane misbehavior (packet drops/tampering) lives in the simulator's
    forwarding path, keyed by the same profile."""

    def __init__(self, *args, profile: AdversaryProfile, **kwargs):
        super().__init__(*args, **kwargs)
        self.profile = profile

    def _select_responses(self, responses: list[CertResponse]) -> list[CertResponse]:
        if not self.profile.drops_feedback_in_aggregate:
            return responses
        thr_raw = int(self.params.maliciousness_threshold * 10000)
        kept = [r for r in responses if r.maliciousness_raw < thr_raw]
        return kept

    def shares_cache(self) -> bool:
        return not self.profile.drops_certificates

    def outgoing_cache_bytes(self, key: tuple) -> bytes | None:
        data = self.cache.get(key)
        if data is None or not self.profile.tampers_certificates:
            return data
        # flip a bit in the body so the issuer tag no longer verifies
        mutated = bytearray(data)
        mutated[8] ^= 0x01
        return bytes(mutated)


@dataclass
class Flow:
    flow_id: int
    src: int
    dst: int
    route: list[int] | None = None


@dataclass
class DataPacket:
    pid: int
    flow_id: int
    src: int
    dst: int
    route: list[int]
    hop_index: int
    created_ms: int
    watched_by: int | None = None
    tampered: bool = False
    pb_keys: list = field(default_factory=list)


@dataclass
class SimResult:
    config: ScenarioConfig
    log: list[tuple]
    ledger: Counter
    malicious: set[int]
    cert_issued: dict
    cert_holders: dict
    ever_neighbors: dict
    isolated_final: dict
    flow_counters: dict
    node_count: int

    @property
    def honest(self) -> set[int]:
        return set(range(1, self.node_count + 1)) - self.malicious

    def render_log(self) -> str:
        lines = [
            f"{t} {kind} {actor} {subject} {detail}"
            for t, kind, actor, subject, detail in self.log
        ]
        return "\n".join(lines) + "\n"

    def conservation_ok(self) -> bool:
        for c in self.flow_counters.values():
            accounted = (c["delivered"] + c["dropped_malicious"]
                         + c["dropped_buffer"] + c["dropped_route_broken"]
                         + c["dropped_isolated_src"] + c["in_buffer"]
                         + c["in_flight"])
            if c["sent"] != accounted:
                return False
        return True


# event kinds, ordered only for readability
EV_TOPO = "topo"
EV_FLOW = "flow"
EV_ARRIVE = "arrive"
EV_SERVICE = "service"
EV_CTRL = "ctrl"
EV_TICK = "tick"
EV_EXCHANGE = "exchange"
EV_ACCUSE = "accuse"

_KEY_BYTES = 16  # accounting size of a certificate cache key on the wire


class Simulator:
    def __init__(self, config: ScenarioConfig,
                 positions: list[tuple[float, float]] | None = None,
                 profiles: dict[int, AdversaryProfile] | None = None):
        config.validate()
        self.cfg = config
        self.rng = random.Random(config.rng_seed)
        self.now = 0
        self.duration_ms = int(config.duration_s * 1000)
        self._queue: list = []
        self._seq = 0

        n = config.node_count
        self.ids = list(range(1, n + 1))
        self.authority = Authority(secret=self.rng.randbytes(32))
        params = config.protocol_params()

        if profiles is None:
            malicious_ids = sorted(self.rng.sample(self.ids, config.malicious_count))
            profiles = {
                mid: AdversaryProfile(
                    drop_prob=config.drop_prob,
                    tamper_prob=config.tamper_prob,
                    drops_certificates=config.adv_drops_certificates,
                    drops_feedback_in_aggregate=config.adv_drops_feedback,
                    tampers_certificates=config.adv_tampers_certificates,
                    false_accuser=config.adv_false_accuser,
                )
                for mid in malicious_ids
            }
        self.profiles = profiles
        self.malicious = set(profiles)

        self.nodes: dict[int, Node] = {}
        for nid in self.ids:
            secret = self.rng.randbytes(32)
            binding = self.authority.enroll(nid, secret)
            self.authority.issue_identity(nid, f"serial-{nid:08d}".encode(), binding)
            if nid in self.profiles:
                node = AdversaryNode(nid, secret, self.authority, params,
                                     seed=config.rng_seed, profile=self.profiles[nid])
            else:
                node = Node(nid, secret, self.authority, params,
                            seed=config.rng_seed)
            node.on_event = self._make_event_hook(nid)
            node.on_cert_accepted = self._make_cert_hook(nid)
            self.nodes[nid] = node

        # mobility state (index i <-> node id i+1)
        if positions is not None:
            if len(positions) != n:
                raise ConfigInvalid([f"{len(positions)} positions for {n} nodes"])
            self.pos = np.array(positions, dtype=float)
        else:
            self.pos = np.column_stack([
                np.array([self.rng.uniform(0, config.area_width_m) for _ in range(n)]),
                np.array([self.rng.uniform(0, config.area_height_m) for _ in range(n)]),
            ])
        self.waypoint = self.pos.copy()
        self.speed = np.zeros(n)
        self.pause_until = np.zeros(n)
        if config.mobility_model == "random_waypoint":
            for i in range(n):
                self._new_waypoint(i)

        self.adj = np.zeros((n, n), dtype=bool)
        self.neighbor_lists: list[list[int]] = [[] for _ in range(n)]
        self.ever_neighbors: dict[int, set[int]] = {nid: set() for nid in self.ids}
        self._recompute_topology(initial=True)

        # flows between distinct endpoints
        self.flows: dict[int, Flow] = {}
        for fid in range(config.flow_count):
            src, dst = self.rng.sample(self.ids, 2)
            self.flows[fid] = Flow(fid, src, dst)
        self.flow_counters = {
            fid: Counter(sent=0, delivered=0, delivered_tampered=0,
                         dropped_malicious=0, dropped_buffer=0,
                         dropped_route_broken=0, dropped_isolated_src=0,
                         no_route=0, in_buffer=0, in_flight=0)
            for fid in self.flows
        }

        self.buffers: dict[int, deque] = {nid: deque() for nid in self.ids}
        self.free_at: dict[int, int] = {nid: 0 for nid in self.ids}
        self.service_scheduled: dict[int, bool] = {nid: False for nid in self.ids}

        self.log: list[tuple] = []
        self.ledger: Counter = Counter()
        self.cert_issued: dict = {}
        self.cert_holders: dict = {}
        self._pid = 0
        self._in_flight: Counter = Counter()

        # initial schedule
        self._push(config.topology_step_ms, EV_TOPO, None)
        self._push(config.tick_interval_ms, EV_TICK, None)
        self._push(int(config.exchange_interval_s * 1000), EV_EXCHANGE, None)
        period = max(1, int(1000 / config.flow_rate_pps))
        for fid in self.flows:
            start = self.rng.randrange(period)
            self._push(start, EV_FLOW, fid)
        if any(p.false_accuser for p in self.profiles.values()):
            for nid in sorted(self.profiles):
                if self.profiles[nid].false_accuser:
                    self._push(30_000 + self.rng.randrange(5_000), EV_ACCUSE, nid)

    # --- hooks and logging -----------------------------------------------

    def _make_event_hook(self, nid: int):
        def hook(now, kind, subject, detail):
            self.log.append((now, kind, nid, subject, detail))
        return hook

    def _make_cert_hook(self, nid: int):
        def hook(key, now):
            holders = self.cert_holders.setdefault(key, {})
            holders.setdefault(nid, now)
            if key not in self.cert_issued and key[1] == nid:
                self.cert_issued[key] = now
        return hook

    def _log(self, kind: str, actor: int, subject: int, detail: str = "") -> None:
        self.log.append((self.now, kind, actor, subject, detail))

    # --- event queue ------------------------------------------------------

    def _push(self, t: int, kind: str, data) -> None:
        self._seq += 1
        heapq.heappush(self._queue, (t, self._seq, kind, data))

    # --- mobility and topology -------------------------------------------

    def _new_waypoint(self, i: int) -> None:
        self.waypoint[i, 0] = self.rng.uniform(0, self.cfg.area_width_m)
        self.waypoint[i, 1] = self.rng.uniform(0, self.cfg.area_height_m)
        # speed uniform on (0, max]: reject the measure-zero 0 draw
        s = 0.0
        while s == 0.0:
            s = self.rng.uniform(0, self.cfg.max_speed_mps)
        self.speed[i] = s

    def _step_mobility(self, dt_s: float) -> None:
        if self.cfg.mobility_model != "random_waypoint":
            return
        n = self.cfg.node_count
        delta = self.waypoint - self.pos
        dist = np.hypot(delta[:, 0], delta[:, 1])
        step = self.speed * dt_s
        paused = self.pause_until > self.now
        at_waypoint = dist == 0.0
        arriving = (~paused) & (~at_waypoint) & (dist <= step)
        moving = (~paused) & (dist > step)
        scale = np.zeros(n)
        scale[moving] = step[moving] / dist[moving]
        self.pos[moving] += delta[moving] * scale[moving, None]
        for i in np.flatnonzero(arriving):
            self.pos[i] = self.waypoint[i]
            self.pause_until[i] = self.now + self.cfg.pause_s * 1000
        # pause over: pick a fresh waypoint and speed
        for i in np.flatnonzero((~paused) & at_waypoint):
            self._new_waypoint(i)

    def _recompute_topology(self, initial: bool = False) -> None:
        diff = self.pos[:, None, :] - self.pos[None, :, :]
        d2 = (diff ** 2).sum(axis=2)
        adj = d2 <= self.cfg.tx_range_m ** 2
        np.fill_diagonal(adj, False)
        changed = adj != self.adj
        if initial or changed.any():
            rows = np.flatnonzero(changed.any(axis=1)) if not initial else range(
                self.cfg.node_count)
            self.adj = adj
            for i in rows:
                neigh = [int(j) + 1 for j in np.flatnonzero(adj[i])]
                self.neighbor_lists[i] = neigh
                self.nodes[i + 1].set_neighbors(neigh)
            new_edges = np.argwhere(changed & adj)
            for i, j in new_edges:
                if i < j:
                    self.ever_neighbors[int(i) + 1].add(int(j) + 1)
                    self.ever_neighbors[int(j) + 1].add(int(i) + 1)

    def neighbors_of(self, nid: int) -> list[int]:
        return self.neighbor_lists[nid - 1]

    # --- routing ----------------------------------------------------------

    def compute_route(self, src: int, dst: int,
                      isolated: set[int]) -> list[int] | None:
        """Lexicographically smallest shortest hop path, excluding
        isolated nodes. Charges one synthetic discovery flood."""
        self.ledger["route_discoveries"] += 1
        self.ledger["msgs_routing"] += self.cfg.node_count
        if src == dst:
            return [src]
        blocked = {x for x in isolated if x != src and x != dst}
        dist = {dst: 0}
        frontier = [dst]
        while frontier:
            nxt = []
            for u in frontier:
                for v in self.neighbors_of(u):
                    if v in blocked or v in dist:
                        continue
                    dist[v] = dist[u] + 1
                    nxt.append(v)
            frontier = nxt
        if src not in dist:
            return None
        route = [src]
        cur = src
        while cur != dst:
            candidates = [v for v in self.neighbors_of(cur)
                          if v not in blocked and dist.get(v) == dist[cur] - 1]
            cur = min(candidates)
            route.append(cur)
        return route

    def _route_valid(self, route: list[int], isolated: set[int]) -> bool:
        for a, b in zip(route, route[1:]):
            if not self.adj[a - 1, b - 1]:
                return False
        return not any(x in isolated for x in route[1:-1])

    # --- control plane ----------------------------------------------------

    def _emit(self, src: int, outgoings: list[Outgoing]) -> None:
        for out in outgoings:
            name = f"msgs_{out.mess_type.name.lower()}"
            if out.dest is None:
                for r in self.neighbors_of(src):
                    self._push(self.now + self.cfg.hop_latency_ms, EV_CTRL,
                               (r, out.data))
                    self.ledger[name] += 1
                    self.ledger["ctrl_bytes"] += len(out.data)
            else:
                if out.dest == src:
                    continue
                hops = self._hop_distance(src, out.dest)
                if hops is None:
                    self.ledger["ctrl_undeliverable"] += 1
                    continue
                self._push(self.now + hops * self.cfg.hop_latency_ms, EV_CTRL,
                           (out.dest, out.data))
                self.ledger[name] += 1
                self.ledger["ctrl_bytes"] += len(out.data) * hops

    def _hop_distance(self, src: int, dst: int) -> int | None:
        if self.adj[src - 1, dst - 1]:
            return 1
        dist = {src: 0}
        frontier = [src]
        while frontier:
            nxt = []
            for u in frontier:
                for v in self.neighbors_of(u):
                    if v in dist:
                        continue
                    dist[v] = dist[u] + 1
                    if v == dst:
                        return dist[v]
                    nxt.append(v)
            frontier = nxt
        return None

    def _observe(self, watcher: int, subject: int, outcome: int) -> None:
        self._log("monitor_obs", watcher, subject, str(outcome))
        out = self.nodes[watcher].monitor_observe(subject, outcome, self.now)
        self._emit(watcher, out)

    # --- data plane -------------------------------------------------------

    def _handle_flow(self, fid: int) -> None:
        flow = self.flows[fid]
        counters = self.flow_counters[fid]
        src_node = self.nodes[flow.src]
        if flow.route is None or not self._route_valid(flow.route, src_node.isolated):
            flow.route = self.compute_route(flow.src, flow.dst, src_node.isolated)
        if flow.route is None or len(flow.route) < 2:
            counters["no_route"] += 1
            flow.route = None
        else:
            self._pid += 1
            watched = flow.src if self.rng.random() < self.cfg.monitor_sample_prob \
                else None
            packet = DataPacket(
                pid=self._pid, flow_id=fid, src=flow.src, dst=flow.dst,
                route=list(flow.route), hop_index=1, created_ms=self.now,
                watched_by=watched, pb_keys=src_node.piggyback_keys())
            counters["sent"] += 1
            self._in_flight[fid] += 1
            self.ledger["pb_bytes"] += _KEY_BYTES * len(packet.pb_keys)
            src_node.note_contact(packet.route[1], self.now)
            self._push(self.now + self.cfg.hop_latency_ms, EV_ARRIVE,
                       (packet.route[1], packet))
        period = max(1, int(1000 / self.cfg.flow_rate_pps))
        nxt = self.now + period
        if nxt <= self.duration_ms:
            self._push(nxt, EV_FLOW, fid)

    def _drop_packet(self, packet: DataPacket, reason: str,
                     at: int, observed: bool) -> None:
        self.flow_counters[packet.flow_id][f"dropped_{reason}"] += 1
        self._in_flight[packet.flow_id] -= 1
        if observed and packet.watched_by is not None:
            self._observe(packet.watched_by, at, OUTCOME_DROP)

    def _handle_arrive(self, nid: int, packet: DataPacket) -> None:
        node = self.nodes[nid]
        if packet.pb_keys:
            node.note_piggyback(packet.pb_keys)
        upstream = packet.route[packet.hop_index - 1]
        node.note_contact(upstream, self.now)
        if nid == packet.dst:
            counters = self.flow_counters[packet.flow_id]
            counters["delivered"] += 1
            if packet.tampered:
                counters["delivered_tampered"] += 1
            self._in_flight[packet.flow_id] -= 1
            return
        # relay
        if packet.src in node.isolated:
            # punitive drop of an isolated originator's traffic; watchers
            # share the verdict and do not count it against the relay
            self._drop_packet(packet, "isolated_src", nid, observed=False)
            return
        profile = self.profiles.get(nid)
        if profile is not None and self.rng.random() < profile.drop_prob:
            self._drop_packet(packet, "malicious", nid, observed=True)
            return
        buffer = self.buffers[nid]
        if len(buffer) >= self.cfg.buffer_capacity:
            self._drop_packet(packet, "buffer", nid, observed=True)
            return
        buffer.append(packet)
        if not self.service_scheduled[nid]:
            self.service_scheduled[nid] = True
            self._push(max(self.now, self.free_at[nid]), EV_SERVICE, nid)

    def _handle_service(self, nid: int) -> None:
        buffer = self.buffers[nid]
        if not buffer:
            self.service_scheduled[nid] = False
            return
        packet = buffer.popleft()
        self.free_at[nid] = self.now + self.cfg.service_slot_ms
        if buffer:
            self._push(self.free_at[nid], EV_SERVICE, nid)
        else:
            self.service_scheduled[nid] = False

        next_hop = packet.route[packet.hop_index + 1]
        if not self.adj[nid - 1, next_hop - 1]:
            self._drop_packet(packet, "route_broken", nid, observed=True)
            flow = self.flows[packet.flow_id]
            if flow.route == packet.route:
                flow.route = None
            return
        profile = self.profiles.get(nid)
        outcome = OUTCOME_OK
        if profile is not None and self.rng.random() < profile.tamper_prob:
            packet.tampered = True
            outcome = OUTCOME_MODIFIED
        if packet.watched_by is not None:
            self._observe(packet.watched_by, nid, outcome)
        packet.watched_by = nid if self.rng.random() < self.cfg.monitor_sample_prob \
            else None
        packet.hop_index += 1
        self.nodes[nid].note_contact(next_hop, self.now)
        self._push(self.now + self.cfg.hop_latency_ms, EV_ARRIVE,
                   (next_hop, packet))

    # --- periodic machinery ----------------------------------------------

    def _handle_exchange(self) -> None:
        for nid in self.ids:
            self.nodes[nid].replenish_tick(self.now)
        pairs = np.argwhere(self.adj)
        for i, j in pairs:
            if i >= j:
                continue
            self._exchange_pair(int(i) + 1, int(j) + 1)
        nxt = self.now + int(self.cfg.exchange_interval_s * 1000)
        if nxt <= self.duration_ms:
            self._push(nxt, EV_EXCHANGE, None)

    def _exchange_pair(self, a: int, b: int) -> None:
        na, nb = self.nodes[a], self.nodes[b]
        if b in na.isolated or a in nb.isolated:
            return
        na.note_contact(b, self.now)
        nb.note_contact(a, self.now)
        keys_a = set(na.cache_keys()) if na.shares_cache() else set()
        keys_b = set(nb.cache_keys()) if nb.shares_cache() else set()
        self.ledger["msgs_exchange"] += 2
        self.ledger["ctrl_bytes"] += _KEY_BYTES * (len(keys_a) + len(keys_b))
        for key in sorted(keys_a - keys_b):
            data = na.outgoing_cache_bytes(key)
            if data is not None:
                self.ledger["msgs_exchange"] += 1
                self.ledger["ctrl_bytes"] += len(data)
                self._emit(b, nb.receive_exchanged_cert(data, a, self.now))
        for key in sorted(keys_b - keys_a):
            data = nb.outgoing_cache_bytes(key)
            if data is not None:
                self.ledger["msgs_exchange"] += 1
                self.ledger["ctrl_bytes"] += len(data)
                self._emit(a, na.receive_exchanged_cert(data, b, self.now))
        for key in sorted(keys_a & keys_b):
            ca, cb = na.outgoing_cache_bytes(key), nb.outgoing_cache_bytes(key)
            if ca == cb or ca is None or cb is None:
                continue
            self._log("cache_mismatch", a, b, str(key[0]))
            valid_a = self._cert_bytes_valid(ca)
            valid_b = self._cert_bytes_valid(cb)
            if valid_a and not valid_b:
                nb.cache_replace(key, ca)
            elif valid_b and not valid_a:
                na.cache_replace(key, cb)

    def _cert_bytes_valid(self, data: bytes) -> bool:
        from . import messages
        try:
            cert = messages.decode_certificate(data)
        except messages.MessageError:
            return False
        verdict = messages.verify_group_certificate(
            cert, None, self.cfg.maliciousness_threshold, self.authority)
        return verdict is messages.Verdict.VALID

    def _handle_tick(self) -> None:
        for nid in self.ids:
            self._emit(nid, self.nodes[nid].tick(self.now))
        nxt = self.now + self.cfg.tick_interval_ms
        if nxt <= self.duration_ms:
            self._push(nxt, EV_TICK, None)

    def _handle_accuse(self, nid: int) -> None:
        node = self.nodes[nid]
        victims = [v for v in self.neighbors_of(nid) if v not in self.malicious]
        if victims:
            victim = self.rng.choice(sorted(victims))
            self._log("false_accusation", nid, victim, "")
            self._emit(nid, node.initiate_challenge(victim, self.now))
            self._emit(nid, node.raise_global_alarm(victim, self.now))
        nxt = self.now + 60_000
        if nxt <= self.duration_ms:
            self._push(nxt, EV_ACCUSE, nid)

    # --- main loop --------------------------------------------------------

    def run(self) -> SimResult:
        while self._queue:
            t, _, kind, data = heapq.heappop(self._queue)
            if t > self.duration_ms:
                break
            self.now = t
            if kind == EV_TOPO:
                self._step_mobility(self.cfg.topology_step_ms / 1000.0)
                self._recompute_topology()
                nxt = t + self.cfg.topology_step_ms
                if nxt <= self.duration_ms:
                    self._push(nxt, EV_TOPO, None)
            elif kind == EV_FLOW:
                self._handle_flow(data)
            elif kind == EV_ARRIVE:
                nid, packet = data
                self._handle_arrive(nid, packet)
            elif kind == EV_SERVICE:
                self._handle_service(data)
            elif kind == EV_CTRL:
                dest, frame = data
                self._emit(dest, self.nodes[dest].receive(frame, self.now))
            elif kind == EV_TICK:
                self._handle_tick()
            elif kind == EV_EXCHANGE:
                self._handle_exchange()
            elif kind == EV_ACCUSE:
                self._handle_accuse(data)

        for nid, buffer in self.buffers.items():
            for packet in buffer:
                self.flow_counters[packet.flow_id]["in_buffer"] += 1
                self._in_flight[packet.flow_id] -= 1
        for _, _, kind, data in self._queue:
            if kind == EV_ARRIVE:
                _, packet = data
                self.flow_counters[packet.flow_id]["in_flight"] += 1
                self._in_flight[packet.flow_id] -= 1

        return SimResult(
            config=self.cfg,
            log=self.log,
            ledger=self.ledger,
            malicious=set(self.malicious),
            cert_issued=dict(self.cert_issued),
            cert_holders={k: dict(v) for k, v in self.cert_holders.items()},
            ever_neighbors={k: set(v) for k, v in self.ever_neighbors.items()},
            isolated_final={nid: set(self.nodes[nid].isolated) for nid in self.ids},
            flow_counters={fid: dict(c) for fid, c in self.flow_counters.items()},
            node_count=self.cfg.node_count,
        )


def run_scenario(config: ScenarioConfig, seed: int | None = None,
                 **sim_kwargs) -> SimResult:
    if seed is not None:
        config = replace(config, rng_seed=seed)
    return Simulator(config, **sim_kwargs).run()
