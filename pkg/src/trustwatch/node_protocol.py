"""Per-node protocol state machine: monitoring, challenge-response
collection, certificate maintenance and propagation, and alarm voting.

A Node is driven entirely by the simulator: it receives encoded frames,
monitor events, and timer ticks, and returns the frames it wants sent.
All state belongs to exactly one node; handlers run serially in event
order.
"""

from __future__ import annotations

import math
import random
import struct
from collections import OrderedDict, deque
from dataclasses import dataclass, field

from . import messages, trust_math
from .messages import (
    Authority,
    CertResponse,
    GroupTrustCertificate,
    RepMessType,
    ReputationHeader,
    Verdict,
    from_fixed,
    to_fixed,
)

OUTCOME_OK = 0
OUTCOME_DROP = 1
OUTCOME_MODIFIED = 2

_VOTE_SIGN = struct.Struct(">IIIQB")
_ALARM_PAYLOAD = struct.Struct(">BIQ")
_VOTE_RECORD = struct.Struct(">IB")
_RESP_PAYLOAD = struct.Struct(">HQ")


@dataclass
class ProtocolParams:
    """Every protocol constant a scenario can set."""

    alpha: float = 0.6
    alpha2: float = 0.8
    delta: float = 0.001
    maliciousness_threshold: float = 0.5
    f_fraction: float = 0.5

    monitor_window_ms: int = 30_000
    monitor_threshold: float = 0.25
    min_samples: int = 10

    challenge_ack_deadline_ms: int = 2_000
    collect_window_ms: int = 3_000
    vote_window_ms: int = 5_000
    interaction_window_ms: int = 120_000
    exchange_interval_ms: int = 60_000
    alarm_cooldown_ms: int = 30_000
    challenge_cooldown_ms: int = 60_000
    min_voters: int = 3
    cache_capacity: int = 256
    piggyback_budget: int = 2
    alarm_jitter_ms: int = 10_000
    max_alarm_attempts: int = 1

    @property
    def replay_window_ms(self) -> int:
        return 2 * self.exchange_interval_ms


@dataclass
class Outgoing:
    """A frame the node wants delivered. dest None means broadcast to the
    node's current 1-hop neighbors."""

    dest: int | None
    mess_type: RepMessType
    data: bytes


@dataclass
class TableEntry:
    rep_val: float = 1.0
    last_updated_ms: int = 0
    accepted_respondent_sets: set[frozenset[int]] = field(default_factory=set)


@dataclass
class AccuserChallenge:
    subject: int
    nonce: int
    initiated_at_ms: int
    ack_deadline_ms: int
    close_at_ms: int
    acked: bool = False


@dataclass
class CollectState:
    nonce: int
    opened_at_ms: int
    deadline_ms: int
    expected: set[int]
    collected: dict[int, CertResponse] = field(default_factory=dict)
    done: bool = False


@dataclass
class AlarmState:
    subject: int
    nonce: int
    raised_at_ms: int
    deadline_ms: int
    votes: dict[int, tuple[bool, bytes]] = field(default_factory=dict)


def vote_sign_bytes(subject: int, raiser: int, voter: int,
                    alarm_nonce: int, vote: bool) -> bytes:
    return _VOTE_SIGN.pack(subject, raiser, voter, alarm_nonce, 1 if vote else 0)


class Node:
    """Honest protocol participant. Adversarial variants subclass this
    and override the narrow behavior hooks at the bottom."""

    def __init__(self, node_id: int, secret: bytes, authority: Authority,
                 params: ProtocolParams, seed: int = 0):
        self.node_id = node_id
        self.secret = secret
        self.authority = authority
        self.params = params
        self.rng = random.Random((seed << 20) ^ (node_id * 2654435761 % 2**31))
        self.neighbors: list[int] = []

        self.table: dict[int, TableEntry] = {}
        self.isolated: set[int] = set()
        self.monitor: dict[int, deque] = {}
        self.last_contact_ms: dict[int, int] = {}

        self.challenges: dict[int, AccuserChallenge] = {}
        self.last_challenge_ms: dict[int, int] = {}
        self.collects: dict[int, CollectState] = {}
        self.responded: set[tuple[int, int]] = set()

        self.cache: OrderedDict[tuple, bytes] = OrderedDict()
        self.processed_certs: set[tuple] = set()
        self.wanted_keys: set[tuple] = set()

        self.alarms: dict[int, AlarmState] = {}
        self.pending_alarms: dict[int, int] = {}
        self.alarm_attempts: dict[int, int] = {}
        self.last_alarm_seen_ms: dict[int, int] = {}
        self.flood_seen: set[tuple] = set()
        self.seen_nonces: set[tuple[int, int]] = set()

        # hooks the simulator wires up
        self.on_event = None          # fn(now_ms, kind, subject, detail)
        self.on_cert_accepted = None  # fn(cert_key, now_ms)

    # --- plumbing ---------------------------------------------------------

    def _log(self, now: int, kind: str, subject: int, detail: str = "") -> None:
        if self.on_event is not None:
            self.on_event(now, kind, subject, detail)

    def _nonce(self) -> int:
        return self.rng.getrandbits(64)

    def _frame(self, mess_type: RepMessType, subject: int, rep_val_raw: int,
               payload: bytes, now: int) -> bytes:
        header = ReputationHeader(
            mess_type=int(mess_type), subject=subject, rep_val_raw=rep_val_raw,
            timestamp_ms=now, nonce=self._nonce(), sender=self.node_id)
        return messages.encode_rep_mess(header, payload, self.secret)

    def note_contact(self, other: int, now: int) -> None:
        if other != self.node_id:
            self.last_contact_ms[other] = now

    def set_neighbors(self, neighbors: list[int]) -> None:
        self.neighbors = sorted(neighbors)

    # --- monitor ----------------------------------------------------------

    def monitor_observe(self, subject: int, outcome: int, now: int) -> list[Outgoing]:
        """Record one sampled forwarding outcome for a neighbor; may open
        a challenge when the windowed maliciousness crosses threshold."""
        if subject not in self.neighbors:
            return []
        self.note_contact(subject, now)
        window = self.monitor.setdefault(subject, deque())
        window.append((now, outcome))
        self._prune_window(window, now)
        m, denom = self._window_maliciousness(subject, now)
        if denom < self.params.min_samples or m <= self.params.monitor_threshold:
            return []
        if subject in self.isolated:
            return []
        self._log(now, "suspicion", subject, f"m={m:.4f} n={denom}")
        return self.initiate_challenge(subject, now)

    def _prune_window(self, window: deque, now: int) -> None:
        horizon = now - self.params.monitor_window_ms
        while window and window[0][0] < horizon:
            window.popleft()

    def _window_maliciousness(self, subject: int, now: int) -> tuple[float, int]:
        window = self.monitor.get(subject)
        if not window:
            return 0.0, 0
        self._prune_window(window, now)
        denom = len(window)
        if denom == 0:
            return 0.0, 0
        bad = sum(1 for _, outcome in window if outcome != OUTCOME_OK)
        return bad / denom, denom

    # --- challenge (accuser side) ----------------------------------------

    def initiate_challenge(self, subject: int, now: int) -> list[Outgoing]:
        if subject in self.challenges:
            return []
        last = self.last_challenge_ms.get(subject)
        if last is not None and now - last < self.params.challenge_cooldown_ms:
            return []
        nonce = self._nonce()
        self.challenges[subject] = AccuserChallenge(
            subject=subject, nonce=nonce, initiated_at_ms=now,
            ack_deadline_ms=now + self.params.challenge_ack_deadline_ms,
            close_at_ms=now + self.params.challenge_ack_deadline_ms
            + self.params.collect_window_ms + 5_000)
        self.last_challenge_ms[subject] = now
        self._log(now, "challenge", subject, "")
        frame = self._frame(RepMessType.CHALLENGE, subject, 0,
                            struct.pack(">Q", nonce), now)
        return [Outgoing(subject, RepMessType.CHALLENGE, frame)]

    # --- receive dispatch -------------------------------------------------

    def receive(self, data: bytes, now: int) -> list[Outgoing]:
        try:
            header, payload, frame_tag = messages.decode_rep_mess(data)
        except messages.MessageError as exc:
            self._log(now, "bad_frame", 0, type(exc).__name__)
            return []
        if not self.authority.verify_node(header.sender, data[:-messages.TAG_LEN],
                                          frame_tag):
            self._log(now, "bad_tag", header.sender, "")
            return []
        if now - header.timestamp_ms > self.params.replay_window_ms:
            return []
        replay_key = (header.sender, header.nonce)
        if replay_key in self.seen_nonces:
            return []
        self.seen_nonces.add(replay_key)
        self.note_contact(header.sender, now)

        mtype = RepMessType(header.mess_type)
        if mtype == RepMessType.CHALLENGE:
            return self._on_challenge(header, payload, now)
        if mtype == RepMessType.CHALLENGE_ACK:
            return self._on_challenge_ack(header, payload, now)
        if mtype == RepMessType.VERIFY_BEHAVIOR:
            return self._on_verify_behavior(header, payload, now)
        if mtype == RepMessType.REP_RESPONSE:
            return self._on_rep_response(header, payload, now)
        if mtype == RepMessType.REP_BROADCAST:
            return self._on_rep_broadcast(header, payload, now)
        if mtype == RepMessType.GLOBAL_ALARM:
            return self._on_global_alarm(header, payload, now)
        if mtype == RepMessType.ALARM_VOTE:
            return self._on_alarm_vote(header, payload, now)
        return []

    # --- challenge (accused side) ----------------------------------------

    def _on_challenge(self, header: ReputationHeader, payload: bytes,
                      now: int) -> list[Outgoing]:
        if header.subject != self.node_id or len(payload) != 8:
            return []
        (challenge_nonce,) = struct.unpack(">Q", payload)
        out = [Outgoing(header.sender, RepMessType.CHALLENGE_ACK,
                        self._frame(RepMessType.CHALLENGE_ACK, self.node_id, 0,
                                    struct.pack(">Q", challenge_nonce), now))]
        # one collection round at a time; concurrent accusers share it
        if any(not c.done for c in self.collects.values()):
            return out
        expected = set(self.neighbors) - {self.node_id}
        if not expected:
            return out
        nonce = self._nonce()
        self.collects[nonce] = CollectState(
            nonce=nonce, opened_at_ms=now,
            deadline_ms=now + self.params.collect_window_ms, expected=expected)
        self._log(now, "verify_behavior", self.node_id, f"fanout={len(expected)}")
        frame = self._frame(RepMessType.VERIFY_BEHAVIOR, self.node_id, 0,
                            struct.pack(">Q", nonce), now)
        out.append(Outgoing(None, RepMessType.VERIFY_BEHAVIOR, frame))
        return out

    def _on_challenge_ack(self, header: ReputationHeader, payload: bytes,
                          now: int) -> list[Outgoing]:
        state = self.challenges.get(header.sender)
        if state is None or len(payload) != 8:
            return []
        (challenge_nonce,) = struct.unpack(">Q", payload)
        if challenge_nonce == state.nonce:
            state.acked = True
        return []

    # --- respondent side --------------------------------------------------

    def _on_verify_behavior(self, header: ReputationHeader, payload: bytes,
                            now: int) -> list[Outgoing]:
        accused = header.sender
        if accused not in self.neighbors or len(payload) != 8:
            return []
        (collect_nonce,) = struct.unpack(">Q", payload)
        m, denom = self._window_maliciousness(accused, now)
        if denom == 0:
            m_raw, w_raw = 0, 0
        else:
            m_raw, w_raw = to_fixed(m), to_fixed(1.0)
        rtag = messages.tag(
            messages.response_sign_bytes(accused, self.node_id, m_raw, w_raw,
                                         collect_nonce),
            self.secret)
        self.responded.add((accused, collect_nonce))
        resp_payload = _RESP_PAYLOAD.pack(w_raw, collect_nonce) + rtag
        frame = self._frame(RepMessType.REP_RESPONSE, accused, m_raw,
                            resp_payload, now)
        return [Outgoing(accused, RepMessType.REP_RESPONSE, frame)]

    def _on_rep_response(self, header: ReputationHeader, payload: bytes,
                         now: int) -> list[Outgoing]:
        if header.subject != self.node_id or len(payload) != _RESP_PAYLOAD.size + messages.TAG_LEN:
            return []
        w_raw, collect_nonce = _RESP_PAYLOAD.unpack_from(payload, 0)
        rtag = payload[_RESP_PAYLOAD.size:]
        state = self.collects.get(collect_nonce)
        if state is None or state.done:
            return []
        respondent = header.sender
        if respondent not in state.expected or respondent in state.collected:
            return []
        state.collected[respondent] = CertResponse(
            respondent=respondent, maliciousness_raw=header.rep_val_raw,
            weight_raw=w_raw, tag=rtag)
        if len(state.collected) == len(state.expected):
            return self._aggregate(state, now)
        return []

    def _aggregate(self, state: CollectState, now: int) -> list[Outgoing]:
        state.done = True
        responses = self._select_responses(list(state.collected.values()))
        cert = messages.build_certificate(
            subject=self.node_id, issuer=self.node_id, issued_at_ms=now,
            challenge_nonce=state.nonce, responses=responses,
            threshold=self.params.maliciousness_threshold,
            issuer_secret=self.secret)
        cert_bytes = messages.encode_certificate(cert)
        self.processed_certs.add(cert.key())
        self._cache_put(cert.key(), cert_bytes, now)
        self._log(now, "cert_issued", self.node_id,
                  f"gt={cert.group_trust_raw} n={len(cert.responses)}")
        if self.on_cert_accepted is not None:
            self.on_cert_accepted(cert.key(), now)
        # broadcast to all neighbors; a random F-fraction of them become
        # cache carriers (initial flood), the rest only process it
        targets = sorted(set(self.neighbors))
        n_seed = math.ceil(self.params.f_fraction * len(targets))
        seeds = set(self.rng.sample(targets, min(n_seed, len(targets))))
        out = []
        for neighbor in targets:
            flag = b"\x01" if neighbor in seeds else b"\x00"
            frame = self._frame(RepMessType.REP_BROADCAST, self.node_id, 0,
                                flag + cert_bytes, now)
            out.append(Outgoing(neighbor, RepMessType.REP_BROADCAST, frame))
        return out

    # --- certificate maintenance -----------------------------------------

    def _on_rep_broadcast(self, header: ReputationHeader, payload: bytes,
                          now: int) -> list[Outgoing]:
        if len(payload) < 1:
            return []
        cache = payload[0] == 1
        return self.handle_certificate(payload[1:], now, cache=cache,
                                       from_node=header.sender)

    def handle_certificate(self, cert_bytes: bytes, now: int, *, cache: bool,
                           from_node: int) -> list[Outgoing]:
        try:
            cert = messages.decode_certificate(cert_bytes)
        except messages.MessageError as exc:
            self._log(now, "cert_malformed", 0, type(exc).__name__)
            return []
        if cert.subject == self.node_id:
            return []
        key = cert.key()
        if key in self.processed_certs:
            # identical certificate seen before: table already reflects it
            if cache and key not in self.cache:
                self._cache_put(key, cert_bytes, now)
            return []

        verdict = messages.verify_group_certificate(
            cert, None, self.params.maliciousness_threshold, self.authority)
        if verdict is Verdict.VALID and \
                (cert.subject, cert.challenge_nonce) in self.responded and \
                self.node_id not in cert.respondent_ids():
            verdict = Verdict.DROPPED_FEEDBACK
        if verdict is not Verdict.VALID:
            self._log(now, "cert_rejected", cert.subject, verdict.value)
            if verdict is Verdict.DROPPED_FEEDBACK:
                # the aggregator suppressed this node's feedback: direct
                # evidence of protocol violation by the issuer
                entry = self.table.setdefault(cert.issuer, TableEntry())
                entry.rep_val = 0.0
                entry.last_updated_ms = now
                self.schedule_alarm(cert.issuer, now)
            return []

        self.processed_certs.add(key)
        self.wanted_keys.discard(key)
        entry = self.table.setdefault(cert.subject, TableEntry())
        effective = [r for r in cert.responses if r.weight_raw > 0]
        fingerprint = frozenset(r.respondent for r in effective)
        k = 2 if fingerprint in entry.accepted_respondent_sets else 1
        a3 = trust_math.alpha3(k)
        obs = [
            trust_math.MaliciousnessObservation(
                respondent=r.respondent,
                maliciousness=from_fixed(r.maliciousness_raw),
                weight=from_fixed(r.weight_raw),
                respondent_trust=self._trust_in(r.respondent),
            )
            for r in effective
        ]
        if obs:
            majority, _ = trust_math.partition_majority(
                obs, self.params.maliciousness_threshold)
            total_weight = sum(o.weight for o in obs)
            a1 = trust_math.alpha1(majority, total_weight) if total_weight > 0 else 0.0
            n_high = sum(1 for o in obs
                         if o.maliciousness >= self.params.maliciousness_threshold)
            adverse = n_high > len(obs) - n_high
        else:
            a1, adverse = 0.0, False
        b = trust_math.beta(a1, self.params.alpha2, a3)
        t_old = entry.rep_val
        t_new = trust_math.update_trust(
            t_old, from_fixed(cert.group_trust_raw), self.params.alpha, b, 0.0)
        entry.rep_val = t_new
        entry.last_updated_ms = now
        entry.accepted_respondent_sets.add(fingerprint)
        self._log(now, "cert_accepted", cert.subject,
                  f"t={t_new:.4f} b={b:.4f}")
        if self.on_cert_accepted is not None:
            self.on_cert_accepted(key, now)
        if cache:
            self._cache_put(key, cert_bytes, now)

        out = []
        if adverse:
            # pass adverse certificates on to the subject's other known
            # neighbors (the respondents we can still reach directly)
            targets = (set(self.neighbors) & set(cert.respondent_ids())) \
                - {from_node, cert.subject, self.node_id}
            for neighbor in sorted(targets):
                frame = self._frame(RepMessType.REP_BROADCAST, cert.subject, 0,
                                    b"\x01" + cert_bytes, now)
                out.append(Outgoing(neighbor, RepMessType.REP_BROADCAST, frame))
        if t_new < trust_math.MALICIOUS_BELOW:
            self.schedule_alarm(cert.subject, now)
        return out

    def _trust_in(self, node: int) -> float:
        entry = self.table.get(node)
        return entry.rep_val if entry is not None else 1.0

    def _cache_put(self, key: tuple, cert_bytes: bytes, now: int) -> None:
        if key in self.cache:
            return
        while len(self.cache) >= self.params.cache_capacity:
            self.cache.popitem(last=False)
        self.cache[key] = cert_bytes

    # --- alarm raiser -----------------------------------------------------

    def schedule_alarm(self, subject: int, now: int) -> None:
        """Queue an alarm with a short random holdoff.

        Many nodes typically learn of the same adverse certificate within
        one broadcast round; the jitter lets the first raiser's flood reach
        the rest before their own raise fires, so one alarm (not one per
        recipient) goes network-wide.
        """
        if subject in self.isolated or subject in self.alarms or \
                subject in self.pending_alarms:
            return
        if self.alarm_attempts.get(subject, 0) >= self.params.max_alarm_attempts:
            return
        last_seen = self.last_alarm_seen_ms.get(subject)
        if last_seen is not None and now - last_seen < self.params.alarm_cooldown_ms:
            return
        self.pending_alarms[subject] = \
            now + self.rng.randint(0, self.params.alarm_jitter_ms)

    def raise_global_alarm(self, subject: int, now: int) -> list[Outgoing]:
        if subject in self.isolated or subject in self.alarms:
            return []
        last_seen = self.last_alarm_seen_ms.get(subject)
        if last_seen is not None and now - last_seen < self.params.alarm_cooldown_ms:
            return []
        if self.alarm_attempts.get(subject, 0) >= self.params.max_alarm_attempts:
            return []
        self.alarm_attempts[subject] = self.alarm_attempts.get(subject, 0) + 1
        nonce = self._nonce()
        state = AlarmState(subject=subject, nonce=nonce, raised_at_ms=now,
                           deadline_ms=now + self.params.vote_window_ms)
        own_tag = messages.tag(
            vote_sign_bytes(subject, self.node_id, self.node_id, nonce, True),
            self.secret)
        state.votes[self.node_id] = (True, own_tag)
        self.alarms[subject] = state
        self.last_alarm_seen_ms[subject] = now
        self.flood_seen.add((subject, self.node_id, nonce))
        self._log(now, "alarm_raised", subject, "")
        payload = _ALARM_PAYLOAD.pack(0, self.node_id, nonce)
        frame = self._frame(RepMessType.GLOBAL_ALARM, subject, 0, payload, now)
        return [Outgoing(None, RepMessType.GLOBAL_ALARM, frame)]

    def _on_global_alarm(self, header: ReputationHeader, payload: bytes,
                         now: int) -> list[Outgoing]:
        if len(payload) < _ALARM_PAYLOAD.size:
            return []
        kind, raiser, alarm_nonce = _ALARM_PAYLOAD.unpack_from(payload, 0)
        subject = header.subject
        if kind == 0:
            flood_key = (subject, raiser, alarm_nonce)
            if flood_key in self.flood_seen:
                return []
            self.flood_seen.add(flood_key)
            self.last_alarm_seen_ms[subject] = now
            # someone else beat this node's own pending raise to it
            self.pending_alarms.pop(subject, None)
            # re-broadcast once, then vote if this node has an opinion
            out = [Outgoing(None, RepMessType.GLOBAL_ALARM,
                            self._frame(RepMessType.GLOBAL_ALARM, subject, 0,
                                        payload, now))]
            if subject == self.node_id or raiser == self.node_id:
                return out
            vote = self._alarm_vote(subject, now)
            if vote is None:
                return out
            vtag = messages.tag(
                vote_sign_bytes(subject, raiser, self.node_id, alarm_nonce, vote),
                self.secret)
            vote_payload = _ALARM_PAYLOAD.pack(0, raiser, alarm_nonce) + \
                _VOTE_RECORD.pack(self.node_id, 1 if vote else 0) + vtag
            self._log(now, "vote", subject, f"v={int(vote)} to={raiser}")
            out.append(Outgoing(raiser, RepMessType.ALARM_VOTE,
                                self._frame(RepMessType.ALARM_VOTE, subject,
                                            to_fixed(1.0) if vote else 0,
                                            vote_payload, now)))
            return out
        if kind == 1:
            return self._on_verdict(subject, raiser, alarm_nonce, payload, now)
        return []

    def _alarm_vote(self, subject: int, now: int) -> bool | None:
        """Vote on an alarm, or None when not an eligible voter.

        Eligible = interacted with the subject recently *and* holds an
        opinion (a table entry, or monitor samples when no entry exists).
        """
        last = self.last_contact_ms.get(subject)
        if last is None or now - last > self.params.interaction_window_ms:
            return None
        entry = self.table.get(subject)
        m, denom = self._window_maliciousness(subject, now)
        if denom > 0 and m > self.params.monitor_threshold:
            # first-hand observation of misbehavior outranks whatever
            # second-hand certificates put in the table
            return True
        if entry is not None:
            return entry.rep_val < trust_math.MALICIOUS_BELOW
        if denom == 0:
            return None
        return False

    def _on_alarm_vote(self, header: ReputationHeader, payload: bytes,
                       now: int) -> list[Outgoing]:
        need = _ALARM_PAYLOAD.size + _VOTE_RECORD.size + messages.TAG_LEN
        if len(payload) != need:
            return []
        _, raiser, alarm_nonce = _ALARM_PAYLOAD.unpack_from(payload, 0)
        voter, vote_byte = _VOTE_RECORD.unpack_from(payload, _ALARM_PAYLOAD.size)
        vtag = payload[_ALARM_PAYLOAD.size + _VOTE_RECORD.size:]
        if raiser != self.node_id or voter != header.sender:
            return []
        state = self.alarms.get(header.subject)
        if state is None or state.nonce != alarm_nonce or now > state.deadline_ms:
            return []
        vote = vote_byte == 1
        signed = vote_sign_bytes(header.subject, raiser, voter, alarm_nonce, vote)
        if not self.authority.verify_node(voter, signed, vtag):
            return []
        state.votes.setdefault(voter, (vote, vtag))
        return []

    def _tally_alarm(self, state: AlarmState, now: int) -> list[Outgoing]:
        votes = state.votes
        yes = sum(1 for v, _ in votes.values() if v)
        total = len(votes)
        self._log(now, "alarm_tally", state.subject, f"yes={yes} total={total}")
        if total < self.params.min_voters or 2 * yes <= total:
            self._log(now, "alarm_expired", state.subject, "")
            return []
        self.isolated.add(state.subject)
        self._log(now, "isolated", state.subject, f"yes={yes} total={total}")
        records = b"".join(
            _VOTE_RECORD.pack(voter, 1 if v else 0) + vtag
            for voter, (v, vtag) in sorted(votes.items()))
        payload = _ALARM_PAYLOAD.pack(1, self.node_id, state.nonce) + \
            struct.pack(">H", total) + records
        self.flood_seen.add((state.subject, self.node_id, state.nonce, "v"))
        frame = self._frame(RepMessType.GLOBAL_ALARM, state.subject, 0,
                            payload, now)
        return [Outgoing(None, RepMessType.GLOBAL_ALARM, frame)]

    def _on_verdict(self, subject: int, raiser: int, alarm_nonce: int,
                    payload: bytes, now: int) -> list[Outgoing]:
        flood_key = (subject, raiser, alarm_nonce, "v")
        if flood_key in self.flood_seen:
            return []
        self.flood_seen.add(flood_key)
        off = _ALARM_PAYLOAD.size
        if len(payload) < off + 2:
            return []
        (count,) = struct.unpack_from(">H", payload, off)
        off += 2
        rec_len = _VOTE_RECORD.size + messages.TAG_LEN
        if len(payload) != off + count * rec_len:
            return []
        yes = total = 0
        seen_voters = set()
        for _ in range(count):
            voter, vote_byte = _VOTE_RECORD.unpack_from(payload, off)
            off += _VOTE_RECORD.size
            vtag = payload[off:off + messages.TAG_LEN]
            off += messages.TAG_LEN
            if voter in seen_voters:
                continue
            vote = vote_byte == 1
            signed = vote_sign_bytes(subject, raiser, voter, alarm_nonce, vote)
            try:
                ok = self.authority.verify_node(voter, signed, vtag)
            except messages.UnknownBinding:
                ok = False
            if not ok:
                continue
            seen_voters.add(voter)
            total += 1
            yes += 1 if vote else 0
        out = [Outgoing(None, RepMessType.GLOBAL_ALARM,
                        self._frame(RepMessType.GLOBAL_ALARM, subject, 0,
                                    payload, now))]
        if total >= self.params.min_voters and 2 * yes > total and \
                subject != self.node_id:
            self.isolated.add(subject)
            self.pending_alarms.pop(subject, None)
            self._log(now, "isolated", subject, f"verdict from={raiser}")
        return out

    # --- timers -----------------------------------------------------------

    def tick(self, now: int) -> list[Outgoing]:
        out: list[Outgoing] = []
        for subject in list(self.challenges):
            state = self.challenges[subject]
            if not state.acked and now >= state.ack_deadline_ms:
                # silence on challenge: treated as maximal maliciousness
                self._log(now, "challenge_silent", subject, "")
                entry = self.table.setdefault(subject, TableEntry())
                entry.rep_val = 0.0
                entry.last_updated_ms = now
                self.schedule_alarm(subject, now)
                del self.challenges[subject]
            elif now >= state.close_at_ms:
                del self.challenges[subject]
        for nonce in list(self.collects):
            state = self.collects[nonce]
            if not state.done and now >= state.deadline_ms:
                if state.collected:
                    out.extend(self._aggregate(state, now))
                else:
                    state.done = True
            if state.done and now >= state.deadline_ms + self.params.replay_window_ms:
                del self.collects[nonce]
        for subject, due in list(self.pending_alarms.items()):
            if now >= due:
                del self.pending_alarms[subject]
                out.extend(self.raise_global_alarm(subject, now))
        for subject in list(self.alarms):
            state = self.alarms[subject]
            if now >= state.deadline_ms:
                out.extend(self._tally_alarm(state, now))
                del self.alarms[subject]
        # retry subjects the table condemns but the network has not yet
        # isolated (e.g. an earlier alarm that fell short of quorum)
        for subject, entry in self.table.items():
            if entry.rep_val < trust_math.MALICIOUS_BELOW and \
                    subject not in self.isolated:
                self.schedule_alarm(subject, now)
        return out

    def replenish_tick(self, now: int) -> None:
        for entry in self.table.values():
            entry.rep_val = trust_math.replenish(entry.rep_val, self.params.delta)

    # --- certificate exchange (simulator-mediated) ------------------------

    def cache_keys(self) -> list[tuple]:
        return list(self.cache.keys())

    def cache_get(self, key: tuple) -> bytes | None:
        return self.cache.get(key)

    def cache_replace(self, key: tuple, cert_bytes: bytes) -> None:
        self.cache[key] = cert_bytes

    def receive_exchanged_cert(self, cert_bytes: bytes, from_node: int,
                               now: int) -> list[Outgoing]:
        self.note_contact(from_node, now)
        return self.handle_certificate(cert_bytes, now, cache=True,
                                       from_node=from_node)

    def piggyback_keys(self) -> list[tuple]:
        keys = list(self.cache.keys())
        return keys[-self.params.piggyback_budget:]

    def note_piggyback(self, keys: list[tuple]) -> None:
        for key in keys:
            if key not in self.cache and key not in self.processed_certs:
                self.wanted_keys.add(key)

    # --- adversary hooks (honest defaults) --------------------------------

    def _select_responses(self, responses: list[CertResponse]) -> list[CertResponse]:
        return responses

    def shares_cache(self) -> bool:
        return True

    def outgoing_cache_bytes(self, key: tuple) -> bytes | None:
        return self.cache.get(key)
