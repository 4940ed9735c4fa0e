"""Wire format for reputation messages and group-trust certificates,
plus the identity bootstrap model (authority registry, univocal
credentials, authenticity tags).

Frame layout, big-endian throughout:

    [0]      version (=1)
    [1]      message type
    [2..6)   subject node id (u32)
    [6..8)   rep_val, fixed point, scale 1/10000 (u16)
    [8..16)  timestamp, ms since scenario start (u64)
    [16..24) nonce (u64)
    [24..28) sender node id (u32)
    [28..30) payload length (u16)
    [30..30+len)  payload
    final 32 bytes: authenticity tag over all preceding bytes

Tags are keyed deterministic digests. They stand in for real signatures:
any single-bit change in the covered bytes flips verification, which is
all the protocol checks require. Cryptographic strength is a non-goal.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import struct
from dataclasses import dataclass

FIXED_POINT_SCALE = 10000
VERSION = 1
HEADER_LEN = 30
TAG_LEN = 32
MIN_FRAME_LEN = HEADER_LEN + TAG_LEN
MAX_PAYLOAD = 65535
AUTHORITY_ID = 0

_HEADER = struct.Struct(">BBIHQQIH")


class MessageError(ValueError):
    """Base class for codec and registry failures."""


class Truncated(MessageError):
    pass


class BadVersion(MessageError):
    pass


class UnknownType(MessageError):
    pass


class RepValOverflow(MessageError):
    pass


class LengthMismatch(MessageError):
    pass


class PayloadTooLarge(MessageError):
    pass


class UnknownBinding(MessageError):
    pass


class DuplicateCredential(MessageError):
    pass


class RepMessType(enum.IntEnum):
    REP_REQUEST = 0
    REP_RESPONSE = 1
    REP_BROADCAST = 2
    CHALLENGE = 3
    CHALLENGE_ACK = 4
    VERIFY_BEHAVIOR = 5
    GLOBAL_ALARM = 6
    ALARM_VOTE = 7
    CERT_EXCHANGE = 8


def to_fixed(value: float) -> int:
    """Encode a real in [0, 1] as a raw fixed-point value, round half up."""
    if not 0.0 <= value <= 1.0:
        raise MessageError(f"value {value} outside [0, 1]")
    return int(value * FIXED_POINT_SCALE + 0.5)


def from_fixed(raw: int) -> float:
    if not 0 <= raw <= FIXED_POINT_SCALE:
        raise RepValOverflow(f"raw fixed-point value {raw} > {FIXED_POINT_SCALE}")
    return raw / FIXED_POINT_SCALE


@dataclass(frozen=True)
class ReputationHeader:
    mess_type: int
    subject: int
    rep_val_raw: int
    timestamp_ms: int
    nonce: int
    sender: int
    version: int = VERSION


def tag(message_bytes: bytes, secret: bytes) -> bytes:
    """Deterministic 32-byte authenticity tag keyed by the signer secret."""
    return hashlib.blake2b(message_bytes, key=secret, digest_size=TAG_LEN).digest()


def binding_of(secret: bytes) -> bytes:
    """Public binding derived from a secret; what the registry publishes."""
    return hashlib.blake2b(secret, digest_size=TAG_LEN, person=b"twbind").digest()


def credential_hash(credential: bytes) -> bytes:
    return hashlib.blake2b(credential, digest_size=TAG_LEN, person=b"twcred").digest()


@dataclass(frozen=True)
class IdentityCertificate:
    node: int
    credential_hash: bytes
    public_binding: bytes
    authority_tag: bytes

    def signed_bytes(self) -> bytes:
        return struct.pack(">I", self.node) + self.credential_hash + self.public_binding


class Authority:
    """Simulated certifying authority and public directory.

    Holds the secret-to-binding registry used to check authenticity tags
    (the simulator's stand-in for public-key verification) and enforces
    the one-certificate-per-credential rule. Written only during the
    single-threaded bootstrap phase.
    """

    def __init__(self, secret: bytes = b"\x00" * 32):
        self._secret = secret
        self._secrets_by_binding: dict[bytes, bytes] = {}
        self._binding_by_node: dict[int, bytes] = {}
        self._identities: dict[bytes, IdentityCertificate] = {}
        self._binding_by_node[AUTHORITY_ID] = self.register_secret(secret)

    def register_secret(self, secret: bytes) -> bytes:
        binding = binding_of(secret)
        self._secrets_by_binding[binding] = secret
        return binding

    def enroll(self, node_id: int, secret: bytes) -> bytes:
        """Register a node's secret and publish its binding."""
        binding = self.register_secret(secret)
        self._binding_by_node[node_id] = binding
        return binding

    def binding(self, node_id: int) -> bytes:
        try:
            return self._binding_by_node[node_id]
        except KeyError:
            raise UnknownBinding(f"node {node_id} has no registered binding")

    def verify_tag(self, message_bytes: bytes, tag_: bytes, binding: bytes) -> bool:
        try:
            secret = self._secrets_by_binding[binding]
        except KeyError:
            raise UnknownBinding("binding not registered with the authority")
        return hmac.compare_digest(tag(message_bytes, secret), tag_)

    def verify_node(self, node_id: int, message_bytes: bytes, tag_: bytes) -> bool:
        binding = self._binding_by_node.get(node_id)
        if binding is None:
            return False
        return self.verify_tag(message_bytes, tag_, binding)

    def issue_identity(self, node_id: int, credential: bytes,
                       public_binding: bytes) -> IdentityCertificate:
        """Bind hash(credential) to a node binding, once per credential."""
        chash = credential_hash(credential)
        if chash in self._identities:
            raise DuplicateCredential(
                "a valid certificate already exists for this credential")
        body = struct.pack(">I", node_id) + chash + public_binding
        cert = IdentityCertificate(
            node=node_id,
            credential_hash=chash,
            public_binding=public_binding,
            authority_tag=tag(body, self._secret),
        )
        self._identities[chash] = cert
        return cert

    def identity_for(self, credential: bytes) -> IdentityCertificate | None:
        return self._identities.get(credential_hash(credential))


def encode_rep_mess(header: ReputationHeader, payload: bytes,
                    signer_secret: bytes) -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    if not 0 <= header.rep_val_raw <= FIXED_POINT_SCALE:
        raise RepValOverflow(f"rep_val raw {header.rep_val_raw} > {FIXED_POINT_SCALE}")
    body = _HEADER.pack(
        header.version, header.mess_type, header.subject, header.rep_val_raw,
        header.timestamp_ms, header.nonce, header.sender, len(payload),
    ) + payload
    return body + tag(body, signer_secret)


def decode_rep_mess(data: bytes) -> tuple[ReputationHeader, bytes, bytes]:
    """Parse a frame into (header, payload, tag).

    The tag is returned for separate verification, never silently dropped.
    """
    if len(data) < MIN_FRAME_LEN:
        raise Truncated(f"frame of {len(data)} bytes below minimum {MIN_FRAME_LEN}")
    version, mtype, subject, rep_val_raw, ts, nonce, sender, payload_len = \
        _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise BadVersion(f"unsupported version {version}")
    try:
        RepMessType(mtype)
    except ValueError:
        raise UnknownType(f"unknown message type {mtype}")
    if rep_val_raw > FIXED_POINT_SCALE:
        raise RepValOverflow(f"rep_val raw {rep_val_raw} > {FIXED_POINT_SCALE}")
    if len(data) != HEADER_LEN + payload_len + TAG_LEN:
        raise LengthMismatch(
            f"payload_len {payload_len} inconsistent with frame of {len(data)} bytes")
    payload = data[HEADER_LEN:HEADER_LEN + payload_len]
    frame_tag = data[HEADER_LEN + payload_len:]
    header = ReputationHeader(
        mess_type=mtype, subject=subject, rep_val_raw=rep_val_raw,
        timestamp_ms=ts, nonce=nonce, sender=sender, version=version,
    )
    return header, payload, frame_tag


# --- group-trust certificates -------------------------------------------

_CERT_HEAD = struct.Struct(">IIQQHH")
_CERT_RESP = struct.Struct(">IHH")
_RESP_SIGN = struct.Struct(">IIHHQ")


class Verdict(enum.Enum):
    VALID = "valid"
    TAMPERED_RESPONSE = "tampered_response"
    DROPPED_FEEDBACK = "dropped_feedback"
    WRONG_GROUP_TRUST = "wrong_group_trust"
    BAD_ISSUER_TAG = "bad_issuer_tag"


@dataclass(frozen=True)
class CertResponse:
    respondent: int
    maliciousness_raw: int
    weight_raw: int
    tag: bytes


@dataclass(frozen=True)
class GroupTrustCertificate:
    subject: int
    issuer: int
    issued_at_ms: int
    challenge_nonce: int
    group_trust_raw: int
    responses: tuple[CertResponse, ...]
    certificate_tag: bytes

    def key(self) -> tuple[int, int, int, int]:
        return (self.subject, self.issuer, self.issued_at_ms,
                self.challenge_nonce)

    def respondent_ids(self) -> tuple[int, ...]:
        return tuple(r.respondent for r in self.responses)


def response_sign_bytes(subject: int, respondent: int, maliciousness_raw: int,
                        weight_raw: int, challenge_nonce: int) -> bytes:
    """Canonical bytes a respondent tags when feeding back an observation."""
    return _RESP_SIGN.pack(subject, respondent, maliciousness_raw,
                           weight_raw, challenge_nonce)


def certificate_body_bytes(cert: GroupTrustCertificate) -> bytes:
    parts = [_CERT_HEAD.pack(cert.subject, cert.issuer, cert.issued_at_ms,
                             cert.challenge_nonce, cert.group_trust_raw,
                             len(cert.responses))]
    for r in cert.responses:
        parts.append(_CERT_RESP.pack(r.respondent, r.maliciousness_raw,
                                     r.weight_raw))
        parts.append(r.tag)
    return b"".join(parts)


def encode_certificate(cert: GroupTrustCertificate) -> bytes:
    return certificate_body_bytes(cert) + cert.certificate_tag


def decode_certificate(data: bytes) -> GroupTrustCertificate:
    head_len = _CERT_HEAD.size
    if len(data) < head_len + TAG_LEN:
        raise Truncated(f"certificate of {len(data)} bytes is too short")
    subject, issuer, issued_at, nonce, gt_raw, count = _CERT_HEAD.unpack_from(data, 0)
    resp_len = _CERT_RESP.size + TAG_LEN
    expected = head_len + count * resp_len + TAG_LEN
    if len(data) != expected:
        raise LengthMismatch(
            f"certificate with {count} responses should be {expected} bytes, "
            f"got {len(data)}")
    if gt_raw > FIXED_POINT_SCALE:
        raise RepValOverflow(f"group trust raw {gt_raw} > {FIXED_POINT_SCALE}")
    responses = []
    off = head_len
    for _ in range(count):
        respondent, m_raw, w_raw = _CERT_RESP.unpack_from(data, off)
        off += _CERT_RESP.size
        rtag = data[off:off + TAG_LEN]
        off += TAG_LEN
        responses.append(CertResponse(respondent, m_raw, w_raw, rtag))
    return GroupTrustCertificate(
        subject=subject, issuer=issuer, issued_at_ms=issued_at,
        challenge_nonce=nonce, group_trust_raw=gt_raw,
        responses=tuple(responses), certificate_tag=data[off:off + TAG_LEN],
    )


def _recompute_group_trust_raw(responses: tuple[CertResponse, ...],
                               threshold: float) -> int:
    from . import trust_math
    obs = [
        trust_math.MaliciousnessObservation(
            respondent=r.respondent,
            maliciousness=from_fixed(r.maliciousness_raw),
            weight=from_fixed(r.weight_raw),
        )
        for r in responses
    ]
    if not obs:
        return FIXED_POINT_SCALE
    return to_fixed(trust_math.group_trust(obs, threshold).group_trust)


def build_certificate(subject: int, issuer: int, issued_at_ms: int,
                      challenge_nonce: int,
                      responses: list[CertResponse],
                      threshold: float,
                      issuer_secret: bytes) -> GroupTrustCertificate:
    """Assemble and tag a certificate from collected responses.

    Responses are canonicalized to ascending respondent order before
    tagging so byte-level cache comparison is meaningful.
    """
    ordered = tuple(sorted(responses, key=lambda r: r.respondent))
    gt_raw = _recompute_group_trust_raw(ordered, threshold)
    unsigned = GroupTrustCertificate(
        subject=subject, issuer=issuer, issued_at_ms=issued_at_ms,
        challenge_nonce=challenge_nonce, group_trust_raw=gt_raw,
        responses=ordered, certificate_tag=b"",
    )
    cert_tag = tag(certificate_body_bytes(unsigned), issuer_secret)
    return GroupTrustCertificate(
        subject=subject, issuer=issuer, issued_at_ms=issued_at_ms,
        challenge_nonce=challenge_nonce, group_trust_raw=gt_raw,
        responses=ordered, certificate_tag=cert_tag,
    )


def verify_group_certificate(cert: GroupTrustCertificate,
                             expected_respondents: set[int] | None,
                             threshold: float,
                             authority: Authority) -> Verdict:
    """Check a certificate end to end; return the first failing check.

    expected_respondents is the caller's own knowledge of who took part;
    pass None to skip the set-equality check (a third party that was not
    a respondent cannot know the full set).
    """
    for r in cert.responses:
        signed = response_sign_bytes(cert.subject, r.respondent,
                                     r.maliciousness_raw, r.weight_raw,
                                     cert.challenge_nonce)
        if not authority.verify_node(r.respondent, signed, r.tag):
            return Verdict.TAMPERED_RESPONSE
    if expected_respondents is not None:
        if set(cert.respondent_ids()) != set(expected_respondents):
            return Verdict.DROPPED_FEEDBACK
    expected_raw = _recompute_group_trust_raw(cert.responses, threshold)
    if abs(expected_raw - cert.group_trust_raw) > 1:
        return Verdict.WRONG_GROUP_TRUST
    body = certificate_body_bytes(cert)
    if not authority.verify_node(cert.issuer, body, cert.certificate_tag):
        return Verdict.BAD_ISSUER_TAG
    return Verdict.VALID
