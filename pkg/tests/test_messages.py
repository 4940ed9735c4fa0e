"""Wire codec, identity registry, and certificate verification."""

import random
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trustwatch import messages
from trustwatch.messages import (
    FIXED_POINT_SCALE,
    HEADER_LEN,
    MIN_FRAME_LEN,
    TAG_LEN,
    Authority,
    BadVersion,
    CertResponse,
    DuplicateCredential,
    LengthMismatch,
    RepMessType,
    RepValOverflow,
    ReputationHeader,
    Truncated,
    UnknownBinding,
    UnknownType,
    Verdict,
    build_certificate,
    decode_certificate,
    decode_rep_mess,
    encode_certificate,
    encode_rep_mess,
    from_fixed,
    response_sign_bytes,
    tag,
    to_fixed,
    verify_group_certificate,
)

THRESHOLD = 0.5


def random_header(rng, mess_type=None):
    return ReputationHeader(
        mess_type=int(mess_type if mess_type is not None
                      else rng.choice(list(RepMessType))),
        subject=rng.randrange(2**32),
        rep_val_raw=rng.randrange(FIXED_POINT_SCALE + 1),
        timestamp_ms=rng.randrange(2**64),
        nonce=rng.randrange(2**64),
        sender=rng.randrange(2**32),
    )


@pytest.fixture()
def authority():
    auth = Authority()
    for nid in range(1, 10):
        auth.enroll(nid, bytes([nid]) * 16)
    return auth


def make_cert(authority, subject=5, issuer=5, respondents=(1, 2, 3),
              ms=(0.0, 0.0, 0.0), ws=None, nonce=77, at_ms=1000):
    ws = ws if ws is not None else [1.0] * len(respondents)
    responses = []
    for rid, m, w in zip(respondents, ms, ws):
        m_raw, w_raw = to_fixed(m), to_fixed(w)
        rtag = tag(response_sign_bytes(subject, rid, m_raw, w_raw, nonce),
                   bytes([rid]) * 16)
        responses.append(CertResponse(rid, m_raw, w_raw, rtag))
    return build_certificate(subject=subject, issuer=issuer, issued_at_ms=at_ms,
                             challenge_nonce=nonce, responses=responses,
                             threshold=THRESHOLD,
                             issuer_secret=bytes([issuer]) * 16)


# --- fixed point ----------------------------------------------------------

def test_fixed_point_round_half_up():
    assert to_fixed(0.0) == 0
    assert to_fixed(1.0) == FIXED_POINT_SCALE
    assert to_fixed(0.00005) == 1
    assert to_fixed(0.33333) == 3333
    assert from_fixed(3333) == 0.3333


def test_fixed_point_rejects_out_of_range():
    with pytest.raises(messages.MessageError):
        to_fixed(1.01)
    with pytest.raises(RepValOverflow):
        from_fixed(FIXED_POINT_SCALE + 1)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, FIXED_POINT_SCALE))
def test_fixed_point_round_trip_raw(raw):
    assert to_fixed(from_fixed(raw)) == raw


# --- frame codec ----------------------------------------------------------

def test_round_trip_10k_random_frames():
    rng = random.Random(2024)
    secret = b"s" * 16
    start = time.perf_counter()
    for _ in range(10_000):
        header = random_header(rng)
        payload = rng.randbytes(rng.randrange(0, 64))
        frame = encode_rep_mess(header, payload, secret)
        got_header, got_payload, got_tag = decode_rep_mess(frame)
        assert got_header == header
        assert got_payload == payload
        # canonical re-encode reproduces the original bytes
        assert encode_rep_mess(got_header, got_payload, secret) == frame
        assert got_tag == frame[-TAG_LEN:]
    assert time.perf_counter() - start < 30.0


def test_single_byte_mutation_detected_exhaustively():
    """Every single-byte corruption of a frame must either fail to decode,
    decode to different content, or fail tag verification."""
    rng = random.Random(99)
    auth = Authority()
    secret = b"m" * 16
    auth.enroll(7, secret)
    start = time.perf_counter()
    frames = []
    for _ in range(8):
        header = random_header(rng)
        header = ReputationHeader(
            mess_type=header.mess_type, subject=header.subject,
            rep_val_raw=header.rep_val_raw, timestamp_ms=header.timestamp_ms,
            nonce=header.nonce, sender=7)
        payload = rng.randbytes(rng.randrange(0, 128 - MIN_FRAME_LEN + 1))
        frames.append(encode_rep_mess(header, payload, secret))
    for frame in frames:
        assert len(frame) <= 128
        for pos in range(len(frame)):
            for delta in (0x01, 0x80, 0xFF):
                mutated = bytearray(frame)
                mutated[pos] ^= delta
                mutated = bytes(mutated)
                try:
                    _, _, mtag = decode_rep_mess(mutated)
                except messages.MessageError:
                    continue
                assert not auth.verify_node(7, mutated[:-TAG_LEN], mtag), \
                    f"mutation at byte {pos} went undetected"
    assert time.perf_counter() - start < 30.0


def test_decode_error_precedence():
    secret = b"x" * 16
    header = ReputationHeader(mess_type=int(RepMessType.CHALLENGE), subject=1,
                              rep_val_raw=0, timestamp_ms=0, nonce=0, sender=2)
    frame = bytearray(encode_rep_mess(header, b"pay", secret))

    with pytest.raises(Truncated):
        decode_rep_mess(bytes(frame[:MIN_FRAME_LEN - 1]))

    bad_version = bytes([2]) + bytes(frame[1:])
    with pytest.raises(BadVersion):
        decode_rep_mess(bad_version)

    bad_type = bytes(frame[:1]) + bytes([200]) + bytes(frame[2:])
    with pytest.raises(UnknownType):
        decode_rep_mess(bad_type)

    overflow = bytearray(frame)
    overflow[6:8] = (FIXED_POINT_SCALE + 1).to_bytes(2, "big")
    with pytest.raises(RepValOverflow):
        decode_rep_mess(bytes(overflow))

    short_len = bytearray(frame)
    short_len[28:30] = (1).to_bytes(2, "big")
    with pytest.raises(LengthMismatch):
        decode_rep_mess(bytes(short_len))


def test_payload_too_large_rejected_on_encode():
    header = ReputationHeader(mess_type=0, subject=1, rep_val_raw=0,
                              timestamp_ms=0, nonce=0, sender=1)
    with pytest.raises(messages.PayloadTooLarge):
        encode_rep_mess(header, b"a" * 65_536, b"s" * 16)


def test_min_frame_length_constant():
    header = ReputationHeader(mess_type=0, subject=0, rep_val_raw=0,
                              timestamp_ms=0, nonce=0, sender=0)
    assert len(encode_rep_mess(header, b"", b"s")) == MIN_FRAME_LEN
    assert MIN_FRAME_LEN == HEADER_LEN + TAG_LEN


# --- authority ------------------------------------------------------------

def test_authority_tag_verification(authority):
    body = b"hello world"
    t = tag(body, bytes([3]) * 16)
    assert authority.verify_node(3, body, t)
    assert not authority.verify_node(4, body, t)
    assert not authority.verify_node(999, body, t)


def test_authority_unknown_binding_raises(authority):
    with pytest.raises(UnknownBinding):
        authority.verify_tag(b"x", b"y" * TAG_LEN, b"nope" * 8)


def test_duplicate_credential_rejected(authority):
    binding = authority.binding(1)
    authority.issue_identity(1, b"serial-0001", binding)
    with pytest.raises(DuplicateCredential):
        authority.issue_identity(2, b"serial-0001", authority.binding(2))
    cert = authority.identity_for(b"serial-0001")
    assert cert is not None and cert.node == 1


# --- certificates ---------------------------------------------------------

def test_certificate_round_trip(authority):
    cert = make_cert(authority, ms=(0.1, 0.9, 0.2))
    data = encode_certificate(cert)
    back = decode_certificate(data)
    assert back == cert
    assert encode_certificate(back) == data


def test_certificate_canonical_response_order(authority):
    a = make_cert(authority, respondents=(3, 1, 2), ms=(0.3, 0.1, 0.2))
    assert [r.respondent for r in a.responses] == [1, 2, 3]


def test_certificate_valid(authority):
    cert = make_cert(authority)
    assert verify_group_certificate(cert, {1, 2, 3}, THRESHOLD,
                                    authority) is Verdict.VALID
    assert verify_group_certificate(cert, None, THRESHOLD,
                                    authority) is Verdict.VALID


def test_certificate_tampered_response(authority):
    cert = make_cert(authority, ms=(0.9, 0.0, 0.0))
    doctored = cert.responses[0]
    forged = CertResponse(doctored.respondent, to_fixed(0.0),
                          doctored.weight_raw, doctored.tag)
    bad = messages.GroupTrustCertificate(
        subject=cert.subject, issuer=cert.issuer,
        issued_at_ms=cert.issued_at_ms, challenge_nonce=cert.challenge_nonce,
        group_trust_raw=cert.group_trust_raw,
        responses=(forged,) + cert.responses[1:],
        certificate_tag=cert.certificate_tag)
    assert verify_group_certificate(bad, {1, 2, 3}, THRESHOLD,
                                    authority) is Verdict.TAMPERED_RESPONSE


def test_certificate_dropped_feedback(authority):
    cert = make_cert(authority, respondents=(1, 2), ms=(0.0, 0.0))
    assert verify_group_certificate(cert, {1, 2, 3}, THRESHOLD,
                                    authority) is Verdict.DROPPED_FEEDBACK


def test_certificate_wrong_group_trust(authority):
    cert = make_cert(authority, ms=(0.9, 0.9, 0.9))
    lied = messages.GroupTrustCertificate(
        subject=cert.subject, issuer=cert.issuer,
        issued_at_ms=cert.issued_at_ms, challenge_nonce=cert.challenge_nonce,
        group_trust_raw=to_fixed(1.0), responses=cert.responses,
        certificate_tag=tag(messages.certificate_body_bytes(
            messages.GroupTrustCertificate(
                subject=cert.subject, issuer=cert.issuer,
                issued_at_ms=cert.issued_at_ms,
                challenge_nonce=cert.challenge_nonce,
                group_trust_raw=to_fixed(1.0), responses=cert.responses,
                certificate_tag=b"")), bytes([cert.issuer]) * 16))
    assert verify_group_certificate(lied, {1, 2, 3}, THRESHOLD,
                                    authority) is Verdict.WRONG_GROUP_TRUST


def test_certificate_bad_issuer_tag(authority):
    cert = make_cert(authority)
    data = bytearray(encode_certificate(cert))
    data[-1] ^= 0xFF
    back = decode_certificate(bytes(data))
    assert verify_group_certificate(back, {1, 2, 3}, THRESHOLD,
                                    authority) is Verdict.BAD_ISSUER_TAG


def test_certificate_any_body_mutation_rejected(authority):
    cert = make_cert(authority, ms=(0.2, 0.6, 0.4))
    data = encode_certificate(cert)
    for pos in range(len(data)):
        mutated = bytearray(data)
        mutated[pos] ^= 0x01
        try:
            back = decode_certificate(bytes(mutated))
        except messages.MessageError:
            continue
        assert verify_group_certificate(back, {1, 2, 3}, THRESHOLD,
                                        authority) is not Verdict.VALID


def test_certificate_group_trust_recomputed_from_responses(authority):
    cert = make_cert(authority, ms=(0.75, 0.75, 0.0))
    # majority is the two high respondents: group trust = 1 - 0.75
    assert cert.group_trust_raw == to_fixed(0.25)
    benign = make_cert(authority, ms=(0.1, 0.2, 0.0))
    assert benign.group_trust_raw == to_fixed(1.0 - (0.1 + 0.2 + 0.0) / 3)


def test_certificate_truncation_detected(authority):
    data = encode_certificate(make_cert(authority))
    with pytest.raises(messages.MessageError):
        decode_certificate(data[:-1])
    with pytest.raises(Truncated):
        decode_certificate(data[:10])
