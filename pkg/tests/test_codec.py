"""Canonical encoding: round trips, injectivity, golden stability."""

import random
from pathlib import Path

import pytest

from ampsim.codec import DecodeError, Reader, digest, encode_blob, encode_u64
from ampsim.types import (
    CommitCertificate,
    Payload,
    Transaction,
    decode_certificate,
    decode_payload,
    decode_precommit,
    decode_value,
    encode_certificate,
    encode_payload,
    encode_precommit,
    encode_transaction,
    encode_value,
    payload_id,
)
from ampsim.keys import Keyring

from util import build_certificate, make_payload, signed_precommit

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_payload() -> Payload:
    tx = Transaction(sender="alice", nonce=7, priority_fee=250, body=b"pay bob 40")
    return Payload(proposer="p0", transactions=(tx,), created_height_hint=3)


def test_transaction_round_trip():
    tx = Transaction("alice", 1, 9, b"hello")
    r = Reader(encode_transaction(tx))
    from ampsim.types import decode_transaction

    back = decode_transaction(r)
    r.expect_eof()
    assert back == tx
    assert back.tx_hash == tx.tx_hash


def test_payload_round_trip_random():
    rng = random.Random(42)
    for _ in range(50):
        p = make_payload(rng, txs=rng.randint(1, 5))
        assert decode_payload(encode_payload(p)) == p


def test_encode_decode_identity_on_wellformed_bytes():
    rng = random.Random(7)
    p = make_payload(rng)
    b = encode_payload(p)
    assert encode_payload(decode_payload(b)) == b


def test_injectivity_one_byte_body_difference():
    tx1 = Transaction("a", 0, 5, b"xx")
    tx2 = Transaction("a", 0, 5, b"xy")
    p1 = Payload("p0", (tx1,))
    p2 = Payload("p0", (tx2,))
    assert encode_payload(p1) != encode_payload(p2)
    assert payload_id(p1) != payload_id(p2)


def test_injectivity_fee_difference():
    tx1 = Transaction("a", 0, 5, b"xx")
    tx2 = Transaction("a", 0, 6, b"xx")
    assert payload_id(Payload("p0", (tx1,))) != payload_id(Payload("p0", (tx2,)))


def test_encoding_equality_iff_value_equality():
    rng = random.Random(3)
    payloads = [make_payload(rng) for _ in range(30)]
    for a in payloads:
        for b in payloads:
            assert (encode_payload(a) == encode_payload(b)) == (a == b)


def test_golden_payload_bytes_stable():
    enc = encode_payload(fixture_payload())
    assert enc == (FIXTURES / "payload_one_tx.bin").read_bytes()


def test_golden_payload_id_matches_independent_hash():
    # digest frozen from `sha256sum` over the committed canonical bytes
    want = (FIXTURES / "payload_one_tx.sha256").read_text().strip()
    assert payload_id(fixture_payload()).hex() == want


def test_golden_transaction_hash_matches_independent_hash():
    want = (FIXTURES / "transaction.sha256").read_text().strip()
    assert fixture_payload().transactions[0].tx_hash.hex() == want


def test_tx_hash_recomputable():
    tx = fixture_payload().transactions[0]
    assert tx.tx_hash == digest(encode_transaction(tx))


def test_precommit_and_certificate_round_trip():
    keyring = Keyring("keyed-digest", 4, seed=1)
    vid = digest(b"value")
    ids = [digest(b"p1"), digest(b"p2")]
    pc = signed_precommit(keyring, 2, 5, 0, vid, ids)
    assert decode_precommit(encode_precommit(pc)) == pc
    cert = build_certificate(keyring, 5, 0, vid, {0: ids, 1: [], 2: ids[:1]})
    assert decode_certificate(encode_certificate(cert)) == cert


def test_value_encoding_empty_vs_certificate():
    keyring = Keyring("keyed-digest", 4, seed=1)
    assert decode_value(encode_value(None)) is None
    cert = build_certificate(keyring, 3, 0, digest(b"v"), {0: [], 1: [], 2: []})
    assert decode_value(encode_value(cert)) == cert
    assert encode_value(None) != encode_value(cert)


def test_truncated_encoding_rejected():
    rng = random.Random(9)
    b = encode_payload(make_payload(rng))
    with pytest.raises(DecodeError):
        decode_payload(b[:-1])
    with pytest.raises(DecodeError):
        decode_payload(b + b"\x00")


def test_canonical_encode_dispatches_all_core_types():
    from ampsim.types import canonical_encode

    keyring = Keyring("keyed-digest", 4, seed=1)
    tx = Transaction("a", 0, 1, b"x")
    p = Payload("p0", (tx,))
    pc = signed_precommit(keyring, 0, 1, 0, digest(b"v"), [])
    cert = build_certificate(keyring, 1, 0, digest(b"v"), {0: [], 1: [], 2: []})
    assert canonical_encode(tx) == encode_transaction(tx)
    assert canonical_encode(p) == encode_payload(p)
    assert canonical_encode(pc) == encode_precommit(pc)
    assert canonical_encode(cert) == encode_certificate(cert)
    with pytest.raises(TypeError):
        canonical_encode("not a protocol value")


def test_byte_flips_never_alias_another_payload():
    # a corrupted encoding either fails to decode or decodes to a value
    # whose re-encoding differs from the original bytes
    rng = random.Random(13)
    for _ in range(60):
        p = make_payload(rng, txs=rng.randint(1, 3))
        data = bytearray(encode_payload(p))
        data[rng.randrange(len(data))] ^= 1 << rng.randrange(8)
        try:
            q = decode_payload(bytes(data))
        except (DecodeError, UnicodeDecodeError):
            continue
        assert encode_payload(q) == bytes(data)
        assert q != p


def test_u64_rejects_out_of_range():
    with pytest.raises(ValueError):
        encode_u64(-1)
    with pytest.raises(ValueError):
        encode_u64(1 << 64)
    assert len(encode_blob(b"")) == 4
