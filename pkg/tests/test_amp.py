"""Multi-proposer layer: sound ids, sorting, validation, state transitions."""

import random

import pytest

from ampsim.amp import (
    AmpLimits,
    AmpValidator,
    Mutations,
    sort_transactions,
    sound_ids,
    valid_commit,
    valid_payload,
    verify_vote_extension,
)
from ampsim.codec import digest
from ampsim.keys import Keyring
from ampsim.types import (
    NIL,
    Payload,
    Precommit,
    Transaction,
    VoteExtension,
    encode_value,
    extension_signing_bytes,
    payload_id,
    precommit_signing_bytes,
)

from util import build_certificate, make_payload, signed_precommit

KEYRING = Keyring("keyed-digest", 4, seed=1)
LIMITS = AmpLimits(f=1, max_payload_bytes=4096, max_extension_ids=16, pending_max_age=8)

A, B, C = digest(b"payload-a"), digest(b"payload-b"), digest(b"payload-c")
VID = digest(b"some-value")


def cert(extensions, height=4, round_=0, value_id=VID):
    return build_certificate(KEYRING, height, round_, value_id, extensions)


# -- sound_ids ------------------------------------------------------------------


def test_sound_ids_counts_above_f():
    # counts: a=2, b=2 with f=1 -> both sound
    c = cert({1: [A, B], 2: [A], 3: [B]})
    assert sound_ids(c, f=1) == {A, B}


def test_sound_ids_at_threshold_not_included():
    # count a=1 == f -> not sound
    c = cert({1: [A], 2: [], 3: []})
    assert sound_ids(c, f=1) == frozenset()


def test_sound_ids_empty_certificate():
    assert sound_ids(None, f=1) == frozenset()


def test_sound_ids_counts_distinct_signers_not_occurrences():
    pcs = [signed_precommit(KEYRING, 1, 4, 0, VID, [A])] * 2
    from ampsim.types import CommitCertificate

    doubled = CommitCertificate(4, 0, VID, tuple(pcs) + (signed_precommit(KEYRING, 2, 4, 0, VID, []),))
    assert sound_ids(doubled, f=1) == frozenset()


def test_sound_ids_random_against_counting_oracle():
    rng = random.Random(77)
    pool = [digest(bytes([i])) for i in range(12)]
    for _ in range(300):
        n = rng.randint(2, 10)
        f = rng.randint(0, max(0, (n - 1) // 3))
        exts = {s: rng.sample(pool, rng.randint(0, 6)) for s in rng.sample(range(n), rng.randint(1, n))}
        keyring = Keyring("keyed-digest", n, seed=5)
        c = build_certificate(keyring, 2, 0, VID, exts)
        # independent oracle: per-id occurrence count across signers
        expect = {pid for pid in pool if sum(1 for ids in exts.values() if pid in ids) > f}
        assert sound_ids(c, f=f) == expect


def test_sound_ids_mutated_threshold_is_looser():
    c = cert({1: [A], 2: [], 3: []})
    assert sound_ids(c, f=1, at_f=True) == {A}


# -- sort -----------------------------------------------------------------------


def tx(fee, body):
    return Transaction("s", 0, fee, body)


def test_sort_by_fee_descending():
    p = Payload("p0", (tx(3, b"low"), tx(5, b"high")))
    out = sort_transactions([p])
    assert [t.priority_fee for t in out] == [5, 3]


def test_sort_ties_break_by_payload_id_then_tx_hash():
    pa = Payload("p0", (tx(5, b"aa"), tx(5, b"bb")))
    pb = Payload("p1", (tx(5, b"cc"),))
    first, second = sorted([pa, pb], key=payload_id)
    out = sort_transactions([pa, pb])
    # all fees equal: payload with smaller id first, then tx_hash ascending inside
    want = sorted(first.transactions, key=lambda t: t.tx_hash) + sorted(
        second.transactions, key=lambda t: t.tx_hash
    )
    assert out == want


def test_sort_permutation_invariant():
    rng = random.Random(4)
    payloads = [make_payload(rng, proposer=f"p{i}", txs=3) for i in range(6)]
    base = sort_transactions(payloads)
    for _ in range(20):
        shuffled = payloads[:]
        rng.shuffle(shuffled)
        assert sort_transactions(shuffled) == base


def test_sort_keeps_duplicate_transactions_across_payloads():
    t = tx(9, b"dup")
    pa = Payload("p0", (t,))
    pb = Payload("p1", (t,))
    out = sort_transactions([pa, pb])
    assert len(out) == 2 and out[0] == out[1] == t


def test_sort_matches_comparator_oracle_random():
    import functools

    rng = random.Random(19)
    for _ in range(100):
        payloads = [make_payload(rng, proposer=f"p{i}", txs=rng.randint(1, 4), fee=rng.choice([None, 7]))
                    for i in range(rng.randint(1, 5))]
        entries = [(payload_id(p), t) for p in payloads for t in p.transactions]

        def compare(x, y):
            (pid_x, tx_x), (pid_y, tx_y) = x, y
            if tx_x.priority_fee != tx_y.priority_fee:
                return -1 if tx_x.priority_fee > tx_y.priority_fee else 1
            if pid_x != pid_y:
                return -1 if pid_x < pid_y else 1
            if tx_x.tx_hash != tx_y.tx_hash:
                return -1 if tx_x.tx_hash < tx_y.tx_hash else 1
            return 0

        want = [t for _, t in sorted(entries, key=functools.cmp_to_key(compare))]
        assert sort_transactions(payloads) == want


# -- valid_payload -----------------------------------------------------------------


def test_valid_payload_happy():
    rng = random.Random(1)
    assert valid_payload(make_payload(rng), LIMITS)


def test_valid_payload_empty_rejected():
    assert not valid_payload(Payload("p0", ()), LIMITS)


def test_valid_payload_oversize_rejected():
    big = Payload("p0", tuple(tx(1, bytes([i])) for i in range(100)))
    assert not valid_payload(big, AmpLimits(f=1, max_payload_bytes=64))


def test_valid_payload_duplicate_tx_hash_rejected():
    t = tx(1, b"same")
    assert not valid_payload(Payload("p0", (t, t)), LIMITS)


def test_valid_payload_wrong_hash_rejected():
    t = Transaction("s", 0, 1, b"x", tx_hash=b"\x01" * 32)
    assert not valid_payload(Payload("p0", (t,)), LIMITS)


# -- vote extensions ------------------------------------------------------------------


def make_ext_precommit(signer=1, ids=(A, B), h=4, r=0, vid=VID):
    return signed_precommit(KEYRING, signer, h, r, vid, list(ids))


def test_verify_vote_extension_happy():
    assert verify_vote_extension(make_ext_precommit(), KEYRING, LIMITS)


def test_verify_vote_extension_empty_ids_ok():
    assert verify_vote_extension(make_ext_precommit(ids=()), KEYRING, LIMITS)


def test_verify_vote_extension_malformed_id_length():
    pc = make_ext_precommit()
    bad = VoteExtension((b"\x01" * 31,), pc.signer, pc.extension.signature)
    pc2 = Precommit(pc.height, pc.round, pc.value_id, pc.signer, pc.signature, bad)
    assert not verify_vote_extension(pc2, KEYRING, LIMITS)


def test_verify_vote_extension_signer_mismatch():
    pc = make_ext_precommit(signer=1)
    wrong = VoteExtension(pc.extension.ids, 2, pc.extension.signature)
    pc2 = Precommit(pc.height, pc.round, pc.value_id, 1, pc.signature, wrong)
    assert not verify_vote_extension(pc2, KEYRING, LIMITS)


def test_verify_vote_extension_tampered_signature():
    pc = make_ext_precommit()
    sig = bytearray(pc.extension.signature)
    sig[0] ^= 1
    pc2 = Precommit(pc.height, pc.round, pc.value_id, pc.signer,
                    pc.signature, VoteExtension(pc.extension.ids, pc.signer, bytes(sig)))
    assert not verify_vote_extension(pc2, KEYRING, LIMITS)


def test_verify_vote_extension_oversize():
    ids = [digest(bytes([i])) for i in range(LIMITS.max_extension_ids + 1)]
    pc = make_ext_precommit(ids=ids)
    assert not verify_vote_extension(pc, KEYRING, LIMITS)


def test_verify_vote_extension_unsorted_ids_rejected():
    ids = tuple(sorted([A, B], reverse=True))
    esig = KEYRING.sign(1, extension_signing_bytes(4, 0, VID, ids))
    ext = VoteExtension(ids, 1, esig)  # bypasses make() normalisation
    sig = KEYRING.sign(1, precommit_signing_bytes(4, 0, VID, ids))
    pc = Precommit(4, 0, VID, 1, sig, ext)
    assert not verify_vote_extension(pc, KEYRING, LIMITS)


def test_precommit_extension_presence_invariant():
    with pytest.raises(ValueError):
        Precommit(1, 0, NIL, 0, b"sig", VoteExtension((), 0, b"esig"))
    with pytest.raises(ValueError):
        Precommit(1, 0, VID, 0, b"sig", None)


# -- valid_commit -----------------------------------------------------------------------


def test_valid_commit_happy():
    c = cert({0: [A], 1: [A], 2: []}, height=4)
    assert valid_commit(encode_value(c), 5, 4, KEYRING, LIMITS)


def test_valid_commit_empty_only_first_height():
    assert valid_commit(encode_value(None), 1, 4, KEYRING, LIMITS)
    assert not valid_commit(encode_value(None), 2, 4, KEYRING, LIMITS)
    assert not valid_commit(encode_value(cert({0: [], 1: [], 2: []}, height=0)), 1, 4, KEYRING, LIMITS)


def test_valid_commit_wrong_height():
    c = cert({0: [], 1: [], 2: []}, height=3)
    assert not valid_commit(encode_value(c), 5, 4, KEYRING, LIMITS)  # h-2 offered at h


def test_valid_commit_short_certificate():
    c = cert({0: [], 1: []}, height=4)
    assert not valid_commit(encode_value(c), 5, 4, KEYRING, LIMITS)
    assert valid_commit(encode_value(c), 5, 4, KEYRING, LIMITS, Mutations(accept_short_certificates=True))


def test_valid_commit_superset_certificate_ok():
    c = cert({0: [A], 1: [A], 2: [], 3: [B]}, height=4)
    assert valid_commit(encode_value(c), 5, 4, KEYRING, LIMITS)


def test_valid_commit_duplicate_signer():
    from ampsim.types import CommitCertificate

    pc = signed_precommit(KEYRING, 0, 4, 0, VID, [])
    others = [signed_precommit(KEYRING, s, 4, 0, VID, []) for s in (1, 2)]
    c = CommitCertificate(4, 0, VID, (pc, pc, *others))
    assert not valid_commit(encode_value(c), 5, 4, KEYRING, LIMITS)


def test_valid_commit_forged_extension_signature():
    c = cert({0: [A], 1: [A], 2: []}, height=4)
    pcs = list(c.precommits)
    bad_sig = bytearray(pcs[0].extension.signature)
    bad_sig[0] ^= 1
    pcs[0] = Precommit(
        pcs[0].height, pcs[0].round, pcs[0].value_id, pcs[0].signer, pcs[0].signature,
        VoteExtension(pcs[0].extension.ids, pcs[0].extension.signer, bytes(bad_sig)),
    )
    from ampsim.types import CommitCertificate

    forged = CommitCertificate(4, 0, VID, tuple(pcs))
    assert not valid_commit(encode_value(forged), 5, 4, KEYRING, LIMITS)


def test_valid_commit_tamper_any_precommit_signature():
    rng = random.Random(31)
    c = cert({0: [A], 1: [A, B], 2: [B], 3: []}, height=4)
    blob = encode_value(c)
    assert valid_commit(blob, 5, 4, KEYRING, LIMITS)
    from ampsim.types import CommitCertificate, decode_value

    for _ in range(30):
        pcs = list(c.precommits)
        victim = rng.randrange(len(pcs))
        sig = bytearray(pcs[victim].signature)
        sig[rng.randrange(len(sig))] ^= 1 << rng.randrange(8)
        pcs[victim] = Precommit(
            pcs[victim].height, pcs[victim].round, pcs[victim].value_id,
            pcs[victim].signer, bytes(sig), pcs[victim].extension,
        )
        tampered = CommitCertificate(4, 0, VID, tuple(pcs))
        assert not valid_commit(encode_value(tampered), 5, 4, KEYRING, LIMITS)


def test_valid_commit_garbage_bytes():
    assert not valid_commit(b"\x99garbage", 5, 4, KEYRING, LIMITS)


# -- AmpValidator state machine -------------------------------------------------------------


def fresh_amp() -> AmpValidator:
    return AmpValidator(LIMITS)


def test_deliver_payload_accept_and_idempotence():
    amp = fresh_amp()
    rng = random.Random(2)
    p = make_payload(rng)
    status, pid = amp.deliver_payload(p, 1)
    assert status == "accepted" and pid in amp.pending and pid in amp.payloads
    status, _ = amp.deliver_payload(p, 1)
    assert status == "duplicate"
    assert len(amp.pending) == 1


def test_deliver_payload_invalid_dropped():
    amp = fresh_amp()
    status, _ = amp.deliver_payload(Payload("p0", ()), 1)
    assert status == "invalid"
    assert not amp.pending


def test_extend_vote_subtracts_sound_ids():
    amp = fresh_amp()
    amp.pending = {A, B}
    v = encode_value(cert({1: [A], 2: [A], 3: []}))
    assert set(amp.extend_vote(v)) == {B}
    assert amp.extend_vote(encode_value(None)) == tuple(sorted({A, B}))
    amp.pending = set()
    assert amp.extend_vote(v) == ()
    amp.pending = {A}
    assert amp.extend_vote(v) == ()  # full overlap


def test_extend_vote_caps_at_limit():
    amp = fresh_amp()
    amp.pending = {digest(bytes([i])) for i in range(40)}
    ids = amp.extend_vote(encode_value(None))
    assert len(ids) == LIMITS.max_extension_ids
    assert list(ids) == sorted(amp.pending)[: LIMITS.max_extension_ids]


def test_decided_moves_ids_and_reports_missing():
    amp = fresh_amp()
    rng = random.Random(8)
    p = make_payload(rng)
    pid = payload_id(p)
    amp.deliver_payload(p, 1)
    value = encode_value(cert({0: [pid, B], 1: [pid, B], 2: []}))
    commit = cert({0: [], 1: [], 2: []}, height=2)
    missing = amp.decided(2, value, commit)
    assert missing == {B}
    assert amp.ordered[2] == {pid, B}
    assert amp.pending == set()  # decided ids removed even though B's payload missing
    assert amp.attestations == commit


def test_replayed_payload_for_decided_id_dropped():
    amp = fresh_amp()
    rng = random.Random(8)
    p = make_payload(rng)
    pid = payload_id(p)
    amp.deliver_payload(p, 1)
    amp.decided(2, encode_value(cert({0: [pid], 1: [pid], 2: []})), cert({0: []}, height=2))
    amp.take_finalized()
    status, _ = amp.deliver_payload(p, 3)
    assert status == "already_ordered"
    assert pid not in amp.pending


def test_finalize_blocks_until_missing_payload_arrives():
    amp = fresh_amp()
    rng = random.Random(12)
    p_known = make_payload(rng, proposer="p0")
    p_late = make_payload(rng, proposer="p1")
    k, m = payload_id(p_known), payload_id(p_late)
    amp.deliver_payload(p_known, 1)
    amp.decided(1, encode_value(None), cert({0: [], 1: [], 2: []}, height=1))
    amp.decided(2, encode_value(cert({0: [k, m], 1: [k, m], 2: []})), cert({0: []}, height=2))
    done = amp.take_finalized()
    assert [h for h, _, _ in done] == [1]  # height 2 must wait for the missing payload
    status, _ = amp.deliver_payload(p_late, 3)
    assert status == "ordered_fill"
    done = amp.take_finalized()
    assert [h for h, _, _ in done] == [2]
    assert sorted(done[0][1]) == sorted([k, m])


def test_empty_decided_set_finalizes_empty_block_and_advances():
    amp = fresh_amp()
    amp.decided(1, encode_value(None), cert({0: [], 1: [], 2: []}, height=1))
    done = amp.take_finalized()
    assert done == [(1, [], [])]
    assert amp.next_height == 2


def test_age_pending_boundary():
    amp = fresh_amp()
    rng = random.Random(3)
    p1 = make_payload(rng, proposer="p0")
    p2 = make_payload(rng, proposer="p1")
    amp.deliver_payload(p1, 1)   # born at height 1
    amp.deliver_payload(p2, 3)   # born at height 3
    evicted = amp.age_pending(10)  # k=8: 1+8 < 10 evicts, 3+8 >= 10 retains
    assert evicted == [payload_id(p1)]
    assert amp.pending == {payload_id(p2)}
    assert payload_id(p1) in amp.payloads  # payload bytes retained


def test_get_value_returns_stored_certificate_or_empty():
    amp = fresh_amp()
    assert amp.get_value() == encode_value(None)  # first post-genesis height
    commit = cert({0: [A], 1: [], 2: []}, height=4)
    amp.decided(4, encode_value(cert({0: [], 1: [], 2: []}, height=3)), commit)
    assert amp.get_value() == encode_value(commit)


def test_aged_out_id_still_finalizable_when_decided_by_others():
    amp = fresh_amp()
    rng = random.Random(3)
    p = make_payload(rng)
    pid = payload_id(p)
    amp.deliver_payload(p, 1)
    amp.age_pending(10)
    assert pid not in amp.pending
    amp.decided(1, encode_value(None), cert({0: [], 1: [], 2: []}, height=1))
    amp.decided(2, encode_value(cert({0: [pid], 1: [pid], 2: []})), cert({0: []}, height=2))
    done = amp.take_finalized()
    assert [h for h, _, _ in done] == [1, 2]
    assert done[1][1] == [pid]
