"""Merkle tree and handshake tests; tree oracles computed with hashlib
directly so they stay independent of the implementation they check."""

import hashlib
import random

import pytest

from sshaf.errors import (
    AlreadyRegistered,
    Busy,
    ConfirmFailed,
    CounterDesync,
    EmptyTree,
    GatewayAuthFailed,
    HistoryMismatch,
    IndexOutOfRange,
    UnknownUser,
    UserAuthFailed,
)
from sshaf.merkle_auth import (
    LEFT,
    RIGHT,
    MerkleProof,
    MerkleTree,
    MhtM2,
    MhtM3,
    mht_auth_challenge,
    mht_auth_finalize,
    mht_auth_initiate,
    mht_auth_respond,
    mht_build,
    mht_confirm,
    mht_prove,
    mht_register,
    mht_try_resync,
    mht_verify,
)
from sshaf.primitives import Digest256, Key256, RandomSource, hash_bytes


def sha(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def four_leaves():
    return [Digest256(sha(b"t" + str(i).encode())) for i in range(4)]


def test_single_leaf_root_is_leaf():
    leaf = Digest256(sha(b"only"))
    assert mht_build([leaf]) == leaf


def test_four_leaf_root_matches_hand_computed_oracle():
    raw = [sha(b"t" + str(i).encode()) for i in range(4)]
    expected = sha(sha(raw[0] + raw[1]) + sha(raw[2] + raw[3]))
    assert mht_build([Digest256(r) for r in raw]) == Digest256(expected)


def test_empty_leaves_rejected():
    with pytest.raises(EmptyTree):
        mht_build([])


def test_root_commits_to_leaf_order():
    leaves = four_leaves()
    permuted = [leaves[1], leaves[0], leaves[2], leaves[3]]
    assert mht_build(leaves) != mht_build(permuted)


def test_proof_for_index_2_matches_hand_computed_oracle():
    raw = [sha(b"t" + str(i).encode()) for i in range(4)]
    tree = MerkleTree([Digest256(r) for r in raw])
    proof = mht_prove(tree, 2)
    assert proof.siblings == [
        (Digest256(raw[3]), RIGHT),
        (Digest256(sha(raw[0] + raw[1])), LEFT),
    ]


def test_single_leaf_proof_is_empty():
    tree = MerkleTree([Digest256(sha(b"x"))])
    proof = mht_prove(tree, 0)
    assert proof.siblings == []
    assert mht_verify(tree.root, tree.leaves[0], proof)


def test_proof_index_out_of_range():
    tree = MerkleTree(four_leaves())
    with pytest.raises(IndexOutOfRange):
        mht_prove(tree, 4)


def test_verify_accepts_honest_proof_and_rejects_wrong_leaf():
    leaves = four_leaves()
    tree = MerkleTree(leaves)
    proof = mht_prove(tree, 2)
    assert mht_verify(tree.root, leaves[2], proof)
    assert not mht_verify(tree.root, hash_bytes(b"x"), proof)


def test_round_trip_all_sizes_and_indices():
    rng = random.Random(1)
    for n in range(1, 65):
        leaves = [Digest256(rng.randbytes(32)) for _ in range(n)]
        tree = MerkleTree(leaves)
        for idx in range(n):
            proof = mht_prove(tree, idx)
            assert mht_verify(tree.root, leaves[idx], proof)


def mutate(digest: Digest256, pos: int) -> Digest256:
    raw = bytearray(digest.bytes)
    raw[pos] ^= 0x01
    return Digest256(bytes(raw))


def test_single_byte_mutations_break_verification():
    rng = random.Random(2)
    for n in (1, 2, 3, 7, 8, 33, 64):
        leaves = [Digest256(rng.randbytes(32)) for _ in range(n)]
        tree = MerkleTree(leaves)
        idx = rng.randrange(n)
        proof = mht_prove(tree, idx)
        pos = rng.randrange(32)
        assert not mht_verify(tree.root, mutate(leaves[idx], pos), proof)
        assert not mht_verify(mutate(tree.root, pos), leaves[idx], proof)
        for s in range(len(proof.siblings)):
            digest, side = proof.siblings[s]
            bad = MerkleProof(idx, list(proof.siblings))
            bad.siblings[s] = (mutate(digest, pos), side)
            assert not mht_verify(tree.root, leaves[idx], bad)


# --- handshake ------------------------------------------------------------

MASTER = Key256(b"\x33" * 32)


def fresh_pair(uid="alice", registry=None):
    registry = {} if registry is None else registry
    user, gateway = mht_register(registry, uid, MASTER)
    return user, gateway, registry


def run_handshake(user, registry, src):
    m1 = mht_auth_initiate(user, src)
    m2 = mht_auth_challenge(registry, m1, src)
    m3 = mht_auth_respond(user, m2)
    m4, gw_key = mht_auth_finalize(registry, user.uid, m3)
    user_key = mht_confirm(user, m4)
    return user_key, gw_key


def test_register_symmetric_state():
    user, gateway, _ = fresh_pair()
    assert user.tree.root == gateway.tree.root
    assert user.txn_counter == gateway.txn_counter == 0
    assert len(user.tree.leaves) == 1


def test_register_duplicate_uid():
    _, _, registry = fresh_pair()
    with pytest.raises(AlreadyRegistered):
        mht_register(registry, "alice", MASTER)


def test_distinct_uids_get_distinct_keys():
    registry = {}
    user_a, _ = mht_register(registry, "alice", MASTER)
    user_b, _ = mht_register(registry, "bob", MASTER)
    assert user_a.shared_key != user_b.shared_key


def test_initiate_counter_tracks_state():
    user, _, registry = fresh_pair()
    src = RandomSource.seeded(b"\x01" * 32)
    m1 = mht_auth_initiate(user, src)
    assert m1.counter == 0
    m2 = mht_auth_challenge(registry, m1, src)
    m3 = mht_auth_respond(user, m2)
    m4, _ = mht_auth_finalize(registry, "alice", m3)
    mht_confirm(user, m4)
    m1b = mht_auth_initiate(user, src)
    assert m1b.counter == 1


def test_initiate_twice_is_busy():
    user, _, _ = fresh_pair()
    src = RandomSource.seeded(b"\x01" * 32)
    mht_auth_initiate(user, src)
    with pytest.raises(Busy):
        mht_auth_initiate(user, src)


def test_challenge_unknown_user():
    user, _, registry = fresh_pair()
    src = RandomSource.seeded(b"\x01" * 32)
    m1 = mht_auth_initiate(user, src)
    m1.uid = "mallory"
    with pytest.raises(UnknownUser):
        mht_auth_challenge(registry, m1, src)


def test_challenge_counter_mismatch():
    user, gateway, registry = fresh_pair()
    src = RandomSource.seeded(b"\x01" * 32)
    m1 = mht_auth_initiate(user, src)
    m1.counter = 5
    with pytest.raises(CounterDesync) as exc:
        mht_auth_challenge(registry, m1, src)
    assert exc.value.gateway_counter == 0
    assert exc.value.gateway_root == gateway.tree.root


def test_genesis_handshake_has_depth_zero_proof():
    user, _, registry = fresh_pair()
    src = RandomSource.seeded(b"\x01" * 32)
    m1 = mht_auth_initiate(user, src)
    m2 = mht_auth_challenge(registry, m1, src)
    assert m2.proof.siblings == []


def test_full_handshake_agrees_on_keys_and_state():
    user, gateway, registry = fresh_pair()
    src = RandomSource.seeded(b"\x02" * 32)
    user_key, gw_key = run_handshake(user, registry, src)
    assert user_key == gw_key
    assert user.txn_counter == gateway.txn_counter == 1
    assert user.tree.root == gateway.tree.root
    assert len(gateway.tree.leaves) == 2


def test_n_handshakes_consistent_and_keys_distinct():
    user, gateway, registry = fresh_pair()
    src = RandomSource.seeded(b"\x03" * 32)
    keys = []
    for _ in range(8):
        uk, gk = run_handshake(user, registry, src)
        assert uk == gk
        keys.append(uk.bytes)
    assert user.txn_counter == gateway.txn_counter == 8
    assert user.tree.root == gateway.tree.root
    assert len(set(keys)) == 8


def test_replayed_m1_rejected_after_completion():
    user, _, registry = fresh_pair()
    src = RandomSource.seeded(b"\x04" * 32)
    m1 = mht_auth_initiate(user, src)
    m2 = mht_auth_challenge(registry, m1, src)
    m3 = mht_auth_respond(user, m2)
    m4, _ = mht_auth_finalize(registry, "alice", m3)
    mht_confirm(user, m4)
    with pytest.raises(CounterDesync):
        mht_auth_challenge(registry, m1, src)


def test_tampered_challenge_tag_fails_mutual_auth():
    user, _, registry = fresh_pair()
    src = RandomSource.seeded(b"\x05" * 32)
    m1 = mht_auth_initiate(user, src)
    m2 = mht_auth_challenge(registry, m1, src)
    bad = MhtM2(m2.n_g, m2.proof, m2.root, mutate(m2.tag, 0))
    with pytest.raises(GatewayAuthFailed):
        mht_auth_respond(user, bad)


def test_foreign_root_raises_history_mismatch():
    user, _, registry = fresh_pair()
    src = RandomSource.seeded(b"\x06" * 32)
    m1 = mht_auth_initiate(user, src)
    m2 = mht_auth_challenge(registry, m1, src)
    bad = MhtM2(m2.n_g, m2.proof, hash_bytes(b"other-history"), m2.tag)
    with pytest.raises(HistoryMismatch):
        mht_auth_respond(user, bad)


def test_forged_response_tag_rejected():
    user, _, registry = fresh_pair()
    src = RandomSource.seeded(b"\x07" * 32)
    m1 = mht_auth_initiate(user, src)
    m2 = mht_auth_challenge(registry, m1, src)
    mht_auth_respond(user, m2)
    with pytest.raises(UserAuthFailed):
        mht_auth_finalize(registry, "alice", MhtM3(hash_bytes(b"forged")))


def test_corrupted_confirmation_leaves_user_uncommitted():
    user, gateway, registry = fresh_pair()
    src = RandomSource.seeded(b"\x08" * 32)
    m1 = mht_auth_initiate(user, src)
    m2 = mht_auth_challenge(registry, m1, src)
    m3 = mht_auth_respond(user, m2)
    m4, _ = mht_auth_finalize(registry, "alice", m3)
    with pytest.raises(ConfirmFailed):
        mht_confirm(user, type(m4)(mutate(m4.tag_g2, 3)))
    assert user.txn_counter == 0
    assert gateway.txn_counter == 1  # desync now detectable via CounterDesync


def test_confirm_without_pending():
    user, _, registry = fresh_pair()
    src = RandomSource.seeded(b"\x09" * 32)
    user_key, _ = run_handshake(user, registry, src)
    from sshaf.merkle_auth import MhtM4
    with pytest.raises(ConfirmFailed):
        mht_confirm(user, MhtM4(hash_bytes(b"nope")))


def test_resync_only_at_matching_height_and_root():
    user, gateway, registry = fresh_pair()
    src = RandomSource.seeded(b"\x0a" * 32)
    mht_auth_initiate(user, src)  # stuck pending, no commits anywhere
    assert mht_try_resync(user, gateway.txn_counter, gateway.tree.root)
    assert user.pending is None
    # After a gateway-side commit the heights differ: conservative refusal.
    run_handshake(user, registry, src)
    assert not mht_try_resync(user, user.txn_counter + 1, gateway.tree.root)


def test_message_wire_round_trips():
    user, _, registry = fresh_pair()
    src = RandomSource.seeded(b"\x0b" * 32)
    for _ in range(3):  # grow the tree so proofs are non-trivial
        run_handshake(user, registry, src)
    m1 = mht_auth_initiate(user, src)
    assert type(m1).decode(m1.encode()) == m1
    m2 = mht_auth_challenge(registry, m1, src)
    assert type(m2).decode(m2.encode()) == m2
    m3 = mht_auth_respond(user, m2)
    assert type(m3).decode(m3.encode()) == m3
    m4, _ = mht_auth_finalize(registry, "alice", m3)
    assert type(m4).decode(m4.encode()) == m4
    mht_confirm(user, m4)
