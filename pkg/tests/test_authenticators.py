import random

import pytest
from hypothesis import given, settings, strategies as st

from porkit.algebra import PrimeField, TransparentPairing
from porkit.authenticators import (BlsKeyPair, MerkleTree, PathStep, bls_sign, bls_verify,
                                   decode_path, encode_path, mac_tag, mac_verify, merkle_verify,
                                   path_root, prf_eval)


def test_mac_roundtrip_and_rejection():
    key = b"k" * 32
    tag = mac_tag(key, b"hello")
    assert mac_verify(key, b"hello", tag)
    assert not mac_verify(key, b"hellp", tag)
    assert not mac_verify(b"j" * 32, b"hello", tag)


def test_prf_deterministic_and_keyed():
    field = PrimeField()
    assert prf_eval(b"a", b"x", field) == prf_eval(b"a", b"x", field)
    assert prf_eval(b"a", b"x", field) != prf_eval(b"b", b"x", field)
    assert 0 <= prf_eval(b"a", b"x", field) < field.p


def test_bls_sign_verify():
    group = TransparentPairing(PrimeField())
    kp = BlsKeyPair.generate(group, random.Random(1))
    sig = bls_sign(kp.sk, b"msg", group)
    assert bls_verify(kp.pk, b"msg", sig)
    assert not bls_verify(kp.pk, b"other", sig)
    other = BlsKeyPair.generate(group, random.Random(2))
    assert not bls_verify(other.pk, b"msg", sig)


def test_bls_rejects_foreign_group():
    g1 = TransparentPairing(PrimeField(101))
    g2 = TransparentPairing(PrimeField(103))
    kp = BlsKeyPair.generate(g1, random.Random(1))
    with pytest.raises(ValueError):
        bls_verify(kp.pk, b"m", g2.g)


@settings(max_examples=40)
@given(st.lists(st.binary(max_size=8), min_size=1, max_size=40), st.data())
def test_every_path_verifies(leaves, data):
    tree = MerkleTree(leaves)
    i = data.draw(st.integers(0, len(leaves) - 1))
    path = tree.prove(i)
    assert merkle_verify(tree.root, i, leaves[i], path, len(leaves))


@settings(max_examples=40)
@given(st.lists(st.binary(max_size=8), min_size=2, max_size=40), st.data())
def test_update_matches_rebuild(leaves, data):
    tree = MerkleTree(leaves)
    i = data.draw(st.integers(0, len(leaves) - 1))
    new = data.draw(st.binary(max_size=8))
    tree.update(i, new)
    leaves[i] = new
    assert tree.root == MerkleTree(leaves).root


def test_wrong_index_rejected():
    leaves = [bytes([i]) for i in range(8)]
    tree = MerkleTree(leaves)
    path = tree.prove(3)
    assert not merkle_verify(tree.root, 2, leaves[3], path, 8)
    assert not merkle_verify(tree.root, 11, leaves[3], path, 8)
    assert not merkle_verify(tree.root, -1, leaves[3], path, 8)


def test_short_path_rejected():
    leaves = [bytes([i]) for i in range(8)]
    tree = MerkleTree(leaves)
    path = tree.prove(0)
    assert not merkle_verify(tree.root, 0, leaves[0], path[:-1], 8)
    assert path_root(0, leaves[0], path[:-1]) != tree.root


def test_flipped_direction_rejected():
    leaves = [bytes([i]) for i in range(8)]
    tree = MerkleTree(leaves)
    path = tree.prove(5)
    flipped = [PathStep(not path[0].sibling_is_left, path[0].digest), *path[1:]]
    assert not merkle_verify(tree.root, 5, leaves[5], flipped, 8)


def test_leaf_and_node_domains_differ():
    # A leaf that looks like two concatenated child hashes must not collide with the node.
    leaves = [b"a", b"b"]
    tree = MerkleTree(leaves)
    forged = tree.levels[0][0] + tree.levels[0][1]
    assert MerkleTree([forged]).root != tree.root


def test_path_codec_roundtrip():
    tree = MerkleTree([bytes([i]) for i in range(13)])
    path = tree.prove(9)
    assert decode_path(encode_path(9, path)) == (9, path)


def test_empty_tree_rejected():
    with pytest.raises(ValueError):
        MerkleTree([])


@pytest.mark.parametrize("n", [3, 5, 17, 33])
def test_root_from_path_tracks_updates_of_lone_nodes(n):
    # The last leaf of an odd level is paired with itself; replacing it must
    # move the duplicated half too.
    leaves = [bytes([i]) for i in range(n)]
    tree = MerkleTree(leaves)
    path = tree.prove(n - 1)
    assert any(step.lone for step in path)
    tree.update(n - 1, b"new")
    assert path_root(n - 1, b"new", path) == tree.root


def test_false_lone_claim_rejected():
    leaves = [bytes([i]) for i in range(6)]
    tree = MerkleTree(leaves)
    path = tree.prove(4)
    assert merkle_verify(tree.root, 4, leaves[4], path, 6)
    assert not merkle_verify(tree.root, 4, leaves[4], path, 5)


def test_lone_step_codec():
    tree = MerkleTree([bytes([i]) for i in range(5)])
    blob = encode_path(4, tree.prove(4))
    assert decode_path(blob) == (4, tree.prove(4))
    bad = bytearray(blob)
    bad[8 + 1] = 1  # lone step with a nonzero digest
    with pytest.raises(ValueError):
        decode_path(bytes(bad))
