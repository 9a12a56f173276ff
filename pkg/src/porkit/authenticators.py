"""MACs, a PRF into Z_p, BLS signatures and Merkle hash trees.

All four sit on :func:`porkit.algebra.keyed_hash` (BLAKE2b) with distinct
domain tags.
"""

from __future__ import annotations

import hmac
import math
import secrets
import struct
from dataclasses import dataclass
from typing import Sequence

from porkit.algebra import (GroupElement, PrimeField, TransparentPairing,
                            hash_to_field, keyed_hash)
from porkit.config import KEY_BYTES

DIGEST_BYTES = 32

MAC_TAG = b"MAC"
PRF_TAG = b"PRF"
LEAF_TAG = b"merkle-leaf"
NODE_TAG = b"merkle-node"


def new_key(size: int = KEY_BYTES) -> bytes:
    return secrets.token_bytes(size)


def mac_tag(key: bytes, message: bytes) -> bytes:
    return keyed_hash(message, key=key, tag=MAC_TAG, size=32)


def mac_verify(key: bytes, message: bytes, tag: bytes) -> bool:
    return hmac.compare_digest(mac_tag(key, message), tag)


def prf_eval(key: bytes, data: bytes, field: PrimeField) -> int:
    """Pseudorandom function ``K x {0,1}* -> Z_p``."""
    return hash_to_field(keyed_hash(data, key=key, tag=PRF_TAG, size=64), PRF_TAG, field)


# BLS ------------------------------------------------------------------------

@dataclass(frozen=True)
class BlsKeyPair:
    sk: int
    pk: GroupElement

    @classmethod
    def generate(cls, group: TransparentPairing, rng=None) -> BlsKeyPair:
        rng = rng or secrets.SystemRandom()
        sk = rng.randrange(1, group.order)
        return cls(sk, group.g ** sk)


def bls_sign(sk: int, message: bytes, group: TransparentPairing) -> GroupElement:
    return group.hash_to_group(message) ** sk


def bls_verify(pk: GroupElement, message: bytes, signature: GroupElement) -> bool:
    group = pk.group
    if not group.contains(signature):
        raise ValueError("signature is not an element of the public key's group")
    return group.pair(signature, group.g) == group.pair(group.hash_to_group(message), pk)


# Merkle trees ---------------------------------------------------------------

def leaf_hash(leaf: bytes) -> bytes:
    return keyed_hash(leaf, tag=LEAF_TAG)


def node_hash(left: bytes, right: bytes, level: int) -> bytes:
    return keyed_hash(left + right + struct.pack(">I", level), tag=NODE_TAG)


@dataclass(frozen=True)
class PathStep:
    """One level of an inclusion path. A ``lone`` node is the unpaired last
    node of an odd level and is hashed with itself; it carries no digest."""

    sibling_is_left: bool
    digest: bytes
    lone: bool = False


class MerkleTree:
    """Binary hash tree; odd levels duplicate their last node.

    Leaf indices are zero-based. ``levels[0]`` holds the leaf hashes and
    ``levels[-1]`` the root alone.
    """

    def __init__(self, leaves: Sequence[bytes]):
        if not leaves:
            raise ValueError("a Merkle tree needs at least one leaf")
        self.leaves = list(leaves)
        self.levels = [[leaf_hash(x) for x in self.leaves]]
        while len(self.levels[-1]) > 1:
            below = self.levels[-1]
            height = len(self.levels)
            self.levels.append([node_hash(below[i], below[i + 1] if i + 1 < len(below) else below[i], height)
                                for i in range(0, len(below), 2)])

    def __len__(self) -> int:
        return len(self.leaves)

    @property
    def root(self) -> bytes:
        return self.levels[-1][0]

    def _check(self, index: int) -> None:
        if not 0 <= index < len(self.leaves):
            raise IndexError(f"leaf index {index} out of range for {len(self.leaves)} leaves")

    def prove(self, index: int) -> list[PathStep]:
        self._check(index)
        path = []
        i = index
        for level in self.levels[:-1]:
            sib = i ^ 1
            if sib < len(level):
                path.append(PathStep(sibling_is_left=bool(i & 1), digest=level[sib]))
            else:
                path.append(PathStep(sibling_is_left=False, digest=b"", lone=True))
            i //= 2
        return path

    def update(self, index: int, leaf: bytes) -> None:
        self._check(index)
        self.leaves[index] = leaf
        self.levels[0][index] = leaf_hash(leaf)
        i = index
        for height in range(1, len(self.levels)):
            below = self.levels[height - 1]
            i //= 2
            left = below[2 * i]
            right = below[2 * i + 1] if 2 * i + 1 < len(below) else left
            self.levels[height][i] = node_hash(left, right, height)


def merkle_build(leaves: Sequence[bytes]) -> MerkleTree:
    return MerkleTree(leaves)


def merkle_prove(tree: MerkleTree, index: int) -> list[PathStep]:
    return tree.prove(index)


def path_root(index: int, leaf: bytes, path: Sequence[PathStep]) -> bytes | None:
    """Root implied by ``leaf`` at ``index`` and ``path``; ``None`` if the
    path's left/right flags disagree with the index bits."""
    digest = leaf_hash(leaf)
    i = index
    for height, step in enumerate(path, start=1):
        if step.sibling_is_left != bool(i & 1):
            return None
        if step.lone:
            digest = node_hash(digest, digest, height)
        elif step.sibling_is_left:
            digest = node_hash(step.digest, digest, height)
        else:
            digest = node_hash(digest, step.digest, height)
        i //= 2
    if i != 0:
        return None
    return digest


def merkle_verify(root: bytes, index: int, leaf: bytes, path: Sequence[PathStep],
                  leaf_count: int | None = None) -> bool:
    if index < 0:
        return False
    if leaf_count is not None:
        if index >= leaf_count or len(path) != math.ceil(math.log2(leaf_count)):
            return False
        # A step may be lone exactly where the tree shape leaves a node unpaired.
        i, width = index, leaf_count
        for step in path:
            if step.lone != (i == width - 1 and width % 2 == 1):
                return False
            i, width = i // 2, (width + 1) // 2
    got = path_root(index, leaf, path)
    return got is not None and hmac.compare_digest(got, root)


def encode_path(index: int, path: Sequence[PathStep]) -> bytes:
    """u64 leaf index, then per level a flag byte (0 sibling right, 1 sibling
    left, 2 lone node) and a 32-byte sibling digest, zero for lone nodes."""
    out = [struct.pack(">Q", index)]
    for step in path:
        if step.lone:
            out.append(b"\x02" + bytes(DIGEST_BYTES))
        else:
            out.append(b"\x01" if step.sibling_is_left else b"\x00")
            out.append(step.digest)
    return b"".join(out)


def decode_path(data: bytes) -> tuple[int, list[PathStep]]:
    step = DIGEST_BYTES + 1
    if len(data) < 8 or (len(data) - 8) % step:
        raise ValueError("malformed Merkle path encoding")
    (index,) = struct.unpack_from(">Q", data, 0)
    path = []
    for off in range(8, len(data), step):
        flag = data[off]
        digest = data[off + 1:off + step]
        if flag == 2:
            if any(digest):
                raise ValueError("lone path step carries a digest")
            path.append(PathStep(False, b"", lone=True))
        elif flag in (0, 1):
            path.append(PathStep(bool(flag), digest))
        else:
            raise ValueError("bad path flag byte")
    return index, path
