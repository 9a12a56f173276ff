"""Static proofs-of-retrievability: tagging, challenges, proofs, verification.

Four schemes share one lifecycle:

* ``JK_MAC``: per-block MACs over ``i || F[i]``; proofs return the challenged
  blocks with their tags. ``JK_SIG`` is the same scheme with BLS signatures
  in place of MACs, which makes it publicly verifiable.
* ``SW_PRIVATE``: ``sigma_i = h_k(i) + alpha * F[i] mod p``; a proof is the
  pair ``(sum nu_i sigma_i, sum nu_i F[i])``.
* ``SW_PUBLIC``: ``sigma_i = (H(i) * alpha^F[i])^x`` checked with a pairing
  against the public key ``v = g^x``.
* ``SENTINEL``: lives in :mod:`porkit.por.sentinel`; its proofs are raw block
  values at the challenged positions.

Block indices are 1-based everywhere in this module, matching the wire
protocol.
"""

from __future__ import annotations

import logging
import random
import secrets
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Sequence, Union

from porkit.algebra import GroupElement, PrimeField, TransparentPairing, keyed_hash
from porkit.authenticators import BlsKeyPair, bls_sign, bls_verify, mac_tag, mac_verify, prf_eval
from porkit.erasure import CodeParams, encode_bytes

log = logging.getLogger(__name__)


class Scheme(IntEnum):
    JK_MAC = 1
    SW_PRIVATE = 2
    SW_PUBLIC = 3
    SENTINEL = 4
    JK_SIG = 5


SCHEME_NAMES = {
    "jk-mac": Scheme.JK_MAC,
    "jk-sig": Scheme.JK_SIG,
    "sw-private": Scheme.SW_PRIVATE,
    "sw-public": Scheme.SW_PUBLIC,
    "sentinel": Scheme.SENTINEL,
}


def scheme_name(scheme: Scheme) -> str:
    return next(k for k, v in SCHEME_NAMES.items() if v == scheme)


def encode_index(i: int) -> bytes:
    return struct.pack(">Q", i)


class MissingBlock(LookupError):
    """An honest store was asked for a block it does not hold."""


# Keys -----------------------------------------------------------------------

@dataclass
class JkKeys:
    """MAC key for ``JK_MAC``, or a BLS key pair for ``JK_SIG``."""

    field: PrimeField
    mac_key: bytes | None = None
    bls: BlsKeyPair | None = None

    def __post_init__(self):
        if (self.mac_key is None) == (self.bls is None):
            raise ValueError("JK keys need exactly one of a MAC key or a BLS key pair")

    @property
    def scheme(self) -> Scheme:
        return Scheme.JK_SIG if self.bls is not None else Scheme.JK_MAC

    @property
    def group(self) -> TransparentPairing | None:
        return self.bls.pk.group if self.bls else None

    def message(self, i: int, block: int) -> bytes:
        return encode_index(i) + self.field.to_bytes(block)

    def tag(self, i: int, block: int):
        if self.bls is not None:
            return bls_sign(self.bls.sk, self.message(i, block), self.group)
        return mac_tag(self.mac_key, self.message(i, block))

    def check(self, i: int, block: int, tag) -> bool:
        if not 0 <= block < self.field.p:
            return False
        if self.bls is not None:
            try:
                return bls_verify(self.bls.pk, self.message(i, block), tag)
            except (TypeError, ValueError):
                return False
        return isinstance(tag, bytes) and mac_verify(self.mac_key, self.message(i, block), tag)

    def public(self) -> JkPublicKey:
        if self.bls is None:
            raise ValueError("JK_MAC has no public verification key")
        return JkPublicKey(self.field, self.bls.pk)


@dataclass
class JkPublicKey:
    field: PrimeField
    pk: GroupElement

    scheme = Scheme.JK_SIG

    @property
    def group(self) -> TransparentPairing:
        return self.pk.group

    def check(self, i: int, block: int, tag) -> bool:
        if not 0 <= block < self.field.p:
            return False
        try:
            return bls_verify(self.pk, encode_index(i) + self.field.to_bytes(block), tag)
        except (TypeError, ValueError):
            return False


@dataclass
class SwPrivateKeys:
    field: PrimeField
    alpha: int
    prf_key: bytes

    scheme = Scheme.SW_PRIVATE

    def index_prf(self, i: int) -> int:
        return prf_eval(self.prf_key, encode_index(i), self.field)

    def tag(self, i: int, block: int) -> int:
        return (self.index_prf(i) + self.alpha * block) % self.field.p


@dataclass
class SwPublicKey:
    """Everything a third party needs to audit ``SW_PUBLIC`` proofs."""

    group: TransparentPairing
    v: GroupElement
    alpha: GroupElement

    scheme = Scheme.SW_PUBLIC

    def __post_init__(self):
        if self.alpha == self.group.identity:
            raise ValueError("alpha must be a generator, not the identity")

    @property
    def field(self) -> PrimeField:
        return self.group.field

    def index_hash(self, i: int) -> GroupElement:
        return self.group.hash_to_group(encode_index(i))


@dataclass
class SwPublicSecret:
    x: int
    public: SwPublicKey

    scheme = Scheme.SW_PUBLIC

    def __post_init__(self):
        if self.public.v != self.public.group.g ** self.x:
            raise ValueError("public key does not match the secret exponent")

    @property
    def field(self) -> PrimeField:
        return self.public.field

    @property
    def group(self) -> TransparentPairing:
        return self.public.group

    def tag(self, i: int, block: int) -> GroupElement:
        return (self.public.index_hash(i) * self.public.alpha ** block) ** self.x


Keys = Union[JkKeys, JkPublicKey, SwPrivateKeys, SwPublicKey, SwPublicSecret]


def keygen(scheme: Scheme, field: PrimeField | None = None, rng: random.Random | None = None):
    """Fresh client keys. Pass a seeded ``rng`` only for reproducible tests."""
    field = field or PrimeField()
    rng = rng or secrets.SystemRandom()
    scheme = Scheme(scheme)

    def key_bytes() -> bytes:
        return rng.getrandbits(256).to_bytes(32, "big")

    if scheme == Scheme.JK_MAC:
        return JkKeys(field, mac_key=key_bytes())
    if scheme == Scheme.JK_SIG:
        return JkKeys(field, bls=BlsKeyPair.generate(TransparentPairing(field), rng))
    if scheme == Scheme.SW_PRIVATE:
        return SwPrivateKeys(field, rng.randrange(1, field.p), key_bytes())
    if scheme == Scheme.SW_PUBLIC:
        group = TransparentPairing(field)
        x = rng.randrange(1, field.p)
        return SwPublicSecret(x, SwPublicKey(group, group.g ** x, group.random_element(rng)))
    if scheme == Scheme.SENTINEL:
        from porkit.por.sentinel import SentinelKeys
        return SentinelKeys(field, key_bytes())
    raise ValueError(f"unknown scheme {scheme}")


# Tagged files ---------------------------------------------------------------

@dataclass
class FileMeta:
    """What the client keeps about an uploaded file."""

    file_id: bytes
    scheme: Scheme
    code: CodeParams
    length: int
    block_count: int
    stripes: int
    stored: int = 0

    @property
    def n(self) -> int:
        """Number of blocks the server holds."""
        return self.stored or self.stripes * self.code.n


@dataclass
class TaggedFile:
    scheme: Scheme
    code: CodeParams
    blocks: list[int]
    tags: list
    length: int
    group: TransparentPairing | None = None
    file_id: bytes = b""
    block_count: int = 0

    def __post_init__(self):
        if self.scheme != Scheme.SENTINEL and len(self.tags) != len(self.blocks):
            raise ValueError("tag count does not match block count")
        if not self.file_id:
            from porkit.por.container import compute_file_id
            self.file_id = compute_file_id(self)

    @property
    def n(self) -> int:
        return len(self.blocks)

    @property
    def field(self) -> PrimeField:
        return self.code.field

    @property
    def stripes(self) -> int:
        return len(self.blocks) // self.code.n

    @property
    def meta(self) -> FileMeta:
        return FileMeta(self.file_id, self.scheme, self.code, self.length, self.block_count,
                        self.stripes, stored=len(self.blocks))

    def fetch(self, i: int):
        if not 1 <= i <= len(self.blocks):
            raise IndexError(f"block index {i} out of range 1..{len(self.blocks)}")
        tag = self.tags[i - 1] if self.tags else None
        return self.blocks[i - 1], tag

    def retrieve(self, indices: Sequence[int]):
        return [self.fetch(i) for i in indices]

    def prove(self, challenge: Challenge):
        return por_prove(self, challenge)


def tag_blocks(blocks: Sequence[int], keys) -> list:
    field = keys.field
    for b in blocks:
        if not 0 <= b < field.p:
            raise ValueError("block value does not fit in Z_p")
    return [keys.tag(i, b) for i, b in enumerate(blocks, start=1)]


def por_setup(data: bytes, keys, code: CodeParams | None = None) -> TaggedFile:
    """Erasure-encode ``data`` and tag every encoded block."""
    if not data:
        raise ValueError("cannot set up an empty file")
    if keys.scheme == Scheme.SENTINEL:
        raise ValueError("use sentinel_setup for the sentinel scheme")
    if isinstance(keys, (JkPublicKey, SwPublicKey)):
        raise ValueError("setup needs the secret keys")
    code = code or CodeParams(128, 64, keys.field)
    if code.field != keys.field:
        raise ValueError("code field and key field differ")
    codewords, block_count = encode_bytes(data, code)
    blocks = [s for cw in codewords for s in cw]
    return TaggedFile(keys.scheme, code, blocks, tag_blocks(blocks, keys), len(data),
                      group=getattr(keys, "group", None), block_count=block_count)


# Challenges and proofs ------------------------------------------------------

@dataclass(frozen=True)
class Challenge:
    indices: tuple[int, ...]
    coefficients: tuple[int, ...] | None = None
    file_id: bytes = b""
    nonce: bytes = b""

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("challenge indices must be distinct")
        if self.coefficients is not None and len(self.coefficients) != len(self.indices):
            raise ValueError("one coefficient per challenged index")

    def pairs(self):
        return zip(self.indices, self.coefficients or (1,) * len(self.indices))

    def __len__(self) -> int:
        return len(self.indices)


def gen_challenge(n: int, l: int, rng: random.Random | None = None, field: PrimeField | None = None,
                  file_id: bytes = b"") -> Challenge:
    """``l`` distinct indices from ``1..n``; coefficients from ``Z_p`` when a field is given."""
    if not 1 <= l <= n:
        raise ValueError(f"challenge size {l} outside 1..{n}")
    rng = rng or secrets.SystemRandom()
    indices = tuple(rng.sample(range(1, n + 1), l))
    coeffs = tuple(rng.randrange(field.p) for _ in indices) if field is not None else None
    nonce = rng.getrandbits(128).to_bytes(16, "big")
    return Challenge(indices, coeffs, file_id, nonce)


def challenge_for(meta: FileMeta, l: int, rng: random.Random | None = None) -> Challenge:
    wants_coeffs = meta.scheme in (Scheme.SW_PRIVATE, Scheme.SW_PUBLIC)
    return gen_challenge(meta.n, min(l, meta.n), rng, meta.code.field if wants_coeffs else None, meta.file_id)


@dataclass(frozen=True)
class BlockListProof:
    """JK proofs ``(F[i], sigma_i)`` per index; sentinel proofs carry ``None`` tags."""

    items: tuple[tuple[int, object], ...]


@dataclass(frozen=True)
class SwPrivateProof:
    sigma: int
    mu: int


@dataclass(frozen=True)
class SwPublicProof:
    sigma: GroupElement
    mu: int


Proof = Union[BlockListProof, SwPrivateProof, SwPublicProof]


def prove_with(scheme: Scheme, field: PrimeField, group: TransparentPairing | None,
               fetch: Callable[[int], tuple], challenge: Challenge) -> Proof:
    """Build a proof from ``fetch(i) -> (F[i], sigma_i)``."""
    p = field.p
    if scheme in (Scheme.JK_MAC, Scheme.JK_SIG, Scheme.SENTINEL):
        return BlockListProof(tuple(fetch(i) for i in challenge.indices))
    if challenge.coefficients is None:
        raise ValueError("homomorphic schemes need challenge coefficients")
    if scheme == Scheme.SW_PRIVATE:
        sigma = mu = 0
        for i, nu in challenge.pairs():
            block, tag = fetch(i)
            sigma += nu * tag
            mu += nu * block
        return SwPrivateProof(sigma % p, mu % p)
    if scheme == Scheme.SW_PUBLIC:
        sigma = group.identity
        mu = 0
        for i, nu in challenge.pairs():
            block, tag = fetch(i)
            sigma = sigma * tag ** nu
            mu += nu * block
        return SwPublicProof(sigma, mu % p)
    raise ValueError(f"unknown scheme {scheme}")


def por_prove(store: TaggedFile, challenge: Challenge) -> Proof:
    def fetch(i):
        block, tag = store.fetch(i)
        if block is None:
            raise MissingBlock(f"block {i} is missing")
        return block, tag

    return prove_with(store.scheme, store.field, store.group, fetch, challenge)


def por_verify(keys, challenge: Challenge, proof: Proof) -> bool:
    """1 iff the proof satisfies the scheme's verification equation."""
    if isinstance(keys, SwPublicSecret):
        keys = keys.public
    if isinstance(keys, (JkKeys, JkPublicKey)):
        return _verify_block_list(keys, challenge, proof)
    if isinstance(keys, SwPrivateKeys):
        return verify_sw_private(keys, challenge, proof)
    if isinstance(keys, SwPublicKey):
        return verify_sw_public(keys, challenge, proof)
    raise TypeError(f"cannot verify with {type(keys).__name__}")


def _verify_block_list(keys, challenge: Challenge, proof: Proof) -> bool:
    if not isinstance(proof, BlockListProof):
        log.warning("expected a block-list proof, got %s", type(proof).__name__)
        return False
    if len(proof.items) != len(challenge.indices):
        log.warning("proof arity %d does not match challenge size %d", len(proof.items), len(challenge))
        return False
    return all(keys.check(i, block, tag) for i, (block, tag) in zip(challenge.indices, proof.items))


def verify_sw_private(keys: SwPrivateKeys, challenge: Challenge, proof: Proof) -> bool:
    if not isinstance(proof, SwPrivateProof) or challenge.coefficients is None:
        log.warning("SW-private verification got an incompatible proof or challenge")
        return False
    p = keys.field.p
    expected = keys.alpha * proof.mu + sum(nu * keys.index_prf(i) for i, nu in challenge.pairs())
    return proof.sigma == expected % p


def verify_sw_public(public: SwPublicKey, challenge: Challenge, proof: Proof) -> bool:
    """Pairing check using only ``(g, v, alpha)``; takes no secret."""
    if not isinstance(proof, SwPublicProof) or challenge.coefficients is None:
        log.warning("SW-public verification got an incompatible proof or challenge")
        return False
    group = public.group
    if not group.contains(proof.sigma):
        return False
    base = group.identity
    for i, nu in challenge.pairs():
        base = base * public.index_hash(i) ** nu
    base = base * public.alpha ** proof.mu
    return group.pair(proof.sigma, group.g) == group.pair(base, public.v)


def public_keys(keys):
    """The verification-only half of a key set, where one exists."""
    if isinstance(keys, SwPublicSecret):
        return keys.public
    if isinstance(keys, JkKeys) and keys.bls is not None:
        return keys.public()
    return keys


def file_digest(data: bytes) -> bytes:
    return keyed_hash(data, tag=b"file-id", size=16)
