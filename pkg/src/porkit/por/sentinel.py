"""Sentinel-based POR.

The encoded file is encrypted block by block, ``s`` pseudorandom sentinel
blocks are mixed in, and the whole sequence is shuffled with a keyed
permutation. Each audit opens ``q`` sentinels the server has never been asked
about; once opened they are spent, so a file supports at most ``s // q``
audits. Positions and values are all derived from the key, so the ledger only
needs to remember which sentinels are spent.
"""

from __future__ import annotations

import random
import secrets
from dataclasses import dataclass, field as dc_field

from porkit.algebra import PrimeField, keyed_hash
from porkit.authenticators import prf_eval
from porkit.erasure import CodeParams, encode_bytes
from porkit.por.schemes import (BlockListProof, Challenge, FileMeta, Scheme, TaggedFile,
                                encode_index)

MAX_STORED_BLOCKS = 2**32


class BudgetExhausted(RuntimeError):
    """Every sentinel has been spent."""


@dataclass
class SentinelKeys:
    field: PrimeField
    key: bytes

    scheme = Scheme.SENTINEL

    def _prf(self, label: bytes, i: int) -> int:
        return prf_eval(self.key, label + encode_index(i), self.field)

    def pads(self, j: int) -> tuple[int, int]:
        """Additive and multiplicative pads for data block ``j``."""
        return self._prf(b"pad-add", j), self._prf(b"pad-mul", j) or 1

    def encrypt(self, j: int, block: int) -> int:
        add, mul = self.pads(j)
        return (block + add) * mul % self.field.p

    def decrypt(self, j: int, value: int) -> int:
        add, mul = self.pads(j)
        return (value * self.field.inv(mul) - add) % self.field.p

    def sentinel_value(self, t: int) -> int:
        return self._prf(b"sentinel", t)

    def permutation(self, total: int) -> list[int]:
        """``perm[k]`` is the 0-based store position of item ``k``.

        Items ``0..n-1`` are data blocks, ``n..n+s-1`` sentinels.
        """
        order = list(range(total))
        for i in range(total - 1, 0, -1):
            r = int.from_bytes(keyed_hash(encode_index(i), key=self.key, tag=b"perm", size=16), "big")
            j = r % (i + 1)
            order[i], order[j] = order[j], order[i]
        perm = [0] * total
        for pos, item in enumerate(order):
            perm[item] = pos
        return perm


@dataclass
class SentinelLedger:
    keys: SentinelKeys
    data_blocks: int
    sentinels: int
    spent: set[int] = dc_field(default_factory=set)
    audits: int = 0
    _positions: list[int] | None = dc_field(default=None, repr=False)

    @property
    def total(self) -> int:
        return self.data_blocks + self.sentinels

    def positions(self) -> list[int]:
        """1-based store positions of sentinels ``0..s-1``."""
        if self._positions is None:
            perm = self.keys.permutation(self.total)
            self._positions = [perm[self.data_blocks + t] + 1 for t in range(self.sentinels)]
        return self._positions

    def data_positions(self) -> list[int]:
        perm = self.keys.permutation(self.total)
        return [perm[j] + 1 for j in range(self.data_blocks)]

    @property
    def remaining(self) -> int:
        return self.sentinels - len(self.spent)

    def audits_left(self, q: int) -> int:
        return self.remaining // q


def sentinel_setup(data: bytes, keys: SentinelKeys, s: int,
                   code: CodeParams | None = None) -> tuple[TaggedFile, SentinelLedger]:
    if s < 1:
        raise ValueError("need at least one sentinel")
    if not data:
        raise ValueError("cannot set up an empty file")
    code = code or CodeParams(128, 64, keys.field)
    codewords, block_count = encode_bytes(data, code)
    blocks = [b for cw in codewords for b in cw]
    n = len(blocks)
    if s >= MAX_STORED_BLOCKS - n:
        raise ValueError(f"{s} sentinels exceed the index capacity")
    items = [keys.encrypt(j, b) for j, b in enumerate(blocks)]
    items += [keys.sentinel_value(t) for t in range(s)]
    perm = keys.permutation(n + s)
    store = [0] * (n + s)
    for k, value in enumerate(items):
        store[perm[k]] = value
    tf = TaggedFile(Scheme.SENTINEL, code, store, [], len(data), block_count=block_count)
    return tf, SentinelLedger(keys, n, s)


def sentinel_meta(tf: TaggedFile, ledger: SentinelLedger) -> FileMeta:
    return FileMeta(tf.file_id, Scheme.SENTINEL, tf.code, tf.length, tf.block_count,
                    ledger.data_blocks // tf.code.n, stored=ledger.total)


def sentinel_challenge(ledger: SentinelLedger, q: int, rng: random.Random | None = None,
                       file_id: bytes = b"") -> tuple[Challenge, list[int]]:
    """Pick ``q`` unspent sentinels. Returns the challenge and their ordinals."""
    if q < 1:
        raise ValueError("q must be >= 1")
    unspent = [t for t in range(ledger.sentinels) if t not in ledger.spent]
    if len(unspent) < q:
        raise BudgetExhausted(f"{len(unspent)} sentinels left, audit needs {q}")
    rng = rng or secrets.SystemRandom()
    chosen = rng.sample(unspent, q)
    positions = ledger.positions()
    nonce = rng.getrandbits(128).to_bytes(16, "big")
    return Challenge(tuple(positions[t] for t in chosen), None, file_id, nonce), chosen


def sentinel_check(ledger: SentinelLedger, chosen: list[int], proof) -> bool:
    """Compare returned values with the expected sentinels and spend them."""
    ledger.spent.update(chosen)
    ledger.audits += 1
    if not isinstance(proof, BlockListProof) or len(proof.items) != len(chosen):
        return False
    return all(value == ledger.keys.sentinel_value(t) for t, (value, _) in zip(chosen, proof.items))


def sentinel_audit(ledger: SentinelLedger, q: int, store, rng: random.Random | None = None) -> bool:
    """One audit against ``store`` (anything with ``prove(challenge)``)."""
    challenge, chosen = sentinel_challenge(ledger, q, rng)
    return sentinel_check(ledger, chosen, store.prove(challenge))


def sentinel_extract_blocks(ledger: SentinelLedger, values: list[int | None]) -> list[int | None]:
    """Decrypt the data blocks out of a full store dump, in encoded order."""
    out = []
    for j, pos in enumerate(ledger.data_positions()):
        v = values[pos - 1]
        out.append(None if v is None else ledger.keys.decrypt(j, v))
    return out
