"""Known-answer vectors, shared by ``porkit selftest`` and the test suite.

GF(4) elements are written ``0``, ``1``, ``a`` (a root of x^2+x+1) and ``g``
(a^2 = a+1); as integers they are 0, 1, 2, 3.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from itertools import product

from porkit.algebra import PrimeField, TransparentPairing
from porkit.erasure import BinaryField, CodeParams, Codeword, rs_decode, rs_encode
from porkit.por.schemes import (Challenge, SwPrivateKeys, SwPrivateProof, SwPublicKey, SwPublicProof,
                                prove_with, verify_sw_private, verify_sw_public)

GF4_SYMBOLS = "01ag"

# Every codeword of the (3, 2) Reed-Solomon code over GF(4).
GF4_CODEWORDS = frozenset({
    "000", "1a0", "g0a", "ga1",
    "01a", "ag0", "10g", "111",
    "0ag", "g10", "1ga", "aaa",
    "0g1", "a01", "a1g", "ggg",
})

GF4_ERASED = "1*g"
GF4_DECODED = "10g"


def gf4_word(symbols) -> str:
    return "".join(GF4_SYMBOLS[s] for s in symbols)


def gf4_parse(word: str) -> list[int | None]:
    return [None if ch == "*" else GF4_SYMBOLS.index(ch) for ch in word]


def gf4_code() -> CodeParams:
    return CodeParams(3, 2, BinaryField(2))


def gf4_generated() -> set[str]:
    code = gf4_code()
    return {gf4_word(rs_encode(list(msg), code).symbols) for msg in product(range(4), repeat=2)}


def gf4_decode(word: str) -> str:
    code = gf4_code()
    msg = rs_decode(Codeword.from_optional(gf4_parse(word)), code)
    return gf4_word(rs_encode(msg, code).symbols)


@dataclass
class TableSwPrivateKeys(SwPrivateKeys):
    """SW-private keys whose index PRF is a fixed table."""

    table: dict[int, int] = dc_field(default_factory=dict)

    def index_prf(self, i: int) -> int:
        return self.table[i]


@dataclass
class TableSwPublicKey(SwPublicKey):
    """SW-public key whose index hash is a fixed table of exponents."""

    table: dict[int, int] = dc_field(default_factory=dict)

    def index_hash(self, i: int):
        return self.group.element(self.table[i])


def sw_private_example():
    """p=101, alpha=7, h(1)=13, h(2)=21, F=[5, 9], Q={(1,2),(2,3)} -> (45, 37)."""
    field = PrimeField(101)
    keys = TableSwPrivateKeys(field, 7, b"", table={1: 13, 2: 21})
    blocks = {1: 5, 2: 9}
    tags = {i: keys.tag(i, b) for i, b in blocks.items()}
    ch = Challenge((1, 2), (2, 3))
    proof = prove_with(keys.scheme, field, None, lambda i: (blocks[i], tags[i]), ch)
    return keys, ch, tags, proof


def sw_public_example():
    """p=101, x=3, alpha=g^5, H(1)=g^2, F[1]=4, Q={(1,2)} -> (g^31, 8)."""
    group = TransparentPairing(PrimeField(101))
    x = 3
    public = TableSwPublicKey(group, group.g ** x, group.element(5), table={1: 2})
    tag = (public.index_hash(1) * public.alpha ** 4) ** x
    ch = Challenge((1,), (2,))
    proof = prove_with(public.scheme, group.field, group, lambda i: (4, tag), ch)
    return public, ch, tag, proof


def run_all() -> list[tuple[str, bool, str]]:
    """``(name, passed, detail)`` for every vector."""
    results = []
    generated = gf4_generated()
    matched = len(generated & GF4_CODEWORDS)
    results.append(("gf4 codeword set", generated == GF4_CODEWORDS,
                    f"{matched}/{len(GF4_CODEWORDS)} codewords matched"))
    decoded = gf4_decode(GF4_ERASED)
    results.append(("gf4 erasure decode", decoded == GF4_DECODED, f"{GF4_ERASED} -> {decoded}"))

    keys, ch, tags, proof = sw_private_example()
    ok = (tags == {1: 48, 2: 84} and proof == SwPrivateProof(45, 37)
          and verify_sw_private(keys, ch, proof))
    results.append(("sw-private worked example", ok, f"sigma={proof.sigma} mu={proof.mu}"))

    public, ch, tag, proof = sw_public_example()
    group = public.group
    ok = (tag == group.element(66) and proof == SwPublicProof(group.element(31), 8)
          and verify_sw_public(public, ch, proof))
    results.append(("sw-public worked example", ok, f"sigma=g^{proof.sigma.exponent} mu={proof.mu}"))
    return results
