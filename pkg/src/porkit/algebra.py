"""Prime-field arithmetic and a symmetric pairing group.

Protocol code mostly works on plain ``int`` residues through the
:class:`PrimeField` methods, which keeps the inner loops cheap.
:class:`FieldElement` wraps a residue with operators for callers that prefer
value semantics.

The only pairing backend is :class:`TransparentPairing`: group elements carry
their discrete log relative to ``g`` so the pairing is exact exponent
multiplication. It has no security whatsoever, but it makes every
verification equation checkable to the bit.
"""

from __future__ import annotations

import hashlib
import random
from functools import reduce

import gmpy2

from porkit.config import DEFAULT_PRIME, SECURITY_BITS

FIELD_PRIME = 0
FIELD_BINARY = 1

TRANSPARENT_TAG = 0x01


def keyed_hash(data: bytes, key: bytes = b"", tag: bytes = b"", size: int = 32) -> bytes:
    """BLAKE2b over ``len(tag) || tag || data``, keyed when ``key`` is given.

    Every MAC, PRF and tree hash in the package goes through here with its own
    domain tag.
    """
    if len(tag) > 255:
        raise ValueError("domain tag longer than 255 bytes")
    h = hashlib.blake2b(key=key, digest_size=size)
    h.update(bytes([len(tag)]))
    h.update(tag)
    h.update(data)
    return h.digest()


class PrimeField:
    """Integers modulo a prime ``p``."""

    field_id = FIELD_PRIME

    def __init__(self, p: int = DEFAULT_PRIME, check: bool = True):
        if p < 2:
            raise ValueError(f"modulus must be >= 2, got {p}")
        if check and not gmpy2.is_prime(p, 40):
            raise ValueError(f"modulus {p} is not prime")
        self.p = p
        self.bits = p.bit_length()
        self.byte_width = (self.bits + 7) // 8

    @property
    def size(self) -> int:
        return self.p

    def __repr__(self) -> str:
        return f"PrimeField({self.p})" if self.bits <= 64 else f"PrimeField(<{self.bits} bits>)"

    def __eq__(self, other) -> bool:
        return isinstance(other, PrimeField) and other.p == self.p

    def __hash__(self) -> int:
        return hash((FIELD_PRIME, self.p))

    def __call__(self, value: int) -> FieldElement:
        return FieldElement(value, self)

    def reduce(self, a: int) -> int:
        return a % self.p

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.p

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.p

    def neg(self, a: int) -> int:
        return -a % self.p

    def mul(self, a: int, b: int) -> int:
        return a * b % self.p

    def inv(self, a: int) -> int:
        a %= self.p
        if a == 0:
            raise ZeroDivisionError("inverse of zero")
        return pow(a, -1, self.p)

    def pow(self, a: int, e: int) -> int:
        return pow(a, e, self.p)

    def dot(self, xs, ys) -> int:
        return sum(x * y for x, y in zip(xs, ys)) % self.p

    def prod(self, xs) -> int:
        p = self.p
        return reduce(lambda acc, x: acc * x % p, xs, 1)

    def random(self, rng: random.Random | None = None) -> int:
        return (rng or random.SystemRandom()).randrange(self.p)

    def to_bytes(self, a: int) -> bytes:
        return a.to_bytes(self.byte_width, "big")

    def from_bytes(self, data: bytes) -> int:
        if len(data) != self.byte_width:
            raise ValueError(f"expected {self.byte_width} bytes, got {len(data)}")
        value = int.from_bytes(data, "big")
        if value >= self.p:
            raise ValueError("encoded value is not reduced")
        return value


class FieldElement:
    __slots__ = ("value", "field")

    def __init__(self, value: int, field: PrimeField):
        self.value = value % field.p
        self.field = field

    def _coerce(self, other) -> int:
        if isinstance(other, FieldElement):
            if other.field != self.field:
                raise ValueError("field elements from different moduli")
            return other.value
        if isinstance(other, int):
            return other
        return NotImplemented

    def __add__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement(self.value + b, self.field)

    __radd__ = __add__

    def __sub__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement(self.value - b, self.field)

    def __rsub__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement(b - self.value, self.field)

    def __mul__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement(self.value * b, self.field)

    __rmul__ = __mul__

    def __truediv__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement(self.value * self.field.inv(b), self.field)

    def __neg__(self):
        return FieldElement(-self.value, self.field)

    def __pow__(self, e: int):
        if e < 0:
            return FieldElement(pow(self.field.inv(self.value), -e, self.field.p), self.field)
        return FieldElement(pow(self.value, e, self.field.p), self.field)

    def inv(self) -> FieldElement:
        return FieldElement(self.field.inv(self.value), self.field)

    def __eq__(self, other) -> bool:
        if isinstance(other, FieldElement):
            return self.field == other.field and self.value == other.value
        if isinstance(other, int):
            return self.value == other % self.field.p
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.value, self.field.p))

    def __int__(self) -> int:
        return self.value

    def __repr__(self) -> str:
        return f"FieldElement({self.value})"

    def to_bytes(self) -> bytes:
        return self.field.to_bytes(self.value)


def hash_to_field(data: bytes, domain_tag: bytes, field: PrimeField,
                  security_bits: int = SECURITY_BITS) -> int:
    """Reduce a ``2 * security_bits``-bit hash of ``data`` modulo ``p``."""
    size = min(64, max(16, 2 * security_bits // 8))
    return int.from_bytes(keyed_hash(data, tag=domain_tag, size=size), "big") % field.p


class GroupElement:
    """Element of the source group ``G``, stored as ``log_g``."""

    __slots__ = ("exponent", "group")

    def __init__(self, exponent: int, group: TransparentPairing):
        self.exponent = exponent % group.order
        self.group = group

    def _check(self, other) -> None:
        if not isinstance(other, GroupElement) or other.group != self.group:
            raise ValueError("group elements from different bilinear contexts")

    def __mul__(self, other: GroupElement) -> GroupElement:
        self._check(other)
        return GroupElement(self.exponent + other.exponent, self.group)

    def __pow__(self, k: int) -> GroupElement:
        return GroupElement(self.exponent * int(k), self.group)

    def __eq__(self, other) -> bool:
        return (isinstance(other, GroupElement) and other.group == self.group
                and other.exponent == self.exponent)

    def __hash__(self) -> int:
        return hash(("G", self.exponent, self.group.order))

    def __repr__(self) -> str:
        return f"g^{self.exponent}"

    def to_bytes(self) -> bytes:
        return bytes([TRANSPARENT_TAG]) + self.group.field.to_bytes(self.exponent)


class GtElement:
    """Element of the target group ``G_T``, stored as ``log_gt``."""

    __slots__ = ("exponent", "group")

    def __init__(self, exponent: int, group: TransparentPairing):
        self.exponent = exponent % group.order
        self.group = group

    def __mul__(self, other: GtElement) -> GtElement:
        if not isinstance(other, GtElement) or other.group != self.group:
            raise ValueError("target-group elements from different bilinear contexts")
        return GtElement(self.exponent + other.exponent, self.group)

    def __pow__(self, k: int) -> GtElement:
        return GtElement(self.exponent * int(k), self.group)

    def __eq__(self, other) -> bool:
        return (isinstance(other, GtElement) and other.group == self.group
                and other.exponent == self.exponent)

    def __hash__(self) -> int:
        return hash(("GT", self.exponent, self.group.order))

    def __repr__(self) -> str:
        return f"gt^{self.exponent}"

    def to_bytes(self) -> bytes:
        return bytes([TRANSPARENT_TAG]) + self.group.field.to_bytes(self.exponent)


class TransparentPairing:
    """Symmetric bilinear map ``e: G x G -> G_T`` of prime order ``p``.

    ``e(g^a, g^b) = gt^(a*b mod p)``. Insecure by construction: discrete logs
    are in plain sight.
    """

    backend_tag = TRANSPARENT_TAG

    def __init__(self, field: PrimeField | None = None):
        self.field = field or PrimeField()
        self.order = self.field.p

    def __eq__(self, other) -> bool:
        return (isinstance(other, TransparentPairing)
                and other.backend_tag == self.backend_tag and other.order == self.order)

    def __hash__(self) -> int:
        return hash((self.backend_tag, self.order))

    def __repr__(self) -> str:
        return f"TransparentPairing({self.field!r})"

    @property
    def g(self) -> GroupElement:
        return GroupElement(1, self)

    @property
    def gt(self) -> GtElement:
        return GtElement(1, self)

    @property
    def identity(self) -> GroupElement:
        return GroupElement(0, self)

    @property
    def gt_identity(self) -> GtElement:
        return GtElement(0, self)

    def element(self, exponent: int) -> GroupElement:
        return GroupElement(exponent, self)

    def random_element(self, rng: random.Random | None = None, nonzero: bool = True) -> GroupElement:
        rng = rng or random.SystemRandom()
        return GroupElement(rng.randrange(1 if nonzero else 0, self.order), self)

    def pair(self, u: GroupElement, v: GroupElement) -> GtElement:
        for x in (u, v):
            if not isinstance(x, GroupElement):
                raise TypeError(f"expected a GroupElement, got {type(x).__name__}")
            if x.group != self:
                raise ValueError("cannot pair elements from a different backend or order")
        return GtElement(u.exponent * v.exponent, self)

    def hash_to_group(self, data: bytes) -> GroupElement:
        return GroupElement(hash_to_field(data, b"H2G", self.field), self)

    def contains(self, x) -> bool:
        return isinstance(x, GroupElement) and x.group == self

    @property
    def element_width(self) -> int:
        return 1 + self.field.byte_width

    def element_from_bytes(self, data: bytes) -> GroupElement:
        if len(data) != self.element_width or data[0] != self.backend_tag:
            raise ValueError("not a transparent group element encoding")
        return GroupElement(self.field.from_bytes(data[1:]), self)

    def gt_from_bytes(self, data: bytes) -> GtElement:
        if len(data) != self.element_width or data[0] != self.backend_tag:
            raise ValueError("not a transparent target-group encoding")
        return GtElement(self.field.from_bytes(data[1:]), self)
