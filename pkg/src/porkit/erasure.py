"""Systematic Reed-Solomon erasure coding over prime fields and GF(2^m).

A message of ``f`` symbols is read as the values of a degree < f polynomial at
the first ``f`` evaluation points; the ``n - f`` parity symbols are its values
at the remaining points. Any ``f`` surviving symbols pin the polynomial down,
so decoding is Lagrange interpolation back onto the systematic points.

Evaluation points are ``1..n`` in Z_p and ``0..n-1`` (the field elements in
integer order) in GF(2^m).
"""

from __future__ import annotations

import math
import random
import struct
from dataclasses import dataclass, field as dc_field
from functools import lru_cache, reduce
from typing import NamedTuple, Sequence

import gmpy2

from porkit.algebra import FIELD_BINARY, FIELD_PRIME, PrimeField

# Lowest-weight primitive polynomials, bit i = coefficient of x^i.
_PRIMITIVE_POLYS = {
    1: 0b11,
    2: 0b111,
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,
    7: 0b10001001,
    8: 0b100011101,
}


class BinaryField:
    """GF(2^m), m <= 8, with log/antilog tables. ``alpha`` is the element 2."""

    field_id = FIELD_BINARY

    def __init__(self, m: int):
        if m not in _PRIMITIVE_POLYS:
            raise ValueError(f"GF(2^m) supported for 1 <= m <= 8, got m={m}")
        self.m = m
        self.size = 1 << m
        self.bits = m
        self.byte_width = 1
        poly = _PRIMITIVE_POLYS[m]
        order = self.size - 1
        self._exp = [0] * (2 * order)
        self._log = [0] * self.size
        x = 1
        for i in range(order):
            self._exp[i] = x
            self._log[x] = i
            x <<= 1
            if x & self.size:
                x ^= poly
        for i in range(order, 2 * order):
            self._exp[i] = self._exp[i - order]

    def __repr__(self) -> str:
        return f"BinaryField({self.m})"

    def __eq__(self, other) -> bool:
        return isinstance(other, BinaryField) and other.m == self.m

    def __hash__(self) -> int:
        return hash((FIELD_BINARY, self.m))

    def add(self, a: int, b: int) -> int:
        return a ^ b

    sub = add

    def neg(self, a: int) -> int:
        return a

    def reduce(self, a: int) -> int:
        if not 0 <= a < self.size:
            raise ValueError(f"{a} is not an element of GF(2^{self.m})")
        return a

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return self._exp[self._log[a] + self._log[b]]

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("inverse of zero")
        return self._exp[(self.size - 1 - self._log[a]) % (self.size - 1)]

    def pow(self, a: int, e: int) -> int:
        if a == 0:
            return 0 if e else 1
        return self._exp[(self._log[a] * e) % (self.size - 1)]

    def dot(self, xs, ys) -> int:
        acc = 0
        for x, y in zip(xs, ys):
            acc ^= self.mul(x, y)
        return acc

    def prod(self, xs) -> int:
        return reduce(self.mul, xs, 1)

    def random(self, rng: random.Random | None = None) -> int:
        return (rng or random.SystemRandom()).randrange(self.size)

    def to_bytes(self, a: int) -> bytes:
        return bytes([a])

    def from_bytes(self, data: bytes) -> int:
        if len(data) != 1 or data[0] >= self.size:
            raise ValueError("not an encoded GF(2^m) element")
        return data[0]


Field = PrimeField | BinaryField


def max_code_length(field: Field) -> int:
    return field.size if field.field_id == FIELD_BINARY else field.size - 1


def evaluation_points(field: Field, n: int) -> list[int]:
    if field.field_id == FIELD_BINARY:
        return list(range(n))
    return list(range(1, n + 1))


@dataclass(frozen=True)
class CodeParams:
    """An ``(n, f, n - f + 1)`` MDS code over ``field``."""

    n: int
    f: int
    field: Field = dc_field(default_factory=PrimeField)

    def __post_init__(self):
        if not 1 <= self.f < self.n:
            raise ValueError(f"need 1 <= f < n, got f={self.f}, n={self.n}")
        if self.n > max_code_length(self.field):
            raise ValueError(f"code length {self.n} exceeds the {self.field!r} point budget")

    @property
    def d(self) -> int:
        return self.n - self.f + 1

    @property
    def rate(self) -> float:
        return self.f / self.n


class Unrecoverable(ValueError):
    """Too few surviving symbols to decode."""

    def __init__(self, present: int, needed: int, where: str = "codeword"):
        self.present = present
        self.needed = needed
        self.deficit = needed - present
        super().__init__(f"{where}: {present} symbols present, {needed} needed (deficit {self.deficit})")


@dataclass
class Codeword:
    symbols: list[int]
    mask: list[bool]

    def __post_init__(self):
        if len(self.symbols) != len(self.mask):
            raise ValueError("symbol and mask lengths differ")

    @classmethod
    def full(cls, symbols: Sequence[int]) -> Codeword:
        return cls(list(symbols), [True] * len(symbols))

    @classmethod
    def from_optional(cls, symbols: Sequence[int | None]) -> Codeword:
        return cls([0 if s is None else s for s in symbols], [s is not None for s in symbols])

    @property
    def present_count(self) -> int:
        return sum(self.mask)

    def erase(self, positions) -> Codeword:
        mask = list(self.mask)
        for i in positions:
            mask[i] = False
        return Codeword(list(self.symbols), mask)


# Interpolations with more support-target pairs than this use one packed
# big-integer convolution instead of a sum per target.
DIRECT_SUM_LIMIT = 1 << 12


class _Geometry:
    """Differences between evaluation points and their inverses.

    Prime-field points are consecutive integers, so products of differences
    over a contiguous range are ratios of factorials; a support with holes is
    handled by dividing the holes back out.
    """

    def __init__(self, field: Field, n: int):
        self.field = field
        self.n = n
        self.points = evaluation_points(field, n)
        if field.field_id == FIELD_PRIME:
            p = field.p
            fact = [1] * (n + 1)
            for i in range(1, n + 1):
                fact[i] = fact[i - 1] * i % p
            self._fact = fact
            self._ifact = _batch_inverse(fact, p)
            # inv(d) = (d-1)! / d!, and x_a - x_b = a - b.
            pos = [fact[d - 1] * self._ifact[d] % p for d in range(1, n)]
            self._inv = [p - x for x in reversed(pos)] + [0] + pos
        else:
            xs = self.points
            self._inv_rows = [[0 if a == b else field.inv(a ^ b) for b in xs] for a in xs]

    def diff(self, a: int, b: int) -> int:
        if self.field.field_id == FIELD_PRIME:
            return a - b
        return self.points[a] ^ self.points[b]

    def dinv(self, a: int, b: int) -> int:
        if self.field.field_id == FIELD_PRIME:
            return self._inv[a - b + self.n - 1]
        return self._inv_rows[a][b]

    def _span(self, t: int, lo: int, hi: int) -> int:
        """Product of ``t - k`` over ``k`` in ``lo..hi``, skipping ``k == t``, mod p."""
        p, fact, ifact = self.field.p, self._fact, self._ifact
        if t > hi:
            return fact[t - lo] * ifact[t - hi - 1] % p
        if t < lo:
            v = fact[hi - t] * ifact[lo - t - 1] % p
            return (p - v) % p if (hi - lo + 1) & 1 else v
        v = fact[t - lo] * fact[hi - t] % p
        return (p - v) % p if (hi - t) & 1 else v

    def _holes(self, t: int, holes: Sequence[int]) -> int:
        p = self.field.p
        acc = 1
        for k in range(0, len(holes), 16):
            acc = acc * math.prod(t - g for g in holes[k:k + 16] if g != t) % p
        return acc

    def _vanishing(self, points: Sequence[int], support: Sequence[int]) -> tuple[list[int], list[int]]:
        """``(num, den)`` per point with ``num / den`` the product of ``x - x_k``
        over the support, skipping the point itself."""
        lo, hi = min(support), max(support)
        inside = set(support)
        holes = [k for k in range(lo, hi + 1) if k not in inside]
        nums = [self._span(t, lo, hi) for t in points]
        dens = [self._holes(t, holes) if holes else 1 for t in points]
        return nums, dens

    def weights(self, support: Sequence[int]) -> list[int]:
        field = self.field
        if field.field_id == FIELD_PRIME:
            nums, dens = self._vanishing(support, support)
            inv = _batch_inverse(nums, field.p)
            return [d * i % field.p for d, i in zip(dens, inv)]
        dinv = self.dinv
        return [field.prod(dinv(j, k) for k in support if k != j) for j in support]

    def interpolate(self, support: Sequence[int], ys: Sequence[int], targets: Sequence[int]) -> list[int]:
        """Evaluate the polynomial through ``(x_j, ys[j])`` at each target point."""
        field = self.field
        support, targets = list(support), list(targets)
        if not targets:
            return []
        w = self.weights(support)
        if field.field_id != FIELD_PRIME:
            return [field.dot(self.basis_row(t, support, w), ys) for t in targets]
        p = field.p
        if set(targets) & set(support):
            raise ValueError("interpolation targets overlap the support")
        nums, dens = self._vanishing(targets, support)
        numerators = [a * b % p for a, b in zip(nums, _batch_inverse(dens, p))]
        z = [y * wj % p for y, wj in zip(ys, w)]
        if len(support) * len(targets) <= DIRECT_SUM_LIMIT:
            table, off = self._inv, self.n - 1
            sums = [sum(zj * table[t - j + off] for zj, j in zip(z, support)) for t in targets]
        else:
            sums = self._convolved_sums(support, z, targets)
        return [m * acc % p for m, acc in zip(numerators, sums)]

    def _convolved_sums(self, support: Sequence[int], z: Sequence[int], targets: Sequence[int]) -> list[int]:
        """``sum_j z_j / (t - j)`` for every target as one big-integer product."""
        lo, hi = min(support), max(support)
        dense = [0] * (hi - lo + 1)
        for j, zj in zip(support, z):
            dense[j - lo] = zj
        dmin = min(targets) - hi
        dmax = max(targets) - lo
        off = self.n - 1
        kernel = self._inv[dmin + off:dmax + off + 1]
        conv = _convolve(dense, kernel, self.field.p, [t - lo - dmin for t in targets])
        return conv

    def basis_row(self, t: int, support: Sequence[int], weights: Sequence[int]) -> list[int]:
        """Values ``L_j(x_t)`` of the Lagrange basis over ``support``."""
        field = self.field
        numerator = field.prod(self.diff(t, k) for k in support)
        return [field.mul(numerator, field.mul(w, self.dinv(t, j)))
                for j, w in zip(support, weights)]


def _convolve(a: Sequence[int], b: Sequence[int], p: int, wanted: Sequence[int]) -> list[int]:
    """Selected entries of the integer convolution of ``a`` and ``b`` (entries below p).

    Both sequences are packed into single integers with slots wide enough that
    no coefficient of the product overflows into its neighbour.
    """
    bits = 2 * p.bit_length() + max(len(a), len(b)).bit_length() + 1
    width = (bits + 7) // 8
    pa = int.from_bytes(b"".join(x.to_bytes(width, "little") for x in a), "little")
    pb = int.from_bytes(b"".join(x.to_bytes(width, "little") for x in b), "little")
    product = int(gmpy2.mpz(pa) * gmpy2.mpz(pb))
    raw = product.to_bytes(width * (len(a) + len(b)), "little")
    return [int.from_bytes(raw[k * width:(k + 1) * width], "little") for k in wanted]


def _batch_inverse(values: Sequence[int], p: int) -> list[int]:
    prefix = [1] * (len(values) + 1)
    for i, v in enumerate(values):
        prefix[i + 1] = prefix[i] * v % p
    inv = pow(prefix[-1], -1, p)
    out = [0] * len(values)
    for i in range(len(values) - 1, -1, -1):
        out[i] = prefix[i] * inv % p
        inv = inv * values[i] % p
    return out


@lru_cache(maxsize=64)
def _geometry(field: Field, n: int) -> _Geometry:
    return _Geometry(field, n)


# Above this many entries the parity matrix is not cached; parity symbols are
# interpolated directly instead.
PARITY_MATRIX_LIMIT = 1 << 14


@lru_cache(maxsize=64)
def _parity_matrix(params: CodeParams) -> tuple[tuple[int, ...], ...]:
    geo = _geometry(params.field, params.n)
    support = range(params.f)
    w = geo.weights(support)
    return tuple(tuple(geo.basis_row(t, support, w)) for t in range(params.f, params.n))


def rs_encode(message: Sequence[int], params: CodeParams) -> Codeword:
    if len(message) != params.f:
        raise ValueError(f"message has {len(message)} symbols, code expects {params.f}")
    field = params.field
    msg = [int(m) for m in message]
    if any(not 0 <= m < field.size for m in msg):
        raise ValueError("message symbol outside the code's field")
    if params.f * (params.n - params.f) > PARITY_MATRIX_LIMIT:
        parity = _geometry(field, params.n).interpolate(range(params.f), msg, range(params.f, params.n))
    else:
        parity = [field.dot(row, msg) for row in _parity_matrix(params)]
    return Codeword.full(msg + parity)


def rs_decode(codeword: Codeword, params: CodeParams, where: str = "codeword") -> list[int]:
    if len(codeword.symbols) != params.n:
        raise ValueError(f"codeword has {len(codeword.symbols)} symbols, code expects {params.n}")
    present = [i for i, ok in enumerate(codeword.mask) if ok]
    if len(present) < params.f:
        raise Unrecoverable(len(present), params.f, where)
    f = params.f
    missing = [t for t in range(f) if not codeword.mask[t]]
    if not missing:
        return list(codeword.symbols[:f])
    support = present[:f]
    ys = [codeword.symbols[j] for j in support]
    out = list(codeword.symbols[:f])
    recovered = _geometry(params.field, params.n).interpolate(support, ys, missing)
    for t, value in zip(missing, recovered):
        out[t] = value
    return out


class Striped(NamedTuple):
    stripes: list[list[int]]
    length: int


def stripe_file(blocks: Sequence[int], f: int) -> Striped:
    if f < 1:
        raise ValueError("stripe width must be >= 1")
    stripes = []
    for start in range(0, len(blocks), f):
        chunk = list(blocks[start:start + f])
        chunk.extend([0] * (f - len(chunk)))
        stripes.append(chunk)
    return Striped(stripes, len(blocks))


def unstripe(striped: Striped) -> list[int]:
    flat = [b for s in striped.stripes for b in s]
    return flat[:striped.length]


def block_bytes(field: Field) -> int:
    """Payload bytes per block; always strictly below the modulus."""
    width = (field.bits - 1) // 8 if field.field_id == FIELD_PRIME else field.bits // 8
    if width < 1:
        raise ValueError(f"{field!r} is too small to carry a byte per block")
    return width


def bytes_to_blocks(data: bytes, field: Field) -> list[int]:
    width = block_bytes(field)
    return [int.from_bytes(data[i:i + width].ljust(width, b"\0"), "big")
            for i in range(0, len(data), width)]


def blocks_to_bytes(blocks: Sequence[int], length: int, field: Field) -> bytes:
    width = block_bytes(field)
    out = bytearray()
    for b in blocks:
        if b >= 1 << (8 * width):
            raise ValueError("block does not fit its payload width")
        out += b.to_bytes(width, "big")
    if len(out) < length:
        raise ValueError("not enough blocks for the recorded length")
    return bytes(out[:length])


def encode_bytes(data: bytes, params: CodeParams) -> tuple[list[list[int]], int]:
    """Bytes -> blocks -> stripes -> codewords. Returns ``(codewords, block_count)``."""
    striped = stripe_file(bytes_to_blocks(data, params.field), params.f)
    return [rs_encode(s, params).symbols for s in striped.stripes], striped.length


def decode_stripes(codewords: Sequence[Codeword], params: CodeParams, length: int) -> bytes:
    width = block_bytes(params.field)
    block_count = -(-length // width)
    messages = [rs_decode(cw, params, where=f"stripe {i}") for i, cw in enumerate(codewords)]
    return blocks_to_bytes(unstripe(Striped(messages, block_count)), length, params.field)


# Container format ----------------------------------------------------------

MAGIC = b"PORK"
VERSION = 1
_HEAD = struct.Struct("<4sBB")
_TAIL = struct.Struct("<IIIQ")


@dataclass
class Container:
    field: Field
    f: int
    n: int
    stripes: list[list[int | None]]
    length: int

    @property
    def symbols(self) -> list[int | None]:
        return [s for stripe in self.stripes for s in stripe]


def field_from_id(field_id: int, modulus: int) -> Field:
    if field_id == FIELD_PRIME:
        return PrimeField(modulus)
    if field_id == FIELD_BINARY:
        return BinaryField(modulus)
    raise ValueError(f"unknown field id {field_id}")


def encode_container(field: Field, f: int, n: int, stripes: Sequence[Sequence[int]], length: int) -> bytes:
    modulus = field.p if field.field_id == FIELD_PRIME else field.m
    mod_bytes = modulus.to_bytes((modulus.bit_length() + 7) // 8, "little")
    parts = [_HEAD.pack(MAGIC, VERSION, field.field_id),
             struct.pack("<H", len(mod_bytes)), mod_bytes,
             _TAIL.pack(f, n, len(stripes), length)]
    for stripe in stripes:
        if len(stripe) != n:
            raise ValueError(f"stripe has {len(stripe)} symbols, header says {n}")
        parts.append(b"".join(field.to_bytes(s) for s in stripe))
    return b"".join(parts)


def decode_container(data: bytes, allow_truncated: bool = False) -> tuple[Container, int]:
    """Parse a container; returns it with the offset of the first byte after it.

    With ``allow_truncated`` missing trailing symbols come back as ``None``.
    """
    if len(data) < _HEAD.size + 2:
        raise ValueError("container too short")
    magic, version, field_id = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError("bad container magic")
    if version != VERSION:
        raise ValueError(f"unsupported container version {version}")
    off = _HEAD.size
    (mod_len,) = struct.unpack_from("<H", data, off)
    off += 2
    modulus = int.from_bytes(data[off:off + mod_len], "little")
    off += mod_len
    f, n, count, length = _TAIL.unpack_from(data, off)
    off += _TAIL.size
    field = field_from_id(field_id, modulus)
    width = field.byte_width
    stripes = []
    for _ in range(count):
        stripe = []
        for _ in range(n):
            chunk = data[off:off + width]
            if len(chunk) < width:
                if not allow_truncated:
                    raise ValueError("container truncated")
                stripe.append(None)
            else:
                stripe.append(field.from_bytes(chunk))
            off += width
        stripes.append(stripe)
    return Container(field, f, n, stripes, length), min(off, len(data))
