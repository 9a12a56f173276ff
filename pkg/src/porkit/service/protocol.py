"""Binary wire protocol.

A frame is a 4-byte big-endian length covering the type byte and payload,
one type byte, then the payload. All integers are big-endian. Field elements
use the fixed-width encoding of their field; every message that carries field
elements starts its payload section with a field header (u16 length, then the
modulus in minimal big-endian form).

Decoders are strict: trailing bytes, unreduced field elements, non-boolean
flag bytes and non-minimal moduli are all rejected, so every byte string has
at most one meaning.
"""

from __future__ import annotations

import functools
import socket
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

from porkit.algebra import GroupElement, PrimeField, TransparentPairing
from porkit.authenticators import PathStep, decode_path, encode_path
from porkit.config import MAX_FRAME
from porkit.por.schemes import BlockListProof, Challenge, SwPrivateProof, SwPublicProof

_LEN = struct.Struct(">I")
# Bounds the primality test a peer can make the server run.
MAX_MODULUS_BYTES = 64


class MsgType(IntEnum):
    STORE = 1
    CHALLENGE = 2
    PROOF = 3
    READ = 4
    WRITE = 5
    AUDIT = 6
    ERROR = 7
    OK = 8


class Target(IntEnum):
    BLOCKS = 0
    U = 1
    C = 2
    H = 3
    U_DUMP = 4
    H_DUMP = 5


class ErrorCode(IntEnum):
    UNKNOWN_FILE = 1
    MALFORMED = 2
    UNKNOWN_TYPE = 3
    BAD_REQUEST = 4
    INTERNAL = 5


class FrameError(ValueError):
    pass


# Framing ----------------------------------------------------------------------

def encode_frame(msg_type: int, payload: bytes, max_frame: int = MAX_FRAME) -> bytes:
    if len(payload) + 1 > max_frame:
        raise FrameError(f"frame of {len(payload) + 1} bytes exceeds the {max_frame}-byte limit")
    return _LEN.pack(len(payload) + 1) + bytes([msg_type]) + payload


def decode_frame(data: bytes, max_frame: int = MAX_FRAME) -> tuple[int, bytes]:
    if len(data) < 5:
        raise FrameError("frame shorter than its header")
    (length,) = _LEN.unpack_from(data)
    if length == 0:
        raise FrameError("zero-length frame")
    if length > max_frame:
        raise FrameError(f"declared length {length} exceeds the {max_frame}-byte limit")
    if len(data) != 4 + length:
        raise FrameError(f"declared length {length} but {len(data) - 4} bytes follow")
    return data[4], bytes(data[5:])


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("connection closed mid-frame")
        buf += chunk
    return bytes(buf)


def read_frame(sock: socket.socket, max_frame: int = MAX_FRAME) -> tuple[int, bytes]:
    (length,) = _LEN.unpack(_recv_exact(sock, 4))
    if length == 0 or length > max_frame:
        raise FrameError(f"bad frame length {length}")
    body = _recv_exact(sock, length)
    return body[0], body[1:]


# Byte readers -----------------------------------------------------------------

class Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.off + n > len(self.data):
            raise FrameError("payload truncated")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def flag(self) -> bool:
        v = self.u8()
        if v > 1:
            raise FrameError("flag byte must be 0 or 1")
        return bool(v)

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def blob16(self) -> bytes:
        return self.take(self.u16())

    def blob32(self) -> bytes:
        return self.take(self.u32())

    def element(self, field: PrimeField) -> int:
        try:
            return field.from_bytes(self.take(field.byte_width))
        except ValueError as exc:
            raise FrameError(str(exc)) from None

    def field(self) -> PrimeField:
        raw = self.blob16()
        if not raw or raw[0] == 0:
            raise FrameError("modulus must be non-empty and minimally encoded")
        if len(raw) > MAX_MODULUS_BYTES:
            raise FrameError(f"modulus longer than {MAX_MODULUS_BYTES} bytes")
        try:
            return field_for(int.from_bytes(raw, "big"))
        except ValueError as exc:
            raise FrameError(str(exc)) from None

    def count(self, item_size: int = 1) -> int:
        n = self.u32()
        if n * item_size > len(self.data) - self.off:
            raise FrameError("count exceeds remaining payload")
        return n

    def done(self) -> None:
        if self.off != len(self.data):
            raise FrameError(f"{len(self.data) - self.off} trailing bytes")


def u16(v: int) -> bytes:
    return struct.pack(">H", v)


def u32(v: int) -> bytes:
    return struct.pack(">I", v)


def u64(v: int) -> bytes:
    return struct.pack(">Q", v)


def blob16(b: bytes) -> bytes:
    if len(b) > 0xFFFF:
        raise FrameError("blob too long for a u16 length")
    return u16(len(b)) + b


def blob32(b: bytes) -> bytes:
    return u32(len(b)) + b


@functools.lru_cache(maxsize=32)
def field_for(p: int) -> PrimeField:
    return PrimeField(p)


def field_header(field: PrimeField) -> bytes:
    return blob16(field.p.to_bytes((field.p.bit_length() + 7) // 8, "big"))


FILE_ID_LEN = 16


def _file_id(r: Reader) -> bytes:
    return r.take(FILE_ID_LEN)


def _check_file_id(file_id: bytes) -> None:
    if len(file_id) != FILE_ID_LEN:
        raise ValueError(f"file ids are {FILE_ID_LEN} bytes")


# Tags ---------------------------------------------------------------------------

TAG_NONE, TAG_BYTES, TAG_GROUP, TAG_ELEMENT = 0, 1, 2, 3


def encode_any_tag(tag, field: PrimeField) -> bytes:
    """Kind byte, then nothing (none), a u16-prefixed blob (MAC or group
    element) or a fixed-width field element."""
    if tag is None:
        return bytes([TAG_NONE])
    if isinstance(tag, bytes):
        return bytes([TAG_BYTES]) + blob16(tag)
    if isinstance(tag, GroupElement):
        return bytes([TAG_GROUP]) + blob16(tag.to_bytes())
    if isinstance(tag, int) and not isinstance(tag, bool):
        return bytes([TAG_ELEMENT]) + field.to_bytes(tag)
    raise TypeError(f"cannot encode tag of type {type(tag).__name__}")


def decode_any_tag(r: Reader, field: PrimeField):
    kind = r.u8()
    if kind == TAG_NONE:
        return None
    if kind == TAG_ELEMENT:
        return r.element(field)
    if kind not in (TAG_BYTES, TAG_GROUP):
        raise FrameError(f"unknown tag kind {kind}")
    raw = r.blob16()
    if kind == TAG_BYTES:
        return raw
    try:
        return TransparentPairing(field).element_from_bytes(raw)
    except ValueError as exc:
        raise FrameError(str(exc)) from None


# Messages -----------------------------------------------------------------------

@dataclass(frozen=True)
class StoreMsg:
    """``kind`` 0 uploads one tagged-file container; 1 uploads a dynamic
    store as two containers (U, C)."""

    kind: int
    file_id: bytes
    parts: tuple[bytes, ...]

    TYPE = MsgType.STORE

    def encode(self) -> bytes:
        _check_file_id(self.file_id)
        if len(self.parts) > 255:
            raise ValueError("too many parts")
        return (bytes([self.kind]) + self.file_id + bytes([len(self.parts)])
                + b"".join(blob32(p) for p in self.parts))

    @classmethod
    def decode(cls, r: Reader) -> StoreMsg:
        kind = r.u8()
        if kind > 1:
            raise FrameError(f"unknown store kind {kind}")
        file_id = _file_id(r)
        parts = tuple(r.blob32() for _ in range(r.u8()))
        return cls(kind, file_id, parts)


@dataclass(frozen=True)
class ChallengeMsg:
    field: PrimeField
    challenge: Challenge

    TYPE = MsgType.CHALLENGE

    def encode(self) -> bytes:
        ch = self.challenge
        _check_file_id(ch.file_id)
        if len(ch.nonce) > 255:
            raise ValueError("nonce too long")
        out = [ch.file_id, field_header(self.field), bytes([len(ch.nonce)]), ch.nonce,
               bytes([ch.coefficients is not None]), u32(len(ch.indices))]
        out += [u64(i) for i in ch.indices]
        if ch.coefficients is not None:
            out += [self.field.to_bytes(c) for c in ch.coefficients]
        return b"".join(out)

    @classmethod
    def decode(cls, r: Reader) -> ChallengeMsg:
        file_id = _file_id(r)
        field = r.field()
        nonce = r.take(r.u8())
        has_coeffs = r.flag()
        count = r.count(8)
        indices = tuple(r.u64() for _ in range(count))
        coeffs = tuple(r.element(field) for _ in range(count)) if has_coeffs else None
        try:
            ch = Challenge(indices, coeffs, file_id, nonce)
        except ValueError as exc:
            raise FrameError(str(exc)) from None
        return cls(field, ch)


PROOF_BLOCKS, PROOF_SW_PRIVATE, PROOF_SW_PUBLIC = 0, 1, 2


@dataclass(frozen=True)
class ProofMsg:
    field: PrimeField
    proof: BlockListProof | SwPrivateProof | SwPublicProof

    TYPE = MsgType.PROOF

    def encode(self) -> bytes:
        f = self.field
        pr = self.proof
        if isinstance(pr, BlockListProof):
            out = [bytes([PROOF_BLOCKS]), field_header(f), u32(len(pr.items))]
            for block, tag in pr.items:
                out += [f.to_bytes(block), encode_any_tag(tag, f)]
            return b"".join(out)
        if isinstance(pr, SwPrivateProof):
            return bytes([PROOF_SW_PRIVATE]) + field_header(f) + f.to_bytes(pr.sigma) + f.to_bytes(pr.mu)
        if isinstance(pr, SwPublicProof):
            return bytes([PROOF_SW_PUBLIC]) + field_header(f) + pr.sigma.to_bytes() + f.to_bytes(pr.mu)
        raise TypeError(f"unknown proof type {type(pr).__name__}")

    @classmethod
    def decode(cls, r: Reader) -> ProofMsg:
        kind = r.u8()
        field = r.field()
        if kind == PROOF_BLOCKS:
            count = r.count(field.byte_width + 1)
            items = tuple((r.element(field), decode_any_tag(r, field)) for _ in range(count))
            return cls(field, BlockListProof(items))
        if kind == PROOF_SW_PRIVATE:
            return cls(field, SwPrivateProof(r.element(field), r.element(field)))
        if kind == PROOF_SW_PUBLIC:
            group = TransparentPairing(field)
            try:
                sigma = group.element_from_bytes(r.take(group.element_width))
            except ValueError as exc:
                raise FrameError(str(exc)) from None
            return cls(field, SwPublicProof(sigma, r.element(field)))
        raise FrameError(f"unknown proof kind {kind}")


@dataclass(frozen=True)
class ReadMsg:
    file_id: bytes
    target: Target
    level: int
    positions: tuple[int, ...]

    TYPE = MsgType.READ

    def encode(self) -> bytes:
        _check_file_id(self.file_id)
        return (self.file_id + bytes([self.target, self.level]) + u32(len(self.positions))
                + b"".join(u64(i) for i in self.positions))

    @classmethod
    def decode(cls, r: Reader) -> ReadMsg:
        file_id = _file_id(r)
        target = _target(r.u8())
        level = r.u8()
        positions = tuple(r.u64() for _ in range(r.count(8)))
        return cls(file_id, target, level, positions)


def _target(v: int) -> Target:
    try:
        return Target(v)
    except ValueError:
        raise FrameError(f"unknown read target {v}") from None


@dataclass(frozen=True)
class WriteMsg:
    """Replace symbols of a dynamic store. ``U`` writes one symbol at
    ``position``; ``C`` and ``H`` replace the whole structure."""

    file_id: bytes
    target: Target
    level: int
    position: int
    field: PrimeField
    width: int
    symbols: tuple[tuple[int, ...], ...]

    TYPE = MsgType.WRITE

    def encode(self) -> bytes:
        _check_file_id(self.file_id)
        out = [self.file_id, bytes([self.target, self.level]), u64(self.position),
               field_header(self.field), u16(self.width), u32(len(self.symbols))]
        for sym in self.symbols:
            if len(sym) != self.width:
                raise ValueError("symbol width mismatch")
            out += [self.field.to_bytes(x) for x in sym]
        return b"".join(out)

    @classmethod
    def decode(cls, r: Reader) -> WriteMsg:
        file_id = _file_id(r)
        target = _target(r.u8())
        level = r.u8()
        position = r.u64()
        field = r.field()
        width = r.u16()
        count = r.count(width * field.byte_width)
        symbols = tuple(tuple(r.element(field) for _ in range(width)) for _ in range(count))
        return cls(file_id, target, level, position, field, width, symbols)


@dataclass(frozen=True)
class AuditMsg:
    """A batch of dynamic reads answered in one reply."""

    file_id: bytes
    queries: tuple[tuple[Target, int, tuple[int, ...]], ...]

    TYPE = MsgType.AUDIT

    def encode(self) -> bytes:
        _check_file_id(self.file_id)
        out = [self.file_id, bytes([len(self.queries)])]
        for target, level, positions in self.queries:
            out += [bytes([target, level]), u32(len(positions))]
            out += [u64(i) for i in positions]
        return b"".join(out)

    @classmethod
    def decode(cls, r: Reader) -> AuditMsg:
        file_id = _file_id(r)
        queries = []
        for _ in range(r.u8()):
            target = _target(r.u8())
            level = r.u8()
            queries.append((target, level, tuple(r.u64() for _ in range(r.count(8)))))
        return cls(file_id, tuple(queries))


@dataclass(frozen=True)
class ErrorMsg:
    code: int
    message: str

    TYPE = MsgType.ERROR

    def encode(self) -> bytes:
        return u16(self.code) + blob16(self.message.encode())

    @classmethod
    def decode(cls, r: Reader) -> ErrorMsg:
        code = r.u16()
        try:
            return cls(code, r.blob16().decode())
        except UnicodeDecodeError:
            raise FrameError("error text is not UTF-8") from None


@dataclass(frozen=True)
class OkMsg:
    body: bytes = b""

    TYPE = MsgType.OK

    def encode(self) -> bytes:
        return self.body

    @classmethod
    def decode(cls, r: Reader) -> OkMsg:
        return cls(r.take(len(r.data) - r.off))


MESSAGES = {cls.TYPE: cls for cls in (StoreMsg, ChallengeMsg, ProofMsg, ReadMsg, WriteMsg,
                                      AuditMsg, ErrorMsg, OkMsg)}


def encode_message(msg) -> bytes:
    return encode_frame(msg.TYPE, msg.encode())


def decode_payload(msg_type: int, payload: bytes):
    try:
        cls = MESSAGES[MsgType(msg_type)]
    except (ValueError, KeyError):
        raise FrameError(f"unknown message type {msg_type}") from None
    r = Reader(payload)
    msg = cls.decode(r)
    r.done()
    return msg


def decode_message(frame: bytes):
    return decode_payload(*decode_frame(frame))


# Reply bodies carried inside OK -------------------------------------------------

Symbol = tuple[int, ...]


def encode_symbol_reply(field: PrimeField, width: int,
                        items: Sequence[tuple[Symbol | None, list[PathStep] | None]] | None,
                        positions: Sequence[int] | None = None) -> bytes:
    """Symbols with optional Merkle paths. ``items=None`` means the structure is absent."""
    if items is None:
        return field_header(field) + u16(width) + b"\x00"
    out = [field_header(field), u16(width), b"\x01", u32(len(items))]
    for k, (sym, path) in enumerate(items):
        if sym is None:
            out.append(b"\x00")
        else:
            out.append(b"\x01")
            out += [field.to_bytes(x) for x in sym]
        if path is None:
            out.append(b"\x00")
        else:
            pos = positions[k] if positions is not None else k
            out += [b"\x01", blob16(encode_path(pos, path))]
    return b"".join(out)


def decode_symbol_reply_from(r: Reader):
    field = r.field()
    width = r.u16()
    if not r.flag():
        return field, width, None
    items = []
    for _ in range(r.count(2)):
        sym = tuple(r.element(field) for _ in range(width)) if r.flag() else None
        path = None
        if r.flag():
            try:
                _, path = decode_path(r.blob16())
            except ValueError as exc:
                raise FrameError(str(exc)) from None
        items.append((sym, path))
    return field, width, items


def decode_symbol_reply(body: bytes):
    r = Reader(body)
    out = decode_symbol_reply_from(r)
    r.done()
    return out


def encode_block_reply(field: PrimeField, items: Sequence[tuple[int | None, object]]) -> bytes:
    """Raw ``(block, tag)`` pairs for extraction; missing values stay missing."""
    out = [field_header(field), u32(len(items))]
    for block, tag in items:
        out.append(b"\x00" if block is None else b"\x01" + field.to_bytes(block))
        out.append(encode_any_tag(tag, field))
    return b"".join(out)


def decode_block_reply(body: bytes) -> list[tuple[int | None, object]]:
    r = Reader(body)
    field = r.field()
    items = []
    for _ in range(r.count(2)):
        block = r.element(field) if r.flag() else None
        items.append((block, decode_any_tag(r, field)))
    r.done()
    return items


def encode_audit_reply(parts: Sequence[bytes]) -> bytes:
    return bytes([len(parts)]) + b"".join(blob32(p) for p in parts)


def decode_audit_reply(body: bytes) -> list[bytes]:
    r = Reader(body)
    parts = [r.blob32() for _ in range(r.u8())]
    r.done()
    return parts
