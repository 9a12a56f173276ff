"""Byte format of a tagged file: the erasure container plus a tag section.

Tag section, little-endian: ``scheme u8 | tag width u16 | count u32`` then
``count`` tags of ``tag width`` bytes each.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from porkit.algebra import FIELD_PRIME, PrimeField, TransparentPairing
from porkit.erasure import decode_container, encode_container
from porkit.por.schemes import (Challenge, Scheme, TaggedFile, file_digest, prove_with)

_TAGS = struct.Struct("<BHI")
MAC_WIDTH = 32


def tag_width(scheme: Scheme, field: PrimeField) -> int:
    if scheme == Scheme.JK_MAC:
        return MAC_WIDTH
    if scheme == Scheme.SW_PRIVATE:
        return field.byte_width
    if scheme in (Scheme.SW_PUBLIC, Scheme.JK_SIG):
        return 1 + field.byte_width
    return 0


def encode_tag(scheme: Scheme, field: PrimeField, tag) -> bytes:
    if scheme == Scheme.JK_MAC:
        return tag
    if scheme == Scheme.SW_PRIVATE:
        return field.to_bytes(tag)
    if scheme in (Scheme.SW_PUBLIC, Scheme.JK_SIG):
        return tag.to_bytes()
    return b""


def decode_tag(scheme: Scheme, field: PrimeField, group: TransparentPairing | None, data: bytes):
    if scheme == Scheme.JK_MAC:
        return bytes(data)
    if scheme == Scheme.SW_PRIVATE:
        return field.from_bytes(data)
    if scheme in (Scheme.SW_PUBLIC, Scheme.JK_SIG):
        return group.element_from_bytes(data)
    return None


def zero_tag(scheme: Scheme, group: TransparentPairing | None):
    """What a bluffing server sends in place of a tag it lost."""
    if scheme == Scheme.JK_MAC:
        return bytes(MAC_WIDTH)
    if scheme == Scheme.SW_PRIVATE:
        return 0
    if scheme in (Scheme.SW_PUBLIC, Scheme.JK_SIG):
        return group.identity
    return None


def encode_tagged_file(tf: TaggedFile) -> bytes:
    field = tf.field
    if tf.scheme == Scheme.SENTINEL:
        stripes = [tf.blocks]
        width = len(tf.blocks)
    else:
        width = tf.code.n
        stripes = [tf.blocks[i:i + width] for i in range(0, len(tf.blocks), width)]
    head = encode_container(field, tf.code.f, width, stripes, tf.length)
    tw = tag_width(tf.scheme, field)
    tags = b"".join(encode_tag(tf.scheme, field, t) for t in tf.tags)
    return head + _TAGS.pack(int(tf.scheme), tw, len(tf.tags)) + tags


def compute_file_id(tf: TaggedFile) -> bytes:
    return file_digest(encode_tagged_file(tf))


@dataclass
class StoredFile:
    """Server-side view of a tagged file. Holds no keys.

    Blocks or tags lost to truncation are ``None``; :meth:`fetch` answers for
    them with zeros.
    """

    scheme: Scheme
    field: PrimeField
    blocks: list
    tags: list
    length: int
    f: int
    width: int

    @property
    def group(self) -> TransparentPairing | None:
        if self.scheme in (Scheme.SW_PUBLIC, Scheme.JK_SIG):
            return TransparentPairing(self.field)
        return None

    @property
    def n(self) -> int:
        return len(self.blocks)

    def raw(self, i: int):
        if not 1 <= i <= len(self.blocks):
            raise IndexError(f"block index {i} out of range 1..{len(self.blocks)}")
        tag = self.tags[i - 1] if i - 1 < len(self.tags) else None
        return self.blocks[i - 1], tag

    def fetch(self, i: int):
        block, tag = self.raw(i)
        if tag is None and self.scheme != Scheme.SENTINEL:
            tag = zero_tag(self.scheme, self.group)
        return (0 if block is None else block), tag

    def retrieve(self, indices):
        return [self.raw(i) for i in indices]

    def prove(self, challenge: Challenge):
        return prove_with(self.scheme, self.field, self.group, self.fetch, challenge)


def encode_stored_file(sf: StoredFile) -> bytes:
    """Serialise a server-side view; lost blocks and tags are written as zeros."""
    group = sf.group
    blocks = [0 if b is None else b for b in sf.blocks]
    stripes = [blocks[i:i + sf.width] for i in range(0, len(blocks), sf.width)]
    head = encode_container(sf.field, sf.f, sf.width, stripes, sf.length)
    tags = [zero_tag(sf.scheme, group) if t is None else t for t in sf.tags]
    body = b"".join(encode_tag(sf.scheme, sf.field, t) for t in tags)
    return head + _TAGS.pack(int(sf.scheme), tag_width(sf.scheme, sf.field), len(tags)) + body


def decode_tagged_file(data: bytes, allow_truncated: bool = False,
                       scheme_hint: Scheme | None = None) -> StoredFile:
    """Parse a tagged file. A container cut short before its tag header needs
    ``scheme_hint`` to know what it held."""
    container, off = decode_container(data, allow_truncated=allow_truncated)
    if container.field.field_id != FIELD_PRIME:
        raise ValueError("tagged files live in a prime field")
    blocks = container.symbols
    field = container.field
    if off + _TAGS.size > len(data):
        if not allow_truncated or scheme_hint is None:
            raise ValueError("tag section missing")
        return StoredFile(Scheme(scheme_hint), field, blocks, [None] * len(blocks),
                          container.length, container.f, container.n)
    scheme_id, tw, count = _TAGS.unpack_from(data, off)
    scheme = Scheme(scheme_id)
    if tw != tag_width(scheme, field):
        raise ValueError("tag width does not match the scheme")
    off += _TAGS.size
    group = TransparentPairing(field) if scheme in (Scheme.SW_PUBLIC, Scheme.JK_SIG) else None
    tags = []
    for _ in range(count):
        chunk = data[off:off + tw]
        if len(chunk) < tw:
            if not allow_truncated:
                raise ValueError("tag section truncated")
            tags.append(None)
        else:
            tags.append(decode_tag(scheme, field, group, chunk))
        off += tw
    return StoredFile(scheme, field, blocks, tags, container.length, container.f, container.n)
