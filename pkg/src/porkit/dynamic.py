"""Dynamic POR: uncoded buffer U, coded snapshot C, hierarchical log H.

Reads and writes go to U, which is authenticated by a Merkle tree. C is an
``(2n, n)`` Reed-Solomon encoding of U as it stood at the last rebuild and is
never touched between rebuilds. Every write also appends an
``(index, seq, value)`` record to H, which behaves like a binary counter:
level ``l`` is either empty or holds ``2^l`` records encoded with a
``(2^(l+1), 2^l)`` code. A write fills the smallest empty level with its own
record plus everything from the levels below it, which are then emptied.
After ``n`` writes C is re-encoded from U and H is cleared.

:class:`DynServer` is the untrusted side; it stores the structures and builds
Merkle paths on request. :class:`DynClient` keeps only roots and counters and
checks everything it reads against them. Positions inside U, C and H levels
are 0-based; the public read/write index is 1-based.
"""

from __future__ import annotations

import json
import math
import os
import random
import secrets
import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Sequence

from porkit.algebra import PrimeField
from porkit.authenticators import MerkleTree, PathStep, merkle_verify, path_root
from porkit.erasure import (CodeParams, Codeword, Unrecoverable, bytes_to_blocks, decode_container,
                            encode_container, rs_decode, rs_encode)

Symbol = tuple[int, ...]


class IntegrityError(RuntimeError):
    """Data returned by the server failed authentication."""


def level_count(n: int) -> int:
    return math.ceil(math.log2(n)) + 2 if n > 1 else 2


def leaf_bytes(field: PrimeField, symbol: Symbol, position: int) -> bytes:
    return b"".join(field.to_bytes(x) for x in symbol) + struct.pack(">Q", position)


def encode_columns(symbols: Sequence[Symbol], params: CodeParams) -> list[Symbol]:
    """Encode each coordinate of a list of equal-width symbols separately."""
    width = len(symbols[0])
    columns = [rs_encode([s[c] for s in symbols], params).symbols for c in range(width)]
    return list(zip(*columns))


def decode_columns(symbols: Sequence[Symbol | None], params: CodeParams, width: int,
                   where: str) -> list[Symbol]:
    mask = [s is not None for s in symbols]
    columns = []
    for c in range(width):
        cw = Codeword([0 if s is None else s[c] for s in symbols], mask)
        columns.append(rs_decode(cw, params, where=where))
    return list(zip(*columns))


def symbols_container(field: PrimeField, f: int, n: int, symbols: Sequence[Symbol | None],
                      width: int) -> bytes:
    """Container with one stripe per coordinate; erased symbols are written as zeros."""
    columns = [[0 if s is None else s[c] for s in symbols] for c in range(width)]
    return encode_container(field, f, n, columns, 0)


def container_symbols(data: bytes) -> tuple[list[Symbol], PrimeField, int]:
    """Inverse of :func:`symbols_container`: ``(symbols, field, f)``."""
    container, _ = decode_container(data)
    return list(zip(*container.stripes)), container.field, container.f


def _tree(field: PrimeField, symbols: Sequence[Symbol]) -> MerkleTree:
    return MerkleTree([leaf_bytes(field, s, i) for i, s in enumerate(symbols)])


class DynServer:
    """Server-side state. Erased symbols are ``None``."""

    def __init__(self, field: PrimeField, n: int, beta: int, u: list[Symbol], c: list[Symbol]):
        self.field = field
        self.n = n
        self.beta = beta
        self.u = list(u)
        self.u_tree = _tree(field, self.u)
        self.c: list[Symbol | None] = list(c)
        self.c_tree = _tree(field, c)
        self.h: list[list[Symbol | None] | None] = [None] * level_count(n)
        self.h_trees: list[MerkleTree | None] = [None] * level_count(n)

    # Reads ----------------------------------------------------------------

    def read_u(self, positions: Sequence[int]) -> list[tuple[Symbol | None, list[PathStep]]]:
        return [(self.u[i], self.u_tree.prove(i)) for i in positions]

    def read_c(self, positions: Sequence[int]):
        return [(self.c[i], self.c_tree.prove(i)) for i in positions]

    def read_level(self, level: int, positions: Sequence[int]):
        data, tree = self.h[level], self.h_trees[level]
        if data is None:
            return [(None, []) for _ in positions]
        return [(data[i], tree.prove(i)) for i in positions]

    def read_many(self, queries: Sequence[tuple[str, int, Sequence[int]]]):
        """Answer several ``(structure, level, positions)`` reads at once."""
        out = []
        for kind, level, positions in queries:
            if kind == "U":
                out.append(self.read_u(positions))
            elif kind == "C":
                out.append(self.read_c(positions))
            elif kind == "H":
                out.append(self.read_level(level, positions))
            else:
                raise ValueError(f"unknown structure {kind!r}")
        return out

    def dump_u(self) -> list[Symbol | None]:
        return list(self.u)

    def dump_level(self, level: int) -> list[Symbol | None] | None:
        data = self.h[level]
        return None if data is None else list(data)

    def occupancy(self) -> list[bool]:
        return [lvl is not None for lvl in self.h]

    # Writes ---------------------------------------------------------------

    def put_u(self, i: int, symbol: Symbol) -> None:
        self.u[i] = symbol
        self.u_tree.update(i, leaf_bytes(self.field, symbol, i))

    def put_level(self, level: int, symbols: list[Symbol], clear_below: bool = True) -> None:
        self.h[level] = list(symbols)
        self.h_trees[level] = _tree(self.field, symbols)
        if clear_below:
            for j in range(level):
                self.h[j] = None
                self.h_trees[j] = None

    def put_c(self, symbols: list[Symbol]) -> None:
        self.c = list(symbols)
        self.c_tree = _tree(self.field, symbols)
        self.h = [None] * len(self.h)
        self.h_trees = [None] * len(self.h_trees)

    # Damage (experiments only) -------------------------------------------

    def erase_c(self, positions) -> None:
        for i in positions:
            self.c[i] = None

    def erase_level(self, level: int, positions) -> None:
        for i in positions:
            self.h[level][i] = None

    def drop_level(self, level: int) -> None:
        self.h[level] = None

    # Persistence ----------------------------------------------------------

    def save(self, directory: str | os.PathLike) -> None:
        """``U.dat``, ``C.dat``, ``H/level-<l>.dat`` and ``meta.json``."""
        root = Path(directory)
        (root / "H").mkdir(parents=True, exist_ok=True)

        _atomic_write(root / "U.dat", symbols_container(self.field, self.n, self.n, self.u, self.beta))
        _atomic_write(root / "C.dat", symbols_container(self.field, self.n, 2 * self.n, self.c, self.beta))
        for level, data in enumerate(self.h):
            path = root / "H" / f"level-{level}.dat"
            if data is None:
                path.unlink(missing_ok=True)
            else:
                _atomic_write(path, symbols_container(self.field, 1 << level, 2 << level, data, 2 + self.beta))
        meta = {
            "n": self.n,
            "beta": self.beta,
            "p": str(self.field.p),
            "levels": len(self.h),
            "roots": {
                "U": self.u_tree.root.hex(),
                "C": self.c_tree.root.hex(),
                "H": [t.root.hex() if t else None for t in self.h_trees],
            },
        }
        _atomic_write(root / "meta.json", json.dumps(meta, indent=1).encode())

    @classmethod
    def load(cls, directory: str | os.PathLike) -> DynServer:
        root = Path(directory)
        meta = json.loads((root / "meta.json").read_text())

        u, field, _ = container_symbols((root / "U.dat").read_bytes())
        c, _, _ = container_symbols((root / "C.dat").read_bytes())
        server = cls(field, meta["n"], meta["beta"], u, c)
        for level in range(meta["levels"]):
            path = root / "H" / f"level-{level}.dat"
            if path.exists():
                symbols, _, _ = container_symbols(path.read_bytes())
                server.put_level(level, symbols, clear_below=False)
        return server


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


@dataclass
class DynClient:
    """Client state: roots, counters and parameters. No file data."""

    field: PrimeField
    n: int
    beta: int
    u_root: bytes
    c_root: bytes
    h_roots: list[bytes | None]
    length: int = 0
    file_id: bytes = b""
    w: int = 0
    seq: int = 0
    writes: int = 0
    rebuild_symbols: int = 0
    c_rebuilds: int = 0
    level_rebuilds: list[int] = dc_field(default_factory=list)

    def __post_init__(self):
        if not self.level_rebuilds:
            self.level_rebuilds = [0] * len(self.h_roots)

    @property
    def levels(self) -> int:
        return len(self.h_roots)

    @property
    def roots(self) -> list[bytes | None]:
        return [self.u_root, self.c_root, *self.h_roots]

    def occupancy(self) -> list[bool]:
        return [r is not None for r in self.h_roots]

    def c_code(self) -> CodeParams:
        return CodeParams(2 * self.n, self.n, self.field)

    def level_code(self, level: int) -> CodeParams:
        return CodeParams(2 << level, 1 << level, self.field)

    # Operations -----------------------------------------------------------

    def _check_index(self, i: int) -> None:
        if not 1 <= i <= self.n:
            raise IndexError(f"index {i} out of range 1..{self.n}")

    def _symbol(self, value) -> Symbol:
        sym = (value,) if isinstance(value, int) else tuple(value)
        if len(sym) != self.beta or any(not 0 <= x < self.field.p for x in sym):
            raise ValueError(f"value must be {self.beta} element(s) of Z_p")
        return sym

    def _unwrap(self, sym: Symbol):
        return sym[0] if self.beta == 1 else sym

    def _verified_u(self, server, i: int) -> tuple[Symbol, list[PathStep]]:
        [(sym, path)] = server.read_u([i - 1])
        if sym is None or not merkle_verify(self.u_root, i - 1, leaf_bytes(self.field, sym, i - 1),
                                            path, self.n):
            raise IntegrityError(f"U[{i}] failed authentication")
        return sym, path

    def read(self, server, i: int):
        self._check_index(i)
        sym, _ = self._verified_u(server, i)
        return self._unwrap(sym)

    def write(self, server, i: int, value) -> None:
        self._check_index(i)
        new = self._symbol(value)
        _, path = self._verified_u(server, i)
        self.u_root = path_root(i - 1, leaf_bytes(self.field, new, i - 1), path)
        server.put_u(i - 1, new)
        self.seq += 1
        self.writes += 1
        if self.w + 1 == self.n:
            self._rebuild_c(server)
            return
        self._push_record(server, (i, self.seq, *new))
        self.w += 1

    def _rebuild_c(self, server) -> None:
        u = server.dump_u()
        if any(s is None for s in u) or _tree(self.field, u).root != self.u_root:
            raise IntegrityError("U does not match its root; refusing to rebuild C")
        c = encode_columns(u, self.c_code())
        self.c_root = _tree(self.field, c).root
        server.put_c(c)
        self.h_roots = [None] * self.levels
        self.w = 0
        self.c_rebuilds += 1
        self.rebuild_symbols += len(c)

    def _level_records(self, server, level: int) -> list[Symbol]:
        data = server.dump_level(level)
        if data is None or any(s is None for s in data) or _tree(self.field, data).root != self.h_roots[level]:
            raise IntegrityError(f"H level {level} does not match its root")
        return data[:1 << level]

    def _push_record(self, server, record: Symbol) -> None:
        target = next(lvl for lvl, r in enumerate(self.h_roots) if r is None)
        records = [record]
        for level in range(target):
            records.extend(self._level_records(server, level))
        records.sort(key=lambda r: r[1])
        encoded = encode_columns(records, self.level_code(target))
        self.h_roots[target] = _tree(self.field, encoded).root
        server.put_level(target, encoded)
        for level in range(target):
            self.h_roots[level] = None
        self.rebuild_symbols += len(encoded)
        self.level_rebuilds[target] += 1

    def audit(self, server, samples: int = 20, rng: random.Random | None = None,
              include_u: bool = True) -> bool:
        """Spot-check ``samples`` random positions of C, of every full H level
        and of U against the client's roots."""
        if samples < 1:
            raise ValueError("need at least one sample per structure")
        rng = rng or secrets.SystemRandom()
        checks = [("C", 0, self.c_root, 2 * self.n)]
        checks += [("H", lvl, root, 2 << lvl) for lvl, root in enumerate(self.h_roots) if root is not None]
        if include_u:
            checks.append(("U", 0, self.u_root, self.n))
        queries = [(kind, level, [rng.randrange(size) for _ in range(samples)])
                   for kind, level, _, size in checks]
        replies = server.read_many(queries)
        if len(replies) != len(queries):
            return False
        for (_, _, root, size), (_, _, positions), answers in zip(checks, queries, replies):
            if len(answers) != len(positions):
                return False
            for pos, (sym, path) in zip(positions, answers):
                if sym is None or not merkle_verify(root, pos, leaf_bytes(self.field, sym, pos), path, size):
                    return False
        return True

    def _authentic(self, root: bytes, answers, size: int) -> list[Symbol | None]:
        out = []
        for pos, (sym, path) in enumerate(answers):
            ok = sym is not None and merkle_verify(root, pos, leaf_bytes(self.field, sym, pos), path, size)
            out.append(sym if ok else None)
        return out

    def extract(self, server) -> list:
        """Rebuild the live contents of U from C and H alone."""
        size = 2 * self.n
        c = self._authentic(self.c_root, server.read_c(range(size)), size)
        try:
            snapshot = decode_columns(c, self.c_code(), self.beta, "C")
        except Unrecoverable as exc:
            raise IntegrityError(f"C is unrecoverable: {exc}") from exc
        records = []
        for level, root in enumerate(self.h_roots):
            if root is None:
                continue
            size = 2 << level
            symbols = self._authentic(root, server.read_level(level, range(size)), size)
            try:
                records.extend(decode_columns(symbols, self.level_code(level), 2 + self.beta, f"H level {level}"))
            except Unrecoverable as exc:
                raise IntegrityError(f"H level {level} is unrecoverable: {exc}") from exc
        contents = list(snapshot)
        for rec in sorted(records, key=lambda r: r[1]):
            contents[rec[0] - 1] = tuple(rec[2:])
        return [self._unwrap(s) for s in contents]

    # Persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "p": str(self.field.p), "n": self.n, "beta": self.beta, "length": self.length,
            "file_id": self.file_id.hex(),
            "w": self.w, "seq": self.seq, "writes": self.writes,
            "rebuild_symbols": self.rebuild_symbols, "c_rebuilds": self.c_rebuilds,
            "level_rebuilds": list(self.level_rebuilds),
            "u_root": self.u_root.hex(), "c_root": self.c_root.hex(),
            "h_roots": [r.hex() if r else None for r in self.h_roots],
        }

    @classmethod
    def from_dict(cls, d: dict) -> DynClient:
        return cls(PrimeField(int(d["p"])), d["n"], d["beta"], bytes.fromhex(d["u_root"]),
                   bytes.fromhex(d["c_root"]), [bytes.fromhex(r) if r else None for r in d["h_roots"]],
                   length=d.get("length", 0), file_id=bytes.fromhex(d.get("file_id", "")),
                   w=d["w"], seq=d["seq"], writes=d.get("writes", 0),
                   rebuild_symbols=d.get("rebuild_symbols", 0), c_rebuilds=d.get("c_rebuilds", 0),
                   level_rebuilds=list(d.get("level_rebuilds", [])))


def initial_symbols(data: bytes, n: int, beta: int, field: PrimeField) -> list[Symbol]:
    if not data:
        raise ValueError("cannot initialise from an empty file")
    blocks = bytes_to_blocks(data, field)
    if len(blocks) > n * beta:
        raise ValueError(f"file needs {len(blocks)} elements, buffer holds {n * beta}")
    blocks += [0] * (n * beta - len(blocks))
    return [tuple(blocks[k * beta:(k + 1) * beta]) for k in range(n)]


def dyn_setup(symbols: Sequence[Symbol], field: PrimeField | None = None,
              length: int = 0) -> tuple[DynClient, DynServer]:
    field = field or PrimeField()
    n = len(symbols)
    beta = len(symbols[0])
    u = [tuple(s) for s in symbols]
    c = encode_columns(u, CodeParams(2 * n, n, field))
    server = DynServer(field, n, beta, u, c)
    client = DynClient(field, n, beta, _tree(field, u).root, _tree(field, c).root,
                       [None] * level_count(n), length=length)
    return client, server


def dyn_init(data: bytes, n: int, beta: int = 1,
             field: PrimeField | None = None) -> tuple[DynClient, DynServer]:
    field = field or PrimeField()
    return dyn_setup(initial_symbols(data, n, beta, field), field, length=len(data))
