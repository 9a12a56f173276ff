"""Storage server core: catalog, persistence and message dispatch.

Transport-agnostic; :mod:`porkit.service.app` and :mod:`porkit.service.tcp`
feed it frames. The server never sees client keys, it only stores what it is
given and answers queries.

Layout under the store directory::

    catalog.json            file id -> entry, replaced atomically on change
    files/<id>.por          static tagged-file containers
    dynamic/<id>/           dynamic stores (U.dat, C.dat, H/, meta.json)
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from pathlib import Path

from porkit.dynamic import DynServer
from porkit.erasure import decode_container
from porkit.por.container import StoredFile, decode_tagged_file
from porkit.por.schemes import Scheme, file_digest
from porkit.service.protocol import (AuditMsg, ChallengeMsg, ErrorCode, ErrorMsg, FrameError,
                                     MsgType, OkMsg, ProofMsg, ReadMsg, StoreMsg, Target, WriteMsg,
                                     decode_frame, decode_payload, encode_audit_reply,
                                     encode_block_reply, encode_frame, encode_message,
                                     encode_symbol_reply)

log = logging.getLogger(__name__)

DYNAMIC_SCHEME = 0


class RequestError(Exception):
    def __init__(self, code: ErrorCode, message: str):
        super().__init__(message)
        self.code = code


class RWLock:
    """Many readers or one writer."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    @contextmanager
    def shared(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                self._cond.notify_all()

    @contextmanager
    def exclusive(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


@dataclass
class CatalogEntry:
    file_id: str
    path: str
    scheme: int
    n: int
    f: int
    created: float
    dynamic: bool = False


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + f".{os.getpid()}.{threading.get_ident()}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class StorageServer:
    def __init__(self, directory: str | os.PathLike):
        self.root = Path(directory)
        (self.root / "files").mkdir(parents=True, exist_ok=True)
        (self.root / "dynamic").mkdir(parents=True, exist_ok=True)
        self._catalog_path = self.root / "catalog.json"
        self._lock = threading.Lock()
        self._locks: dict[str, RWLock] = {}
        self._static: dict[str, tuple[tuple[int, int], StoredFile]] = {}
        self._dynamic: dict[str, DynServer] = {}
        self.catalog: dict[str, CatalogEntry] = self._load_catalog()

    # Catalog ----------------------------------------------------------------

    def _load_catalog(self) -> dict[str, CatalogEntry]:
        if not self._catalog_path.exists():
            return {}
        raw = json.loads(self._catalog_path.read_text())
        return {k: CatalogEntry(**v) for k, v in raw.items()}

    def _save_catalog(self) -> None:
        data = json.dumps({k: asdict(v) for k, v in sorted(self.catalog.items())}, indent=1)
        _atomic_write(self._catalog_path, data.encode())

    def entries(self) -> list[CatalogEntry]:
        with self._lock:
            return list(self.catalog.values())

    def entry(self, file_id: str) -> CatalogEntry | None:
        with self._lock:
            return self.catalog.get(file_id)

    def _file_lock(self, key: str) -> RWLock:
        with self._lock:
            return self._locks.setdefault(key, RWLock())

    def _require(self, file_id: bytes, dynamic: bool | None = None) -> CatalogEntry:
        entry = self.entry(file_id.hex())
        if entry is None:
            raise RequestError(ErrorCode.UNKNOWN_FILE, "unknown file")
        if dynamic is not None and entry.dynamic != dynamic:
            kind = "dynamic" if entry.dynamic else "static"
            raise RequestError(ErrorCode.BAD_REQUEST, f"file is {kind}")
        return entry

    # Loading ---------------------------------------------------------------

    def static_file(self, entry: CatalogEntry) -> StoredFile:
        """Parse the container, re-reading it if it changed on disk."""
        path = self.root / entry.path
        try:
            st = path.stat()
        except FileNotFoundError:
            raise RequestError(ErrorCode.UNKNOWN_FILE, "file data missing") from None
        stamp = (st.st_mtime_ns, st.st_size)
        cached = self._static.get(entry.file_id)
        if cached and cached[0] == stamp:
            return cached[1]
        sf = decode_tagged_file(path.read_bytes(), allow_truncated=True, scheme_hint=Scheme(entry.scheme))
        self._static[entry.file_id] = (stamp, sf)
        return sf

    def dynamic_store(self, entry: CatalogEntry) -> DynServer:
        ds = self._dynamic.get(entry.file_id)
        if ds is None:
            ds = DynServer.load(self.root / entry.path)
            self._dynamic[entry.file_id] = ds
        return ds

    # Dispatch --------------------------------------------------------------

    def dispatch(self, frame: bytes) -> bytes:
        """One request frame in, one reply frame out. Never raises."""
        try:
            msg_type, payload = decode_frame(frame)
        except FrameError as exc:
            return encode_message(ErrorMsg(ErrorCode.MALFORMED, str(exc)))
        return self.handle(msg_type, payload)

    def handle(self, msg_type: int, payload: bytes) -> bytes:
        if msg_type not in (MsgType.STORE, MsgType.CHALLENGE, MsgType.READ, MsgType.WRITE, MsgType.AUDIT):
            return encode_message(ErrorMsg(ErrorCode.UNKNOWN_TYPE, f"unsupported message type {msg_type}"))
        try:
            msg = decode_payload(msg_type, payload)
            return self._route(msg)
        except FrameError as exc:
            return encode_message(ErrorMsg(ErrorCode.MALFORMED, str(exc)))
        except RequestError as exc:
            return encode_message(ErrorMsg(exc.code, str(exc)))
        except (ValueError, IndexError, KeyError) as exc:
            return encode_message(ErrorMsg(ErrorCode.BAD_REQUEST, str(exc)))
        except Exception as exc:
            log.exception("request failed")
            return encode_message(ErrorMsg(ErrorCode.INTERNAL, type(exc).__name__))

    def _route(self, msg) -> bytes:
        if isinstance(msg, StoreMsg):
            return self._store(msg)
        if isinstance(msg, ChallengeMsg):
            return self._challenge(msg)
        if isinstance(msg, ReadMsg):
            return self._read(msg)
        if isinstance(msg, WriteMsg):
            return self._write(msg)
        if isinstance(msg, AuditMsg):
            return self._audit(msg)
        raise RequestError(ErrorCode.UNKNOWN_TYPE, "unsupported message")

    def _store(self, msg: StoreMsg) -> bytes:
        if msg.kind == 0:
            if len(msg.parts) != 1:
                raise RequestError(ErrorCode.BAD_REQUEST, "static upload takes one container")
            data = msg.parts[0]
            sf = decode_tagged_file(data)
            file_id = file_digest(data)
            rel = f"files/{file_id.hex()}.por"
            with self._file_lock(file_id.hex()).exclusive():
                _atomic_write(self.root / rel, data)
                entry = CatalogEntry(file_id.hex(), rel, int(sf.scheme), sf.n, sf.f, time.time())
                self._commit(entry)
            return encode_message(OkMsg(file_id))
        if len(msg.parts) != 2:
            raise RequestError(ErrorCode.BAD_REQUEST, "dynamic upload takes U and C containers")
        u, _ = decode_container(msg.parts[0])
        c, _ = decode_container(msg.parts[1])
        if c.n != 2 * u.n or len(c.stripes) != len(u.stripes):
            raise RequestError(ErrorCode.BAD_REQUEST, "C must be a (2n, n) encoding of U")
        file_id = msg.file_id
        if self.entry(file_id.hex()) is not None:
            # Dynamic stores change after upload; a repeated id must not clobber one.
            raise RequestError(ErrorCode.BAD_REQUEST, "a file with this id already exists")
        ds = DynServer(u.field, u.n, len(u.stripes), list(zip(*u.stripes)), list(zip(*c.stripes)))
        rel = f"dynamic/{file_id.hex()}"
        with self._file_lock(file_id.hex()).exclusive():
            ds.save(self.root / rel)
            self._dynamic[file_id.hex()] = ds
            self._commit(CatalogEntry(file_id.hex(), rel, DYNAMIC_SCHEME, u.n, u.n, time.time(), True))
        return encode_message(OkMsg(file_id))

    def _commit(self, entry: CatalogEntry) -> None:
        with self._lock:
            self.catalog[entry.file_id] = entry
            self._save_catalog()
        self._static.pop(entry.file_id, None)

    def _challenge(self, msg: ChallengeMsg) -> bytes:
        entry = self._require(msg.challenge.file_id, dynamic=False)
        with self._file_lock(entry.file_id).shared():
            sf = self.static_file(entry)
            if sf.field != msg.field:
                raise RequestError(ErrorCode.BAD_REQUEST, "challenge field does not match the file")
            for i in msg.challenge.indices:
                if not 1 <= i <= sf.n:
                    raise RequestError(ErrorCode.BAD_REQUEST, f"index {i} out of range 1..{sf.n}")
            proof = sf.prove(msg.challenge)
        return encode_message(ProofMsg(sf.field, proof))

    def _read(self, msg: ReadMsg) -> bytes:
        if msg.target == Target.BLOCKS:
            entry = self._require(msg.file_id, dynamic=False)
            with self._file_lock(entry.file_id).shared():
                sf = self.static_file(entry)
                items = sf.retrieve(msg.positions)
            return encode_message(OkMsg(encode_block_reply(sf.field, items)))
        entry = self._require(msg.file_id, dynamic=True)
        with self._file_lock(entry.file_id).shared():
            ds = self.dynamic_store(entry)
            body = self._dyn_read(ds, msg.target, msg.level, msg.positions)
        return encode_message(OkMsg(body))

    def _dyn_read(self, ds: DynServer, target: Target, level: int, positions) -> bytes:
        if target == Target.U:
            return encode_symbol_reply(ds.field, ds.beta, ds.read_u(positions), positions)
        if target == Target.C:
            return encode_symbol_reply(ds.field, ds.beta, ds.read_c(positions), positions)
        if target == Target.H:
            if level >= len(ds.h):
                raise RequestError(ErrorCode.BAD_REQUEST, f"no level {level}")
            return encode_symbol_reply(ds.field, ds.beta + 2, ds.read_level(level, positions), positions)
        if target == Target.U_DUMP:
            return encode_symbol_reply(ds.field, ds.beta, [(s, None) for s in ds.dump_u()])
        if target == Target.H_DUMP:
            if level >= len(ds.h):
                raise RequestError(ErrorCode.BAD_REQUEST, f"no level {level}")
            data = ds.dump_level(level)
            items = None if data is None else [(s, None) for s in data]
            return encode_symbol_reply(ds.field, ds.beta + 2, items)
        raise RequestError(ErrorCode.BAD_REQUEST, f"cannot read target {target}")

    def _write(self, msg: WriteMsg) -> bytes:
        entry = self._require(msg.file_id, dynamic=True)
        with self._file_lock(entry.file_id).exclusive():
            ds = self.dynamic_store(entry)
            if msg.field != ds.field:
                raise RequestError(ErrorCode.BAD_REQUEST, "field does not match the store")
            symbols = list(msg.symbols)
            if msg.target == Target.U:
                if msg.width != ds.beta or len(symbols) != 1:
                    raise RequestError(ErrorCode.BAD_REQUEST, "U writes carry one symbol of width beta")
                ds.put_u(msg.position, symbols[0])
            elif msg.target == Target.H:
                if msg.width != ds.beta + 2 or len(symbols) != 2 << msg.level or msg.level >= len(ds.h):
                    raise RequestError(ErrorCode.BAD_REQUEST, "level write has the wrong shape")
                ds.put_level(msg.level, symbols)
            elif msg.target == Target.C:
                if msg.width != ds.beta or len(symbols) != 2 * ds.n:
                    raise RequestError(ErrorCode.BAD_REQUEST, "C write has the wrong shape")
                ds.put_c(symbols)
            else:
                raise RequestError(ErrorCode.BAD_REQUEST, f"cannot write target {msg.target}")
            ds.save(self.root / entry.path)
        return encode_message(OkMsg())

    def _audit(self, msg: AuditMsg) -> bytes:
        entry = self._require(msg.file_id, dynamic=True)
        with self._file_lock(entry.file_id).shared():
            ds = self.dynamic_store(entry)
            parts = [self._dyn_read(ds, target, level, positions) for target, level, positions in msg.queries]
        return encode_message(OkMsg(encode_audit_reply(parts)))


def error_frame(code: ErrorCode, text: str) -> bytes:
    return encode_frame(MsgType.ERROR, ErrorMsg(code, text).encode())
