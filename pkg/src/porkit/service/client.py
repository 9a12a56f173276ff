"""Client side of the storage protocol.

Every remote call either returns a decoded reply, raises :class:`RemoteError`
(the server answered with ERROR) or raises :class:`TransportError` (no
answer). Verification outcomes are plain booleans, so a network fault can
never be mistaken for a failed audit.
"""

from __future__ import annotations

import os
import random
import socket
import threading
from typing import Callable, Sequence
from urllib.parse import urlparse

import httpx

from porkit.algebra import PrimeField
from porkit.dynamic import DynClient, Symbol, dyn_setup, initial_symbols, symbols_container
from porkit.erasure import CodeParams
from porkit.por.container import encode_tagged_file
from porkit.por.extract import ExtractionPolicy, extract, extract_sentinel
from porkit.por.schemes import (Challenge, FileMeta, Scheme, TaggedFile, challenge_for, file_digest,
                                por_setup, por_verify)
from porkit.por.sentinel import (SentinelLedger, sentinel_challenge, sentinel_check, sentinel_meta,
                                 sentinel_setup)
from porkit.service.protocol import (AuditMsg, ChallengeMsg, ErrorMsg, FrameError, OkMsg, ProofMsg,
                                     ReadMsg, StoreMsg, Target, WriteMsg, decode_audit_reply,
                                     decode_block_reply, decode_frame, decode_payload,
                                     decode_symbol_reply, encode_frame, encode_message, read_frame)

DEFAULT_TIMEOUT = 30.0
READ_CHUNK = 4096


class TransportError(Exception):
    """The request did not complete: connection refused, reset, timed out or garbled."""


class RemoteError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(f"server error {code}: {message}")
        self.code = code
        self.message = message


class Transport:
    def exchange(self, frame: bytes) -> bytes:
        raise NotImplementedError

    def request(self, msg):
        try:
            reply = self.exchange(encode_message(msg))
            decoded = decode_payload(*decode_frame(reply))
        except FrameError as exc:
            raise TransportError(f"unreadable reply: {exc}") from exc
        if isinstance(decoded, ErrorMsg):
            raise RemoteError(decoded.code, decoded.message)
        return decoded

    def close(self) -> None:
        pass


class HttpTransport(Transport):
    def __init__(self, base_url: str, timeout: float = DEFAULT_TIMEOUT):
        self.url = base_url.rstrip("/") + "/frame"
        self.client = httpx.Client(timeout=timeout)

    def exchange(self, frame: bytes) -> bytes:
        try:
            resp = self.client.post(self.url, content=frame,
                                    headers={"content-type": "application/octet-stream"})
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise TransportError(str(exc) or type(exc).__name__) from exc
        return resp.content

    def close(self) -> None:
        self.client.close()


class TcpTransport(Transport):
    def __init__(self, host: str, port: int, timeout: float = DEFAULT_TIMEOUT):
        self.host, self.port, self.timeout = host, port, timeout
        self.sock: socket.socket | None = None

    def exchange(self, frame: bytes) -> bytes:
        try:
            if self.sock is None:
                self.sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
            self.sock.sendall(frame)
            msg_type, payload = read_frame(self.sock)
        except (OSError, FrameError) as exc:
            self.close()
            raise TransportError(str(exc) or type(exc).__name__) from exc
        return encode_frame(msg_type, payload)

    def close(self) -> None:
        if self.sock is not None:
            self.sock.close()
            self.sock = None


class LocalTransport(Transport):
    """Calls a :class:`StorageServer` in this process; same bytes, no socket."""

    def __init__(self, server):
        self.server = server

    def exchange(self, frame: bytes) -> bytes:
        return self.server.dispatch(frame)


def connect(address: str, timeout: float = DEFAULT_TIMEOUT) -> Transport:
    """``http://host:port``, ``https://...`` or ``tcp://host:port``."""
    parsed = urlparse(address if "://" in address else f"http://{address}")
    if parsed.scheme in ("http", "https"):
        return HttpTransport(address if "://" in address else f"http://{address}", timeout)
    if parsed.scheme == "tcp":
        if not parsed.hostname or not parsed.port:
            raise ValueError(f"tcp address needs host and port: {address}")
        return TcpTransport(parsed.hostname, parsed.port, timeout)
    raise ValueError(f"unsupported address scheme {parsed.scheme!r}")


def _transport(target) -> Transport:
    return target if isinstance(target, Transport) else connect(target)


def _expect(reply, cls):
    if not isinstance(reply, cls):
        raise TransportError(f"expected {cls.__name__}, got {type(reply).__name__}")
    return reply


# Static files -------------------------------------------------------------------

class RemoteProver:
    """Prover interface backed by a server. ``factory`` makes one transport
    per worker thread so extraction batches can run in parallel."""

    def __init__(self, factory: Callable[[], Transport], file_id: bytes, field: PrimeField):
        self.factory = factory
        self.file_id = file_id
        self.field = field
        self._local = threading.local()

    @property
    def transport(self) -> Transport:
        t = getattr(self._local, "t", None)
        if t is None:
            t = self._local.t = self.factory()
        return t

    def prove(self, challenge: Challenge):
        if challenge.file_id != self.file_id:
            challenge = Challenge(challenge.indices, challenge.coefficients, self.file_id, challenge.nonce)
        return self.prove_raw(challenge).proof

    def prove_raw(self, challenge: Challenge) -> ProofMsg:
        return _expect(self.transport.request(ChallengeMsg(self.field, challenge)), ProofMsg)

    def retrieve(self, indices: Sequence[int]):
        out = []
        for k in range(0, len(indices), READ_CHUNK):
            chunk = tuple(indices[k:k + READ_CHUNK])
            reply = _expect(self.transport.request(ReadMsg(self.file_id, Target.BLOCKS, 0, chunk)), OkMsg)
            items = decode_block_reply(reply.body)
            if len(items) != len(chunk):
                raise TransportError("server answered a different number of blocks")
            out.extend(items)
        return out


def _factory(target) -> Callable[[], Transport]:
    if isinstance(target, Transport):
        return lambda: target
    return lambda: connect(target)


def upload_tagged(target, tf: TaggedFile) -> bytes:
    data = encode_tagged_file(tf)
    reply = _expect(_transport(target).request(StoreMsg(0, bytes(16), (data,))), OkMsg)
    if reply.body != tf.file_id:
        raise RemoteError(0, "server reported a different file id")
    return reply.body


def client_upload(target, data: bytes, keys, code: CodeParams | None = None,
                  sentinels: int | None = None) -> tuple[FileMeta, SentinelLedger | None]:
    """Set up ``data`` locally and store it remotely. Returns what the client must keep."""
    if keys.scheme == Scheme.SENTINEL:
        tf, ledger = sentinel_setup(data, keys, sentinels or 1000, code)
        upload_tagged(target, tf)
        return sentinel_meta(tf, ledger), ledger
    tf = por_setup(data, keys, code)
    upload_tagged(target, tf)
    return tf.meta, None


def client_audit(target, meta: FileMeta, keys, l: int, rng: random.Random | None = None,
                 ledger: SentinelLedger | None = None) -> bool:
    """One challenge-response round. Raises on transport failure; never returns False for one."""
    prover = RemoteProver(_factory(target), meta.file_id, meta.code.field)
    if meta.scheme == Scheme.SENTINEL:
        if ledger is None:
            raise ValueError("sentinel audits need the ledger")
        challenge, chosen = sentinel_challenge(ledger, l, rng, meta.file_id)
        try:
            proof = prover.prove(challenge)
        except BaseException:
            # The positions were revealed; never reuse them.
            ledger.spent.update(chosen)
            raise
        return sentinel_check(ledger, chosen, proof)
    challenge = challenge_for(meta, l, rng)
    return por_verify(keys, challenge, prover.prove(challenge))


def client_extract(target, meta: FileMeta, keys, policy: ExtractionPolicy | None = None,
                   rng: random.Random | None = None, ledger: SentinelLedger | None = None) -> bytes:
    prover = RemoteProver(_factory(target), meta.file_id, meta.code.field)
    if meta.scheme == Scheme.SENTINEL:
        return extract_sentinel(prover, ledger, meta)
    return extract(prover, keys, meta, policy, rng)


# Dynamic files ------------------------------------------------------------------

class RemoteDynServer:
    """The :class:`~porkit.dynamic.DynServer` interface over the wire."""

    def __init__(self, target, file_id: bytes, field: PrimeField, beta: int):
        self.t = _transport(target)
        self.file_id = file_id
        self.field = field
        self.beta = beta

    def _ok(self, msg) -> bytes:
        return _expect(self.t.request(msg), OkMsg).body

    def _symbols(self, body: bytes, count: int | None = None):
        _, _, items = decode_symbol_reply(body)
        if items is not None and count is not None and len(items) != count:
            raise TransportError("reply has the wrong number of symbols")
        return items

    def _read(self, target: Target, level: int, positions) -> list:
        positions = tuple(positions)
        items = self._symbols(self._ok(ReadMsg(self.file_id, target, level, positions)), len(positions))
        return [(s, p or []) for s, p in items]

    def read_u(self, positions):
        return self._read(Target.U, 0, positions)

    def read_c(self, positions):
        return self._read(Target.C, 0, positions)

    def read_level(self, level: int, positions):
        return self._read(Target.H, level, positions)

    def read_many(self, queries):
        kinds = {"U": Target.U, "C": Target.C, "H": Target.H}
        msg = AuditMsg(self.file_id, tuple((kinds[k], lvl, tuple(pos)) for k, lvl, pos in queries))
        parts = decode_audit_reply(self._ok(msg))
        out = []
        for (_, _, pos), part in zip(queries, parts):
            items = self._symbols(part, len(pos))
            out.append([(s, p or []) for s, p in items])
        return out

    def dump_u(self):
        return [s for s, _ in self._symbols(self._ok(ReadMsg(self.file_id, Target.U_DUMP, 0, ())))]

    def dump_level(self, level: int):
        items = self._symbols(self._ok(ReadMsg(self.file_id, Target.H_DUMP, level, ())))
        return None if items is None else [s for s, _ in items]

    def _write(self, target: Target, level: int, position: int, width: int, symbols) -> None:
        self._ok(WriteMsg(self.file_id, target, level, position, self.field, width, tuple(symbols)))

    def put_u(self, i: int, symbol: Symbol) -> None:
        self._write(Target.U, 0, i, self.beta, [symbol])

    def put_level(self, level: int, symbols) -> None:
        self._write(Target.H, level, 0, self.beta + 2, symbols)

    def put_c(self, symbols) -> None:
        self._write(Target.C, 0, 0, self.beta, symbols)


def dynamic_file_id(u_bytes: bytes, c_bytes: bytes, salt: bytes = b"") -> bytes:
    return file_digest(salt + u_bytes + c_bytes)


def client_dyn_init(target, data: bytes, n: int, beta: int = 1,
                    field: PrimeField | None = None, salt: bytes | None = None) -> DynClient:
    """Upload a dynamic file. The id is salted so equal contents from two
    clients land in separate stores."""
    field = field or PrimeField()
    client, server = dyn_setup(initial_symbols(data, n, beta, field), field, length=len(data))
    u = symbols_container(field, n, n, server.u, beta)
    c = symbols_container(field, n, 2 * n, server.c, beta)
    client.file_id = dynamic_file_id(u, c, os.urandom(16) if salt is None else salt)
    reply = _expect(_transport(target).request(StoreMsg(1, client.file_id, (u, c))), OkMsg)
    if reply.body != client.file_id:
        raise RemoteError(0, "server reported a different file id")
    return client


def remote_dyn(target, client: DynClient) -> RemoteDynServer:
    return RemoteDynServer(target, client.file_id, client.field, client.beta)


def client_read(target, client: DynClient, i: int):
    return client.read(remote_dyn(target, client), i)


def client_write(target, client: DynClient, i: int, value) -> None:
    client.write(remote_dyn(target, client), i, value)


def client_dyn_audit(target, client: DynClient, samples: int = 20,
                     rng: random.Random | None = None) -> bool:
    return client.audit(remote_dyn(target, client), samples, rng)


def client_dyn_extract(target, client: DynClient) -> list:
    return client.extract(remote_dyn(target, client))


__all__ = [
    "HttpTransport", "LocalTransport", "RemoteDynServer", "RemoteError", "RemoteProver",
    "TcpTransport", "Transport", "TransportError", "client_audit", "client_dyn_audit",
    "client_dyn_extract", "client_dyn_init", "client_extract", "client_read", "client_upload",
    "client_write", "connect", "upload_tagged",
]
