"""``porkit`` command line.

Exit codes: 0 success, 1 verification or integrity failure, 2 usage error,
3 transport error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import math
import os
import random
import secrets
import socket
import sys
from pathlib import Path
from urllib.parse import urlparse

import gmpy2

from porkit import adversary
from porkit.algebra import PrimeField
from porkit.config import (DEFAULT_CHALLENGE_SIZE, DEFAULT_DYN_AUDIT, DEFAULT_F, DEFAULT_N,
                           DEFAULT_PRIME, DEFAULT_SENTINELS, DEFAULT_SENTINELS_PER_AUDIT, STORE_ENV)
from porkit.dynamic import DynServer, IntegrityError
from porkit.erasure import CodeParams, blocks_to_bytes, bytes_to_blocks
from porkit.keyfile import KeyFile, resolve_path
from porkit.por.container import decode_tagged_file, encode_stored_file, encode_tagged_file
from porkit.por.extract import ExtractionError, ExtractionPolicy, extract, extract_sentinel
from porkit.por.schemes import (SCHEME_NAMES, Scheme, challenge_for, file_digest, keygen, por_setup,
                                por_verify)
from porkit.por.sentinel import (BudgetExhausted, sentinel_challenge, sentinel_check, sentinel_meta,
                                 sentinel_setup)
from porkit.service.client import (RemoteError, TransportError, client_audit, client_dyn_audit,
                                   client_dyn_extract, client_dyn_init, client_extract, client_read,
                                   client_upload, client_write, connect)
from porkit.service.protocol import StoreMsg

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_TRANSPORT = 0, 1, 2, 3

log = logging.getLogger("porkit")


class UsageError(Exception):
    pass


class Output:
    def __init__(self, json_lines: bool):
        self.json_lines = json_lines

    def record(self, text: str, **fields) -> None:
        if self.json_lines:
            print(json.dumps(fields, sort_keys=True))
        else:
            print(text)


def make_rng(seed: int | None, label: str = "") -> random.Random:
    if seed is None:
        return secrets.SystemRandom()
    return random.Random(f"{seed}:{label}")


def field_for_bits(bits: int) -> PrimeField:
    if bits == 256:
        return PrimeField(DEFAULT_PRIME)
    if not 16 <= bits <= 4096:
        raise UsageError("--bits must be between 16 and 4096")
    return PrimeField(int(gmpy2.prev_prime(1 << bits)))


def _keyfile(args) -> KeyFile:
    return KeyFile.load(resolve_path(args.keys))


def _code(args, field: PrimeField) -> CodeParams:
    try:
        return CodeParams(args.n, args.f, field)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# Commands -----------------------------------------------------------------------

def cmd_keygen(args, out: Output) -> int:
    path = resolve_path(args.keys)
    if path.exists() and not args.force:
        raise UsageError(f"{path} exists; pass --force to replace it")
    field = field_for_bits(args.bits)
    keys = keygen(SCHEME_NAMES[args.scheme], field, make_rng(args.seed, "keygen"))
    KeyFile(path, keys).save()
    out.record(f"wrote {args.scheme} keys to {path}", command="keygen", scheme=args.scheme,
               path=str(path), bits=field.bits)
    return EXIT_OK


def _setup_local(kf: KeyFile, data: bytes, args):
    code = _code(args, kf.field)
    if kf.keys.scheme == Scheme.SENTINEL:
        tf, ledger = sentinel_setup(data, kf.keys, args.sentinels, code)
        return tf, sentinel_meta(tf, ledger), ledger
    tf = por_setup(data, kf.keys, code)
    return tf, tf.meta, None


def cmd_setup(args, out: Output) -> int:
    kf = _keyfile(args)
    data = Path(args.input).read_bytes()
    tf, meta, ledger = _setup_local(kf, data, args)
    target = Path(args.out or args.input + ".por")
    target.write_bytes(encode_tagged_file(tf))
    kf.add_file(meta, ledger)
    kf.save()
    out.record(f"{meta.file_id.hex()} {target}", command="setup", file_id=meta.file_id.hex(),
               path=str(target), blocks=meta.n)
    return EXIT_OK


def cmd_upload(args, out: Output) -> int:
    kf = _keyfile(args)
    if args.dynamic:
        data = Path(args.input).read_bytes()
        beta = args.beta or max(1, math.ceil(len(bytes_to_blocks(data, kf.field)) / args.blocks))
        salt = make_rng(args.seed, "upload").getrandbits(128).to_bytes(16, "big")
        client = client_dyn_init(args.server, data, args.blocks, beta, kf.field, salt)
        kf.store_dyn(client)
        kf.save()
        out.record(client.file_id.hex(), command="upload", file_id=client.file_id.hex(), dynamic=True)
        return EXIT_OK
    if args.container:
        sf_bytes = Path(args.input).read_bytes()
        file_id = file_digest(sf_bytes).hex()
        if file_id not in kf.files:
            raise UsageError("container was not set up with this key file")
        connect(args.server).request(StoreMsg(0, bytes(16), (sf_bytes,)))
        out.record(file_id, command="upload", file_id=file_id, dynamic=False)
        return EXIT_OK
    data = Path(args.input).read_bytes()
    meta, ledger = client_upload(args.server, data, kf.keys, _code(args, kf.field), args.sentinels)
    kf.add_file(meta, ledger)
    kf.save()
    out.record(meta.file_id.hex(), command="upload", file_id=meta.file_id.hex(), dynamic=False)
    return EXIT_OK


def _local_store(path: str, meta):
    # Either a container file or a server store directory holding files/<id>.por.
    target = Path(path)
    if target.is_dir():
        target = target / "files" / f"{meta.file_id.hex()}.por"
    return decode_tagged_file(target.read_bytes(), allow_truncated=True, scheme_hint=meta.scheme)


def cmd_audit(args, out: Output) -> int:
    kf = _keyfile(args)
    rng = make_rng(args.seed, "audit")
    if args.dynamic:
        file_id = kf.resolve(args.file_id, dynamic=True)
        client = kf.dyn_client(file_id)
        results = [client_dyn_audit(args.server, client, args.samples, rng) for _ in range(args.rounds)]
    else:
        file_id = kf.resolve(args.file_id)
        meta = kf.meta(file_id)
        ledger = kf.ledger(file_id)
        results = []
        try:
            for _ in range(args.rounds):
                if args.store:
                    results.append(_audit_local(kf, meta, ledger, _local_store(args.store, meta), args, rng))
                else:
                    results.append(client_audit(args.server, meta, kf.keys, args.l, rng, ledger))
        finally:
            if ledger is not None:
                kf.store_ledger(file_id, ledger)
                kf.save()
    ok = all(results)
    out.record("PASS" if ok else "FAIL", command="audit", file_id=file_id, result="PASS" if ok else "FAIL",
               rounds=len(results), failed=results.count(False))
    return EXIT_OK if ok else EXIT_FAIL


def _audit_local(kf, meta, ledger, store, args, rng) -> bool:
    if meta.scheme == Scheme.SENTINEL:
        ch, chosen = sentinel_challenge(ledger, args.l, rng, meta.file_id)
        return sentinel_check(ledger, chosen, store.prove(ch))
    ch = challenge_for(meta, args.l, rng)
    return por_verify(kf.keys, ch, store.prove(ch))


def cmd_extract(args, out: Output) -> int:
    kf = _keyfile(args)
    rng = make_rng(args.seed, "extract")
    if args.dynamic:
        file_id = kf.resolve(args.file_id, dynamic=True)
        client = kf.dyn_client(file_id)
        values = client_dyn_extract(args.server, client)
        flat = [x for v in values for x in (v if isinstance(v, tuple) else (v,))]
        data = blocks_to_bytes(flat, client.length, client.field)
    else:
        file_id = kf.resolve(args.file_id)
        meta = kf.meta(file_id)
        ledger = kf.ledger(file_id)
        policy = ExtractionPolicy(batch_size=args.batch_size, workers=args.workers)
        if args.store:
            store = _local_store(args.store, meta)
            data = (extract_sentinel(store, ledger, meta) if meta.scheme == Scheme.SENTINEL
                    else extract(store, kf.keys, meta, policy, rng))
        else:
            data = client_extract(args.server, meta, kf.keys, policy, rng, ledger)
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    if args.out:
        out.record(f"recovered {len(data)} bytes to {args.out}", command="extract", file_id=file_id,
                   bytes=len(data), path=args.out)
    return EXIT_OK


def _value(text: str, beta: int):
    parts = [int(x, 0) for x in text.split(",")]
    if len(parts) != beta:
        raise UsageError(f"value needs {beta} comma-separated element(s)")
    return parts[0] if beta == 1 else tuple(parts)


def cmd_read(args, out: Output) -> int:
    kf = _keyfile(args)
    file_id = kf.resolve(args.file_id, dynamic=True)
    client = kf.dyn_client(file_id)
    value = client_read(args.server, client, args.index)
    text = ",".join(map(str, value)) if isinstance(value, tuple) else str(value)
    out.record(text, command="read", file_id=file_id, index=args.index, value=text)
    return EXIT_OK


def cmd_write(args, out: Output) -> int:
    kf = _keyfile(args)
    file_id = kf.resolve(args.file_id, dynamic=True)
    client = kf.dyn_client(file_id)
    try:
        client_write(args.server, client, args.index, _value(args.value, client.beta))
    finally:
        kf.store_dyn(client)
        kf.save()
    out.record(f"wrote index {args.index}", command="write", file_id=file_id, index=args.index,
               w=client.w, seq=client.seq)
    return EXIT_OK


def cmd_corrupt(args, out: Output) -> int:
    path = Path(args.path)
    rng = make_rng(args.seed, "corrupt")
    chosen = [x for x in (args.erase, args.corrupt, args.truncate) if x is not None]
    if len(chosen) != 1:
        raise UsageError("give exactly one of --erase, --corrupt, --truncate")
    delta = chosen[0]
    if not 0 <= delta <= 1:
        raise UsageError("fraction must be in [0, 1]")
    if path.is_dir():
        if args.truncate is not None:
            raise UsageError("--truncate applies to container files")
        behavior = adversary.EraseFraction(delta) if args.erase is not None else adversary.CorruptFraction(delta)
        damaged = adversary.apply_dynamic_behavior(DynServer.load(path), behavior, rng)
        damaged.save(path)
        out.record(f"damaged {path}", command="corrupt", path=str(path), delta=delta)
        return EXIT_OK
    data = path.read_bytes()
    if args.truncate is not None:
        keep = len(data) - math.floor(delta * len(data))
        path.write_bytes(data[:keep])
        out.record(f"truncated {path} to {keep} bytes", command="corrupt", path=str(path), kept=keep)
        return EXIT_OK
    sf = decode_tagged_file(data)
    behavior = (adversary.EraseFraction(delta, targeted=args.targeted) if args.erase is not None
                else adversary.CorruptFraction(delta))
    damaged = adversary.apply_behavior(sf, behavior, rng)
    path.write_bytes(encode_stored_file(damaged))
    lost = sum(a != b for a, b in zip(sf.blocks, damaged.blocks))
    out.record(f"damaged {lost} of {sf.n} blocks in {path}", command="corrupt", path=str(path),
               damaged=lost, blocks=sf.n)
    return EXIT_OK


def _host_port(address: str, default_port: int) -> tuple[str, int]:
    parsed = urlparse(address if "://" in address else f"http://{address}")
    return parsed.hostname or "127.0.0.1", parsed.port or default_port


def cmd_serve(args, out: Output) -> int:
    import uvicorn

    from porkit.service.app import create_app
    from porkit.service.tcp import start_tcp

    store = args.store or os.environ.get(STORE_ENV) or "porkit-store"
    Path(store).mkdir(parents=True, exist_ok=True)
    app = create_app(store)
    host, port = _host_port(args.listen, 8765)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
    except OSError as exc:
        print(f"error: cannot bind {host}:{port}: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    server = uvicorn.Server(uvicorn.Config(app, log_level=args.log_level.lower(), lifespan="off"))

    async def run() -> None:
        tcp = None
        if args.tcp:
            thost, tport = _host_port(args.tcp, 8766)
            tcp = await start_tcp(app.state.server, thost, tport)
            print(f"tcp frames on {thost}:{tport}", file=sys.stderr, flush=True)
        print(f"listening on http://{host}:{port} store={store}", file=sys.stderr, flush=True)
        try:
            await server.serve(sockets=[sock])
        finally:
            if tcp is not None:
                tcp.close()
                await tcp.wait_closed()

    asyncio.run(run())
    return EXIT_OK


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def cmd_experiment(args, out: Output) -> int:
    seed = args.seed if args.seed is not None else 0
    if args.mode == "extraction":
        for delta in _floats(args.deltas):
            s = adversary.extraction_experiment(delta, args.trials, scheme=args.schemes.split(",")[0],
                                                size=args.size, seed=seed,
                                                behavior=adversary.parse_behavior(args.behavior)
                                                if args.behavior else None)
            out.record(f"delta={delta:.3f} recovered {s.successes}/{s.trials}"
                       + (f" ({s.failures[0]})" if s.failures else ""), **json.loads(s.to_json()))
        return EXIT_OK
    reports = []
    for delta in _floats(args.deltas):
        behavior = adversary.parse_behavior(args.behavior) if args.behavior else None
        for l in _ints(args.ls):
            if args.mode == "dynamic":
                reports.append(adversary.dynamic_detection_experiment(delta, l, args.trials, seed=seed,
                                                                      behavior=behavior))
                continue
            for scheme in args.schemes.split(","):
                reports.append(adversary.detection_experiment(
                    scheme, delta, l, args.trials, seed, behavior=behavior or adversary.CorruptFraction(delta),
                    blocks=args.blocks, sentinels=args.sentinels))
    if args.json_lines:
        for r in reports:
            print(r.to_json())
    else:
        print(adversary.format_table(reports))
    return EXIT_OK


def cmd_selftest(args, out: Output) -> int:
    from porkit.vectors import run_all
    results = run_all()
    for name, ok, detail in results:
        out.record(f"{'ok  ' if ok else 'FAIL'} {name}: {detail}", command="selftest", name=name,
                   passed=ok, detail=detail)
    failed = sum(not ok for _, ok, _ in results)
    out.record(f"{len(results) - failed}/{len(results)} checks passed", command="selftest",
               passed=len(results) - failed, total=len(results))
    return EXIT_OK if failed == 0 else EXIT_FAIL


# Parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--keys", help="key file (default $PORKIT_KEYS or ./porkit-keys.json)")
    common.add_argument("--seed", type=int, help="seed every random choice for reproducible runs")
    common.add_argument("--json-lines", action="store_true", help="one JSON record per line")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    def code_args(p):
        p.add_argument("--f", type=int, default=DEFAULT_F, help="data symbols per stripe")
        p.add_argument("--n", type=int, default=DEFAULT_N, help="stored symbols per stripe")
        p.add_argument("--sentinels", type=int, default=DEFAULT_SENTINELS)

    parser = argparse.ArgumentParser(prog="porkit", description="Proofs of retrievability toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", parents=[common], help="create a key file")
    p.add_argument("--scheme", choices=sorted(SCHEME_NAMES), default="sw-private")
    p.add_argument("--bits", type=int, default=256, help="prime size in bits")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("setup", parents=[common], help="encode and tag a file locally")
    p.add_argument("input")
    p.add_argument("--out", help="container path (default <input>.por)")
    code_args(p)
    p.set_defaults(func=cmd_setup)

    p = sub.add_parser("upload", parents=[common], help="set up a file and store it on a server")
    p.add_argument("input")
    p.add_argument("--server", required=True)
    p.add_argument("--container", action="store_true", help="input is a container made by setup")
    p.add_argument("--dynamic", action="store_true", help="store as a dynamic (read/write) file")
    p.add_argument("--blocks", type=int, default=256, help="dynamic buffer size n")
    p.add_argument("--beta", type=int, help="field elements per dynamic block (default: just enough to fit)")
    code_args(p)
    p.set_defaults(func=cmd_upload)

    p = sub.add_parser("audit", parents=[common], help="challenge a stored file")
    p.add_argument("file_id", nargs="?")
    where = p.add_mutually_exclusive_group(required=True)
    where.add_argument("--server")
    where.add_argument("--store", help="audit a local container or server store directory instead")
    p.add_argument("-l", type=int, default=DEFAULT_CHALLENGE_SIZE, help="challenged blocks (sentinels: per audit)")
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--dynamic", action="store_true")
    p.add_argument("--samples", type=int, default=DEFAULT_DYN_AUDIT, help="dynamic samples per structure")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("extract", parents=[common], help="recover a stored file")
    p.add_argument("file_id", nargs="?")
    where = p.add_mutually_exclusive_group(required=True)
    where.add_argument("--server")
    where.add_argument("--store")
    p.add_argument("--out")
    p.add_argument("--dynamic", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=256)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("read", parents=[common], help="authenticated read of a dynamic block")
    p.add_argument("index", type=int)
    p.add_argument("--file-id")
    p.add_argument("--server", required=True)
    p.set_defaults(func=cmd_read)

    p = sub.add_parser("write", parents=[common], help="write a dynamic block")
    p.add_argument("index", type=int)
    p.add_argument("value", help="field element(s), comma-separated when beta > 1")
    p.add_argument("--file-id")
    p.add_argument("--server", required=True)
    p.set_defaults(func=cmd_write)

    p = sub.add_parser("corrupt", parents=[common], help="damage a local container or dynamic store")
    p.add_argument("path")
    p.add_argument("--erase", type=float)
    p.add_argument("--corrupt", type=float)
    p.add_argument("--truncate", type=float)
    p.add_argument("--targeted", action="store_true", help="concentrate erasures in whole stripes")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("serve", parents=[common], help="run the storage server")
    p.add_argument("--listen", default="http://127.0.0.1:8765")
    p.add_argument("--tcp", help="also accept raw framed TCP on HOST:PORT")
    p.add_argument("--store", help=f"store directory (default ${STORE_ENV} or ./porkit-store)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("experiment", parents=[common], help="run adversary experiments")
    p.add_argument("--mode", choices=["detection", "extraction", "dynamic"], default="detection")
    p.add_argument("--schemes", default="sw-private")
    p.add_argument("--deltas", default="0.01,0.05,0.1,0.25")
    p.add_argument("--ls", default="10,44,100")
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--behavior", help="honest | erase:D | erase-targeted:D | corrupt:D | replay:K")
    p.add_argument("--blocks", type=int, default=3200)
    p.add_argument("--sentinels", type=int, default=DEFAULT_SENTINELS_PER_AUDIT * 10)
    p.add_argument("--size", type=int, default=1 << 16, help="file bytes for extraction runs")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("selftest", parents=[common], help="check known-answer vectors")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    out = Output(args.json_lines)
    try:
        return args.func(args, out)
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (IntegrityError, ExtractionError) as exc:
        print(f"integrity failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except RemoteError as exc:
        print(f"server refused: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except BudgetExhausted as exc:
        print(f"sentinel budget exhausted: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, ValueError, KeyError, OSError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
