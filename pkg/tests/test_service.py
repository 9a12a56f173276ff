import random
import threading

import pytest
from fastapi.testclient import TestClient

from porkit.algebra import PrimeField
from porkit.erasure import CodeParams
from porkit.por.schemes import Scheme, challenge_for, keygen
from porkit.service.app import create_app
from porkit.service.client import (LocalTransport, RemoteError, RemoteProver, TransportError,
                                   client_audit, client_dyn_audit, client_dyn_extract, client_dyn_init,
                                   client_extract, client_read, client_upload, client_write, connect)
from porkit.service.protocol import (ErrorCode, ErrorMsg, MsgType, OkMsg, ReadMsg, StoreMsg, Target,
                                     decode_message, encode_frame, encode_message)
from porkit.service.server import StorageServer

FIELD = PrimeField()
CODE = CodeParams(16, 8, FIELD)
ALL = [Scheme.JK_MAC, Scheme.JK_SIG, Scheme.SW_PRIVATE, Scheme.SW_PUBLIC, Scheme.SENTINEL]


@pytest.fixture
def local(tmp_path):
    return LocalTransport(StorageServer(tmp_path / "store"))


@pytest.mark.parametrize("scheme", ALL)
def test_upload_audit_extract_in_process(local, scheme):
    rng = random.Random(int(scheme))
    keys = keygen(scheme, FIELD, rng)
    data = rng.randbytes(3000)
    meta, ledger = client_upload(local, data, keys, CODE, sentinels=40)
    for _ in range(3):
        assert client_audit(local, meta, keys, 10, rng, ledger)
    assert client_extract(local, meta, keys, rng=rng, ledger=ledger) == data


def test_state_survives_new_server_instance(tmp_path):
    rng = random.Random(1)
    keys = keygen(Scheme.SW_PUBLIC, FIELD, rng)
    data = rng.randbytes(2000)
    meta, _ = client_upload(LocalTransport(StorageServer(tmp_path)), data, keys, CODE)
    fresh = LocalTransport(StorageServer(tmp_path))
    assert client_audit(fresh, meta, keys, 10, rng)
    assert client_extract(fresh, meta, keys, rng=rng) == data


def test_dynamic_over_transport_and_restart(tmp_path):
    local = LocalTransport(StorageServer(tmp_path))
    data = random.Random(2).randbytes(40 * 31)
    client = client_dyn_init(local, data, 40, field=FIELD, salt=b"s")
    rng = random.Random(3)
    live = {}
    for k in range(60):
        i = rng.randrange(1, 41)
        live[i] = rng.randrange(FIELD.p)
        client_write(local, client, i, live[i])
    fresh = LocalTransport(StorageServer(tmp_path))
    for i, v in live.items():
        assert client_read(fresh, client, i) == v
    assert client_dyn_audit(fresh, client, 10, rng)
    extracted = client_dyn_extract(fresh, client)
    assert all(extracted[i - 1] == v for i, v in live.items())


def test_dynamic_id_cannot_be_overwritten(local):
    data = b"x" * 100
    client_dyn_init(local, data, 8, field=FIELD, salt=b"same")
    with pytest.raises(RemoteError) as info:
        client_dyn_init(local, data, 8, field=FIELD, salt=b"same")
    assert info.value.code == ErrorCode.BAD_REQUEST
    other = client_dyn_init(local, data, 8, field=FIELD)
    assert other.file_id


def test_unknown_file_error(local):
    with pytest.raises(RemoteError) as info:
        local.request(ReadMsg(bytes(16), Target.BLOCKS, 0, (1,)))
    assert info.value.code == ErrorCode.UNKNOWN_FILE


def test_dispatch_never_raises(tmp_path):
    server = StorageServer(tmp_path)
    rng = random.Random(4)
    for _ in range(500):
        frame = rng.randbytes(rng.randrange(0, 40))
        reply = decode_message(server.dispatch(frame))
        assert isinstance(reply, (ErrorMsg, OkMsg))
    reply = decode_message(server.dispatch(encode_frame(MsgType.PROOF, b"")))
    assert reply.code == ErrorCode.UNKNOWN_TYPE
    reply = decode_message(server.dispatch(encode_frame(MsgType.STORE, b"\x00" + bytes(16) + b"\x01\x00\x00\x00\x03abc")))
    assert reply.code in (ErrorCode.BAD_REQUEST, ErrorCode.MALFORMED)


def test_out_of_range_challenge_refused(local):
    rng = random.Random(5)
    keys = keygen(Scheme.JK_MAC, FIELD, rng)
    meta, _ = client_upload(local, b"y" * 500, keys, CODE)
    meta.stored = meta.n + 50
    prover = RemoteProver(lambda: local, meta.file_id, FIELD)
    ch = challenge_for(meta, meta.n, rng)
    with pytest.raises(RemoteError) as info:
        prover.prove(ch)
    assert info.value.code == ErrorCode.BAD_REQUEST


def test_static_file_replaced_on_disk_is_reloaded(tmp_path):
    server = StorageServer(tmp_path)
    local = LocalTransport(server)
    rng = random.Random(6)
    keys = keygen(Scheme.SW_PRIVATE, FIELD, rng)
    meta, _ = client_upload(local, rng.randbytes(1000), keys, CODE)
    assert client_audit(local, meta, keys, meta.n, rng)
    path = tmp_path / "files" / f"{meta.file_id.hex()}.por"
    raw = bytearray(path.read_bytes())
    raw[100] ^= 0xFF  # inside the first stripe's blocks
    path.write_bytes(bytes(raw))
    assert not client_audit(local, meta, keys, meta.n, rng)


def test_http_app_endpoints(tmp_path):
    app = create_app(tmp_path)
    with TestClient(app) as http:
        assert http.get("/health").json() == {"status": "ok", "files": 0}
        rng = random.Random(7)
        keys = keygen(Scheme.JK_MAC, FIELD, rng)
        from porkit.por.schemes import por_setup
        from porkit.por.container import encode_tagged_file
        tf = por_setup(rng.randbytes(500), keys, CODE)
        reply = http.post("/frame", content=encode_message(StoreMsg(0, bytes(16), (encode_tagged_file(tf),))),
                          headers={"content-type": "application/octet-stream"})
        assert decode_message(reply.content) == OkMsg(tf.file_id)
        files = http.get("/files").json()
        assert [f["file_id"] for f in files] == [tf.file_id.hex()]
        assert http.get(f"/files/{tf.file_id.hex()}").json()["scheme"] == int(Scheme.JK_MAC)
        assert http.get("/files/00").status_code == 404
        bad = http.post("/frame", content=b"\x00\x00")
        assert decode_message(bad.content).code == ErrorCode.MALFORMED


def test_concurrent_audits(local):
    rng = random.Random(8)
    keys = keygen(Scheme.SW_PRIVATE, FIELD, rng)
    meta, _ = client_upload(local, rng.randbytes(3000), keys, CODE)
    results = []

    def worker(seed):
        r = random.Random(seed)
        results.extend(client_audit(local, meta, keys, 8, r) for _ in range(10))

    threads = [threading.Thread(target=worker, args=(s,)) for s in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(results) == 60 and all(results)


def test_connect_address_forms():
    assert type(connect("127.0.0.1:1")).__name__ == "HttpTransport"
    assert type(connect("tcp://127.0.0.1:1")).__name__ == "TcpTransport"
    with pytest.raises(ValueError):
        connect("ftp://x")
    with pytest.raises(TransportError):
        connect("tcp://127.0.0.1:1", timeout=1).exchange(encode_frame(MsgType.OK, b""))
