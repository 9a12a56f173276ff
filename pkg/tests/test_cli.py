import json
import stat
import subprocess
import sys
import time

import pytest

from porkit.cli import main


def porkit(env, *args, timeout=120):
    return subprocess.run([sys.executable, "-m", "porkit.cli", *map(str, args)], env=env, capture_output=True,
                          timeout=timeout)


def test_keygen_file_is_private(tmp_path, cli_env):
    r = porkit(cli_env, "keygen", "--scheme", "jk-mac", "--seed", 1)
    assert r.returncode == 0, r.stderr
    path = tmp_path / "keys.json"
    assert stat.S_IMODE(path.stat().st_mode) == 0o600
    assert porkit(cli_env, "keygen").returncode == 2


def test_upload_audit_corrupt_cycle(tmp_path, cli_env, server_process):
    data = tmp_path / "data.bin"
    data.write_bytes(bytes(range(256)) * 40)
    assert porkit(cli_env, "keygen", "--scheme", "sw-private", "--seed", 2).returncode == 0
    up = porkit(cli_env, "upload", data, "--server", server_process.http, "--f", 8, "--n", 16)
    assert up.returncode == 0, up.stderr
    file_id = up.stdout.decode().strip()
    r = porkit(cli_env, "audit", file_id, "--server", server_process.tcp, "--rounds", 3)
    assert (r.returncode, r.stdout.decode().strip()) == (0, "PASS")
    out = tmp_path / "back.bin"
    r = porkit(cli_env, "extract", file_id, "--server", server_process.http, "--out", out)
    assert r.returncode == 0 and out.read_bytes() == data.read_bytes()

    server_process.stop()
    container = server_process.store / "files" / f"{file_id}.por"
    r = porkit(cli_env, "corrupt", container, "--corrupt", 1.0, "--seed", 3)
    assert r.returncode == 0, r.stderr
    server_process.start()
    r = porkit(cli_env, "audit", file_id, "--server", server_process.http, "-l", 5)
    assert (r.returncode, r.stdout.decode().strip()) == (1, "FAIL")


def test_local_setup_and_store_audit(tmp_path, cli_env):
    data = tmp_path / "d.bin"
    data.write_bytes(b"local" * 500)
    porkit(cli_env, "keygen", "--scheme", "sentinel", "--seed", 4)
    r = porkit(cli_env, "setup", data, "--f", 8, "--n", 16, "--sentinels", 30, "--json-lines")
    assert r.returncode == 0, r.stderr
    rec = json.loads(r.stdout)
    r = porkit(cli_env, "audit", "--store", rec["path"], "-l", 10, "--rounds", 3)
    assert r.returncode == 0, r.stderr
    r = porkit(cli_env, "audit", "--store", rec["path"], "-l", 10)
    assert r.returncode == 2 and b"budget" in r.stderr


def test_dynamic_read_write(tmp_path, cli_env, server_process):
    data = tmp_path / "d.bin"
    data.write_bytes(b"dyn" * 150)
    porkit(cli_env, "keygen", "--seed", 5)
    r = porkit(cli_env, "upload", data, "--server", server_process.http, "--dynamic", "--blocks", 16)
    assert r.returncode == 0, r.stderr
    assert porkit(cli_env, "write", 3, 12345, "--server", server_process.http).returncode == 0
    r = porkit(cli_env, "read", 3, "--server", server_process.tcp)
    assert r.stdout.decode().strip() == "12345"
    assert porkit(cli_env, "audit", "--dynamic", "--server", server_process.http).returncode == 0
    r = porkit(cli_env, "read", 99, "--server", server_process.http)
    assert r.returncode == 2


def test_selftest():
    r = porkit(None, "selftest")
    assert r.returncode == 0
    assert b"16/16 codewords matched" in r.stdout


def test_usage_errors(tmp_path, cli_env):
    assert porkit(cli_env, "audit", "--bogus").returncode == 2
    assert porkit(cli_env, "audit", "--server", "http://127.0.0.1:1").returncode == 2  # no key file
    assert porkit(cli_env, "corrupt", tmp_path / "missing.por", "--erase", 0.1).returncode == 2
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_seed_makes_output_deterministic(tmp_path, cli_env):
    data = tmp_path / "d.bin"
    data.write_bytes(b"seeded" * 200)
    outs = []
    for k in range(2):
        env = dict(cli_env, PORKIT_KEYS=str(tmp_path / f"k{k}.json"))
        porkit(env, "keygen", "--scheme", "jk-sig", "--seed", 6)
        r = porkit(env, "setup", data, "--out", tmp_path / f"c{k}.por", "--f", 8, "--n", 16, "--seed", 6)
        assert r.returncode == 0, r.stderr
        outs.append((tmp_path / f"c{k}.por").read_bytes())
    assert outs[0] == outs[1]
    r = porkit(None, "experiment", "--schemes", "jk-mac", "--deltas", "0.1", "--ls", "10", "--trials", 30,
               "--blocks", 256, "--seed", 7, "--json-lines")
    s = porkit(None, "experiment", "--schemes", "jk-mac", "--deltas", "0.1", "--ls", "10", "--trials", 30,
               "--blocks", 256, "--seed", 7, "--json-lines")
    strip = lambda out: [{k: v for k, v in json.loads(line).items() if k != "seconds"}
                         for line in out.splitlines() if line.strip()]
    assert r.returncode == 0 and strip(r.stdout) == strip(s.stdout)


def test_server_death_is_transport_error(tmp_path, cli_env, server_process):
    data = tmp_path / "d.bin"
    data.write_bytes(b"z" * 4000)
    porkit(cli_env, "keygen", "--scheme", "sw-public", "--seed", 8)
    up = porkit(cli_env, "upload", data, "--server", server_process.http, "--f", 8, "--n", 16)
    assert up.returncode == 0, up.stderr
    proc = subprocess.Popen([sys.executable, "-m", "porkit.cli", "audit", "--server", server_process.tcp,
                             "--rounds", "1000000", "-l", "4"], env=cli_env,
                            stdout=subprocess.DEVNULL, stderr=subprocess.PIPE)
    time.sleep(3)
    assert proc.poll() is None
    server_process.stop()
    _, err = proc.communicate(timeout=60)
    assert proc.returncode == 3, err
    assert porkit(cli_env, "audit", "--server", server_process.http).returncode == 3
