from __future__ import annotations

import os
import random
import socket
import subprocess
import sys
import time
from pathlib import Path

import httpx
import pytest

from porkit.algebra import PrimeField

ACCEPTANCE_LINES: list[str] = []


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class ServerProcess:
    """``porkit serve`` in a child process, with HTTP and raw TCP listeners."""

    def __init__(self, store: Path):
        self.store = store
        self.http_port = free_port()
        self.tcp_port = free_port()
        self.proc: subprocess.Popen | None = None

    @property
    def http(self) -> str:
        return f"http://127.0.0.1:{self.http_port}"

    @property
    def tcp(self) -> str:
        return f"tcp://127.0.0.1:{self.tcp_port}"

    def start(self) -> ServerProcess:
        cmd = [sys.executable, "-m", "porkit.cli", "serve", "--listen", f"127.0.0.1:{self.http_port}",
               "--tcp", f"127.0.0.1:{self.tcp_port}", "--store", str(self.store), "--log-level", "WARNING"]
        self.log = self.store.parent / f"serve-{self.http_port}.log"
        with open(self.log, "ab") as log:
            self.proc = subprocess.Popen(cmd, stdout=subprocess.DEVNULL, stderr=log)
        deadline = time.monotonic() + 30
        while time.monotonic() < deadline:
            if self.proc.poll() is not None:
                raise RuntimeError(f"server exited: {self.log.read_text()}")
            try:
                if httpx.get(f"{self.http}/health", timeout=1).status_code == 200:
                    with socket.create_connection(("127.0.0.1", self.tcp_port), timeout=1):
                        return self
            except (httpx.HTTPError, OSError):
                pass
            time.sleep(0.1)
        self.stop()
        raise RuntimeError("server did not come up")

    def stop(self) -> None:
        if self.proc and self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(10)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        self.proc = None

    def restart(self) -> ServerProcess:
        self.stop()
        return self.start()


@pytest.fixture
def server_process(tmp_path):
    srv = ServerProcess(tmp_path / "store")
    srv.start()
    yield srv
    srv.stop()


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def field():
    return PrimeField()


@pytest.fixture
def cli_env(tmp_path):
    env = dict(os.environ)
    env["PORKIT_KEYS"] = str(tmp_path / "keys.json")
    return env


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
