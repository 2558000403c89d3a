"""Shared helpers: launching a real service subprocess and waiting on it."""

import os
import signal
import socket
import subprocess
import sys
import time

import httpx
import pytest


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class ServerProcess:
    """A ``prefadapt serve`` subprocess bound to a fresh port."""

    def __init__(self, matrix, meta, data_dir, extra_env=None):
        self.port = free_port()
        self.base_url = f"http://127.0.0.1:{self.port}"
        env = os.environ.copy()
        if extra_env:
            env.update(extra_env)
        self.proc = subprocess.Popen(
            [
                sys.executable,
                "-m",
                "prefadapt",
                "serve",
                "--matrix",
                str(matrix),
                "--meta",
                str(meta),
                "--data-dir",
                str(data_dir),
                "--listen",
                f"127.0.0.1:{self.port}",
                "--quiet",
            ],
            env=env,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
        )

    def wait_ready(self, timeout=20.0):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if self.proc.poll() is not None:
                stderr = self.proc.stderr.read().decode()
                raise RuntimeError(
                    f"server exited early with {self.proc.returncode}: {stderr}"
                )
            try:
                if httpx.get(f"{self.base_url}/healthz", timeout=1.0).status_code == 200:
                    return self
            except httpx.TransportError:
                time.sleep(0.1)
        raise TimeoutError("server did not become healthy in time")

    def kill(self):
        if self.proc.poll() is None:
            self.proc.send_signal(signal.SIGKILL)
            self.proc.wait(timeout=10)

    def terminate(self):
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait(timeout=10)


@pytest.fixture
def server_factory():
    servers = []

    def start(matrix, meta, data_dir, **kwargs):
        server = ServerProcess(matrix, meta, data_dir, **kwargs)
        servers.append(server)
        return server.wait_ready()

    yield start
    for server in servers:
        server.terminate()
