import socket
import threading
import time

import httpx
import pytest
import uvicorn

from qstack.engine.core import EngineConfig
from qstack.server import create_app

ADMIN_KEY = "qk_test_admin_key"

DEVICE_2Q = {
    "id": "sim2",
    "n_qubits": 2,
    "edges": [[0, 1]],
    "basis_gates": ["rz", "sx", "x", "cx"],
    "readout_errors": [{"eps01": 0.0, "eps10": 0.0}, {"eps01": 0.0, "eps10": 0.0}],
}

DEVICE_5Q_LINE = {
    "id": "sim5",
    "n_qubits": 5,
    "edges": [[0, 1], [1, 2], [2, 3], [3, 4]],
    "basis_gates": ["rz", "sx", "x", "cx"],
    "readout_errors": [{"eps01": 0.0, "eps10": 0.0}] * 5,
}


class LiveServer:
    """A real uvicorn server in a background thread, for CLI and e2e tests."""

    def __init__(self, tmp_path, seed_devices=None, calibration_shots=20_000):
        sock = socket.socket()
        sock.bind(("127.0.0.1", 0))
        self.port = sock.getsockname()[1]
        sock.close()
        self.url = f"http://127.0.0.1:{self.port}"
        self.app = create_app(
            str(tmp_path / "server.sqlite"),
            base_url=self.url,
            bootstrap_admin_key=ADMIN_KEY,
            seed_devices=seed_devices or [DEVICE_2Q, DEVICE_5Q_LINE],
            engine_config=EngineConfig(calibration_shots=calibration_shots, poll_interval=0.01),
            run_workers=True,
        )
        self._server = uvicorn.Server(
            uvicorn.Config(self.app, host="127.0.0.1", port=self.port, log_level="error")
        )
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self._thread.start()
        deadline = time.time() + 10
        while time.time() < deadline:
            try:
                httpx.get(self.url + "/health", timeout=1.0)
                return
            except httpx.HTTPError:
                time.sleep(0.02)
        raise RuntimeError("server did not come up")

    def stop(self):
        self._server.should_exit = True
        self._thread.join(timeout=5)

    def client(self, api_key=ADMIN_KEY) -> httpx.Client:
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        return httpx.Client(base_url=self.url, headers=headers, timeout=30.0)


@pytest.fixture(scope="session")
def live_server(tmp_path_factory):
    server = LiveServer(tmp_path_factory.mktemp("live"))
    yield server
    server.stop()


# -- acceptance reporting -----------------------------------------------------

_ACCEPTANCE_RESULTS: list = []


class _CriterionRecorder:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACCEPTANCE_RESULTS.append((self.name, exc_type is None, str(exc) if exc else ""))
        return False


@pytest.fixture
def criterion():
    return _CriterionRecorder


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE_RESULTS:
        status = "PASS" if ok else "FAIL"
        line = f"{status}  {name}"
        if not ok and detail:
            line += f"  ({detail.splitlines()[0][:100]})"
        terminalreporter.write_line(line)
