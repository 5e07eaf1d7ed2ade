"""The bridge server binary over real sockets."""

import json
import os
import re
import subprocess
import time
import urllib.request

import pytest

websockets_sync = pytest.importorskip("websockets.sync.client")

BRIDGE = os.environ.get("ASE_BRIDGE_BIN", "")


@pytest.fixture
def server(tmp_path):
    if not BRIDGE or not os.path.exists(BRIDGE):
        pytest.skip("ASE_BRIDGE_BIN not set")
    config = tmp_path / "bridge.json"
    config.write_text(json.dumps({"seed": 2, "nav_theta": [1.0], "lander_theta": [0.0, 0.07]}))
    proc = subprocess.Popen(
        [BRIDGE, str(config), "--port", "0", "--log-dir", str(tmp_path / "logs")],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        text=True,
    )
    try:
        line = proc.stdout.readline()
        match = re.search(r"listening on (\S+):(\d+)", line)
        assert match, f"unexpected banner: {line!r}"
        yield f"127.0.0.1:{match.group(2)}", tmp_path / "logs"
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def get_json(address, path):
    with urllib.request.urlopen(f"http://{address}{path}", timeout=5) as resp:
        assert resp.status == 200
        return json.loads(resp.read())


def test_http_endpoints(server):
    address, _ = server
    assert get_json(address, "/health")["status"] == "ok"
    assert get_json(address, "/sessions")["count"] == 0
    with pytest.raises(urllib.error.HTTPError):
        urllib.request.urlopen(f"http://{address}/nothing-here", timeout=5)


def test_websocket_episode(server):
    address, logs = server
    with websockets_sync.connect(f"ws://{address}/") as ws:
        ws.send(json.dumps({"v": 1, "type": "start", "env": "grid-nav", "condition": "unassisted"}))
        frame = json.loads(ws.recv(timeout=10))
        assert frame["type"] == "frame" and frame["t"] == 0
        session = frame["session"]
        assert get_json(address, "/sessions")["count"] == 1

        ws.send("not json")
        assert json.loads(ws.recv(timeout=10))["code"] == "bad_request"

        # Turning in place runs the episode out to its horizon.
        last = frame
        while last["type"] != "summary":
            ws.send(json.dumps({"v": 1, "type": "action", "session": session, "action": "turn_left"}))
            last = json.loads(ws.recv(timeout=10))
            assert last["session"] == session
        assert last["type"] == "summary"

        # Grid episodes carry their goal as the task and close at the summary.
        assert isinstance(last["demonstration"], str)
        assert get_json(address, "/sessions")["count"] == 0
        ws.send(json.dumps({"v": 1, "type": "label", "session": session, "task": 0}))
        assert json.loads(ws.recv(timeout=10))["code"] == "unknown_session"

    # The log is written by a background thread.
    path = logs / "demonstrations.jsonl"
    deadline = time.monotonic() + 5
    while time.monotonic() < deadline and not (path.exists() and path.read_text().strip()):
        time.sleep(0.05)
    record = json.loads(path.read_text().splitlines()[-1])
    assert record["kind"] == "demonstration"
    assert record["demonstration"]["episode_id"] == last["demonstration"]
    assert record["demonstration"]["task"] == last["task"]
