"""Self-contained serving layer: a framed-JSON wire protocol, an
in-memory FIFO topic broker, a model server answering forecast requests
from loaded artifacts, and client helpers.

Frame = 4-byte big-endian length prefix + UTF-8 JSON object. Body `type`
is one of PUBLISH / FETCH / FORECAST_REQ / FORECAST_RESP / ERROR, and
responses echo the request's client-chosen `id`. Frames above 16 MiB are
rejected and the connection closed; a frame that is valid length-wise but
not valid JSON draws an ERROR frame and the connection stays open.

Transport adds no numeric behavior: a served forecast is bitwise equal to
in-process inference because JSON float round-trips are exact.
"""

from __future__ import annotations

import json
import socket
import struct
import threading
import time
import uuid
from collections import defaultdict, deque
from pathlib import Path
from typing import Any

import numpy as np

from . import errors
from .artifact import FORMAT_VERSION, deserialize
from .lstm import ModelParams, rollout
from .timeseries import Scaler

MAX_FRAME = 16 * 1024 * 1024
_HEADER = struct.Struct(">I")

REQUEST_TOPIC = "forecast.requests"
RESPONSE_TOPIC_PREFIX = "forecast.responses."

T_PUBLISH = "PUBLISH"
T_FETCH = "FETCH"
T_FORECAST_REQ = "FORECAST_REQ"
T_FORECAST_RESP = "FORECAST_RESP"
T_ERROR = "ERROR"


class FrameTooLarge(errors.ProtocolError):
    pass


class MalformedFrame(errors.ProtocolError):
    pass


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    """Read exactly n bytes; None on clean EOF at a frame boundary."""
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            if got == 0:
                return None
            raise errors.ProtocolError("connection closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def send_frame(sock: socket.socket, body: dict) -> None:
    encoded = json.dumps(body, separators=(",", ":"), sort_keys=True).encode("utf-8")
    if len(encoded) > MAX_FRAME:
        raise FrameTooLarge(f"frame of {len(encoded)} bytes exceeds {MAX_FRAME}")
    sock.sendall(_HEADER.pack(len(encoded)) + encoded)


def recv_frame(sock: socket.socket) -> dict | None:
    """Next frame as a dict; None on clean EOF. Raises FrameTooLarge
    before consuming an oversized body (the stream is then unusable) and
    MalformedFrame after consuming a non-JSON body (the stream stays in
    sync)."""
    header = _recv_exact(sock, _HEADER.size)
    if header is None:
        return None
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME:
        raise FrameTooLarge(f"declared frame length {length} exceeds {MAX_FRAME}")
    body = _recv_exact(sock, length)
    if body is None:
        raise errors.ProtocolError("connection closed before frame body")
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFrame(str(exc)) from exc
    if not isinstance(obj, dict):
        raise MalformedFrame("frame body must be a JSON object")
    return obj


def _error_body(req_id: Any, code: str, message: str = "") -> dict:
    return {"type": T_ERROR, "id": req_id, "code": code, "message": message}


class _TcpService:
    """Threaded accept loop with per-connection handler threads."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._host = host
        self._port = port
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._conns: set[socket.socket] = set()
        self._lock = threading.Lock()
        self._stopping = threading.Event()

    @property
    def address(self) -> tuple[str, int]:
        if self._listener is None:
            raise RuntimeError("service not started")
        return self._listener.getsockname()[:2]

    def start(self) -> "_TcpService":
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self._host, self._port))
        listener.listen(128)
        self._listener = listener
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)
        return self

    def stop(self) -> None:
        self._stopping.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._lock:
            conns = list(self._conns)
        for conn in conns:
            try:
                conn.close()
            except OSError:
                pass

    def __enter__(self) -> "_TcpService":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while not self._stopping.is_set():
            try:
                conn, _addr = self._listener.accept()
            except OSError:
                return
            with self._lock:
                self._conns.add(conn)
            threading.Thread(target=self._serve_conn, args=(conn,), daemon=True).start()

    def _serve_conn(self, conn: socket.socket) -> None:
        try:
            while not self._stopping.is_set():
                try:
                    frame = recv_frame(conn)
                except MalformedFrame as exc:
                    send_frame(conn, _error_body(None, "malformed_frame", str(exc)))
                    continue
                except FrameTooLarge as exc:
                    send_frame(conn, _error_body(None, "frame_too_large", str(exc)))
                    return
                except errors.ProtocolError:
                    return
                if frame is None:
                    return
                self._handle(conn, frame)
        except OSError:
            return
        finally:
            with self._lock:
                self._conns.discard(conn)
            try:
                conn.close()
            except OSError:
                pass

    def _handle(self, conn: socket.socket, frame: dict) -> None:
        raise NotImplementedError


class Broker(_TcpService):
    """Per-topic FIFO queues, auto-created on first use. PUBLISH appends;
    FETCH pops the oldest message or reports empty after its timeout."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        super().__init__(host, port)
        self._topics: dict[str, deque] = defaultdict(deque)
        self._cond = threading.Condition()

    def _handle(self, conn: socket.socket, frame: dict) -> None:
        req_id = frame.get("id")
        kind = frame.get("type")
        if kind == T_PUBLISH:
            topic = frame.get("topic")
            if not isinstance(topic, str) or "payload" not in frame:
                send_frame(conn, _error_body(req_id, "bad_request",
                                             "PUBLISH needs topic and payload"))
                return
            with self._cond:
                self._topics[topic].append(frame["payload"])
                self._cond.notify_all()
            send_frame(conn, {"type": T_PUBLISH, "id": req_id, "ok": True})
        elif kind == T_FETCH:
            topic = frame.get("topic")
            if not isinstance(topic, str):
                send_frame(conn, _error_body(req_id, "bad_request", "FETCH needs topic"))
                return
            timeout_ms = frame.get("timeout_ms", 0)
            deadline = time.monotonic() + max(0, float(timeout_ms)) / 1000.0
            payload, found = None, False
            with self._cond:
                while True:
                    queue = self._topics[topic]
                    if queue:
                        payload, found = queue.popleft(), True
                        break
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        break
                    self._cond.wait(remaining)
            if found:
                send_frame(conn, {"type": T_FETCH, "id": req_id, "payload": payload})
            else:
                send_frame(conn, {"type": T_FETCH, "id": req_id, "empty": True})
        else:
            send_frame(conn, _error_body(req_id, "unsupported_type",
                                         f"broker cannot handle {kind!r}"))


class ModelServer(_TcpService):
    """Answers FORECAST_REQ frames from loaded model artifacts, either on
    its own listen socket or by polling a broker's request topic."""

    def __init__(
        self,
        artifact_paths: list[str | Path] | None = None,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        super().__init__(host, port)
        self.models: dict[str, tuple[ModelParams, Scaler, str]] = {}
        for p in artifact_paths or []:
            self.load_artifact(p)
        self._workers: list[threading.Thread] = []

    def load_artifact(self, path: str | Path, name: str | None = None) -> str:
        params, scaler = deserialize(path)
        name = name or Path(path).stem
        self.models[name] = (params, scaler, f"redf-artifact-v{FORMAT_VERSION}")
        return name

    def add_model(self, name: str, params: ModelParams, scaler: Scaler) -> None:
        self.models[name] = (params, scaler, f"redf-artifact-v{FORMAT_VERSION}")

    def _forecast(self, req: dict) -> dict:
        req_id = req.get("id")
        name = req.get("model")
        if name not in self.models:
            return _error_body(req_id, "unknown_model", f"no model named {name!r}")
        params, scaler, version = self.models[name]
        horizon = req.get("horizon", 1)
        if not isinstance(horizon, int) or horizon < 1:
            return _error_body(req_id, "invalid_horizon", f"horizon {horizon!r}")
        history = req.get("history")
        if not isinstance(history, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in history
        ):
            return _error_body(req_id, "invalid_values", "history must be a list of numbers")
        if len(history) < params.hyper.timesteps:
            return _error_body(
                req_id, "insufficient_history",
                f"need at least {params.hyper.timesteps} values, got {len(history)}",
            )
        values = np.asarray(history, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            return _error_body(req_id, "invalid_values", "history contains non-finite values")
        forecast = rollout(params, scaler, values, horizon)
        return {"type": T_FORECAST_RESP, "id": req_id,
                "forecast": [float(v) for v in forecast], "model_version": version}

    def _handle(self, conn: socket.socket, frame: dict) -> None:
        if frame.get("type") != T_FORECAST_REQ:
            send_frame(conn, _error_body(frame.get("id"), "unsupported_type",
                                         f"model server cannot handle {frame.get('type')!r}"))
            return
        send_frame(conn, self._forecast(frame))

    def attach_broker(
        self,
        broker_address: tuple[str, int],
        request_topic: str = REQUEST_TOPIC,
        poll_ms: int = 200,
    ) -> None:
        """Start a worker that drains forecast requests from the broker and
        publishes each response to the request's reply_to topic."""

        def worker() -> None:
            client = BrokerClient(broker_address)
            while not self._stopping.is_set():
                try:
                    payload = client.fetch(request_topic, timeout_ms=poll_ms)
                except (errors.RedfError, OSError):
                    client.close()
                    if self._stopping.is_set():
                        return
                    time.sleep(poll_ms / 1000.0)
                    continue
                if payload is None:
                    continue
                if not isinstance(payload, dict):
                    continue
                response = self._forecast(payload)
                reply_to = payload.get("reply_to") or RESPONSE_TOPIC_PREFIX + str(payload.get("id"))
                try:
                    client.publish(reply_to, response)
                except (errors.RedfError, OSError):
                    client.close()
            client.close()

        t = threading.Thread(target=worker, daemon=True)
        t.start()
        self._workers.append(t)


def _connect(address: tuple[str, int], timeout: float) -> socket.socket:
    try:
        return socket.create_connection(address, timeout=timeout)
    except (ConnectionRefusedError, socket.gaierror, OSError) as exc:
        raise errors.ConnectError(f"cannot connect to {address[0]}:{address[1]}: {exc}") from exc


def _rpc(sock: socket.socket, request: dict) -> dict:
    """Send one frame and wait for the frame echoing its id."""
    send_frame(sock, request)
    while True:
        try:
            response = recv_frame(sock)
        except socket.timeout as exc:
            raise errors.TimeoutError("timed out waiting for response") from exc
        if response is None:
            raise errors.ProtocolError("server closed the connection")
        if response.get("id") == request["id"] or response.get("id") is None:
            return response


class BrokerClient:
    """Persistent connection to a broker for publish/fetch."""

    def __init__(self, address: tuple[str, int], timeout: float = 10.0):
        self.address = address
        self.timeout = timeout
        self._sock: socket.socket | None = None

    def _conn(self) -> socket.socket:
        if self._sock is None:
            self._sock = _connect(self.address, self.timeout)
        return self._sock

    def publish(self, topic: str, payload: Any) -> None:
        resp = _rpc(self._conn(), {"type": T_PUBLISH, "id": uuid.uuid4().hex,
                                   "topic": topic, "payload": payload})
        if resp.get("type") == T_ERROR:
            raise errors.ServerError(resp.get("code", "error"), resp.get("message", ""))

    def fetch(self, topic: str, timeout_ms: int = 0) -> Any | None:
        """Oldest message on the topic, or None if empty after the broker-side
        timeout."""
        sock = self._conn()
        sock.settimeout(self.timeout + timeout_ms / 1000.0)
        resp = _rpc(sock, {"type": T_FETCH, "id": uuid.uuid4().hex,
                           "topic": topic, "timeout_ms": timeout_ms})
        if resp.get("type") == T_ERROR:
            raise errors.ServerError(resp.get("code", "error"), resp.get("message", ""))
        if resp.get("empty"):
            return None
        return resp.get("payload")

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def __enter__(self) -> "BrokerClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def publish(address: tuple[str, int], topic: str, payload: Any, timeout: float = 10.0) -> None:
    with BrokerClient(address, timeout) as client:
        client.publish(topic, payload)


def fetch(address: tuple[str, int], topic: str, timeout_ms: int = 0,
          timeout: float = 10.0) -> Any | None:
    with BrokerClient(address, timeout) as client:
        return client.fetch(topic, timeout_ms)


def client_request(
    address: tuple[str, int],
    model: str,
    history: list[float] | np.ndarray,
    horizon: int = 1,
    timeout: float = 30.0,
    request_id: str | None = None,
) -> dict:
    """Forecast over a direct connection to a model server. Returns the
    FORECAST_RESP body; ERROR frames surface as ServerError."""
    req = {
        "type": T_FORECAST_REQ,
        "id": request_id or uuid.uuid4().hex,
        "model": model,
        "horizon": int(horizon),
        "history": [float(v) for v in np.asarray(history, dtype=np.float64)],
    }
    sock = _connect(address, timeout)
    try:
        sock.settimeout(timeout)
        resp = _rpc(sock, req)
    finally:
        sock.close()
    if resp.get("type") == T_ERROR:
        raise errors.ServerError(resp.get("code", "error"), resp.get("message", ""))
    if resp.get("type") != T_FORECAST_RESP:
        raise errors.ProtocolError(f"unexpected response type {resp.get('type')!r}")
    return resp


def client_request_via_broker(
    broker_address: tuple[str, int],
    model: str,
    history: list[float] | np.ndarray,
    horizon: int = 1,
    timeout: float = 30.0,
    request_id: str | None = None,
) -> dict:
    """Forecast routed through the broker: publish the request on the
    request topic, then poll the per-request reply topic."""
    req_id = request_id or uuid.uuid4().hex
    reply_to = RESPONSE_TOPIC_PREFIX + req_id
    payload = {
        "type": T_FORECAST_REQ,
        "id": req_id,
        "model": model,
        "horizon": int(horizon),
        "history": [float(v) for v in np.asarray(history, dtype=np.float64)],
        "reply_to": reply_to,
    }
    deadline = time.monotonic() + timeout
    with BrokerClient(broker_address, timeout) as client:
        client.publish(REQUEST_TOPIC, payload)
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise errors.TimeoutError(f"no response on {reply_to} within {timeout}s")
            resp = client.fetch(reply_to, timeout_ms=int(min(remaining, 0.25) * 1000))
            if resp is None:
                continue
            if isinstance(resp, dict) and resp.get("type") == T_ERROR:
                raise errors.ServerError(resp.get("code", "error"), resp.get("message", ""))
            return resp
