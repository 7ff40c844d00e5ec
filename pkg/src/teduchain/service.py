"""Live fundraiser node: HTTP API, peer transport, and the command loop.

Every mutation — an API request, a peer frame, a claim-window expiry, the
periodic mining sweep — is funneled into one worker thread that applies it
to the :class:`~teduchain.node.NodeCore`, so the live node honors the same
strict serialization the simulator does. Reads also travel through the
queue: a response always reflects every command accepted before it.

Peer messages ride length-prefixed frames over short-lived TCP
connections; failed sends are retried a few times and then logged and
dropped (the chain-request protocol recovers missed blocks later).
"""

from __future__ import annotations

import heapq
import json
import logging
import queue
import re
import socket
import socketserver
import struct
import threading
import time
from concurrent.futures import Future
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional

from .canonical import EncodingError, canonical_json_bytes
from .consensus import DecodeError, decode_message, encode_message
from .funding import FundingError, UnknownFundraiser, UnknownSponsor, UnknownStudent
from .ledger import LedgerError, NotFound
from .node import DiskStore, NodeConfig, NodeCore, NodeError
from .registry import RegistryConfig, RegistryError, UnknownAccount, UnknownApplication
from .funding import STATE_ACTIVE

log = logging.getLogger(__name__)

_NOT_FOUND_ERRORS = (
    UnknownAccount,
    UnknownApplication,
    UnknownSponsor,
    UnknownStudent,
    NotFound,
)
_BAD_REQUEST_ERRORS = (RegistryError, FundingError, LedgerError, NodeError, EncodingError)

_SEND_RETRIES = 3
_STOP = object()


class ApiError(Exception):
    def __init__(self, status: int, error_code: str, message: str):
        super().__init__(message)
        self.status = status
        self.error_code = error_code


def _classify(exc: Exception) -> ApiError:
    if isinstance(exc, ApiError):
        return exc
    if isinstance(exc, _NOT_FOUND_ERRORS):
        return ApiError(404, type(exc).__name__, str(exc))
    if isinstance(exc, UnknownFundraiser):
        return ApiError(404, type(exc).__name__, str(exc))
    if isinstance(exc, _BAD_REQUEST_ERRORS):
        return ApiError(400, type(exc).__name__, str(exc))
    log.exception("internal error")
    return ApiError(500, "InternalError", str(exc))


class NodeService:
    """Threads and sockets around one NodeCore."""

    def __init__(self, config: NodeConfig):
        self.config = config
        store = DiskStore(config.data_dir, config.outbox_dir)
        self.core = NodeCore(
            config.node_id,
            [p.node_id for p in config.peers],
            store=store,
            registry_config=RegistryConfig(
                min_score=config.min_score,
                max_income_cents=config.max_income_cents,
                benefit_percent_bp=config.benefit_percent_bp,
                benefit_period_months=config.benefit_period_months,
            ),
            records_csv=config.records_csv,
        )
        self.peer_addresses = {p.node_id: (p.host, p.port) for p in config.peers}
        self._commands: queue.Queue = queue.Queue()
        self._outgoing: queue.Queue = queue.Queue()
        self._timers: list[tuple[float, int, str, str]] = []
        self._timer_seq = 0
        self._threads: list[threading.Thread] = []
        self._httpd: Optional[ThreadingHTTPServer] = None
        self._peer_server: Optional[socketserver.ThreadingTCPServer] = None
        self._stopping = threading.Event()

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        self._httpd = ThreadingHTTPServer(
            (self.config.api_host, self.config.api_port), self._make_api_handler()
        )
        self._httpd.daemon_threads = True
        service = self

        class PeerHandler(socketserver.BaseRequestHandler):
            def handle(self):
                service._handle_peer_connection(self.request)

        self._peer_server = socketserver.ThreadingTCPServer(
            (self.config.peer_host, self.config.peer_port), PeerHandler
        )
        self._peer_server.daemon_threads = True
        self._peer_server.allow_reuse_address = True

        for name, target in (
            ("worker", self._worker_loop),
            ("sender", self._sender_loop),
            ("api", self._httpd.serve_forever),
            ("peers", self._peer_server.serve_forever),
        ):
            thread = threading.Thread(target=target, name=f"{self.config.node_id}-{name}", daemon=True)
            thread.start()
            self._threads.append(thread)
        self._schedule_sweep()
        # Startup recovery may have queued claims already.
        self.submit(lambda: None).result(timeout=10)

    def stop(self) -> None:
        self._stopping.set()
        if self._httpd is not None:
            self._httpd.shutdown()
        if self._peer_server is not None:
            self._peer_server.shutdown()
        self._commands.put(_STOP)
        self._outgoing.put(_STOP)
        for thread in self._threads:
            thread.join(timeout=5)

    @property
    def api_port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def peer_port(self) -> int:
        return self._peer_server.server_address[1]

    # -- command stream --------------------------------------------------------

    def submit(self, fn: Callable, *args) -> Future:
        future: Future = Future()
        self._commands.put((fn, args, future))
        return future

    def _worker_loop(self) -> None:
        while not self._stopping.is_set():
            now = time.monotonic()
            while self._timers and self._timers[0][0] <= now:
                _, _, kind, payload = heapq.heappop(self._timers)
                self._run_timer(kind, payload)
            timeout = 0.1
            if self._timers:
                timeout = max(0.0, min(timeout, self._timers[0][0] - now))
            try:
                item = self._commands.get(timeout=timeout)
            except queue.Empty:
                continue
            if item is _STOP:
                break
            fn, args, future = item
            try:
                result = fn(*args)
            except Exception as exc:  # delivered to the caller, not fatal here
                future.set_exception(exc)
            else:
                future.set_result(result)
            self._drain_actions()

    def _run_timer(self, kind: str, payload: str) -> None:
        if kind == "window":
            self.core.window_expired(payload)
        elif kind == "sweep":
            for student_id, record in list(self.core.engine.students.items()):
                if record.state == STATE_ACTIVE:
                    self.core._maybe_claim(student_id)
            self._schedule_sweep()
        self._drain_actions()

    def _schedule_timer(self, delay_s: float, kind: str, payload: str = "") -> None:
        self._timer_seq += 1
        heapq.heappush(self._timers, (time.monotonic() + delay_s, self._timer_seq, kind, payload))

    def _schedule_sweep(self) -> None:
        self._schedule_timer(self.config.sweep_interval_ms / 1000.0, "sweep")

    def _drain_actions(self) -> None:
        for action in self.core.take_actions():
            if action[0] == "timer":
                self._schedule_timer(self.config.claim_window_ms / 1000.0, "window", action[1])
            else:
                _, peer, message = action
                self._outgoing.put((peer, encode_message(message)))

    # -- peer transport ------------------------------------------------------------

    def _sender_loop(self) -> None:
        while True:
            item = self._outgoing.get()
            if item is _STOP:
                break
            peer, frame = item
            address = self.peer_addresses.get(peer)
            if address is None:
                log.warning("%s: no address for peer %s", self.config.node_id, peer)
                continue
            for attempt in range(_SEND_RETRIES):
                try:
                    with socket.create_connection(address, timeout=5) as conn:
                        conn.sendall(frame)
                    break
                except OSError as exc:
                    if attempt + 1 == _SEND_RETRIES:
                        log.warning(
                            "%s: dropping frame to %s after %d attempts: %s",
                            self.config.node_id,
                            peer,
                            _SEND_RETRIES,
                            exc,
                        )
                    else:
                        time.sleep(0.1 * (attempt + 1))

    def _handle_peer_connection(self, conn: socket.socket) -> None:
        conn.settimeout(10)
        try:
            while True:
                header = self._recv_exact(conn, 4)
                if header is None:
                    return
                (size,) = struct.unpack(">I", header)
                body = self._recv_exact(conn, size)
                if body is None:
                    return
                try:
                    message = decode_message(header + body)
                except DecodeError as exc:
                    log.warning("%s: dropping bad frame: %s", self.config.node_id, exc)
                    return
                self.submit(self.core.handle_message, message)
        except OSError:
            return

    @staticmethod
    def _recv_exact(conn: socket.socket, size: int) -> Optional[bytes]:
        chunks = b""
        while len(chunks) < size:
            part = conn.recv(size - len(chunks))
            if not part:
                return None
            chunks += part
        return chunks

    # -- HTTP API ----------------------------------------------------------------------

    def _make_api_handler(self):
        service = self

        class ApiHandler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):
                log.debug("api %s " + fmt, service.config.node_id, *args)

            def _reply(self, status: int, payload: dict) -> None:
                data = canonical_json_bytes(payload) + b"\n"
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(data)

            def _body(self) -> dict:
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length) if length else b"{}"
                try:
                    obj = json.loads(raw.decode("utf-8")) if raw.strip() else {}
                except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                    raise ApiError(400, "BadRequest", f"body is not valid JSON: {exc}")
                if not isinstance(obj, dict):
                    raise ApiError(400, "BadRequest", "body must be a JSON object")
                return obj

            def _dispatch(self, method: str) -> None:
                try:
                    route = service._route(method, self.path)
                    if route is None:
                        raise ApiError(404, "NotFound", f"no route {method} {self.path}")
                    fn, needs_body = route
                    body = self._body() if needs_body else None
                    result = service.submit(fn, *( [body] if needs_body else [] )).result(timeout=15)
                    self._reply(200, result)
                except Exception as exc:
                    api_error = _classify(exc)
                    self._reply(
                        api_error.status,
                        {"error_code": api_error.error_code, "message": str(api_error)},
                    )

            def do_GET(self):
                self._dispatch("GET")

            def do_POST(self):
                self._dispatch("POST")

            def do_OPTIONS(self):
                self.send_response(204)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
                self.send_header("Access-Control-Allow-Headers", "Content-Type")
                self.send_header("Content-Length", "0")
                self.end_headers()

        return ApiHandler

    def _route(self, method: str, path: str):
        """Maps method+path to (callable, needs_body); None when unrouted."""
        core = self.core
        path = path.split("?", 1)[0].rstrip("/") or "/"
        routes = [
            ("POST", r"^/accounts$", lambda body: self._register_account(body), True),
            ("POST", r"^/applications$", lambda body: self._submit_application(body), True),
            (
                "POST",
                r"^/applications/(?P<app_id>[^/]+)/verify$",
                lambda m: (lambda body: core.verify_application(m["app_id"])),
                True,
            ),
            ("GET", r"^/students/active$", lambda: {"students": core.active_students_json()}, False),
            (
                "GET",
                r"^/students/(?P<sid>[^/]+)/status$",
                lambda m: (lambda: core.student_status_json(m["sid"])),
                False,
            ),
            (
                "POST",
                r"^/wallets/(?P<sponsor>[^/]+)/deposit$",
                lambda m: (lambda body: core.deposit(m["sponsor"], _int_field(body, "amount_cents"))),
                True,
            ),
            (
                "GET",
                r"^/wallets/(?P<sponsor>[^/]+)$",
                lambda m: (lambda: self._wallet_view(m["sponsor"])),
                False,
            ),
            ("POST", r"^/pledges$", lambda body: self._place_pledge(body), True),
            ("GET", r"^/chain$", lambda: {"blocks": core.chain_json()}, False),
            ("GET", r"^/chain/verify$", core.verify_json, False),
            (
                "GET",
                r"^/blocks/(?P<index>\d+)$",
                lambda m: (lambda: core.block_json(int(m["index"]))),
                False,
            ),
            (
                "GET",
                r"^/contracts/(?P<sid>[^/]+)$",
                lambda m: (lambda: core.contract_json(m["sid"])),
                False,
            ),
        ]
        for route_method, pattern, factory, needs_body in routes:
            if route_method != method:
                continue
            match = re.match(pattern, path)
            if match is None:
                continue
            if match.groupdict():
                return factory(match.groupdict()), needs_body
            return factory, needs_body
        return None

    # -- request bodies -------------------------------------------------------------------

    def _register_account(self, body: dict) -> dict:
        role = body.get("role")
        if not role:
            raise ApiError(400, "MissingField", "role is required")
        details = {k: v for k, v in body.items() if k != "role"}
        return self.core.register_account(role, details)

    def _submit_application(self, body: dict) -> dict:
        student_id = body.get("student_id")
        if not student_id:
            raise ApiError(400, "MissingField", "student_id is required")
        application = {k: v for k, v in body.items() if k != "student_id"}
        return self.core.submit_application(student_id, application)

    def _place_pledge(self, body: dict) -> dict:
        for key in ("sponsor_id", "student_id", "fundraiser_id"):
            if not body.get(key):
                raise ApiError(400, "MissingField", f"{key} is required")
        return self.core.place_pledge(
            body["sponsor_id"],
            body["student_id"],
            body["fundraiser_id"],
            _int_field(body, "amount_cents"),
        )

    def _wallet_view(self, sponsor_id: str) -> dict:
        wallet = self.core.wallet_json(sponsor_id)
        wallet["pledges"] = self.core.pledges_json(sponsor_id)
        return wallet


def _int_field(body: dict, key: str) -> int:
    value = body.get(key)
    if not isinstance(value, int) or isinstance(value, bool):
        raise ApiError(400, "MissingField", f"{key} must be an integer")
    return value


def run_node(config: NodeConfig) -> None:
    """CLI entry: serve until interrupted."""
    service = NodeService(config)
    service.start()
    log.info(
        "node %s serving API on %s:%s, peers on %s:%s",
        config.node_id,
        config.api_host,
        service.api_port,
        config.peer_host,
        service.peer_port,
    )
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
