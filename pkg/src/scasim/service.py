"""Interactive session host: fixed-rate engine loops, inbound pilot commands,
outbound telemetry streams, run persistence.

Wire surfaces:
  - duplex protocol on the base port: length-prefixed (4-byte big-endian) UTF-8 JSON
    messages with envelope {type, session, seq, payload};
  - HTTP on base port + 1 for batch operations (list/create sessions, fetch logs
    and reports), plus a WebSocket bridge at /ws/<session> speaking the same
    envelopes for browsers.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import queue
import socket
import socketserver
import struct
import threading
import time
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .engine import make_engine
from .errors import ConfigError, ScasimError
from .runlog import RunLog
from .scenarios import ScenarioConfig, build_named, report_from_log

FRAME_DECIMATION = 5  # 100 Hz engine -> 20 frames/s
SUBSCRIBER_QUEUE = 512

PILOT_COMMANDS = ("TakeOver", "Stick", "MuInput", "SeverityEstimate")


class Subscriber:
    def __init__(self):
        self.q: queue.Queue = queue.Queue(maxsize=SUBSCRIBER_QUEUE)
        self.dropped = False

    def offer(self, item) -> None:
        if self.dropped:
            return
        try:
            self.q.put_nowait(item)
        except queue.Full:
            self.dropped = True


class Session:
    """One engine, one loop thread, many subscribers."""

    def __init__(self, session_id: str, config: ScenarioConfig, pacing: float, out_dir: str):
        self.id = session_id
        self.config = config
        self.pacing = float(pacing)
        self.out_dir = out_dir
        self.engine = make_engine(config.data)
        self.family = config.family
        self.status = "idle"
        self.commands: queue.Queue = queue.Queue()
        self.subscribers: list[Subscriber] = []
        self.lock = threading.Lock()
        self.frame_seq = -1
        self._event_cursor = 0
        self._pause = threading.Event()
        self._pause.set()  # set = running allowed
        self._stop = False
        self._gcd_num = 0.0
        self._gcd_den = 0.0
        self._t_a1 = None
        if self.family == "sca2" and config.data.get("anomalies"):
            self._t_a1 = float(config.data["anomalies"][0]["t_a"])
        self.thread = threading.Thread(target=self._loop, name=f"session-{session_id}", daemon=True)
        self.persisted_paths = None

    # --- lifecycle ----------------------------------------------------------
    def start(self) -> None:
        self.status = "running"
        self.thread.start()

    def stop(self) -> None:
        self._stop = True
        self._pause.set()

    def subscribe(self) -> tuple[Subscriber, int]:
        sub = Subscriber()
        with self.lock:
            self.subscribers.append(sub)
            return sub, self.frame_seq

    def ingest(self, kind: str, value, reply) -> None:
        """Queue a command; replies are delivered from the loop thread after application."""
        if kind == "Pause":
            self._pause.clear()
            self.status = "paused" if self.status == "running" else self.status
            reply("Ack", {"applied_step": self.engine.step_index, "kind": kind})
            return
        if kind == "Resume":
            if self.status == "paused":
                self.status = "running"
            self._pause.set()
            reply("Ack", {"applied_step": self.engine.step_index, "kind": kind})
            return
        if kind not in PILOT_COMMANDS:
            reply("Error", {"message": f"unknown command kind {kind!r}"})
            return
        if self.status not in ("running", "paused"):
            reply("Error", {"message": f"session is {self.status}"})
            return
        self.commands.put((kind, value, time.monotonic(), reply))

    # --- loop ---------------------------------------------------------------
    def _loop(self) -> None:
        engine = self.engine
        dt = engine.dt
        start = time.monotonic()
        step0 = engine.step_index
        try:
            while not self._stop and self.status in ("running", "paused"):
                self._pause.wait()
                if self._stop:
                    break
                self._drain_commands()
                engine.step_once()
                self._emit_events()
                i = engine.step_index
                if (i - 1) % FRAME_DECIMATION == 0:
                    self._emit_frame(i - 1)
                if engine.status == "complete":
                    self.status = "complete"
                    break
                if engine.status == "faulted":
                    self.status = "faulted"
                    break
                if self.pacing > 0:
                    target = start + (i - step0) * dt * self.pacing
                    delay = target - time.monotonic()
                    if delay > 0:
                        time.sleep(delay)
        except ScasimError:
            self.status = "faulted"
        self._emit_events()
        self._finish()

    def _drain_commands(self) -> None:
        while True:
            try:
                kind, value, _t_receipt, reply = self.commands.get_nowait()
            except queue.Empty:
                return
            try:
                self.engine.apply_command(kind, value)
                reply("Ack", {"applied_step": self.engine.step_index, "kind": kind,
                              "value": value})
            except (ConfigError, ScasimError, ValueError) as exc:
                reply("Error", {"message": str(exc), "kind": kind})

    def _emit_events(self) -> None:
        events = self.engine.events
        while self._event_cursor < len(events):
            ev = events[self._event_cursor]
            self._event_cursor += 1
            self._broadcast({"type": "Event", "session": self.id, "seq": None, "payload": ev})

    def _frame_payload(self, i: int) -> dict:
        log = self.engine.log2d
        seq = i // FRAME_DECIMATION
        if self.family == "sca1":
            from . import kernels as K

            payload = {
                "t": round(i * self.engine.dt, 6),
                "cmd": [log[i, K.C1_MCMD]],
                "out": [log[i, K.C1_M]],
                "cfm": log[i, K.C1_C],
                "gcd": None,
                "active": int(log[i, K.C1_ACTIVE]),
                "kt": int(log[i, K.C1_KT]),
                "mu": None,
            }
        else:
            names = self.engine.column_names
            col = {n: j for j, n in enumerate(names)}
            k = self.engine.k
            t = i * self.engine.dt
            cmd = [log[i, col[f"r0_{j}"]] for j in range(k)]
            out = [log[i, col[f"y{j}"]] for j in range(k)]
            if self._t_a1 is not None and t > self._t_a1:
                err = sum((o - c) ** 2 for o, c in zip(out, cmd))
                den = sum(c * c for c in cmd)
                self._gcd_num += err
                self._gcd_den += den
            gcd = (self._gcd_num / self._gcd_den) ** 0.5 if self._gcd_den > 0 else None
            payload = {
                "t": round(t, 6),
                "cmd": cmd,
                "out": out,
                "cfm": log[i, col["c"]],
                "gcd": gcd,
                "active": 0,
                "kt": None,
                "mu": log[i, col["mu"]],
            }
        payload["seq"] = seq
        payload["delta"] = self.engine.cfg["autopilot"].get("delta") if self.family == "sca2" else None
        return payload

    def _emit_frame(self, i: int) -> None:
        payload = self._frame_payload(i)
        self.frame_seq = payload["seq"]
        self._broadcast({"type": "Frame", "session": self.id, "seq": payload["seq"],
                         "payload": payload})

    def _broadcast(self, message: dict) -> None:
        with self.lock:
            subs = list(self.subscribers)
        for sub in subs:
            sub.offer(message)
        with self.lock:
            self.subscribers = [s for s in self.subscribers if not s.dropped]

    def _finish(self) -> None:
        try:
            self.persist()
        except OSError:
            pass
        self._broadcast({"type": "Done", "session": self.id, "seq": None,
                         "payload": {"status": self.status}})

    # --- persistence ----------------------------------------------------------
    def persist(self, path_base: str | None = None) -> tuple[str, str]:
        if self.persisted_paths is not None and path_base is None:
            return self.persisted_paths
        log = self.engine.finish()
        report = report_from_log(log)
        base = path_base or os.path.join(self.out_dir, f"session-{self.id}")
        log_path = base + ".log.ndjson"
        rep_path = base + ".report.json"
        log.write(log_path)
        directory = os.path.dirname(os.path.abspath(rep_path))
        os.makedirs(directory, exist_ok=True)
        tmp = rep_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, rep_path)
        if path_base is None:
            self.persisted_paths = (log_path, rep_path)
        return log_path, rep_path

    def describe(self) -> dict:
        return {
            "id": self.id,
            "status": self.status,
            "family": self.family,
            "name": self.config.data.get("name"),
            "step": self.engine.step_index,
            "n_steps": self.engine.n_total,
            "pacing": self.pacing,
            "frame_seq": self.frame_seq,
        }


class SessionService:
    def __init__(self, out_dir: str = "runs", pacing: float = 1.0):
        self.out_dir = out_dir
        self.default_pacing = pacing
        self.sessions: dict[str, Session] = {}
        self.lock = threading.Lock()
        self._servers = []

    # --- session operations ---------------------------------------------------
    def start_session(self, config, pacing: float | None = None) -> str:
        if isinstance(config, str):
            config = build_named(config)
        elif isinstance(config, dict):
            config = ScenarioConfig(config)
        session_id = uuid.uuid4().hex[:12]
        session = Session(session_id, config, self.default_pacing if pacing is None else pacing,
                          self.out_dir)
        with self.lock:
            self.sessions[session_id] = session
        session.start()
        return session_id

    def get(self, session_id: str) -> Session:
        with self.lock:
            if session_id not in self.sessions:
                raise ConfigError(f"unknown session {session_id!r}")
            return self.sessions[session_id]

    def list_sessions(self) -> list[dict]:
        with self.lock:
            return [s.describe() for s in self.sessions.values()]

    def shutdown(self) -> None:
        for server in self._servers:
            try:
                server.shutdown()
            except Exception:
                pass
        with self.lock:
            sessions = list(self.sessions.values())
        for s in sessions:
            s.stop()
        for s in sessions:
            s.thread.join(timeout=2.0)
            try:
                s.persist()
            except OSError:
                pass

    # --- servers ----------------------------------------------------------------
    def serve_forever(self, port: int) -> None:
        proto = ThreadingTCPProtocolServer(("0.0.0.0", port), _ProtocolHandler)
        proto.service = self
        http = ThreadingHTTPServer(("0.0.0.0", port + 1), _HttpHandler)
        http.service = self
        self._servers = [proto, http]
        threads = [
            threading.Thread(target=proto.serve_forever, daemon=True),
            threading.Thread(target=http.serve_forever, daemon=True),
        ]
        for t in threads:
            t.start()
        print(f"scasim service: protocol on :{port}, http/ws on :{port + 1}")
        try:
            while True:
                time.sleep(0.5)
        finally:
            self.shutdown()


# --- length-prefixed JSON protocol ------------------------------------------------


def send_message(sock_file, message: dict) -> None:
    data = json.dumps(message).encode("utf-8")
    sock_file.write(struct.pack(">I", len(data)) + data)
    sock_file.flush()


def recv_message(sock_file):
    header = sock_file.read(4)
    if len(header) < 4:
        return None
    (length,) = struct.unpack(">I", header)
    if length > 64 * 1024 * 1024:
        raise ConfigError("message too large")
    data = sock_file.read(length)
    if len(data) < length:
        return None
    return json.loads(data.decode("utf-8"))


class ThreadingTCPProtocolServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class _ProtocolHandler(socketserver.StreamRequestHandler):
    """One duplex connection: reader loop here, writer pump thread for pushes."""

    def setup(self):
        super().setup()
        self.outbox: queue.Queue = queue.Queue(maxsize=SUBSCRIBER_QUEUE * 2)
        self.alive = True
        self.writer = threading.Thread(target=self._pump, daemon=True)
        self.writer.start()

    def _pump(self):
        while self.alive:
            try:
                message = self.outbox.get(timeout=0.25)
            except queue.Empty:
                continue
            try:
                send_message(self.wfile, message)
            except (OSError, ValueError):
                self.alive = False
                return

    def _push(self, message: dict) -> None:
        try:
            self.outbox.put_nowait(message)
        except queue.Full:
            self.alive = False

    def handle(self):
        service: SessionService = self.server.service
        attached: list[tuple[Session, Subscriber]] = []
        forwarders = []
        try:
            while self.alive:
                try:
                    msg = recv_message(self.rfile)
                except (ConfigError, json.JSONDecodeError):
                    self._push({"type": "Error", "session": None, "seq": None,
                                "payload": {"message": "malformed message"}})
                    break
                if msg is None:
                    break
                mtype = msg.get("type")
                seq = msg.get("seq")
                sid = msg.get("session")
                payload = msg.get("payload") or {}
                if mtype == "Hello":
                    self._push({"type": "Ack", "session": None, "seq": seq,
                                "payload": {"server": "scasim", "sessions": service.list_sessions()}})
                elif mtype == "StartSession":
                    try:
                        new_id = service.start_session(
                            payload.get("config") or payload.get("name"),
                            pacing=payload.get("pacing"),
                        )
                        self._push({"type": "Ack", "session": new_id, "seq": seq,
                                    "payload": service.get(new_id).describe()})
                    except (ConfigError, KeyError, TypeError) as exc:
                        self._push({"type": "Error", "session": None, "seq": seq,
                                    "payload": {"message": str(exc)}})
                elif mtype == "Command":
                    kind = payload.get("kind")
                    try:
                        session = service.get(sid)
                    except ConfigError as exc:
                        self._push({"type": "Error", "session": sid, "seq": seq,
                                    "payload": {"message": str(exc)}})
                        continue
                    if kind == "Attach":
                        sub, last_seq = session.subscribe()
                        attached.append((session, sub))
                        fwd = threading.Thread(target=self._forward, args=(sub,), daemon=True)
                        fwd.start()
                        forwarders.append(fwd)
                        self._push({"type": "Ack", "session": sid, "seq": seq,
                                    "payload": {"kind": "Attach", "last_seq": last_seq,
                                                **session.describe()}})
                    else:
                        def reply(rtype, rpayload, _seq=seq, _sid=sid):
                            self._push({"type": rtype, "session": _sid, "seq": _seq,
                                        "payload": rpayload})

                        session.ingest(kind, payload.get("value"), reply)
                else:
                    self._push({"type": "Error", "session": sid, "seq": seq,
                                "payload": {"message": f"unknown message type {mtype!r}"}})
        finally:
            self.alive = False
            for session, sub in attached:
                sub.dropped = True

    def _forward(self, sub: Subscriber) -> None:
        while self.alive and not sub.dropped:
            try:
                message = sub.q.get(timeout=0.25)
            except queue.Empty:
                continue
            self._push(message)

    def finish(self):
        self.alive = False
        super().finish()


# --- HTTP + WebSocket ---------------------------------------------------------

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


def ws_accept_key(key: str) -> str:
    digest = hashlib.sha1((key + WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def ws_encode_text(data: str) -> bytes:
    payload = data.encode("utf-8")
    n = len(payload)
    header = b"\x81"
    if n < 126:
        header += bytes([n])
    elif n < 65536:
        header += bytes([126]) + struct.pack(">H", n)
    else:
        header += bytes([127]) + struct.pack(">Q", n)
    return header + payload


def ws_read_frame(rfile):
    """Returns (opcode, payload bytes) or None on EOF/close."""
    head = rfile.read(2)
    if len(head) < 2:
        return None
    opcode = head[0] & 0x0F
    masked = head[1] & 0x80
    length = head[1] & 0x7F
    if length == 126:
        (length,) = struct.unpack(">H", rfile.read(2))
    elif length == 127:
        (length,) = struct.unpack(">Q", rfile.read(8))
    mask = rfile.read(4) if masked else b"\x00\x00\x00\x00"
    payload = bytearray(rfile.read(length))
    if masked:
        for i in range(len(payload)):
            payload[i] ^= mask[i % 4]
    if opcode == 0x8:
        return None
    return opcode, bytes(payload)


class _HttpHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        pass

    @property
    def service(self) -> SessionService:
        return self.server.service

    def _json(self, status: int, obj) -> None:
        data = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        if parts[:1] == ["ws"] and len(parts) == 2:
            self._websocket(parts[1])
            return
        if parts == ["sessions"]:
            self._json(200, self.service.list_sessions())
            return
        if len(parts) == 2 and parts[0] == "sessions":
            try:
                self._json(200, self.service.get(parts[1]).describe())
            except ConfigError as exc:
                self._json(404, {"error": str(exc)})
            return
        if len(parts) == 3 and parts[0] == "sessions":
            try:
                session = self.service.get(parts[1])
            except ConfigError as exc:
                self._json(404, {"error": str(exc)})
                return
            if session.status not in ("complete", "faulted"):
                self._json(409, {"error": f"session is {session.status}"})
                return
            log_path, rep_path = session.persist()
            if parts[2] == "log":
                with open(log_path, "rb") as fh:
                    data = fh.read()
                self.send_response(200)
                self.send_header("Content-Type", "application/x-ndjson")
                self.send_header("Content-Length", str(len(data)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(data)
            elif parts[2] == "report":
                with open(rep_path, "r", encoding="utf-8") as fh:
                    self._json(200, json.load(fh))
            else:
                self._json(404, {"error": "unknown resource"})
            return
        self._json(404, {"error": "unknown path"})

    def do_POST(self):
        parts = [p for p in self.path.split("?")[0].split("/") if p]
        length = int(self.headers.get("Content-Length") or 0)
        body = json.loads(self.rfile.read(length) or b"{}")
        if parts == ["sessions"]:
            try:
                sid = self.service.start_session(body.get("config") or body.get("name"),
                                                 pacing=body.get("pacing"))
                self._json(201, self.service.get(sid).describe())
            except (ConfigError, KeyError, TypeError) as exc:
                self._json(400, {"error": str(exc)})
            return
        if len(parts) == 3 and parts[0] == "sessions" and parts[2] == "command":
            try:
                session = self.service.get(parts[1])
            except ConfigError as exc:
                self._json(404, {"error": str(exc)})
                return
            result: dict = {}
            done = threading.Event()

            def reply(rtype, rpayload):
                result["type"] = rtype
                result["payload"] = rpayload
                done.set()

            session.ingest(body.get("kind"), body.get("value"), reply)
            done.wait(timeout=5.0)
            status = 200 if result.get("type") == "Ack" else 400
            self._json(status, result or {"error": "timeout"})
            return
        self._json(404, {"error": "unknown path"})

    # --- websocket bridge -----------------------------------------------------
    def _websocket(self, session_id: str) -> None:
        key = self.headers.get("Sec-WebSocket-Key")
        if self.headers.get("Upgrade", "").lower() != "websocket" or not key:
            self._json(400, {"error": "websocket upgrade required"})
            return
        try:
            session = self.service.get(session_id)
        except ConfigError as exc:
            self._json(404, {"error": str(exc)})
            return
        self.send_response(101, "Switching Protocols")
        self.send_header("Upgrade", "websocket")
        self.send_header("Connection", "Upgrade")
        self.send_header("Sec-WebSocket-Accept", ws_accept_key(key))
        self.end_headers()

        alive = {"up": True}
        wlock = threading.Lock()

        def push(message: dict) -> None:
            if not alive["up"]:
                return
            try:
                with wlock:
                    self.wfile.write(ws_encode_text(json.dumps(message)))
            except (OSError, ValueError):
                alive["up"] = False

        sub, last_seq = session.subscribe()
        push({"type": "Ack", "session": session_id, "seq": None,
              "payload": {"kind": "Attach", "last_seq": last_seq, **session.describe()}})

        def forward():
            while alive["up"] and not sub.dropped:
                try:
                    message = sub.q.get(timeout=0.25)
                except queue.Empty:
                    continue
                push(message)

        fwd = threading.Thread(target=forward, daemon=True)
        fwd.start()
        try:
            while alive["up"]:
                frame = ws_read_frame(self.rfile)
                if frame is None:
                    break
                opcode, payload = frame
                if opcode == 0x9:  # ping -> pong
                    with wlock:
                        self.wfile.write(b"\x8a" + bytes([len(payload)]) + payload)
                    continue
                if opcode != 0x1:
                    continue
                try:
                    msg = json.loads(payload.decode("utf-8"))
                except json.JSONDecodeError:
                    push({"type": "Error", "session": session_id, "seq": None,
                          "payload": {"message": "malformed message"}})
                    continue
                if msg.get("type") == "Command":
                    kind = (msg.get("payload") or {}).get("kind")
                    seq = msg.get("seq")

                    def reply(rtype, rpayload, _seq=seq):
                        push({"type": rtype, "session": session_id, "seq": _seq,
                              "payload": rpayload})

                    session.ingest(kind, (msg.get("payload") or {}).get("value"), reply)
                elif msg.get("type") == "Hello":
                    push({"type": "Ack", "session": session_id, "seq": msg.get("seq"),
                          "payload": session.describe()})
        finally:
            alive["up"] = False
            sub.dropped = True
