"""HTTP service for annotation sessions: JSON API plus the static UI bundle.

Routes:
    GET  /api/session/{id}/next-pair?annotator=NAME   200 pair | 204 done
    POST /api/session/{id}/judgment                   201 | 404 | 409 | 422
    GET  /api/session/{id}/results                    aggregate + completion
    GET  /<static>                                    annotator UI files

Annotator-visible payloads never contain model identifiers; un-blinding
happens only in the aggregation.
"""

import json
import mimetypes
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import urlparse, parse_qs

from .evalsession import (
    EvalSession,
    EvalSessionError,
    DuplicateJudgmentError,
    InvalidChoiceError,
    Judgment,
    PairCompleteError,
    UnknownPairError,
)

DEFAULT_UI_DIR = os.path.join(os.path.dirname(__file__), "ui")


class SessionRegistry:
    """Lazily loads sessions from a root directory; one shared lock for loads."""

    def __init__(self, root):
        self.root = root
        self._sessions: dict[str, EvalSession] = {}
        self._lock = threading.Lock()

    def add(self, session: EvalSession):
        with self._lock:
            self._sessions[session.session_id] = session

    def get(self, session_id) -> EvalSession | None:
        with self._lock:
            if session_id in self._sessions:
                return self._sessions[session_id]
            path = os.path.join(self.root, session_id)
            if os.path.isfile(os.path.join(path, "session.json")):
                session = EvalSession.load(path)
                self._sessions[session_id] = session
                return session
        return None


class EvalServiceHandler(BaseHTTPRequestHandler):
    registry: SessionRegistry = None
    ui_dir: str = DEFAULT_UI_DIR

    def log_message(self, fmt, *args):  # silence default stderr chatter
        pass

    def _send_json(self, status, payload):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status, code, message=""):
        self._send_json(status, {"error": code, "message": message})

    def _session_or_404(self, session_id):
        session = self.registry.get(session_id)
        if session is None:
            self._send_error_json(404, "unknown_session", session_id)
        return session

    def do_GET(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        if len(parts) == 4 and parts[:2] == ["api", "session"]:
            session_id, action = parts[2], parts[3]
            session = self._session_or_404(session_id)
            if session is None:
                return
            if action == "next-pair":
                query = parse_qs(url.query)
                annotator = (query.get("annotator") or [""])[0]
                if not annotator:
                    return self._send_error_json(422, "missing_annotator")
                pair = session.next_pair(annotator)
                if pair is None:
                    self.send_response(204)
                    self.send_header("Content-Length", "0")
                    self.end_headers()
                    return
                payload = pair.public_view()
                payload["progress"] = session.progress(annotator)
                return self._send_json(200, payload)
            if action == "results":
                try:
                    majority = session.aggregate("majority").as_dict()
                    pooled = session.aggregate("pooled").as_dict()
                except EvalSessionError as err:
                    return self._send_error_json(409, err.code, str(err))
                return self._send_json(200, {
                    "majority": majority,
                    "pooled": pooled,
                    "completion": session.completion(),
                })
            return self._send_error_json(404, "unknown_endpoint", action)
        return self._serve_static(url.path)

    def do_POST(self):
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        if len(parts) == 4 and parts[:2] == ["api", "session"] and parts[3] == "judgment":
            session = self._session_or_404(parts[2])
            if session is None:
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                data = json.loads(self.rfile.read(length).decode("utf-8"))
                judgment = Judgment(
                    pair_id=str(data["pair_id"]),
                    annotator=str(data["annotator"]),
                    choice=str(data["choice"]),
                )
            except (ValueError, KeyError) as err:
                return self._send_error_json(422, "malformed_judgment", str(err))
            try:
                session.record(judgment)
            except InvalidChoiceError as err:
                return self._send_error_json(422, err.code, str(err))
            except (DuplicateJudgmentError, PairCompleteError) as err:
                return self._send_error_json(409, err.code, str(err))
            except UnknownPairError as err:
                return self._send_error_json(404, err.code, str(err))
            return self._send_json(201, {"ok": True})
        return self._send_error_json(404, "unknown_endpoint", url.path)

    def _serve_static(self, path):
        name = path.lstrip("/") or "index.html"
        full = os.path.normpath(os.path.join(self.ui_dir, name))
        if not full.startswith(os.path.normpath(self.ui_dir)) or not os.path.isfile(full):
            return self._send_error_json(404, "not_found", name)
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as f:
            body = f.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def make_server(sessions_root, port=0, ui_dir=None) -> ThreadingHTTPServer:
    """Build (but do not start) the threaded HTTP server."""
    handler = type("BoundHandler", (EvalServiceHandler,), {
        "registry": SessionRegistry(sessions_root),
        "ui_dir": ui_dir or DEFAULT_UI_DIR,
    })
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def serve_forever(sessions_root, port, ui_dir=None, log=print):
    server = make_server(sessions_root, port, ui_dir)
    host, actual_port = server.server_address
    if log:
        log(f"serving evaluation sessions from {sessions_root} on http://{host}:{actual_port}/")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
