"""Local-socket request/response API over the loop service.

Plain HTTP with JSON text bodies on localhost; the browser client and the
harness both speak this surface. Permissive CORS headers are sent so a UI
served from a dev server can reach the API directly.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .engine import AggregationSpec, ScoreHistogram
from .features import FeatureError
from .raw_store import RowOutOfRange
from .service import (
    ColdStartError,
    LoopService,
    NoModelError,
    SampleRequest,
    UnknownRow,
    UnknownSession,
)

_SESSION_ROUTE = re.compile(r"^/sessions/([^/]+)/([a-z]+)(?:/(\d+))?$")
_ITEM_ROUTE = re.compile(r"^/items/(\d+)$")

_BAD_REQUEST = (
    ValueError,
    KeyError,
    ColdStartError,
    NoModelError,
    FeatureError,
    UnknownRow,
    RowOutOfRange,
)


class ApiHandler(BaseHTTPRequestHandler):
    service: LoopService  # bound by make_server
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default
        pass

    # -- plumbing ---------------------------------------------------------

    def _send(self, status: int, payload) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self._cors()
        self.end_headers()
        self.wfile.write(body)

    def _send_text(self, status: int, text: str) -> None:
        body = text.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "text/plain; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self._cors()
        self.end_headers()
        self.wfile.write(body)

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        return json.loads(self.rfile.read(length))

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    # -- routing ----------------------------------------------------------

    def do_GET(self):
        url = urlparse(self.path)
        query = {k: v[0] for k, v in parse_qs(url.query).items()}
        try:
            self._route_get(url.path, query)
        except UnknownSession as exc:
            self._send(404, {"error": str(exc)})
        except _BAD_REQUEST as exc:
            self._send(400, {"error": str(exc)})

    def _route_get(self, path: str, query: dict) -> None:
        service = self.service
        if path == "/search":
            k = int(query.get("k", 10))
            self._send(200, {"results": service.search(query.get("q", ""), k)})
            return
        if path == "/engine/stats":
            self._send(200, service.engine.stats())
            return
        item = _ITEM_ROUTE.match(path)
        if item:
            row_id = int(item.group(1))
            self._send(200, service.item(row_id, session_id=query.get("session")))
            return
        m = _SESSION_ROUTE.match(path)
        if m:
            session_id, action, arg = m.groups()
            if action == "status":
                self._send(200, service.status(session_id))
            elif action == "metrics":
                self._send(200, {"history": service.metrics_history(session_id)})
            elif action == "review":
                items = service.review(
                    session_id,
                    which=query.get("filter", "all"),
                    sort_key=query.get("sort", "score"),
                    threshold=float(query.get("threshold", 0.5)),
                )
                self._send(200, {"items": items})
            elif action == "export" and arg is not None:
                self._send_text(200, service.export_model(session_id, int(arg)))
            elif action == "histogram":
                session = service.sessions.get(session_id)
                if session is None:
                    raise UnknownSession(session_id)
                bins = int(query.get("bins", 20))
                result = service.engine.aggregate(
                    AggregationSpec(ScoreHistogram(session.score_column, bins=bins))
                )
                self._send(
                    200,
                    {
                        "bins": bins,
                        "counts": [int(c) for c in result.value],
                        "coverage": result.coverage,
                    },
                )
            else:
                self._send(404, {"error": f"no such endpoint {path}"})
            return
        self._send(404, {"error": f"no such endpoint {path}"})

    def do_POST(self):
        url = urlparse(self.path)
        try:
            body = self._body()
            self._route_post(url.path, body)
        except UnknownSession as exc:
            self._send(404, {"error": str(exc)})
        except json.JSONDecodeError as exc:
            self._send(400, {"error": f"bad json: {exc}"})
        except _BAD_REQUEST as exc:
            self._send(400, {"error": str(exc)})

    def _route_post(self, path: str, body: dict) -> None:
        service = self.service
        if path == "/sessions":
            session_id = service.create_session(
                features=body.get("features") or [],
                split_ratio=float(body.get("split_ratio", 0.7)),
                retrain_threshold=int(body.get("retrain_threshold", 1)),
                session_id=body.get("session_id"),
            )
            self._send(201, {"session_id": session_id})
            return
        m = _SESSION_ROUTE.match(path)
        if m:
            session_id, action, _ = m.groups()
            if action == "labels":
                labels = [(int(l["row_id"]), l["label"]) for l in body["labels"]]
                result = service.submit_labels(
                    session_id, labels, source=body.get("source", "manual")
                )
                self._send(200, result)
            elif action == "sample":
                request = SampleRequest(
                    strategy=body["strategy"],
                    count=int(body.get("count", 10)),
                    lo=float(body.get("lo", 0.0)),
                    hi=float(body.get("hi", 1.0)),
                    query=body.get("query", ""),
                    exclude_labeled=bool(body.get("exclude_labeled", True)),
                    seed=body.get("seed"),
                )
                items = service.draw_sample(session_id, request)
                self._send(200, {"items": [i.to_dict() for i in items]})
            elif action == "features":
                result = service.feature_edit(
                    session_id, body["action"], body.get("feature") or body.get("name")
                )
                self._send(200, result)
            else:
                self._send(404, {"error": f"no such endpoint {path}"})
            return
        self._send(404, {"error": f"no such endpoint {path}"})


def make_server(service: LoopService, host: str = "127.0.0.1", port: int = 8351) -> ThreadingHTTPServer:
    handler = type("BoundApiHandler", (ApiHandler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)


def serve_in_thread(service: LoopService, host: str = "127.0.0.1", port: int = 0):
    """Start the API on a background thread; returns (server, base_url)."""
    server = make_server(service, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, f"http://{server.server_address[0]}:{server.server_address[1]}"
