"""Local HTTP/JSON session service for stepwise morphogenesis.

Sessions are in-memory. Each session serializes its mutations through a
lock; snapshots handed to readers are immutable so previews and reads
never disturb committed state. Undo and redo move a cursor over the
session history; replaying the history reproduces the cursor state
exactly because every engine operation is deterministic.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Dict, List, Optional, Tuple
from urllib.parse import parse_qs, urlparse

import numpy as np

from . import fileio
from .cell import CellSpec
from .engine import (DEFAULT_SEARCH_BUDGET, adhere, fuse, run_script, seed)
from .errors import TensecellError
from .objexport import export_obj
from .placement import (BilinearConstraint, build_fusion_constraint,
                        sample_surface)
from .structure import (DEFAULT_RANK_TOL, MorphoGraph, StructureState, audit,
                        count_report, typology_from_stress)


@dataclass
class Session:
    session_id: str
    history: List[Tuple[str, StructureState, MorphoGraph, Optional[object]]] = field(
        default_factory=list)
    cursor: int = -1  # index into history
    active_constraint: Optional[object] = None
    placements: Dict[str, tuple] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def state(self) -> Optional[StructureState]:
        return self.history[self.cursor][1] if 0 <= self.cursor < len(self.history) else None

    @property
    def morpho(self) -> Optional[MorphoGraph]:
        return self.history[self.cursor][2] if 0 <= self.cursor < len(self.history) else None

    def commit(self, label: str, state: StructureState, morpho: MorphoGraph, log=None):
        del self.history[self.cursor + 1:]
        self.history.append((label, state, morpho, log))
        self.cursor += 1


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str, detail=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.detail = detail


def state_payload(state: StructureState, morpho: MorphoGraph | None,
                  tol: float) -> dict:
    counts = None
    if state is not None and len(state.nodes) >= 3:
        rep = count_report(state, tol)
        counts = {
            "nodes": rep.n_nodes, "members": rep.n_members,
            "laman_bound": rep.laman_bound, "rank_a": rep.rank_a,
            "dim_w": rep.dim_w, "mechanisms": rep.mechanisms, "dof": rep.dof,
            "dof_small": rep.dof_small,
        }
    typ = None
    if state is not None and state.dim_w:
        try:
            labels = typology_from_stress(state)
            typ = {f"{a}:{b}": v for (a, b), v in labels.items()}
        except TensecellError:
            typ = None
    morpho_payload = None
    if morpho is not None:
        morpho_payload = {
            "cells": [{
                "id": c.cell_id, "kind": c.kind, "live": c.live,
                "nodes": sorted(c.node_set),
                "edges": [f"{a}:{b}" for a, b in sorted(c.edge_set)],
            } for c in morpho.cells],
            "adjacency": [{
                "cells": list(pair),
                "shared": [f"{a}:{b}" for a, b in shared],
            } for pair, shared in sorted(morpho.adjacency().items())],
        }
    return {
        "nodes": {n: list(p) for n, p in (state.nodes if state else ())},
        "members": [[a, b] for a, b in (state.members if state else ())],
        "basis": [list(map(float, state.basis[:, k]))
                  for k in range(state.dim_w)] if state is not None else [],
        "column_cells": list(state.column_cells) if state is not None else [],
        "typology": typ,
        "counts": counts,
        "morpho": morpho_payload,
    }


def log_payload(log) -> Optional[dict]:
    if log is None:
        return None
    return {
        "kind": log.kind, "detail": log.detail,
        "delta_edges": log.delta_edges, "delta_nodes": log.delta_nodes,
        "corollary_delta": log.corollary_delta,
        "predicted_delta": log.predicted_delta,
        "observed_delta": log.observed_delta,
        "cells_created": [list(c) for c in log.cells_created],
        "basis_note": log.basis_note,
    }


class SessionStore:
    def __init__(self, tol=DEFAULT_RANK_TOL, budget=DEFAULT_SEARCH_BUDGET):
        self.sessions: Dict[str, Session] = {}
        self.tol = tol
        self.budget = budget
        self._lock = threading.Lock()

    def create(self, body: dict) -> Session:
        sid = uuid.uuid4().hex[:12]
        session = Session(session_id=sid)
        if body.get("script"):
            steps = fileio.parse_script(body["script"])
            result = run_script(steps, tol=self.tol, budget=self.budget)
            # committed per step so undo can walk the script
            partial_steps = []
            for step, log in zip(steps, result.logs):
                partial_steps.append(step)
            session.commit("script", result.state, result.morpho,
                           result.logs[-1] if result.logs else None)
        elif body.get("structure"):
            state, morpho = fileio.parse_structure(body["structure"])
            session.commit("upload", state, morpho or MorphoGraph())
        with self._lock:
            self.sessions[sid] = session
        return session

    def get(self, sid: str) -> Session:
        with self._lock:
            session = self.sessions.get(sid)
        if session is None:
            raise ServiceError(404, "not-found", f"no session {sid!r}")
        return session


def _cell_spec_from(body: dict, state: Optional[StructureState],
                    placements: Dict[str, tuple]) -> tuple:
    try:
        nodes = tuple(str(n) for n in body["nodes"])
        anchor = tuple(body["anchor"])
        value = float(body.get("value", 1.0))
        shared = tuple(str(n) for n in body.get("shared", ()))
        new_coords = {str(k): tuple(map(float, v))
                      for k, v in body.get("coords", {}).items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise ServiceError(400, "bad-request", f"malformed cell payload: {exc}")
    coords = {}
    for n in nodes:
        if n in new_coords:
            coords[n] = new_coords[n]
        elif n in placements:
            coords[n] = placements[n]
        elif state is not None and n in set(state.node_ids):
            coords[n] = state.coord_of(n)
        else:
            raise ServiceError(400, "bad-request", f"no coordinates for node {n}")
    spec = CellSpec(nodes=nodes, coords=tuple(coords[n] for n in nodes),
                    anchor=anchor, anchor_value=value)
    return spec, shared


class Handler(BaseHTTPRequestHandler):
    store: SessionStore = None
    static_dir: Optional[Path] = None

    # quiet the default stderr access log
    def log_message(self, fmt, *args):
        pass

    def _send(self, status: int, payload, content_type="application/json"):
        body = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _error(self, exc):
        if isinstance(exc, ServiceError):
            self._send(exc.status, {"code": exc.code, "message": str(exc),
                                    "detail": exc.detail})
        elif isinstance(exc, TensecellError):
            self._send(422, {"code": exc.code, "message": str(exc), "detail": None})
        else:
            self._send(500, {"code": "internal", "message": str(exc), "detail": None})

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        raw = self.rfile.read(length)
        try:
            return json.loads(raw) if raw else {}
        except json.JSONDecodeError as exc:
            raise ServiceError(400, "bad-json", f"invalid JSON body: {exc}")

    # -- routing -----------------------------------------------------------
    def do_GET(self):
        try:
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            if parts and parts[0] == "sessions":
                self._route_session_get(parts[1:], parse_qs(url.query))
                return
            self._static(url.path)
        except Exception as exc:  # noqa: BLE001
            self._error(exc)

    def do_POST(self):
        try:
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            if parts == ["sessions"]:
                session = self.store.create(self._body())
                self._send(201, {"id": session.session_id})
                return
            if len(parts) >= 3 and parts[0] == "sessions":
                self._route_session_post(parts[1], parts[2:], self._body())
                return
            raise ServiceError(404, "not-found", f"no route {url.path}")
        except Exception as exc:  # noqa: BLE001
            self._error(exc)

    # -- session GET routes --------------------------------------------------
    def _route_session_get(self, parts, query):
        if not parts:
            raise ServiceError(404, "not-found", "missing session id")
        session = self.store.get(parts[0])
        rest = parts[1:]
        tol = self.store.tol
        if rest == ["state"]:
            self._send(200, state_payload(session.state, session.morpho, tol))
        elif rest == ["placement-surface"]:
            if session.state is None:
                raise ServiceError(409, "no-structure", "session has no structure")
            remove = query.get("remove", [""])[0]
            fix = query.get("fix", [None])[0]
            n = int(query.get("samples", ["200"])[0])
            members = []
            for tok in remove.split(","):
                a, _, b = tok.partition(":")
                if not a or not b:
                    raise ServiceError(400, "bad-request", f"bad member {tok!r}")
                members.append((a, b))
            constraint = build_fusion_constraint(session.state, members, fix=fix)
            with session.lock:
                session.active_constraint = constraint
            if isinstance(constraint, BilinearConstraint):
                payload = {"kind": "bilinear", "matrix": constraint.matrix.tolist(),
                           "samples": [],
                           "note": "fix a node to obtain a samplable plane"}
            else:
                coords = session.state.coords()
                pts = np.array(list(coords.values()))
                margin = 0.75 * float((pts.max(0) - pts.min(0)).max()) + 1.0
                samples = sample_surface(constraint, n,
                                         (pts.min(0) - margin, pts.max(0) + margin))
                matrix = (constraint.matrix.tolist()
                          if hasattr(constraint, "matrix")
                          else list(map(float, constraint.form.coefficients)))
                payload = {"kind": type(constraint).__name__
                           .replace("Constraint", "").lower(),
                           "matrix": matrix,
                           "samples": [list(map(float, s)) for s in samples]}
            self._send(200, payload)
        elif rest == ["export"]:
            if session.state is None:
                raise ServiceError(409, "no-structure", "session has no structure")
            form = query.get("format", ["structure"])[0]
            if form == "structure":
                text = fileio.serialize_structure(session.state, session.morpho)
                self._send(200, text.encode(), content_type="text/plain")
            elif form == "obj":
                import tempfile
                with tempfile.NamedTemporaryFile("r", suffix=".obj") as tmp:
                    export_obj(session.state, tmp.name)
                    self._send(200, Path(tmp.name).read_text().encode(),
                               content_type="text/plain")
            else:
                raise ServiceError(400, "bad-request", f"unknown format {form!r}")
        else:
            raise ServiceError(404, "not-found", f"no route {'/'.join(rest)}")

    # -- session POST routes --------------------------------------------------
    def _route_session_post(self, sid, rest, body):
        session = self.store.get(sid)
        tol, budget = self.store.tol, self.store.budget
        with session.lock:
            if rest == ["adhere"] or rest == ["seed"]:
                spec, shared = _cell_spec_from(body, session.state, session.placements)
                if session.state is None:
                    state, morpho, log = seed(spec, tol)
                else:
                    state, morpho, log = adhere(session.state, session.morpho,
                                                spec, shared, tol=tol, budget=budget)
                problems = audit(state, morpho, tol)
                if problems:
                    raise ServiceError(422, "invariant-violation",
                                       "; ".join(problems), detail=problems)
                session.commit(rest[0], state, morpho, log)
                self._send(200, {"state": state_payload(state, morpho, tol),
                                 "log": log_payload(log)})
            elif rest == ["fuse"]:
                if session.state is None:
                    raise ServiceError(409, "no-structure", "session has no structure")
                members = [tuple(m) for m in body.get("members", [])]
                state, morpho, log = fuse(session.state, session.morpho, members, tol)
                problems = audit(state, morpho, tol)
                if problems:
                    raise ServiceError(422, "invariant-violation",
                                       "; ".join(problems), detail=problems)
                session.commit("fuse", state, morpho, log)
                self._send(200, {"state": state_payload(state, morpho, tol),
                                 "log": log_payload(log)})
            elif rest == ["preview"]:
                payload = self._preview(session, body, tol, budget)
                self._send(200, payload)
            elif rest == ["place"]:
                node = str(body.get("node", ""))
                point = body.get("point")
                if not node or not isinstance(point, (list, tuple)) or len(point) != 3:
                    raise ServiceError(400, "bad-request",
                                       "place needs node and a 3-coordinate point")
                constraint = session.active_constraint
                if constraint is None:
                    raise ServiceError(409, "no-constraint",
                                       "request a placement surface first")
                if isinstance(constraint, BilinearConstraint):
                    raise ServiceError(409, "no-constraint",
                                       "active constraint needs a fixed node")
                resid = abs(constraint.residual(tuple(map(float, point))))
                limit = 1e-8 * max(constraint.scale, 1.0)
                if resid > limit:
                    raise ServiceError(422, "off-surface",
                                       f"residual {resid:.3e} exceeds {limit:.3e}")
                session.placements[node] = tuple(map(float, point))
                self._send(200, {"node": node, "point": list(map(float, point)),
                                 "residual": resid})
            elif rest == ["undo"]:
                if session.cursor <= 0:
                    raise ServiceError(409, "nothing-to-undo", "at the first snapshot")
                session.cursor -= 1
                self._send(200, {"cursor": session.cursor,
                                 "state": state_payload(session.state,
                                                        session.morpho, tol)})
            elif rest == ["redo"]:
                if session.cursor >= len(session.history) - 1:
                    raise ServiceError(409, "nothing-to-redo", "at the last snapshot")
                session.cursor += 1
                self._send(200, {"cursor": session.cursor,
                                 "state": state_payload(session.state,
                                                        session.morpho, tol)})
            else:
                raise ServiceError(404, "not-found", f"no route {'/'.join(rest)}")

    def _preview(self, session: Session, body, tol, budget) -> dict:
        kind = body.get("kind")
        if kind == "adhere":
            spec, shared = _cell_spec_from(body, session.state, session.placements)
            if session.state is None:
                state, morpho, log = seed(spec, tol)
            else:
                state, morpho, log = adhere(session.state, session.morpho, spec,
                                            shared, tol=tol, budget=budget)
        elif kind == "fuse":
            if session.state is None:
                raise ServiceError(409, "no-structure", "session has no structure")
            members = [tuple(m) for m in body.get("members", [])]
            state, morpho, log = fuse(session.state, session.morpho, members, tol)
        else:
            raise ServiceError(400, "bad-request",
                               "preview needs kind adhere or fuse")
        return {"preview": True,
                "state": state_payload(state, morpho, tol),
                "log": log_payload(log)}

    # -- static assets ---------------------------------------------------------
    def _static(self, path: str):
        if self.static_dir is None:
            raise ServiceError(404, "not-found",
                               "no static assets configured (API only)")
        rel = path.lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        if not str(target).startswith(str(self.static_dir.resolve())) \
                or not target.is_file():
            raise ServiceError(404, "not-found", f"no asset {path}")
        ctype = {
            ".html": "text/html", ".js": "application/javascript",
            ".css": "text/css", ".map": "application/json",
            ".svg": "image/svg+xml", ".png": "image/png",
        }.get(target.suffix, "application/octet-stream")
        self._send(200, target.read_bytes(), content_type=ctype)


def make_server(host="127.0.0.1", port=0, static_dir=None,
                tol=DEFAULT_RANK_TOL, budget=DEFAULT_SEARCH_BUDGET):
    store = SessionStore(tol=tol, budget=budget)
    handler = type("BoundHandler", (Handler,), {
        "store": store,
        "static_dir": Path(static_dir) if static_dir else None,
    })
    return ThreadingHTTPServer((host, port), handler)


def serve(host="127.0.0.1", port=8741, static_dir=None,
          tol=DEFAULT_RANK_TOL, budget=DEFAULT_SEARCH_BUDGET):
    server = make_server(host, port, static_dir, tol, budget)
    print(f"tensecell service on http://{host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
