"""Threshold-explorer HTTP service.

Serves the precomputed field and persistence diagram behind a small JSON
API, recomputing only the threshold-dependent mesh per request (cached).
All state is immutable after startup, so concurrent read-only requests
are safe.  CORS is open for the browser UI; static assets are served from
an optional directory at the root path.
"""

from __future__ import annotations

import json
import logging
import math
import os
from functools import lru_cache
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np

from .grid import VolumeFractionField
from .mesher import detect_pinches, extract_mesh, repair_mesh
from .persistence import PersistenceDiagram, betti_at

logger = logging.getLogger(__name__)


class ExplorerState:
    """Immutable precomputed pipeline state shared by all requests."""

    def __init__(self, field: VolumeFractionField, diagram: PersistenceDiagram,
                 geometry_name: str, antialias: str = "pinch",
                 conflict_policy: str = "separate", min_cells: int = 1):
        self.field = field
        self.diagram = diagram
        self.geometry_name = geometry_name
        self.antialias = antialias
        self.conflict_policy = conflict_policy
        self.min_cells = min_cells
        self._mesh_json = lru_cache(maxsize=64)(self._mesh_json_uncached)

    def meta(self) -> dict:
        g = self.field.grid
        return {
            "geometry": self.geometry_name,
            "dimension": g.dimension,
            "cell_size": g.cell_size,
            "samples": self.field.s,
            "extents": list(g.extents),
            "max_vf": self.field.max_value(),
        }

    def diagram_json(self) -> dict:
        pairs = [[dim, birth, (None if math.isinf(death) else death)]
                 for dim, birth, death in self.diagram.pairs]
        return {"pairs": pairs, "max_vf": self.field.max_value()}

    def betti_json(self, vf: float) -> dict:
        counts = betti_at(self.diagram, vf)
        out = {"vf": vf, "b0": counts[0], "b1": counts[1]}
        if len(counts) > 2:
            out["b2"] = counts[2]
        return out

    def _mesh_json_uncached(self, vf: float, antialias: bool) -> str:
        if self.field.dimension != 2:
            mesh = extract_mesh(self.field, vf)
            _, n = mesh.pre_repair_labels()
            return json.dumps({"vf": vf, "antialias": antialias,
                               "dimension": 3,
                               "cells": len(mesh.material_cells()),
                               "components": n})
        if antialias:
            mode = self.antialias if self.antialias != "off" else "pinch"
            mesh, report = repair_mesh(
                self.field, vf, conflict_policy=self.conflict_policy,
                join=mode == "full",
                min_cells=self.min_cells if mode == "full" else 1)
            pinch_list = [p.to_json() for p in report.pinches]
        else:
            mesh = extract_mesh(self.field, vf)
            pinch_list = [p.to_json() for p in detect_pinches(mesh)]
        verts: dict[tuple, int] = {}
        faces, provenance = [], []
        for _cell, _child, pts, tag in mesh.elements():
            face = []
            for p in pts:
                key = (round(float(p[0]), 12), round(float(p[1]), 12))
                face.append(verts.setdefault(key, len(verts)))
            faces.append(face)
            provenance.append(0 if tag == "grid" else 1)
        _, n = mesh.component_labels()
        coords = [list(k) for k, _ in sorted(verts.items(), key=lambda kv: kv[1])]
        return json.dumps({
            "vf": vf, "antialias": antialias, "dimension": 2,
            "vertices": coords, "faces": faces, "provenance": provenance,
            "components": n, "base_cells": int(np.count_nonzero(mesh.retained)),
            "pinches": pinch_list,
        })

    def mesh_json(self, vf: float, antialias: bool) -> str:
        return self._mesh_json(round(float(vf), 12), bool(antialias))


def make_handler(state: ExplorerState, ui_dir: str | None):
    class Handler(SimpleHTTPRequestHandler):
        def __init__(self, *args, **kwargs):
            super().__init__(*args, directory=ui_dir or os.getcwd(), **kwargs)

        def log_message(self, fmt, *args):
            logger.debug("http: " + fmt, *args)

        def end_headers(self):
            self.send_header("Access-Control-Allow-Origin", "*")
            super().end_headers()

        def _send_json(self, payload, status=200):
            body = payload if isinstance(payload, str) else json.dumps(payload)
            data = body.encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            url = urlparse(self.path)
            query = parse_qs(url.query)
            try:
                if url.path == "/meta":
                    return self._send_json(state.meta())
                if url.path == "/diagram":
                    return self._send_json(state.diagram_json())
                if url.path == "/betti":
                    vf = float(query.get("vf", ["0.5"])[0])
                    return self._send_json(state.betti_json(vf))
                if url.path == "/mesh":
                    vf = float(query.get("vf", ["0.5"])[0])
                    aa = query.get("antialias", ["false"])[0].lower() in ("1", "true")
                    return self._send_json(state.mesh_json(vf, aa))
            except (ValueError, KeyError) as exc:
                return self._send_json({"error": str(exc)}, status=400)
            if ui_dir:
                return super().do_GET()
            return self._send_json({"error": "not found"}, status=404)

    return Handler


def serve(state: ExplorerState, port: int, ui_dir: str | None = None):
    server = ThreadingHTTPServer(("127.0.0.1", port), make_handler(state, ui_dir))
    logger.info("serving on http://127.0.0.1:%d", port)
    return server
