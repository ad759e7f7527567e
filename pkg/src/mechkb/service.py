"""HTTP search API over a loaded KbIndex.

Endpoints: GET /search, GET /relation/{id}, GET /health. Query parameters
are parsed by hand so a malformed value yields a 400 naming the offending
field as {"error": {"code", "message", "field"}}. The index snapshot is
immutable, so request handling is freely concurrent.
"""

from __future__ import annotations

import os
import time

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .errors import InvalidQuery, ProviderUnavailable
from .index import KbIndex, SearchStats, search_threshold
from .schema import MechanismRelation, RelationClass, RelationQuery, ScoredResult

K_CAP = 1000

_CLASS_PARAM = {"direct": RelationClass.DIRECT, "indirect": RelationClass.INDIRECT}
_BOOL_PARAM = {"true": True, "1": True, "false": False, "0": False}


def _error(status: int, code: str, message: str, field: str | None = None) -> JSONResponse:
    body = {"error": {"code": code, "message": message}}
    if field is not None:
        body["error"]["field"] = field
    return JSONResponse(status_code=status, content=body)


def _bad_request(message: str, field: str) -> JSONResponse:
    return _error(400, "invalid_parameter", message, field)


def result_row(result: ScoredResult) -> dict:
    """Flat presentation of one scored relation for HTTP/CLI output.

    relation_id is a decimal string: 64-bit ids overflow JS numbers.
    arg1/arg2 carry the raw span text so clients can highlight them
    inside the sentence.
    """
    rel = result.relation
    prov = rel.provenance
    return {
        "score": result.score,
        "relation_id": str(rel.relation_id),
        "arg1": rel.arg1.raw,
        "arg2": rel.arg2.raw,
        "class": rel.relation_class.value,
        "confidence": rel.confidence,
        "sentence": prov.sentence,
        "title": prov.title,
        "url": prov.url,
        "doc_id": prov.doc_id,
        "sentence_index": prov.sentence_index,
    }


def relation_detail(rel: MechanismRelation) -> dict:
    return {
        "relation_id": str(rel.relation_id),
        "class": rel.relation_class.value,
        "confidence": rel.confidence,
        "arg1": rel.arg1.to_dict(),
        "arg2": rel.arg2.to_dict(),
        "provenance": rel.provenance.to_dict(),
    }


def set_index(app: FastAPI, index: KbIndex, provider) -> None:
    """Install the loaded index snapshot; flips /health from 503 to 200."""
    if provider.name != index.manifest["provider"]:
        raise InvalidQuery(
            f"provider {provider.name!r} does not match index provider "
            f"{index.manifest['provider']!r}"
        )
    app.state.index = index
    app.state.provider = provider


def create_app(
    index: KbIndex | None = None,
    provider=None,
    ui_dir: str | None = None,
) -> FastAPI:
    """App factory. The index may be installed later with set_index; until
    then /health and /search answer 503."""
    app = FastAPI(title="mechkb", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["GET"],
        allow_headers=["*"],
    )
    app.state.index = None
    app.state.provider = None
    if index is not None:
        set_index(app, index, provider)

    ui_dir = ui_dir or os.environ.get("MECHKB_UI_DIR")
    if ui_dir and os.path.isdir(ui_dir):
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    @app.get("/health")
    def health():
        idx: KbIndex | None = app.state.index
        if idx is None:
            return _error(503, "index_not_loaded", "index is not loaded yet")
        manifest = idx.manifest
        return {
            "status": "ok",
            "provider": app.state.provider.name,
            "index": {
                "format_version": manifest["format_version"],
                "dim": manifest["dim"],
                "built_at": manifest["built_at"],
                "counts": manifest["counts"],
            },
        }

    @app.get("/search")
    def search(request: Request):
        idx: KbIndex | None = app.state.index
        if idx is None:
            return _error(503, "index_not_loaded", "index is not loaded yet")
        params = request.query_params

        e1 = [v for v in params.getlist("e1") if v.strip()]
        if not e1:
            return _bad_request("at least one e1 value is required", "e1")
        e2 = [v for v in params.getlist("e2") if v.strip()]

        class_filter = None
        raw_class = params.get("class")
        if raw_class is not None:
            class_filter = _CLASS_PARAM.get(raw_class.lower())
            if class_filter is None:
                return _bad_request(
                    f"class must be 'direct' or 'indirect', got {raw_class!r}", "class"
                )

        k = 20
        raw_k = params.get("k")
        if raw_k is not None:
            try:
                k = int(raw_k)
            except ValueError:
                return _bad_request(f"k must be an integer, got {raw_k!r}", "k")
            if k < 1:
                return _bad_request("k must be >= 1", "k")
        k = min(k, K_CAP)

        offset = 0
        raw_offset = params.get("offset")
        if raw_offset is not None:
            try:
                offset = int(raw_offset)
            except ValueError:
                return _bad_request(f"offset must be an integer, got {raw_offset!r}", "offset")
            if offset < 0:
                return _bad_request("offset must be >= 0", "offset")

        symmetric = False
        raw_symmetric = params.get("symmetric")
        if raw_symmetric is not None:
            if raw_symmetric.lower() not in _BOOL_PARAM:
                return _bad_request(
                    f"symmetric must be true or false, got {raw_symmetric!r}", "symmetric"
                )
            symmetric = _BOOL_PARAM[raw_symmetric.lower()]

        min_confidence = 0.9
        raw_conf = params.get("min_confidence")
        if raw_conf is not None:
            try:
                min_confidence = float(raw_conf)
            except ValueError:
                return _bad_request(
                    f"min_confidence must be a number, got {raw_conf!r}", "min_confidence"
                )
            if not 0.0 <= min_confidence <= 1.0:
                return _bad_request("min_confidence must be in [0,1]", "min_confidence")

        query = RelationQuery(
            e1_alternatives=tuple(e1),
            e2_alternatives=tuple(e2),
            class_filter=class_filter,
            k=k + offset,
            symmetric=symmetric,
            min_confidence=min_confidence,
        )
        stats = SearchStats()
        started = time.perf_counter()
        try:
            results = search_threshold(query, idx, app.state.provider, stats)
        except InvalidQuery as exc:
            field = "e2" if str(exc).startswith("e2") else "e1"
            return _bad_request(str(exc), field)
        except ProviderUnavailable as exc:
            return _error(503, "provider_unavailable", str(exc))
        took_ms = (time.perf_counter() - started) * 1000.0
        return {
            "results": [result_row(r) for r in results[offset : offset + k]],
            "took_ms": took_ms,
            "total_scanned": stats.rows_scored,
        }

    @app.get("/relation/{relation_id}")
    def relation(relation_id: str):
        idx: KbIndex | None = app.state.index
        if idx is None:
            return _error(503, "index_not_loaded", "index is not loaded yet")
        if not relation_id.isdigit() or int(relation_id) >= 1 << 64:
            return _bad_request(
                "relation_id must be a decimal 64-bit integer", "relation_id"
            )
        row = idx.by_id.get(int(relation_id))
        if row is None:
            return _error(404, "not_found", f"no relation with id {relation_id}")
        return relation_detail(idx.relations[row])

    return app
