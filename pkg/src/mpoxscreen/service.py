"""Loopback HTTP service exposing the screening pipeline.

API v1 surface:
  GET  /api/v1/health   liveness + model name
  GET  /api/v1/model    model metadata (class names, fingerprint, geometry)
  POST /api/v1/screen   multipart field `image` or JSON {"image_b64": ...}
  GET  /api/v1/cases    session case log, newest first
  POST /api/v1/cases    create a case or record an operator decision

All responses are JSON. Request bodies are capped at 10 MB (413 beyond).
Inference runs on the framework's bounded worker pool over one immutable
model; session-log appends serialize through a single lock.
"""

from __future__ import annotations

import base64
import binascii
import threading
from pathlib import Path

from fastapi import FastAPI, Request, UploadFile
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .imaging import ImageError
from .model_io import ModelContainer
from .screening import (
    DEFAULT_REVIEW_FLOOR,
    DEFAULT_THRESHOLD,
    CaseLogEntry,
    ScreeningError,
    ScreeningResult,
    SessionLog,
    screen_image,
)

MAX_BODY_BYTES = 10 * 1024 * 1024
API_PREFIX = "/api/v1"


def create_app(model: ModelContainer, session_log_path: str | Path,
               threshold: float = DEFAULT_THRESHOLD,
               review_floor: float = DEFAULT_REVIEW_FLOOR,
               static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="mpoxscreen service", docs_url=None, redoc_url=None,
                  openapi_url=None)
    log = SessionLog(path=session_log_path)
    log_lock = threading.Lock()

    @app.middleware("http")
    async def cap_body_size(request: Request, call_next):
        length = request.headers.get("content-length")
        if length is not None:
            try:
                if int(length) > MAX_BODY_BYTES:
                    return JSONResponse(
                        {"detail": f"request body exceeds {MAX_BODY_BYTES} bytes"},
                        status_code=413)
            except ValueError:
                return JSONResponse({"detail": "bad content-length"}, status_code=400)
        return await call_next(request)

    @app.get(f"{API_PREFIX}/health")
    def health():
        return {"status": "ok", "model_name": model.metadata.model_name}

    @app.get(f"{API_PREFIX}/model")
    def model_info():
        return model.describe()

    @app.post(f"{API_PREFIX}/screen")
    async def screen(request: Request, image: UploadFile | None = None):
        if image is not None:
            data = await image.read()
        else:
            content_type = request.headers.get("content-type", "")
            if not content_type.startswith("application/json"):
                return JSONResponse(
                    {"detail": "send multipart field 'image' or JSON {'image_b64': ...}"},
                    status_code=400)
            try:
                payload = await request.json()
                data = base64.b64decode(payload["image_b64"], validate=True)
            except (ValueError, KeyError, TypeError, binascii.Error) as e:
                return JSONResponse({"detail": f"bad image_b64 payload: {e}"},
                                    status_code=400)
        if len(data) > MAX_BODY_BYTES:
            return JSONResponse(
                {"detail": f"image exceeds {MAX_BODY_BYTES} bytes"}, status_code=413)
        try:
            result = screen_image(model, data, threshold=threshold,
                                  review_floor=review_floor)
        except (ImageError, ValueError) as e:
            return JSONResponse({"detail": str(e)}, status_code=400)
        return result.to_json_obj()

    @app.get(f"{API_PREFIX}/cases")
    def list_cases():
        entries = log.cases()
        entries.sort(key=lambda e: e.result.timestamp, reverse=True)
        return {"cases": [e.to_json_obj() for e in entries]}

    @app.post(f"{API_PREFIX}/cases")
    async def post_case(request: Request):
        try:
            payload = await request.json()
        except ValueError:
            return JSONResponse({"detail": "body must be JSON"}, status_code=400)
        case_id = payload.get("case_id")
        if not case_id:
            return JSONResponse({"detail": "case_id is required"}, status_code=400)

        with log_lock:
            try:
                if "result" in payload:
                    entry = CaseLogEntry(
                        case_id=str(case_id),
                        result=ScreeningResult.from_json_obj(payload["result"]),
                        operator_decision=str(
                            payload.get("operator_decision", "pending")),
                        notes=str(payload.get("notes", "")),
                    )
                    if entry.case_id in log.entries:
                        return JSONResponse(
                            {"detail": f"case_id '{entry.case_id}' already exists"},
                            status_code=409)
                    log.append(entry)
                else:
                    decision = payload.get("operator_decision")
                    if not decision:
                        return JSONResponse(
                            {"detail": "operator_decision is required for an update"},
                            status_code=400)
                    if str(case_id) not in log.entries:
                        return JSONResponse(
                            {"detail": f"unknown case_id '{case_id}'"}, status_code=404)
                    entry = log.update_decision(str(case_id), str(decision),
                                                str(payload.get("notes", "")))
            except (ScreeningError, KeyError, TypeError, ValueError) as e:
                return JSONResponse({"detail": str(e)}, status_code=400)
        return entry.to_json_obj()

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True),
                  name="ui")

    return app
