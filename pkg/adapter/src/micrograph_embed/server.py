"""Optional HTTP micro-endpoint mirroring the CLI extract schema."""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from .backends import BackendError
from .extract import ExtractionJob, ImageInput, JobError, PromptInput, extract


def create_app(default_backend: str = "auto") -> FastAPI:
    app = FastAPI(title="micrograph-embed")

    @app.post("/extract")
    async def extract_endpoint(request: Request):
        try:
            body = json.loads(await request.body())
        except json.JSONDecodeError:
            return JSONResponse(status_code=400, content={"error": "malformed JSON body"})
        model = body.get("model")
        if model not in ("clip", "flava"):
            return JSONResponse(status_code=422, content={"error": f"bad model {model!r}"})
        inputs = []
        for entry in body.get("items", []):
            if "text" in entry:
                inputs.append(PromptInput(id=str(entry["id"]), text=str(entry["text"])))
            elif "image_ref" in entry:
                inputs.append(ImageInput(id=str(entry["id"]), path=str(entry["image_ref"])))
            else:
                return JSONResponse(
                    status_code=422, content={"error": "items need 'text' or 'image_ref'"}
                )
        with tempfile.TemporaryDirectory() as d:
            out = Path(d) / "out.jsonl"
            try:
                job = ExtractionJob(
                    model=model,
                    inputs=inputs,
                    output_path=str(out),
                    backend=body.get("backend", default_backend),
                    id_prefix=body.get("id_prefix", ""),
                )
                extract(job)
            except (JobError, BackendError, OSError) as exc:
                return JSONResponse(status_code=422, content={"error": str(exc)})
            return PlainTextResponse(out.read_text(encoding="utf-8"),
                                     media_type="application/x-ndjson")

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    return app
