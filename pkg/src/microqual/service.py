"""HTTP interface for scoring, retrieval, store management, and tree runs.

Single-process service over the file-backed store. Reads run against
snapshots; writes are serialized by the store's writer lock and, when a
data directory is configured, persisted after each mutation. Every scoring
response embeds the exact config used so results are reproducible from the
response alone.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__
from .core import (
    DuplicateIdError,
    EmbeddingValidationError,
    FileFormatError,
    FusionConfig,
    MicroqualError,
    Space,
    UnresolvedReferenceError,
    ZScorePopulation,
)
from .fusion import compute_delta, hybrid_combine, zscore_single
from .kb import KnowledgeBase, criterion_from_doc, criterion_to_doc, format_interchange_line
from .retrieval import QueryDescriptor, cumulative_text_embedding, rank_by_text
from .similarity import cosine
from .tree import TreeConfig, evaluate_tree

ENV_PREFIX = "MICROQUAL_"


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8077
    data_dir: str | None = None
    adapter_url: str | None = None
    persist: bool = True
    default_fusion: FusionConfig = field(default_factory=FusionConfig)
    default_tree: TreeConfig = field(default_factory=TreeConfig)

    @classmethod
    def from_file(cls, path=None) -> "ServiceConfig":
        doc = {}
        if path:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        fusion = FusionConfig(**doc.get("default_fusion", {}))
        tree_doc = dict(doc.get("default_tree", {}))
        if "fusion" in tree_doc:
            tree_doc["fusion"] = FusionConfig(**tree_doc["fusion"])
        tree = TreeConfig(**tree_doc)
        cfg = cls(
            host=doc.get("host", "127.0.0.1"),
            port=int(doc.get("port", 8077)),
            data_dir=doc.get("data_dir"),
            adapter_url=doc.get("adapter_url"),
            persist=bool(doc.get("persist", True)),
            default_fusion=fusion,
            default_tree=tree,
        )
        # environment overrides win over the file
        cfg.host = os.environ.get(f"{ENV_PREFIX}HOST", cfg.host)
        cfg.port = int(os.environ.get(f"{ENV_PREFIX}PORT", cfg.port))
        cfg.data_dir = os.environ.get(f"{ENV_PREFIX}DATA_DIR", cfg.data_dir)
        cfg.adapter_url = os.environ.get(f"{ENV_PREFIX}ADAPTER_URL", cfg.adapter_url)
        return cfg


class ApiError(Exception):
    """Error carried to the wire as {code, message, detail?}."""

    STATUS = {
        "bad_request": 400,
        "not_found": 404,
        "conflict": 409,
        "unprocessable": 422,
        "internal": 500,
    }

    def __init__(self, code: str, message: str, detail=None):
        assert code in self.STATUS
        self.code = code
        self.message = message
        self.detail = detail
        super().__init__(message)

    def response(self) -> JSONResponse:
        body = {"code": self.code, "message": self.message}
        if self.detail is not None:
            body["detail"] = self.detail
        return JSONResponse(status_code=self.STATUS[self.code], content=body)


def _fusion_from_request(defaults: FusionConfig, body: dict) -> FusionConfig:
    kwargs = {
        "strategy": body.get("strategy", defaults.strategy),
        "weights": tuple(body.get("weights", defaults.weights)),
        "threshold": body.get("threshold", defaults.threshold),
        "sigma_convention": body.get("sigma_convention", defaults.sigma_convention),
        "zscore_population": body.get("zscore_population", ZScorePopulation.STORED_BASELINE),
    }
    try:
        return FusionConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ApiError("unprocessable", f"bad fusion config: {exc}") from None


def _config_doc(config: FusionConfig, batch_id: str) -> dict:
    return {
        "strategy": config.strategy.value,
        "weights": list(config.weights),
        "threshold": config.threshold,
        "sigma_convention": config.sigma_convention.value,
        "zscore_population": config.zscore_population.value,
        "population_batch_id": batch_id,
    }


def fetch_adapter_lines(adapter_url: str, payload: dict) -> str:
    """POST an extraction request to the adapter; returns interchange lines."""
    import urllib.error
    import urllib.request

    request = urllib.request.Request(
        adapter_url.rstrip("/") + "/extract",
        data=json.dumps(payload).encode("utf-8"),
        headers={"content-type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(request, timeout=60) as response:
            return response.read().decode("utf-8")
    except urllib.error.URLError as exc:
        raise ApiError("internal", f"embedding adapter unreachable: {exc}") from None


def create_app(config: ServiceConfig | None = None, kb: KnowledgeBase | None = None) -> FastAPI:
    config = config or ServiceConfig()
    if kb is None:
        kb = KnowledgeBase.load(config.data_dir) if config.data_dir else KnowledgeBase()

    app = FastAPI(title="microqual", version=__version__)
    app.state.kb = kb
    app.state.config = config

    def persist():
        if config.persist and config.data_dir:
            kb.save(config.data_dir)

    @app.exception_handler(ApiError)
    async def on_api_error(_request: Request, exc: ApiError):
        return exc.response()

    @app.exception_handler(MicroqualError)
    async def on_engine_error(_request: Request, exc: MicroqualError):
        if isinstance(exc, DuplicateIdError):
            return ApiError("conflict", str(exc)).response()
        if isinstance(exc, UnresolvedReferenceError):
            return ApiError("not_found", str(exc)).response()
        return ApiError("unprocessable", str(exc)).response()

    async def read_json(request: Request) -> dict:
        ctype = request.headers.get("content-type", "")
        if "application/json" not in ctype:
            raise ApiError("bad_request", f"expected application/json, got {ctype!r}")
        try:
            return json.loads(await request.body())
        except json.JSONDecodeError as exc:
            raise ApiError("bad_request", f"malformed JSON body: {exc.msg}") from None

    # ------------------------------------------------------------------

    @app.get("/health")
    async def health():
        return {
            "status": "ok",
            "version": __version__,
            "kb_snapshot_id": kb.snapshot().snapshot_id,
        }

    @app.post("/embeddings")
    async def post_embeddings(request: Request):
        ctype = request.headers.get("content-type", "")
        if not any(t in ctype for t in ("application/x-ndjson", "text/plain", "application/jsonlines")):
            raise ApiError(
                "bad_request", f"expected application/x-ndjson interchange lines, got {ctype!r}"
            )
        text = (await request.body()).decode("utf-8")
        try:
            result = kb.ingest_embedding_lines(text.splitlines())
        except FileFormatError as exc:
            if "duplicate" in str(exc):
                raise ApiError("conflict", str(exc)) from None
            raise ApiError("unprocessable", str(exc)) from None
        persist()
        return {"ingested": result.count, "warnings": list(result.warnings)}

    @app.get("/embeddings/{embedding_id}")
    async def get_embedding(embedding_id: str):
        snapshot = kb.snapshot()
        if embedding_id not in snapshot.embeddings:
            raise ApiError("not_found", f"unknown embedding id {embedding_id!r}")
        return json.loads(format_interchange_line(snapshot.embeddings[embedding_id]))

    @app.post("/labels")
    async def post_labels(request: Request):
        ctype = request.headers.get("content-type", "")
        if not any(t in ctype for t in ("text/csv", "text/plain")):
            raise ApiError("bad_request", f"expected text/csv, got {ctype!r}")
        text = (await request.body()).decode("utf-8")
        import io

        try:
            count = kb.load_label_rows(io.StringIO(text))
        except FileFormatError as exc:
            raise ApiError("unprocessable", str(exc)) from None
        persist()
        return {"loaded": count}

    @app.post("/samples")
    async def post_sample(request: Request):
        """Register a sample from pre-computed embeddings, or proxy extraction
        to the configured adapter. The service never runs model inference."""
        body = await read_json(request)
        sample_id = body.get("sample_id")
        if not sample_id:
            raise ApiError("bad_request", "missing field 'sample_id'")
        records = body.get("embeddings")
        if records:
            lines = []
            for record in records:
                record = dict(record)
                meta = dict(record.get("meta") or {})
                meta.setdefault("sample_id", sample_id)
                if body.get("image_ref"):
                    meta.setdefault("image_ref", body["image_ref"])
                record["meta"] = meta
                lines.append(json.dumps(record))
        else:
            if not config.adapter_url:
                raise ApiError(
                    "unprocessable",
                    "no embeddings supplied and no embedding adapter configured",
                )
            if not body.get("image_ref"):
                raise ApiError("bad_request", "missing field 'image_ref' for adapter extraction")
            models = body.get("models", ["clip", "flava"])
            lines = []
            for model in models:
                text = fetch_adapter_lines(
                    config.adapter_url,
                    {
                        "model": model,
                        "items": [{"id": sample_id, "image_ref": body["image_ref"]}],
                    },
                )
                lines.extend(ln for ln in text.splitlines() if ln.strip())
        try:
            result = kb.ingest_embedding_lines(lines)
        except FileFormatError as exc:
            if "duplicate" in str(exc):
                raise ApiError("conflict", str(exc)) from None
            raise ApiError("unprocessable", str(exc)) from None
        persist()
        snapshot = kb.snapshot()
        record = snapshot.samples.get(sample_id)
        return {
            "sample_id": sample_id,
            "ingested": result.count,
            "warnings": list(result.warnings),
            "embeddings": {f"{m}/{s.value}": eid for (m, s), eid in (record.embeddings if record else {}).items()},
            "kb_snapshot_id": snapshot.snapshot_id,
        }

    @app.get("/criteria/{criterion_id}")
    async def get_criterion(criterion_id: str):
        snapshot = kb.snapshot()
        if criterion_id not in snapshot.criteria:
            raise ApiError("not_found", f"unknown criterion id {criterion_id!r}")
        return criterion_to_doc(snapshot.criteria[criterion_id])

    @app.put("/criteria/{criterion_id}")
    async def put_criterion(criterion_id: str, request: Request):
        body = await read_json(request)
        body = {**body, "criterion_id": criterion_id}
        try:
            criterion = criterion_from_doc(body)
        except (KeyError, ValueError) as exc:
            raise ApiError("unprocessable", f"bad criterion: {exc}") from None
        try:
            kb.upsert_criterion(criterion)
        except UnresolvedReferenceError as exc:
            raise ApiError("unprocessable", str(exc)) from None
        persist()
        return criterion_to_doc(criterion)

    # ------------------------------------------------------------------

    @app.post("/qualify")
    async def qualify(request: Request):
        body = await read_json(request)
        snapshot = kb.snapshot()
        for key in ("criterion_id",):
            if key not in body:
                raise ApiError("bad_request", f"missing field {key!r}")
        criterion_id = body["criterion_id"]
        sample_id = body.get("sample_id")
        if sample_id is None:
            raise ApiError("bad_request", "missing field 'sample_id'")
        if criterion_id not in snapshot.criteria:
            raise ApiError("not_found", f"unknown criterion id {criterion_id!r}")
        if sample_id not in snapshot.samples:
            raise ApiError("not_found", f"unknown sample id {sample_id!r}")
        fusion_config = _fusion_from_request(app.state.config.default_fusion, body)
        text_model = body.get("text_model", "clip")
        image_model = body.get("image_model", "flava")
        variant = body.get("variant", "plain")

        references = snapshot.resolve_references(
            criterion_id, text_model=text_model, image_model=image_model, variant=variant
        )
        try:
            delta = compute_delta(snapshot, sample_id, references, text_model, image_model)
        except UnresolvedReferenceError as exc:
            raise ApiError("unprocessable", str(exc)) from None
        try:
            baseline = snapshot.baseline(criterion_id, text_model, image_model, references.variant)
        except UnresolvedReferenceError as exc:
            raise ApiError("unprocessable", f"missing baseline: {exc}") from None
        if body.get("baseline_batch_id") and body["baseline_batch_id"] != baseline.batch_id:
            raise ApiError(
                "unprocessable",
                f"requested baseline batch {body['baseline_batch_id']!r} not stored "
                f"(have {baseline.batch_id!r})",
            )
        z_text = zscore_single(delta.delta_text, baseline.stats.mu_text, baseline.stats.sigma_text)
        z_image = zscore_single(
            delta.delta_image, baseline.stats.mu_image, baseline.stats.sigma_image
        )
        combined = hybrid_combine(z_text, z_image, fusion_config)

        criterion = snapshot.criteria[criterion_id]
        pos_text, neg_text = criterion.prompt_pair(
            "color" if references.variant == "color" else "plain"
        )

        def nearest(side_ids):
            if not side_ids:
                return None
            query = snapshot.sample_embedding(sample_id, image_model, Space.VISION).vector
            best = None
            for sid in sorted(side_ids):
                try:
                    sim = cosine(
                        query, snapshot.sample_embedding(sid, image_model, Space.VISION).vector
                    )
                except MicroqualError:
                    continue
                if best is None or sim > best[1]:
                    best = (sid, sim)
            return {"sample_id": best[0], "similarity": best[1]} if best else None

        return {
            "sample_id": sample_id,
            "criterion_id": criterion_id,
            "delta_text": delta.delta_text,
            "delta_image": delta.delta_image,
            "z_text": z_text,
            "z_image": z_image,
            "combined": combined["combined"],
            "label": combined["label"],
            "threshold": fusion_config.threshold,
            "config": _config_doc(fusion_config, baseline.batch_id),
            "prompts": {"positive": pos_text, "negative": neg_text, "variant": references.variant},
            "nearest_positive": nearest(criterion.positive_image_ids),
            "nearest_negative": nearest(criterion.negative_image_ids),
            "warnings": list(references.warnings),
            "kb_snapshot_id": snapshot.snapshot_id,
        }

    @app.post("/qualify/tree")
    async def qualify_tree(request: Request):
        body = await read_json(request)
        snapshot = kb.snapshot()
        sample_id = body.get("sample_id")
        if sample_id is None:
            raise ApiError("bad_request", "missing field 'sample_id'")
        if sample_id not in snapshot.samples:
            raise ApiError("not_found", f"unknown sample id {sample_id!r}")
        defaults = app.state.config.default_tree
        try:
            tree_config = TreeConfig(
                order=tuple(body.get("order", defaults.order)),
                gate_criteria=frozenset(body.get("gate_criteria", defaults.gate_criteria)),
                stop_at_first_failure=body.get(
                    "stop_at_first_failure", defaults.stop_at_first_failure
                ),
                fusion=_fusion_from_request(defaults.fusion, body.get("fusion", {})),
                text_model=body.get("text_model", defaults.text_model),
                image_model=body.get("image_model", defaults.image_model),
                variant=body.get("variant", defaults.variant),
            )
        except ValueError as exc:
            raise ApiError("unprocessable", f"bad tree config: {exc}") from None
        unknown = [c for c in tree_config.order if c not in snapshot.criteria]
        if unknown:
            raise ApiError("unprocessable", f"unresolvable criteria in order: {unknown}")
        trace = evaluate_tree(sample_id, tree_config, snapshot=snapshot)
        doc = trace.to_doc()
        doc["kb_snapshot_id"] = snapshot.snapshot_id
        return doc

    @app.post("/retrieve")
    async def retrieve(request: Request):
        body = await read_json(request)
        snapshot = kb.snapshot()
        criteria = body.get("criteria") or []
        if not criteria:
            raise ApiError("bad_request", "missing field 'criteria'")
        model = body.get("model", "clip")
        variant = body.get("variant", "plain")
        cumulative = bool(body.get("cumulative", len(criteria) > 1))
        k = int(body.get("k", 5))
        if k <= 0:
            raise ApiError("unprocessable", f"k must be positive, got {k}")
        corpus = snapshot.vision_corpus(model)
        if not corpus:
            raise ApiError("unprocessable", f"no vision corpus for model {model!r}")
        try:
            if cumulative and len(criteria) > 1:
                query = cumulative_text_embedding(snapshot, criteria, variant, model)
            else:
                query = cumulative_text_embedding(snapshot, criteria[:1], variant, model)
        except UnresolvedReferenceError as exc:
            raise ApiError("not_found", str(exc)) from None
        descriptor = QueryDescriptor(
            criterion_ids=tuple(criteria),
            variant=variant,
            mode="cumulative" if cumulative else "individual",
        )
        try:
            result = rank_by_text(query, corpus, k=k, model_id=model, descriptor=descriptor)
        except EmbeddingValidationError as exc:
            raise ApiError("unprocessable", str(exc)) from None
        return {
            "query": {
                "criteria": list(descriptor.criterion_ids),
                "variant": descriptor.variant,
                "mode": descriptor.mode,
            },
            "model": model,
            "k": k,
            "ranked": [{"sample_id": sid, "similarity": sim} for sid, sim in result.ranked],
            "kb_snapshot_id": snapshot.snapshot_id,
        }

    return app


def run(config: ServiceConfig):  # pragma: no cover - exercised via `microqual serve`
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")
