"""Extraction jobs: inputs in, interchange lines out.

Every emitted line follows the engine's embedding interchange schema:
{id, model, space, dim, vector, source, meta}. Vectors are unit-norm
within 1e-6 and printed at 17 significant digits; metadata records the
checkpoint, pooling, and preprocessing so any score downstream is
attributable to an exact pipeline. Output files are written atomically.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backends import BackendError, load_backend

UNIT_TOLERANCE = 1e-6


class JobError(ValueError):
    pass


@dataclass(frozen=True)
class ImageInput:
    id: str
    path: str


@dataclass(frozen=True)
class PromptInput:
    id: str
    text: str


@dataclass
class ExtractionJob:
    model: str
    inputs: list
    output_path: str
    backend: str = "auto"
    id_prefix: str = ""

    def __post_init__(self):
        ids = [i.id for i in self.inputs]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise JobError(f"duplicate input ids: {dupes}")
        if not self.inputs:
            raise JobError("job has no inputs")


def load_manifest(path) -> list:
    """Manifest: JSON list of {id, image} and/or {id, text} entries."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, dict):
        doc = doc.get("items", [])
    inputs = []
    for n, entry in enumerate(doc, start=1):
        if "id" not in entry:
            raise JobError(f"manifest entry {n} missing 'id'")
        if "image" in entry:
            inputs.append(ImageInput(id=str(entry["id"]), path=str(entry["image"])))
        elif "text" in entry:
            inputs.append(PromptInput(id=str(entry["id"]), text=str(entry["text"])))
        else:
            raise JobError(f"manifest entry {n} needs 'image' or 'text'")
    return inputs


def format_line(id, model, space, vector, source, meta) -> str:
    vec = "[" + ", ".join(f"{x:.17g}" for x in vector) + "]"
    return (
        "{"
        + f'"id": {json.dumps(id, ensure_ascii=False)}, '
        + f'"model": {json.dumps(model, ensure_ascii=False)}, '
        + f'"space": {json.dumps(space)}, '
        + f'"dim": {len(vector)}, '
        + f'"vector": {vec}, '
        + f'"source": {json.dumps(source)}, '
        + f'"meta": {json.dumps(meta, sort_keys=True, ensure_ascii=False)}'
        + "}"
    )


def _check_unit(vector, input_id):
    norm = float(np.linalg.norm(vector))
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise BackendError(f"{input_id}: vector norm {norm} outside unit tolerance")


def _write_atomic(path, lines):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            for line in lines:
                f.write(line + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def extract(job: ExtractionJob) -> int:
    """Run a job; returns the number of lines written."""
    backend = load_backend(job.backend, job.model)
    base_meta = {
        "checkpoint": backend.checkpoint,
        "pooling": backend.pooling,
        "preprocessing": backend.preprocessing,
    }
    lines = []
    for item in job.inputs:
        if isinstance(item, ImageInput):
            if not Path(item.path).is_file():
                raise JobError(f"{item.id}: unreadable image {item.path!r}")
            vector = backend.embed_image(item.path)
            _check_unit(vector, item.id)
            meta = {**base_meta, "image_ref": item.path, "sample_id": item.id}
            # namespace by model so jobs over the same samples with different
            # models land in one store without id collisions; the sample
            # linkage travels in meta.sample_id
            emitted_id = f"{job.id_prefix}{job.model}.vision.{item.id}"
            lines.append(format_line(emitted_id, job.model, "vision", vector, "image", meta))
        else:
            if not item.text.strip():
                raise JobError(f"{item.id}: empty prompt")
            vector = backend.embed_text(item.text)
            _check_unit(vector, item.id)
            meta = {**base_meta, "prompt_text": item.text}
            lines.append(
                format_line(job.id_prefix + item.id, job.model, "text", vector, "prompt", meta)
            )
    _write_atomic(job.output_path, lines)
    return len(lines)


def criteria_prompts(criteria_path, variant: str) -> list:
    """PromptInputs for each criterion/polarity, ids {criterion}.{pos|neg}.{variant}.

    variant 'both' emits plain for every criterion plus color for the
    criteria that carry color-aware texts.
    """
    doc = json.loads(Path(criteria_path).read_text(encoding="utf-8"))
    criteria = doc.get("criteria", doc if isinstance(doc, list) else [])
    if not criteria:
        raise JobError(f"no criteria found in {criteria_path}")
    variants = ("plain", "color") if variant == "both" else (variant,)
    inputs = []
    for c in criteria:
        cid = c["criterion_id"]
        for v in variants:
            if v == "plain":
                pair = (c.get("positive_text"), c.get("negative_text"))
            else:
                pair = (c.get("color_aware_positive"), c.get("color_aware_negative"))
                if variant == "both" and (not pair[0] or not pair[1]):
                    continue
            for polarity, text in zip(("pos", "neg"), pair):
                if not text or not text.strip():
                    raise JobError(f"{cid}: empty {polarity} prompt for variant {v!r}")
                inputs.append(PromptInput(id=f"{cid}.{polarity}.{v}", text=text))
    return inputs


def extract_criteria(criteria_path, variant, model, output_path,
                     backend: str = "auto", id_prefix: str = "") -> int:
    job = ExtractionJob(
        model=model,
        inputs=criteria_prompts(criteria_path, variant),
        output_path=output_path,
        backend=backend,
        id_prefix=id_prefix,
    )
    return extract(job)
