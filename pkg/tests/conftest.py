"""Shared fixtures: reference data paths and a synthetic demo store."""

from __future__ import annotations

import io
import json
import math
from pathlib import Path

import numpy as np
import pytest

from microqual import FusionConfig, KnowledgeBase, StoredBaseline, score_batch
from microqual.kb import format_interchange_line
from microqual.core import Embedding, Space

REPO_ROOT = Path(__file__).resolve().parent.parent
REFERENCE_DIR = REPO_ROOT / "data" / "reference"

CLIP_DIM = 8
FLAVA_DIM = 12
DEMO_SAMPLES = [f"Sample {i}" for i in range(1, 13)]
CRITERIA = ["EA1", "EA2", "EA3", "EA4", "EA5", "EA6"]


def unit(rng, dim):
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def interchange_line(id, model, space, vector, source, meta=None):
    e = Embedding(
        id=id,
        model_id=model,
        space=Space(space),
        dim=len(vector),
        vector=vector,
        meta={**(meta or {}), "source": source},
    )
    return format_interchange_line(e)


def demo_interchange_lines(rng=None) -> list:
    """Deterministic synthetic corpus: 12 samples x 2 models + prompt embeddings."""
    rng = rng or np.random.default_rng(20240613)
    lines = []
    for sid in DEMO_SAMPLES:
        for model, dim in (("clip", CLIP_DIM), ("flava", FLAVA_DIM)):
            lines.append(
                interchange_line(
                    f"{model}.vision.{sid}",
                    model,
                    "vision",
                    unit(rng, dim),
                    "image",
                    meta={"sample_id": sid, "image_ref": f"images/{sid}.png",
                          "checkpoint": "demo", "pooling": "cls"},
                )
            )
    for cid in CRITERIA:
        for polarity in ("pos", "neg"):
            lines.append(
                interchange_line(
                    f"{cid}.{polarity}.plain",
                    "clip",
                    "text",
                    unit(rng, CLIP_DIM),
                    "prompt",
                    meta={"checkpoint": "demo", "pooling": "eot",
                          "prompt_text": f"{cid} {polarity} prompt"},
                )
            )
    # one color-aware pair, for fallback tests
    for polarity in ("pos", "neg"):
        lines.append(
            interchange_line(
                f"EA1.{polarity}.color",
                "clip",
                "text",
                unit(rng, CLIP_DIM),
                "prompt",
                meta={"checkpoint": "demo", "pooling": "eot"},
            )
        )
    return lines


DEMO_LABELS_CSV = "\n".join(
    ["sample,dilution,haz,reinforcement,porosity,dissolution,distribution"]
    + [
        f"{sid},{'accept' if i % 2 == 0 else 'reject'},accept,"
        f"{'reject' if i == 5 else 'accept'},reject,accept,"
        f"{'accept' if i % 3 == 0 else 'reject'}"
        for i, sid in enumerate(DEMO_SAMPLES)
    ]
) + "\n"


def build_demo_kb() -> KnowledgeBase:
    kb = KnowledgeBase()
    kb.ingest_embedding_lines(demo_interchange_lines())
    kb.load_label_rows(io.StringIO(DEMO_LABELS_CSV))
    doc = json.loads((REFERENCE_DIR / "criteria.json").read_text(encoding="utf-8"))
    from microqual.kb import criterion_from_doc
    from dataclasses import replace

    for cdoc in doc["criteria"]:
        criterion = criterion_from_doc(cdoc)
        criterion = replace(
            criterion,
            positive_image_ids=frozenset({"Sample 1", "Sample 2"}),
            negative_image_ids=frozenset({"Sample 3", "Sample 4"}),
        )
        kb.upsert_criterion(criterion)
    return kb


def store_demo_baselines(kb: KnowledgeBase, criteria=CRITERIA) -> None:
    """Freeze batch stats over the demo corpus as per-criterion baselines."""
    snapshot = kb.snapshot()
    config = FusionConfig()
    for cid in criteria:
        table = score_batch(snapshot, DEMO_SAMPLES, cid, config)
        kb.store_baseline(
            StoredBaseline(
                criterion_id=cid,
                text_model="clip",
                image_model="flava",
                variant="plain",
                batch_id=table.batch_id,
                stats=table.population_stats,
            )
        )


@pytest.fixture()
def demo_kb():
    return build_demo_kb()


@pytest.fixture()
def demo_kb_with_baselines():
    kb = build_demo_kb()
    store_demo_baselines(kb)
    return kb


# ----------------------------------------------------------------------
# independent oracles: literal transcriptions, no engine code
# ----------------------------------------------------------------------

def oracle_mean(vectors):
    n = len(vectors)
    dim = len(vectors[0])
    return [sum(v[j] for v in vectors) / n for j in range(dim)]


def oracle_cosine(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    return dot / (na * nb)


def oracle_delta(query, positives, negatives):
    return oracle_cosine(query, oracle_mean(positives)) - oracle_cosine(
        query, oracle_mean(negatives)
    )


def oracle_zscores(values, ddof=0):
    n = len(values)
    mu = sum(values) / n
    var = sum((v - mu) ** 2 for v in values) / (n - ddof)
    sd = math.sqrt(var)
    if sd == 0.0:
        return [0.0] * n
    return [(v - mu) / sd for v in values]
