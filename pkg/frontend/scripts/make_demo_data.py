#!/usr/bin/env python3
"""Write synthetic demo inputs (interchange lines, labels, criteria) for console tests.

Standalone on purpose: the console and its tests talk to the engine only
through its CLI and HTTP API, so this seeder builds plain files instead of
importing the engine.
"""

import json
import sys
from pathlib import Path

import numpy as np

SAMPLES = [f"Sample {i}" for i in range(1, 13)]
CRITERIA = ["EA1", "EA2", "EA3", "EA4", "EA5", "EA6"]
CLIP_DIM, FLAVA_DIM = 8, 12


def unit(rng, dim):
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def line(id, model, space, vector, source, meta):
    vec = "[" + ", ".join(f"{x:.17g}" for x in vector) + "]"
    return (
        "{"
        + f'"id": {json.dumps(id)}, "model": {json.dumps(model)}, "space": {json.dumps(space)}, '
        + f'"dim": {len(vector)}, "vector": {vec}, "source": {json.dumps(source)}, '
        + f'"meta": {json.dumps(meta, sort_keys=True)}'
        + "}"
    )


def main():
    out_dir = Path(sys.argv[1])
    reference_criteria = Path(sys.argv[2])
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240613)

    lines = []
    for sid in SAMPLES:
        for model, dim in (("clip", CLIP_DIM), ("flava", FLAVA_DIM)):
            lines.append(
                line(
                    f"{model}.vision.{sid}", model, "vision", unit(rng, dim), "image",
                    {"sample_id": sid, "image_ref": f"images/{sid}.png",
                     "checkpoint": "demo", "pooling": "cls"},
                )
            )
    for cid in CRITERIA:
        for polarity in ("pos", "neg"):
            lines.append(
                line(
                    f"{cid}.{polarity}.plain", "clip", "text", unit(rng, CLIP_DIM), "prompt",
                    {"checkpoint": "demo", "pooling": "eot"},
                )
            )
    (out_dir / "embeddings.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")

    rows = ["sample,dilution,haz,reinforcement,porosity,dissolution,distribution"]
    for i, sid in enumerate(SAMPLES):
        rows.append(
            f"{sid},{'accept' if i % 2 == 0 else 'reject'},accept,"
            f"{'reject' if i == 5 else 'accept'},reject,accept,"
            f"{'accept' if i % 3 == 0 else 'reject'}"
        )
    (out_dir / "labels.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    doc = json.loads(reference_criteria.read_text(encoding="utf-8"))
    for criterion in doc["criteria"]:
        criterion["positive_image_ids"] = ["Sample 1", "Sample 2"]
        criterion["negative_image_ids"] = ["Sample 3", "Sample 4"]
    doc["labels"] = []
    doc["baselines"] = []
    (out_dir / "criteria.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"demo data written to {out_dir}")


if __name__ == "__main__":
    main()
