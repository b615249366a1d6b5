"""File-backed store for embeddings, samples, criteria, labels, and baselines.

Persistence is plain files, sized for desk-scale datasets: a line-delimited
embedding interchange file, one knowledge document (criteria + labels +
baselines, schema version 1), and tabular score exports. Serialization is
canonical (stable ordering, 17-significant-digit vectors) so that
store -> serialize -> load -> serialize round-trips byte-identically.

Concurrency: copy-on-write. Every mutation builds a fresh state under the
writer lock; `snapshot()` hands out the current immutable state, so readers
never block and never observe partial writes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import threading
from dataclasses import dataclass, replace

from .core import (
    AssessmentCriterion,
    Embedding,
    FileFormatError,
    SampleRecord,
    Space,
    UnresolvedReferenceError,
    VALID_LABELS,
    l2_norm,
    validate_embedding,
    UNIT_NORM_TOLERANCE,
)
from .fusion import PopulationStats, ScoreTable
from .similarity import ReferenceEmbeddings, fuse_references

KNOWLEDGE_SCHEMA_VERSION = 1

# labels-file columns, in header order, mapped to criterion ids
LABEL_COLUMNS = {
    "dilution": "EA1",
    "haz": "EA2",
    "reinforcement": "EA3",
    "porosity": "EA4",
    "dissolution": "EA5",
    "distribution": "EA6",
}
LABELS_HEADER = ["sample", *LABEL_COLUMNS.keys()]


@dataclass(frozen=True)
class StoredBaseline:
    """Frozen z-score population for single-sample scoring."""

    criterion_id: str
    text_model: str
    image_model: str
    variant: str
    batch_id: str
    stats: PopulationStats

    @property
    def key(self) -> tuple:
        return (self.criterion_id, self.text_model, self.image_model, self.variant)


@dataclass(frozen=True)
class IngestResult:
    count: int
    warnings: tuple = ()


@dataclass(frozen=True)
class Snapshot:
    """Point-in-time consistent, immutable view of the store."""

    embeddings: dict
    samples: dict
    criteria: dict
    baselines: dict
    score_tables: tuple
    revision: int

    @property
    def snapshot_id(self) -> str:
        return f"r{self.revision}"

    def embedding(self, embedding_id: str) -> Embedding:
        try:
            return self.embeddings[embedding_id]
        except KeyError:
            raise UnresolvedReferenceError(f"unknown embedding id {embedding_id!r}") from None

    def sample(self, sample_id: str) -> SampleRecord:
        try:
            return self.samples[sample_id]
        except KeyError:
            raise UnresolvedReferenceError(f"unknown sample id {sample_id!r}") from None

    def criterion(self, criterion_id: str) -> AssessmentCriterion:
        try:
            return self.criteria[criterion_id]
        except KeyError:
            raise UnresolvedReferenceError(f"unknown criterion id {criterion_id!r}") from None

    def baseline(
        self, criterion_id: str, text_model: str, image_model: str, variant: str = "plain"
    ) -> StoredBaseline:
        key = (criterion_id, text_model, image_model, variant)
        try:
            return self.baselines[key]
        except KeyError:
            raise UnresolvedReferenceError(
                f"no stored baseline for criterion={criterion_id} "
                f"text_model={text_model} image_model={image_model} variant={variant}"
            ) from None

    def sample_embedding(self, sample_id: str, model_id: str, space: Space) -> Embedding:
        record = self.sample(sample_id)
        key = (model_id, Space(space))
        if key not in record.embeddings:
            raise UnresolvedReferenceError(
                f"sample {sample_id!r} has no ({model_id}, {Space(space).value}) embedding"
            )
        return self.embedding(record.embeddings[key])

    def vision_corpus(self, model_id: str) -> list:
        """(sample_id, vector) for every sample with a vision embedding, id-sorted."""
        corpus = []
        for sid in sorted(self.samples):
            record = self.samples[sid]
            key = (model_id, Space.VISION)
            if key in record.embeddings:
                corpus.append((sid, self.embedding(record.embeddings[key]).vector))
        return corpus

    def prompt_embedding(
        self, criterion_id: str, polarity: str, variant: str, model_id: str
    ) -> Embedding | None:
        """Prompt embedding by derived id, model-prefixed id first."""
        base = f"{criterion_id}.{polarity}.{variant}"
        for candidate in (f"{model_id}:{base}", base):
            e = self.embeddings.get(candidate)
            if e is not None and e.model_id == model_id and e.space == Space.TEXT:
                return e
        return None

    def resolve_references(
        self,
        criterion_id: str,
        text_model: str = "clip",
        image_model: str = "flava",
        variant: str = "plain",
    ) -> ReferenceEmbeddings:
        """Assemble fused reference means for a criterion.

        A requested color variant falls back to the plain prompt embeddings
        (with a warning) when no color-aware embeddings were ingested.
        Sides without stored references come back as None; whether that is
        an error depends on the scoring mode (see fusion.score_batch).
        """
        criterion = self.criterion(criterion_id)
        warnings = []

        effective_variant = variant
        pos_prompt = self.prompt_embedding(criterion_id, "pos", variant, text_model)
        neg_prompt = self.prompt_embedding(criterion_id, "neg", variant, text_model)
        if variant == "color" and (pos_prompt is None or neg_prompt is None):
            pos_prompt = self.prompt_embedding(criterion_id, "pos", "plain", text_model)
            neg_prompt = self.prompt_embedding(criterion_id, "neg", "plain", text_model)
            if pos_prompt is not None or neg_prompt is not None:
                effective_variant = "plain"
                warnings.append(
                    f"{criterion_id}: color-aware prompt embeddings absent; fell back to plain"
                )

        mean_pos_text = pos_prompt.vector if pos_prompt is not None else None
        mean_neg_text = neg_prompt.vector if neg_prompt is not None else None

        def image_side(sample_ids):
            if not sample_ids:
                return None
            vectors = []
            for sid in sorted(sample_ids):
                vectors.append(self.sample_embedding(sid, image_model, Space.VISION).vector)
            return fuse_references(vectors)

        return ReferenceEmbeddings(
            criterion_id=criterion_id,
            mean_pos_text=mean_pos_text,
            mean_neg_text=mean_neg_text,
            mean_pos_image=image_side(criterion.positive_image_ids),
            mean_neg_image=image_side(criterion.negative_image_ids),
            text_model=text_model,
            image_model=image_model,
            variant=effective_variant,
            warnings=tuple(warnings),
        )


def _empty_state() -> Snapshot:
    return Snapshot(
        embeddings={}, samples={}, criteria={}, baselines={}, score_tables=(), revision=0
    )


class KnowledgeBase:
    """Single-writer, multi-reader store with snapshot isolation."""

    def __init__(self):
        self._lock = threading.Lock()
        self._state = _empty_state()

    def snapshot(self) -> Snapshot:
        return self._state

    @property
    def revision(self) -> int:
        return self._state.revision

    def _commit(self, **changes):
        old = self._state
        self._state = Snapshot(
            embeddings=changes.get("embeddings", old.embeddings),
            samples=changes.get("samples", old.samples),
            criteria=changes.get("criteria", old.criteria),
            baselines=changes.get("baselines", old.baselines),
            score_tables=changes.get("score_tables", old.score_tables),
            revision=old.revision + 1,
        )

    # ------------------------------------------------------------------
    # embeddings
    # ------------------------------------------------------------------

    def ingest_embeddings(self, path) -> IngestResult:
        with open(path, encoding="utf-8") as f:
            return self.ingest_embedding_lines(f)

    def ingest_embedding_lines(self, lines) -> IngestResult:
        """Parse and store interchange lines; all-or-nothing."""
        with self._lock:
            state = self._state
            new_embeddings = dict(state.embeddings)
            new_samples = dict(state.samples)
            warnings = []
            count = 0
            for n, raw in enumerate(lines, start=1):
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    record = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise FileFormatError(f"invalid JSON: {exc.msg}", line=n) from None
                try:
                    embedding = parse_interchange_record(record)
                except (KeyError, TypeError, ValueError) as exc:
                    raise FileFormatError(f"bad interchange record: {exc}", line=n) from None
                if embedding.id in new_embeddings:
                    raise FileFormatError(f"duplicate embedding id {embedding.id!r}", line=n)
                norm_in = l2_norm(embedding.vector)
                try:
                    validated = validate_embedding(embedding)
                except Exception as exc:
                    raise FileFormatError(str(exc), line=n) from None
                if abs(norm_in - 1.0) > UNIT_NORM_TOLERANCE:
                    warnings.append(
                        f"line {n}: {embedding.id!r} had norm {norm_in:.9g}; re-normalized"
                    )
                new_embeddings[validated.id] = validated
                sample_id = _sample_id_for(validated)
                if sample_id is not None:
                    record_obj = new_samples.get(sample_id, SampleRecord(sample_id=sample_id))
                    if not record_obj.image_ref and validated.meta.get("image_ref"):
                        record_obj = replace(record_obj, image_ref=validated.meta["image_ref"])
                    new_samples[sample_id] = record_obj.with_embedding(
                        validated.model_id, validated.space, validated.id
                    )
                count += 1
            self._commit(embeddings=new_embeddings, samples=new_samples)
        return IngestResult(count=count, warnings=tuple(warnings))

    # ------------------------------------------------------------------
    # criteria / labels
    # ------------------------------------------------------------------

    def upsert_criterion(self, criterion: AssessmentCriterion) -> AssessmentCriterion:
        with self._lock:
            state = self._state
            for sid in sorted(criterion.positive_image_ids | criterion.negative_image_ids):
                if sid not in state.samples:
                    raise UnresolvedReferenceError(
                        f"{criterion.criterion_id}: references unknown sample {sid!r}"
                    )
            criteria = dict(state.criteria)
            criteria[criterion.criterion_id] = criterion
            self._commit(criteria=criteria)
        return criterion

    def load_labels(self, path) -> int:
        with open(path, encoding="utf-8", newline="") as f:
            return self.load_label_rows(f)

    def load_label_rows(self, text_stream) -> int:
        reader = csv.reader(text_stream)
        try:
            header = next(reader)
        except StopIteration:
            raise FileFormatError("empty labels file", line=1) from None
        header = [h.strip() for h in header]
        if not header or header[0].lower() != "sample":
            raise FileFormatError(f"first column must be 'sample', got {header[:1]}", line=1)
        criterion_cols = []
        for col in header[1:]:
            key = col.strip().lower()
            if key not in LABEL_COLUMNS:
                raise FileFormatError(f"unknown criterion column {col!r}", line=1)
            criterion_cols.append(LABEL_COLUMNS[key])
        with self._lock:
            state = self._state
            samples = dict(state.samples)
            count = 0
            for n, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(header):
                    raise FileFormatError(
                        f"expected {len(header)} columns, got {len(row)}", line=n
                    )
                sample_id = row[0].strip()
                labels = {}
                for crit, value in zip(criterion_cols, row[1:]):
                    token = value.strip().lower()
                    if token not in VALID_LABELS:
                        raise FileFormatError(
                            f"unknown label value {value!r} (expected accept/reject/NA)", line=n
                        )
                    labels[crit] = token
                record = samples.get(sample_id, SampleRecord(sample_id=sample_id))
                samples[sample_id] = record.with_labels(labels)
                count += 1
            self._commit(samples=samples)
        return count

    def delete_sample(self, sample_id: str):
        with self._lock:
            state = self._state
            if sample_id not in state.samples:
                raise UnresolvedReferenceError(f"unknown sample id {sample_id!r}")
            holders = [
                c.criterion_id
                for c in state.criteria.values()
                if sample_id in c.positive_image_ids or sample_id in c.negative_image_ids
            ]
            if holders:
                raise UnresolvedReferenceError(
                    f"sample {sample_id!r} is referenced by criteria {sorted(holders)}; detach first"
                )
            samples = dict(state.samples)
            samples.pop(sample_id)
            self._commit(samples=samples)

    # ------------------------------------------------------------------
    # baselines / score tables
    # ------------------------------------------------------------------

    def store_baseline(self, baseline: StoredBaseline) -> StoredBaseline:
        with self._lock:
            baselines = dict(self._state.baselines)
            baselines[baseline.key] = baseline
            self._commit(baselines=baselines)
        return baseline

    def record_score_table(self, table: ScoreTable):
        with self._lock:
            self._commit(score_tables=self._state.score_tables + (table,))

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def save(self, data_dir):
        from pathlib import Path

        d = Path(data_dir)
        d.mkdir(parents=True, exist_ok=True)
        state = self._state
        (d / "embeddings.jsonl").write_text(
            serialize_embeddings(state.embeddings), encoding="utf-8"
        )
        (d / "knowledge.json").write_text(serialize_knowledge(state), encoding="utf-8")

    @classmethod
    def load(cls, data_dir) -> "KnowledgeBase":
        from pathlib import Path

        d = Path(data_dir)
        kb = cls()
        emb_path = d / "embeddings.jsonl"
        if emb_path.exists():
            kb.ingest_embeddings(emb_path)
        knowledge_path = d / "knowledge.json"
        if knowledge_path.exists():
            kb.load_knowledge(knowledge_path)
        return kb

    def load_knowledge(self, path):
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
        apply_knowledge_doc(self, doc)


def _sample_id_for(e: Embedding) -> str | None:
    """Vision embeddings attach to a sample via meta.sample_id or image_ref stem."""
    if e.meta.get("source") == "prompt" or e.space == Space.TEXT:
        return None
    sid = e.meta.get("sample_id")
    if sid:
        return str(sid)
    ref = e.meta.get("image_ref")
    if ref:
        name = str(ref).replace("\\", "/").rsplit("/", 1)[-1]
        return name.rsplit(".", 1)[0] if "." in name else name
    return None


# ----------------------------------------------------------------------
# interchange format
# ----------------------------------------------------------------------

def parse_interchange_record(record: dict) -> Embedding:
    for key in ("id", "model", "space", "dim", "vector"):
        if key not in record:
            raise KeyError(f"missing field {key!r}")
    meta = dict(record.get("meta") or {})
    if "source" in record:
        if record["source"] not in ("image", "prompt"):
            raise ValueError(f"source must be image|prompt, got {record['source']!r}")
        meta["source"] = record["source"]
    return Embedding(
        id=str(record["id"]),
        model_id=str(record["model"]),
        space=Space(record["space"]),
        dim=int(record["dim"]),
        vector=record["vector"],
        meta=meta,
    )


def format_interchange_line(e: Embedding) -> str:
    meta = {k: v for k, v in e.meta.items() if k != "source"}
    source = e.meta.get("source", "prompt" if e.space == Space.TEXT else "image")
    vector = "[" + ", ".join(f"{x:.17g}" for x in e.vector) + "]"
    return (
        "{"
        + f'"id": {json.dumps(e.id, ensure_ascii=False)}, '
        + f'"model": {json.dumps(e.model_id, ensure_ascii=False)}, '
        + f'"space": {json.dumps(e.space.value)}, '
        + f'"dim": {e.dim}, '
        + f'"vector": {vector}, '
        + f'"source": {json.dumps(source)}, '
        + f'"meta": {json.dumps(meta, sort_keys=True, ensure_ascii=False)}'
        + "}"
    )


def serialize_embeddings(embeddings: dict) -> str:
    lines = [format_interchange_line(embeddings[k]) for k in sorted(embeddings)]
    return "\n".join(lines) + ("\n" if lines else "")


# ----------------------------------------------------------------------
# knowledge document
# ----------------------------------------------------------------------

def criterion_to_doc(c: AssessmentCriterion) -> dict:
    return {
        "criterion_id": c.criterion_id,
        "name": c.name,
        "positive_text": c.positive_text,
        "negative_text": c.negative_text,
        "color_aware_positive": c.color_aware_positive,
        "color_aware_negative": c.color_aware_negative,
        "positive_image_ids": sorted(c.positive_image_ids),
        "negative_image_ids": sorted(c.negative_image_ids),
    }


def criterion_from_doc(doc: dict) -> AssessmentCriterion:
    return AssessmentCriterion(
        criterion_id=doc["criterion_id"],
        name=doc.get("name", doc["criterion_id"]),
        positive_text=doc["positive_text"],
        negative_text=doc["negative_text"],
        color_aware_positive=doc.get("color_aware_positive"),
        color_aware_negative=doc.get("color_aware_negative"),
        positive_image_ids=frozenset(doc.get("positive_image_ids") or ()),
        negative_image_ids=frozenset(doc.get("negative_image_ids") or ()),
    )


def serialize_knowledge(state: Snapshot) -> str:
    doc = {
        "version": KNOWLEDGE_SCHEMA_VERSION,
        "criteria": [criterion_to_doc(state.criteria[k]) for k in sorted(state.criteria)],
        "labels": [
            {
                "sample_id": sid,
                "image_ref": state.samples[sid].image_ref,
                "labels": {k: state.samples[sid].labels[k] for k in sorted(state.samples[sid].labels)},
            }
            for sid in sorted(state.samples)
            if state.samples[sid].labels or state.samples[sid].image_ref
        ],
        "baselines": [
            {
                "criterion_id": b.criterion_id,
                "text_model": b.text_model,
                "image_model": b.image_model,
                "variant": b.variant,
                "batch_id": b.batch_id,
                "mu_text": b.stats.mu_text,
                "sigma_text": b.stats.sigma_text,
                "mu_image": b.stats.mu_image,
                "sigma_image": b.stats.sigma_image,
            }
            for _, b in sorted(state.baselines.items())
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def apply_knowledge_doc(kb: KnowledgeBase, doc: dict):
    version = doc.get("version")
    if version != KNOWLEDGE_SCHEMA_VERSION:
        raise FileFormatError(f"unsupported knowledge schema version {version!r}")
    label_rows = doc.get("labels") or []
    # register samples first so criteria reference checks can see them
    with kb._lock:
        samples = dict(kb._state.samples)
        for row in label_rows:
            sid = row["sample_id"]
            record = samples.get(sid, SampleRecord(sample_id=sid))
            if row.get("image_ref"):
                record = replace(record, image_ref=row["image_ref"])
            bad = {k: v for k, v in (row.get("labels") or {}).items() if v not in VALID_LABELS}
            if bad:
                raise FileFormatError(f"bad label values for {sid}: {bad}")
            record = record.with_labels(row.get("labels") or {})
            samples[sid] = record
        kb._commit(samples=samples)
    for cdoc in doc.get("criteria") or []:
        kb.upsert_criterion(criterion_from_doc(cdoc))
    for bdoc in doc.get("baselines") or []:
        kb.store_baseline(
            StoredBaseline(
                criterion_id=bdoc["criterion_id"],
                text_model=bdoc["text_model"],
                image_model=bdoc["image_model"],
                variant=bdoc.get("variant", "plain"),
                batch_id=bdoc["batch_id"],
                stats=PopulationStats(
                    mu_text=float(bdoc["mu_text"]),
                    sigma_text=float(bdoc["sigma_text"]),
                    mu_image=float(bdoc["mu_image"]),
                    sigma_image=float(bdoc["sigma_image"]),
                ),
            )
        )


# ----------------------------------------------------------------------
# score-table export
# ----------------------------------------------------------------------

SCORE_COLUMNS = [
    "image",
    "delta_flava",
    "delta_clip",
    "delta_flava_z",
    "delta_clip_z",
    "delta_combined",
]


def score_table_rows(table: ScoreTable) -> list:
    """Export rows in table order; raw deltas joined back by sample id."""
    raw = {d.sample_id: d for d in table.deltas}
    rows = []
    for r in table.rows:
        d = raw.get(r.sample_id)
        rows.append(
            {
                "image": r.sample_id,
                "delta_flava": d.delta_image if d else float("nan"),
                "delta_clip": d.delta_text if d else float("nan"),
                "delta_flava_z": r.z_image,
                "delta_clip_z": r.z_text,
                "delta_combined": r.combined,
            }
        )
    return rows


def write_score_table(table: ScoreTable, path, precision: str = "fixed"):
    """CSV export; 'fixed' renders 4 decimals, 'full' 17 significant digits."""
    fmt = (lambda x: f"{x:.4f}") if precision == "fixed" else (lambda x: f"{x:.17g}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SCORE_COLUMNS)
    for row in score_table_rows(table):
        writer.writerow(
            [row["image"]] + [fmt(row[c]) for c in SCORE_COLUMNS[1:]]
        )
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(buf.getvalue())


def read_delta_fixture(path) -> list:
    """Raw (image, delta_flava, delta_clip) rows from a score-table CSV."""
    from .core import SimilarityDelta

    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        missing = {"image", "delta_flava", "delta_clip"} - set(reader.fieldnames or ())
        if missing:
            raise FileFormatError(f"fixture missing columns {sorted(missing)}", line=1)
        out = []
        for n, row in enumerate(reader, start=2):
            try:
                out.append(
                    SimilarityDelta(
                        sample_id=row["image"],
                        criterion_id="",
                        delta_text=float(row["delta_clip"]),
                        delta_image=float(row["delta_flava"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise FileFormatError(f"bad fixture row: {exc}", line=n) from None
    return out


def batch_digest(sample_ids, criterion_id: str, tag: str) -> str:
    h = hashlib.sha256()
    h.update(criterion_id.encode())
    h.update(tag.encode())
    for sid in sorted(sample_ids):
        h.update(sid.encode())
    return h.hexdigest()[:12]
