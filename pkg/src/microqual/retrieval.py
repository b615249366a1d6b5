"""Text-to-image retrieval and top-k precision evaluation.

Queries are the positive prompt embedding of one assessment (individual)
or the unweighted mean over an ordered list of assessments (cumulative).
Ground truth for precision is the expert accept label on the queried
criterion; for a multi-criterion set a sample is relevant only if it is
accepted on every criterion in the set. na-labeled samples are skipped
and the rank list is back-filled from below.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .core import UnresolvedReferenceError
from .similarity import cosine, fuse_references


@dataclass(frozen=True)
class QueryDescriptor:
    criterion_ids: tuple
    variant: str
    mode: str  # "individual" | "cumulative"

    def label(self) -> str:
        return "+".join(self.criterion_ids)


@dataclass(frozen=True)
class RetrievalResult:
    query: QueryDescriptor
    model_id: str
    ranked: tuple  # ((sample_id, similarity), ...) descending
    k: int


@dataclass(frozen=True)
class PrecisionResult:
    hits: int
    k: int

    @property
    def pct(self) -> float:
        return 100.0 * self.hits / self.k

    def formatted(self) -> str:
        return f"{self.pct:.2f}%"


def positive_prompt_vector(snapshot, criterion_id: str, variant: str, model_id: str) -> np.ndarray:
    e = snapshot.prompt_embedding(criterion_id, "pos", variant, model_id)
    if e is None:
        raise UnresolvedReferenceError(
            f"no positive prompt embedding for {criterion_id} variant={variant} model={model_id}"
        )
    return e.vector


def cumulative_text_embedding(snapshot, criterion_ids, variant: str, model_id: str) -> np.ndarray:
    """Unweighted mean of the per-criterion positive prompt embeddings."""
    criterion_ids = list(criterion_ids)
    if not criterion_ids:
        raise UnresolvedReferenceError("cumulative embedding needs at least one criterion")
    vectors = [positive_prompt_vector(snapshot, cid, variant, model_id) for cid in criterion_ids]
    return fuse_references(vectors)


def rank_by_text(query, corpus, k: int, model_id: str = "", descriptor: QueryDescriptor | None = None) -> RetrievalResult:
    """Rank a (sample_id, vector) corpus by cosine to the query; top-k."""
    corpus = list(corpus)
    if not corpus:
        raise UnresolvedReferenceError("empty retrieval corpus")
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    scored = [(sid, cosine(query, vec)) for sid, vec in corpus]
    scored.sort(key=lambda t: (-t[1], t[0]))
    descriptor = descriptor or QueryDescriptor(criterion_ids=(), variant="plain", mode="individual")
    return RetrievalResult(
        query=descriptor, model_id=model_id, ranked=tuple(scored[: min(k, len(scored))]), k=k
    )


def precision_at_k(result: RetrievalResult, labels: dict, criterion_id: str, k: int) -> PrecisionResult:
    """Accept fraction among the top-k labeled results, as an exact m/k value.

    `labels` maps sample_id -> {criterion_id: accept|reject|na}. Samples
    whose label is na (or absent) do not consume a rank slot; the list is
    back-filled from rank k+1 onward.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if k > len(result.ranked):
        raise ValueError(f"k={k} exceeds ranked length {len(result.ranked)}")
    hits = 0
    used = 0
    for sample_id, _ in result.ranked:
        label = (labels.get(sample_id) or {}).get(criterion_id, "na")
        if label == "na":
            continue
        used += 1
        if label == "accept":
            hits += 1
        if used == k:
            break
    return PrecisionResult(hits=hits, k=k)


def conjunctive_labels(labels: dict, criterion_ids) -> dict:
    """Collapse per-criterion labels to one 'accept on all of these' label."""
    criterion_ids = list(criterion_ids)
    out = {}
    for sample_id, per_criterion in labels.items():
        values = [per_criterion.get(cid, "na") for cid in criterion_ids]
        if "na" in values:
            combined = "na"
        elif all(v == "accept" for v in values):
            combined = "accept"
        else:
            combined = "reject"
        out[sample_id] = {"__set__": combined}
    return out


@dataclass(frozen=True)
class ReportRow:
    criterion_set: str
    variant: str
    model: str
    k: int
    precision_pct: float


@dataclass(frozen=True)
class RetrievalReport:
    rows: tuple

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["criterion_set", "variant", "model", "k", "precision_pct"])
        for r in self.rows:
            writer.writerow([r.criterion_set, r.variant, r.model, r.k, f"{r.precision_pct:.2f}"])
        return buf.getvalue()


def sample_labels(snapshot) -> dict:
    return {sid: dict(rec.labels) for sid, rec in snapshot.samples.items()}


def retrieval_report(snapshot, criterion_sets, variants, models, ks, cumulative: bool = False) -> RetrievalReport:
    """Cross-product precision report over criterion sets, variants, models, ks.

    Each entry of `criterion_sets` is an ordered list of criterion ids; a
    singleton list is an individual row, longer lists are cumulative means.
    """
    labels = sample_labels(snapshot)
    rows = []
    for model in models:
        corpus = snapshot.vision_corpus(model)
        for variant in variants:
            for criterion_ids in criterion_sets:
                criterion_ids = list(criterion_ids)
                mode = "cumulative" if (cumulative or len(criterion_ids) > 1) else "individual"
                query = cumulative_text_embedding(snapshot, criterion_ids, variant, model)
                descriptor = QueryDescriptor(
                    criterion_ids=tuple(criterion_ids), variant=variant, mode=mode
                )
                for k in ks:
                    result = rank_by_text(
                        query, corpus, k=len(corpus), model_id=model, descriptor=descriptor
                    )
                    if len(criterion_ids) == 1:
                        p = precision_at_k(result, labels, criterion_ids[0], min(k, len(corpus)))
                    else:
                        p = precision_at_k(
                            result,
                            conjunctive_labels(labels, criterion_ids),
                            "__set__",
                            min(k, len(corpus)),
                        )
                    rows.append(
                        ReportRow(
                            criterion_set=descriptor.label(),
                            variant=variant,
                            model=model,
                            k=k,
                            precision_pct=p.pct,
                        )
                    )
    return RetrievalReport(rows=tuple(rows))
