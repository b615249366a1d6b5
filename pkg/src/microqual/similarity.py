"""Cosine similarity, reference fusion, similarity deltas, and matrix analysis.

The customization scheme scores an incoming embedding against fused
(element-wise mean) positive and negative reference sets and takes the
difference of the two cosines. Fused means are deliberately NOT
re-normalized: cosine is scale-invariant in each argument, so the result
is identical either way, and skipping it removes a failure mode for means
that land near the origin (an exactly zero mean is still an error).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Embedding, EmbeddingValidationError, Space, UnresolvedReferenceError


@dataclass(frozen=True)
class ReferenceEmbeddings:
    """Fused positive/negative reference means for one criterion."""

    criterion_id: str
    mean_pos_text: np.ndarray | None = None
    mean_neg_text: np.ndarray | None = None
    mean_pos_image: np.ndarray | None = None
    mean_neg_image: np.ndarray | None = None
    text_model: str | None = None
    image_model: str | None = None
    variant: str = "plain"
    warnings: tuple = ()


@dataclass(frozen=True)
class SimilarityMatrix:
    """Dense pairwise cosine matrix over one model/space."""

    sample_ids: tuple
    values: np.ndarray
    model_id: str = ""
    space: Space = Space.VISION

    def __post_init__(self):
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)


def cosine(a, b) -> float:
    """Cosine similarity of two same-dimension, nonzero vectors."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise EmbeddingValidationError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise EmbeddingValidationError("cosine undefined for zero-norm vector")
    # rounding can push |result| a hair past 1
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


def fuse_references(members) -> np.ndarray:
    """Element-wise arithmetic mean of a non-empty set of same-dim vectors."""
    vectors = [np.asarray(m, dtype=np.float64) for m in members]
    if not vectors:
        raise UnresolvedReferenceError("cannot fuse an empty reference set")
    dim = vectors[0].shape
    for v in vectors[1:]:
        if v.shape != dim:
            raise EmbeddingValidationError(f"dimension mismatch in reference set: {dim} vs {v.shape}")
    return np.mean(np.stack(vectors), axis=0)


def _require_same_space(embeddings, space: Space, what: str):
    models = {e.model_id for e in embeddings}
    if len(models) != 1:
        raise EmbeddingValidationError(f"{what}: mixed models {sorted(models)}")
    bad = [e.id for e in embeddings if e.space != space]
    if bad:
        raise EmbeddingValidationError(f"{what}: expected {space.value} space, offenders {bad}")


def delta_from_references(query, pos_mean, neg_mean) -> float:
    """cos(query, fused positives) - cos(query, fused negatives)."""
    return cosine(query, pos_mean) - cosine(query, neg_mean)


def text_delta(image_emb: Embedding, pos_texts, neg_texts) -> float:
    """Cross-modal delta: image embedding against fused prompt embeddings.

    All embeddings must come from one model whose vision and text encoders
    share a latent space (dims are checked; mixing models is an error).
    """
    pos_texts = list(pos_texts)
    neg_texts = list(neg_texts)
    if not pos_texts or not neg_texts:
        raise UnresolvedReferenceError("text delta needs non-empty positive and negative prompt sets")
    texts = pos_texts + neg_texts
    _require_same_space(texts, Space.TEXT, "text references")
    if image_emb.model_id != texts[0].model_id:
        raise EmbeddingValidationError(
            f"model mismatch: image from {image_emb.model_id!r}, texts from {texts[0].model_id!r}"
        )
    pos_mean = fuse_references([e.vector for e in pos_texts])
    neg_mean = fuse_references([e.vector for e in neg_texts])
    return delta_from_references(image_emb.vector, pos_mean, neg_mean)


def image_delta(query_emb: Embedding, pos_images, neg_images) -> float:
    """Unimodal delta: query image against fused reference image embeddings."""
    pos_images = list(pos_images)
    neg_images = list(neg_images)
    if not pos_images or not neg_images:
        raise UnresolvedReferenceError("image delta needs non-empty positive and negative image sets")
    refs = pos_images + neg_images + [query_emb]
    _require_same_space(refs, Space.VISION, "image references")
    pos_mean = fuse_references([e.vector for e in pos_images])
    neg_mean = fuse_references([e.vector for e in neg_images])
    return delta_from_references(query_emb.vector, pos_mean, neg_mean)


def pairwise_matrix(samples) -> SimilarityMatrix:
    """Dense cosine matrix over a list of embeddings from one model/space."""
    samples = list(samples)
    if not samples:
        raise UnresolvedReferenceError("pairwise matrix needs at least one embedding")
    _require_same_space(samples, samples[0].space, "pairwise matrix inputs")
    dims = {e.vector.shape for e in samples}
    if len(dims) != 1:
        raise EmbeddingValidationError(f"mixed dims in pairwise matrix inputs: {sorted(dims)}")
    m = np.stack([e.vector for e in samples])
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0.0):
        raise EmbeddingValidationError("zero-norm vector in pairwise matrix inputs")
    unit = m / norms[:, None]
    values = np.clip(unit @ unit.T, -1.0, 1.0)
    return SimilarityMatrix(
        sample_ids=[e.id for e in samples],
        values=values,
        model_id=samples[0].model_id,
        space=samples[0].space,
    )


def matrix_difference_stats(a: SimilarityMatrix, b: SimilarityMatrix) -> dict:
    """Element-wise A-B; mean and population std over the off-diagonal upper triangle."""
    if a.sample_ids != b.sample_ids:
        raise EmbeddingValidationError("matrices must share sample ordering")
    if a.values.shape != b.values.shape:
        raise EmbeddingValidationError(f"shape mismatch: {a.values.shape} vs {b.values.shape}")
    diff = a.values - b.values
    iu = np.triu_indices(diff.shape[0], k=1)
    tri = diff[iu]
    if tri.size == 0:
        mean, std = 0.0, 0.0
    else:
        mean, std = float(tri.mean()), float(tri.std(ddof=0))
    return {"mean": mean, "std": std, "diff": diff}


def discriminative_dimensions(group_a, group_b, n: int):
    """Rank embedding dimensions by how far apart two groups sit after pooling.

    Per dimension, values from both groups are z-standardized together
    (population std); the separation score is |mean_z(A) - mean_z(B)|.
    Constant dimensions score 0. Ties break toward the lower index.
    """
    ga = [np.asarray(e.vector if isinstance(e, Embedding) else e, dtype=np.float64) for e in group_a]
    gb = [np.asarray(e.vector if isinstance(e, Embedding) else e, dtype=np.float64) for e in group_b]
    if not ga or not gb:
        raise UnresolvedReferenceError("both groups must be non-empty")
    va, vb = np.stack(ga), np.stack(gb)
    if va.shape[1] != vb.shape[1]:
        raise EmbeddingValidationError(f"dimension mismatch: {va.shape[1]} vs {vb.shape[1]}")
    dim = va.shape[1]
    if not 0 < n <= dim:
        raise ValueError(f"n must be in 1..{dim}, got {n}")
    pooled = np.vstack([va, vb])
    mu = pooled.mean(axis=0)
    sigma = pooled.std(axis=0, ddof=0)
    scores = np.zeros(dim)
    nonzero = sigma > 0.0
    za = (va[:, nonzero] - mu[nonzero]) / sigma[nonzero]
    zb = (vb[:, nonzero] - mu[nonzero]) / sigma[nonzero]
    scores[nonzero] = np.abs(za.mean(axis=0) - zb.mean(axis=0))
    # stable sort on index, then stable sort on -score: ties keep low index first
    order = np.argsort(-scores, kind="stable")
    return [(int(i), float(scores[i])) for i in order[:n]]
