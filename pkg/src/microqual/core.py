"""Shared domain types, numeric conventions, and validation.

Everything downstream (similarity math, fusion, the knowledge base, the
service) works on these value types. All arithmetic is float64 regardless
of what an extraction pipeline emitted; instances are treated as immutable
once constructed and are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

# |‖v‖ - 1| within this is accepted as unit-norm on ingest; beyond it the
# vector is re-normalized and a warning is attached, never rejected.
UNIT_NORM_TOLERANCE = 1e-6

LABEL_ACCEPT = "accept"
LABEL_REJECT = "reject"
LABEL_NA = "na"
VALID_LABELS = (LABEL_ACCEPT, LABEL_REJECT, LABEL_NA)


class MicroqualError(Exception):
    """Base class for engine errors."""


class EmbeddingValidationError(MicroqualError):
    """Malformed embedding: dimension mismatch, NaN/Inf, or zero vector."""


class UnresolvedReferenceError(MicroqualError):
    """A criterion, sample, or embedding reference does not resolve."""


class DuplicateIdError(MicroqualError):
    """An id that must be unique is already present."""


class FileFormatError(MicroqualError):
    """Unparseable persisted file; carries a line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class Space(str, Enum):
    VISION = "vision"
    TEXT = "text"
    MULTIMODAL = "multimodal"


class FusionStrategy(str, Enum):
    ZSCORE_SUM = "zscore_sum"
    WEIGHTED = "weighted"
    VOTE = "vote"


class SigmaConvention(str, Enum):
    POPULATION = "population"
    SAMPLE = "sample"


class ZScorePopulation(str, Enum):
    BATCH = "batch"
    STORED_BASELINE = "stored_baseline"


def as_vector(values) -> np.ndarray:
    """Coerce to a read-only float64 vector."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise EmbeddingValidationError(f"expected a 1-D vector, got shape {v.shape}")
    v = v.copy()
    v.flags.writeable = False
    return v


@dataclass(frozen=True)
class Embedding:
    """An L2-normalized vector tagged with model, modality space, and dim."""

    id: str
    model_id: str
    space: Space
    dim: int
    vector: np.ndarray
    normalized: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "space", Space(self.space))
        object.__setattr__(self, "vector", as_vector(self.vector))


@dataclass(frozen=True)
class SampleRecord:
    """One dataset sample: image reference, embeddings per (model, space), labels."""

    sample_id: str
    image_ref: str = ""
    embeddings: dict = field(default_factory=dict)  # (model_id, Space) -> embedding id
    labels: dict = field(default_factory=dict)  # criterion_id -> accept|reject|na

    def with_labels(self, labels: dict) -> "SampleRecord":
        merged = dict(self.labels)
        merged.update(labels)
        return replace(self, labels=merged)

    def with_embedding(self, model_id: str, space: Space, embedding_id: str) -> "SampleRecord":
        emb = dict(self.embeddings)
        emb[(model_id, Space(space))] = embedding_id
        return replace(self, embeddings=emb)


@dataclass(frozen=True)
class AssessmentCriterion:
    """One expert assessment: prompt texts plus reference image id sets."""

    criterion_id: str
    name: str
    positive_text: str
    negative_text: str
    color_aware_positive: str | None = None
    color_aware_negative: str | None = None
    positive_image_ids: frozenset = frozenset()
    negative_image_ids: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "positive_image_ids", frozenset(self.positive_image_ids))
        object.__setattr__(self, "negative_image_ids", frozenset(self.negative_image_ids))
        if self.positive_text == self.negative_text:
            raise ValueError(f"{self.criterion_id}: positive and negative texts must differ")
        overlap = self.positive_image_ids & self.negative_image_ids
        if overlap:
            raise ValueError(
                f"{self.criterion_id}: positive/negative image sets overlap: {sorted(overlap)}"
            )

    def prompt_pair(self, variant: str = "plain") -> tuple[str, str]:
        if variant == "color":
            if self.color_aware_positive and self.color_aware_negative:
                return self.color_aware_positive, self.color_aware_negative
            raise UnresolvedReferenceError(
                f"{self.criterion_id}: no color-aware prompt variant stored"
            )
        return self.positive_text, self.negative_text


@dataclass(frozen=True)
class FusionConfig:
    """How standardized deltas are combined and thresholded."""

    strategy: FusionStrategy = FusionStrategy.ZSCORE_SUM
    weights: tuple[float, float] = (1.0, 1.0)
    threshold: float = 0.0
    sigma_convention: SigmaConvention = SigmaConvention.POPULATION
    sigma_zero_policy: str = "zeros"
    zscore_population: ZScorePopulation = ZScorePopulation.BATCH

    def __post_init__(self):
        object.__setattr__(self, "strategy", FusionStrategy(self.strategy))
        object.__setattr__(self, "sigma_convention", SigmaConvention(self.sigma_convention))
        object.__setattr__(self, "zscore_population", ZScorePopulation(self.zscore_population))
        object.__setattr__(self, "weights", (float(self.weights[0]), float(self.weights[1])))
        object.__setattr__(self, "threshold", float(self.threshold))
        if not (np.isfinite(self.weights).all() and np.isfinite(self.threshold)):
            raise ValueError("weights and threshold must be finite")
        if self.sigma_zero_policy != "zeros":
            raise ValueError(f"unsupported sigma_zero_policy {self.sigma_zero_policy!r}")


@dataclass(frozen=True)
class SimilarityDelta:
    """Per-sample raw deltas: cross-modal (text) and unimodal (image)."""

    sample_id: str
    criterion_id: str
    delta_text: float
    delta_image: float

    def __post_init__(self):
        for name, v in (("delta_text", self.delta_text), ("delta_image", self.delta_image)):
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
            # difference of two cosines
            if not -2.0 <= v <= 2.0:
                raise ValueError(f"{name} out of [-2, 2]: {v}")


@dataclass(frozen=True)
class HybridScore:
    """Standardized deltas, their combination, and the resulting label."""

    sample_id: str
    criterion_id: str
    z_text: float
    z_image: float
    combined: float
    strategy: FusionStrategy
    threshold: float
    label: str  # "positive" | "negative"
    batch_id: str


def l2_norm(vector) -> float:
    return float(np.linalg.norm(np.asarray(vector, dtype=np.float64)))


def unit_vector(vector) -> np.ndarray:
    """Scale to unit L2 norm, preserving direction. Zero vectors are an error."""
    v = np.asarray(vector, dtype=np.float64)
    if not np.isfinite(v).all():
        raise EmbeddingValidationError("vector contains NaN/Inf")
    n = np.linalg.norm(v)
    if n == 0.0:
        raise EmbeddingValidationError("cannot normalize a zero vector")
    return v / n


def normalize(e: Embedding) -> Embedding:
    """Return `e` rescaled to unit L2 norm."""
    return replace(e, vector=unit_vector(e.vector), normalized=True)


def validate_embedding(e: Embedding) -> Embedding:
    """Validate shape and numeric health; settle the `normalized` flag.

    Within UNIT_NORM_TOLERANCE of unit norm the vector is accepted as-is;
    outside it the vector is re-normalized (callers that need to flag this
    can compare norms beforehand, see KnowledgeBase.ingest_embeddings).
    """
    if e.dim <= 0:
        raise EmbeddingValidationError(f"{e.id}: dim must be positive, got {e.dim}")
    if len(e.vector) != e.dim:
        raise EmbeddingValidationError(
            f"{e.id}: dimension mismatch: dim={e.dim} but vector has {len(e.vector)} entries"
        )
    if not np.isfinite(e.vector).all():
        raise EmbeddingValidationError(f"{e.id}: vector contains NaN/Inf")
    n = l2_norm(e.vector)
    if n == 0.0:
        raise EmbeddingValidationError(f"{e.id}: zero vector")
    if abs(n - 1.0) <= UNIT_NORM_TOLERANCE:
        return replace(e, normalized=True)
    return normalize(e)
