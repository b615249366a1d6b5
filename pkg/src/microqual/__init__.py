"""Vision-language qualification engine for segmented metallograph microstructures."""

__version__ = "0.1.0"

from .core import (
    AssessmentCriterion,
    DuplicateIdError,
    Embedding,
    EmbeddingValidationError,
    FileFormatError,
    FusionConfig,
    FusionStrategy,
    HybridScore,
    MicroqualError,
    SampleRecord,
    SigmaConvention,
    SimilarityDelta,
    Space,
    UnresolvedReferenceError,
    ZScorePopulation,
    normalize,
    unit_vector,
    validate_embedding,
)
from .fusion import (
    ConfusionResult,
    PopulationStats,
    ScoreTable,
    confusion,
    hybrid_combine,
    score_batch,
    score_deltas,
    zscore,
)
from .kb import KnowledgeBase, Snapshot, StoredBaseline
from .retrieval import (
    PrecisionResult,
    RetrievalResult,
    cumulative_text_embedding,
    precision_at_k,
    rank_by_text,
    retrieval_report,
)
from .similarity import (
    ReferenceEmbeddings,
    SimilarityMatrix,
    cosine,
    discriminative_dimensions,
    fuse_references,
    image_delta,
    matrix_difference_stats,
    pairwise_matrix,
    text_delta,
)
from .tree import QualificationTrace, TreeConfig, batch_tree_report, evaluate_tree

__all__ = [
    "AssessmentCriterion",
    "ConfusionResult",
    "DuplicateIdError",
    "Embedding",
    "EmbeddingValidationError",
    "FileFormatError",
    "FusionConfig",
    "FusionStrategy",
    "HybridScore",
    "KnowledgeBase",
    "MicroqualError",
    "PopulationStats",
    "PrecisionResult",
    "QualificationTrace",
    "ReferenceEmbeddings",
    "RetrievalResult",
    "SampleRecord",
    "ScoreTable",
    "SigmaConvention",
    "SimilarityDelta",
    "SimilarityMatrix",
    "Snapshot",
    "Space",
    "StoredBaseline",
    "TreeConfig",
    "UnresolvedReferenceError",
    "ZScorePopulation",
    "batch_tree_report",
    "confusion",
    "cosine",
    "cumulative_text_embedding",
    "discriminative_dimensions",
    "evaluate_tree",
    "fuse_references",
    "hybrid_combine",
    "image_delta",
    "matrix_difference_stats",
    "normalize",
    "pairwise_matrix",
    "precision_at_k",
    "rank_by_text",
    "retrieval_report",
    "score_batch",
    "score_deltas",
    "text_delta",
    "unit_vector",
    "validate_embedding",
    "zscore",
]
