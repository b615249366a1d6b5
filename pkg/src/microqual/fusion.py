"""Z-score standardization, hybrid fusion strategies, and threshold labels.

Raw deltas from the two modalities live on very different scales (the
cross-modal deltas are an order of magnitude smaller), so each column is
standardized over the scored batch before summing. A combined score at or
above the threshold labels positive; exactly-at-threshold is positive by
convention (non-negative alignment).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    FusionConfig,
    FusionStrategy,
    HybridScore,
    SigmaConvention,
    SimilarityDelta,
    Space,
    UnresolvedReferenceError,
    ZScorePopulation,
)
from .similarity import delta_from_references

LABEL_POSITIVE = "positive"
LABEL_NEGATIVE = "negative"


@dataclass(frozen=True)
class PopulationStats:
    """Mean/std of each delta column for one scored population."""

    mu_text: float
    sigma_text: float
    mu_image: float
    sigma_image: float


@dataclass(frozen=True)
class ScoreTable:
    """Per-sample scores for one criterion, sorted by combined descending."""

    batch_id: str
    criterion_id: str
    rows: tuple
    population_stats: PopulationStats
    config: FusionConfig
    deltas: tuple = ()  # the raw SimilarityDeltas behind the rows
    warnings: tuple = ()


def mean_std(values, convention: SigmaConvention) -> tuple[float, float]:
    a = np.asarray(list(values), dtype=np.float64)
    if a.size == 0:
        raise ValueError("empty value list")
    ddof = 0 if convention == SigmaConvention.POPULATION else 1
    if a.size <= ddof:
        return float(a.mean()), 0.0
    return float(a.mean()), float(a.std(ddof=ddof))


def zscore(values, convention: SigmaConvention = SigmaConvention.POPULATION) -> list[float]:
    """Standardize a batch of values; a zero-spread batch maps to all zeros."""
    a = np.asarray(list(values), dtype=np.float64)
    if a.size == 0:
        raise ValueError("cannot z-score an empty list")
    mu, sigma = mean_std(a, SigmaConvention(convention))
    if sigma == 0.0:
        return [0.0] * a.size
    return [float(z) for z in (a - mu) / sigma]


def zscore_single(value: float, mu: float, sigma: float) -> float:
    if sigma == 0.0:
        return 0.0
    return (value - mu) / sigma


def hybrid_combine(z_text: float, z_image: float, config: FusionConfig) -> dict:
    """Combine standardized deltas per the configured strategy.

    vote: each modality votes by its own sign (>= 0 is positive); a
    unanimous vote decides, a split vote falls back to the sign of the
    sum. The reported combined score is always the plain sum.
    """
    if not (math.isfinite(z_text) and math.isfinite(z_image)):
        raise ValueError(f"non-finite z inputs: ({z_text}, {z_image})")
    if config.strategy == FusionStrategy.ZSCORE_SUM:
        combined = z_text + z_image
        label = LABEL_POSITIVE if combined >= config.threshold else LABEL_NEGATIVE
    elif config.strategy == FusionStrategy.WEIGHTED:
        w1, w2 = config.weights
        combined = w1 * z_text + w2 * z_image
        label = LABEL_POSITIVE if combined >= config.threshold else LABEL_NEGATIVE
    elif config.strategy == FusionStrategy.VOTE:
        votes = (z_text >= 0.0, z_image >= 0.0)
        combined = z_text + z_image
        if votes[0] == votes[1]:
            label = LABEL_POSITIVE if votes[0] else LABEL_NEGATIVE
        else:
            label = LABEL_POSITIVE if combined >= 0.0 else LABEL_NEGATIVE
    else:  # pragma: no cover - FusionConfig validates the enum
        raise ValueError(f"unknown strategy {config.strategy}")
    return {"combined": combined, "label": label}


def score_deltas(
    deltas,
    config: FusionConfig,
    batch_id: str,
    criterion_id: str,
    baseline: PopulationStats | None = None,
) -> ScoreTable:
    """Standardize, combine, label, and sort a batch of raw deltas.

    With zscore_population=batch the population is the batch itself; with
    stored_baseline the caller supplies the frozen stats (single-sample
    scoring against a designated reference batch).
    """
    deltas = list(deltas)
    if not deltas:
        raise ValueError("empty batch")
    warnings = []
    if config.zscore_population == ZScorePopulation.STORED_BASELINE:
        if baseline is None:
            raise UnresolvedReferenceError(
                f"{criterion_id}: stored-baseline scoring requested but no baseline supplied"
            )
        stats = baseline
    else:
        mu_t, sd_t = mean_std([d.delta_text for d in deltas], config.sigma_convention)
        mu_i, sd_i = mean_std([d.delta_image for d in deltas], config.sigma_convention)
        stats = PopulationStats(mu_text=mu_t, sigma_text=sd_t, mu_image=mu_i, sigma_image=sd_i)
    if stats.sigma_text == 0.0 or stats.sigma_image == 0.0:
        warnings.append(
            f"{criterion_id}: zero spread in a delta column; affected z-scores set to 0"
        )
    rows = []
    for d in deltas:
        z_t = zscore_single(d.delta_text, stats.mu_text, stats.sigma_text)
        z_i = zscore_single(d.delta_image, stats.mu_image, stats.sigma_image)
        out = hybrid_combine(z_t, z_i, config)
        rows.append(
            HybridScore(
                sample_id=d.sample_id,
                criterion_id=criterion_id,
                z_text=z_t,
                z_image=z_i,
                combined=out["combined"],
                strategy=config.strategy,
                threshold=config.threshold,
                label=out["label"],
                batch_id=batch_id,
            )
        )
    rows.sort(key=lambda r: (-r.combined, r.sample_id))
    return ScoreTable(
        batch_id=batch_id,
        criterion_id=criterion_id,
        rows=tuple(rows),
        population_stats=stats,
        config=config,
        deltas=tuple(deltas),
        warnings=tuple(warnings),
    )


def relabel(table: ScoreTable, threshold: float) -> ScoreTable:
    """New table with labels recomputed at a different threshold; scores untouched.

    Only meaningful for strategies whose label is a pure function of the
    combined score (zscore_sum, weighted).
    """
    if table.config.strategy == FusionStrategy.VOTE:
        raise ValueError("vote labels are not a function of the combined score")
    config = FusionConfig(
        strategy=table.config.strategy,
        weights=table.config.weights,
        threshold=threshold,
        sigma_convention=table.config.sigma_convention,
        zscore_population=table.config.zscore_population,
    )
    rows = tuple(
        HybridScore(
            sample_id=r.sample_id,
            criterion_id=r.criterion_id,
            z_text=r.z_text,
            z_image=r.z_image,
            combined=r.combined,
            strategy=r.strategy,
            threshold=threshold,
            label=LABEL_POSITIVE if r.combined >= threshold else LABEL_NEGATIVE,
            batch_id=r.batch_id,
        )
        for r in table.rows
    )
    return ScoreTable(
        batch_id=table.batch_id,
        criterion_id=table.criterion_id,
        rows=rows,
        population_stats=table.population_stats,
        config=config,
        deltas=table.deltas,
        warnings=table.warnings,
    )


def compute_delta(snapshot, sample_id: str, references, text_model: str, image_model: str):
    """Raw cross-modal and unimodal deltas for one sample against fused references."""
    if references.mean_pos_text is None or references.mean_neg_text is None:
        raise UnresolvedReferenceError(
            f"{references.criterion_id}: prompt embeddings missing for model {text_model!r}"
        )
    if references.mean_pos_image is None or references.mean_neg_image is None:
        raise UnresolvedReferenceError(
            f"{references.criterion_id}: reference image sets are empty or unresolved"
        )
    text_query = snapshot.sample_embedding(sample_id, text_model, Space.VISION)
    image_query = snapshot.sample_embedding(sample_id, image_model, Space.VISION)
    return SimilarityDelta(
        sample_id=sample_id,
        criterion_id=references.criterion_id,
        delta_text=delta_from_references(
            text_query.vector, references.mean_pos_text, references.mean_neg_text
        ),
        delta_image=delta_from_references(
            image_query.vector, references.mean_pos_image, references.mean_neg_image
        ),
    )


def score_batch(
    snapshot,
    sample_ids,
    criterion_id: str,
    config: FusionConfig,
    text_model: str = "clip",
    image_model: str = "flava",
    variant: str = "plain",
) -> ScoreTable:
    """Score a batch of samples against one criterion's references.

    Deltas are computed per sample, standardized over the batch (or a
    stored baseline, per config), combined, labeled, and sorted.
    """
    from .kb import batch_digest

    sample_ids = list(sample_ids)
    if not sample_ids:
        raise ValueError("empty batch")
    references = snapshot.resolve_references(
        criterion_id, text_model=text_model, image_model=image_model, variant=variant
    )
    deltas = [
        compute_delta(snapshot, sid, references, text_model, image_model) for sid in sample_ids
    ]
    baseline = None
    if config.zscore_population == ZScorePopulation.STORED_BASELINE:
        stored = snapshot.baseline(criterion_id, text_model, image_model, references.variant)
        baseline = stored.stats
        batch_id = stored.batch_id
    else:
        batch_id = batch_digest(sample_ids, criterion_id, f"{text_model}+{image_model}+{references.variant}")
    table = score_deltas(deltas, config, batch_id=batch_id, criterion_id=criterion_id, baseline=baseline)
    if references.warnings:
        table = ScoreTable(
            batch_id=table.batch_id,
            criterion_id=table.criterion_id,
            rows=table.rows,
            population_stats=table.population_stats,
            config=table.config,
            deltas=table.deltas,
            warnings=references.warnings + table.warnings,
        )
    return table


@dataclass(frozen=True)
class ConfusionResult:
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    precision: float
    recall: float
    misclassified: tuple

    @property
    def counted(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(table: ScoreTable, labels: dict) -> ConfusionResult:
    """Positive prediction vs accept label; na-labeled samples are excluded.

    `labels` maps sample id -> accept|reject|na. Ids are joined on the
    filename stem so "Sample 7.png" rows match a "Sample 7" label.
    """
    def stem(s: str) -> str:
        return s.rsplit(".", 1)[0] if "." in s else s

    by_stem = {stem(k): v for k, v in labels.items()}
    tp = fp = fn = tn = 0
    misclassified = []
    for row in table.rows:
        lab = by_stem.get(stem(row.sample_id), labels.get(row.sample_id))
        if lab is None or lab.lower() == "na":
            continue
        predicted_positive = row.label == LABEL_POSITIVE
        actual_accept = lab.lower() == "accept"
        if predicted_positive and actual_accept:
            tp += 1
        elif predicted_positive:
            fp += 1
            misclassified.append(row.sample_id)
        elif actual_accept:
            fn += 1
            misclassified.append(row.sample_id)
        else:
            tn += 1
    counted = tp + fp + fn + tn
    if counted == 0:
        raise UnresolvedReferenceError("no scored sample has a usable label")
    return ConfusionResult(
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        accuracy=(tp + tn) / counted,
        precision=tp / (tp + fp) if (tp + fp) else 0.0,
        recall=tp / (tp + fn) if (tp + fn) else 0.0,
        misclassified=tuple(misclassified),
    )
