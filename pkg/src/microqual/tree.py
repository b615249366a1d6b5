"""Multi-criterion detection tree with gate short-circuits and audit traces.

Criteria are evaluated in a configured order. Failing a gate criterion
(default: the reinforcement-area check, whose failure means no bead to
assess) stops evaluation immediately. A sample is accepted only when every
criterion in the order was evaluated and passed; anything that cannot be
scored fails closed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .core import FusionConfig, HybridScore, MicroqualError, ZScorePopulation
from .fusion import LABEL_POSITIVE, score_batch

DEFAULT_ORDER = ("EA3", "EA1", "EA2", "EA4", "EA5", "EA6")


@dataclass(frozen=True)
class TreeConfig:
    order: tuple = DEFAULT_ORDER
    gate_criteria: frozenset = frozenset({"EA3"})
    stop_at_first_failure: bool = False
    fusion: FusionConfig = field(
        default_factory=lambda: FusionConfig(zscore_population=ZScorePopulation.STORED_BASELINE)
    )
    fusion_overrides: dict = field(default_factory=dict)  # criterion_id -> FusionConfig
    text_model: str = "clip"
    image_model: str = "flava"
    variant: str = "plain"

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(self.order))
        object.__setattr__(self, "gate_criteria", frozenset(self.gate_criteria))
        if not self.order:
            raise ValueError("criterion order must be non-empty")
        if len(set(self.order)) != len(self.order):
            raise ValueError(f"duplicate criteria in order: {self.order}")
        extra = self.gate_criteria - set(self.order)
        if extra:
            raise ValueError(f"gate criteria not in order: {sorted(extra)}")

    def fusion_for(self, criterion_id: str) -> FusionConfig:
        return self.fusion_overrides.get(criterion_id, self.fusion)

    def config_hash(self) -> str:
        doc = {
            "order": list(self.order),
            "gate_criteria": sorted(self.gate_criteria),
            "stop_at_first_failure": self.stop_at_first_failure,
            "text_model": self.text_model,
            "image_model": self.image_model,
            "variant": self.variant,
            "fusion": _fusion_doc(self.fusion),
            "fusion_overrides": {
                k: _fusion_doc(v) for k, v in sorted(self.fusion_overrides.items())
            },
        }
        blob = json.dumps(doc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def _fusion_doc(config: FusionConfig) -> dict:
    return {
        "strategy": config.strategy.value,
        "weights": list(config.weights),
        "threshold": config.threshold,
        "sigma_convention": config.sigma_convention.value,
        "zscore_population": config.zscore_population.value,
    }


@dataclass(frozen=True)
class TraceStep:
    criterion_id: str
    score: HybridScore | None
    verdict: str  # "pass" | "fail"
    error: str | None = None

    def to_doc(self) -> dict:
        doc = {"criterion_id": self.criterion_id, "verdict": self.verdict}
        if self.score is not None:
            doc["score"] = {
                "z_text": self.score.z_text,
                "z_image": self.score.z_image,
                "combined": self.score.combined,
                "label": self.score.label,
                "threshold": self.score.threshold,
                "strategy": self.score.strategy.value,
                "batch_id": self.score.batch_id,
            }
        if self.error:
            doc["error"] = self.error
        return doc


@dataclass(frozen=True)
class QualificationTrace:
    sample_id: str
    steps: tuple
    final: str  # "accept" | "reject"
    short_circuited: bool
    config_hash: str

    def to_doc(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "steps": [s.to_doc() for s in self.steps],
            "final": self.final,
            "short_circuited": self.short_circuited,
            "config_hash": self.config_hash,
        }


def default_scorer(snapshot, config: TreeConfig):
    """Score one (sample, criterion) via stored-baseline single-sample fusion."""

    def score(sample_id: str, criterion_id: str) -> HybridScore:
        table = score_batch(
            snapshot,
            [sample_id],
            criterion_id,
            config.fusion_for(criterion_id),
            text_model=config.text_model,
            image_model=config.image_model,
            variant=config.variant,
        )
        return table.rows[0]

    return score


def evaluate_tree(sample_id: str, config: TreeConfig, snapshot=None, scorer=None) -> QualificationTrace:
    """Walk the criterion order for one sample and emit an auditable trace."""
    if scorer is None:
        if snapshot is None:
            raise ValueError("need a snapshot or an explicit scorer")
        scorer = default_scorer(snapshot, config)
    steps = []
    short_circuited = False
    for criterion_id in config.order:
        try:
            score = scorer(sample_id, criterion_id)
            verdict = "pass" if score.label == LABEL_POSITIVE else "fail"
            steps.append(TraceStep(criterion_id=criterion_id, score=score, verdict=verdict))
        except MicroqualError as exc:
            # unscorable criterion fails closed
            steps.append(
                TraceStep(criterion_id=criterion_id, score=None, verdict="fail", error=str(exc))
            )
            verdict = "fail"
        if verdict == "fail" and (
            criterion_id in config.gate_criteria or config.stop_at_first_failure
        ):
            short_circuited = criterion_id != config.order[-1]
            break
    evaluated_all = len(steps) == len(config.order)
    accepted = evaluated_all and all(s.verdict == "pass" for s in steps)
    return QualificationTrace(
        sample_id=sample_id,
        steps=tuple(steps),
        final="accept" if accepted else "reject",
        short_circuited=short_circuited,
        config_hash=config.config_hash(),
    )


@dataclass(frozen=True)
class TreeReport:
    traces: tuple
    accepted: int
    rejected: int
    gate_failures: int
    failure_counts: dict  # criterion_id -> fail count
    errors: tuple  # (sample_id, message)

    def to_doc(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "gate_failures": self.gate_failures,
            "failure_counts": dict(sorted(self.failure_counts.items())),
            "errors": [list(e) for e in self.errors],
            "traces": [t.to_doc() for t in self.traces],
        }


def batch_tree_report(sample_ids, config: TreeConfig, snapshot=None, scorer=None) -> TreeReport:
    """Evaluate many samples; aggregate counts are order-invariant."""
    traces = []
    errors = []
    failure_counts = {cid: 0 for cid in config.order}
    gate_failures = 0
    for sid in sample_ids:
        trace = evaluate_tree(sid, config, snapshot=snapshot, scorer=scorer)
        traces.append(trace)
        for step in trace.steps:
            if step.verdict == "fail":
                failure_counts[step.criterion_id] += 1
                if step.criterion_id in config.gate_criteria:
                    gate_failures += 1
            if step.error:
                errors.append((sid, f"{step.criterion_id}: {step.error}"))
    accepted = sum(1 for t in traces if t.final == "accept")
    return TreeReport(
        traces=tuple(traces),
        accepted=accepted,
        rejected=len(traces) - accepted,
        gate_failures=gate_failures,
        failure_counts=failure_counts,
        errors=tuple(errors),
    )
