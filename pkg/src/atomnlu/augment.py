"""Training-corpus construction: instruction expansion with sampled
positive/negative candidate lists, per-label quota balancing, and
prompt/completion record emission.

Each source instance expands into ``variants_per_sample`` instructions.
A variant keeps a uniform 1..max_positive_labels subset of its positive
labels (capped by availability), adds up to max_negative_labels distinct
labels drawn uniformly from the rest of the label universe, and shuffles
the combined candidate list. Balancing then caps, per (dataset, positive
label) pair, the number of instructions carrying that label; sentiment
and NLI datasets are exempt because their label inventories are tiny.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from . import codec
from .model import AnswerSet, AtomicInstance, AtomicKind, TaskKind, dedup

logger = logging.getLogger(__name__)

# Working defaults for corpus expansion and balancing.
DEFAULT_VARIANTS = 3
DEFAULT_MAX_POSITIVES = 11
DEFAULT_MAX_NEGATIVES = 21
DEFAULT_LABEL_QUOTA = 500
DEFAULT_EXEMPT_TASKS = frozenset({TaskKind.SA, TaskKind.NLI})

# Advisory training defaults emitted alongside the corpus for external
# trainer setups, keyed by backbone size.
TRAINING_ADVISORY = {
    "learning_rate": 1e-4,
    "max_training_steps": 4000,
    "batch_size": {"560M": 4, "1B7": 4, "3B": 2, "7B1": 1},
    "grad_accumulation": {"560M": 32, "1B7": 32, "3B": 64, "7B1": 128},
    "loss_masking": "input tokens are masked; loss applies to the completion only",
}


@dataclass(frozen=True)
class AugmentationConfig:
    variants_per_sample: int = DEFAULT_VARIANTS
    max_positive_labels: int = DEFAULT_MAX_POSITIVES
    max_negative_labels: int = DEFAULT_MAX_NEGATIVES
    seed: int = 0

    def __post_init__(self) -> None:
        if self.variants_per_sample < 1:
            raise ValueError("variants_per_sample must be >= 1")
        if self.max_positive_labels < 1:
            raise ValueError("max_positive_labels must be >= 1")
        if self.max_negative_labels < 0:
            raise ValueError("max_negative_labels must be >= 0")


@dataclass(frozen=True)
class BalanceConfig:
    per_label_quota: int = DEFAULT_LABEL_QUOTA
    exempt_tasks: frozenset[TaskKind] = DEFAULT_EXEMPT_TASKS
    seed: int = 0

    def __post_init__(self) -> None:
        if self.per_label_quota < 1:
            raise ValueError("per_label_quota must be >= 1")


@dataclass(frozen=True)
class TrainingRecord:
    prompt: str
    completion: str
    meta: dict

    def to_json(self) -> dict:
        return {"prompt": self.prompt, "completion": self.completion, "meta": dict(self.meta)}


def derived_rng(seed: int, key: str) -> random.Random:
    """Independent sub-generator for one work item; stable across runs."""
    return random.Random(f"{seed}:{key}")


def sample_negative_labels(
    positives: Iterable[str],
    universe: Sequence[str],
    n_max: int,
    rng: random.Random,
) -> list[str]:
    """Up to Uniform{1..n_max} distinct labels from universe minus positives."""
    if n_max <= 0:
        return []
    exclude = set(positives)
    pool = [label for label in dedup(universe) if label not in exclude]
    if not pool:
        return []
    want = rng.randint(1, n_max)
    return rng.sample(pool, min(want, len(pool)))


def _restrict_gold(gold: AnswerSet, keep: Sequence[str]) -> AnswerSet:
    keep_set = set(keep)
    if gold.kind is AtomicKind.CLASSIFICATION:
        return AnswerSet.for_labels(x for x in gold.labels if x in keep_set)
    return AnswerSet.for_extractions(
        {q: spans for q, spans in gold.extractions.items() if q in keep_set}
    )


def expand_instructions(
    instance: AtomicInstance,
    universe: Sequence[str],
    cfg: AugmentationConfig,
    rng: random.Random,
) -> list[AtomicInstance]:
    """Emit ``variants_per_sample`` candidate-resampled variants.

    An instance with no positive labels cannot be expanded; it is passed
    through unchanged exactly once and logged.
    """
    positives = instance.gold.positive_items()
    if not positives:
        logger.warning("instance %s has no positive labels; passed through", instance.id)
        return [instance]

    out: list[AtomicInstance] = []
    for ordinal in range(cfg.variants_per_sample):
        want_pos = rng.randint(1, cfg.max_positive_labels)
        chosen = rng.sample(list(positives), min(want_pos, len(positives)))
        chosen_set = set(chosen)
        kept_positives = [p for p in positives if p in chosen_set]  # stable order
        negatives = sample_negative_labels(positives, universe, cfg.max_negative_labels, rng)
        candidates = kept_positives + negatives
        rng.shuffle(candidates)
        out.append(
            AtomicInstance(
                id=f"{instance.id}/aug{ordinal}",
                source_id=instance.source_id,
                dataset_id=instance.dataset_id,
                task=instance.task,
                kind=instance.kind,
                lang=instance.lang,
                input_text=instance.input_text,
                candidates=tuple(candidates),
                gold=_restrict_gold(instance.gold, kept_positives),
            )
        )
    return out


def candidate_universes(
    instances: Sequence[AtomicInstance],
    scope: str = "dataset",
) -> dict[tuple, tuple[str, ...]]:
    """Label universes keyed by (dataset_id, kind) or, for the pre-training
    variant, by (task, kind) across the whole corpus."""
    if scope not in ("dataset", "task"):
        raise ValueError("scope must be 'dataset' or 'task'")
    grouped: dict[tuple, list[str]] = {}
    for inst in instances:
        key = (inst.dataset_id, inst.kind) if scope == "dataset" else (inst.task, inst.kind)
        grouped.setdefault(key, []).extend(inst.candidates)
    return {key: dedup(labels) for key, labels in grouped.items()}


def augment_corpus(
    instances: Sequence[AtomicInstance],
    cfg: AugmentationConfig,
    universe_scope: str = "dataset",
    universes: dict[tuple, tuple[str, ...]] | None = None,
) -> list[AtomicInstance]:
    """Expand every instance with an independent per-instance generator,
    so the result is identical no matter how the work is distributed.

    ``universes`` may be precomputed (e.g. pooled over a larger corpus
    than the one being expanded); by default they are derived from
    ``instances`` at the requested scope.
    """
    if universes is None:
        universes = candidate_universes(instances, universe_scope)
    out: list[AtomicInstance] = []
    for inst in instances:
        key = (inst.dataset_id, inst.kind) if universe_scope == "dataset" else (inst.task, inst.kind)
        rng = derived_rng(cfg.seed, inst.id)
        out.extend(expand_instructions(inst, universes[key], cfg, rng))
    return out


def positive_label_counts(instances: Sequence[AtomicInstance]) -> dict[tuple[str, str], int]:
    counts: dict[tuple[str, str], int] = {}
    for inst in instances:
        for label in inst.gold.positive_items():
            key = (inst.dataset_id, label)
            counts[key] = counts.get(key, 0) + 1
    return counts


def balance_corpus(
    instances: Sequence[AtomicInstance],
    cfg: BalanceConfig,
    rng: random.Random | None = None,
) -> list[AtomicInstance]:
    """Subsample so each (dataset, positive label) pair keeps at most
    ``per_label_quota`` instructions.

    Greedy single pass in seeded-random visit order: an instruction is kept
    iff at least one of its positive labels is still under quota when
    visited, and a kept instruction counts against all its labels. Exempt
    tasks pass through untouched; under-quota pairs are never up-sampled.
    The kept instances come back in their original corpus order.
    """
    rng = rng or random.Random(cfg.seed)
    order = list(range(len(instances)))
    rng.shuffle(order)
    counts: dict[tuple[str, str], int] = {}
    kept_idx: set[int] = set()
    for idx in order:
        inst = instances[idx]
        if inst.task in cfg.exempt_tasks:
            kept_idx.add(idx)
            continue
        positives = inst.gold.positive_items()
        if not positives:
            kept_idx.add(idx)
            continue
        keys = [(inst.dataset_id, label) for label in positives]
        if any(counts.get(key, 0) < cfg.per_label_quota for key in keys):
            kept_idx.add(idx)
            for key in keys:
                counts[key] = counts.get(key, 0) + 1
    return [inst for i, inst in enumerate(instances) if i in kept_idx]


def emit_training_records(
    instances: Iterable[AtomicInstance],
    template: codec.PromptTemplate = codec.DEFAULT_TEMPLATE,
    stage: str = "finetune",
) -> Iterator[TrainingRecord]:
    """Stream prompt/completion records; the prompt ends at the output
    marker, which is exactly the trainer's loss-mask boundary. Instances
    whose completion renders empty are dropped (and logged)."""
    if stage not in ("pretrain", "finetune"):
        raise ValueError("stage must be 'pretrain' or 'finetune'")
    for inst in instances:
        completion = codec.render_gold_completion(inst, template)
        if not completion:
            logger.warning("instance %s renders an empty completion; skipped", inst.id)
            continue
        yield TrainingRecord(
            prompt=codec.render_prompt(inst, template),
            completion=completion,
            meta={
                "dataset_id": inst.dataset_id,
                "task": inst.task.value,
                "kind": inst.kind.value,
                "lang": inst.lang,
                "stage": stage,
            },
        )
