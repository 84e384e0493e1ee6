"""Translate raw task samples into atomic classify/extract instances.

Single-atomic tasks map one to one. EE emits one classification instance
per trigger (an "is what event?" question) plus one extraction instance
over the dataset's event/role query inventory; RE emits one classification
instance per (subject, object) pair plus one extraction instance whose
queries ask for the object and subject of each gold relation. Translation
is pure: identical inputs yield byte-identical instances.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass

from .model import (
    AnswerSet,
    AtomicInstance,
    AtomicKind,
    DatasetDescriptor,
    EmptyCandidates,
    MissingField,
    RawSample,
    SINGLE_CLS_TASKS,
    SINGLE_EXT_TASKS,
    TaskKind,
    dedup,
)

logger = logging.getLogger(__name__)

DEFAULT_SEPARATOR = "\t"


def event_query(event_type: str, lang: str) -> str:
    return f"{event_type}事件" if lang == "zh" else f"{event_type} event"


def role_query(event_type: str, role: str, lang: str) -> str:
    if lang == "zh":
        return f"{event_type}事件的{role}"
    return f"the {role} of event {event_type}"


def event_question(text: str, trigger: str, lang: str) -> str:
    if lang == "zh":
        return f"{text}中{trigger}是什么事件？"
    return f"What is the event of {trigger} in {text}?"


def relation_question(text: str, subject: str, obj: str, lang: str) -> str:
    if lang == "zh":
        return f"{text}中{subject}和{obj}的关系是什么？"
    return f"What is the relation between {subject} and {obj} in {text}?"


def object_query(relation: str, lang: str) -> str:
    return f"{relation}关系的宾语" if lang == "zh" else f"the object of {relation}"


def subject_query(relation: str, lang: str) -> str:
    return f"{relation}关系的主语" if lang == "zh" else f"the subject of {relation}"


@dataclass(frozen=True)
class DatasetSchema:
    """Dataset-level label inventory feeding candidate lists.

    ``labels`` backs single-atomic classification candidates; the event /
    role / relation inventories back EE and RE. Built from the registry
    universe plus everything observed in the samples.
    """

    labels: tuple[str, ...] = ()
    event_types: tuple[str, ...] = ()
    event_roles: tuple[tuple[str, str], ...] = ()   # (event_type, role)
    relation_types: tuple[str, ...] = ()
    separator: str = DEFAULT_SEPARATOR


def schema_from_samples(
    samples: list[RawSample],
    descriptor: DatasetDescriptor | None = None,
    separator: str = DEFAULT_SEPARATOR,
) -> DatasetSchema:
    labels: list[str] = list(descriptor.label_universe) if descriptor else []
    event_types: list[str] = []
    event_roles: list[tuple[str, str]] = []
    relation_types: list[str] = []
    for raw in samples:
        if raw.task in SINGLE_CLS_TASKS and raw.gold is not None:
            labels.extend(raw.candidates or raw.gold.labels)
        elif raw.task is TaskKind.EE:
            event_types.extend(etype for _, etype in raw.triggers)
            event_types.extend(etype for _, etype, _ in raw.arguments)
            event_roles.extend((etype, role) for role, etype, _ in raw.arguments)
        elif raw.task is TaskKind.RE:
            relation_types.extend(rel for _, _, rel in raw.relations)
    return DatasetSchema(
        labels=dedup(labels),
        event_types=dedup(event_types),
        event_roles=tuple(dict.fromkeys(event_roles)),
        relation_types=dedup(relation_types),
        separator=separator,
    )


def _instance_id(raw: RawSample, kind: AtomicKind, ordinal: int) -> str:
    return f"{raw.dataset_id}/{raw.id}/{kind.value}/{ordinal}"


def _single_cls(raw: RawSample, schema: DatasetSchema) -> AtomicInstance:
    assert raw.gold is not None
    if raw.task is TaskKind.NLI:
        if raw.text2 is None:
            raise MissingField(f"sample {raw.id}: NLI requires text2")
        input_text = f"{raw.text}{schema.separator}{raw.text2}"
    elif raw.task is TaskKind.ET:
        if raw.mention is None:
            raise MissingField(f"sample {raw.id}: ET requires mention")
        input_text = f"{raw.text}{schema.separator}{raw.mention}"
    else:
        input_text = raw.text
    candidates = raw.candidates or dedup((*schema.labels, *raw.gold.labels))
    if not candidates:
        raise EmptyCandidates(f"sample {raw.id}: no candidate labels available")
    return AtomicInstance(
        id=_instance_id(raw, AtomicKind.CLASSIFICATION, 0),
        source_id=raw.id,
        dataset_id=raw.dataset_id,
        task=raw.task,
        kind=AtomicKind.CLASSIFICATION,
        lang=raw.lang,
        input_text=input_text,
        candidates=candidates,
        gold=raw.gold,
    )


def _single_ext(raw: RawSample, schema: DatasetSchema) -> AtomicInstance:
    assert raw.gold is not None
    candidates = raw.candidates or tuple(raw.gold.extractions)
    if not candidates:
        raise EmptyCandidates(f"sample {raw.id}: no candidate queries available")
    return AtomicInstance(
        id=_instance_id(raw, AtomicKind.EXTRACTION, 0),
        source_id=raw.id,
        dataset_id=raw.dataset_id,
        task=raw.task,
        kind=AtomicKind.EXTRACTION,
        lang=raw.lang,
        input_text=raw.text,
        candidates=candidates,
        gold=raw.gold,
    )


def _event_instances(raw: RawSample, schema: DatasetSchema) -> list[AtomicInstance]:
    event_types = dedup(
        (
            *schema.event_types,
            *(etype for _, etype in raw.triggers),
            *(etype for _, etype, _ in raw.arguments),
        )
    )
    out: list[AtomicInstance] = []
    for ordinal, (trigger, etype) in enumerate(raw.triggers):
        out.append(
            AtomicInstance(
                id=_instance_id(raw, AtomicKind.CLASSIFICATION, ordinal),
                source_id=raw.id,
                dataset_id=raw.dataset_id,
                task=raw.task,
                kind=AtomicKind.CLASSIFICATION,
                lang=raw.lang,
                input_text=event_question(raw.text, trigger, raw.lang),
                candidates=event_types,
                gold=AnswerSet.for_labels([etype]),
            )
        )

    roles = tuple(dict.fromkeys(
        (*schema.event_roles, *((etype, role) for role, etype, _ in raw.arguments))
    ))
    candidates = dedup(
        (
            *(event_query(e, raw.lang) for e in event_types),
            *(role_query(e, r, raw.lang) for e, r in roles),
        )
    )
    gold: dict[str, list[str]] = {}
    for trigger, etype in raw.triggers:
        gold.setdefault(event_query(etype, raw.lang), []).append(trigger)
    for role, etype, span in raw.arguments:
        gold.setdefault(role_query(etype, role, raw.lang), []).append(span)
    if not candidates:
        raise EmptyCandidates(f"sample {raw.id}: EE dataset schema has no event types")
    out.append(
        AtomicInstance(
            id=_instance_id(raw, AtomicKind.EXTRACTION, 0),
            source_id=raw.id,
            dataset_id=raw.dataset_id,
            task=raw.task,
            kind=AtomicKind.EXTRACTION,
            lang=raw.lang,
            input_text=raw.text,
            candidates=candidates,
            gold=AnswerSet.for_extractions(gold),
        )
    )
    return out


def _relation_instances(raw: RawSample, schema: DatasetSchema) -> list[AtomicInstance]:
    if not raw.relations:
        raise MissingField(f"sample {raw.id}: RE requires relations")
    relation_types = dedup((*schema.relation_types, *(rel for _, _, rel in raw.relations)))

    pairs: dict[tuple[str, str], list[str]] = {}
    for subject, obj, rel in raw.relations:
        pairs.setdefault((subject, obj), []).append(rel)

    out: list[AtomicInstance] = []
    for ordinal, ((subject, obj), rels) in enumerate(pairs.items()):
        out.append(
            AtomicInstance(
                id=_instance_id(raw, AtomicKind.CLASSIFICATION, ordinal),
                source_id=raw.id,
                dataset_id=raw.dataset_id,
                task=raw.task,
                kind=AtomicKind.CLASSIFICATION,
                lang=raw.lang,
                input_text=relation_question(raw.text, subject, obj, raw.lang),
                candidates=relation_types,
                gold=AnswerSet.for_labels(dedup(rels)),
            )
        )

    gold: dict[str, list[str]] = {}
    for subject, obj, rel in raw.relations:
        gold.setdefault(object_query(rel, raw.lang), []).append(obj)
        gold.setdefault(subject_query(rel, raw.lang), []).append(subject)
    queries: list[str] = []
    for rel in dedup(rel for _, _, rel in raw.relations):
        queries.append(object_query(rel, raw.lang))
        queries.append(subject_query(rel, raw.lang))
    out.append(
        AtomicInstance(
            id=_instance_id(raw, AtomicKind.EXTRACTION, 0),
            source_id=raw.id,
            dataset_id=raw.dataset_id,
            task=raw.task,
            kind=AtomicKind.EXTRACTION,
            lang=raw.lang,
            input_text=raw.text,
            candidates=tuple(queries),
            gold=AnswerSet.for_extractions({q: gold[q] for q in queries}),
        )
    )
    return out


def translate_sample(raw: RawSample, schema: DatasetSchema | None = None) -> list[AtomicInstance]:
    """Translate one sample; see the module docstring for the mapping."""
    schema = schema or DatasetSchema()
    if raw.task in SINGLE_CLS_TASKS:
        if raw.gold is None or raw.gold.kind is not AtomicKind.CLASSIFICATION:
            raise MissingField(f"sample {raw.id}: task {raw.task.value} requires gold labels")
        return [_single_cls(raw, schema)]
    if raw.task in SINGLE_EXT_TASKS:
        if raw.gold is None or raw.gold.kind is not AtomicKind.EXTRACTION:
            raise MissingField(f"sample {raw.id}: task {raw.task.value} requires gold extractions")
        return [_single_ext(raw, schema)]
    if raw.task is TaskKind.EE:
        return _event_instances(raw, schema)
    return _relation_instances(raw, schema)


def translate_dataset(
    samples: list[RawSample],
    descriptor: DatasetDescriptor | None = None,
    separator: str = DEFAULT_SEPARATOR,
) -> list[AtomicInstance]:
    """Translate a whole dataset with a shared dataset-level schema."""
    schema = schema_from_samples(samples, descriptor, separator)
    out: list[AtomicInstance] = []
    for raw in samples:
        out.extend(translate_sample(raw, schema))
    return out


def sample_eval_records(
    dataset: list[AtomicInstance], n: int = 48, seed: int | str = 0
) -> list[AtomicInstance]:
    """Uniform sample without replacement of min(n, len) instances.

    Deterministic for a fixed seed and independent of input order; the
    result is returned in instance-id order.
    """
    if n < 1:
        raise ValueError("sample size must be >= 1")
    if not dataset:
        logger.warning("sampling from an empty dataset")
        return []
    ordered = sorted(dataset, key=lambda inst: inst.id)
    if len(ordered) <= n:
        return ordered
    rng = random.Random(seed)
    return sorted(rng.sample(ordered, n), key=lambda inst: inst.id)
