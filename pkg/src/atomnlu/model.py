"""Canonical data model shared by every stage of the pipeline.

Every supported NLU task is reduced to one of two atomic formulations:
pick a subset of candidate labels (classification) or return span texts
for candidate queries (extraction). The types here carry data between
ingestion, translation, augmentation, the prompt codec and scoring.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence


class AtomnluError(Exception):
    """Base class for errors raised by this package."""

    code = "error"


class MissingField(AtomnluError):
    code = "missing_field"


class EmptyCandidates(AtomnluError):
    code = "empty_candidates"


class InvalidAnswer(AtomnluError):
    code = "invalid_answer"


class KindMismatch(AtomnluError):
    code = "kind_mismatch"


class TaskKind(str, Enum):
    """The eleven supported source task kinds."""

    CLS = "CLS"          # topic / text classification
    SA = "SA"            # sentiment analysis
    ID = "ID"            # intent detection
    NLI = "NLI"          # natural language inference (sentence pair)
    ET = "ET"            # entity typing (marked mention)
    MRC_MC = "MRC_MC"    # reading comprehension, multiple choice
    MRC_SE = "MRC_SE"    # reading comprehension, span extraction
    NER = "NER"          # named entity recognition
    SF = "SF"            # slot filling
    EE = "EE"            # event extraction
    RE = "RE"            # relation extraction


class AtomicKind(str, Enum):
    """The two atomic formulations every task is translated into."""

    CLASSIFICATION = "CLS"
    EXTRACTION = "EXT"


# Tasks whose translation is a single classification / extraction instance.
SINGLE_CLS_TASKS = frozenset(
    {TaskKind.CLS, TaskKind.SA, TaskKind.ID, TaskKind.NLI, TaskKind.ET, TaskKind.MRC_MC}
)
SINGLE_EXT_TASKS = frozenset({TaskKind.NER, TaskKind.SF, TaskKind.MRC_SE})
MULTI_ATOMIC_TASKS = frozenset({TaskKind.EE, TaskKind.RE})

LANGS = ("en", "zh")

# Leading multiple-choice option markers like "(A) " are presentation noise;
# exact-match scoring requires them gone.
_OPTION_MARKER = re.compile(r"^\([A-Za-z0-9]\)\s+")


def strip_option_marker(label: str) -> str:
    return _OPTION_MARKER.sub("", label)


def dedup(items: Iterable[str]) -> tuple[str, ...]:
    """Order-preserving deduplication."""
    return tuple(dict.fromkeys(items))


@dataclass(frozen=True)
class AnswerSet:
    """A structured answer: a label subset or a query -> spans mapping.

    Exactly one of ``labels`` / ``extractions`` is populated, matching
    ``kind``. Labels and per-query span lists are deduplicated at
    construction, preserving first-occurrence order.
    """

    kind: AtomicKind
    labels: tuple[str, ...] = ()
    extractions: dict[str, tuple[str, ...]] = field(default_factory=dict)

    @staticmethod
    def for_labels(labels: Iterable[str]) -> "AnswerSet":
        return AnswerSet(kind=AtomicKind.CLASSIFICATION, labels=dedup(labels))

    @staticmethod
    def for_extractions(mapping: Mapping[str, Iterable[str]]) -> "AnswerSet":
        ext = {query: dedup(spans) for query, spans in mapping.items()}
        return AnswerSet(kind=AtomicKind.EXTRACTION, extractions=ext)

    def __post_init__(self) -> None:
        if self.kind is AtomicKind.CLASSIFICATION and self.extractions:
            raise InvalidAnswer("classification answers cannot carry extractions")
        if self.kind is AtomicKind.EXTRACTION and self.labels:
            raise InvalidAnswer("extraction answers cannot carry labels")
        if len(set(self.labels)) != len(self.labels):
            raise InvalidAnswer("duplicate labels")
        for query, spans in self.extractions.items():
            if len(set(spans)) != len(spans):
                raise InvalidAnswer(f"duplicate spans for query {query!r}")

    def positive_items(self) -> tuple[str, ...]:
        """Labels (CLS) or queries with at least one span (EXT)."""
        if self.kind is AtomicKind.CLASSIFICATION:
            return self.labels
        return tuple(q for q, spans in self.extractions.items() if spans)

    def is_empty(self) -> bool:
        return not self.positive_items()

    def to_json(self) -> dict:
        if self.kind is AtomicKind.CLASSIFICATION:
            return {"labels": list(self.labels)}
        return {"extractions": {q: list(s) for q, s in self.extractions.items()}}

    @staticmethod
    def from_json(obj: Mapping) -> "AnswerSet":
        if "labels" in obj and "extractions" in obj:
            raise InvalidAnswer("gold must carry either labels or extractions, not both")
        if "labels" in obj:
            return AnswerSet.for_labels(str(x) for x in obj["labels"])
        if "extractions" in obj:
            return AnswerSet.for_extractions(
                {str(q): [str(s) for s in spans] for q, spans in obj["extractions"].items()}
            )
        raise InvalidAnswer("gold must carry labels or extractions")


def answers_equivalent(a: AnswerSet, b: AnswerSet) -> bool:
    """Equality up to per-query span-set semantics.

    Queries mapped to an empty span list count as absent, and span order
    within a query is ignored; label sets compare positionally-insensitively.
    """
    if a.kind is not b.kind:
        return False
    if a.kind is AtomicKind.CLASSIFICATION:
        return set(a.labels) == set(b.labels)
    na = {q: frozenset(s) for q, s in a.extractions.items() if s}
    nb = {q: frozenset(s) for q, s in b.extractions.items() if s}
    return na == nb


@dataclass(frozen=True)
class RawSample:
    """One annotated example from a source dataset.

    ``gold`` is absent for EE and RE, whose per-atomic gold is derived at
    translation time from ``triggers``/``arguments``/``relations``.
    ``candidates`` optionally pins the candidate list shown to the model
    (required for MRC_MC option sets; elsewhere it defaults to the dataset
    label universe or the gold query set).
    """

    id: str
    dataset_id: str
    task: TaskKind
    lang: str
    text: str
    text2: str | None = None
    mention: str | None = None
    triggers: tuple[tuple[str, str], ...] = ()          # (trigger_text, event_type)
    arguments: tuple[tuple[str, str, str], ...] = ()    # (role, event_type, span)
    relations: tuple[tuple[str, str, str], ...] = ()    # (subject, object, relation_type)
    gold: AnswerSet | None = None
    candidates: tuple[str, ...] = ()

    def problems(self) -> list[str]:
        """Invariant violations, empty when the sample is well-formed."""
        out: list[str] = []
        if not self.text:
            out.append("text is empty")
        if self.lang not in LANGS:
            out.append(f"unknown lang {self.lang!r}")
        if (self.text2 is not None) != (self.task is TaskKind.NLI):
            out.append("text2 must be present exactly for NLI samples")
        if (self.mention is not None) != (self.task is TaskKind.ET):
            out.append("mention must be present exactly for ET samples")
        if self.task in SINGLE_CLS_TASKS:
            if self.gold is None or self.gold.kind is not AtomicKind.CLASSIFICATION:
                out.append("classification-style tasks need gold labels")
        elif self.task in SINGLE_EXT_TASKS:
            if self.gold is None or self.gold.kind is not AtomicKind.EXTRACTION:
                out.append("extraction-style tasks need gold extractions")
        elif self.task is TaskKind.EE:
            if not self.triggers and not self.arguments:
                out.append("EE samples need triggers (and optionally arguments)")
        elif self.task is TaskKind.RE:
            if not self.relations:
                out.append("RE samples need relations")
        for query in (self.gold.extractions if self.gold else {}):
            if ": " in query or "：" in query:
                out.append(f"query {query!r} contains a colon separator")
        return out

    def to_json(self) -> dict:
        rec: dict = {
            "id": self.id,
            "dataset": self.dataset_id,
            "task": self.task.value,
            "lang": self.lang,
            "text": self.text,
        }
        if self.text2 is not None:
            rec["text2"] = self.text2
        if self.mention is not None:
            rec["mention"] = self.mention
        if self.triggers:
            rec["triggers"] = [list(t) for t in self.triggers]
        if self.arguments:
            rec["arguments"] = [list(a) for a in self.arguments]
        if self.relations:
            rec["relations"] = [list(r) for r in self.relations]
        if self.candidates:
            rec["candidates"] = list(self.candidates)
        if self.gold is not None:
            rec["gold"] = self.gold.to_json()
        return rec


@dataclass(frozen=True)
class AtomicInstance:
    """A single classification or extraction unit, immutable once built.

    Invariants (enforced at construction): candidates are non-empty and
    duplicate-free; CLS gold labels are a subset of candidates; every EXT
    gold query is a candidate (candidates missing from the gold mapping
    are gold-empty).
    """

    id: str
    source_id: str
    dataset_id: str
    task: TaskKind
    kind: AtomicKind
    lang: str
    input_text: str
    candidates: tuple[str, ...]
    gold: AnswerSet

    def __post_init__(self) -> None:
        if not self.candidates:
            raise EmptyCandidates(f"instance {self.id} has no candidates")
        if len(set(self.candidates)) != len(self.candidates):
            raise InvalidAnswer(f"instance {self.id} has duplicate candidates")
        if self.gold.kind is not self.kind:
            raise KindMismatch(f"instance {self.id}: gold kind != instance kind")
        cand = set(self.candidates)
        if self.kind is AtomicKind.CLASSIFICATION:
            stray = [x for x in self.gold.labels if x not in cand]
        else:
            stray = [q for q in self.gold.extractions if q not in cand]
        if stray:
            raise InvalidAnswer(f"instance {self.id}: gold items outside candidates: {stray!r}")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "source_id": self.source_id,
            "dataset": self.dataset_id,
            "task": self.task.value,
            "kind": self.kind.value,
            "lang": self.lang,
            "input_text": self.input_text,
            "candidates": list(self.candidates),
            "gold": self.gold.to_json(),
        }

    @staticmethod
    def from_json(obj: Mapping) -> "AtomicInstance":
        return AtomicInstance(
            id=str(obj["id"]),
            source_id=str(obj["source_id"]),
            dataset_id=str(obj["dataset"]),
            task=TaskKind(obj["task"]),
            kind=AtomicKind(obj["kind"]),
            lang=str(obj["lang"]),
            input_text=str(obj["input_text"]),
            candidates=tuple(str(c) for c in obj["candidates"]),
            gold=AnswerSet.from_json(obj["gold"]),
        )


ROLES = ("held_in", "held_out", "pretrain")


@dataclass(frozen=True)
class DatasetDescriptor:
    """Registry entry for one dataset: identity, role and label universe."""

    dataset_id: str
    task: TaskKind
    lang: str
    role: str
    paths: dict[str, str] = field(default_factory=dict)        # split -> file path
    label_universe: tuple[str, ...] = ()
    split_sizes: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise AtomnluError(f"unknown dataset role {self.role!r}")
        if self.lang not in LANGS:
            raise AtomnluError(f"unknown dataset lang {self.lang!r}")

    def to_json(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "task": self.task.value,
            "lang": self.lang,
            "role": self.role,
            "paths": dict(self.paths),
            "label_universe": list(self.label_universe),
            "split_sizes": dict(self.split_sizes),
        }

    @staticmethod
    def from_json(obj: Mapping) -> "DatasetDescriptor":
        return DatasetDescriptor(
            dataset_id=str(obj["dataset_id"]),
            task=TaskKind(obj["task"]),
            lang=str(obj["lang"]),
            role=str(obj["role"]),
            paths={str(k): str(v) for k, v in obj.get("paths", {}).items()},
            label_universe=tuple(str(x) for x in obj.get("label_universe", [])),
            split_sizes={str(k): int(v) for k, v in obj.get("split_sizes", {}).items()},
        )


def dump_jsonl(records: Iterable[Mapping], path) -> int:
    """Write records as UTF-8 JSON Lines; returns the record count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            n += 1
    return n


def load_jsonl(path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def load_instances(path) -> list[AtomicInstance]:
    return [AtomicInstance.from_json(obj) for obj in load_jsonl(path)]


def dump_instances(instances: Sequence[AtomicInstance], path) -> int:
    return dump_jsonl((inst.to_json() for inst in instances), path)
