"""Dataset ingestion: JSON Lines in the canonical sample format.

Required keys: id, dataset, task, lang, text. Optional: text2, mention,
triggers, relations, arguments, candidates, gold ({"labels": [...]} or
{"extractions": {query: [spans]}}). Invalid lines never abort ingestion;
they are reported with their line numbers.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .model import (
    AnswerSet,
    AtomnluError,
    DatasetDescriptor,
    RawSample,
    TaskKind,
    dedup,
    strip_option_marker,
)

MALFORMED_RECORD = "MalformedRecord"
DUPLICATE_ID = "DuplicateId"
TASK_MISMATCH = "TaskMismatch"


@dataclass(frozen=True)
class IngestError:
    kind: str
    line: int
    reason: str

    def to_json(self) -> dict:
        return {"kind": self.kind, "line": self.line, "reason": self.reason}


@dataclass
class IngestResult:
    samples: list[RawSample]
    errors: list[IngestError]
    label_universe: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.errors


def _as_pairs(value, width: int, name: str) -> tuple[tuple, ...]:
    if not isinstance(value, list):
        raise ValueError(f"{name} must be a list of {width}-element lists")
    out = []
    for item in value:
        if not isinstance(item, list) or len(item) != width:
            raise ValueError(f"{name} entries must be {width}-element lists")
        out.append(tuple(str(x) for x in item))
    return tuple(out)


def parse_record(obj: dict, descriptor: DatasetDescriptor) -> RawSample:
    """Build a RawSample from one JSON record; raises ValueError on problems."""
    for key in ("id", "dataset", "task", "lang", "text"):
        if key not in obj:
            raise ValueError(f"missing required key {key!r}")
    task = TaskKind(str(obj["task"]))

    gold = None
    if "gold" in obj:
        gold = AnswerSet.from_json(obj["gold"])
        if task is TaskKind.MRC_MC:
            gold = AnswerSet.for_labels(strip_option_marker(x) for x in gold.labels)

    candidates = tuple(str(c) for c in obj.get("candidates", []))
    if task is TaskKind.MRC_MC:
        candidates = dedup(strip_option_marker(c) for c in candidates)

    raw = RawSample(
        id=str(obj["id"]),
        dataset_id=str(obj["dataset"]),
        task=task,
        lang=str(obj["lang"]),
        text=str(obj["text"]),
        text2=str(obj["text2"]) if "text2" in obj else None,
        mention=str(obj["mention"]) if "mention" in obj else None,
        triggers=_as_pairs(obj["triggers"], 2, "triggers") if "triggers" in obj else (),
        arguments=_as_pairs(obj["arguments"], 3, "arguments") if "arguments" in obj else (),
        relations=_as_pairs(obj["relations"], 3, "relations") if "relations" in obj else (),
        gold=gold,
        candidates=candidates,
    )
    problems = raw.problems()
    if raw.dataset_id != descriptor.dataset_id:
        problems.append(
            f"record dataset {raw.dataset_id!r} != descriptor {descriptor.dataset_id!r}"
        )
    if raw.lang != descriptor.lang:
        problems.append(f"record lang {raw.lang!r} != descriptor {descriptor.lang!r}")
    if problems:
        raise ValueError("; ".join(problems))
    return raw


def _gold_items(raw: RawSample) -> list[str]:
    """Every label/query the sample contributes to the dataset universe."""
    from .translate import event_query, object_query, role_query, subject_query

    items: list[str] = []
    if raw.gold is not None:
        items.extend(raw.gold.labels)
        items.extend(raw.gold.extractions)
    items.extend(raw.candidates)
    for _, etype in raw.triggers:
        items.append(etype)
        items.append(event_query(etype, raw.lang))
    for role, etype, _ in raw.arguments:
        items.append(etype)
        items.append(role_query(etype, role, raw.lang))
    for _, _, rel in raw.relations:
        items.append(rel)
        items.append(object_query(rel, raw.lang))
        items.append(subject_query(rel, raw.lang))
    return items


def ingest_jsonl(path: str | Path, descriptor: DatasetDescriptor) -> IngestResult:
    """Read one canonical JSONL file against its registry descriptor.

    Returns all valid samples plus per-line errors (MalformedRecord,
    DuplicateId with both line numbers, TaskMismatch) and the verified /
    extended label universe.
    """
    path = Path(path)
    if not path.exists():
        raise AtomnluError(f"no such file: {path}")
    samples: list[RawSample] = []
    errors: list[IngestError] = []
    seen: dict[str, int] = {}
    universe: list[str] = list(descriptor.label_universe)

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append(IngestError(MALFORMED_RECORD, lineno, f"invalid JSON: {exc}"))
                continue
            try:
                task = TaskKind(str(obj.get("task")))
            except ValueError:
                errors.append(
                    IngestError(MALFORMED_RECORD, lineno, f"unknown task {obj.get('task')!r}")
                )
                continue
            if task is not descriptor.task:
                errors.append(
                    IngestError(
                        TASK_MISMATCH,
                        lineno,
                        f"record task {task.value} != dataset task {descriptor.task.value}",
                    )
                )
                continue
            try:
                raw = parse_record(obj, descriptor)
            except (ValueError, AtomnluError) as exc:
                errors.append(IngestError(MALFORMED_RECORD, lineno, str(exc)))
                continue
            if raw.id in seen:
                errors.append(
                    IngestError(
                        DUPLICATE_ID,
                        lineno,
                        f"id {raw.id!r} already used on line {seen[raw.id]}",
                    )
                )
                continue
            seen[raw.id] = lineno
            samples.append(raw)
            universe.extend(_gold_items(raw))

    return IngestResult(samples=samples, errors=errors, label_universe=dedup(universe))


def load_registry(path: str | Path) -> list[DatasetDescriptor]:
    """Read the dataset registry; relative split paths resolve beside it."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    entries = obj["datasets"] if isinstance(obj, dict) else obj
    out = []
    for entry in entries:
        desc = DatasetDescriptor.from_json(entry)
        resolved = {
            split: str((path.parent / p) if not Path(p).is_absolute() else Path(p))
            for split, p in desc.paths.items()
        }
        out.append(
            DatasetDescriptor(
                dataset_id=desc.dataset_id,
                task=desc.task,
                lang=desc.lang,
                role=desc.role,
                paths=resolved,
                label_universe=desc.label_universe,
                split_sizes=desc.split_sizes,
            )
        )
    ids = [d.dataset_id for d in out]
    if len(set(ids)) != len(ids):
        raise AtomnluError("registry contains duplicate dataset ids")
    return out
