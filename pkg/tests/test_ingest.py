from __future__ import annotations

import json
from pathlib import Path

import pytest

from atomnlu import ingest
from atomnlu.model import AtomnluError, DatasetDescriptor, TaskKind
from conftest import REGISTRY


def _write(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")


def _ner_desc(path):
    return DatasetDescriptor(
        dataset_id="toy-ner", task=TaskKind.NER, lang="en", role="held_out",
        paths={"test": str(path)},
    )


def _ner_rec(i, **kw):
    rec = {
        "id": f"s{i}", "dataset": "toy-ner", "task": "NER", "lang": "en",
        "text": f"sentence {i}",
        "gold": {"extractions": {"person": [f"name {i}"], "place": []}},
    }
    rec.update(kw)
    return rec


def test_ingest_well_formed_ner_file(tmp_path):
    path = tmp_path / "ner.jsonl"
    _write(path, [_ner_rec(i) for i in range(3)])
    result = ingest.ingest_jsonl(path, _ner_desc(path))
    assert result.ok
    assert len(result.samples) == 3
    assert {"person", "place"} <= set(result.label_universe)


def test_ingest_task_mismatch_reports_line(tmp_path):
    path = tmp_path / "mixed.jsonl"
    _write(path, [_ner_rec(0), _ner_rec(1, task="CLS", gold={"labels": ["x"]})])
    desc = _ner_desc(path)
    result = ingest.ingest_jsonl(path, desc)
    assert len(result.samples) == 1
    assert [(e.kind, e.line) for e in result.errors] == [(ingest.TASK_MISMATCH, 2)]


def test_ingest_duplicate_id_reports_both_lines(tmp_path):
    path = tmp_path / "dup.jsonl"
    records = [_ner_rec(0), _ner_rec(1), _ner_rec(1), _ner_rec(2), _ner_rec(1)]
    records[2]["text"] = "different body, same id"
    _write(path, records)
    result = ingest.ingest_jsonl(path, _ner_desc(path))
    assert len(result.samples) == 3
    assert [e.kind for e in result.errors] == [ingest.DUPLICATE_ID, ingest.DUPLICATE_ID]
    assert result.errors[0].line == 3
    assert "line 2" in result.errors[0].reason
    assert result.errors[1].line == 5


def test_ingest_malformed_json_and_missing_keys(tmp_path):
    path = tmp_path / "bad.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("{not json\n")
        fh.write(json.dumps({"id": "x", "dataset": "toy-ner", "task": "NER", "lang": "en"}) + "\n")
        fh.write(json.dumps({"id": "y", "dataset": "toy-ner", "task": "WAT", "lang": "en", "text": "t"}) + "\n")
    result = ingest.ingest_jsonl(path, _ner_desc(path))
    assert not result.samples
    kinds = [(e.kind, e.line) for e in result.errors]
    assert kinds == [
        (ingest.MALFORMED_RECORD, 1),
        (ingest.MALFORMED_RECORD, 2),
        (ingest.MALFORMED_RECORD, 3),
    ]


def test_ingest_strips_mrc_option_markers(tmp_path):
    path = tmp_path / "mc.jsonl"
    _write(path, [{
        "id": "1", "dataset": "mc", "task": "MRC_MC", "lang": "en",
        "text": "the best method for detecting texture is",
        "candidates": ["(A) rubbing it", "(B) seeing it"],
        "gold": {"labels": ["(A) rubbing it"]},
    }])
    desc = DatasetDescriptor(
        dataset_id="mc", task=TaskKind.MRC_MC, lang="en", role="held_out",
        paths={"test": str(path)},
    )
    result = ingest.ingest_jsonl(path, desc)
    assert result.ok
    (sample,) = result.samples
    assert sample.gold.labels == ("rubbing it",)
    assert sample.candidates == ("rubbing it", "seeing it")


def test_ingest_rejects_colon_in_query(tmp_path):
    path = tmp_path / "colon.jsonl"
    _write(path, [_ner_rec(0, gold={"extractions": {"bad: query": ["x"]}})])
    result = ingest.ingest_jsonl(path, _ner_desc(path))
    assert not result.samples
    assert "colon" in result.errors[0].reason


def test_ingest_missing_file():
    with pytest.raises(AtomnluError):
        ingest.ingest_jsonl("/nonexistent/nope.jsonl", _ner_desc("x"))


def test_registry_loads_fixtures_and_resolves_paths():
    descriptors = ingest.load_registry(REGISTRY)
    assert len(descriptors) == 23
    tasks = {d.task for d in descriptors}
    assert tasks == set(TaskKind)
    langs = {(d.task, d.lang) for d in descriptors}
    for task in TaskKind:
        assert (task, "en") in langs or (task, "zh") in langs
    for desc in descriptors:
        for path in desc.paths.values():
            assert Path(path).exists()


def test_registry_rejects_duplicate_dataset_ids(tmp_path):
    entry = {
        "dataset_id": "d", "task": "CLS", "lang": "en", "role": "held_out",
        "paths": {}, "label_universe": [],
    }
    path = tmp_path / "registry.json"
    path.write_text(json.dumps({"datasets": [entry, entry]}), encoding="utf-8")
    with pytest.raises(AtomnluError):
        ingest.load_registry(path)


def test_every_fixture_dataset_ingests_cleanly():
    for desc in ingest.load_registry(REGISTRY):
        for split, path in desc.paths.items():
            result = ingest.ingest_jsonl(path, desc)
            assert result.ok, (desc.dataset_id, split, result.errors)
            assert result.samples
            # registry universe extended to cover observed gold labels/queries
            for raw in result.samples:
                if raw.gold is not None:
                    gold_items = set(raw.gold.labels) | set(raw.gold.extractions)
                    assert gold_items <= set(result.label_universe)
