from __future__ import annotations

import json

import pytest

from atomnlu import ingest, translate
from atomnlu.model import (
    AnswerSet,
    AtomicInstance,
    AtomicKind,
    MissingField,
    RawSample,
    TaskKind,
    dump_instances,
    load_instances,
)
from conftest import REGISTRY


def _load_fixture_samples():
    """All fixture datasets, ingested through the registry."""
    out = {}
    for desc in ingest.load_registry(REGISTRY):
        result = ingest.ingest_jsonl(desc.paths["test"], desc)
        assert result.ok, result.errors
        out[desc.dataset_id] = (desc, result.samples)
    return out


def test_ner_sample_translates_to_single_extraction_instance():
    raw = RawSample(
        id="1", dataset_id="ner-en", task=TaskKind.NER, lang="en",
        text="A frame language is a technology used for knowledge representation in artificial intelligence .",
        candidates=("programlang", "country", "researcher", "organisation", "product", "field", "task"),
        gold=AnswerSet.for_extractions(
            {"task": ["knowledge representation"], "field": ["artificial intelligence"]}
        ),
    )
    (inst,) = translate.translate_sample(raw)
    assert inst.kind is AtomicKind.EXTRACTION
    assert inst.candidates[0] == "programlang"
    assert inst.gold.extractions["task"] == ("knowledge representation",)
    assert inst.id == "ner-en/1/EXT/0"


def test_ee_classification_renders_event_question_zh():
    universe16 = (
        "法律/逮捕入狱", "个人/提名", "法律/宣判无罪", "生活/死亡", "个人/选举", "移动/运输",
        "交易/资金流动", "商业/组织终结", "法律/控罪起诉", "法律/赦免", "生活/结婚", "法律/引渡",
        "法律/罚款", "法律/审讯", "冲突/示威", "商业/宣布破产",
    )
    raw = RawSample(
        id="7", dataset_id="ee-zh", task=TaskKind.EE, lang="zh",
        text="这些军事行动造成了大量人员伤亡",
        triggers=(("亡", "生活/死亡"),),
    )
    schema = translate.DatasetSchema(event_types=universe16)
    cls, ext = translate.translate_sample(raw, schema)
    assert cls.kind is AtomicKind.CLASSIFICATION
    assert cls.input_text.endswith("中亡是什么事件？")
    assert cls.gold.labels == ("生活/死亡",)
    assert cls.candidates == universe16
    assert ext.kind is AtomicKind.EXTRACTION
    assert ext.gold.extractions == {"生活/死亡事件": ("亡",)}
    assert set(ext.candidates) == {f"{e}事件" for e in universe16}


def test_ee_english_rendering_and_roles():
    raw = RawSample(
        id="1", dataset_id="ee-en", task=TaskKind.EE, lang="en",
        text="I live in Redwood City, which they actually moved the trial here a couple months into it",
        triggers=(("trial", "Justice:Trial-Hearing"), ("it", "Justice:Trial-Hearing")),
        arguments=(("Place", "Justice:Trial-Hearing", "here"),),
    )
    instances = translate.translate_sample(raw)
    assert len(instances) == len(raw.triggers) + 1
    cls0, cls1, ext = instances
    assert cls0.input_text == (
        "What is the event of trial in I live in Redwood City, which they actually "
        "moved the trial here a couple months into it?"
    )
    assert cls1.gold.labels == ("Justice:Trial-Hearing",)
    assert ext.gold.extractions == {
        "Justice:Trial-Hearing event": ("trial", "it"),
        "the Place of event Justice:Trial-Hearing": ("here",),
    }
    assert "Justice:Trial-Hearing event" in ext.candidates
    assert "the Place of event Justice:Trial-Hearing" in ext.candidates


def test_re_translation_pairs_and_queries():
    raw = RawSample(
        id="3", dataset_id="re-zh", task=TaskKind.RE, lang="zh",
        text="鲁迅出生于绍兴，后来长期居住在上海。",
        relations=(("鲁迅", "绍兴", "出生地"), ("鲁迅", "上海", "居住地")),
    )
    instances = translate.translate_sample(raw)
    assert len(instances) == 2 + 1  # two (subject, object) pairs + one extraction
    cls0, cls1, ext = instances
    assert cls0.input_text == "鲁迅出生于绍兴，后来长期居住在上海。中鲁迅和绍兴的关系是什么？"
    assert cls0.gold.labels == ("出生地",)
    assert set(cls0.candidates) == {"出生地", "居住地"}
    # object query comes before subject query for each relation
    assert ext.candidates == (
        "出生地关系的宾语", "出生地关系的主语", "居住地关系的宾语", "居住地关系的主语",
    )
    assert ext.gold.extractions["出生地关系的宾语"] == ("绍兴",)
    assert ext.gold.extractions["出生地关系的主语"] == ("鲁迅",)


def test_re_english_question_rendering():
    raw = RawSample(
        id="1", dataset_id="re-en", task=TaskKind.RE, lang="en",
        text="Marie Curie worked at the University of Paris.",
        relations=(("Marie Curie", "University of Paris", "employer"),),
    )
    cls, ext = translate.translate_sample(raw)
    assert cls.input_text == (
        "What is the relation between Marie Curie and University of Paris "
        "in Marie Curie worked at the University of Paris.?"
    )
    assert ext.candidates == ("the object of employer", "the subject of employer")


def test_nli_and_et_concatenation_uses_tab():
    nli = RawSample(
        id="1", dataset_id="nli-en", task=TaskKind.NLI, lang="en",
        text="premise", text2="hypothesis",
        gold=AnswerSet.for_labels(["entailment"]),
    )
    (inst,) = translate.translate_sample(
        nli, translate.DatasetSchema(labels=("entailment", "neutral"))
    )
    assert inst.input_text == "premise\thypothesis"
    et = RawSample(
        id="2", dataset_id="et-zh", task=TaskKind.ET, lang="zh",
        text="我觉得那些书太肤浅了。", mention="我",
        gold=AnswerSet.for_labels(["人"]),
    )
    (inst,) = translate.translate_sample(et, translate.DatasetSchema(labels=("人", "作家")))
    assert inst.input_text == "我觉得那些书太肤浅了。\t我"
    # separator is configurable
    (inst,) = translate.translate_sample(
        et, translate.DatasetSchema(labels=("人",), separator=" | ")
    )
    assert inst.input_text == "我觉得那些书太肤浅了。 | 我"


def test_nli_missing_second_sentence():
    raw = RawSample(
        id="1", dataset_id="nli-en", task=TaskKind.NLI, lang="en",
        text="only one sentence", gold=AnswerSet.for_labels(["entailment"]),
    )
    with pytest.raises(MissingField):
        translate.translate_sample(raw, translate.DatasetSchema(labels=("entailment",)))


def test_re_without_relations_is_rejected():
    raw = RawSample(id="1", dataset_id="re-en", task=TaskKind.RE, lang="en", text="t")
    with pytest.raises(MissingField):
        translate.translate_sample(raw)


def test_instance_count_invariant_over_fixture_corpus():
    for dataset_id, (desc, samples) in _load_fixture_samples().items():
        instances = translate.translate_dataset(samples, desc)
        expected = 0
        for raw in samples:
            if raw.task is TaskKind.EE:
                expected += len(raw.triggers) + 1
            elif raw.task is TaskKind.RE:
                expected += len(dict.fromkeys((s, o) for s, o, _ in raw.relations)) + 1
            else:
                expected += 1
        assert len(instances) == expected, dataset_id


def test_all_gold_queries_within_candidates_over_fixture_corpus():
    for dataset_id, (desc, samples) in _load_fixture_samples().items():
        for inst in translate.translate_dataset(samples, desc):
            if inst.kind is AtomicKind.EXTRACTION:
                assert set(inst.gold.extractions) <= set(inst.candidates), inst.id
            else:
                assert set(inst.gold.labels) <= set(inst.candidates), inst.id


def test_translation_is_pure():
    for dataset_id, (desc, samples) in _load_fixture_samples().items():
        first = [i.to_json() for i in translate.translate_dataset(samples, desc)]
        second = [i.to_json() for i in translate.translate_dataset(samples, desc)]
        assert json.dumps(first, ensure_ascii=False) == json.dumps(second, ensure_ascii=False)


def test_translate_serialize_load_round_trip(tmp_path):
    for dataset_id, (desc, samples) in _load_fixture_samples().items():
        instances = translate.translate_dataset(samples, desc)
        path = tmp_path / f"{dataset_id}.jsonl"
        dump_instances(instances, path)
        assert load_instances(path) == instances


# ------------------------------------------------------ eval record sample


def _many_instances(n):
    rng_free = [
        AtomicInstance(
            id=f"d/{i:04d}/CLS/0", source_id=str(i), dataset_id="d", task=TaskKind.CLS,
            kind=AtomicKind.CLASSIFICATION, lang="en", input_text=f"t{i}",
            candidates=("a", "b"), gold=AnswerSet.for_labels(["a"]),
        )
        for i in range(n)
    ]
    return rng_free


def test_sample_eval_records_deterministic_and_sized():
    pool = _many_instances(500)
    first = translate.sample_eval_records(pool, 48, seed=7)
    second = translate.sample_eval_records(list(reversed(pool)), 48, seed=7)
    assert len(first) == 48
    assert first == second  # input order is irrelevant
    assert [i.id for i in first] == sorted(i.id for i in first)


def test_sample_eval_records_undersized_dataset_returns_all():
    pool = _many_instances(30)
    assert len(translate.sample_eval_records(pool, 48, seed=7)) == 30


def test_sample_eval_records_seed_sensitivity():
    pool = _many_instances(500)
    base = translate.sample_eval_records(pool, 48, seed=7)
    assert any(
        translate.sample_eval_records(pool, 48, seed=s) != base for s in range(8, 18)
    )


def test_sample_eval_records_validates_n_and_handles_empty():
    with pytest.raises(ValueError):
        translate.sample_eval_records(_many_instances(3), 0, seed=1)
    assert translate.sample_eval_records([], 48, seed=1) == []
