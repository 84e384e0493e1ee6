from __future__ import annotations

import json
import random

import pytest

from atomnlu import ptgen
from atomnlu.augment import AugmentationConfig
from atomnlu.model import AtomicKind, TaskKind


# ----------------------------------------------------------------- prompts


def test_entity_prompt_en_verbatim():
    prompt = ptgen.build_pt_prompt("entity_bundle", "en", "Alan Turing worked at Bletchley Park.")
    assert prompt.rendered == (
        "Given the following text, identify all fine-grained entities and assign no "
        'less than three entity types to each entity. "Alan Turing worked at Bletchley Park."'
    )


def test_cls_prompt_en_verbatim():
    prompt = ptgen.build_pt_prompt("cls_bundle", "en", "Some text.")
    assert prompt.rendered.startswith(
        "You are asked to do the following 3 tasks: text classification, sentiment "
        "analysis, intent detection."
    )
    assert '1. The text should be classified into at least 5 categories, separated by "/".' in prompt.rendered
    assert "2. Sentiment should be in one of positive, negative or neutral." in prompt.rendered
    assert "3. The intent should contain at most 2 words" in prompt.rendered
    assert "4. The output should be in json format." in prompt.rendered
    assert "5. Do not return the original text." in prompt.rendered
    assert prompt.rendered.endswith('"Some text."')


def test_cls_prompt_zh_contains_three_tasks_and_json_rule():
    prompt = ptgen.build_pt_prompt("cls_bundle", "zh", "一段文字")
    assert "文本分类、情感分析、意图识别" in prompt.rendered
    assert "至少预测5个类别，类别之间用/分割" in prompt.rendered
    assert "结果使用json格式返回" in prompt.rendered
    assert prompt.rendered.endswith("“一段文字”")


def test_entity_prompt_zh_verbatim():
    prompt = ptgen.build_pt_prompt("entity_bundle", "zh", "一段文字")
    assert prompt.rendered == "给定下面文本，识别所有细粒度实体，并对每个实体打标不少于三个实体类型。“一段文字”"


def test_prompt_rejects_empty_text_and_unknown_kind():
    with pytest.raises(ValueError):
        ptgen.build_pt_prompt("cls_bundle", "en", "")
    with pytest.raises(ValueError):
        ptgen.build_pt_prompt("mystery", "en", "text")
    with pytest.raises(ValueError):
        ptgen.build_pt_prompt("cls_bundle", "fr", "text")


# ------------------------------------------------------------------ parse


def test_parse_valid_cls_response():
    response = json.dumps({
        "categories": "tech/science/news/AI/history",
        "sentiment": "neutral",
        "intent": "describe topic",
    })
    sample = ptgen.parse_pt_response("cls_bundle", "en", "t", response)
    assert isinstance(sample, ptgen.PtSample)
    assert sample.categories == ("tech", "science", "news", "AI", "history")
    assert sample.sentiment == "neutral"
    assert sample.intent == "describe topic"


def test_parse_cls_accepts_prose_wrapped_json_and_zh_keys():
    response = '当然，结果如下：{"分类": "文化/历史/博物馆/艺术/展览", "情感": "中性", "意图": "介绍展览"}'
    sample = ptgen.parse_pt_response("cls_bundle", "zh", "t", response)
    assert isinstance(sample, ptgen.PtSample)
    assert len(sample.categories) == 5
    assert sample.sentiment == "中性"


def test_parse_cls_too_few_categories():
    response = json.dumps({"categories": "a/b/c", "sentiment": "neutral", "intent": "x"})
    failure = ptgen.parse_pt_response("cls_bundle", "en", "t", response)
    assert isinstance(failure, ptgen.ParseFailure)
    assert failure.reason == ptgen.TOO_FEW_CATEGORIES


def test_parse_cls_bad_sentiment():
    response = json.dumps({"categories": "a/b/c/d/e", "sentiment": "ecstatic", "intent": "x"})
    failure = ptgen.parse_pt_response("cls_bundle", "en", "t", response)
    assert failure.reason == ptgen.BAD_SENTIMENT
    # zh sentiment vocabulary is its own set
    response = json.dumps({"分类": "a/b/c/d/e", "情感": "positive", "意图": "x"})
    failure = ptgen.parse_pt_response("cls_bundle", "zh", "t", response)
    assert failure.reason == ptgen.BAD_SENTIMENT


def test_parse_cls_intent_too_long():
    response = json.dumps({"categories": "a/b/c/d/e", "sentiment": "neutral",
                           "intent": "do three things now"})
    failure = ptgen.parse_pt_response("cls_bundle", "en", "t", response)
    assert failure.reason == ptgen.INTENT_TOO_LONG


def test_parse_cls_no_json():
    failure = ptgen.parse_pt_response("cls_bundle", "en", "t", "no structured output here")
    assert failure.reason == ptgen.NO_JSON_FOUND


def test_parse_entities_json_object_form():
    response = json.dumps({
        "Alan Turing": ["mathematician", "codebreaker", "person"],
        "Bletchley Park": ["estate", "site", "location"],
    })
    sample = ptgen.parse_pt_response("entity_bundle", "en", "t", response)
    assert isinstance(sample, ptgen.PtSample)
    assert sample.entities["Alan Turing"] == ("mathematician", "codebreaker", "person")


def test_parse_entities_list_form_and_line_form():
    response = json.dumps([
        {"entity": "tram line", "types": ["system", "route", "infrastructure"]},
    ])
    sample = ptgen.parse_pt_response("entity_bundle", "en", "t", response)
    assert sample.entities == {"tram line": ("system", "route", "infrastructure")}
    lines = "Alan Turing: mathematician, person, codebreaker\nCWI: institute, employer, organisation"
    sample = ptgen.parse_pt_response("entity_bundle", "en", "t", lines)
    assert set(sample.entities) == {"Alan Turing", "CWI"}


def test_parse_entities_too_few_types():
    response = json.dumps({"Alan Turing": ["mathematician", "person"]})
    failure = ptgen.parse_pt_response("entity_bundle", "en", "t", response)
    assert failure.reason == ptgen.TOO_FEW_TYPES


def test_parse_entities_empty():
    failure = ptgen.parse_pt_response("entity_bundle", "en", "t", "{}")
    assert failure.reason == ptgen.NO_ENTITIES
    failure = ptgen.parse_pt_response("entity_bundle", "en", "t", "nothing at all")
    assert failure.reason == ptgen.NO_JSON_FOUND


# ------------------------------------------------------------ synthesizer


_EN_WORDS = ["news", "science", "travel", "health", "sport", "market", "city", "art"]
_ZH_WORDS = ["新闻", "科技", "旅游", "健康", "体育", "市场", "城市", "艺术"]


def synthesize_cls_response(rng: random.Random, lang: str) -> str:
    words = _ZH_WORDS if lang == "zh" else _EN_WORDS
    categories = rng.sample(words, rng.randint(5, len(words)))
    sentiment = rng.choice(ptgen.SENTIMENTS[lang])
    intent = " ".join(rng.sample(words, rng.randint(1, 2))) if lang == "en" else rng.choice(words)
    payload = {
        "categories" if lang == "en" else "分类": "/".join(categories),
        "sentiment" if lang == "en" else "情感": sentiment,
        "intent" if lang == "en" else "意图": intent,
    }
    prefix = rng.choice(["", "Here you go: ", "好的："])
    return prefix + json.dumps(payload, ensure_ascii=False)


def synthesize_entity_response(rng: random.Random, lang: str) -> str:
    words = _ZH_WORDS if lang == "zh" else _EN_WORDS
    entities = {}
    for i in range(rng.randint(1, 4)):
        entity = f"{rng.choice(words)}{i}" if lang == "zh" else f"{rng.choice(words)} {i}"
        entities[entity] = rng.sample(words, rng.randint(3, 5))
    return json.dumps(entities, ensure_ascii=False)


def test_collect_pt_responses_uses_backend():
    class CannedBackend:
        max_concurrency = None

        def generate(self, request):
            from atomnlu.backends import BackendResult

            return BackendResult(text=synthesize_cls_response(random.Random(1), "en"),
                                 latency=0.0)

    prompts = [ptgen.build_pt_prompt("cls_bundle", "en", "a passage")]
    records = ptgen.collect_pt_responses(prompts, CannedBackend())
    assert records[0]["kind"] == "cls_bundle"
    assert records[0]["text"] == "a passage"
    parsed = ptgen.parse_pt_response("cls_bundle", "en", "a passage", records[0]["response"])
    assert isinstance(parsed, ptgen.PtSample)


def test_format_conforming_responses_always_parse():
    rng = random.Random(77)
    for i in range(200):
        lang = rng.choice(["en", "zh"])
        cls = ptgen.parse_pt_response("cls_bundle", lang, f"t{i}",
                                      synthesize_cls_response(rng, lang))
        assert isinstance(cls, ptgen.PtSample), cls
        ent = ptgen.parse_pt_response("entity_bundle", lang, f"t{i}",
                                      synthesize_entity_response(rng, lang))
        assert isinstance(ent, ptgen.PtSample), ent


# --------------------------------------------------------------- assembly


def _samples():
    return [
        ptgen.PtSample(kind="cls_bundle", lang="en", text="passage one",
                       categories=("a", "b", "c", "d", "e"), sentiment="neutral",
                       intent="inform"),
        ptgen.PtSample(kind="entity_bundle", lang="en", text="passage two",
                       entities={"E1": ("person", "scientist", "pioneer"),
                                 "E2": ("site", "scientist", "place")}),
        ptgen.PtSample(kind="entity_bundle", lang="en", text="passage three",
                       entities={"E3": ("person", "writer", "artist")}),
    ]


def test_assemble_instances_and_negatives():
    corpus, stats = ptgen.assemble_pt_corpus(_samples(), AugmentationConfig(seed=5))
    assert corpus
    for inst in corpus:
        gold = set(inst.gold.positive_items())
        negatives = set(inst.candidates) - set(
            inst.gold.labels if inst.kind is AtomicKind.CLASSIFICATION
            else inst.gold.extractions
        )
        assert not negatives & gold
        # every candidate exists somewhere in the task-level universe or gold
    # ET instances carry text + tab + mention
    et = [i for i in corpus if i.task is TaskKind.ET]
    assert et and all("\t" in i.input_text for i in et)
    ner = [i for i in corpus if i.task is TaskKind.NER]
    assert len(ner) == 2


def test_assemble_counts_shared_type_once():
    _, stats = ptgen.assemble_pt_corpus(_samples(), AugmentationConfig(seed=5))
    # entity types across both entity samples: person, scientist, pioneer,
    # site, place, writer, artist -> 7 distinct for (en, ET); same for NER
    assert stats.rows[("en", "ET")]["labels"] == 7
    assert stats.rows[("en", "NER")]["labels"] == 7


def test_stats_totals_are_sums():
    _, stats = ptgen.assemble_pt_corpus(_samples(), AugmentationConfig(seed=5))
    for field in ("instances", "tokens", "labels"):
        assert stats.totals[field] == sum(row[field] for row in stats.rows.values())
    table = stats.to_table()
    assert table.splitlines()[0].split() == ["lang", "task", "instances", "tokens", "labels"]
    assert table.splitlines()[-1].startswith("all")


def test_assemble_determinism():
    a, _ = ptgen.assemble_pt_corpus(_samples(), AugmentationConfig(seed=5))
    b, _ = ptgen.assemble_pt_corpus(_samples(), AugmentationConfig(seed=5))
    assert [i.to_json() for i in a] == [i.to_json() for i in b]
