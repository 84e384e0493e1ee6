from __future__ import annotations

import random
from pathlib import Path

import pytest

from atomnlu.model import AnswerSet, AtomicInstance, AtomicKind, TaskKind

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
REGISTRY = FIXTURES / "registry.json"

_EN_WORDS = (
    "alarm", "time", "city", "country", "singer", "song", "weather", "route",
    "price", "ticket", "train", "flight", "hotel", "movie", "topic", "actor",
    "gene", "drug", "team", "score", "title", "agent", "victim", "place",
)
_ZH_CHARS = "北京上海天气音乐电影学校医生老师学生工作时间地点人物事件原因结果方式程度旅游价格车票航班酒店主题演员基因药物队伍比分标题受害者"

# Grammar limits: candidate separators, newlines, tabs and the empty-answer
# sentinel may not occur inside labels or spans; queries may not contain
# a colon separator.
_FORBIDDEN = ("，", ", ", "\n", "\t", ": ", "：")


def _en_token(rng: random.Random) -> str:
    words = rng.sample(_EN_WORDS, rng.randint(1, 2))
    return "_".join(words) if rng.random() < 0.3 else " ".join(words)


def _zh_token(rng: random.Random) -> str:
    return "".join(rng.choice(_ZH_CHARS) for _ in range(rng.randint(1, 4)))


def random_token(rng: random.Random, lang: str) -> str:
    while True:
        token = _zh_token(rng) if lang == "zh" else _en_token(rng)
        if token != "None" and not any(bad in token for bad in _FORBIDDEN):
            return token


def random_instance(
    rng: random.Random, kind: AtomicKind, lang: str, index: int = 0
) -> AtomicInstance:
    candidates = []
    while len(candidates) < rng.randint(2, 8):
        token = random_token(rng, lang)
        if token not in candidates:
            candidates.append(token)
    if kind is AtomicKind.CLASSIFICATION:
        n_gold = rng.randint(0 if rng.random() < 0.1 else 1, len(candidates))
        gold = AnswerSet.for_labels(rng.sample(candidates, n_gold))
    else:
        mapping = {}
        for query in rng.sample(candidates, rng.randint(1, len(candidates))):
            spans = []
            for _ in range(rng.randint(0, 3)):
                span = random_token(rng, lang)
                if span not in spans:
                    spans.append(span)
            mapping[query] = spans
        gold = AnswerSet.for_extractions(mapping)
    return AtomicInstance(
        id=f"prop-{lang}/{index}/{kind.value}/0",
        source_id=str(index),
        dataset_id=f"prop-{lang}",
        task=TaskKind.CLS if kind is AtomicKind.CLASSIFICATION else TaskKind.NER,
        kind=kind,
        lang=lang,
        input_text=f"text {index}" if lang == "en" else f"文本{index}",
        candidates=tuple(candidates),
        gold=gold,
    )


@pytest.fixture()
def rng() -> random.Random:
    return random.Random(20240817)
