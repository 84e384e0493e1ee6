"""Pre-training corpus construction from generator (LLM) annotations.

Two fixed prompt bundles ask a generator model to annotate a raw passage:
``cls_bundle`` requests topic categories, a sentiment polarity and a short
intent in one JSON object; ``entity_bundle`` requests fine-grained entities
with at least three types each. Responses are parsed strictly; anything
violating the requested format is recorded as a ParseFailure and skipped,
never repaired. Assembled instances get negative candidate labels drawn
from the union of labels observed across the whole task, which for an
inventory this diverse are safely assumed irrelevant to the passage.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import metrics
from .augment import AugmentationConfig, derived_rng, sample_negative_labels
from .model import AnswerSet, AtomicInstance, RawSample, TaskKind, dedup

CLS_BUNDLE = "cls_bundle"
ENTITY_BUNDLE = "entity_bundle"
KINDS = (CLS_BUNDLE, ENTITY_BUNDLE)

MIN_CATEGORIES = 5
MAX_INTENT_WORDS = 2
MIN_ENTITY_TYPES = 3

SENTIMENTS = {"en": ("positive", "negative", "neutral"), "zh": ("正向", "负向", "中性")}

_TEMPLATES = {
    (CLS_BUNDLE, "en"): (
        "You are asked to do the following 3 tasks: text classification, sentiment "
        "analysis, intent detection. Here are the requirements: 1. The text should be "
        'classified into at least 5 categories, separated by "/". 2. Sentiment should '
        "be in one of positive, negative or neutral. 3. The intent should contain at "
        "most 2 words describing what the text wants to do. 4. The output should be "
        'in json format. 5. Do not return the original text. "{text}"'
    ),
    (CLS_BUNDLE, "zh"): (
        "我们要对下面这句话做3个任务：文本分类、情感分析、意图识别。"
        "要求：1. 至少预测5个类别，类别之间用/分割。 2. 情感分类通常分为正向、负向和中性三类。"
        "3. 意图识别只用两个词概括，不要输出其他内容。 4. 结果使用json格式返回。“{text}”"
    ),
    (ENTITY_BUNDLE, "en"): (
        "Given the following text, identify all fine-grained entities and assign no "
        'less than three entity types to each entity. "{text}"'
    ),
    (ENTITY_BUNDLE, "zh"): "给定下面文本，识别所有细粒度实体，并对每个实体打标不少于三个实体类型。“{text}”",
}

# ParseFailure reason codes.
TOO_FEW_CATEGORIES = "TooFewCategories"
BAD_SENTIMENT = "BadSentiment"
INTENT_TOO_LONG = "IntentTooLong"
TOO_FEW_TYPES = "TooFewTypes"
NO_JSON_FOUND = "NoJsonFound"
NO_ENTITIES = "NoEntities"


@dataclass(frozen=True)
class PtGenerationPrompt:
    kind: str
    lang: str
    text: str
    rendered: str

    def to_json(self) -> dict:
        return {"kind": self.kind, "lang": self.lang, "text": self.text, "rendered": self.rendered}


@dataclass(frozen=True)
class ParseFailure:
    reason: str
    detail: str = ""

    def to_json(self) -> dict:
        return {"reason": self.reason, "detail": self.detail}


@dataclass(frozen=True)
class PtSample:
    """One validated generator annotation for a passage."""

    kind: str
    lang: str
    text: str
    categories: tuple[str, ...] = ()
    sentiment: str = ""
    intent: str = ""
    entities: dict[str, tuple[str, ...]] = field(default_factory=dict)

    @property
    def tasks(self) -> tuple[TaskKind, ...]:
        if self.kind == CLS_BUNDLE:
            return (TaskKind.CLS,)
        return (TaskKind.ET, TaskKind.NER)

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind, "lang": self.lang, "text": self.text}
        if self.kind == CLS_BUNDLE:
            out.update(
                categories=list(self.categories),
                sentiment=self.sentiment,
                intent=self.intent,
            )
        else:
            out["entities"] = {e: list(t) for e, t in self.entities.items()}
        return out


def build_pt_prompt(kind: str, lang: str, text: str) -> PtGenerationPrompt:
    if kind not in KINDS:
        raise ValueError(f"unknown prompt kind {kind!r}")
    if lang not in ("en", "zh"):
        raise ValueError(f"unknown lang {lang!r}")
    if not text:
        raise ValueError("text must be non-empty")
    return PtGenerationPrompt(
        kind=kind, lang=lang, text=text, rendered=_TEMPLATES[(kind, lang)].format(text=text)
    )


def _find_json(response: str):
    """First parseable JSON object or array embedded in the response."""
    decoder = json.JSONDecoder()
    for i, ch in enumerate(response):
        if ch in "{[":
            try:
                value, _ = decoder.raw_decode(response[i:])
            except json.JSONDecodeError:
                continue
            return value
    return None


def _lookup(obj: Mapping, names: Sequence[str]):
    lowered = {str(k).strip().lower(): v for k, v in obj.items()}
    for name in names:
        if name in lowered:
            return lowered[name]
    return None


_CATEGORY_KEYS = ("categories", "classification", "text classification", "text_classification",
                  "分类", "文本分类", "类别")
_SENTIMENT_KEYS = ("sentiment", "sentiment analysis", "sentiment_analysis", "情感", "情感分析")
_INTENT_KEYS = ("intent", "intent detection", "intent_detection", "意图", "意图识别")


def _as_categories(value) -> tuple[str, ...]:
    if isinstance(value, str):
        parts = value.split("/")
    elif isinstance(value, list):
        parts = [str(v) for v in value]
    else:
        parts = []
    return dedup(p.strip() for p in parts if p and p.strip())


def _parse_cls(lang: str, text: str, payload) -> PtSample | ParseFailure:
    if not isinstance(payload, Mapping):
        return ParseFailure(NO_JSON_FOUND, "expected a JSON object")
    categories = _as_categories(_lookup(payload, _CATEGORY_KEYS))
    if len(categories) < MIN_CATEGORIES:
        return ParseFailure(TOO_FEW_CATEGORIES, f"got {len(categories)}, need {MIN_CATEGORIES}")
    sentiment = str(_lookup(payload, _SENTIMENT_KEYS) or "").strip()
    if sentiment not in SENTIMENTS[lang]:
        return ParseFailure(BAD_SENTIMENT, sentiment)
    intent = str(_lookup(payload, _INTENT_KEYS) or "").strip()
    if not intent or len(intent.split()) > MAX_INTENT_WORDS:
        return ParseFailure(INTENT_TOO_LONG, intent)
    return PtSample(
        kind=CLS_BUNDLE, lang=lang, text=text,
        categories=categories, sentiment=sentiment, intent=intent,
    )


def _entities_from_json(payload) -> dict[str, tuple[str, ...]] | None:
    entities: dict[str, tuple[str, ...]] = {}
    if isinstance(payload, Mapping):
        for entity, types in payload.items():
            entities[str(entity)] = _as_categories(types if isinstance(types, list) else str(types))
    elif isinstance(payload, list):
        for item in payload:
            if not isinstance(item, Mapping):
                return None
            entity = _lookup(item, ("entity", "name", "实体"))
            types = _lookup(item, ("types", "entity_types", "类型", "实体类型"))
            if entity is None or types is None:
                return None
            entities[str(entity)] = _as_categories(types if isinstance(types, list) else str(types))
    else:
        return None
    return entities


def _entities_from_lines(response: str) -> dict[str, tuple[str, ...]]:
    from .codec import split_query_line

    entities: dict[str, tuple[str, ...]] = {}
    for line in response.splitlines():
        line = line.strip()
        if not line:
            continue
        split = split_query_line(line)
        if split is None:
            continue
        entity, value = split
        types = dedup(
            t.strip() for t in value.replace("，", ",").replace("、", ",").split(",") if t.strip()
        )
        if entity and types:
            entities[entity] = types
    return entities


def _parse_entities(lang: str, text: str, response: str, payload) -> PtSample | ParseFailure:
    entities = _entities_from_json(payload) if payload is not None else None
    if not entities:
        entities = _entities_from_lines(response)
    if entities is None or not entities:
        if payload is None:
            return ParseFailure(NO_JSON_FOUND, "no JSON and no entity lines found")
        return ParseFailure(NO_ENTITIES, "response contains no entities")
    for entity, types in entities.items():
        if len(types) < MIN_ENTITY_TYPES:
            return ParseFailure(TOO_FEW_TYPES, f"{entity}: {len(types)} types")
    return PtSample(kind=ENTITY_BUNDLE, lang=lang, text=text, entities=entities)


def parse_pt_response(kind: str, lang: str, text: str, response: str) -> PtSample | ParseFailure:
    """Validate one generator response; violations are data, not errors."""
    if kind not in KINDS:
        raise ValueError(f"unknown prompt kind {kind!r}")
    payload = _find_json(response)
    if kind == CLS_BUNDLE:
        if payload is None:
            return ParseFailure(NO_JSON_FOUND, "no JSON object in response")
        return _parse_cls(lang, text, payload)
    return _parse_entities(lang, text, response, payload)


def collect_pt_responses(prompts: Sequence[PtGenerationPrompt], backend) -> list[dict]:
    """Run generation prompts through any completion backend.

    Returns records in the shape parse_pt_response / the
    parse-pt-responses command expect: kind, lang, text, response.
    """
    from .backends import GenerationRequest

    out = []
    for prompt in prompts:
        result = backend.generate(GenerationRequest(prompt=prompt.rendered))
        out.append(
            {"kind": prompt.kind, "lang": prompt.lang, "text": prompt.text,
             "response": result.text}
        )
    return out


def pt_dataset_id(task: TaskKind, lang: str) -> str:
    return f"pt-{task.value.lower()}-{lang}"


def pt_raw_samples(samples: Sequence[PtSample]) -> list[RawSample]:
    """Re-express validated annotations in the canonical sample format."""
    out: list[RawSample] = []
    counters: dict[str, int] = {}

    def next_id(dataset_id: str) -> str:
        counters[dataset_id] = counters.get(dataset_id, 0) + 1
        return f"{dataset_id.split('-', 1)[1]}-{counters[dataset_id]:05d}"

    for sample in samples:
        if sample.kind == CLS_BUNDLE:
            dataset_id = pt_dataset_id(TaskKind.CLS, sample.lang)
            base = next_id(dataset_id)
            for suffix, labels in (
                ("topic", sample.categories),
                ("sentiment", (sample.sentiment,)),
                ("intent", (sample.intent,)),
            ):
                out.append(
                    RawSample(
                        id=f"{base}/{suffix}",
                        dataset_id=dataset_id,
                        task=TaskKind.CLS,
                        lang=sample.lang,
                        text=sample.text,
                        gold=AnswerSet.for_labels(labels),
                    )
                )
        else:
            et_dataset = pt_dataset_id(TaskKind.ET, sample.lang)
            ner_dataset = pt_dataset_id(TaskKind.NER, sample.lang)
            base = next_id(et_dataset)
            for i, (entity, types) in enumerate(sample.entities.items()):
                out.append(
                    RawSample(
                        id=f"{base}/ent{i}",
                        dataset_id=et_dataset,
                        task=TaskKind.ET,
                        lang=sample.lang,
                        text=sample.text,
                        mention=entity,
                        gold=AnswerSet.for_labels(types),
                    )
                )
            by_type: dict[str, list[str]] = {}
            for entity, types in sample.entities.items():
                for t in types:
                    by_type.setdefault(t, []).append(entity)
            out.append(
                RawSample(
                    id=f"{next_id(ner_dataset)}/ner",
                    dataset_id=ner_dataset,
                    task=TaskKind.NER,
                    lang=sample.lang,
                    text=sample.text,
                    gold=AnswerSet.for_extractions(by_type),
                )
            )
    return out


@dataclass(frozen=True)
class PtCorpusStats:
    rows: dict[tuple[str, str], dict[str, int]]   # (lang, task) -> counts
    totals: dict[str, int]

    def to_json(self) -> dict:
        return {
            "rows": [
                {"lang": lang, "task": task, **counts}
                for (lang, task), counts in sorted(self.rows.items())
            ],
            "totals": dict(self.totals),
        }

    def to_table(self) -> str:
        headers = ("lang", "task", "instances", "tokens", "labels")
        lines = [[lang, task, str(c["instances"]), str(c["tokens"]), str(c["labels"])]
                 for (lang, task), c in sorted(self.rows.items())]
        lines.append(["all", "", str(self.totals["instances"]),
                      str(self.totals["tokens"]), str(self.totals["labels"])])
        widths = [max(len(headers[i]), *(len(row[i]) for row in lines)) for i in range(5)]
        def fmt(row):
            return "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        return "\n".join([fmt(list(headers))] + [fmt(row) for row in lines])


def _with_negatives(
    inst: AtomicInstance, universe: Sequence[str], cfg: AugmentationConfig
) -> AtomicInstance:
    rng = derived_rng(cfg.seed, inst.id)
    positives = inst.gold.positive_items()
    negatives = sample_negative_labels(positives, universe, cfg.max_negative_labels, rng)
    candidates = list(dedup((*inst.candidates, *negatives)))
    rng.shuffle(candidates)
    return AtomicInstance(
        id=inst.id,
        source_id=inst.source_id,
        dataset_id=inst.dataset_id,
        task=inst.task,
        kind=inst.kind,
        lang=inst.lang,
        input_text=inst.input_text,
        candidates=tuple(candidates),
        gold=inst.gold,
    )


def assemble_pt_corpus(
    samples: Sequence[PtSample],
    neg_cfg: AugmentationConfig | None = None,
) -> tuple[list[AtomicInstance], PtCorpusStats]:
    """Convert annotations into atomic instances with sampled negatives.

    The negative-label pool for an instance is the union of every gold
    label observed for its (lang, task) slice of the corpus, so the first
    pass collects universes and the second pass samples.
    """
    from .translate import translate_sample

    neg_cfg = neg_cfg or AugmentationConfig()
    raw = pt_raw_samples(samples)
    base: list[AtomicInstance] = []
    for sample in raw:
        base.extend(translate_sample(sample))

    universes: dict[tuple[str, TaskKind], list[str]] = {}
    for inst in base:
        universes.setdefault((inst.lang, inst.task), []).extend(inst.gold.positive_items())
    pools = {key: dedup(labels) for key, labels in universes.items()}

    corpus = [_with_negatives(inst, pools[(inst.lang, inst.task)], neg_cfg) for inst in base]

    rows: dict[tuple[str, str], dict[str, int]] = {}
    label_sets: dict[tuple[str, str], set[str]] = {}
    for inst in corpus:
        key = (inst.lang, inst.task.value)
        row = rows.setdefault(key, {"instances": 0, "tokens": 0, "labels": 0})
        row["instances"] += 1
        row["tokens"] += len(metrics.tokenize(inst.input_text, inst.lang))
        label_sets.setdefault(key, set()).update(inst.gold.positive_items())
    for key, labels in label_sets.items():
        rows[key]["labels"] = len(labels)
    totals = {
        name: sum(row[name] for row in rows.values())
        for name in ("instances", "tokens", "labels")
    }
    return corpus, PtCorpusStats(rows=rows, totals=totals)
