"""Prompt rendering and completion parsing.

The wire grammar between this toolkit and any generation backend is byte
exact (see README, "Completion grammar"):

prompt
    ``输入: {input_text}\\n分类: {c1}，{c2}，...\\n输出:`` for classification,
    with ``抽取:`` replacing ``分类:`` for extraction. No trailing newline.
    Candidates are joined by "，" (zh) or ", " (en). The ``language_specific``
    template swaps in English markers (``Input:/Classify:/Extract:/Output:``)
    for English instances.

completion, classification
    One line: chosen labels joined by the candidate separator.

completion, extraction
    One line per answered query, ``{query}: {span1}\\t{span2}...``; queries
    with no answer are omitted; when nothing at all is extracted the
    completion is the single sentinel line ``None``.

Parsing never raises: malformed content is preserved in the returned
anomalies so that no byte of model output is silently lost.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .model import AnswerSet, AtomicInstance, AtomicKind, EmptyCandidates, dedup

MODE_AGNOSTIC = "language_agnostic_zh"
MODE_SPECIFIC = "language_specific"

# Anomaly kinds surfaced by parse_response / the eval dispatcher.
UNKNOWN_QUERY = "UnknownQuery"
OUT_OF_CANDIDATE_LABEL = "OutOfCandidateLabel"
DUPLICATE_QUERY_LINE = "DuplicateQueryLine"
EMPTY_OUTPUT = "EmptyOutput"
BACKEND_FAILURE = "BackendFailure"

EMPTY_SENTINEL = "None"

_SEPARATORS = {"zh": "，", "en": ", "}
# Accepted candidate separators on the way in, regardless of language.
_SPLIT_RE = re.compile(r"，|, ")


@dataclass(frozen=True)
class PromptTemplate:
    """Markers wrapping the three prompt parts plus separator policy."""

    input_marker: str = "输入: "
    cls_marker: str = "分类: "
    ext_marker: str = "抽取: "
    output_marker: str = "输出:"
    span_separator: str = "\t"
    candidate_separator: str | None = None   # None: per-language default
    mode: str = MODE_AGNOSTIC

    def __post_init__(self) -> None:
        markers = (self.input_marker, self.cls_marker, self.ext_marker, self.output_marker)
        if any(not m for m in markers):
            raise ValueError("prompt markers must be non-empty")
        if len(set(markers)) != len(markers):
            raise ValueError("prompt markers must be mutually distinct")
        if self.mode not in (MODE_AGNOSTIC, MODE_SPECIFIC):
            raise ValueError(f"unknown template mode {self.mode!r}")

    def markers_for(self, lang: str) -> tuple[str, str, str, str]:
        if self.mode == MODE_SPECIFIC and lang == "en":
            return ("Input: ", "Classify: ", "Extract: ", "Output:")
        return (self.input_marker, self.cls_marker, self.ext_marker, self.output_marker)

    def separator_for(self, lang: str) -> str:
        if self.candidate_separator is not None:
            return self.candidate_separator
        return _SEPARATORS.get(lang, _SEPARATORS["en"])


DEFAULT_TEMPLATE = PromptTemplate()


def template_for_mode(mode: str) -> PromptTemplate:
    return PromptTemplate(mode=mode)


@dataclass(frozen=True)
class Anomaly:
    kind: str
    detail: str
    line: str | None = None

    def to_json(self) -> dict:
        out = {"kind": self.kind, "detail": self.detail}
        if self.line is not None:
            out["line"] = self.line
        return out


@dataclass(frozen=True)
class ParsedAnswer:
    answers: AnswerSet
    raw_text: str
    anomalies: tuple[Anomaly, ...] = ()

    def to_json(self) -> dict:
        return {
            "answers": self.answers.to_json(),
            "raw_text": self.raw_text,
            "anomalies": [a.to_json() for a in self.anomalies],
        }


def render_prompt_parts(
    kind: AtomicKind,
    lang: str,
    input_text: str,
    candidates: Sequence[str],
    template: PromptTemplate = DEFAULT_TEMPLATE,
) -> str:
    """Render a prompt string from its parts (no trailing newline)."""
    if not candidates:
        raise EmptyCandidates("cannot render a prompt without candidates")
    input_marker, cls_marker, ext_marker, output_marker = template.markers_for(lang)
    task_marker = cls_marker if kind is AtomicKind.CLASSIFICATION else ext_marker
    sep = template.separator_for(lang)
    return (
        f"{input_marker}{input_text}\n"
        f"{task_marker}{sep.join(candidates)}\n"
        f"{output_marker}"
    )


def render_prompt(instance: AtomicInstance, template: PromptTemplate = DEFAULT_TEMPLATE) -> str:
    return render_prompt_parts(
        instance.kind, instance.lang, instance.input_text, instance.candidates, template
    )


def render_answer(
    kind: AtomicKind,
    answers: AnswerSet,
    lang: str,
    template: PromptTemplate = DEFAULT_TEMPLATE,
) -> str:
    """Serialize an answer set in the wire grammar (gold mapping order)."""
    sep = template.separator_for(lang)
    if kind is AtomicKind.CLASSIFICATION:
        return sep.join(answers.labels)
    lines = [
        f"{query}: {template.span_separator.join(spans)}"
        for query, spans in answers.extractions.items()
        if spans
    ]
    if not lines:
        return EMPTY_SENTINEL
    return "\n".join(lines)


def render_gold_completion(
    instance: AtomicInstance, template: PromptTemplate = DEFAULT_TEMPLATE
) -> str:
    return render_answer(instance.kind, instance.gold, instance.lang, template)


def canonical_completion(
    kind: AtomicKind,
    candidates: Sequence[str],
    answers: AnswerSet,
    lang: str,
    template: PromptTemplate = DEFAULT_TEMPLATE,
) -> str:
    """Serialize with items sorted into candidate order.

    Scoring compares pred and gold in this form so that line or label
    ordering never moves the ROUGE score. Items outside the candidate
    list sort last, in their own order.
    """
    rank = {c: i for i, c in enumerate(candidates)}

    if kind is AtomicKind.CLASSIFICATION:
        ordered = sorted(answers.labels, key=lambda x: (rank.get(x, len(rank)),))
        reordered = AnswerSet.for_labels(ordered)
    else:
        items = sorted(answers.extractions.items(), key=lambda kv: (rank.get(kv[0], len(rank)),))
        reordered = AnswerSet.for_extractions(dict(items))
    return render_answer(kind, reordered, lang, template)


def _split_candidates_list(text: str) -> list[str]:
    return [part.strip() for part in _SPLIT_RE.split(text) if part.strip()]


def _split_spans(value: str, template: PromptTemplate) -> tuple[str, ...]:
    if value == EMPTY_SENTINEL:
        return ()
    if template.span_separator in value:
        parts = value.split(template.span_separator)
    else:
        parts = _SPLIT_RE.split(value)
    return dedup(p.strip() for p in parts if p.strip())


def split_query_line(line: str) -> tuple[str, str] | None:
    """Split on the first ': ' or '：'; None when the line has neither."""
    ascii_idx = line.find(": ")
    wide_idx = line.find("：")
    positions = [(i, w) for i, w in ((ascii_idx, 2), (wide_idx, 1)) if i >= 0]
    if not positions:
        return None
    idx, width = min(positions)
    return line[:idx].strip(), line[idx + width:].strip()


def parse_response(
    kind: AtomicKind,
    candidates: Sequence[str],
    text: str,
    template: PromptTemplate = DEFAULT_TEMPLATE,
) -> ParsedAnswer:
    """Parse a completion into an answer set; anomalies instead of errors."""
    candidate_set = set(candidates)
    anomalies: list[Anomaly] = []
    lines = [ln.strip() for ln in text.splitlines()]
    nonempty = [ln for ln in lines if ln]

    if not nonempty:
        empty = (
            AnswerSet.for_labels(())
            if kind is AtomicKind.CLASSIFICATION
            else AnswerSet.for_extractions({})
        )
        return ParsedAnswer(empty, text, (Anomaly(EMPTY_OUTPUT, "no non-empty lines"),))

    if kind is AtomicKind.CLASSIFICATION:
        labels = dedup(_split_candidates_list(nonempty[0]))
        for label in labels:
            if label not in candidate_set:
                anomalies.append(Anomaly(OUT_OF_CANDIDATE_LABEL, label, nonempty[0]))
        for extra in nonempty[1:]:
            anomalies.append(Anomaly(OUT_OF_CANDIDATE_LABEL, "line outside grammar", extra))
        return ParsedAnswer(AnswerSet.for_labels(labels), text, tuple(anomalies))

    extractions: dict[str, tuple[str, ...]] = {}
    for line in nonempty:
        if line == EMPTY_SENTINEL:
            continue
        split = split_query_line(line)
        if split is None:
            anomalies.append(Anomaly(UNKNOWN_QUERY, "no query separator", line))
            continue
        query, value = split
        if query not in candidate_set:
            anomalies.append(Anomaly(UNKNOWN_QUERY, query, line))
            continue
        spans = _split_spans(value, template)
        if query in extractions:
            anomalies.append(Anomaly(DUPLICATE_QUERY_LINE, query, line))
            extractions[query] = dedup((*extractions[query], *spans))
        else:
            extractions[query] = spans
    return ParsedAnswer(AnswerSet.for_extractions(extractions), text, tuple(anomalies))


def empty_parsed(kind: AtomicKind, raw_text: str, anomalies: Iterable[Anomaly]) -> ParsedAnswer:
    """A lossless placeholder result used when the backend call failed."""
    empty = (
        AnswerSet.for_labels(())
        if kind is AtomicKind.CLASSIFICATION
        else AnswerSet.for_extractions({})
    )
    return ParsedAnswer(empty, raw_text, tuple(anomalies))
