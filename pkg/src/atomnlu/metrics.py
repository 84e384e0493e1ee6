"""Scoring: Micro-F1 over exact-match items, ROUGE-1/2/L, and the
combined final score (100 * mean(micro_f1, mean(rouge1, rouge2, rougeL))).

Micro-F1 counts labels (classification) or (query, span) pairs
(extraction) matched by exact string equality after whitespace trimming,
accumulated globally over a result set. ROUGE is computed per instance on
the canonical serialization of the predicted and gold answers (candidate
order), with English text lowercased and split into word tokens and
Chinese text split per character, then averaged over instances.
"""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import codec
from .model import (
    AnswerSet,
    AtomicInstance,
    AtomicKind,
    AtomnluError,
    KindMismatch,
    TaskKind,
)


class EmptyResults(AtomnluError):
    code = "empty_results"


class EmptyReport(AtomnluError):
    code = "empty_report"


_WORD_RE = re.compile(r"\w+", re.UNICODE)


def tokenize(text: str, lang: str) -> list[str]:
    if lang == "zh":
        return [ch for ch in text if not ch.isspace()]
    return _WORD_RE.findall(text.lower())


def _items(answers: AnswerSet) -> set:
    if answers.kind is AtomicKind.CLASSIFICATION:
        return {label.strip() for label in answers.labels}
    return {
        (query.strip(), span.strip())
        for query, spans in answers.extractions.items()
        for span in spans
    }


def micro_f1(pairs: Sequence[tuple[AnswerSet, AnswerSet]]) -> tuple[float, int, int, int]:
    """Global Micro-F1 over (gold, pred) pairs; returns (f1, tp, fp, fn)."""
    tp = fp = fn = 0
    for gold, pred in pairs:
        if gold.kind is not pred.kind:
            raise KindMismatch("gold and prediction kinds differ within a pair")
        gold_items, pred_items = _items(gold), _items(pred)
        tp += len(gold_items & pred_items)
        fp += len(pred_items - gold_items)
        fn += len(gold_items - pred_items)
    if tp == fp == fn == 0:
        return 1.0, tp, fp, fn
    return 2 * tp / (2 * tp + fp + fn), tp, fp, fn


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def rouge_n(pred_tokens: Sequence[str], ref_tokens: Sequence[str], n: int) -> float:
    if n not in (1, 2):
        raise ValueError("only ROUGE-1 and ROUGE-2 are supported")
    pred_ngrams = Counter(tuple(pred_tokens[i : i + n]) for i in range(len(pred_tokens) - n + 1))
    ref_ngrams = Counter(tuple(ref_tokens[i : i + n]) for i in range(len(ref_tokens) - n + 1))
    if not pred_ngrams and not ref_ngrams:
        return 1.0
    if not pred_ngrams or not ref_ngrams:
        return 0.0
    overlap = sum(min(count, ref_ngrams[gram]) for gram, count in pred_ngrams.items())
    return _f1(overlap / sum(pred_ngrams.values()), overlap / sum(ref_ngrams.values()))


def _lcs_length(xs: Sequence[str], ys: Sequence[str]) -> int:
    if not xs or not ys:
        return 0
    row = [0] * (len(ys) + 1)
    for x in xs:
        prev = 0
        for j, y in enumerate(ys, start=1):
            cur = row[j]
            row[j] = prev + 1 if x == y else max(row[j], row[j - 1])
            prev = cur
    return row[-1]


def rouge_l(pred_tokens: Sequence[str], ref_tokens: Sequence[str]) -> float:
    if not pred_tokens and not ref_tokens:
        return 1.0
    if not pred_tokens or not ref_tokens:
        return 0.0
    lcs = _lcs_length(pred_tokens, ref_tokens)
    return _f1(lcs / len(pred_tokens), lcs / len(ref_tokens))


def rouge_score(pred_tokens: Sequence[str], ref_tokens: Sequence[str]) -> tuple[float, float, float]:
    return (
        rouge_n(pred_tokens, ref_tokens, 1),
        rouge_n(pred_tokens, ref_tokens, 2),
        rouge_l(pred_tokens, ref_tokens),
    )


@dataclass(frozen=True)
class ScoreBreakdown:
    micro_f1: float
    rouge1: float
    rouge2: float
    rougeL: float
    rouge_avg: float
    final: float
    tp: int
    fp: int
    fn: int

    @staticmethod
    def build(micro: float, rouge1: float, rouge2: float, rougeL: float,
              tp: int, fp: int, fn: int) -> "ScoreBreakdown":
        rouge_avg = (rouge1 + rouge2 + rougeL) / 3
        return ScoreBreakdown(
            micro_f1=micro,
            rouge1=rouge1,
            rouge2=rouge2,
            rougeL=rougeL,
            rouge_avg=rouge_avg,
            final=100.0 * (micro + rouge_avg) / 2,
            tp=tp,
            fp=fp,
            fn=fn,
        )

    def to_json(self) -> dict:
        return {
            "micro_f1": self.micro_f1,
            "rouge1": self.rouge1,
            "rouge2": self.rouge2,
            "rougeL": self.rougeL,
            "rouge_avg": self.rouge_avg,
            "final": self.final,
            "counts": {"tp": self.tp, "fp": self.fp, "fn": self.fn},
        }

    @staticmethod
    def from_json(obj: Mapping) -> "ScoreBreakdown":
        counts = obj["counts"]
        return ScoreBreakdown(
            micro_f1=float(obj["micro_f1"]),
            rouge1=float(obj["rouge1"]),
            rouge2=float(obj["rouge2"]),
            rougeL=float(obj["rougeL"]),
            rouge_avg=float(obj["rouge_avg"]),
            final=float(obj["final"]),
            tp=int(counts["tp"]),
            fp=int(counts["fp"]),
            fn=int(counts["fn"]),
        )


def score_dataset(
    results: Sequence[tuple[AtomicInstance, codec.ParsedAnswer]],
    template: codec.PromptTemplate = codec.DEFAULT_TEMPLATE,
) -> ScoreBreakdown:
    """Score one (dataset, atomic kind) result set."""
    if not results:
        raise EmptyResults("cannot score an empty result set")
    micro, tp, fp, fn = micro_f1([(inst.gold, parsed.answers) for inst, parsed in results])
    r1_sum = r2_sum = rl_sum = 0.0
    for inst, parsed in results:
        gold_text = codec.canonical_completion(
            inst.kind, inst.candidates, inst.gold, inst.lang, template
        )
        pred_text = codec.canonical_completion(
            inst.kind, inst.candidates, parsed.answers, inst.lang, template
        )
        r1, r2, rl = rouge_score(tokenize(pred_text, inst.lang), tokenize(gold_text, inst.lang))
        r1_sum += r1
        r2_sum += r2
        rl_sum += rl
    n = len(results)
    return ScoreBreakdown.build(micro, r1_sum / n, r2_sum / n, rl_sum / n, tp, fp, fn)


# Report column layout: ten task columns (MRC_MC and MRC_SE merge) + ALL.
REPORT_COLUMNS = ("CLS", "EE", "ID", "MRC", "NER", "NLI", "RE", "SF", "SA", "ET")
_MERGED: dict[TaskKind, str] = {t: ("MRC" if t in (TaskKind.MRC_MC, TaskKind.MRC_SE) else t.value)
                                for t in TaskKind}


@dataclass(frozen=True)
class EvalReport:
    per_dataset: dict[tuple[str, TaskKind, AtomicKind], ScoreBreakdown]
    per_atomic: dict[tuple[TaskKind, AtomicKind], float]
    per_task: dict[str, float]          # merged task column -> final score
    all_score: float
    anomaly_counts: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "per_dataset": [
                {
                    "dataset_id": ds,
                    "task": task.value,
                    "kind": kind.value,
                    "scores": breakdown.to_json(),
                }
                for (ds, task, kind), breakdown in sorted(
                    self.per_dataset.items(), key=lambda kv: (kv[0][0], kv[0][2].value)
                )
            ],
            "per_atomic_task": [
                {"task": task.value, "kind": kind.value, "final": score}
                for (task, kind), score in sorted(
                    self.per_atomic.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
                )
            ],
            "per_task": dict(sorted(self.per_task.items())),
            "all": self.all_score,
            "anomalies": dict(sorted(self.anomaly_counts.items())),
        }


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def aggregate_report(
    per_dataset: Mapping[tuple[str, TaskKind, AtomicKind], ScoreBreakdown],
    anomaly_counts: Mapping[str, int] | None = None,
) -> EvalReport:
    """Fold per-(dataset, kind) scores up to atomic-task, task and ALL levels.

    Atomic-task score: unweighted mean of its datasets' final scores.
    Task score: unweighted mean over that task's atomic kinds. MRC_MC and
    MRC_SE then merge into one MRC column by unweighted mean, and ALL is
    the unweighted mean over the merged task columns.
    """
    if not per_dataset:
        raise EmptyReport("no dataset scores to aggregate")

    atomic_scores: dict[tuple[TaskKind, AtomicKind], list[float]] = {}
    for (_, task, kind), breakdown in per_dataset.items():
        atomic_scores.setdefault((task, kind), []).append(breakdown.final)
    per_atomic = {key: _mean(scores) for key, scores in atomic_scores.items()}

    task_scores: dict[TaskKind, list[float]] = {}
    for (task, _), score in per_atomic.items():
        task_scores.setdefault(task, []).append(score)
    per_task_raw = {task: _mean(scores) for task, scores in task_scores.items()}

    merged: dict[str, list[float]] = {}
    for task, score in per_task_raw.items():
        merged.setdefault(_MERGED[task], []).append(score)
    per_task = {column: _mean(scores) for column, scores in merged.items()}

    return EvalReport(
        per_dataset=dict(per_dataset),
        per_atomic=per_atomic,
        per_task=per_task,
        all_score=_mean(list(per_task.values())),
        anomaly_counts=dict(anomaly_counts or {}),
    )


def render_report_table(report: EvalReport) -> str:
    """Aligned plain-text table: one row, the ten task columns plus ALL."""
    headers = [*REPORT_COLUMNS, "ALL"]
    values = [
        f"{report.per_task[col]:.1f}" if col in report.per_task else "-"
        for col in REPORT_COLUMNS
    ]
    values.append(f"{report.all_score:.1f}")
    widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
    head = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    row = "  ".join(v.rjust(w) for v, w in zip(values, widths))
    return f"{head}\n{row}"
