"""Filesystem pipeline commands: ingest, translate, augment, balance,
emit-train, gen-pt-prompts, parse-pt-responses, eval, score, report.

Every command writes its outputs under ``<out_root>/<stage>/`` together
with a manifest recording the configuration, seed, input/output digests
and the upstream manifest it chains from. Manifests carry no timestamps:
re-running a command with identical inputs, configuration and seed must
reproduce every output byte for byte. Paths inside manifests are stored
relative to the manifest's own directory.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import augment as aug
from . import backends, codec, ingest, metrics, ptgen, translate
from .model import (
    AtomicInstance,
    AtomicKind,
    AtomnluError,
    DatasetDescriptor,
    TaskKind,
    dump_jsonl,
    load_jsonl,
)

logger = logging.getLogger(__name__)

PACKAGE_VERSION = "0.1.0"

STAGE_INGEST = "ingest"
STAGE_TRANSLATE = "translate"
STAGE_AUGMENT = "augment"
STAGE_BALANCE = "balance"
STAGE_TRAIN = "train"
STAGE_PT = "pt"
STAGE_EVAL = "eval"
STAGE_SCORE = "score"
STAGE_REPORT = "report"

EVAL_SPLITS = ("valid", "test")

TEMPLATE_MODES = {
    "agnostic": codec.MODE_AGNOSTIC,
    "language-specific": codec.MODE_SPECIFIC,
}


class PipelineError(AtomnluError):
    """Validation-level failure: bad inputs, empty results, missing files."""

    code = "validation"


def template_from_name(name: str) -> codec.PromptTemplate:
    if name in TEMPLATE_MODES:
        return codec.PromptTemplate(mode=TEMPLATE_MODES[name])
    if name in TEMPLATE_MODES.values():
        return codec.PromptTemplate(mode=name)
    raise PipelineError(f"unknown template mode {name!r}")


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _rel(path: str | Path, base: Path) -> str:
    return os.path.relpath(os.path.abspath(str(path)), os.path.abspath(str(base)))


def write_manifest(
    stage_dir: Path,
    command: str,
    config: dict,
    seed: int | None,
    inputs: Sequence[str | Path],
    outputs: Sequence[str | Path],
    upstream: Path | None = None,
) -> Path:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": [{"path": _rel(p, stage_dir), "sha256": sha256_file(p)} for p in inputs],
        "outputs": [{"path": _rel(p, stage_dir), "sha256": sha256_file(p)} for p in outputs],
        "upstream_manifest": (
            {"path": _rel(upstream, stage_dir), "sha256": sha256_file(upstream)}
            if upstream is not None
            else None
        ),
        "versions": {
            "atomnlu": PACKAGE_VERSION,
            "python": f"{sys.version_info.major}.{sys.version_info.minor}",
        },
    }
    path = stage_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _stage_dir(out_root: str | Path, stage: str) -> Path:
    path = Path(out_root) / stage
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require_manifest(out_root: str | Path, stage: str) -> Path:
    path = Path(out_root) / stage / "manifest.json"
    if not path.exists():
        raise PipelineError(f"stage {stage!r} has not been run under {out_root} (no manifest)")
    return path


def _split_files(stage_dir: Path, split: str | None = None) -> list[Path]:
    files = sorted(stage_dir.glob("*.jsonl"))
    if split is not None:
        files = [f for f in files if f.name.endswith(f".{split}.jsonl")]
    return files


# ---------------------------------------------------------------- ingest


def cmd_ingest(registry: str, out_root: str, seed: int = 0) -> dict:
    descriptors = ingest.load_registry(registry)
    if not descriptors:
        raise PipelineError("registry lists no datasets")
    stage = _stage_dir(out_root, STAGE_INGEST)
    outputs: list[Path] = []
    normalized: list[dict] = []
    summary_datasets: list[dict] = []
    all_errors: list[dict] = []
    total = 0

    for desc in descriptors:
        if not desc.paths:
            raise PipelineError(f"dataset {desc.dataset_id} lists no split paths")
        universe: tuple[str, ...] = desc.label_universe
        split_sizes: dict[str, int] = {}
        paths: dict[str, str] = {}
        for split, src in sorted(desc.paths.items()):
            result = ingest.ingest_jsonl(src, desc)
            universe = tuple(dict.fromkeys((*universe, *result.label_universe)))
            out_file = stage / f"{desc.dataset_id}.{split}.jsonl"
            dump_jsonl((s.to_json() for s in result.samples), out_file)
            outputs.append(out_file)
            split_sizes[split] = len(result.samples)
            paths[split] = out_file.name
            total += len(result.samples)
            for err in result.errors:
                all_errors.append({"dataset_id": desc.dataset_id, "split": split, **err.to_json()})
        normalized.append(
            DatasetDescriptor(
                dataset_id=desc.dataset_id,
                task=desc.task,
                lang=desc.lang,
                role=desc.role,
                paths=paths,
                label_universe=universe,
                split_sizes=split_sizes,
            ).to_json()
        )
        summary_datasets.append(
            {"dataset_id": desc.dataset_id, "samples": sum(split_sizes.values())}
        )

    registry_out = stage / "registry.json"
    with open(registry_out, "w", encoding="utf-8") as fh:
        json.dump({"datasets": normalized}, fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    outputs.append(registry_out)

    manifest = write_manifest(
        stage, "ingest", {"registry": str(registry)}, seed,
        inputs=[registry, *sorted({p for d in descriptors for p in d.paths.values()})],
        outputs=outputs,
    )
    if all_errors:
        raise PipelineError(
            f"{len(all_errors)} invalid lines: "
            + "; ".join(f"{e['dataset_id']}:{e['line']} {e['kind']}" for e in all_errors[:10])
        )
    return {
        "datasets": summary_datasets,
        "samples": total,
        "errors": all_errors,
        "manifest": str(manifest),
    }


def _load_normalized_registry(out_root: str | Path) -> tuple[list[DatasetDescriptor], Path]:
    stage = Path(out_root) / STAGE_INGEST
    registry = stage / "registry.json"
    if not registry.exists():
        raise PipelineError(f"run ingest first: {registry} not found")
    return ingest.load_registry(registry), registry


# ------------------------------------------------------------- translate


def cmd_translate(out_root: str, separator: str = translate.DEFAULT_SEPARATOR,
                  seed: int = 0) -> dict:
    descriptors, registry = _load_normalized_registry(out_root)
    upstream = _require_manifest(out_root, STAGE_INGEST)
    stage = _stage_dir(out_root, STAGE_TRANSLATE)
    outputs: list[Path] = []
    inputs: list[Path] = [registry]
    counts: dict[str, int] = {}

    for desc in descriptors:
        per_split = {
            split: [ingest.parse_record(obj, desc) for obj in load_jsonl(path)]
            for split, path in sorted(desc.paths.items())
        }
        schema = translate.schema_from_samples(
            [s for samples in per_split.values() for s in samples], desc, separator
        )
        for split, samples in per_split.items():
            instances = []
            for raw in samples:
                instances.extend(translate.translate_sample(raw, schema))
            out_file = stage / f"{desc.dataset_id}.{split}.jsonl"
            dump_jsonl((inst.to_json() for inst in instances), out_file)
            outputs.append(out_file)
            inputs.append(Path(desc.paths[split]))
            counts[desc.dataset_id] = counts.get(desc.dataset_id, 0) + len(instances)

    manifest = write_manifest(
        stage, "translate", {"separator": separator}, seed,
        inputs=inputs, outputs=outputs, upstream=upstream,
    )
    return {
        "instances": sum(counts.values()),
        "per_dataset": counts,
        "manifest": str(manifest),
    }


# --------------------------------------------------------------- augment


def cmd_augment(
    out_root: str,
    variants_per_sample: int = aug.DEFAULT_VARIANTS,
    max_positive_labels: int = aug.DEFAULT_MAX_POSITIVES,
    max_negative_labels: int = aug.DEFAULT_MAX_NEGATIVES,
    seed: int = 0,
    universe_scope: str = "dataset",
    split: str = "train",
) -> dict:
    upstream = _require_manifest(out_root, STAGE_TRANSLATE)
    source_dir = Path(out_root) / STAGE_TRANSLATE
    files = _split_files(source_dir, split)
    if not files:
        raise PipelineError(f"no {split!r} instance files under {source_dir}")
    cfg = aug.AugmentationConfig(
        variants_per_sample=variants_per_sample,
        max_positive_labels=max_positive_labels,
        max_negative_labels=max_negative_labels,
        seed=seed,
    )
    stage = _stage_dir(out_root, STAGE_AUGMENT)
    per_file = {
        path: [AtomicInstance.from_json(obj) for obj in load_jsonl(path)] for path in files
    }
    # Pool label universes over the whole corpus so the task scope spans
    # datasets (the fine-tuning default still keys per dataset).
    universes = aug.candidate_universes(
        [inst for instances in per_file.values() for inst in instances], universe_scope
    )
    outputs: list[Path] = []
    total = 0
    for path, instances in per_file.items():
        expanded = aug.augment_corpus(instances, cfg, universe_scope, universes)
        out_file = stage / path.name
        dump_jsonl((inst.to_json() for inst in expanded), out_file)
        outputs.append(out_file)
        total += len(expanded)

    label_counts = aug.positive_label_counts(
        [AtomicInstance.from_json(obj) for f in outputs for obj in load_jsonl(f)]
    )
    manifest = write_manifest(
        stage,
        "augment",
        {
            "variants_per_sample": cfg.variants_per_sample,
            "max_positive_labels": cfg.max_positive_labels,
            "max_negative_labels": cfg.max_negative_labels,
            "universe_scope": universe_scope,
            "split": split,
            "label_counts": {f"{ds}::{label}": n for (ds, label), n in sorted(label_counts.items())},
        },
        seed,
        inputs=files,
        outputs=outputs,
        upstream=upstream,
    )
    return {"instructions": total, "files": len(outputs), "manifest": str(manifest)}


# --------------------------------------------------------------- balance


def cmd_balance(
    out_root: str,
    per_label_quota: int = aug.DEFAULT_LABEL_QUOTA,
    exempt_tasks: Sequence[str] = ("SA", "NLI"),
    seed: int = 0,
) -> dict:
    upstream = _require_manifest(out_root, STAGE_AUGMENT)
    source_dir = Path(out_root) / STAGE_AUGMENT
    files = _split_files(source_dir)
    if not files:
        raise PipelineError(f"no instance files under {source_dir}")
    cfg = aug.BalanceConfig(
        per_label_quota=per_label_quota,
        exempt_tasks=frozenset(TaskKind(t) for t in exempt_tasks),
        seed=seed,
    )
    stage = _stage_dir(out_root, STAGE_BALANCE)
    outputs: list[Path] = []
    before = after = 0
    retention: dict[str, int] = {}
    for path in files:
        instances = [AtomicInstance.from_json(obj) for obj in load_jsonl(path)]
        kept = aug.balance_corpus(instances, cfg)
        out_file = stage / path.name
        dump_jsonl((inst.to_json() for inst in kept), out_file)
        outputs.append(out_file)
        before += len(instances)
        after += len(kept)
        for (ds, label), n in aug.positive_label_counts(kept).items():
            retention[f"{ds}::{label}"] = retention.get(f"{ds}::{label}", 0) + n

    manifest = write_manifest(
        stage,
        "balance",
        {
            "per_label_quota": cfg.per_label_quota,
            "exempt_tasks": sorted(t.value for t in cfg.exempt_tasks),
            "retention": dict(sorted(retention.items())),
        },
        seed,
        inputs=files,
        outputs=outputs,
        upstream=upstream,
    )
    return {"before": before, "after": after, "manifest": str(manifest)}


# ------------------------------------------------------------ emit-train


def cmd_emit_train(
    out_root: str,
    template: str = "agnostic",
    stage_tag: str = "finetune",
    source: str = STAGE_BALANCE,
    seed: int = 0,
) -> dict:
    if source not in (STAGE_TRANSLATE, STAGE_AUGMENT, STAGE_BALANCE, STAGE_PT):
        raise PipelineError(f"unknown training source stage {source!r}")
    upstream = _require_manifest(out_root, source)
    source_dir = Path(out_root) / source
    files = (
        [source_dir / "instances.jsonl"] if source == STAGE_PT else _split_files(source_dir)
    )
    files = [f for f in files if f.exists()]
    if not files:
        raise PipelineError(f"no instance files under {source_dir}")
    prompt_template = template_from_name(template)
    stage = _stage_dir(out_root, STAGE_TRAIN)

    records_path = stage / "records.jsonl"
    emitted = total = 0
    with open(records_path, "w", encoding="utf-8") as fh:
        for path in files:
            instances = [AtomicInstance.from_json(obj) for obj in load_jsonl(path)]
            total += len(instances)
            for record in aug.emit_training_records(instances, prompt_template, stage_tag):
                fh.write(json.dumps(record.to_json(), ensure_ascii=False) + "\n")
                emitted += 1
    skipped = total - emitted

    advisory_path = stage / "training_advisory.json"
    with open(advisory_path, "w", encoding="utf-8") as fh:
        json.dump(aug.TRAINING_ADVISORY, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")

    manifest = write_manifest(
        stage,
        "emit-train",
        {"template": template, "stage": stage_tag, "source": source},
        seed,
        inputs=files,
        outputs=[records_path, advisory_path],
        upstream=upstream,
    )
    return {
        "records": emitted,
        "skipped_empty": skipped,
        "advisory": str(advisory_path),
        "manifest": str(manifest),
    }


# -------------------------------------------------------------- PT legs


def cmd_gen_pt_prompts(passages: str, out_root: str, kinds: str = "both", seed: int = 0) -> dict:
    if kinds == "both":
        wanted = list(ptgen.KINDS)
    elif kinds in ptgen.KINDS:
        wanted = [kinds]
    else:
        raise PipelineError(f"unknown prompt kind {kinds!r}")
    path = Path(passages)
    if not path.exists():
        raise PipelineError(f"passages file not found: {path}")
    stage = _stage_dir(out_root, STAGE_PT)
    prompts = []
    for obj in load_jsonl(path):
        if "text" not in obj or "lang" not in obj:
            raise PipelineError("passage records need 'text' and 'lang'")
        record_kinds = [obj["kind"]] if "kind" in obj else wanted
        for kind in record_kinds:
            prompts.append(ptgen.build_pt_prompt(kind, str(obj["lang"]), str(obj["text"])))
    out_file = stage / "prompts.jsonl"
    dump_jsonl((p.to_json() for p in prompts), out_file)
    manifest = write_manifest(
        stage, "gen-pt-prompts", {"kinds": kinds, "passages": str(passages)}, seed,
        inputs=[path], outputs=[out_file],
    )
    return {"prompts": len(prompts), "manifest": str(manifest)}


def cmd_parse_pt_responses(
    responses: str, out_root: str, max_negative_labels: int = aug.DEFAULT_MAX_NEGATIVES,
    seed: int = 0,
) -> dict:
    path = Path(responses)
    if not path.exists():
        raise PipelineError(f"responses file not found: {path}")
    stage = _stage_dir(out_root, STAGE_PT)
    samples: list[ptgen.PtSample] = []
    failures: list[dict] = []
    for i, obj in enumerate(load_jsonl(path)):
        for key in ("kind", "lang", "text", "response"):
            if key not in obj:
                raise PipelineError(f"response record {i} lacks {key!r}")
        parsed = ptgen.parse_pt_response(
            str(obj["kind"]), str(obj["lang"]), str(obj["text"]), str(obj["response"])
        )
        if isinstance(parsed, ptgen.ParseFailure):
            failures.append({"index": i, **parsed.to_json()})
        else:
            samples.append(parsed)

    neg_cfg = aug.AugmentationConfig(max_negative_labels=max_negative_labels, seed=seed)
    corpus, stats = ptgen.assemble_pt_corpus(samples, neg_cfg) if samples else ([], None)

    raw = ptgen.pt_raw_samples(samples)
    samples_path = stage / "samples.jsonl"
    dump_jsonl((s.to_json() for s in raw), samples_path)
    instances_path = stage / "instances.jsonl"
    dump_jsonl((inst.to_json() for inst in corpus), instances_path)
    failures_path = stage / "failures.jsonl"
    dump_jsonl(failures, failures_path)

    registry_path = stage / "registry.json"
    dataset_ids = sorted({s.dataset_id for s in raw})
    descriptors = []
    for dataset_id in dataset_ids:
        subset = [s for s in raw if s.dataset_id == dataset_id]
        descriptors.append(
            DatasetDescriptor(
                dataset_id=dataset_id,
                task=subset[0].task,
                lang=subset[0].lang,
                role="pretrain",
                paths={"train": samples_path.name},
                label_universe=(),
                split_sizes={"train": len(subset)},
            ).to_json()
        )
    with open(registry_path, "w", encoding="utf-8") as fh:
        json.dump({"datasets": descriptors}, fh, ensure_ascii=False, indent=2)
        fh.write("\n")

    stats_path = stage / "stats.json"
    stats_table = stage / "stats.txt"
    with open(stats_path, "w", encoding="utf-8") as fh:
        json.dump(stats.to_json() if stats else {"rows": [], "totals": {}}, fh,
                  ensure_ascii=False, indent=2)
        fh.write("\n")
    with open(stats_table, "w", encoding="utf-8") as fh:
        fh.write((stats.to_table() if stats else "(empty corpus)") + "\n")

    manifest = write_manifest(
        stage,
        "parse-pt-responses",
        {"responses": str(responses), "max_negative_labels": max_negative_labels},
        seed,
        inputs=[path],
        outputs=[samples_path, instances_path, failures_path, registry_path, stats_path, stats_table],
    )
    return {
        "valid": len(samples),
        "failures": len(failures),
        "instances": len(corpus),
        "manifest": str(manifest),
    }


# ------------------------------------------------------------------ eval


def build_backend(
    backend_cfg: dict,
    oracle_pool: Sequence[AtomicInstance],
    template: codec.PromptTemplate,
):
    kind = backend_cfg.get("kind", "oracle")
    seed = int(backend_cfg.get("seed", 0))
    if kind == "oracle":
        return backends.OracleBackend.from_instances(oracle_pool, template)
    if kind == "scramble":
        return backends.ScrambleBackend(
            backends.OracleBackend.from_instances(oracle_pool, template),
            fraction=float(backend_cfg.get("scramble_fraction", 0.5)),
            seed=seed,
        )
    if kind == "http":
        endpoint = backend_cfg.get("endpoint")
        if not endpoint:
            raise PipelineError("http backend requires an endpoint")
        return backends.HttpBackend(
            backends.HttpBackendConfig(
                base_url=str(endpoint),
                path=str(backend_cfg.get("path", "/v1/completions")),
                prompt_field=str(backend_cfg.get("prompt_field", "prompt")),
                max_tokens_field=str(backend_cfg.get("max_tokens_field", "max_tokens")),
                temperature_field=str(backend_cfg.get("temperature_field", "temperature")),
                stop_field=str(backend_cfg.get("stop_field", "stop")),
                response_text_path=str(backend_cfg.get("response_text_path", "text")),
                auth_env=str(backend_cfg.get("auth_env", "ATOMNLU_AUTH_TOKEN")),
                timeout=float(backend_cfg.get("timeout", 30.0)),
            ),
            retry=backends.RetryPolicy(
                attempts=int(backend_cfg.get("retry_attempts", 3)),
                backoff_base=float(backend_cfg.get("retry_backoff", 1.0)),
            ),
            seed=seed,
        )
    if kind == "subprocess":
        command = backend_cfg.get("command") or []
        if not command:
            raise PipelineError("subprocess backend requires a command")
        return backends.SubprocessBackend([str(c) for c in command])
    raise PipelineError(f"unknown backend kind {kind!r}")


def cmd_eval(
    registry: str,
    out_root: str,
    backend: dict | None = None,
    template: str = "agnostic",
    sample_size: int = 48,
    parallelism: int = 1,
    seed: int = 0,
    role: str = "held_out",
    separator: str = translate.DEFAULT_SEPARATOR,
) -> dict:
    if sample_size < 1:
        raise PipelineError("sample_size must be >= 1")
    if role not in ("held_in", "held_out", "all"):
        raise PipelineError(f"unknown role filter {role!r}")
    backend_cfg = dict(backend or {"kind": "oracle"})
    prompt_template = template_from_name(template)

    descriptors = ingest.load_registry(registry)
    chosen = [d for d in descriptors if role == "all" or d.role == role]
    if not chosen:
        raise PipelineError(f"no datasets with role {role!r} in {registry}")

    all_instances: list[AtomicInstance] = []
    sampled: list[AtomicInstance] = []
    input_paths: list[str] = [registry]
    for desc in chosen:
        raw_by_id: dict[str, object] = {}
        for split in EVAL_SPLITS:
            if split not in desc.paths:
                continue
            input_paths.append(desc.paths[split])
            result = ingest.ingest_jsonl(desc.paths[split], desc)
            if result.errors:
                raise PipelineError(
                    f"dataset {desc.dataset_id} split {split} has invalid lines: "
                    + "; ".join(f"line {e.line}: {e.reason}" for e in result.errors[:5])
                )
            for sample in result.samples:
                raw_by_id.setdefault(sample.id, sample)
        if not raw_by_id:
            raise PipelineError(
                f"dataset {desc.dataset_id} has no eval split (need one of {EVAL_SPLITS})"
            )
        instances = translate.translate_dataset(list(raw_by_id.values()), desc, separator)
        all_instances.extend(instances)
        by_kind: dict[AtomicKind, list[AtomicInstance]] = {}
        for inst in instances:
            by_kind.setdefault(inst.kind, []).append(inst)
        for kind, group in sorted(by_kind.items(), key=lambda kv: kv[0].value):
            sampled.extend(
                translate.sample_eval_records(
                    group, sample_size, f"{seed}:{desc.dataset_id}:{kind.value}"
                )
            )

    stage = _stage_dir(out_root, STAGE_EVAL)
    generation = backends.GenerationRequest(
        prompt="",
        max_new_tokens=int(backend_cfg.get("max_new_tokens", backends.DEFAULT_MAX_NEW_TOKENS)),
        beam_width=int(backend_cfg.get("beam_width", backends.DEFAULT_BEAM_WIDTH)),
        temperature=float(backend_cfg.get("temperature", backends.DEFAULT_TEMPERATURE)),
    )
    journal_tag = hashlib.sha256(
        json.dumps({"backend": backend_cfg, "template": template}, sort_keys=True,
                   ensure_ascii=False).encode("utf-8")
    ).hexdigest()[:16]
    engine = build_backend(backend_cfg, all_instances, prompt_template)
    try:
        results = backends.run_eval(
            sampled,
            engine,
            parallelism=parallelism,
            template=prompt_template,
            request_defaults=generation,
            journal_path=stage / "journal.jsonl",
            journal_tag=journal_tag,
        )
    finally:
        close = getattr(engine, "close", None)
        if close:
            close()

    results_path = stage / "results.jsonl"
    dump_jsonl(
        (
            {"instance": inst.to_json(), "parsed": parsed.to_json()}
            for inst, parsed in results
        ),
        results_path,
    )
    safe_cfg = {k: v for k, v in backend_cfg.items() if k != "command"}
    manifest = write_manifest(
        stage,
        "eval",
        {
            "backend": safe_cfg,
            "template": template,
            "sample_size": sample_size,
            "parallelism": parallelism,
            "role": role,
            "registry": str(registry),
        },
        seed,
        inputs=input_paths,
        outputs=[results_path],
    )
    anomaly_count = sum(len(parsed.anomalies) for _, parsed in results)
    return {
        "datasets": len(chosen),
        "instances": len(results),
        "anomalies": anomaly_count,
        "results": str(results_path),
        "manifest": str(manifest),
    }


# ----------------------------------------------------------------- score


def _load_results(out_root: str) -> list[tuple[AtomicInstance, codec.ParsedAnswer]]:
    from .model import AnswerSet

    results_path = Path(out_root) / STAGE_EVAL / "results.jsonl"
    if not results_path.exists():
        raise metrics.EmptyResults(f"no eval results at {results_path}")
    records = load_jsonl(results_path)
    if not records:
        raise metrics.EmptyResults(f"eval results file {results_path} is empty")
    out = []
    for obj in records:
        inst = AtomicInstance.from_json(obj["instance"])
        parsed_obj = obj["parsed"]
        parsed = codec.ParsedAnswer(
            answers=AnswerSet.from_json(parsed_obj["answers"]),
            raw_text=parsed_obj["raw_text"],
            anomalies=tuple(
                codec.Anomaly(a["kind"], a["detail"], a.get("line"))
                for a in parsed_obj["anomalies"]
            ),
        )
        out.append((inst, parsed))
    return out


def cmd_score(out_root: str, template: str = "agnostic", seed: int = 0) -> dict:
    upstream = _require_manifest(out_root, STAGE_EVAL)
    results = _load_results(out_root)
    prompt_template = template_from_name(template)

    grouped: dict[tuple[str, TaskKind, AtomicKind], list] = {}
    anomaly_counts: dict[str, int] = {}
    for inst, parsed in results:
        grouped.setdefault((inst.dataset_id, inst.task, inst.kind), []).append((inst, parsed))
        for anomaly in parsed.anomalies:
            anomaly_counts[anomaly.kind] = anomaly_counts.get(anomaly.kind, 0) + 1

    scored = {
        key: metrics.score_dataset(pairs, prompt_template)
        for key, pairs in sorted(grouped.items(), key=lambda kv: (kv[0][0], kv[0][2].value))
    }
    stage = _stage_dir(out_root, STAGE_SCORE)
    scores_path = stage / "scores.json"
    payload = {
        "per_dataset": [
            {
                "dataset_id": ds,
                "task": task.value,
                "kind": kind.value,
                "scores": breakdown.to_json(),
            }
            for (ds, task, kind), breakdown in scored.items()
        ],
        "anomalies": dict(sorted(anomaly_counts.items())),
    }
    with open(scores_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2)
        fh.write("\n")

    manifest = write_manifest(
        stage, "score", {"template": template}, seed,
        inputs=[Path(out_root) / STAGE_EVAL / "results.jsonl"],
        outputs=[scores_path],
        upstream=upstream,
    )
    return {
        "datasets": len(scored),
        "scores": str(scores_path),
        "manifest": str(manifest),
    }


# ---------------------------------------------------------------- report


def cmd_report(out_root: str, seed: int = 0) -> dict:
    upstream = _require_manifest(out_root, STAGE_SCORE)
    scores_path = Path(out_root) / STAGE_SCORE / "scores.json"
    with open(scores_path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if not payload.get("per_dataset"):
        raise metrics.EmptyReport("scores file lists no datasets")

    per_dataset = {
        (row["dataset_id"], TaskKind(row["task"]), AtomicKind(row["kind"])):
            metrics.ScoreBreakdown.from_json(row["scores"])
        for row in payload["per_dataset"]
    }
    report = metrics.aggregate_report(per_dataset, payload.get("anomalies", {}))

    stage = _stage_dir(out_root, STAGE_REPORT)
    report_json = stage / "report.json"
    report_txt = stage / "report.txt"
    with open(report_json, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    table = metrics.render_report_table(report)
    with open(report_txt, "w", encoding="utf-8") as fh:
        fh.write(table + "\n")

    manifest = write_manifest(
        stage, "report", {}, seed,
        inputs=[scores_path], outputs=[report_json, report_txt], upstream=upstream,
    )
    return {
        "all": report.all_score,
        "per_task": report.per_task,
        "table": table,
        "report": str(report_json),
        "manifest": str(manifest),
    }
