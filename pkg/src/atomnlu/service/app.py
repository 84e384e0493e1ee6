"""FastAPI service exposing the pipeline and the prompt codec.

Pipeline endpoints run on the host filesystem (paths in the request body
refer to the machine the service runs on). Validation problems map to
400, backend failures to 502; both come back as a structured
CommandResponse so the thin CLI client can translate them into exit
codes.
"""
from __future__ import annotations

import logging

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import backends, codec, pipeline
from ..model import AtomicKind, AtomnluError
from . import schemas

logger = logging.getLogger(__name__)

_BACKEND_ERRORS = (backends.BackendUnavailable, backends.BackendTimeout, backends.ProtocolError)


def _failure(command: str, exc: Exception) -> JSONResponse:
    if isinstance(exc, _BACKEND_ERRORS):
        status = 502
    elif isinstance(exc, AtomnluError):
        status = 400
    else:
        logger.exception("command %s crashed", command)
        status = 500
    code = getattr(exc, "code", "internal")
    body = schemas.CommandResponse(
        ok=False,
        command=command,
        error=schemas.CommandError(code=str(code), message=str(exc)),
    )
    return JSONResponse(status_code=status, content=body.model_dump())


def _run(command: str, fn, *args, **kwargs):
    try:
        summary = fn(*args, **kwargs)
    except Exception as exc:  # noqa: BLE001 - mapped onto the wire contract
        return _failure(command, exc)
    return schemas.CommandResponse(ok=True, command=command, summary=summary)


def create_app() -> FastAPI:
    app = FastAPI(
        title="atomnlu",
        description="Atomic classify/extract pipeline for NLU datasets and model scoring",
        version=pipeline.PACKAGE_VERSION,
    )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": pipeline.PACKAGE_VERSION}

    @app.post("/pipeline/ingest", response_model=schemas.CommandResponse)
    def run_ingest(req: schemas.IngestRequest):
        return _run("ingest", pipeline.cmd_ingest, req.registry, req.out_dir, seed=req.seed)

    @app.post("/pipeline/translate", response_model=schemas.CommandResponse)
    def run_translate(req: schemas.TranslateRequest):
        return _run("translate", pipeline.cmd_translate, req.out_dir, req.separator, seed=req.seed)

    @app.post("/pipeline/augment", response_model=schemas.CommandResponse)
    def run_augment(req: schemas.AugmentRequest):
        return _run(
            "augment",
            pipeline.cmd_augment,
            req.out_dir,
            variants_per_sample=req.variants_per_sample,
            max_positive_labels=req.max_positive_labels,
            max_negative_labels=req.max_negative_labels,
            seed=req.seed,
            universe_scope=req.universe_scope,
        )

    @app.post("/pipeline/balance", response_model=schemas.CommandResponse)
    def run_balance(req: schemas.BalanceRequest):
        return _run(
            "balance",
            pipeline.cmd_balance,
            req.out_dir,
            per_label_quota=req.per_label_quota,
            exempt_tasks=req.exempt_tasks,
            seed=req.seed,
        )

    @app.post("/pipeline/emit-train", response_model=schemas.CommandResponse)
    def run_emit_train(req: schemas.EmitTrainRequest):
        return _run(
            "emit-train",
            pipeline.cmd_emit_train,
            req.out_dir,
            template=req.template,
            stage_tag=req.stage,
            source=req.source,
            seed=req.seed,
        )

    @app.post("/pipeline/gen-pt-prompts", response_model=schemas.CommandResponse)
    def run_gen_pt_prompts(req: schemas.GenPtPromptsRequest):
        return _run("gen-pt-prompts", pipeline.cmd_gen_pt_prompts, req.passages, req.out_dir,
                    req.kinds, seed=req.seed)

    @app.post("/pipeline/parse-pt-responses", response_model=schemas.CommandResponse)
    def run_parse_pt_responses(req: schemas.ParsePtResponsesRequest):
        return _run(
            "parse-pt-responses",
            pipeline.cmd_parse_pt_responses,
            req.responses,
            req.out_dir,
            max_negative_labels=req.max_negative_labels,
            seed=req.seed,
        )

    @app.post("/pipeline/eval", response_model=schemas.CommandResponse)
    def run_eval(req: schemas.EvalRequest):
        return _run(
            "eval",
            pipeline.cmd_eval,
            req.registry,
            req.out_dir,
            backend=req.backend.model_dump(),
            template=req.template,
            sample_size=req.sample_size,
            parallelism=req.parallelism,
            seed=req.seed,
            role=req.role,
            separator=req.separator,
        )

    @app.post("/pipeline/score", response_model=schemas.CommandResponse)
    def run_score(req: schemas.ScoreRequest):
        return _run("score", pipeline.cmd_score, req.out_dir, template=req.template, seed=req.seed)

    @app.post("/pipeline/report", response_model=schemas.CommandResponse)
    def run_report(req: schemas.ReportRequest):
        return _run("report", pipeline.cmd_report, req.out_dir, seed=req.seed)

    @app.post("/codec/render", response_model=schemas.RenderResponse)
    def render(req: schemas.RenderRequest):
        template = pipeline.template_from_name(req.template)
        prompt = codec.render_prompt_parts(
            AtomicKind(req.kind), req.lang, req.input_text, req.candidates, template
        )
        return schemas.RenderResponse(prompt=prompt)

    @app.post("/codec/parse", response_model=schemas.ParseResponse)
    def parse(req: schemas.ParseRequest):
        template = pipeline.template_from_name(req.template)
        parsed = codec.parse_response(AtomicKind(req.kind), req.candidates, req.text, template)
        return schemas.ParseResponse(
            labels=list(parsed.answers.labels),
            extractions={q: list(s) for q, s in parsed.answers.extractions.items()},
            anomalies=[a.to_json() for a in parsed.anomalies],
        )

    return app
