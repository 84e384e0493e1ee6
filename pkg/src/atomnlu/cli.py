"""Thin command-line client for the service.

Every subcommand builds a request from the config file plus flag
overrides and posts it to the service. Without ``--server`` the service
runs embedded in this process (same filesystem, no network); with
``--server http://host:port`` the same requests go to a remote instance.

Exit codes: 0 success, 1 validation/usage error, 2 backend failure.
"""
from __future__ import annotations

import json
import sys

import click
import httpx

from .config import load_config, merge_config

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_BACKEND = 2


class _Group(click.Group):
    """Usage errors exit 1 (validation), not click's default of 2."""

    def main(self, *args, standalone_mode=True, **kwargs):
        try:
            return super().main(*args, standalone_mode=False, **kwargs)
        except click.exceptions.Exit as exc:
            sys.exit(exc.exit_code)
        except click.Abort:
            sys.exit(EXIT_VALIDATION)
        except click.ClickException as exc:
            exc.show()
            sys.exit(EXIT_VALIDATION)


def _client(server: str | None) -> httpx.Client:
    from .service.client import service_client

    return service_client(server)


def _post(ctx: click.Context, path: str, payload: dict) -> dict:
    client = _client(ctx.obj.get("server"))
    try:
        response = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        click.echo(f"error: cannot reach service: {exc}", err=True)
        sys.exit(EXIT_BACKEND)
    finally:
        client.close()
    try:
        body = response.json()
    except json.JSONDecodeError:
        click.echo(f"error: service returned non-JSON ({response.status_code})", err=True)
        sys.exit(EXIT_BACKEND)
    if response.status_code == 422:
        click.echo(f"error: invalid request: {json.dumps(body)}", err=True)
        sys.exit(EXIT_VALIDATION)
    if not body.get("ok", False):
        error = body.get("error") or {}
        click.echo(f"error [{error.get('code', '?')}]: {error.get('message', body)}", err=True)
        sys.exit(EXIT_BACKEND if response.status_code == 502 else EXIT_VALIDATION)
    return body.get("summary", {})


def _echo_summary(summary: dict) -> None:
    table = summary.pop("table", None)
    click.echo(json.dumps(summary, ensure_ascii=False, indent=2))
    if table:
        click.echo(table)


def _base_payload(ctx: click.Context, **overrides) -> dict:
    cfg = ctx.obj["config"]
    payload = {
        "out_dir": cfg.get("out_dir", "out"),
        "seed": cfg.get("seed", 0),
        "template": cfg.get("template", "agnostic"),
    }
    return merge_config(payload, overrides)


@click.group(cls=_Group)
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="YAML config file; flags override its values.")
@click.option("--server", default=None, help="Remote service URL (default: run embedded).")
@click.option("--out", "out_dir", default=None, help="Output root directory.")
@click.option("--seed", type=int, default=None, help="Run seed, recorded in manifests.")
@click.option("--template", type=click.Choice(["agnostic", "language-specific"]), default=None)
@click.pass_context
def main(ctx, config_path, server, out_dir, seed, template):
    """Drive the unified NLU data/eval pipeline."""
    cfg = load_config(config_path)
    cfg = merge_config(cfg, {"out_dir": out_dir, "seed": seed, "template": template})
    ctx.obj = {"config": cfg, "server": server or cfg.get("server")}


@main.command()
@click.argument("registry", required=False)
@click.pass_context
def ingest(ctx, registry):
    """Validate raw datasets and write normalized samples + registry."""
    registry = registry or ctx.obj["config"].get("registry")
    if not registry:
        click.echo("error: no registry given (argument or config key 'registry')", err=True)
        sys.exit(EXIT_VALIDATION)
    _echo_summary(_post(ctx, "/pipeline/ingest", _base_payload(ctx, registry=registry)))


@main.command()
@click.option("--separator", default=None, help="ET/NLI concatenation separator.")
@click.pass_context
def translate(ctx, separator):
    """Translate ingested samples into atomic instances."""
    cfg = ctx.obj["config"]
    payload = _base_payload(ctx, separator=separator or cfg.get("separator"))
    _echo_summary(_post(ctx, "/pipeline/translate", payload))


@main.command()
@click.option("--variants", type=int, default=None, help="Instructions per source instance.")
@click.option("--max-positives", type=int, default=None)
@click.option("--max-negatives", type=int, default=None)
@click.option("--universe-scope", type=click.Choice(["dataset", "task"]), default=None,
              help="Negative-label pool: per dataset (fine-tuning) or per task (pre-training).")
@click.pass_context
def augment(ctx, variants, max_positives, max_negatives, universe_scope):
    """Expand instances into candidate-resampled training instructions."""
    aug_cfg = ctx.obj["config"].get("augment", {})
    payload = _base_payload(
        ctx,
        variants_per_sample=variants if variants is not None else aug_cfg.get("variants_per_sample"),
        max_positive_labels=max_positives if max_positives is not None else aug_cfg.get("max_positive_labels"),
        max_negative_labels=max_negatives if max_negatives is not None else aug_cfg.get("max_negative_labels"),
        universe_scope=universe_scope or aug_cfg.get("universe_scope"),
    )
    _echo_summary(_post(ctx, "/pipeline/augment", payload))


@main.command()
@click.option("--label-quota", type=int, default=None, help="Max instructions per dataset-label pair.")
@click.option("--exempt-task", "exempt_tasks", multiple=True, help="Task kinds excluded from balancing.")
@click.pass_context
def balance(ctx, label_quota, exempt_tasks):
    """Cap instructions per (dataset, positive label) pair."""
    bal_cfg = ctx.obj["config"].get("balance", {})
    payload = _base_payload(
        ctx,
        per_label_quota=label_quota if label_quota is not None else bal_cfg.get("per_label_quota"),
        exempt_tasks=list(exempt_tasks) or bal_cfg.get("exempt_tasks"),
    )
    _echo_summary(_post(ctx, "/pipeline/balance", payload))


@main.command("emit-train")
@click.option("--stage", type=click.Choice(["pretrain", "finetune"]), default="finetune")
@click.option("--source", type=click.Choice(["translate", "augment", "balance", "pt"]),
              default="balance", help="Which stage's instances become training records.")
@click.pass_context
def emit_train(ctx, stage, source):
    """Write prompt/completion training records plus the advisory sidecar."""
    payload = _base_payload(ctx, stage=stage, source=source)
    _echo_summary(_post(ctx, "/pipeline/emit-train", payload))


@main.command("gen-pt-prompts")
@click.argument("passages")
@click.option("--kind", type=click.Choice(["cls_bundle", "entity_bundle", "both"]), default="both")
@click.pass_context
def gen_pt_prompts(ctx, passages, kind):
    """Build generator prompts for the pre-training corpus."""
    payload = _base_payload(ctx, passages=passages, kinds=kind)
    _echo_summary(_post(ctx, "/pipeline/gen-pt-prompts", payload))


@main.command("parse-pt-responses")
@click.argument("responses")
@click.option("--max-negatives", type=int, default=None)
@click.pass_context
def parse_pt_responses(ctx, responses, max_negatives):
    """Parse generator responses and assemble the pre-training corpus."""
    aug_cfg = ctx.obj["config"].get("augment", {})
    payload = _base_payload(
        ctx,
        responses=responses,
        max_negative_labels=max_negatives if max_negatives is not None else aug_cfg.get("max_negative_labels"),
    )
    _echo_summary(_post(ctx, "/pipeline/parse-pt-responses", payload))


@main.command("eval")
@click.option("--datasets", "registry", default=None,
              help="Registry file or directory containing registry.json.")
@click.option("--backend", "backend_kind",
              type=click.Choice(["http", "subprocess", "oracle", "scramble"]), default=None)
@click.option("--endpoint", default=None, help="HTTP backend base URL.")
@click.option("--timeout", type=float, default=None, help="HTTP backend request timeout (seconds).")
@click.option("--scramble-fraction", type=float, default=None)
@click.option("--sample-size", type=int, default=None, help="Eval records per dataset and atomic kind.")
@click.option("--parallelism", type=int, default=None)
@click.option("--role", type=click.Choice(["held_in", "held_out", "all"]), default=None)
@click.pass_context
def eval_cmd(ctx, registry, backend_kind, endpoint, timeout, scramble_fraction,
             sample_size, parallelism, role):
    """Run a backend over sampled eval records and store parsed results."""
    import os

    cfg = ctx.obj["config"]
    registry = registry or cfg.get("registry")
    if not registry:
        click.echo("error: no registry given (--datasets or config key 'registry')", err=True)
        sys.exit(EXIT_VALIDATION)
    if os.path.isdir(registry):
        registry = os.path.join(registry, "registry.json")
    backend_cfg = merge_config(
        cfg.get("backend", {}),
        {"kind": backend_kind, "endpoint": endpoint, "timeout": timeout,
         "scramble_fraction": scramble_fraction},
    )
    eval_cfg = cfg.get("eval", {})
    payload = _base_payload(
        ctx,
        registry=registry,
        backend=backend_cfg or {"kind": "oracle"},
        sample_size=sample_size if sample_size is not None else eval_cfg.get("sample_size"),
        parallelism=parallelism if parallelism is not None else eval_cfg.get("parallelism"),
        role=role or eval_cfg.get("role"),
        separator=cfg.get("separator"),
    )
    _echo_summary(_post(ctx, "/pipeline/eval", payload))


@main.command()
@click.pass_context
def score(ctx):
    """Score stored eval results per dataset and atomic kind."""
    _echo_summary(_post(ctx, "/pipeline/score", _base_payload(ctx)))


@main.command()
@click.pass_context
def report(ctx):
    """Aggregate scores into the ten-task + ALL report."""
    _echo_summary(_post(ctx, "/pipeline/report", _base_payload(ctx)))


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=9100)
def serve(host, port):
    """Run the service for remote thin clients."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
