"""Run configuration: a YAML file of defaults, overridden by CLI flags.

Schema (all keys optional; see README for the full reference):

    registry: fixtures/registry.json
    out_dir: out
    seed: 0
    template: agnostic            # agnostic | language-specific
    separator: "\\t"              # ET / NLI concatenation separator
    augment: {variants_per_sample: 3, max_positive_labels: 11, max_negative_labels: 21}
    balance: {per_label_quota: 500, exempt_tasks: [SA, NLI]}
    eval:    {sample_size: 48, parallelism: 1, role: held_out}
    backend:
      kind: oracle                # http | subprocess | oracle | scramble
      endpoint: http://localhost:9000
      path: /v1/completions
      response_text_path: text
      auth_env: ATOMNLU_AUTH_TOKEN
      timeout: 30.0
      command: []                 # subprocess argv
      scramble_fraction: 0.5
      max_new_tokens: 128
      beam_width: 4
      temperature: 1.0

The backend auth secret is never stored in the file; only the name of the
environment variable holding it.
"""
from __future__ import annotations

from pathlib import Path

import yaml

from .model import AtomnluError


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise AtomnluError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise AtomnluError("config file must contain a mapping")
    return data


def merge_config(base: dict, overrides: dict) -> dict:
    """Overrides win; nested mappings merge key-wise; None overrides are skipped."""
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = value
    return merged
