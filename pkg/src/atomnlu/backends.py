"""Generation backends and the bounded-parallelism eval dispatcher.

A backend turns a GenerationRequest into completion text. Four are
provided: an HTTP client for completion endpoints, a subprocess driver
speaking a length-prefixed frame protocol, a gold-answer oracle keyed by
prompt digest, and a scramble backend that corrupts oracle answers for
metric calibration. Decoding runs model-side; the client only transmits
the decode parameters (beam width 4, up to 128 new tokens, temperature
1.0 by default).
"""
from __future__ import annotations

import hashlib
import json
import logging
import random
import struct
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import httpx

from . import codec
from .model import AtomicInstance, AtomnluError

logger = logging.getLogger(__name__)

DEFAULT_MAX_NEW_TOKENS = 128
DEFAULT_BEAM_WIDTH = 4
DEFAULT_TEMPERATURE = 1.0


class BackendUnavailable(AtomnluError):
    code = "backend_unavailable"


class BackendTimeout(AtomnluError):
    code = "timeout"


class ProtocolError(AtomnluError):
    code = "protocol_error"


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS
    beam_width: int = DEFAULT_BEAM_WIDTH
    temperature: float = DEFAULT_TEMPERATURE
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class BackendResult:
    text: str
    latency: float
    attempt_count: int = 1

    def __post_init__(self) -> None:
        if self.attempt_count < 1:
            raise ValueError("attempt_count must be >= 1")


class Backend(Protocol):
    max_concurrency: int | None

    def generate(self, request: GenerationRequest) -> BackendResult: ...


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class OracleBackend:
    """Returns the gold completion for a prompt it has seen at build time.

    Keyed by prompt digest rather than instance id, so a drifting prompt
    renderer shows up as a hard lookup failure instead of a silent score.
    """

    max_concurrency: int | None = None

    def __init__(self, completions: Mapping[str, str]):
        self._completions = dict(completions)

    @classmethod
    def from_instances(
        cls,
        instances: Iterable[AtomicInstance],
        template: codec.PromptTemplate = codec.DEFAULT_TEMPLATE,
    ) -> "OracleBackend":
        return cls(
            {
                prompt_digest(codec.render_prompt(inst, template)):
                    codec.render_gold_completion(inst, template)
                for inst in instances
            }
        )

    def generate(self, request: GenerationRequest) -> BackendResult:
        digest = prompt_digest(request.prompt)
        if digest not in self._completions:
            raise ProtocolError(f"oracle has no completion for prompt digest {digest[:12]}")
        return BackendResult(text=self._completions[digest], latency=0.0)


def _unit_interval(*parts: object) -> float:
    """Stable uniform draw in [0, 1) from the hashed parts."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


CORRUPTED_SPAN = "__corrupted__"


class ScrambleBackend:
    """Oracle answers with a fraction of answer lines deleted or corrupted.

    Per-line damage draws are coupled across fractions (a line corrupted
    at f=0.25 stays corrupted at every larger f), so raising the fraction
    can only remove correct content. Used to check that the metrics fall
    when answers degrade.
    """

    max_concurrency: int | None = None

    def __init__(self, oracle: OracleBackend, fraction: float, seed: int = 0):
        if not 0.0 <= fraction <= 1.0:
            raise ValueError("fraction must be within [0, 1]")
        self._oracle = oracle
        self.fraction = fraction
        self.seed = seed

    def generate(self, request: GenerationRequest) -> BackendResult:
        base = self._oracle.generate(request)
        digest = prompt_digest(request.prompt)
        kept: list[str] = []
        for i, line in enumerate(base.text.splitlines()):
            if _unit_interval(self.seed, digest, i) >= self.fraction:
                kept.append(line)
                continue
            if _unit_interval(self.seed, digest, i, "mode") < 0.5:
                continue  # delete the line
            split = codec.split_query_line(line)
            if split is None:
                kept.append(CORRUPTED_SPAN)
            else:
                kept.append(f"{split[0]}: {CORRUPTED_SPAN}")
        return BackendResult(text="\n".join(kept), latency=0.0)


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff_base: float = 1.0
    jitter: float = 0.1

    def delay(self, attempt: int, rng: random.Random) -> float:
        return self.backoff_base * (2**attempt) * (1.0 + self.jitter * rng.random())


@dataclass(frozen=True)
class HttpBackendConfig:
    """Field mapping onto an arbitrary completion endpoint."""

    base_url: str
    path: str = "/v1/completions"
    prompt_field: str = "prompt"
    max_tokens_field: str = "max_tokens"
    temperature_field: str = "temperature"
    stop_field: str = "stop"
    response_text_path: str = "text"   # dotted path, list indices allowed
    auth_env: str = "ATOMNLU_AUTH_TOKEN"
    auth_header: str = "Authorization"
    timeout: float = 30.0
    extra_fields: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "base_url", "path", "prompt_field", "max_tokens_field", "temperature_field",
            "stop_field", "response_text_path", "auth_env", "auth_header", "timeout",
        )}
        out["extra_fields"] = dict(self.extra_fields)
        return out


def _dig(obj, dotted: str):
    for part in dotted.split("."):
        if isinstance(obj, list):
            obj = obj[int(part)]
        elif isinstance(obj, dict):
            if part not in obj:
                raise KeyError(part)
            obj = obj[part]
        else:
            raise KeyError(part)
    return obj


class HttpBackend:
    """Remote completion endpoint with bounded retries and backoff.

    Beam-search parameters have no portable field on completion APIs; they
    are logged once and dropped from the request body.
    """

    max_concurrency: int | None = None

    def __init__(
        self,
        config: HttpBackendConfig,
        retry: RetryPolicy = RetryPolicy(),
        transport: httpx.BaseTransport | None = None,
        auth_token: str | None = None,
        sleep: Callable[[float], None] = time.sleep,
        seed: int = 0,
    ):
        self.config = config
        self.retry = retry
        self._sleep = sleep
        self._rng = random.Random(seed)
        self._warned_beam = False
        headers = {}
        if auth_token is None:
            import os

            auth_token = os.environ.get(config.auth_env)
        if auth_token:
            headers[config.auth_header] = f"Bearer {auth_token}"
        self._client = httpx.Client(
            base_url=config.base_url,
            headers=headers,
            timeout=config.timeout,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def _body(self, request: GenerationRequest) -> dict:
        if request.beam_width != 1 and not self._warned_beam:
            logger.info("beam width %d is model-side; dropped from the request body",
                        request.beam_width)
            self._warned_beam = True
        body = dict(self.config.extra_fields)
        body[self.config.prompt_field] = request.prompt
        body[self.config.max_tokens_field] = request.max_new_tokens
        body[self.config.temperature_field] = request.temperature
        if request.stop_sequences:
            body[self.config.stop_field] = list(request.stop_sequences)
        return body

    def generate(self, request: GenerationRequest) -> BackendResult:
        body = self._body(request)
        last_error: Exception | None = None
        start = time.monotonic()
        for attempt in range(self.retry.attempts):
            if attempt:
                self._sleep(self.retry.delay(attempt - 1, self._rng))
            try:
                response = self._client.post(self.config.path, json=body)
            except httpx.TimeoutException as exc:
                last_error = BackendTimeout(str(exc))
                continue
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = BackendUnavailable(f"server returned {response.status_code}")
                continue
            if response.status_code >= 400:
                raise ProtocolError(f"endpoint rejected the request: {response.status_code}")
            try:
                text = str(_dig(response.json(), self.config.response_text_path))
            except (KeyError, IndexError, ValueError) as exc:
                raise ProtocolError(
                    f"response lacks field {self.config.response_text_path!r}: {exc}"
                ) from exc
            return BackendResult(
                text=text, latency=time.monotonic() - start, attempt_count=attempt + 1
            )
        raise BackendUnavailable(
            f"gave up after {self.retry.attempts} attempts: {last_error}"
        )


_FRAME_HEADER = struct.Struct(">I")


class SubprocessBackend:
    """Child process speaking length-prefixed frames on stdin/stdout.

    Frame layout: 4-byte big-endian payload length, then that many bytes of
    UTF-8 text. One prompt frame in, one completion frame out. The child is
    inherently serial, so this backend declares max_concurrency = 1.
    """

    max_concurrency: int | None = 1

    def __init__(self, command: Sequence[str]):
        self._proc = subprocess.Popen(
            list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE
        )
        self._lock = threading.Lock()

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.terminate()
            self._proc.wait(timeout=5)

    def __enter__(self) -> "SubprocessBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def generate(self, request: GenerationRequest) -> BackendResult:
        payload = request.prompt.encode("utf-8")
        start = time.monotonic()
        with self._lock:
            if self._proc.poll() is not None:
                raise BackendUnavailable("worker process has exited")
            try:
                self._proc.stdin.write(_FRAME_HEADER.pack(len(payload)) + payload)
                self._proc.stdin.flush()
                header = self._proc.stdout.read(_FRAME_HEADER.size)
                if len(header) != _FRAME_HEADER.size:
                    raise ProtocolError("worker closed the stream mid-frame")
                (length,) = _FRAME_HEADER.unpack(header)
                body = self._proc.stdout.read(length)
                if len(body) != length:
                    raise ProtocolError("truncated completion frame")
            except (BrokenPipeError, OSError) as exc:
                raise BackendUnavailable(f"worker pipe failed: {exc}") from exc
        return BackendResult(text=body.decode("utf-8"), latency=time.monotonic() - start)


@dataclass
class JournalEntry:
    instance_id: str
    prompt_digest: str
    completion_digest: str
    text: str
    tag: str = ""

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "prompt_digest": self.prompt_digest,
            "completion_digest": self.completion_digest,
            "text": self.text,
            "tag": self.tag,
        }


def read_journal(path: str | Path) -> dict[str, JournalEntry]:
    entries: dict[str, JournalEntry] = {}
    path = Path(path)
    if not path.exists():
        return entries
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn tail write from an interrupted run
            entries[obj["instance_id"]] = JournalEntry(
                instance_id=obj["instance_id"],
                prompt_digest=obj["prompt_digest"],
                completion_digest=obj["completion_digest"],
                text=obj["text"],
                tag=obj.get("tag", ""),
            )
    return entries


def run_eval(
    instances: Sequence[AtomicInstance],
    backend: Backend,
    parallelism: int = 1,
    template: codec.PromptTemplate = codec.DEFAULT_TEMPLATE,
    request_defaults: GenerationRequest | None = None,
    journal_path: str | Path | None = None,
    journal_tag: str = "",
) -> list[tuple[AtomicInstance, codec.ParsedAnswer]]:
    """Query the backend for every instance and parse the completions.

    At most ``parallelism`` requests are in flight (further capped by the
    backend's own limit); results always come back in instance-id order, so
    output is independent of scheduling. Per-instance failures become empty
    answers tagged with a BackendFailure anomaly. A journal of completed
    instances is appended as completions arrive; on restart, journaled
    completions with matching prompt digest and tag (a fingerprint of the
    run configuration) are reused instead of re-queried. The run aborts
    only if every instance of some dataset failed.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    ordered = sorted(instances, key=lambda inst: inst.id)
    if not ordered:
        return []

    limit = parallelism
    if backend.max_concurrency is not None:
        limit = min(limit, backend.max_concurrency)

    journal = read_journal(journal_path) if journal_path else {}
    journal_lock = threading.Lock()
    journal_fh = open(journal_path, "a", encoding="utf-8") if journal_path else None

    defaults = request_defaults or GenerationRequest(prompt="")

    def fetch(inst: AtomicInstance) -> tuple[str, Exception | None]:
        prompt = codec.render_prompt(inst, template)
        digest = prompt_digest(prompt)
        cached = journal.get(inst.id)
        if cached is not None and cached.prompt_digest == digest and cached.tag == journal_tag:
            return cached.text, None
        request = GenerationRequest(
            prompt=prompt,
            max_new_tokens=defaults.max_new_tokens,
            beam_width=defaults.beam_width,
            temperature=defaults.temperature,
            stop_sequences=defaults.stop_sequences,
        )
        try:
            result = backend.generate(request)
        except Exception as exc:  # noqa: BLE001 - failures become result anomalies
            return "", exc
        if journal_fh is not None:
            entry = JournalEntry(
                instance_id=inst.id,
                prompt_digest=digest,
                completion_digest=hashlib.sha256(result.text.encode("utf-8")).hexdigest(),
                text=result.text,
                tag=journal_tag,
            )
            with journal_lock:
                journal_fh.write(json.dumps(entry.to_json(), ensure_ascii=False) + "\n")
                journal_fh.flush()
        return result.text, None

    try:
        if limit == 1:
            fetched = [fetch(inst) for inst in ordered]
        else:
            with ThreadPoolExecutor(max_workers=limit) as pool:
                fetched = list(pool.map(fetch, ordered))
    finally:
        if journal_fh is not None:
            journal_fh.close()

    results: list[tuple[AtomicInstance, codec.ParsedAnswer]] = []
    failures_per_dataset: dict[str, int] = {}
    totals_per_dataset: dict[str, int] = {}
    for inst, (text, error) in zip(ordered, fetched):
        totals_per_dataset[inst.dataset_id] = totals_per_dataset.get(inst.dataset_id, 0) + 1
        if error is not None:
            failures_per_dataset[inst.dataset_id] = failures_per_dataset.get(inst.dataset_id, 0) + 1
            parsed = codec.empty_parsed(
                inst.kind, "", [codec.Anomaly(codec.BACKEND_FAILURE, str(error))]
            )
        else:
            parsed = codec.parse_response(inst.kind, inst.candidates, text, template)
        results.append((inst, parsed))

    for dataset_id, failed in failures_per_dataset.items():
        if failed == totals_per_dataset[dataset_id]:
            raise BackendUnavailable(
                f"all {failed} instances failed for dataset {dataset_id}"
            )
    return results
