"""Run every (endpoint, prompt, sample) combination with retries and resume."""

from __future__ import annotations

import asyncio
import hashlib
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ..errors import BackendError, InvalidParameterError, MissingArtifactError
from ..generator import GeneratedSample
from ..jsonl import dumps, write_json
from ..prompts import PromptSpec, render_prompt
from .backends import Backend, ChatCompletionsBackend
from .endpoints import ModelEndpoint
from .mock import MockBackend, MockPolicy

log = logging.getLogger(__name__)

RETRYABLE = (BackendError, asyncio.TimeoutError)


@dataclass(frozen=True)
class InferenceRecord:
    model_id: str
    prompt_id: str
    sample_id: str
    raw_response: str | None
    latency: float
    attempt_count: int
    status: str  # "ok" | "failed"
    error: str | None = None

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.model_id, self.prompt_id, self.sample_id)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "InferenceRecord":
        return cls(**{k: d.get(k) for k in cls.__dataclass_fields__})


@dataclass
class RunManifest:
    run_id: str
    dataset_fingerprint: str
    endpoints: list[dict]
    prompts: list[str]
    seed: int
    started_at: str
    finished_at: str | None = None
    totals: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _now() -> str:
    # SOURCE_DATE_EPOCH pins timestamps for reproducible output trees
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    ts = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return ts.isoformat(timespec="seconds")


def dataset_fingerprint(samples: Iterable[GeneratedSample]) -> str:
    h = hashlib.sha256()
    for s in samples:
        h.update(f"{s.sample_id}\t{s.text}\t{s.gold_label.value}\n".encode("utf-8"))
    return h.hexdigest()


def default_run_id(fingerprint: str, endpoints: Sequence[ModelEndpoint], prompts: Sequence[str], seed: int) -> str:
    blob = dumps({"data": fingerprint, "endpoints": [e.public() for e in endpoints], "prompts": list(prompts), "seed": seed})
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def load_records(path: str | Path) -> list[InferenceRecord]:
    """Read a records file, tolerating a torn last line left by a crash."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    records = []
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            records.append(InferenceRecord.from_dict(json.loads(line)))
        except json.JSONDecodeError:
            if i == len(lines) - 1:
                break
            raise ValueError(f"{path}:{i + 1}: corrupt record") from None
    return records


def _default_backends(endpoints: Sequence[ModelEndpoint], samples: Sequence[GeneratedSample], timeout: float):
    gold = {s.sample_id: s.gold_label for s in samples}
    words = {s.sample_id: s.substitutions[0].entry.surface for s in samples if s.substitutions}
    order = {s.sample_id: i for i, s in enumerate(samples)}
    http = None
    backends: dict[str, Backend] = {}
    for ep in endpoints:
        if ep.is_mock:
            backends[ep.model_id] = MockBackend(MockPolicy.from_dict(ep.mock or {}), gold, words, order)
        else:
            http = http or ChatCompletionsBackend(timeout=timeout)
            backends[ep.model_id] = http
    return backends


async def _request(backend, endpoint, instance, max_retries, timeout, backoff_base, backoff_cap):
    attempt = 0
    while True:
        attempt += 1
        started = time.perf_counter()
        try:
            text, latency = await asyncio.wait_for(backend.complete(endpoint, instance), timeout)
        except RETRYABLE as exc:
            err = f"{type(exc).__name__}: {exc}" if str(exc) else type(exc).__name__
            if attempt > max_retries:
                return InferenceRecord(
                    endpoint.model_id, instance.prompt_id, instance.sample_id, None, 0.0, attempt, "failed", err
                )
            log.debug("retrying %s/%s/%s after %s", endpoint.model_id, instance.prompt_id, instance.sample_id, err)
            await asyncio.sleep(min(backoff_base * 2 ** (attempt - 1), backoff_cap))
            continue
        if latency is None:
            latency = time.perf_counter() - started
        return InferenceRecord(endpoint.model_id, instance.prompt_id, instance.sample_id, text, latency, attempt, "ok")


async def arun_inference(
    samples: Sequence[GeneratedSample],
    prompts: Sequence[PromptSpec],
    endpoints: Sequence[ModelEndpoint],
    records_path: str | Path,
    manifest_path: str | Path | None = None,
    parallelism: int = 4,
    max_retries: int = 3,
    timeout_seconds: float = 60.0,
    backoff_base: float = 0.5,
    backoff_cap: float = 30.0,
    resume: str | None = None,
    backends: Mapping[str, Backend] | None = None,
    seed: int = 0,
) -> tuple[list[InferenceRecord], RunManifest]:
    """Query every combination once; see :func:`run_inference`."""
    if parallelism < 1:
        raise InvalidParameterError("parallelism must be >= 1")
    if max_retries < 0:
        raise InvalidParameterError("max_retries must be >= 0")
    records_path = Path(records_path)
    manifest_path = Path(manifest_path) if manifest_path else records_path.with_name("run_manifest.json")
    prompt_ids = [p.prompt_id for p in prompts]
    fingerprint = dataset_fingerprint(samples)
    run_id = default_run_id(fingerprint, endpoints, prompt_ids, seed)

    done: dict[tuple[str, str, str], InferenceRecord] = {}
    started_at = _now()
    if resume:
        if not manifest_path.exists() or not records_path.exists():
            raise MissingArtifactError(f"cannot resume {resume}: no previous run at {records_path.parent}")
        previous = json.loads(manifest_path.read_text(encoding="utf-8"))
        if previous.get("run_id") != resume:
            raise InvalidParameterError(f"{manifest_path} belongs to run {previous.get('run_id')}, not {resume}")
        if resume != run_id:
            raise InvalidParameterError(f"run {resume} was made with different data, prompts or endpoints")
        started_at = previous.get("started_at", started_at)
        for rec in load_records(records_path):
            done.setdefault(rec.key, rec)
        with open(records_path, "w", encoding="utf-8", newline="\n") as out:
            for rec in done.values():
                out.write(dumps(rec.to_dict()) + "\n")

    if backends is None:
        backends = _default_backends(endpoints, samples, timeout_seconds)
    # fail fast on credentials before any combination is issued
    for ep in endpoints:
        await backends[ep.model_id].preflight(ep)

    manifest = RunManifest(
        run_id=run_id,
        dataset_fingerprint=fingerprint,
        endpoints=[e.public() for e in endpoints],
        prompts=prompt_ids,
        seed=seed,
        started_at=started_at,
        parameters={
            "parallelism": parallelism,
            "max_retries": max_retries,
            "timeout_seconds": timeout_seconds,
            "samples": len(samples),
        },
    )
    write_json(manifest_path, manifest.to_dict())

    records_path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(records_path, "a" if resume else "w", encoding="utf-8", newline="\n")
    sink: asyncio.Queue = asyncio.Queue()

    async def writer():
        while True:
            rec = await sink.get()
            if rec is None:
                return
            fh.write(dumps(rec.to_dict()) + "\n")
            fh.flush()
            done[rec.key] = rec

    stop = asyncio.Event()

    async def worker(ep: ModelEndpoint, queue: asyncio.Queue):
        backend = backends[ep.model_id]
        while not stop.is_set():
            try:
                instance = queue.get_nowait()
            except asyncio.QueueEmpty:
                return
            try:
                rec = await _request(backend, ep, instance, max_retries, timeout_seconds, backoff_base, backoff_cap)
            except Exception:
                # other workers finish the request they hold, so nothing answered is lost
                stop.set()
                raise
            sink.put_nowait(rec)

    workers = []
    for ep in endpoints:
        queue: asyncio.Queue = asyncio.Queue()
        for spec in prompts:
            for s in samples:
                if (ep.model_id, spec.prompt_id, s.sample_id) not in done:
                    queue.put_nowait(render_prompt(spec, s))
        workers += [asyncio.create_task(worker(ep, queue)) for _ in range(min(parallelism, max(queue.qsize(), 1)))]

    writer_task = asyncio.create_task(writer())
    try:
        results = await asyncio.gather(*workers, return_exceptions=True)
    except BaseException:
        for w in workers:
            w.cancel()
        await asyncio.gather(*workers, return_exceptions=True)
        raise
    finally:
        sink.put_nowait(None)
        await writer_task
        fh.close()
        for b in {id(b): b for b in backends.values()}.values():
            await b.aclose()
    errors = [r for r in results if isinstance(r, BaseException)]
    if errors:
        raise errors[0]

    # canonical order so identical runs give identical files
    ordered = [
        done[(ep.model_id, spec.prompt_id, s.sample_id)] for ep in endpoints for spec in prompts for s in samples
    ]
    tmp = records_path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as out:
        for rec in ordered:
            out.write(dumps(rec.to_dict()) + "\n")
    os.replace(tmp, records_path)

    ok = sum(1 for r in ordered if r.status == "ok")
    manifest.finished_at = _now()
    manifest.totals = {"ok": ok, "failed": len(ordered) - ok, "total": len(ordered)}
    write_json(manifest_path, manifest.to_dict())
    return ordered, manifest


def run_inference(*args, **kwargs) -> tuple[list[InferenceRecord], RunManifest]:
    """Synchronous entry point.

    Produces exactly one record per combination. Retryable failures back off
    exponentially up to ``max_retries`` and are then recorded as failed.
    Records are appended as they complete; passing ``resume=<run_id>`` skips
    every combination already on disk.
    """
    return asyncio.run(arun_inference(*args, **kwargs))
