"""Declarative run configuration (YAML with ``${ENV}`` interpolation)."""

from __future__ import annotations

import os
import re
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError

_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)(?::-([^}]*))?\}")


def demo_dir() -> Path:
    return Path(str(resources.files("inclusynth").joinpath("data/demo")))


def _interpolate(value: Any) -> Any:
    if isinstance(value, str):
        def sub(m):
            if m.group(1) in os.environ:
                return os.environ[m.group(1)]
            if m.group(2) is not None:
                return m.group(2)
            raise ConfigError(f"environment variable {m.group(1)} is not set")

        return _ENV_RE.sub(sub, value)
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    return value


@dataclass(frozen=True)
class Paths:
    seed_corpus: Path
    vocabulary: Path
    prompt_dir: Path
    output_dir: Path
    normalizer_rules: Path | None = None


@dataclass(frozen=True)
class SplitConfig:
    ratio: float = 0.7
    seed: int = 42


@dataclass(frozen=True)
class GenerationConfig:
    target_lengths: tuple[int, ...] = (30,)
    policy: str = "capped"
    cap: int = 20
    seed: int = 0


@dataclass(frozen=True)
class ChatConfig:
    prompts: tuple[str, ...] | None = None  # None: every registered prompt
    max_rows: int | None = None
    seed: int = 0
    rows_per_sample: int | None = None  # None: one row per (sample, prompt)


@dataclass(frozen=True)
class InferenceConfig:
    endpoints: Path | None = None
    parallelism: int = 4
    max_retries: int = 3
    timeout_seconds: float = 60.0
    backoff_base: float = 0.5
    partition: str = "test"
    prompts: tuple[str, ...] | None = None


@dataclass(frozen=True)
class EvaluationConfig:
    bin_width: int = 10


@dataclass(frozen=True)
class PipelineConfig:
    paths: Paths
    split: SplitConfig = field(default_factory=SplitConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    chat: ChatConfig = field(default_factory=ChatConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    source: Path | None = None

    def section(self, name: str) -> dict:
        return {k: (str(v) if isinstance(v, Path) else v) for k, v in asdict(getattr(self, name)).items()}


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected a mapping")
    return value


def _typed(section: str, data: dict, key: str, kind, default):
    if key not in data or data[key] is None:
        return default
    try:
        return kind(data[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key}: expected {kind.__name__}, got {data[key]!r}") from None


def _tuple_or_none(value):
    if value is None:
        return None
    return tuple(value) if isinstance(value, (list, tuple)) else (value,)


def parse_config(raw: dict, base_dir: Path, output_dir: str | Path | None = None) -> PipelineConfig:
    raw = _interpolate(raw or {})
    p = _section(raw, "paths")

    def resolve(key, required=True):
        v = p.get(key)
        if v is None:
            if required:
                raise ConfigError(f"paths.{key}: required")
            return None
        path = Path(v)
        return path if path.is_absolute() else (base_dir / path)

    out = Path(output_dir) if output_dir else Path(p.get("output_dir") or "inclusynth-out")
    paths = Paths(resolve("seed_corpus"), resolve("vocabulary"), resolve("prompt_dir"), out, resolve("normalizer_rules", False))

    s = _section(raw, "split")
    split = SplitConfig(_typed("split", s, "ratio", float, 0.7), _typed("split", s, "seed", int, 42))

    g = _section(raw, "generation")
    lengths = g.get("target_length", g.get("target_lengths", 30))
    lengths = lengths if isinstance(lengths, list) else [lengths]
    try:
        lengths = tuple(int(x) for x in lengths)
    except (TypeError, ValueError):
        raise ConfigError(f"generation.target_length: expected integers, got {lengths!r}") from None
    generation = GenerationConfig(
        lengths,
        str(g.get("expansion_policy", g.get("policy", "capped"))),
        _typed("generation", g, "cap", int, 20),
        _typed("generation", g, "seed", int, 0),
    )

    c = _section(raw, "chat")
    chat = ChatConfig(
        _tuple_or_none(c.get("prompts")),
        _typed("chat", c, "max_rows", int, None),
        _typed("chat", c, "seed", int, 0),
        _typed("chat", c, "rows_per_sample", int, None),
    )

    i = _section(raw, "inference")
    ep = i.get("endpoints")
    inference = InferenceConfig(
        endpoints=(Path(ep) if Path(ep).is_absolute() else base_dir / ep) if ep else None,
        parallelism=_typed("inference", i, "parallelism", int, 4),
        max_retries=_typed("inference", i, "max_retries", int, 3),
        timeout_seconds=_typed("inference", i, "timeout_seconds", float, 60.0),
        backoff_base=_typed("inference", i, "backoff_base", float, 0.5),
        partition=str(i.get("partition", "test")),
        prompts=_tuple_or_none(i.get("prompts")),
    )

    e = _section(raw, "evaluation")
    evaluation = EvaluationConfig(_typed("evaluation", e, "bin_width", int, 10))
    return PipelineConfig(paths, split, generation, chat, inference, evaluation)


def validate(cfg: PipelineConfig) -> PipelineConfig:
    for key in ("seed_corpus", "vocabulary", "prompt_dir", "normalizer_rules"):
        path = getattr(cfg.paths, key)
        if path is not None and not path.exists():
            raise ConfigError(f"paths.{key}: {path} does not exist")
    if cfg.inference.endpoints is not None and not cfg.inference.endpoints.exists():
        raise ConfigError(f"inference.endpoints: {cfg.inference.endpoints} does not exist")
    if not 0.0 < cfg.split.ratio < 1.0:
        raise ConfigError(f"split.ratio: must be in (0, 1), got {cfg.split.ratio}")
    if not cfg.generation.target_lengths or min(cfg.generation.target_lengths) < 1:
        raise ConfigError("generation.target_length: every length must be >= 1")
    if cfg.generation.policy not in ("exhaustive", "capped"):
        raise ConfigError(f"generation.expansion_policy: must be exhaustive or capped, got {cfg.generation.policy!r}")
    if cfg.generation.cap < 1:
        raise ConfigError("generation.cap: must be >= 1")
    if cfg.chat.max_rows is not None and cfg.chat.max_rows < 1:
        raise ConfigError("chat.max_rows: must be >= 1")
    if cfg.chat.rows_per_sample is not None and cfg.chat.rows_per_sample < 1:
        raise ConfigError("chat.rows_per_sample: must be >= 1")
    if cfg.inference.parallelism < 1:
        raise ConfigError("inference.parallelism: must be >= 1")
    if cfg.inference.max_retries < 0:
        raise ConfigError("inference.max_retries: must be >= 0")
    if cfg.inference.timeout_seconds <= 0:
        raise ConfigError("inference.timeout_seconds: must be > 0")
    if cfg.inference.partition not in ("train", "test"):
        raise ConfigError("inference.partition: must be train or test")
    if cfg.evaluation.bin_width < 1:
        raise ConfigError("evaluation.bin_width: must be >= 1")
    return cfg


def load_config(
    path: str | Path | None = None, output_dir: str | Path | None = None, seed_override: int | None = None
) -> PipelineConfig:
    path = Path(path) if path else demo_dir() / "config.yaml"
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    cfg = parse_config(raw, path.parent, output_dir)
    if seed_override is not None:
        cfg = replace(
            cfg,
            split=replace(cfg.split, seed=seed_override),
            generation=replace(cfg.generation, seed=seed_override),
            chat=replace(cfg.chat, seed=seed_override),
        )
    return validate(replace(cfg, source=path))
