from __future__ import annotations

import hashlib
import json

import pytest
import yaml
from click.testing import CliRunner

from inclusynth import pipeline
from inclusynth.cli import cli, main
from inclusynth.config import demo_dir, load_config
from inclusynth.errors import ConfigError, MissingArtifactError


def _small_config(tmp_path, **overrides) -> str:
    """A quick demo variant: one target length and a small cap."""
    raw = yaml.safe_load((demo_dir() / "config.yaml").read_text(encoding="utf-8"))
    for key in ("seed_corpus", "vocabulary", "prompt_dir"):
        raw["paths"][key] = str(demo_dir() / raw["paths"][key])
    raw["inference"]["endpoints"] = str(demo_dir() / "endpoints.yaml")
    raw["paths"]["output_dir"] = str(tmp_path / "out")
    raw["generation"].update(target_length=[35], cap=4)
    raw["chat"]["max_rows"] = 200
    for dotted, value in overrides.items():
        section, key = dotted.split("__")
        raw.setdefault(section, {})[key] = value
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(raw), encoding="utf-8")
    return str(path)


def _tree_digest(root) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


# config


def test_demo_config_loads():
    cfg = load_config()
    assert cfg.split.ratio == 0.7 and cfg.generation.policy == "capped"
    assert cfg.paths.seed_corpus.exists() and cfg.inference.endpoints.exists()


@pytest.mark.parametrize(
    "field, value, message",
    [
        ("split__ratio", 1.5, "split.ratio"),
        ("split__seed", "abc", "split.seed"),
        ("generation__expansion_policy", "random", "generation.expansion_policy"),
        ("generation__target_length", [0], "generation.target_length"),
        ("generation__cap", 0, "generation.cap"),
        ("chat__max_rows", 0, "chat.max_rows"),
        ("chat__rows_per_sample", 0, "chat.rows_per_sample"),
        ("inference__parallelism", 0, "inference.parallelism"),
        ("inference__max_retries", -1, "inference.max_retries"),
        ("inference__timeout_seconds", 0, "inference.timeout_seconds"),
        ("inference__partition", "dev", "inference.partition"),
        ("evaluation__bin_width", 0, "evaluation.bin_width"),
        ("paths__vocabulary", "/nonexistent/vocab.csv", "paths.vocabulary"),
    ],
)
def test_invalid_fields_are_named(tmp_path, field, value, message):
    with pytest.raises(ConfigError, match=message.replace(".", r"\.")):
        load_config(_small_config(tmp_path, **{field: value}))


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("paths: [unclosed", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_config(bad)


def test_env_interpolation(tmp_path, monkeypatch):
    path = _small_config(tmp_path, split__seed="${SPLIT_SEED}", generation__seed="${GEN_SEED:-5}")
    monkeypatch.setenv("SPLIT_SEED", "99")
    cfg = load_config(path)
    assert cfg.split.seed == 99 and cfg.generation.seed == 5
    monkeypatch.delenv("SPLIT_SEED")
    with pytest.raises(ConfigError, match="SPLIT_SEED"):
        load_config(path)


def test_seed_override_replaces_every_seed(tmp_path):
    cfg = load_config(_small_config(tmp_path), seed_override=123)
    assert cfg.split.seed == cfg.generation.seed == cfg.chat.seed == 123


def test_output_dir_override(tmp_path):
    cfg = load_config(_small_config(tmp_path), output_dir=tmp_path / "elsewhere")
    assert cfg.paths.output_dir == tmp_path / "elsewhere"


# pipeline


def test_stage_order_is_enforced(tmp_path):
    cfg = load_config(_small_config(tmp_path))
    with pytest.raises(MissingArtifactError, match="normalize"):
        pipeline.cmd_evaluate(cfg)
    with pytest.raises(MissingArtifactError, match="extract"):
        pipeline.cmd_split(cfg)


def test_run_all_is_byte_reproducible(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    digests = []
    for name in ("a", "b"):
        cfg = load_config(_small_config(tmp_path), output_dir=tmp_path / name)
        pipeline.cmd_run_all(cfg)
        digests.append(_tree_digest(tmp_path / name))
    assert digests[0] == digests[1]
    assert {"samples.jsonl", "chat.jsonl", "normalized.jsonl", "report/metrics.csv", "report/length_accuracy.svg"} <= set(digests[0])


def test_stage_manifests_hash_outputs(tmp_path):
    cfg = load_config(_small_config(tmp_path))
    pipeline.cmd_extract(cfg)
    out = cfg.paths.output_dir
    m = json.loads((out / "manifests" / "extract.json").read_text(encoding="utf-8"))
    assert m["stage"] == "extract"
    digest = hashlib.sha256((out / "templates.jsonl").read_bytes()).hexdigest()
    assert digest in m["outputs"].values()
    assert m["inputs"]


# CLI


def test_cli_stages_in_order(tmp_path):
    runner = CliRunner()
    config = _small_config(tmp_path)
    for stage in ("extract", "split", "generate", "chat-export", "infer", "normalize", "evaluate"):
        result = runner.invoke(cli, ["--config", config, "--log-level", "WARNING", stage])
        assert result.exit_code == 0, (stage, result.output)
    assert (tmp_path / "out" / "report" / "summary.json").exists()


def test_cli_infer_options(tmp_path):
    runner = CliRunner()
    config = _small_config(tmp_path)
    for stage in ("extract", "split", "generate"):
        assert runner.invoke(cli, ["--config", config, stage]).exit_code == 0
    result = runner.invoke(cli, ["--config", config, "infer", "--parallelism", "2", "--max-retries", "0"])
    assert result.exit_code == 0, result.output
    assert runner.invoke(cli, ["--config", config, "infer", "--parallelism", "0"]).exit_code != 0


def test_main_exit_codes(tmp_path, capsys):
    config = _small_config(tmp_path)
    with pytest.raises(SystemExit) as exc:
        main(["--config", config, "evaluate"])
    assert exc.value.code == MissingArtifactError.exit_code
    assert "missing-artifact" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["--config", str(tmp_path / "absent.yaml"), "extract"])
    assert exc.value.code == ConfigError.exit_code


def test_init_demo(tmp_path):
    runner = CliRunner()
    dest = tmp_path / "demo"
    result = runner.invoke(cli, ["init-demo", str(dest)])
    assert result.exit_code == 0
    assert {p.name for p in dest.iterdir()} >= {"config.yaml", "endpoints.yaml", "vocabulary.csv", "prompts"}
    assert load_config(dest / "config.yaml").paths.vocabulary == dest / "vocabulary.csv"
    assert runner.invoke(cli, ["init-demo", str(dest)]).exit_code != 0


def test_endpoint_file_holds_no_secrets():
    text = (demo_dir() / "endpoints.yaml").read_text(encoding="utf-8").lower()
    assert "sk-" not in text and "api_key:" not in text
