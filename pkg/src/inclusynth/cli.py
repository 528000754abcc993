"""Command-line entry point: ``inclusynth <stage>``."""

from __future__ import annotations

import logging
import shutil
import sys
from pathlib import Path

import click

from . import pipeline
from .config import demo_dir, load_config
from .errors import PipelineError


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="Run configuration (YAML). Defaults to the bundled offline demo.")
@click.option("--output-dir", type=click.Path(file_okay=False), default=None, help="Override paths.output_dir.")
@click.option("--seed-override", type=int, default=None, help="Replace every configured seed.")
@click.option("--log-level", default="INFO", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
@click.pass_context
def cli(ctx: click.Context, config_path, output_dir, seed_override, log_level) -> None:
    """Synthetic inclusive-language data generation and LLM evaluation."""
    logging.basicConfig(level=log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = {"config": config_path, "output_dir": output_dir, "seed": seed_override}


def _cfg(ctx: click.Context):
    o = ctx.obj
    return load_config(o["config"], o["output_dir"], o["seed"])


def _stage(name, func, help_text):
    @cli.command(name, help=help_text)
    @click.pass_context
    def command(ctx):
        path = func(_cfg(ctx))
        click.echo(str(path))

    return command


_stage("extract", pipeline.cmd_extract, "Segment the seed corpus and write placeholder templates.")
_stage("split", pipeline.cmd_split, "Split templates into train/test before expansion.")
_stage("generate", pipeline.cmd_generate, "Merge chunks and expand placeholders into labelled samples.")
_stage("chat-export", pipeline.cmd_chat_export, "Write chat-format training rows from the train partition.")
_stage("normalize", pipeline.cmd_normalize, "Extract binary labels from raw model responses.")
_stage("evaluate", pipeline.cmd_evaluate, "Compute metrics, analyses and figures.")
_stage("run-all", pipeline.cmd_run_all, "Run every stage in order.")


@cli.command("infer")
@click.option("--parallelism", type=click.IntRange(min=1), default=None)
@click.option("--max-retries", type=click.IntRange(min=0), default=None)
@click.option("--timeout-seconds", type=click.FloatRange(min=0, min_open=True), default=None)
@click.option("--resume", "resume", default=None, metavar="RUN_ID", help="Continue an interrupted run.")
@click.pass_context
def infer_command(ctx, parallelism, max_retries, timeout_seconds, resume):
    """Query every (endpoint, prompt, sample) combination."""
    path = pipeline.cmd_infer(
        _cfg(ctx), resume=resume, parallelism=parallelism, max_retries=max_retries, timeout_seconds=timeout_seconds
    )
    click.echo(str(path))


@cli.command("init-demo")
@click.argument("directory", type=click.Path(file_okay=False))
def init_demo(directory):
    """Copy the bundled demo corpus, vocabulary, prompts and config to DIRECTORY."""
    dest = Path(directory)
    if dest.exists() and any(dest.iterdir()):
        raise click.ClickException(f"{dest} is not empty")
    shutil.copytree(demo_dir(), dest, dirs_exist_ok=True)
    click.echo(str(dest / "config.yaml"))


def main(argv=None) -> None:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        sys.exit(130)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except PipelineError as exc:
        click.echo(f"error [{exc.category}]: {exc}", err=True)
        sys.exit(exc.exit_code)


if __name__ == "__main__":
    main()
