"""Command line: ``mlmc-opt {moments,optimize,iwae,report} --config PATH``."""

from __future__ import annotations

import json
import sys

import click

from .config import ConfigError, build_config, load_config
from .experiments import resolve_threads, run_experiment, write_outcome


def _run(experiment, config, seed, replicates, out, threads):
    try:
        if config is not None:
            cfg = load_config(config)
        else:
            cfg = build_config({"experiment": experiment})
        if cfg.experiment != experiment:
            raise ConfigError(f"config is for experiment {cfg.experiment!r}, not {experiment!r}")
        cfg = cfg.with_overrides(seed=seed, replicates=replicates, output=out,
                                 threads=resolve_threads(threads))
    except (ConfigError, OSError) as exc:
        problems = exc.problems if isinstance(exc, ConfigError) else [str(exc)]
        click.echo(json.dumps({"status": "error", "failures": [
            {"check": "config", "detail": p} for p in problems]}), err=True)
        sys.exit(2)
    try:
        outcome = run_experiment(cfg)
        paths = write_outcome(outcome, cfg.output)
    except Exception as exc:  # noqa: BLE001 - reported as machine-readable failure
        click.echo(json.dumps({"status": "error", "failures": [
            {"check": "run", "detail": f"{cfg.experiment}: {exc}"}]}), err=True)
        sys.exit(1)
    for p in paths:
        click.echo(p)
    if outcome.failures:
        click.echo(json.dumps({"status": "failed", "failures": outcome.failures}), err=True)
        sys.exit(1)


def _common(fn):
    opts = [
        click.option("--config", "config", type=click.Path(dir_okay=False), default=None,
                     help="JSON experiment config."),
        click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
                     help="Overrides the config seed."),
        click.option("--replicates", type=click.IntRange(1), default=None),
        click.option("--out", "out", type=click.Path(file_okay=False), default=None,
                     help="Output directory."),
        click.option("--threads", type=click.IntRange(1), default=None,
                     help="Replicate workers (default: $MLMC_OPT_THREADS or 1)."),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return fn


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Multilevel MCMC gradient experiments."""


def _command(name, doc):
    @main.command(name, help=doc)
    @_common
    def cmd(config, seed, replicates, out, threads):
        _run(name, config, seed, replicates, out, threads)

    return cmd


moments = _command("moments", "Bias and moments of the estimator over a truncation grid.")
optimize = _command("optimize", "MLMC optimizer runs on a quadratic objective.")
iwae = _command("iwae", "Plain versus multilevel IWAE gradient bias.")
report = _command("report", "Plot and fit a previously written result table.")


if __name__ == "__main__":
    main()
