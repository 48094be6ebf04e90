"""Command-line entry point: ``concession simulate|fit|metrics|report|cluster|kappa``.

Exit codes: 0 success, 2 usage error, 3 schema or configuration error,
4 empty corpus, 5 corpus too small for burstiness, 6 corrupt corpus,
1 any other package error.  Worker processes come from ``CONCESSION_WORKERS``.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import pipeline
from .cluster import fleiss_kappa, load_agreement, load_vectors, select_k, write_assignments
from .errors import (
    ConcessionError,
    ConfigError,
    CorpusTooSmallError,
    CorruptCorpusError,
    EmptyCorpusError,
    InvalidParameterError,
    SchemaError,
)
from .ingest import Corpus, load_corpus, write_corpus
from .metrics import MetricsOptions
from .protocol.engine import run_batch
from .protocol.scenarios import PRESETS, preset
from .protocol.types import ScenarioConfig

EXIT_SCHEMA = 3
EXIT_EMPTY = 4
EXIT_TOO_SMALL = 5
EXIT_CORRUPT = 6

DEFAULT_JITTER = 0.1


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, CorruptCorpusError):
        return EXIT_CORRUPT
    if isinstance(exc, CorpusTooSmallError):
        return EXIT_TOO_SMALL
    if isinstance(exc, EmptyCorpusError):
        return EXIT_EMPTY
    if isinstance(exc, (SchemaError, ConfigError, InvalidParameterError)):
        return EXIT_SCHEMA
    return 1


def load_scenario(source: str) -> ScenarioConfig:
    """A preset name, or a JSON file of ScenarioConfig fields (optionally with ``preset``)."""
    key = source.lower().replace("-", "_").replace(" ", "_")
    if key in PRESETS and not Path(source).is_file():
        return preset(key)
    try:
        data = json.loads(Path(source).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{source!r} is neither a preset ({', '.join(PRESETS)}) nor a file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected a JSON object")
    base = data.pop("preset", None)
    if base is not None:
        unknown = set(data) - set(ScenarioConfig.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
        return preset(base, **{k: tuple(v) if k.endswith("_power") else v for k, v in data.items()})
    return ScenarioConfig.from_dict(data)


def _warn(warnings) -> None:
    warnings = list(warnings)
    for w in warnings:
        click.echo(f"warning: {w}", err=True)
    if warnings:
        click.echo(f"{len(warnings)} warning(s)", err=True)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")


metrics_flags = [
    click.option("--theta", type=float, default=0.1, show_default=True, help="CRI* activity threshold"),
    click.option("--mode", "mode", type=click.Choice(["per_curve", "corpus"]), default="per_curve", show_default=True),
    click.option("--rigidity", type=click.Choice(["cri", "cri_star"]), default="cri", show_default=True),
    click.option("--allow-undefined-tau", is_flag=True, help="report burstiness as n/a instead of failing"),
]


def with_metrics_flags(fn):
    for flag in reversed(metrics_flags):
        fn = flag(fn)
    return fn


@click.group()
def cli() -> None:
    """Tanh concession-curve analysis of alternating-offers negotiations."""


@cli.command()
@click.option("--scenario", default="neutral", show_default=True, help="preset name or scenario JSON file")
@click.option("--n", "n", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--seed", type=int, default=None, help="base seed (default: the scenario's)")
@click.option("--jitter", type=click.FloatRange(0, 1, max_open=True), default=DEFAULT_JITTER, show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
def simulate(scenario, n, seed, jitter, out):
    """Self-play N negotiations and write a corpus directory."""
    config = load_scenario(scenario)
    seed = config.seed if seed is None else seed
    config = config.with_(seed=seed, jitter=jitter)
    transcripts = run_batch(config, n, base_seed=seed, jitter=jitter)
    corpus = Corpus(tuple(transcripts), source="simulated", protocol="alternating_only",
                    scenario=config.name, scenario_config=config.to_dict())
    manifest = write_corpus(corpus, out)
    s = pipeline.outcome_summary(transcripts)
    median = "n/a" if s["median_price"] is None else f"{s['median_price']:.2f}"
    click.echo(
        f"scenario={config.name} negotiations={s['negotiations']} deals={s['deals']} "
        f"deal_rate={s['deal_rate']:.2f} median_price={median} checksum={manifest.checksum}"
    )
    if s["no_deal"]:
        click.echo("no_deal " + " ".join(f"{k}={v}" for k, v in s["no_deal"].items()))


@cli.command()
@click.argument("corpus", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--indexing", type=click.Choice(["global", "global_turn", "per_role"]), default="global", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
def fit(corpus, indexing, out):
    """Fit tanh curves to every role of every negotiation in CORPUS."""
    fits = pipeline.fit_corpus_file(load_corpus(corpus), indexing)
    _write(out, pipeline.dump_fits(fits))
    click.echo(f"fits={len(fits.records)} indexing={fits.header['indexing']}")
    _warn(fits.warnings)


@cli.command()
@click.argument("fits_path", metavar="FITS", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@with_metrics_flags
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
def metrics(fits_path, theta, mode, rigidity, allow_undefined_tau, out):
    """Summarize a fits file into the per-role metrics CSV."""
    opts = MetricsOptions(theta=theta, normalization_mode=mode)
    fits = pipeline.load_fits(fits_path)
    report = pipeline.build_report(fits, opts, rigidity, allow_undefined_tau)
    _write(out, pipeline.render_report_csv(report, pipeline.report_header(fits, opts, rigidity)))
    click.echo(f"rows={len(report.rows)}")
    _warn(report.warnings)


@cli.command()
@click.argument("corpus", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--indexing", type=click.Choice(["global", "global_turn", "per_role"]), default="global", show_default=True)
@with_metrics_flags
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
def report(corpus, indexing, theta, mode, rigidity, allow_undefined_tau, out):
    """Fit and summarize CORPUS; write report.csv, report.txt, fits.jsonl and plot_data.csv."""
    opts = MetricsOptions(theta=theta, normalization_mode=mode)
    data = load_corpus(corpus)
    fits = pipeline.fit_corpus_file(data, indexing)
    rep = pipeline.build_report(fits, opts, rigidity, allow_undefined_tau)
    header = pipeline.report_header(fits, opts, rigidity)
    _write(out / "fits.jsonl", pipeline.dump_fits(fits))
    _write(out / "report.csv", pipeline.render_report_csv(rep, header))
    text = pipeline.render_report_text(rep, header)
    _write(out / "report.txt", text)
    _write(out / "plot_data.csv", pipeline.render_plot_data(data, fits))
    click.echo(text, nl=False)
    _warn(list(fits.warnings) + rep.warnings)


@cli.command()
@click.argument("vectors", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--k-min", type=int, default=2, show_default=True)
@click.option("--k-max", type=int, default=None, help="default: min(n - 1, 30)")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True)
def cluster(vectors, k_min, k_max, out):
    """Cluster label embeddings; write label,cluster_id assignments."""
    rep = select_k(load_vectors(vectors), k_min, k_max)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_assignments(rep, out)
    click.echo(f"k={rep.k} dbi={rep.dbi:.4f} silhouette={rep.silhouette:.4f}")


@cli.command()
@click.argument("matrix", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def kappa(matrix):
    """Fleiss's kappa of an item-by-category count matrix."""
    result = fleiss_kappa(load_agreement(matrix))
    if result.kappa is None:
        click.echo("kappa=undefined (all ratings fall in one category)")
    else:
        click.echo(f"kappa={result.kappa:.2f}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="concession", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except (ConcessionError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return exit_code_for(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
