"""File-to-file pipeline steps behind the command-line tool.

Every function here is a pure function of its inputs; the CLI only adds
argument parsing, file paths and exit codes.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import CorpusTooSmallError, EmptyCorpusError, SchemaError
from .fitting import FitKind, FitOptions, TanhFit, fit_corpus
from .ingest import Corpus, extract_trajectories
from .metrics import CorpusScaler, MetricsOptions, MetricsReport, ObservedFit, metrics_report
from .model import OfferTrajectory, TanhParams, tanh_speed, tanh_value
from .protocol.types import NegotiationTranscript

INDEXING_ALIASES = {"global": "global_turn", "global_turn": "global_turn", "per_role": "per_role"}
FITS_HEADER = "fits_header"


@dataclass(frozen=True)
class FitRecord:
    """A fit with the negotiation context needed downstream."""

    negotiation_id: str
    config: str
    T: int
    deal_price: Optional[float]
    fit: TanhFit

    def to_json(self) -> dict:
        f = self.fit
        return {
            "negotiation_id": self.negotiation_id,
            "config": self.config,
            "role": f.role,
            "T": self.T,
            "deal_price": self.deal_price,
            "kind": f.kind.value,
            "a": f.params.a,
            "b": f.params.b,
            "c": f.params.c,
            "d": f.params.d,
            "sse": f.sse,
            "rmse": f.rmse,
            "r_squared": f.r_squared,
            "n_points": f.n_points,
            "iterations": f.iterations,
            "converged": f.converged,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FitRecord":
        try:
            fit = TanhFit(
                params=TanhParams(obj["a"], obj["b"], obj["c"], obj["d"]),
                sse=obj["sse"],
                rmse=obj["rmse"],
                r_squared=obj["r_squared"],
                n_points=obj["n_points"],
                kind=FitKind(obj["kind"]),
                iterations=obj["iterations"],
                converged=obj["converged"],
                role=obj["role"],
                negotiation_id=obj["negotiation_id"],
                T=obj["T"],
            )
            return cls(obj["negotiation_id"], obj["config"], int(obj["T"]), obj["deal_price"], fit)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad fit record: {exc}") from None


@dataclass(frozen=True)
class FitSet:
    header: dict
    records: tuple[FitRecord, ...]
    warnings: tuple[str, ...] = field(default=())


def normalize_indexing(indexing: str) -> str:
    try:
        return INDEXING_ALIASES[indexing]
    except KeyError:
        raise SchemaError(f"unknown indexing {indexing!r}") from None


def _config_name(t: NegotiationTranscript, corpus: Corpus) -> str:
    return t.scenario or corpus.scenario or "corpus"


def corpus_trajectories(corpus: Corpus, indexing: str) -> tuple[list[tuple[NegotiationTranscript, OfferTrajectory]], list[str]]:
    """Non-empty per-role trajectories in corpus order (buyer before seller)."""
    indexing = normalize_indexing(indexing)
    pairs, warnings = [], []
    for t in corpus.transcripts:
        for traj in extract_trajectories(t, indexing):
            if len(traj) == 0:
                warnings.append(f"{t.negotiation_id}/{traj.role}: no offers, skipped")
                continue
            pairs.append((t, traj))
    return pairs, warnings


def fit_corpus_file(corpus: Corpus, indexing: str = "global_turn", workers: Optional[int] = None,
                    opts: FitOptions | None = None) -> FitSet:
    if not corpus.transcripts:
        raise EmptyCorpusError("corpus holds no negotiations")
    pairs, warnings = corpus_trajectories(corpus, indexing)
    if not pairs:
        raise EmptyCorpusError("corpus holds no offers to fit")
    fits = fit_corpus([traj for _, traj in pairs], opts, workers).fits
    records = tuple(
        FitRecord(t.negotiation_id, _config_name(t, corpus), traj.T,
                  t.outcome.price if t.outcome.is_deal else None, fit)
        for (t, traj), fit in zip(pairs, fits)
    )
    header = {
        "type": FITS_HEADER,
        "indexing": normalize_indexing(indexing),
        "scenario": corpus.scenario,
        "source": corpus.source,
        "protocol": corpus.protocol,
        "max_rounds": (corpus.scenario_config or {}).get("max_rounds"),
        "negotiations": len(corpus.transcripts),
    }
    return FitSet(header, records, tuple(warnings))


def dump_fits(fits: FitSet) -> str:
    lines = [json.dumps(fits.header, sort_keys=True)]
    lines += [json.dumps(r.to_json(), sort_keys=True) for r in fits.records]
    return "".join(line + "\n" for line in lines)


def load_fits(path: str | Path) -> FitSet:
    header: Optional[dict] = None
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise SchemaError(f"{path}:{lineno}: invalid JSON") from None
            if not isinstance(obj, dict):
                raise SchemaError(f"{path}:{lineno}: expected an object")
            if obj.get("type") == FITS_HEADER:
                header = obj
            else:
                records.append(FitRecord.from_json(obj))
    if header is None:
        raise SchemaError(f"{path}: missing fits header line")
    if not records:
        raise EmptyCorpusError(f"{path}: no fits")
    return FitSet(header, tuple(records))


# ---------------------------------------------------------------------------
# Report


def build_report(fits: FitSet, opts: MetricsOptions, rigidity: str = "cri",
                 allow_undefined_tau: bool = False) -> MetricsReport:
    if not fits.records:
        raise EmptyCorpusError("no fits to report")
    if not allow_undefined_tau:
        scaler = CorpusScaler.from_fits(r.fit for r in fits.records)
        if scaler.degenerate:
            raise CorpusTooSmallError("burstiness needs spread in both |a| and b across the corpus")
    entries = [ObservedFit(r.config, r.fit, r.T, r.deal_price) for r in fits.records]
    return metrics_report(entries, opts, rigidity=rigidity)  # type: ignore[arg-type]


def report_header(fits: FitSet, opts: MetricsOptions, rigidity: str) -> list[tuple[str, object]]:
    h = fits.header
    return [
        ("theta", opts.theta),
        ("normalization", opts.normalization_mode),
        ("indexing", h.get("indexing")),
        ("max_rounds", h.get("max_rounds") if h.get("max_rounds") is not None else "unknown"),
        ("rigidity", rigidity),
        ("scenario", h.get("scenario") or "n/a"),
        ("negotiations", h.get("negotiations")),
        ("fits", len(fits.records)),
    ]


def render_report_csv(report: MetricsReport, header: Iterable[tuple[str, object]]) -> str:
    buf = io.StringIO()
    for key, value in header:
        buf.write(f"# {key}={value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report.columns)
    for row in report.rows:
        w.writerow(row.cells())
    return buf.getvalue()


def render_report_text(report: MetricsReport, header: Iterable[tuple[str, object]]) -> str:
    table = [list(report.columns)] + [row.cells() for row in report.rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
    lines = [" ".join(f"{k}={v}" for k, v in header)]
    for n, r in enumerate(table):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    for warning in report.warnings:
        lines.append(f"warning: {warning}")
    return "\n".join(lines) + "\n"


def render_plot_data(corpus: Corpus, fits: FitSet) -> str:
    """Observed offers beside fitted values and concession speed, one row per point."""
    pairs, _ = corpus_trajectories(corpus, fits.header["indexing"])
    by_key = {(r.negotiation_id, r.fit.role): r.fit for r in fits.records}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["negotiation_id", "role", "x", "observed", "fitted", "speed"])
    for t, traj in pairs:
        fit = by_key.get((t.negotiation_id, traj.role))
        if fit is None:
            continue
        fitted = np.atleast_1d(tanh_value(fit.params, traj.x))
        speed = np.atleast_1d(tanh_speed(fit.params, traj.x))
        for x, y, f, s in zip(traj.x, traj.y, fitted, speed):
            w.writerow([t.negotiation_id, traj.role, f"{x:g}", f"{y:.2f}", f"{f:.4f}", f"{s:.6f}"])
    return buf.getvalue()


def outcome_summary(transcripts: Iterable[NegotiationTranscript]) -> dict:
    ts = list(transcripts)
    prices = [t.outcome.price for t in ts if t.outcome.is_deal]
    reasons: dict[str, int] = {}
    for t in ts:
        if not t.outcome.is_deal:
            reasons[t.outcome.reason] = reasons.get(t.outcome.reason, 0) + 1
    return {
        "negotiations": len(ts),
        "deals": len(prices),
        "deal_rate": len(prices) / len(ts) if ts else 0.0,
        "median_price": statistics.median(prices) if prices else None,
        "no_deal": dict(sorted(reasons.items())),
        "outside_zopa": sum(t.deal_outside_zopa for t in ts),
    }

