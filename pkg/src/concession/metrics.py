"""Burstiness, rigidity indices and corpus summaries computed from tanh fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import CorpusTooSmallError, EmptyCorpusError, InvalidParameterError
from .fitting import FitKind, TanhFit
from .model import ELBOW_WIDTH, ElbowWindow, elbow_window

NormalizationMode = Literal["per_curve", "corpus"]


@dataclass(frozen=True)
class MetricsOptions:
    theta: float = 0.1
    normalization_mode: NormalizationMode = "per_curve"

    def __post_init__(self) -> None:
        if not (0.0 < self.theta < 1.0):
            raise InvalidParameterError(f"theta must lie in (0, 1), got {self.theta}")
        if self.normalization_mode not in ("per_curve", "corpus"):
            raise InvalidParameterError(f"unknown normalization mode {self.normalization_mode!r}")


@dataclass(frozen=True)
class CorpusScaler:
    """Min-max ranges of |a| and b over the usable fits of a corpus.

    ``speed_max`` is the largest peak speed ``|a b|``; only corpus-mode
    CRI* needs it.
    """

    a_min: float
    a_max: float
    b_min: float
    b_max: float
    speed_max: float = 0.0

    @classmethod
    def from_fits(cls, fits: Iterable[TanhFit]) -> "CorpusScaler":
        usable = [f for f in fits if f.usable]
        if not usable:
            raise CorpusTooSmallError("no fit with concession dynamics in corpus")
        a = [abs(f.params.a) for f in usable]
        b = [f.params.b for f in usable]
        speed = max(abs(f.params.a * f.params.b) for f in usable)
        return cls(min(a), max(a), min(b), max(b), speed)

    @property
    def degenerate(self) -> bool:
        return not (self.a_max > self.a_min and self.b_max > self.b_min)

    def scale_a(self, a: float) -> float:
        return _scaled(abs(a), self.a_min, self.a_max)

    def scale_b(self, b: float) -> float:
        return _scaled(b, self.b_min, self.b_max)


@dataclass(frozen=True)
class ConcessionMetrics:
    tau: float | None
    cri: float | None
    cri_star: float | None
    elbow: ElbowWindow | None
    active_len: float | None
    T: int
    cri_clamped: bool = False


def _scaled(v: float, lo: float, hi: float) -> float:
    if not hi > lo:
        raise CorpusTooSmallError("min-max range is empty")
    return min(1.0, max(0.0, (v - lo) / (hi - lo)))


def minmax_scale(values: Sequence[float]) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.size < 2 or not v.max() > v.min():
        raise CorpusTooSmallError("min-max scaling needs at least two distinct values")
    return (v - v.min()) / (v.max() - v.min())


def burstiness(fit: TanhFit, scaler: CorpusScaler) -> float:
    """Peak concession rate: scaled |a| times scaled b."""
    return scaler.scale_a(fit.params.a) * scaler.scale_b(fit.params.b)


def cri_raw(a: float, T: float) -> float:
    return 1.0 - ELBOW_WIDTH / (abs(a) * T)


def cri(fit: TanhFit, T: int) -> float | None:
    """Closed-form rigidity ``1 - 2*kappa / (|a| T)`` clamped to [0, 1].

    Returns ``None`` for constant fits, which have no concession to time.
    """
    if T < 1:
        raise InvalidParameterError("T must be at least 1")
    if not fit.usable or fit.params.a == 0:
        return None
    return min(1.0, max(0.0, cri_raw(fit.params.a, T)))


def _log_cosh(u: float) -> float:
    u = abs(u)
    return u + math.log1p(math.exp(-2.0 * u)) - math.log(2.0)


def _arccosh_of_exp(log_y: float) -> float:
    """``arccosh(exp(log_y))`` for ``log_y >= 0`` without overflow."""
    if log_y > 20.0:
        return log_y + math.log(2.0) - math.exp(-2.0 * log_y) / 2.0
    return math.acosh(math.exp(log_y))


def _interval_overlap(lo: float, hi: float, T: float) -> float:
    return max(0.0, min(hi, T) - max(lo, 0.0))


def active_window_length(
    fit: TanhFit,
    T: int,
    opts: MetricsOptions | None = None,
    scaler: CorpusScaler | None = None,
) -> float:
    """Length of ``{x in [0, T] : s_hat(x) >= theta}``.

    ``per_curve`` normalises the speed by its own maximum over ``[0, T]``;
    ``corpus`` normalises by the corpus-wide peak speed ``max |a b|``.
    Both are solved in closed form: the window is an interval around the
    centre ``c / a`` whose half-width ``w / |a|`` satisfies the threshold.
    """
    opts = opts or MetricsOptions()
    if T < 1:
        raise InvalidParameterError("T must be at least 1")
    a, b, c = fit.params.a, fit.params.b, fit.params.c
    log_theta = math.log(opts.theta)

    if opts.normalization_mode == "corpus":
        if scaler is None:
            raise InvalidParameterError("corpus normalisation needs a CorpusScaler")
        if b == 0 or a == 0:
            return 0.0
        speed = abs(a * b)
        # sech^2(u) >= theta * S / |ab|  <=>  cosh(u) <= sqrt(|ab| / (theta S))
        log_bound = 0.5 * (math.log(speed) - log_theta - math.log(scaler.speed_max))
        if log_bound < 0:
            return 0.0
        w = _arccosh_of_exp(log_bound)
        mid = c / a
        return _interval_overlap(mid - w / abs(a), mid + w / abs(a), T)

    if a == 0:
        return float(T)
    mid = c / a
    if 0.0 <= mid <= T:
        log_peak_cosh = 0.0
    else:
        edge = 0.0 if mid < 0 else float(T)
        log_peak_cosh = _log_cosh(a * edge - c)
    # sech^2(u) >= theta sech^2(u_peak)  <=>  log cosh u <= log cosh u_peak - log(theta)/2
    w = _arccosh_of_exp(log_peak_cosh - 0.5 * log_theta)
    return _interval_overlap(mid - w / abs(a), mid + w / abs(a), T)


def cri_star(
    fit: TanhFit,
    T: int,
    opts: MetricsOptions | None = None,
    scaler: CorpusScaler | None = None,
) -> float:
    length = active_window_length(fit, T, opts, scaler)
    return min(1.0, max(0.0, 1.0 - length / T))


def concession_metrics(
    fit: TanhFit,
    T: int,
    scaler: CorpusScaler | None,
    opts: MetricsOptions | None = None,
) -> ConcessionMetrics:
    opts = opts or MetricsOptions()
    if not fit.usable:
        return ConcessionMetrics(None, None, None, None, None, T)
    tau = None
    if scaler is not None and not scaler.degenerate:
        tau = burstiness(fit, scaler)
    raw = cri_raw(fit.params.a, T)
    length = active_window_length(fit, T, opts, scaler)
    return ConcessionMetrics(
        tau=tau,
        cri=cri(fit, T),
        cri_star=min(1.0, max(0.0, 1.0 - length / T)),
        elbow=elbow_window(fit.params),
        active_len=length,
        T=T,
        cri_clamped=raw < 0.0,
    )


def _median_sorted(v: Sequence[float]) -> float:
    n = len(v)
    mid = n // 2
    return float(v[mid]) if n % 2 else (v[mid - 1] + v[mid]) / 2.0


def summarize(values: Iterable[float]) -> tuple[float, float]:
    """Median and Tukey-hinge IQR; for odd n both halves include the median."""
    v = sorted(float(x) for x in values)
    n = len(v)
    if n == 0:
        raise EmptyCorpusError("cannot summarise an empty list")
    if n == 1:
        return v[0], 0.0
    half = (n + 1) // 2
    lower, upper = v[:half], v[n - half:]
    return _median_sorted(v), _median_sorted(upper) - _median_sorted(lower)


# ---------------------------------------------------------------------------
# Per-role report


REPORT_COLUMNS = (
    "Agent",
    "Role",
    "Median Deal ($k)",
    "IQR",
    "Anchor ($k)",
    "IQR$k",
    "Burstiness (tau)",
    "IQR",
    "CRI",
    "IQR",
    "Turns (T)",
)


@dataclass(frozen=True)
class ObservedFit:
    """A fit plus the negotiation context the report needs."""

    config: str
    fit: TanhFit
    T: int
    deal_price: float | None


@dataclass(frozen=True)
class ReportRow:
    agent: str
    role: str
    median_deal: float | None
    deal_iqr: float | None
    anchor: float | None
    anchor_iqr: float | None
    tau: float | None
    tau_iqr: float | None
    rigidity: float | None
    rigidity_iqr: float | None
    turns: float
    n_fits: int
    n_undefined: int

    def cells(self) -> list[str]:
        def k(v):
            return "n/a" if v is None else f"{v / 1000.0:.1f}"

        def m(v):
            return "n/a" if v is None else f"{v:.2f}"

        return [
            self.agent,
            self.role.capitalize(),
            k(self.median_deal),
            k(self.deal_iqr),
            k(self.anchor),
            k(self.anchor_iqr),
            m(self.tau),
            m(self.tau_iqr),
            m(self.rigidity),
            m(self.rigidity_iqr),
            f"{self.turns:.1f}",
        ]


@dataclass(frozen=True)
class MetricsReport:
    rows: list[ReportRow]
    rigidity: str
    options: MetricsOptions
    warnings: list[str]

    @property
    def columns(self) -> tuple[str, ...]:
        cols = list(REPORT_COLUMNS)
        if self.rigidity == "cri_star":
            cols[8] = "CRI*"
        return tuple(cols)


_ROLE_ORDER = {"buyer": 0, "seller": 1}


def _maybe_summary(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    return summarize(values)


def metrics_report(
    entries: Sequence[ObservedFit],
    opts: MetricsOptions | None = None,
    rigidity: Literal["cri", "cri_star"] = "cri",
) -> MetricsReport:
    """Per-role summary table: one row per (agent config, role).

    The burstiness scaler is built once over every usable fit in ``entries``.
    When it has no spread, burstiness is reported as ``n/a`` and a warning is
    attached instead of raising.
    """
    opts = opts or MetricsOptions()
    if not entries:
        raise EmptyCorpusError("metrics report needs at least one fit")
    if rigidity not in ("cri", "cri_star"):
        raise InvalidParameterError(f"unknown rigidity index {rigidity!r}")
    warnings: list[str] = []
    try:
        scaler = CorpusScaler.from_fits(e.fit for e in entries)
    except CorpusTooSmallError:
        scaler = None
    if scaler is None or scaler.degenerate:
        warnings.append("burstiness undefined: corpus has no spread in |a| or b")

    groups: dict[tuple[str, str], list[ObservedFit]] = {}
    for e in entries:
        groups.setdefault((e.config, e.fit.role), []).append(e)

    rows = []
    for (config, role) in sorted(groups, key=lambda k: (k[0], _ROLE_ORDER.get(k[1], 2), k[1])):
        group = groups[(config, role)]
        deals, anchors, taus, rig = [], [], [], []
        undefined = 0
        for e in group:
            anchors.append(e.fit.params.d)
            if e.deal_price is not None:
                deals.append(e.deal_price)
            if not e.fit.usable:
                undefined += 1
                continue
            m = concession_metrics(e.fit, e.T, scaler, opts)
            if m.tau is not None:
                taus.append(m.tau)
            value = m.cri if rigidity == "cri" else m.cri_star
            if value is not None:
                rig.append(value)
        md, mdi = _maybe_summary(deals)
        an, ani = _maybe_summary(anchors)
        ta, tai = _maybe_summary(taus)
        ri, rii = _maybe_summary(rig)
        rows.append(
            ReportRow(
                agent=config,
                role=role,
                median_deal=md,
                deal_iqr=mdi,
                anchor=an,
                anchor_iqr=ani,
                tau=ta,
                tau_iqr=tai,
                rigidity=ri,
                rigidity_iqr=rii,
                turns=float(np.mean([e.T for e in group])),
                n_fits=len(group),
                n_undefined=undefined,
            )
        )
        if undefined:
            warnings.append(f"{config}/{role}: {undefined} constant fit(s) without metrics")
    return MetricsReport(rows=rows, rigidity=rigidity, options=opts, warnings=warnings)
