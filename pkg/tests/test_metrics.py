import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from concession.errors import CorpusTooSmallError, EmptyCorpusError, InvalidParameterError
from concession.fitting import FitKind, TanhFit
from concession.metrics import (
    REPORT_COLUMNS,
    CorpusScaler,
    MetricsOptions,
    ObservedFit,
    ReportRow,
    active_window_length,
    burstiness,
    concession_metrics,
    cri,
    cri_star,
    metrics_report,
    minmax_scale,
    summarize,
)
from concession.model import ELBOW_KAPPA, TanhParams
from oracles import active_len_grid


def mkfit(a, b=1.0, c=0.0, d=230.0, kind=FitKind.FULL, role="buyer", T=10):
    return TanhFit(TanhParams(a, b, c, d), 0.0, 0.0, 1.0, T, kind, 1, True, role=role, T=T)


def test_minmax_examples():
    assert minmax_scale([0.5, 1, 2]).tolist() == pytest.approx([0, 1 / 3, 1])
    assert minmax_scale([0, 10]).tolist() == [0, 1]
    with pytest.raises(CorpusTooSmallError):
        minmax_scale([3, 3, 3])
    with pytest.raises(CorpusTooSmallError):
        minmax_scale([3])


def test_burstiness_examples():
    fits = [mkfit(0.5, 1), mkfit(1.0, 3), mkfit(2.0, 5)]
    scaler = CorpusScaler.from_fits(fits)
    assert burstiness(fits[1], scaler) == pytest.approx(1 / 6)
    assert burstiness(fits[2], scaler) == 1.0
    assert burstiness(mkfit(0.5, 5), scaler) == 0.0


def test_burstiness_uses_pace_magnitude():
    fits = [mkfit(-0.5, 1), mkfit(1.0, 3), mkfit(-2.0, 5)]
    scaler = CorpusScaler.from_fits(fits)
    assert burstiness(fits[1], scaler) == pytest.approx(1 / 6)


def test_degenerate_scaler():
    scaler = CorpusScaler.from_fits([mkfit(1, 2), mkfit(1, 2)])
    assert scaler.degenerate
    with pytest.raises(CorpusTooSmallError):
        burstiness(mkfit(1, 2), scaler)
    with pytest.raises(CorpusTooSmallError):
        CorpusScaler.from_fits([mkfit(1, 0, kind=FitKind.CONSTANT)])


def test_cri_examples():
    a = 4 * ELBOW_KAPPA / 6
    assert a == pytest.approx(0.439, abs=1e-3)
    assert cri(mkfit(a), 6) == pytest.approx(0.5)
    assert cri(mkfit(2 * ELBOW_KAPPA / 6), 6) == 0.0
    assert cri(mkfit(0.05), 6) == 0.0
    assert cri(mkfit(1e6), 6) == pytest.approx(1.0, abs=1e-6)
    assert cri(mkfit(1, 0, kind=FitKind.CONSTANT), 6) is None
    with pytest.raises(InvalidParameterError):
        cri(mkfit(1), 0)


def test_cri_clamp_is_flagged():
    m = concession_metrics(mkfit(0.1), 6, None)
    assert m.cri == 0.0 and m.cri_clamped


def test_active_window_reference_example():
    fit = mkfit(1.0, 1.0, 5.0)
    expected = 2 * math.acosh(1 / math.sqrt(0.1))
    assert expected == pytest.approx(3.6368, abs=1e-4)
    got = active_window_length(fit, 10)
    assert got == pytest.approx(expected, abs=1e-12)
    assert abs(got - active_len_grid(1.0, 1.0, 5.0, 10, 0.1)) < 1e-3
    assert cri_star(fit, 10) == pytest.approx(1 - expected / 10)
    assert cri_star(fit, 10) == pytest.approx(0.6363, abs=1e-4)


def test_active_window_limits():
    fit = mkfit(1.0, 1.0, 5.0)
    assert active_window_length(fit, 10, MetricsOptions(theta=1e-12)) == pytest.approx(10)
    assert active_window_length(mkfit(1e6, 1.0, 5e6), 10) < 1e-5
    # Extremes: always active and zero width.
    assert cri_star(mkfit(1e-3, 1.0, 5e-3), 10) == 0.0
    assert cri_star(mkfit(1e9, 1.0, 5e9), 10) == pytest.approx(1.0)


def test_boundary_attained_maximum():
    # Centre at x = -3, outside [0, T]: the in-window peak sits at x = 0.
    fit = mkfit(0.8, 2.0, -2.4)
    got = active_window_length(fit, 8)
    assert abs(got - active_len_grid(0.8, 2.0, -2.4, 8, 0.1)) < 1e-3
    assert 0 < got < 8


def test_corpus_mode():
    opts = MetricsOptions(normalization_mode="corpus")
    fits = [mkfit(1.0, 1.0, 5.0), mkfit(1.0, 4.0, 5.0)]
    scaler = CorpusScaler.from_fits(fits)
    small, big = (active_window_length(f, 10, opts, scaler) for f in fits)
    assert small < big
    assert small == pytest.approx(active_len_grid(1, 1, 5, 10, 0.1, "corpus", scaler.speed_max), abs=1e-3)
    assert active_window_length(mkfit(1.0, 0.0, 5.0), 10, opts, scaler) == 0.0
    with pytest.raises(InvalidParameterError):
        active_window_length(fits[0], 10, opts, None)


def test_options_validation():
    with pytest.raises(InvalidParameterError):
        MetricsOptions(theta=0)
    with pytest.raises(InvalidParameterError):
        MetricsOptions(theta=1)
    with pytest.raises(InvalidParameterError):
        MetricsOptions(normalization_mode="global")


def test_summarize_examples():
    assert summarize([1, 2, 3, 4, 5]) == (3, 2)
    assert summarize([7.5]) == (7.5, 0)
    assert summarize([4, 1, 3, 2]) == (2.5, 2)
    with pytest.raises(EmptyCorpusError):
        summarize([])


def test_report_cell_format():
    row = ReportRow("Human", "buyer", 230000, 1000, 230500, 3000, 0.39, 0.03, 0.64, 0.07, 5.6, 1, 0)
    assert row.cells() == ["Human", "Buyer", "230.0", "1.0", "230.5", "3.0", "0.39", "0.03", "0.64", "0.07", "5.6"]


def test_report_identical_fits_have_zero_iqr():
    entries = [ObservedFit("cfg", mkfit(0.5, 4.0, 2.5, role=r), 10, 230000.0) for r in ("buyer", "seller") for _ in range(5)]
    rep = metrics_report(entries)
    for row in rep.rows:
        assert row.deal_iqr == 0 and row.anchor_iqr == 0 and row.rigidity_iqr == 0
        assert row.tau is None
    assert any("burstiness" in w for w in rep.warnings)
    assert rep.columns == REPORT_COLUMNS


def test_report_ordering_and_columns():
    entries = []
    for cfg in ("zeta", "alpha"):
        for role in ("seller", "buyer"):
            for a, b in ((0.5, 2.0), (1.0, 4.0), (2.0, 6.0)):
                entries.append(ObservedFit(cfg, mkfit(a, b, a * 5, role=role), 10, 230000.0))
    rep = metrics_report(entries, rigidity="cri_star")
    assert [(r.agent, r.role) for r in rep.rows] == [
        ("alpha", "buyer"), ("alpha", "seller"), ("zeta", "buyer"), ("zeta", "seller")
    ]
    assert rep.columns[8] == "CRI*" and rep.columns[0] == "Agent" and rep.columns[-1] == "Turns (T)"
    assert rep.rows[0].tau is not None
    with pytest.raises(EmptyCorpusError):
        metrics_report([])


def test_constant_fits_reported_undefined():
    entries = [
        ObservedFit("cfg", mkfit(0.5, 2.0, 2.5), 10, None),
        ObservedFit("cfg", mkfit(1.0, 4.0, 5.0), 10, None),
        ObservedFit("cfg", mkfit(0.0, 0.0, 0.0, kind=FitKind.CONSTANT), 10, None),
    ]
    rep = metrics_report(entries)
    assert rep.rows[0].n_undefined == 1 and rep.rows[0].median_deal is None


# ---------------------------------------------------------------------------
# Properties

pace = st.floats(0.01, 20).flatmap(lambda a: st.sampled_from([a, -a]))


@given(pace, st.floats(0.1, 1e4), st.floats(-30, 30), st.integers(1, 30), st.floats(0.01, 0.99))
def test_active_window_closed_form_matches_grid(a, b, m, T, theta):
    fit = mkfit(a, b, a * m)
    got = active_window_length(fit, T, MetricsOptions(theta=theta))
    assert 0 <= got <= T
    assert abs(got - active_len_grid(a, b, a * m, T, theta, n=20_001)) < 2.5 * T / 20_000 + 1e-9


@given(st.floats(0.01, 20), st.floats(0.01, 20), st.integers(1, 30), st.integers(1, 30))
def test_cri_monotone(a1, a2, T1, T2):
    lo, hi = sorted((a1, a2))
    assert cri(mkfit(lo), T1) <= cri(mkfit(hi), T1)
    tl, th = sorted((T1, T2))
    assert cri(mkfit(a1), tl) <= cri(mkfit(a1), th)


@given(pace, st.floats(0.1, 100), st.floats(-20, 20), st.integers(1, 20), st.floats(0.01, 100))
def test_per_curve_cri_star_ignores_span(a, b, m, T, s):
    f1, f2 = mkfit(a, b, a * m), mkfit(a, b * s, a * m)
    assert cri_star(f1, T) == pytest.approx(cri_star(f2, T), abs=1e-12)


@given(st.floats(0.05, 5), st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0, 12), st.integers(2, 20))
def test_corpus_cri_star_non_increasing_in_span(a, b1, b2, m, T):
    lo, hi = sorted((b1, b2))
    opts = MetricsOptions(normalization_mode="corpus")
    scaler = CorpusScaler(a, a, lo, 20.0, speed_max=a * 20.0)
    assert cri_star(mkfit(a, hi, a * m), T, opts, scaler) <= cri_star(mkfit(a, lo, a * m), T, opts, scaler) + 1e-12


@given(pace, st.floats(-20, 20), st.integers(1, 20), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_cri_star_non_decreasing_in_theta(a, m, T, t1, t2):
    lo, hi = sorted((t1, t2))
    fit = mkfit(a, 1.0, a * m)
    assert cri_star(fit, T, MetricsOptions(theta=lo)) <= cri_star(fit, T, MetricsOptions(theta=hi)) + 1e-12


@given(st.lists(st.tuples(pace, st.floats(0.01, 1e4)), min_size=2, max_size=8), st.integers(1, 30))
def test_metric_bounds(pairs, T):
    fits = [mkfit(a, b, a * 3) for a, b in pairs]
    scaler = CorpusScaler.from_fits(fits)
    assume(not scaler.degenerate)
    for mode in ("per_curve", "corpus"):
        for f in fits:
            m = concession_metrics(f, T, scaler, MetricsOptions(normalization_mode=mode))
            assert 0 <= m.tau <= 1 and 0 <= m.cri <= 1 and 0 <= m.cri_star <= 1
            assert 0 <= m.active_len <= T
