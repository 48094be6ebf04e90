import csv
import json

import pytest

from concession.cli import main
from concession.ingest import TRANSCRIPTS_FILE, Corpus, parse_transcripts, write_corpus
from concession.metrics import REPORT_COLUMNS

from oracles import three_gaussians

REPORT_FILES = ("fits.jsonl", "report.csv", "report.txt", "plot_data.csv")


def run(*argv):
    return main([str(a) for a in argv])


def corpus_dir(tmp_path, name="c", *extra):
    out = tmp_path / name
    assert run("simulate", "--n", 30, "--seed", 7, "--out", out, *extra) == 0
    return out


def test_simulate_summary_and_determinism(tmp_path, capsys):
    a = corpus_dir(tmp_path, "a")
    first = capsys.readouterr().out
    assert "negotiations=30" in first and "median_price=230000.00" in first
    b = corpus_dir(tmp_path, "b")
    assert capsys.readouterr().out == first
    for name in (TRANSCRIPTS_FILE, "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_scenario_name_recorded(tmp_path):
    out = corpus_dir(tmp_path, "s", "--scenario", "strong_seller")
    assert json.loads((out / "manifest.json").read_text())["scenario"] == "strong_seller"


def test_scenario_file_with_overrides(tmp_path):
    scen_file = tmp_path / "scen.json"
    scen_file.write_text(json.dumps({"preset": "neutral", "max_rounds": 8, "buyer_power": [0, -1]}))
    out = corpus_dir(tmp_path, "f", "--scenario", scen_file)
    cfg = json.loads((out / "manifest.json").read_text())["scenario_config"]
    assert cfg["max_rounds"] == 8 and cfg["buyer_power"] == [0, -1]


def test_pipeline_report(tmp_path, capsys):
    c = corpus_dir(tmp_path)
    out = tmp_path / "r"
    assert run("report", c, "--out", out) == 0
    text = capsys.readouterr().out
    assert "theta=0.1" in text and "indexing=global_turn" in text and "max_rounds=12" in text
    rows = [r for r in csv.reader((out / "report.csv").read_text().splitlines()) if r and not r[0].startswith("#")]
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert [r[2] for r in rows[1:]] == ["230.0", "230.0"]
    plot = (out / "plot_data.csv").read_text().splitlines()
    assert plot[0] == "negotiation_id,role,x,observed,fitted,speed" and len(plot) > 100


def test_fit_then_metrics_equals_report(tmp_path):
    c = corpus_dir(tmp_path)
    assert run("fit", c, "--out", tmp_path / "fits.jsonl") == 0
    assert run("metrics", tmp_path / "fits.jsonl", "--out", tmp_path / "m.csv") == 0
    assert run("report", c, "--out", tmp_path / "r") == 0
    assert (tmp_path / "m.csv").read_bytes() == (tmp_path / "r" / "report.csv").read_bytes()
    assert (tmp_path / "fits.jsonl").read_bytes() == (tmp_path / "r" / "fits.jsonl").read_bytes()


@pytest.mark.parametrize("flags", [["--indexing", "per_role"], ["--mode", "corpus", "--rigidity", "cri_star"],
                                   ["--theta", "0.3"]])
def test_report_flags(tmp_path, flags):
    c = corpus_dir(tmp_path)
    assert run("report", c, "--out", tmp_path / "r", *flags) == 0
    head = (tmp_path / "r" / "report.csv").read_text()
    assert all(f"={v}" in head for v in flags[1::2])


def test_report_byte_identical_across_workers(tmp_path, monkeypatch):
    c = corpus_dir(tmp_path)
    outputs = []
    for workers in ("1", "4"):
        monkeypatch.setenv("CONCESSION_WORKERS", workers)
        out = tmp_path / f"r{workers}"
        assert run("report", c, "--out", out) == 0
        outputs.append([(out / f).read_bytes() for f in REPORT_FILES])
    assert outputs[0] == outputs[1]


def test_cluster_command(tmp_path, capsys):
    X, _ = three_gaussians()
    path = tmp_path / "vectors.jsonl"
    path.write_text("".join(json.dumps({"label": f"s{i}", "vector": list(map(float, x))}) + "\n"
                            for i, x in enumerate(X)))
    assert run("cluster", path, "--out", tmp_path / "a.csv") == 0
    assert capsys.readouterr().out.startswith("k=3 ")
    assert (tmp_path / "a.csv").read_text().startswith("# k=3 ")


def test_kappa_command(tmp_path, capsys):
    m = tmp_path / "m.csv"
    m.write_text("item,a,b\nx,3,0\ny,0,3\nz,3,0\n")
    assert run("kappa", m) == 0
    assert capsys.readouterr().out.strip() == "kappa=1.00"
    m.write_text("item,a,b\nx,3,0\ny,3,0\n")
    assert run("kappa", m) == 0
    assert "undefined" in capsys.readouterr().out


def test_exit_usage(tmp_path):
    assert run("simulate") == 2
    assert run("frobnicate") == 2


def test_exit_invalid_scenario(tmp_path, capsys):
    assert run("simulate", "--scenario", "bogus", "--out", tmp_path / "x") == 3
    assert "error:" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{"seller_power": [3, 0]}')
    assert run("simulate", "--scenario", bad, "--out", tmp_path / "x") == 3


def test_exit_schema_mismatch(tmp_path):
    fits = tmp_path / "fits.jsonl"
    fits.write_text('{"type": "fits_header"}\n{"a": 1}\n')
    assert run("metrics", fits, "--out", tmp_path / "m.csv") == 3


def test_exit_empty_corpus(tmp_path):
    write_corpus(Corpus(()), tmp_path / "empty")
    assert run("fit", tmp_path / "empty", "--out", tmp_path / "f.jsonl") == 4


def one_sided_corpus(tmp_path):
    # Only the seller ever offers, so the corpus holds a single fit and no spread.
    lines = [
        {"negotiation_id": "n1", "turn": 1, "role": "seller", "offer": 240000, "deal": False, "message": None},
        {"negotiation_id": "n1", "turn": 2, "role": "buyer", "offer": None, "deal": True, "message": "ok"},
    ]
    ts, errors = parse_transcripts(json.dumps(x) for x in lines)
    assert not errors
    write_corpus(Corpus(tuple(ts), source="imported"), tmp_path / "one")
    return tmp_path / "one"


def test_exit_too_small_and_override(tmp_path, capsys):
    c = one_sided_corpus(tmp_path)
    assert run("report", c, "--out", tmp_path / "r") == 5
    assert run("report", c, "--out", tmp_path / "r", "--allow-undefined-tau") == 0
    assert "n/a" in (tmp_path / "r" / "report.csv").read_text()
    err = capsys.readouterr().err
    assert "n1/buyer: no offers, skipped" in err and "warning(s)" in err


def test_exit_corrupt(tmp_path):
    c = corpus_dir(tmp_path)
    path = c / TRANSCRIPTS_FILE
    path.write_bytes(path.read_bytes()[:-40])
    assert run("report", c, "--out", tmp_path / "r") == 6
