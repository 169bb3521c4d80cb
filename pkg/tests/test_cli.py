from __future__ import annotations

import argparse
import json

import pytest

from slicetype.cli import DomainError, RunConfig, build_parser, main

from conftest import GGNN


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _ggnn_kb(tmp_path):
    kb = tmp_path / "kb.json"
    assert main(["kb", "build", "--project", str(GGNN), "--out", str(kb)]) == 0
    return kb


def test_no_subcommand_is_usage_error(capsys):
    code, out, err = _run(capsys)
    assert code == 2 and "usage:" in err and out == ""


def test_bad_flag_is_usage_error(capsys):
    code, _, err = _run(capsys, "slice", "--bogus")
    assert code == 2 and "usage:" in err


def test_help_exits_zero(capsys):
    code, out, _ = _run(capsys, "infer", "--help")
    assert code == 0 and "--no-candidates" in out and "--intra-only" in out


def test_slice_text(capsys):
    code, out, _ = _run(capsys, "slice", "--project", str(GGNN), "--file", "main", "--line", "1", "--name", "model")
    assert code == 0
    lines = {int(row.split("|")[0]) for row in out.splitlines() if "|" in row}
    assert {5, 10, 11} <= lines


def test_slice_not_found_is_domain_error(capsys):
    code, out, err = _run(capsys, "slice", "--project", str(GGNN), "--file", "main", "--line", "3", "--name", "zzz")
    assert code == 1 and out == "" and "not found" in err


def test_missing_project_is_domain_error(capsys, tmp_path):
    code, _, err = _run(capsys, "graph", "--project", str(tmp_path / "nope"))
    assert code == 1 and "not found" in err


def test_parse_error_is_domain_error(capsys, tmp_path):
    (tmp_path / "bad.py").write_text("def f(:\n")
    code, _, err = _run(capsys, "graph", "--project", str(tmp_path))
    assert code == 1 and "bad.py" in err


def test_graph_dump(capsys, tmp_path):
    out = tmp_path / "g.txt"
    assert main(["graph", "--project", str(GGNN), "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert all(r.split()[0] in ("N", "E") for r in rows)
    assert "E main.py:10 main.py:1 call-arg model" in rows
    assert "N main.py:10:11" in rows


def test_kb_build_and_rank(capsys, tmp_path):
    kb = _ggnn_kb(tmp_path)
    records = json.loads(kb.read_text())
    assert [r["name"] for r in records] == ["Ggnn"]
    code, out, _ = _run(capsys, "rank", "--kb", str(kb), "--profile",
                        '{"fields": ["message_passing_step_count", "vocabulary"]}')
    assert code == 0
    assert json.loads(out.splitlines()[0]) == {"name": "Ggnn", "package": "main", "score": 1.0, "source": "project"}


def test_kb_build_with_libraries(tmp_path):
    kb = tmp_path / "kb.json"
    assert main(["kb", "build", "--project", str(GGNN), "--bundled-libs", "--out", str(kb)]) == 0
    sources = {r["source"] for r in json.loads(kb.read_text())}
    assert sources == {"project", "library"}


def test_rank_profile_from_file(capsys, tmp_path):
    kb = _ggnn_kb(tmp_path)
    prof = tmp_path / "p.json"
    prof.write_text('{"fields": ["vocabulary", "unknown", "other"]}')
    code, out, _ = _run(capsys, "rank", "--kb", str(kb), "--profile", str(prof))
    assert code == 0 and out == ""


def _targets(tmp_path, rows):
    path = tmp_path / "targets.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def test_infer_and_eval_with_mock(capsys, tmp_path):
    kb = _ggnn_kb(tmp_path)
    mock = tmp_path / "mock.json"
    mock.write_text(json.dumps({"*": ["Ggnn"]}))
    targets = _targets(tmp_path, [{"id": "m", "file": "main.py", "line": 1, "name": "model",
                                   "slot": "Arg", "label": "Ggnn"}])
    preds = tmp_path / "p.jsonl"
    assert main(["infer", "--project", str(GGNN), "--targets", str(targets), "--kb", str(kb),
                 "--backend", "mock", "--mock-file", str(mock), "--out", str(preds)]) == 0
    rec = json.loads(preds.read_text())
    assert rec["id"] == "m" and rec["predictions"] == [{"type": "Ggnn", "votes": 20}]
    code, out, _ = _run(capsys, "eval", "--dataset", str(targets), "--preds", str(preds), "--kb", str(kb),
                        "--report", "json")
    assert code == 0
    report = json.loads(out)
    assert report["metrics"]["EM"]["Top-1"]["All"] == 100.0
    code, out, _ = _run(capsys, "eval", "--dataset", str(targets), "--preds", str(preds))
    assert code == 0 and out.splitlines()[0].startswith("Metric")


def test_infer_reports_missing_targets(tmp_path):
    kb = _ggnn_kb(tmp_path)
    mock = tmp_path / "mock.json"
    mock.write_text(json.dumps({"*": ["Ggnn"]}))
    targets = _targets(tmp_path, [
        {"id": "ok", "file": "main.py", "line": 1, "name": "model"},
        {"id": "bad", "file": "main.py", "line": 1, "name": "ghost"},
    ])
    preds = tmp_path / "p.jsonl"
    code = main(["infer", "--project", str(GGNN), "--targets", str(targets), "--kb", str(kb),
                 "--backend", "mock", "--mock-file", str(mock), "--out", str(preds)])
    assert code == 1
    rows = [json.loads(l) for l in preds.read_text().splitlines()]
    assert [r["id"] for r in rows] == ["ok", "bad"]
    assert rows[1]["predictions"] == [] and "ghost" in rows[1]["error"]


def test_mock_backend_needs_file(capsys, tmp_path):
    kb = _ggnn_kb(tmp_path)
    targets = _targets(tmp_path, [])
    code, _, err = _run(capsys, "infer", "--project", str(GGNN), "--targets", str(targets), "--kb", str(kb),
                        "--backend", "mock", "--out", str(tmp_path / "p"))
    assert code == 1 and "--mock-file" in err


def test_http_backend_needs_configuration(capsys, tmp_path, monkeypatch):
    monkeypatch.delenv("SLICETYPE_API_BASE", raising=False)
    monkeypatch.delenv("SLICETYPE_MODEL", raising=False)
    kb = _ggnn_kb(tmp_path)
    targets = _targets(tmp_path, [])
    code, _, err = _run(capsys, "infer", "--project", str(GGNN), "--targets", str(targets), "--kb", str(kb),
                        "--out", str(tmp_path / "p"))
    assert code == 1 and "SLICETYPE_API_BASE" in err


def test_config_precedence():
    parser = build_parser()
    args = parser.parse_args(["infer", "--project", "p", "--targets", "t", "--kb", "k", "--out", "o",
                              "--temperature", "0.9"])
    env = {"SLICETYPE_TEMPERATURE": "0.5", "SLICETYPE_TOP_P": "0.7"}
    cfg = RunConfig.resolve(args, env)
    assert cfg.sampling.temperature == 0.9  # flag beats env
    assert cfg.sampling.top_p == 0.7  # env beats default
    assert cfg.sampling.n_samples == 20 and cfg.concurrency == 4  # defaults


def test_bad_env_value_is_domain_error():
    args = argparse.Namespace(log_level=None, concurrency=None)
    with pytest.raises(DomainError, match="SLICETYPE_CONCURRENCY"):
        RunConfig.resolve(args, {"SLICETYPE_CONCURRENCY": "many"})
    with pytest.raises(DomainError, match="at least 1"):
        RunConfig.resolve(args, {"SLICETYPE_CONCURRENCY": "0"})
