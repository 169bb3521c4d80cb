from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from slicetype.backends import (
    BackendResponseError,
    BackendTransportError,
    HTTPBackend,
    MockBackend,
    SamplingConfig,
    prompt_hash,
)
from slicetype.knowledge_base import KnowledgeBase, TypeRecord
from slicetype.pipeline import (
    InferenceEngine,
    build_prompt,
    clean_completion,
    normalize_name,
    normalize_output,
    normalize_structural,
    sample,
    vote,
)
from slicetype.ranker import RankedCandidate
from slicetype.slicer import MASK, locate_variable, slice_all


class FlakyBackend:
    """Fails every attempt for the listed sample indices."""

    def __init__(self, answer, dead=(), malformed=()):
        self.answer = answer
        self.dead = set(dead)
        self.malformed = set(malformed)
        self.calls = 0

    def complete(self, prompt, config, index):
        self.calls += 1
        if index in self.dead:
            raise BackendTransportError("connection reset")
        if index in self.malformed:
            raise BackendResponseError("no content")
        return self.answer


def _engine(project, sdg, kb, completions, **kw):
    return InferenceEngine(project, sdg, kb, MockBackend({"*": completions}), **kw)


# -- output cleanup and voting ----------------------------------------------------------


@pytest.mark.parametrize(
    "raw,clean",
    [
        ("Ggnn", "Ggnn"),
        ("  `Ggnn`.  ", "Ggnn"),
        ("```python\nList[int]\n```", "List[int]"),
        ("The type is Ggnn.", "Ggnn"),
        ("Answer: Dict[str, int]", "Dict[str, int]"),
        ("<mask>: Optional[str]", "Optional[str]"),
        ("it is most likely a `torch.Tensor` here", "torch.Tensor"),
        ("{name: string, age: number}", "{name: string, age: number}"),
        ("", ""),
        ("```\n```", ""),
    ],
)
def test_clean_completion(raw, clean):
    assert clean_completion(raw) == clean


def test_vote_orders_by_count_then_first_seen():
    pred = vote(["M"] * 5 + ["Ggnn"] * 12 + ["int"] * 3)
    assert pred.ranked == [("Ggnn", 12), ("M", 5), ("int", 3)]
    assert vote(["A", "B"] * 10).ranked == [("A", 10), ("B", 10)]
    assert vote([]).ranked == []


def test_vote_canonicalizes_whitespace():
    assert vote(["Dict[str, int]", "Dict[str,int]"]).ranked == [("Dict[str,int]", 2)]


# -- sampling ------------------------------------------------------------------------------


def test_sample_returns_mock_strings_verbatim():
    mock = MockBackend({"*": ["Ggnn", "{a: int}"]})
    assert sample(mock, "p", SamplingConfig(n_samples=4)) == ["Ggnn", "{a: int}", "Ggnn", "{a: int}"]


def test_mock_keys_by_prompt_hash():
    mock = MockBackend({prompt_hash("exact"): ["A"], "*": ["B"]})
    assert sample(mock, "exact", SamplingConfig(n_samples=1)) == ["A"]
    assert sample(mock, "other", SamplingConfig(n_samples=1)) == ["B"]
    with pytest.raises(BackendResponseError):
        MockBackend({prompt_hash("exact"): ["A"]}).complete("other", SamplingConfig(), 0)


def test_transport_failures_are_dropped_after_retries():
    backend = FlakyBackend("int", dead={3, 7})
    diag = []
    out = sample(backend, "p", SamplingConfig(), retries=2, diagnostics=diag)
    assert len(out) == 18
    assert len(diag) == 2 and all("transport" in d for d in diag)
    assert backend.calls == 18 + 2 * 3


def test_every_request_failing_is_an_error():
    with pytest.raises(BackendTransportError):
        sample(FlakyBackend("int", dead=range(3)), "p", SamplingConfig(n_samples=3))


def test_malformed_and_empty_completions_are_skipped():
    diag = []
    out = sample(FlakyBackend("int", malformed={0}), "p", SamplingConfig(n_samples=3), diagnostics=diag)
    assert out == ["int", "int"] and "malformed" in diag[0]
    diag = []
    assert sample(MockBackend({"*": ["", "str"]}), "p", SamplingConfig(n_samples=4), diagnostics=diag) == ["str", "str"]
    assert len(diag) == 2


# -- normalization -------------------------------------------------------------------------


def _kb(*records):
    return KnowledgeBase(list(records))


def test_normalize_structural():
    student = TypeRecord("Student", "school", frozenset({"name", "age"}))
    assert normalize_structural("{name: string, age: number}", _kb(student)) == "Student"
    assert normalize_structural("{x: int}", KnowledgeBase()) is None
    assert normalize_structural("{x: int, y: int, z: int}", _kb(student)) is None


def test_normalize_structural_tie_prefers_project():
    lib = TypeRecord("Alpha", "lib", frozenset({"name", "age"}), source="library")
    proj = TypeRecord("Zeta", "app", frozenset({"name", "age"}), source="project")
    assert normalize_structural("{name: string, age: number}", _kb(lib, proj)) == "Zeta"


def test_normalize_name():
    kb = _kb(*(TypeRecord(n, "p") for n in ("Name", "Node", "Frame")))
    assert normalize_name("Neme", kb) == "Name"
    assert normalize_name("Node", kb) == "Node"
    assert normalize_name("Qqq", kb) == "Qqq"
    assert normalize_name("Neme", KnowledgeBase()) == "Neme"


def test_builtin_names_are_not_repaired():
    kb = _kb(TypeRecord("Interval", "p"), TypeRecord("Strand", "p"))
    assert normalize_output("int", kb) == "int"
    assert normalize_output("str", kb) == "str"
    assert normalize_output("List[int]", kb) == "List[int]"
    assert normalize_output("Intervall", kb) == "Interval"


# -- prompts and end to end ----------------------------------------------------------------


def test_ggnn_prompt(ggnn_project, ggnn_sdg, ggnn_kb):
    prepared = _engine(ggnn_project, ggnn_sdg, ggnn_kb, ["Ggnn"]).prepare_at("main", 1, "model")
    text = prepared.prompt.text
    assert text.count(MASK) == 1
    assert "def MakeBatchBuilder(model: <mask>):" in text
    assert "1. Ggnn (package: main)" in text
    assert "fields: message_passing_step_count, vocabulary" in text
    again = _engine(ggnn_project, ggnn_sdg, ggnn_kb, ["Ggnn"]).prepare_at("main", 1, "model")
    assert again.prompt.text == text


def test_prompt_without_candidates(ggnn_project, ggnn_sdg, ggnn_kb):
    prepared = _engine(ggnn_project, ggnn_sdg, ggnn_kb, ["x"], use_candidates=False).prepare_at("main", 1, "model")
    assert "Known types" not in prepared.prompt.text
    assert prepared.candidates == ()


def test_prompt_keeps_candidate_order(ggnn_project, ggnn_sdg):
    loc = locate_variable(ggnn_project, "main", 1, "model")
    slices = slice_all(ggnn_sdg, loc, ggnn_project)
    cands = [RankedCandidate(TypeRecord(f"T{i}", "p"), 1.0 - i / 10) for i in range(5)]
    text = build_prompt(slices, cands, loc).text
    positions = [text.index(f"{i + 1}. T{i} ") for i in range(5)]
    assert positions == sorted(positions)
    with pytest.raises(ValueError):
        build_prompt([], cands, loc)


@pytest.mark.parametrize(
    "completions",
    [
        ["Ggnn"],
        ["{message_passing_step_count: int, vocabulary: str}"],
        ["Ggnn", "Ggnnn"],
    ],
)
def test_infer_ggnn(ggnn_project, ggnn_sdg, ggnn_kb, completions):
    engine = _engine(ggnn_project, ggnn_sdg, ggnn_kb, completions)
    pred = engine.infer(locate_variable(ggnn_project, "main", 1, "model"))
    assert pred.ranked == [("Ggnn", 20)]
    assert pred.prompt_tokens > 0


def test_normalization_only_merges(ggnn_project, ggnn_sdg, ggnn_kb):
    engine = _engine(ggnn_project, ggnn_sdg, ggnn_kb, ["Ggnnn", "Ggnnn", "int", "Ggnn", "str"])
    loc = locate_variable(ggnn_project, "main", 1, "model")
    pred = engine.infer(loc)
    before = dict(vote(pred.raw_samples).ranked)
    after = dict(pred.ranked)
    for name, count in before.items():
        if name in after:
            assert after[name] >= count
    assert pred.top() == "Ggnn"


def test_infer_many_matches_sequential(ggnn_project, ggnn_sdg, ggnn_kb):
    engine = _engine(ggnn_project, ggnn_sdg, ggnn_kb, ["Ggnn", "int", "Ggnn"], concurrency=3)
    locs = [locate_variable(ggnn_project, "main", line, name)
            for line, name in [(1, "model"), (2, "steps"), (10, "obj"), (1, "MakeBatchBuilder")]]
    assert [p.ranked for p in engine.infer_many(locs)] == [engine.infer(l).ranked for l in locs]


# -- HTTP backend against a local stub -----------------------------------------------------


class _Stub(BaseHTTPRequestHandler):
    seen: list = []
    status = 200
    body = {"choices": [{"message": {"content": "List[int]"}}]}

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        _Stub.seen.append((self.path, self.headers.get("Authorization"), json.loads(self.rfile.read(length))))
        self.send_response(_Stub.status)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(json.dumps(_Stub.body).encode())

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _Stub)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _Stub.seen, _Stub.status = [], 200
    _Stub.body = {"choices": [{"message": {"content": "List[int]"}}]}
    yield f"http://127.0.0.1:{server.server_address[1]}/v1"
    server.shutdown()


def test_http_backend_request_shape(stub_server):
    backend = HTTPBackend(stub_server, "m1", api_key="k")
    assert backend.complete("hello", SamplingConfig(), 0) == "List[int]"
    path, auth, body = _Stub.seen[0]
    assert path == "/v1/chat/completions" and auth == "Bearer k"
    assert body["model"] == "m1" and body["temperature"] == 0.2 and body["top_p"] == 0.3
    assert body["messages"] == [{"role": "user", "content": "hello"}]


def test_http_backend_errors(stub_server):
    backend = HTTPBackend(stub_server, "m1")
    _Stub.status = 503
    with pytest.raises(BackendTransportError):
        backend.complete("x", SamplingConfig(), 0)
    _Stub.status, _Stub.body = 200, {"nope": 1}
    with pytest.raises(BackendResponseError):
        backend.complete("x", SamplingConfig(), 0)
    with pytest.raises(BackendTransportError):
        HTTPBackend("http://127.0.0.1:9", "m", timeout=2).complete("x", SamplingConfig(), 0)


def test_http_backend_from_env(monkeypatch):
    monkeypatch.setenv("SLICETYPE_API_BASE", "http://example.invalid/v1")
    monkeypatch.setenv("SLICETYPE_MODEL", "env-model")
    assert HTTPBackend.from_env().model == "env-model"
    assert HTTPBackend.from_env(model="flag-model").model == "flag-model"
