"""Command line entry point: one subcommand per pipeline stage."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .backends import BackendError, HTTPBackend, MockBackend, SamplingConfig
from .evaluator import EvalSample, categorize, evaluate
from .graphs import build_project_sdg
from .knowledge_base import KnowledgeBase, ManifestFormatError, build_project_kb, bundled_manifest, merge_library_kb
from .pipeline import InferenceEngine, TypePrediction, prediction_record
from .project import Project
from .ranker import StructuralProfile, format_ranking, rank_candidates
from .slicer import TargetNotFoundError, locate_variable, render_slices, slice_all
from .source_model import SourceError

log = logging.getLogger("slicetype")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class DomainError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    sampling: SamplingConfig
    concurrency: int
    retries: int
    log_level: str

    @classmethod
    def resolve(cls, args: argparse.Namespace, env=os.environ) -> "RunConfig":
        """Flags win over environment variables, which win over defaults."""

        def pick(flag, var, conv, default):
            if flag is not None:
                return flag
            if env.get(var):
                try:
                    return conv(env[var])
                except ValueError as exc:
                    raise DomainError(f"bad value for {var}: {env[var]!r}") from exc
            return default

        d = SamplingConfig()
        sampling = SamplingConfig(
            temperature=pick(getattr(args, "temperature", None), "SLICETYPE_TEMPERATURE", float, d.temperature),
            top_p=pick(getattr(args, "top_p", None), "SLICETYPE_TOP_P", float, d.top_p),
            n_samples=pick(getattr(args, "n_samples", None), "SLICETYPE_N_SAMPLES", int, d.n_samples),
        )
        concurrency = pick(getattr(args, "concurrency", None), "SLICETYPE_CONCURRENCY", int, 4)
        if concurrency < 1:
            raise DomainError("concurrency must be at least 1")
        return cls(
            sampling=sampling,
            concurrency=concurrency,
            retries=pick(getattr(args, "retries", None), "SLICETYPE_RETRIES", int, 2),
            log_level=pick(args.log_level, "SLICETYPE_LOG_LEVEL", str, "WARNING").upper(),
        )


# -- helpers ------------------------------------------------------------------------


def _load_project(path: str) -> Project:
    root = Path(path)
    if not root.is_dir():
        raise DomainError(f"project directory not found: {path}")
    project = Project.from_directory(root)
    if not project.units:
        raise DomainError(f"no Python files under {path}")
    for unit in project.units.values():
        for d in unit.diagnostics:
            log.info("%s: %s", unit.path, d)
    return project


def _load_kb(path: str) -> KnowledgeBase:
    try:
        return KnowledgeBase.load(path)
    except FileNotFoundError as exc:
        raise DomainError(f"knowledge base not found: {path}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise DomainError(f"{path}: not a knowledge base file: {exc}") from exc


def _read_jsonl(path: str) -> list[dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise DomainError(f"file not found: {path}") from exc
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise DomainError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise DomainError(f"{path}:{lineno}: expected a JSON object")
        out.append(obj)
    return out


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- subcommands --------------------------------------------------------------------


def cmd_kb_build(args: argparse.Namespace) -> int:
    kb = build_project_kb(_load_project(args.project))
    manifests = list(args.libs or [])
    if args.bundled_libs:
        manifests.insert(0, str(bundled_manifest()))
    for m in manifests:
        try:
            merge_library_kb(kb, m)
        except FileNotFoundError as exc:
            raise DomainError(f"manifest not found: {m}") from exc
    for d in kb.diagnostics:
        log.warning(d)
    kb.save(args.out)
    log.info("wrote %d records to %s", len(kb), args.out)
    return EXIT_OK


def cmd_graph(args: argparse.Namespace) -> int:
    sdg = build_project_sdg(_load_project(args.project), intra_only=args.intra_only)
    for d in sdg.diagnostics:
        log.info(d)
    _emit(sdg.serialize(), args.out)
    return EXIT_OK


def cmd_slice(args: argparse.Namespace) -> int:
    project = _load_project(args.project)
    sdg = build_project_sdg(project, intra_only=args.intra_only)
    loc = locate_variable(project, args.file, args.line, args.name)
    slices = slice_all(sdg, loc, project)
    if args.json:
        payload = {
            "target": {"path": loc.path, "line": loc.line, "name": loc.ref.dotted, "role": loc.role},
            "slices": [
                {
                    "anchor": {"path": s.target.anchor[0], "line": sdg.line(s.target.anchor)},
                    "variable": s.target.ref.dotted,
                    "origin": s.target.origin,
                    "statements": [{"path": st.path, "line": st.line, "text": st.text} for st in s.statements],
                }
                for s in slices
            ],
        }
        _emit(json.dumps(payload, indent=2, sort_keys=True) + "\n", args.out)
    else:
        texts = {n: s.text for n, s in sdg.statements.items()}
        _emit(render_slices(slices, None, texts), args.out)
    return EXIT_OK


def cmd_rank(args: argparse.Namespace) -> int:
    kb = _load_kb(args.kb)
    raw = args.profile
    if not raw.lstrip().startswith("{"):
        try:
            raw = Path(raw).read_text(encoding="utf-8")
        except FileNotFoundError as exc:
            raise DomainError(f"profile file not found: {args.profile}") from exc
    try:
        profile = StructuralProfile.from_json(json.loads(raw))
    except (ValueError, AttributeError) as exc:
        raise DomainError(f"bad profile JSON: {exc}") from exc
    _emit(format_ranking(rank_candidates(profile, kb, threshold=args.threshold, limit=args.limit)), args.out)
    return EXIT_OK


def _backend(args: argparse.Namespace):
    if args.backend == "mock":
        if not args.mock_file:
            raise DomainError("--backend mock needs --mock-file")
        try:
            return MockBackend.from_file(args.mock_file)
        except FileNotFoundError as exc:
            raise DomainError(f"mock file not found: {args.mock_file}") from exc
        except ValueError as exc:
            raise DomainError(f"{args.mock_file}: {exc}") from exc
    return HTTPBackend.from_env(args.api_base, args.model)


def cmd_infer(args: argparse.Namespace, config: RunConfig) -> int:
    project = _load_project(args.project)
    kb = _load_kb(args.kb)
    targets = _read_jsonl(args.targets)
    engine = InferenceEngine(
        project,
        build_project_sdg(project, intra_only=args.intra_only),
        kb,
        _backend(args),
        config.sampling,
        use_candidates=not args.no_candidates,
        retries=config.retries,
        concurrency=config.concurrency,
    )
    if args.dump_prompts:
        Path(args.dump_prompts).mkdir(parents=True, exist_ok=True)

    def run_one(t: dict) -> tuple[TypePrediction, Optional[str]]:
        try:
            loc = locate_variable(project, str(t["file"]), t.get("line"), str(t["name"]))
            if args.dump_prompts:
                prompt = engine.prepare(loc).prompt.text
                Path(args.dump_prompts, f"{t['id']}.txt").write_text(prompt, encoding="utf-8")
            return engine.infer(loc), None
        except (TargetNotFoundError, KeyError) as exc:
            return TypePrediction(), f"{type(exc).__name__}: {exc}"

    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        results = list(pool.map(run_one, targets))
    failed = 0
    lines = []
    for t, (pred, err) in zip(targets, results):
        for d in pred.diagnostics:
            log.warning("%s: %s", t.get("id"), d)
        if err:
            failed += 1
            log.error("%s: %s", t.get("id"), err)
        lines.append(prediction_record(str(t.get("id")), pred, err) + "\n")
    _emit("".join(lines), args.out)
    return EXIT_DOMAIN if failed else EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    kb = _load_kb(args.kb) if args.kb else None
    preds = {}
    for rec in _read_jsonl(args.preds):
        preds[str(rec.get("id"))] = [p["type"] for p in rec.get("predictions", [])]
    samples = []
    for rec in _read_jsonl(args.dataset):
        try:
            sid, label, slot = str(rec["id"]), str(rec["label"]), str(rec["slot"])
        except KeyError as exc:
            raise DomainError(f"dataset record missing field {exc}") from exc
        if sid not in preds:
            log.warning("%s: no prediction; counted as a miss", sid)
        samples.append(EvalSample(sid, label, slot, categorize(label, kb), preds.get(sid, [])))
    if not samples:
        raise DomainError("dataset is empty")
    report = evaluate(samples, kb)
    _emit(report.table() if args.report == "table" else report.dumps(), args.out)
    return EXIT_OK


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slicetype", description="Slice-based type inference for Python projects.")
    p.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (default) or ERROR")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    kb = sub.add_parser("kb", help="knowledge base commands")
    kb_sub = kb.add_subparsers(dest="kb_command", metavar="ACTION")
    b = kb_sub.add_parser("build", help="collect project classes (and library manifests) into a KB file")
    b.add_argument("--project", required=True, help="project root directory")
    b.add_argument("--libs", action="append", metavar="MANIFEST", help="JSON Lines library manifest (repeatable)")
    b.add_argument("--bundled-libs", action="store_true", help="also merge the manifest shipped with slicetype")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_kb_build)

    g = sub.add_parser("graph", help="dump the system dependence graph")
    g.add_argument("--project", required=True)
    g.add_argument("--out", help="output file (default: stdout)")
    g.add_argument("--intra-only", action="store_true", help="omit call-arg and call-return edges")
    g.set_defaults(func=cmd_graph)

    s = sub.add_parser("slice", help="print the slices of one variable")
    s.add_argument("--project", required=True)
    s.add_argument("--file", required=True, help="relative path, module name, or file stem")
    s.add_argument("--line", type=int, help="line of the variable (default: first mention)")
    s.add_argument("--name", required=True, help="variable name, dotted for attributes")
    s.add_argument("--json", action="store_true", help="structured output")
    s.add_argument("--intra-only", action="store_true", help="do not follow calls")
    s.add_argument("--out")
    s.set_defaults(func=cmd_slice)

    r = sub.add_parser("rank", help="rank KB types against a structural profile")
    r.add_argument("--kb", required=True)
    r.add_argument("--profile", required=True,
                   help='inline JSON such as {"fields": [...], "methods": [...]} or a file holding it')
    r.add_argument("--threshold", type=float, default=0.5)
    r.add_argument("--limit", type=int, default=5)
    r.add_argument("--out")
    r.set_defaults(func=cmd_rank)

    i = sub.add_parser("infer", help="predict types for a targets file")
    i.add_argument("--project", required=True)
    i.add_argument("--targets", required=True, help='JSON Lines of {"id","file","line","name",...}')
    i.add_argument("--kb", required=True)
    i.add_argument("--backend", choices=("http", "mock"), default="http")
    i.add_argument("--mock-file")
    i.add_argument("--api-base", help="chat-completions base URL (env SLICETYPE_API_BASE)")
    i.add_argument("--model", help="model name (env SLICETYPE_MODEL)")
    i.add_argument("--temperature", type=float)
    i.add_argument("--top-p", type=float)
    i.add_argument("--n-samples", type=int)
    i.add_argument("--concurrency", type=int, help="parallel targets (default 4)")
    i.add_argument("--retries", type=int, help="retries per failed request (default 2)")
    i.add_argument("--no-candidates", action="store_true", help="leave candidate types out of the prompt")
    i.add_argument("--intra-only", action="store_true", help="slice without following calls")
    i.add_argument("--dump-prompts", metavar="DIR", help="write each prompt to DIR/<id>.txt")
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_infer, needs_config=True)

    e = sub.add_parser("eval", help="score predictions against labels")
    e.add_argument("--dataset", required=True)
    e.add_argument("--preds", required=True)
    e.add_argument("--kb")
    e.add_argument("--report", choices=("table", "json"), default="table")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    func = getattr(args, "func", None)
    if func is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        config = RunConfig.resolve(args)
        logging.basicConfig(level=getattr(logging, config.log_level, logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        if getattr(args, "needs_config", False):
            return func(args, config)
        return func(args)
    except (DomainError, TargetNotFoundError, SourceError, ManifestFormatError, BackendError, ValueError) as exc:
        print(f"slicetype: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"slicetype: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
