"""Prompt assembly, sampling, frequency voting, and output normalization."""
from __future__ import annotations

import builtins
import json
import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from . import typeexpr as tx
from .backends import (
    Backend,
    BackendResponseError,
    BackendTransportError,
    SamplingConfig,
)
from .bm25 import NameIndex
from .evaluator import ELEMENTARY
from .graphs import DependenceGraph
from .knowledge_base import KnowledgeBase
from .project import Project
from .ranker import RankedCandidate, StructuralProfile, extract_structure, rank_candidates
from .slicer import MASK, Slice, VariableLocation, locate_variable, render_slices, slice_all

log = logging.getLogger(__name__)

INSTRUCTIONS = (
    "Infer the type of a Python variable.\n"
    "The code below keeps only the statements that matter for the variable, "
    "collected across functions and files; each line shows its original line number. "
    "The variable's annotation slot has been replaced by a mask token.\n"
    "Answer with a single type annotation and nothing else."
)
CANDIDATE_HEADER = (
    "Known types whose fields and methods match how the variable is used "
    "(best match first):"
)
QUESTION = "Type for the mask:"

_TYPING_NAMES = {
    "Any", "List", "Dict", "Set", "FrozenSet", "Tuple", "Optional", "Union", "Callable",
    "Iterable", "Iterator", "Sequence", "Mapping", "MutableMapping", "Type", "Generator",
    "Awaitable", "Coroutine", "AsyncIterator", "Literal", "TypeVar", "NoReturn", "Text",
    "Collection", "Deque", "DefaultDict", "Counter", "IO", "Pattern", "Match",
}
BUILTIN_TYPE_NAMES = frozenset(
    {n for n in dir(builtins) if isinstance(getattr(builtins, n), type)}
    | _TYPING_NAMES
    | {"None"}
)

_STOPWORDS = frozenset("""
a an the is are was be it its this that of for to in on and or with as by which will would
should could may might i think so here has have type types answer variable value mask
likely most probably return returns parameter argument result inferred predicted
""".split())
_PREFIX = re.compile(
    r"^(?:the\s+)?(?:(?:inferred|predicted|most\s+likely|final)\s+)?"
    r"(?:type|answer)(?:\s+(?:of|for)\s+[^\s:]+)?\s*(?:is|:|=)\s*",
    re.IGNORECASE,
)
_MASK_PREFIX = re.compile(r"^<mask>\s*[:=]\s*", re.IGNORECASE)
_PUNCT_SPACE = re.compile(r"\s*([\[\]<>{}(),;:|?])\s*")


@dataclass(frozen=True)
class Prompt:
    masked_slices: str
    candidates: tuple[RankedCandidate, ...] = ()
    instructions: str = INSTRUCTIONS

    @property
    def text(self) -> str:
        parts = [self.instructions, "```python\n" + self.masked_slices.rstrip("\n") + "\n```"]
        if self.candidates:
            blocks = [CANDIDATE_HEADER]
            for i, c in enumerate(self.candidates, start=1):
                r = c.record
                api = ", ".join(f"{m.name}({', '.join(m.params)})" for m in r.api) or "-"
                blocks.append(
                    f"{i}. {r.name} (package: {r.package or '-'})\n"
                    f"   fields: {', '.join(sorted(r.fields)) or '-'}\n"
                    f"   methods: {api}"
                )
            parts.append("\n".join(blocks))
        parts.append(QUESTION)
        return "\n\n".join(parts) + "\n"

    def __str__(self) -> str:
        return self.text


@dataclass
class TypePrediction:
    ranked: list[tuple[str, int]] = field(default_factory=list)
    raw_samples: list[str] = field(default_factory=list)
    prompt_tokens: int = 0
    diagnostics: list[str] = field(default_factory=list)

    @property
    def types(self) -> list[str]:
        return [t for t, _ in self.ranked]

    def top(self) -> Optional[str]:
        return self.ranked[0][0] if self.ranked else None


def count_tokens(text: str) -> int:
    """Rough token count: words and punctuation marks."""
    return len(re.findall(r"\w+|[^\w\s]", text))


def build_prompt(
    slices: list[Slice],
    candidates: Sequence[RankedCandidate],
    target: VariableLocation,
    texts: Optional[dict] = None,
) -> Prompt:
    if not slices:
        raise ValueError("cannot build a prompt without slices")
    masked = render_slices(slices, target, texts)
    return Prompt(masked, tuple(candidates))


def canonical_spacing(text: str) -> str:
    text = _PUNCT_SPACE.sub(r"\1", text.strip())
    return re.sub(r"\s+", " ", text)


def clean_completion(raw: str) -> str:
    """First meaningful line of a completion, reduced to its type expression."""
    lines = [ln for ln in raw.splitlines() if not ln.strip().startswith("```")]
    first = next((ln.strip() for ln in lines if ln.strip()), "")
    first = _MASK_PREFIX.sub("", _PREFIX.sub("", first))
    first = first.strip().strip("`'\"").rstrip(".").strip().strip("`'\"")
    if not first:
        return ""
    try:
        tx.parse(first)
        return first
    except tx.TypeSyntaxError:
        pass
    return tx.longest_type_span(first, reject=lambda s: s.lower() in _STOPWORDS) or ""


def sample(
    backend: Backend,
    prompt: Prompt | str,
    config: SamplingConfig,
    *,
    retries: int = 2,
    diagnostics: Optional[list[str]] = None,
) -> list[str]:
    text = prompt.text if isinstance(prompt, Prompt) else prompt
    diag = diagnostics if diagnostics is not None else []
    out: list[str] = []
    transport_failures = 0
    for i in range(config.n_samples):
        completion: Optional[str] = None
        for attempt in range(retries + 1):
            try:
                completion = backend.complete(text, config, i)
                break
            except BackendTransportError as exc:
                if attempt == retries:
                    transport_failures += 1
                    diag.append(f"sample {i}: transport failure after {retries + 1} attempts: {exc}")
            except BackendResponseError as exc:
                diag.append(f"sample {i}: malformed response: {exc}")
                break
        if completion is None:
            continue
        cleaned = clean_completion(completion)
        if not cleaned:
            diag.append(f"sample {i}: empty completion dropped")
            continue
        out.append(cleaned)
    for d in diag:
        log.debug(d)
    if transport_failures == config.n_samples:
        raise BackendTransportError(f"all {config.n_samples} requests failed")
    return out


def vote(samples: Iterable[str]) -> TypePrediction:
    """Rank distinct outputs by frequency; ties keep first-seen order."""
    samples = list(samples)
    counts: Counter[str] = Counter()
    first: dict[str, int] = {}
    for i, s in enumerate(samples):
        key = canonical_spacing(s)
        if not key:
            continue
        counts[key] += 1
        first.setdefault(key, i)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], first[kv[0]]))
    return TypePrediction(ranked=ranked, raw_samples=samples)


def structural_fields(raw: str) -> Optional[list[str]]:
    try:
        node = tx.parse(raw)
    except tx.TypeSyntaxError:
        return None
    if not isinstance(node, tx.Obj):
        return None
    return [name for name, _, _ in node.fields]


def normalize_structural(raw: str, kb: KnowledgeBase) -> Optional[str]:
    """Map an object-shaped answer onto the best-matching known type, if any."""
    names = structural_fields(raw)
    if not names:
        return None
    ranked = rank_candidates(StructuralProfile.from_names(names), kb, limit=1)
    return ranked[0].record.name if ranked else None


def normalize_name(raw: str, kb: KnowledgeBase) -> str:
    """Repair a misspelt type name to the closest known name by bigram BM25."""
    if raw in kb or not len(kb):
        return raw
    index: NameIndex = kb.token_stats
    scores = index.scores(raw)
    if not scores or max(scores) <= 0:
        return raw

    def rank_key(i: int):
        name = index.names[i]
        has_project = any(r.source == "project" for r in kb.lookup(name))
        return (-scores[i], not has_project, name)

    best = min(range(len(scores)), key=rank_key)
    return index.names[best]


def is_known_name(name: str, kb: KnowledgeBase) -> bool:
    return name in kb or name in BUILTIN_TYPE_NAMES or name.lower() in ELEMENTARY


def normalize_output(raw: str, kb: KnowledgeBase) -> str:
    if tx.is_structural(raw):
        return normalize_structural(raw, kb) or raw
    if tx.is_bare_identifier(raw) and not is_known_name(raw, kb):
        return normalize_name(raw, kb)
    return raw


# -- end to end ----------------------------------------------------------------------


@dataclass(frozen=True)
class PreparedTarget:
    location: VariableLocation
    slices: list[Slice]
    profile: StructuralProfile
    candidates: tuple[RankedCandidate, ...]
    prompt: Prompt


@dataclass
class InferenceEngine:
    project: Project
    sdg: DependenceGraph
    kb: KnowledgeBase
    backend: Optional[Backend] = None
    config: SamplingConfig = field(default_factory=SamplingConfig)
    use_candidates: bool = True
    retries: int = 2
    concurrency: int = 4

    def prepare(self, loc: VariableLocation) -> PreparedTarget:
        slices = slice_all(self.sdg, loc, self.project)
        profile = extract_structure(slices, self.sdg)
        cands = tuple(rank_candidates(profile, self.kb)) if self.use_candidates else ()
        texts = {n: s.text for n, s in self.sdg.statements.items()}
        prompt = build_prompt(slices, cands, loc, texts)
        return PreparedTarget(loc, slices, profile, cands, prompt)

    def prepare_at(self, file: str, line: Optional[int], name: str) -> PreparedTarget:
        return self.prepare(locate_variable(self.project, file, line, name))

    def infer(self, loc: VariableLocation) -> TypePrediction:
        if self.backend is None:
            raise ValueError("no generation backend configured")
        prepared = self.prepare(loc)
        diag: list[str] = []
        samples = sample(self.backend, prepared.prompt, self.config,
                         retries=self.retries, diagnostics=diag)
        # second stage: re-map object-shaped answers and misspelt names, then re-vote
        normalized = [normalize_output(canonical_spacing(s), self.kb) for s in samples]
        pred = vote(normalized)
        pred.raw_samples = samples
        pred.prompt_tokens = count_tokens(prepared.prompt.text)
        pred.diagnostics = diag
        return pred

    def infer_many(self, locs: Sequence[VariableLocation]) -> list[TypePrediction]:
        with ThreadPoolExecutor(max_workers=max(1, self.concurrency)) as pool:
            return list(pool.map(self.infer, locs))


def infer(
    loc: VariableLocation,
    project: Project,
    kb: KnowledgeBase,
    backend: Backend,
    config: SamplingConfig = SamplingConfig(),
    sdg: Optional[DependenceGraph] = None,
    **kw,
) -> TypePrediction:
    from .graphs import build_project_sdg

    sdg = sdg if sdg is not None else build_project_sdg(project)
    return InferenceEngine(project, sdg, kb, backend, config, **kw).infer(loc)


def prediction_record(target_id: str, pred: TypePrediction, error: Optional[str] = None) -> str:
    rec = {
        "id": target_id,
        "predictions": [{"type": t, "votes": c} for t, c in pred.ranked],
        "prompt_tokens": pred.prompt_tokens,
    }
    if error:
        rec["error"] = error
    return json.dumps(rec, sort_keys=True)
