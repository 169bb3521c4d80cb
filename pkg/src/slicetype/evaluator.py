"""Exact/base match, MRR@n, and Top-k reports for type predictions."""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from . import typeexpr as tx
from .knowledge_base import KnowledgeBase

log = logging.getLogger(__name__)

SLOTS = ("Var", "Ret", "Arg")
KINDS = ("Ele", "Gen", "Usr")
GROUPS = ("All",) + SLOTS + KINDS
TOP_K = (1, 3, 5)
METRICS = ("EM", "BM")
MAX_OPTIONAL_FIELDS = 8

ELEMENTARY = frozenset({
    "int", "float", "str", "bool", "bytes", "complex", "none", "number", "string",
    "boolean", "void", "null", "undefined", "object", "list", "dict", "set", "tuple",
    "array", "map",
})
_UNION_NAMES = {"Union", "typing.Union"}
_OPTIONAL_NAMES = {"Optional", "typing.Optional"}


@dataclass(frozen=True)
class TypeSet:
    members: frozenset[str]

    def render(self) -> str:
        return "|".join(sorted(self.members))

    def __len__(self) -> int:
        return len(self.members)


def _flatten(node: tx.TypeExpr) -> list[tx.TypeExpr]:
    if isinstance(node, tx.Union_):
        return [m for member in node.members for m in _flatten(member)]
    if isinstance(node, tx.Named) and node.arrays == 0 and node.args:
        if node.name in _UNION_NAMES:
            return [m for a in node.args for m in _flatten(a)]
        if node.name in _OPTIONAL_NAMES and len(node.args) == 1:
            return _flatten(node.args[0]) + [tx.Named("None")]
    return [node]


def _object_variants(node: tx.Obj) -> list[str]:
    optional = [i for i, f in enumerate(node.fields) if f[1]]
    if len(optional) > MAX_OPTIONAL_FIELDS:
        log.warning("object type has %d optional fields; expanding the first %d",
                    len(optional), MAX_OPTIONAL_FIELDS)
        optional = optional[:MAX_OPTIONAL_FIELDS]
    out = []
    for r in range(len(optional) + 1):
        for dropped in itertools.combinations(optional, r):
            kept = [f for i, f in enumerate(node.fields) if i not in dropped]
            out.append(tx.render(tx.Obj(tuple((n, False, t) for n, _, t in kept))))
    return out


def parse_type(annotation: str) -> TypeSet:
    """Parse an annotation into its set of alternative types.

    Unions (``Union[...]``, ``Optional[...]``, ``|``) split into members; an
    object type with optional fields expands to one member per subset of the
    optional fields; anything unparseable becomes a singleton of itself.
    """
    raw = annotation.strip()
    try:
        node = tx.parse(raw)
    except tx.TypeSyntaxError as exc:
        log.warning("unparseable type %r: %s", raw, exc)
        return TypeSet(frozenset({raw}))
    members: set[str] = set()
    for m in _flatten(node):
        if isinstance(m, tx.Obj):
            members.update(_object_variants(m))
        else:
            members.add(tx.render(m))
    return TypeSet(frozenset(members))


def is_any(raw: str) -> bool:
    return raw.strip() in ("any", "Any", "typing.Any")


def _constructor(member: str) -> Optional[str]:
    try:
        node = tx.parse(member)
    except tx.TypeSyntaxError:
        return None
    if isinstance(node, tx.Named):
        if node.arrays:
            return "array"
        if node.args is not None:
            return node.name.rpartition(".")[2].lower()
    return None


def exact_match(label: TypeSet, pred: TypeSet, label_raw: str, pred_raw: str) -> bool:
    if is_any(label_raw):
        return True
    if is_any(pred_raw):
        return False
    return label.members == pred.members


def base_match(label: TypeSet, pred: TypeSet, label_raw: str, pred_raw: str) -> bool:
    if is_any(label_raw):
        return True
    if is_any(pred_raw):
        return False
    if label.members & pred.members:
        return True
    label_ctors = {_constructor(m) for m in label.members} - {None}
    pred_ctors = {_constructor(m) for m in pred.members} - {None}
    return bool(label_ctors & pred_ctors)


def mrr_at_n(first_correct_ranks: Sequence[Optional[int]], n: int) -> float:
    if not first_correct_ranks:
        raise ValueError("MRR over an empty sample list is undefined")
    total = 0.0
    for rank in first_correct_ranks:
        if rank is not None and 1 <= rank <= n:
            total += 1.0 / rank
    return total / len(first_correct_ranks)


def categorize(label_raw: str, kb: Optional[KnowledgeBase] = None) -> str:
    raw = label_raw.strip()
    try:
        node = tx.parse(raw)
    except tx.TypeSyntaxError:
        return "Usr"
    if isinstance(node, tx.Named):
        if node.args is not None or node.arrays:
            return "Gen"
        base = node.name
        for prefix in ("typing.", "builtins."):
            if base.startswith(prefix):
                base = base[len(prefix):]
        if base.lower() in ELEMENTARY:
            return "Ele"
        return "Usr"
    if isinstance(node, tx.Union_):
        return "Gen"
    return "Usr"


@dataclass
class EvalSample:
    id: str
    label: str
    slot: str
    kind: str
    predictions: list[str] = field(default_factory=list)

    def first_rank(self, metric: str) -> Optional[int]:
        match = exact_match if metric == "EM" else base_match
        label_set = parse_type(self.label)
        for rank, pred in enumerate(self.predictions, start=1):
            if match(label_set, parse_type(pred), self.label, pred):
                return rank
        return None


@dataclass
class Report:
    counts: dict[str, int]
    # metric -> "Top-k" | "MRR@5" -> group -> value
    cells: dict[str, dict[str, dict[str, float]]]

    def value(self, metric: str, column: str, group: str = "All") -> float:
        return self.cells[metric][column][group]

    def to_json(self) -> dict:
        return {"counts": self.counts, "metrics": self.cells}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        groups = [g for g in GROUPS if self.counts.get(g)]
        header = ["Metric", "Column"] + [f"{g} (n={self.counts[g]})" for g in groups]
        rows = [header]
        for metric in METRICS:
            for column in [f"Top-{k}" for k in TOP_K] + ["MRR@5"]:
                vals = self.cells[metric][column]
                fmt = "{:.3f}" if column.startswith("MRR") else "{:.1f}"
                rows.append([metric, column] + [fmt.format(vals[g]) for g in groups])
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def evaluate(samples: Iterable[EvalSample], kb: Optional[KnowledgeBase] = None) -> Report:
    """Top-k EM/BM accuracy (percent) and MRR@5 (fraction) per slot and kind.

    Groups with no samples are left out of the report.
    """
    samples = list(samples)
    ranks = {m: [s.first_rank(m) for s in samples] for m in METRICS}
    members: dict[str, list[int]] = {g: [] for g in GROUPS}
    for i, s in enumerate(samples):
        members["All"].append(i)
        if s.slot in members:
            members[s.slot].append(i)
        if s.kind in members:
            members[s.kind].append(i)
    counts = {g: len(ix) for g, ix in members.items()}
    cells: dict[str, dict[str, dict[str, float]]] = {}
    for metric in METRICS:
        cells[metric] = {}
        for k in TOP_K:
            col = {}
            for g, ix in members.items():
                if ix:
                    hits = sum(1 for i in ix if ranks[metric][i] is not None and ranks[metric][i] <= k)
                    col[g] = 100.0 * hits / len(ix)
            cells[metric][f"Top-{k}"] = col
        cells[metric]["MRR@5"] = {
            g: mrr_at_n([ranks[metric][i] for i in ix], 5) for g, ix in members.items() if ix
        }
    return Report(counts, cells)
