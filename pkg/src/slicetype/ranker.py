"""Structural candidate ranking.

A variable's profile is the set of field and method names used on it inside
its slices.  A knowledge-base type scores the fraction of that profile it
declares; types under the threshold are dropped and at most five are kept.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from .knowledge_base import KnowledgeBase, TypeRecord
from .slicer import Slice

SCORE_THRESHOLD = 0.5
MAX_CANDIDATES = 5


class EmptyProfileError(ValueError):
    pass


@dataclass(frozen=True)
class StructuralProfile:
    var_fields: frozenset[str] = frozenset()
    var_methods: frozenset[str] = frozenset()

    @property
    def names(self) -> frozenset[str]:
        return self.var_fields | self.var_methods

    def __bool__(self) -> bool:
        return bool(self.var_fields or self.var_methods)

    def to_json(self) -> dict:
        return {"fields": sorted(self.var_fields), "methods": sorted(self.var_methods)}

    @classmethod
    def from_json(cls, obj: dict) -> "StructuralProfile":
        methods = frozenset(obj.get("methods", ()))
        return cls(frozenset(obj.get("fields", ())) - methods, methods)

    @classmethod
    def from_names(cls, fields: Iterable[str] = (), methods: Iterable[str] = ()) -> "StructuralProfile":
        methods = frozenset(methods)
        return cls(frozenset(fields) - methods, methods)


@dataclass(frozen=True)
class RankedCandidate:
    record: TypeRecord
    score: float


def extract_structure(slices: list[Slice], sdg, aliases: Iterable[str] = ()) -> StructuralProfile:
    """Names accessed on the target (or its aliases) within the slices.

    Aliases default to the references of every slice's target variable, which
    covers the formal/actual pairs the target expansion produced.
    """
    names = {s.target.ref.dotted for s in slices} | set(aliases)
    fields: set[str] = set()
    methods: set[str] = set()
    seen = set()
    for sl in slices:
        for st in sl.statements:
            node = (st.path, st.stmt_id)
            if node in seen:
                continue
            seen.add(node)
            stmt = sdg.statements[node]
            for site in stmt.call_sites:
                if ".".join(site.callee_qualifier) in names:
                    methods.add(site.callee_name)
            for ref in stmt.defs | stmt.uses:
                if ref.qualifier and ".".join(ref.qualifier) in names:
                    fields.add(ref.name)
    return StructuralProfile.from_names(fields, methods)


def score(profile: StructuralProfile, record: TypeRecord) -> float:
    names = profile.names
    if not names:
        raise EmptyProfileError("structural profile is empty")
    return len(names & record.structure) / len(names)


def rank_candidates(
    profile: StructuralProfile,
    kb: KnowledgeBase,
    *,
    threshold: float = SCORE_THRESHOLD,
    limit: int = MAX_CANDIDATES,
) -> list[RankedCandidate]:
    if not profile:
        return []
    scored = [RankedCandidate(r, score(profile, r)) for r in kb.records]
    kept = [c for c in scored if c.score >= threshold]
    kept.sort(key=lambda c: (-c.score, c.record.source != "project", c.record.name, c.record.package))
    return kept[:limit]


def format_ranking(ranked: list[RankedCandidate]) -> str:
    return "".join(
        json.dumps({"name": c.record.name, "package": c.record.package, "score": c.score,
                    "source": c.record.source}, sort_keys=True) + "\n"
        for c in ranked
    )
