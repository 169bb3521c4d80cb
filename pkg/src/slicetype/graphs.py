"""Program and system dependence graphs.

A PDG covers one scope (function, class body, or module top level) and
carries data edges from reaching definitions plus control edges from each
control or signature statement to the statements directly nested under it.
The SDG merges all PDGs and adds ``call-arg`` edges (call statement to the
callee's signature) and ``call-return`` edges (callee returns, or a class
signature for constructor calls, to the call statement).
"""
from __future__ import annotations

import logging
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .project import Project
from .source_model import (
    ENTRY,
    EXIT,
    CallArg,
    CallSite,
    ClassDecl,
    FunctionDecl,
    Param,
    SourceUnit,
    Statement,
)

log = logging.getLogger(__name__)

Node = tuple[str, int]  # (unit path, statement id)
Callee = Union[FunctionDecl, ClassDecl]

EDGE_KINDS = ("data", "control", "call-arg", "call-return")
PROJECT_SCOPE = "<project>"


class UnresolvedCallError(LookupError):
    def __init__(self, site: CallSite, path: str):
        super().__init__(f"{path}:{site.line}: no function named {site.callee_name!r}")
        self.site = site
        self.path = path


@dataclass(frozen=True, order=True)
class Edge:
    src: Node
    dst: Node
    kind: str
    label: str = ""  # variable for data edges, formal parameter for call-arg edges


@dataclass
class DependenceGraph:
    scope: str
    nodes: set[Node] = field(default_factory=set)
    edges: set[Edge] = field(default_factory=set)
    statements: dict[Node, Statement] = field(default_factory=dict)
    # call-arg edge -> the actual argument bound to the formal
    bindings: dict[Edge, CallArg] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._out: Optional[dict[Node, list[Edge]]] = None
        self._in: Optional[dict[Node, list[Edge]]] = None

    def add_node(self, node: Node, stmt: Statement) -> None:
        self.nodes.add(node)
        self.statements[node] = stmt
        self._out = self._in = None

    def add_edge(self, edge: Edge) -> None:
        self.edges.add(edge)
        self._out = self._in = None

    def _index(self) -> None:
        out: dict[Node, list[Edge]] = {n: [] for n in self.nodes}
        inn: dict[Node, list[Edge]] = {n: [] for n in self.nodes}
        for e in sorted(self.edges):
            out[e.src].append(e)
            inn[e.dst].append(e)
        self._out, self._in = out, inn

    def out_edges(self, node: Node) -> list[Edge]:
        if self._out is None:
            self._index()
        return self._out.get(node, [])

    def in_edges(self, node: Node) -> list[Edge]:
        if self._in is None:
            self._index()
        return self._in.get(node, [])

    def line(self, node: Node) -> int:
        return self.statements[node].line

    def edges_of(self, kind: str) -> list[Edge]:
        return sorted(e for e in self.edges if e.kind == kind)

    def serialize(self) -> str:
        def fmt(n: Node) -> str:
            return f"{n[0]}:{n[1]}"

        out = [f"N {fmt(n)}:{self.line(n)}" for n in sorted(self.nodes)]
        for e in sorted(self.edges):
            tail = f" {e.label}" if e.label else ""
            out.append(f"E {fmt(e.src)} {fmt(e.dst)} {e.kind}{tail}")
        return "\n".join(out) + "\n"


@dataclass(frozen=True)
class CalleeCandidateSet:
    site: CallSite
    path: str
    candidates: tuple[Callee, ...]

    @property
    def resolution(self) -> str:
        return "unique" if len(self.candidates) == 1 else "ambiguous"


# -- reaching definitions ------------------------------------------------------


def _killed(key: str, other: str) -> bool:
    return other == key or other.startswith(key + ".")


def reaching_definitions(unit: SourceUnit, scope: str) -> dict[int, set[tuple[str, int]]]:
    """IN sets of (variable, defining statement) for every statement of ``scope``.

    Standard forward may-analysis solved with a worklist until fixed point.
    """
    succ = unit.flow.get(scope, {})
    pred: dict[int, list[int]] = {}
    for s, targets in succ.items():
        for t in targets:
            pred.setdefault(t, []).append(s)
    gen: dict[int, set[str]] = {}
    for sid in succ:
        if sid in (ENTRY, EXIT):
            gen[sid] = set()
        else:
            gen[sid] = {r.dotted for r in unit.statement(sid).defs}
    out: dict[int, set[tuple[str, int]]] = {sid: set() for sid in succ}
    inn: dict[int, set[tuple[str, int]]] = {sid: set() for sid in succ}
    work = deque(sorted(succ))
    queued = set(work)
    while work:
        n = work.popleft()
        queued.discard(n)
        new_in: set[tuple[str, int]] = set()
        for p in pred.get(n, ()):
            new_in |= out.get(p, set())
        inn[n] = new_in
        defs = gen[n]
        new_out = {(v, d) for v, d in new_in if not any(_killed(k, v) for k in defs)}
        new_out |= {(k, n) for k in defs}
        if new_out != out[n]:
            out[n] = new_out
            for t in succ.get(n, ()):
                if t in out and t not in queued:
                    work.append(t)
                    queued.add(t)
    return inn


def build_scope_pdg(unit: SourceUnit, scope: str) -> DependenceGraph:
    g = DependenceGraph(scope)
    members = unit.scope_statements(scope)
    for s in members:
        g.add_node((unit.path, s.id), s)
    inn = reaching_definitions(unit, scope)
    for s in members:
        used = {r.dotted for r in s.uses}
        for var, d in sorted(inn.get(s.id, ())):
            if var in used and d != s.id:
                g.add_edge(Edge((unit.path, d), (unit.path, s.id), "data", var))
        if s.parent is not None:
            g.add_edge(Edge((unit.path, s.parent), (unit.path, s.id), "control"))
    return g


def build_pdg(f: FunctionDecl, unit: SourceUnit) -> DependenceGraph:
    if f.path != unit.path:
        raise ValueError(f"{f.qualname} is declared in {f.path}, not {unit.path}")
    return build_scope_pdg(unit, f.qualname)


def build_all_pdgs(project: Project) -> list[DependenceGraph]:
    pdgs = []
    for path in project.paths:
        unit = project.unit(path)
        for scope in sorted(unit.flow):
            pdgs.append(build_scope_pdg(unit, scope))
    return pdgs


# -- call resolution -------------------------------------------------------------

_ALLOWED = {
    "int": {"int", "float", "complex", "number", "real", "integral", "hashable"},
    "bool": {"bool", "int", "float", "number", "hashable"},
    "float": {"float", "complex", "number", "real"},
    "complex": {"complex", "number"},
    "str": {"str", "text", "anystr", "sequence", "iterable", "hashable", "collection"},
    "bytes": {"bytes", "anystr", "sequence", "iterable", "hashable", "bytestring"},
    "none": {"none", "optional", "nonetype"},
    "list": {"list", "sequence", "mutablesequence", "iterable", "collection"},
    "dict": {"dict", "mapping", "mutablemapping", "iterable", "collection"},
    "set": {"set", "abstractset", "mutableset", "iterable", "collection"},
    "tuple": {"tuple", "sequence", "iterable", "collection", "hashable"},
}
_KNOWN = set().union(*_ALLOWED.values()) | {"str", "bytes", "list", "dict", "set", "tuple"}
_SPLIT_TOP = re.compile(r"[\[\]|,]")


def _outer(annotation: str) -> str:
    ann = annotation.strip().strip("'\"")
    head = ann.split("[", 1)[0].strip()
    return head.rpartition(".")[2].lower()


def _union_members(annotation: str) -> list[str]:
    ann = annotation.strip().strip("'\"")
    head = _outer(ann)
    if head in ("union", "optional") and "[" in ann and ann.endswith("]"):
        inner = ann[ann.index("[") + 1 : -1]
        members = _split_args(inner)
        return members + (["None"] if head == "optional" else [])
    if "|" in ann:
        return _split_args(ann, sep="|")
    return [ann]


def _split_args(text: str, sep: str = ",") -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "[(<{":
            depth += 1
        elif ch in "])>}":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    if "".join(cur).strip():
        parts.append("".join(cur).strip())
    return parts


def literal_compatible(literal: str, annotation: Optional[str], project_classes: set[str] = frozenset()) -> bool:
    """Whether a literal of type ``literal`` may be passed where ``annotation`` is declared."""
    if not annotation:
        return True
    for member in _union_members(annotation):
        head = _outer(member)
        if head in ("any", "object") or len(head) == 1:
            return True
        if head in _ALLOWED.get(literal, ()):
            return True
        if head not in _KNOWN and member.split("[")[0].rpartition(".")[2] not in project_classes:
            return True  # unknown construct: cannot rule it out
    return False


def _params_of(c: Callee) -> tuple[Param, ...]:
    if isinstance(c, ClassDecl):
        return c.constructor.bindable_params() if c.constructor else ()
    return c.bindable_params()


def _has_kwargs(c: Callee) -> bool:
    f = c.constructor if isinstance(c, ClassDecl) else c
    return bool(f and f.has_kwargs)


def _has_varargs(c: Callee) -> bool:
    f = c.constructor if isinstance(c, ClassDecl) else c
    return bool(f and f.has_varargs)


def _return_arity(c: Callee) -> int:
    return 1 if isinstance(c, ClassDecl) else c.return_arity


def bind_arguments(site: CallSite, callee: Callee) -> list[tuple[str, CallArg]]:
    """Pair actual arguments with formal parameter names."""
    params = _params_of(callee)
    positional = [p for p in params if p.kind == "positional"]
    vararg = next((p for p in params if p.kind == "vararg"), None)
    kwarg = next((p for p in params if p.kind == "kwarg"), None)
    names = {p.name for p in params if p.kind in ("positional", "kwonly")}
    out: list[tuple[str, CallArg]] = []
    for i, arg in enumerate(site.positional_args):
        if i < len(positional):
            out.append((positional[i].name, arg))
        elif vararg is not None:
            out.append((vararg.name, arg))
    for name, arg in site.keyword_args:
        if name in names:
            out.append((name, arg))
        elif kwarg is not None:
            out.append((kwarg.name, arg))
    return out


def _name_matches(site: CallSite, path: str, project: Project) -> list[Callee]:
    def collect(paths: Iterable[str]) -> list[Callee]:
        found: list[Callee] = []
        for p in paths:
            unit = project.unit(p)
            for f in unit.functions:
                if f.name != site.callee_name:
                    continue
                if site.callee_qualifier or f.owner is None:
                    found.append(f)
            if not site.callee_qualifier or site.callee_qualifier[-1] != "self":
                found.extend(c for c in unit.classes if c.name == site.callee_name)
        return found

    found = collect(project.visible_paths(path))
    if not found:
        found = collect(project.paths)
    found.sort(key=lambda c: (c.path, c.line))
    return found


def _narrow(cands: list[Callee], keep) -> list[Callee]:
    kept = [c for c in cands if keep(c)]
    return kept or cands


def resolve_call(site: CallSite, project: Project, path: str) -> CalleeCandidateSet:
    """Resolve a call by name, then parameters, then return-value count.

    Each narrowing step is skipped when it would discard every remaining
    candidate, so an imprecise match still yields all plausible callees.
    """
    cands = _name_matches(site, path, project)
    if not cands:
        raise UnresolvedCallError(site, path)
    if site.keyword_args:
        kws = [k for k, _ in site.keyword_args]
        cands = _narrow(
            cands,
            lambda c: _has_kwargs(c)
            or all(k in {p.name for p in _params_of(c)} for k in kws),
        )
    elif site.positional_args:
        classes = {c.name for c in project.classes()}

        def positional_ok(c: Callee) -> bool:
            formals = [p for p in _params_of(c) if p.kind == "positional"]
            if len(site.positional_args) > len(formals) and not _has_varargs(c):
                return False
            for arg, formal in zip(site.positional_args, formals):
                if arg.kind == "literal" and not literal_compatible(
                    arg.literal_type, formal.annotation, classes
                ):
                    return False
            return True

        cands = _narrow(cands, positional_ok)
    if len(site.receivers) > 1:
        cands = _narrow(cands, lambda c: _return_arity(c) >= len(site.receivers))
    return CalleeCandidateSet(site, path, tuple(cands))


# -- system dependence graph ---------------------------------------------------------


def build_sdg(pdgs: list[DependenceGraph], project: Project, *, intra_only: bool = False) -> DependenceGraph:
    g = DependenceGraph(PROJECT_SCOPE)
    for pdg in pdgs:
        for n in pdg.nodes:
            g.add_node(n, pdg.statements[n])
        for e in pdg.edges:
            g.add_edge(e)
    if intra_only:
        return g
    for path in project.paths:
        unit = project.unit(path)
        for stmt in unit.statements:
            for site in stmt.call_sites:
                try:
                    resolved = resolve_call(site, project, path)
                except UnresolvedCallError as exc:
                    g.diagnostics.append(str(exc))
                    continue
                _link_call(g, project, (path, stmt.id), resolved)
    return g


def _link_call(g: DependenceGraph, project: Project, call_node: Node, resolved: CalleeCandidateSet) -> None:
    label = ",".join(r.dotted for r in resolved.site.receivers)
    for callee in resolved.candidates:
        target = callee.constructor if isinstance(callee, ClassDecl) else callee
        if target is not None:
            sig = (target.path, target.stmt_id)
            for formal, actual in bind_arguments(resolved.site, callee):
                e = Edge(call_node, sig, "call-arg", formal)
                g.add_edge(e)
                g.bindings[e] = actual
        if isinstance(callee, ClassDecl):
            g.add_edge(Edge((callee.path, callee.stmt_id), call_node, "call-return", callee.name))
            continue
        unit = project.unit(callee.path)
        for s in unit.scope_statements(callee.qualname):
            if s.kind == "return":
                g.add_edge(Edge((callee.path, s.id), call_node, "call-return", label))


def build_project_sdg(project: Project, *, intra_only: bool = False) -> DependenceGraph:
    return build_sdg(build_all_pdgs(project), project, intra_only=intra_only)
