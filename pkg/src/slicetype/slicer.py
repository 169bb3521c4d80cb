"""Target-variable expansion and worklist slicing over the SDG."""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .graphs import DependenceGraph, Edge, Node
from .project import Project
from .source_model import FunctionDecl, SourceUnit, Statement, VariableRef

MAX_CALL_HOPS = 3
MAX_SLICE_STATEMENTS = 200
MASK = "<mask>"

ORIGINS = ("field", "parameter", "return-receiver", "plain")


class TargetNotFoundError(LookupError):
    pass


@dataclass(frozen=True)
class VariableLocation:
    """Where the variable to type was pointed at."""

    path: str
    stmt_id: int
    line: int
    ref: VariableRef
    role: str  # "parameter" | "return" | "variable"
    function: Optional[FunctionDecl] = None


@dataclass(frozen=True, order=True)
class TargetVariable:
    anchor: Node
    ref: VariableRef
    origin: str = "plain"


@dataclass(frozen=True, order=True)
class SliceStatement:
    path: str
    line: int
    stmt_id: int
    text: str


@dataclass(frozen=True)
class Slice:
    target: TargetVariable
    statements: tuple[SliceStatement, ...]
    pushes: int = field(default=0, compare=False)

    @property
    def nodes(self) -> frozenset[Node]:
        return frozenset((s.path, s.stmt_id) for s in self.statements)

    @property
    def lines(self) -> list[int]:
        return [s.line for s in self.statements]


# -- locating --------------------------------------------------------------------


def locate_variable(project: Project, file: str, line: Optional[int], name: str) -> VariableLocation:
    unit = project.find_unit(file)
    if unit is None:
        raise TargetNotFoundError(f"no source file matches {file!r}")
    candidates = unit.statements_at(line) if line is not None else list(unit.statements)
    for stmt in candidates:
        loc = _locate_in(unit, stmt, name)
        if loc is not None:
            return loc
    where = f"{unit.path}:{line}" if line is not None else unit.path
    raise TargetNotFoundError(f"variable {name!r} not found at {where}")


def _locate_in(unit: SourceUnit, stmt: Statement, name: str) -> Optional[VariableLocation]:
    if stmt.kind == "function-signature":
        f = unit.function(stmt.scope)
        if f is not None:
            if any(p.name == name for p in f.params):
                return VariableLocation(unit.path, stmt.id, stmt.line,
                                        VariableRef(name, (), f.qualname), "parameter", f)
            if f.name == name:
                return VariableLocation(unit.path, stmt.id, stmt.line,
                                        VariableRef(name, (), f.qualname), "return", f)
        return None
    for ref in sorted(stmt.defs) + sorted(stmt.uses):
        if ref.dotted == name:
            return VariableLocation(unit.path, stmt.id, stmt.line, ref, "variable")
    return None


# -- target expansion --------------------------------------------------------------


def expand_target_variables(loc: VariableLocation, sdg: DependenceGraph, project: Project) -> list[TargetVariable]:
    unit = project.unit(loc.path)
    node: Node = (loc.path, loc.stmt_id)
    stmt = unit.statement(loc.stmt_id)
    ref = loc.ref
    tvs: list[TargetVariable] = []

    if loc.role == "return":
        tvs.append(TargetVariable(node, ref, "plain"))
        for s in unit.scope_statements(loc.function.qualname):
            if s.kind == "return":
                tvs.append(TargetVariable((loc.path, s.id), _returned_ref(s, ref), "return-receiver"))
        return _dedupe(tvs)

    if loc.role == "parameter" or _is_parameter_use(sdg, node, ref):
        sig = node if loc.role == "parameter" else _param_source(sdg, node, ref)
        if sig != node:
            tvs.append(TargetVariable(node, ref, "plain"))
        tvs.append(TargetVariable(sig, VariableRef(ref.name, (), ref.scope), "parameter"))
        for e in sdg.in_edges(sig):
            if e.kind == "call-arg" and e.label == ref.name:
                actual = sdg.bindings.get(e)
                aref = actual.ref if actual is not None and actual.ref is not None else ref
                tvs.append(TargetVariable(e.src, aref, "parameter"))
        return _dedupe(tvs)

    field_tvs = _field_targets(project, unit, stmt, ref)
    if field_tvs:
        return _dedupe([TargetVariable(node, ref, "field")] + field_tvs)

    tvs.append(TargetVariable(node, ref, "plain"))
    receives = any(ref in site.receivers for site in stmt.call_sites)
    if receives:
        for e in sdg.in_edges(node):
            if e.kind != "call-return" or ref.dotted not in e.label.split(","):
                continue
            src = sdg.statements[e.src]
            if src.kind == "return":
                tvs.append(TargetVariable(e.src, _returned_ref(src, ref), "return-receiver"))
    return _dedupe(tvs)


def _returned_ref(stmt: Statement, fallback: VariableRef) -> VariableRef:
    plain = sorted(r for r in stmt.uses if not r.qualifier)
    if stmt.return_count == 1 and len(plain) == 1:
        return plain[0]
    return fallback


def _param_source(sdg: DependenceGraph, node: Node, ref: VariableRef) -> Optional[Node]:
    sources = [e.src for e in sdg.in_edges(node) if e.kind == "data" and e.label == ref.dotted]
    if len(sources) == 1 and sdg.statements[sources[0]].kind == "function-signature":
        return sources[0]
    return None


def _is_parameter_use(sdg: DependenceGraph, node: Node, ref: VariableRef) -> bool:
    return not ref.qualifier and _param_source(sdg, node, ref) is not None


def _field_targets(project: Project, unit: SourceUnit, stmt: Statement, ref: VariableRef) -> list[TargetVariable]:
    cls = None
    if ref.qualifier and len(ref.qualifier) == 1:
        owner = unit.function(stmt.scope)
        if owner is not None and owner.is_method and owner.params and owner.params[0].name == ref.qualifier[0]:
            cls = next((c for c in unit.classes if c.qualname == owner.owner), None)
    elif not ref.qualifier:
        cls = next((c for c in unit.classes if c.qualname == stmt.scope), None)
    out: list[TargetVariable] = []
    if cls is not None:
        for s in unit.scope_statements(cls.qualname):
            if any(r.dotted == ref.name for r in s.defs | s.uses):
                out.append(TargetVariable((unit.path, s.id), VariableRef(ref.name, (), cls.qualname), "field"))
        for m in unit.functions:
            if m.owner != cls.qualname or not m.is_method or not m.params:
                continue
            dotted = f"{m.params[0].name}.{ref.name}"
            for s in unit.scope_statements(m.qualname):
                hit = next((r for r in sorted(s.defs | s.uses) if r.dotted == dotted), None)
                if hit is not None:
                    out.append(TargetVariable((unit.path, s.id), hit, "field"))
        return out
    if ref.qualifier:
        for s in unit.scope_statements(stmt.scope):
            if s.mentions(ref.dotted):
                out.append(TargetVariable((unit.path, s.id), ref, "field"))
    return out


def _dedupe(tvs: list[TargetVariable]) -> list[TargetVariable]:
    seen: set[tuple[Node, str]] = set()
    out = []
    for tv in tvs:
        key = (tv.anchor, tv.ref.dotted)
        if key not in seen:
            seen.add(key)
            out.append(tv)
    return out


# -- slicing -------------------------------------------------------------------------


def slice_one(
    sdg: DependenceGraph,
    tv: TargetVariable,
    *,
    max_hops: int = MAX_CALL_HOPS,
    max_statements: int = MAX_SLICE_STATEMENTS,
) -> Slice:
    """Collect the statements transitively def/use-related to ``tv``.

    Propagation runs forward and backward over data edges, crosses
    call-arg/call-return edges up to ``max_hops`` times, and pulls in the
    enclosing control and signature statements of everything it reaches.
    A function signature entered through one parameter only continues along
    that parameter, and a class signature is never expanded.
    """
    if tv.anchor not in sdg.nodes:
        raise TargetNotFoundError(f"anchor {tv.anchor} is not in the graph")
    order: dict[Node, int] = {}

    def include(n: Node) -> None:
        if n not in order:
            order[n] = len(order)

    def include_controllers(n: Node) -> None:
        for e in sdg.in_edges(n):
            if e.kind == "control" and e.src not in order:
                include(e.src)
                include_controllers(e.src)

    anchor_stmt = sdg.statements[tv.anchor]
    start_label = tv.ref.name if anchor_stmt.kind == "function-signature" else None
    start = (tv.anchor, start_label)
    work: deque[tuple[Node, Optional[str], int]] = deque([(tv.anchor, start_label, 0)])
    best: dict[tuple[Node, Optional[str]], int] = {start: 0}
    done: set[tuple[Node, Optional[str]]] = set()
    pushes = 1

    while work:
        node, label, hops = work.popleft()
        state = (node, label)
        if state in done:
            continue
        done.add(state)
        include(node)
        include_controllers(node)
        stmt = sdg.statements[node]
        if stmt.kind == "class-signature" and node != tv.anchor:
            continue
        restricted = stmt.kind == "function-signature" and label is not None

        nexts: list[tuple[Node, Optional[str], int]] = []
        for e in sdg.out_edges(node):
            if restricted and e.label != label:
                continue
            if e.kind == "data":
                nexts.append((e.dst, None, 0))
            elif e.kind == "call-arg":
                nexts.append((e.dst, e.label, 1))
            elif e.kind == "call-return":
                nexts.append((e.dst, None, 1))
        for e in sdg.in_edges(node):
            if restricted and e.label != label:
                continue
            if e.kind == "data":
                nexts.append((e.src, _sig_label(sdg, e), 0))
            elif e.kind in ("call-arg", "call-return"):
                nexts.append((e.src, None, 1))
        for m, mlabel, cost in nexts:
            h = hops + cost
            if h > max_hops:
                continue
            st = (m, mlabel)
            if st in done or best.get(st, max_hops + 1) <= h:
                continue
            best[st] = h
            pushes += 1
            if cost == 0:
                work.appendleft((m, mlabel, h))
            else:
                work.append((m, mlabel, h))

    kept = sorted(order, key=order.__getitem__)[:max_statements]
    stmts = tuple(
        sorted(
            SliceStatement(n[0], sdg.statements[n].line, n[1], sdg.statements[n].text)
            for n in kept
        )
    )
    return Slice(tv, stmts, pushes)


def _sig_label(sdg: DependenceGraph, e: Edge) -> Optional[str]:
    return e.label if sdg.statements[e.src].kind == "function-signature" else None


def slice_all(sdg: DependenceGraph, loc: VariableLocation, project: Project, **kw) -> list[Slice]:
    out: list[Slice] = []
    seen: set[frozenset[Node]] = set()
    for tv in expand_target_variables(loc, sdg, project):
        s = slice_one(sdg, tv, **kw)
        if s.nodes not in seen:
            seen.add(s.nodes)
            out.append(s)
    return out


# -- rendering -------------------------------------------------------------------------


def mask_statement(text: str, name: str, role: str) -> str:
    """Place the mask marker at the annotation slot of ``name`` in ``text``."""
    if role == "return":
        header = text.rstrip()
        arrow = _find_top_level(header, "->")
        if arrow is not None:
            colon = header.rfind(":")
            return header[:arrow] + f"-> {MASK}" + header[colon:] + text[len(header):]
        colon = header.rfind(":")
        if colon < 0:
            return text + f"  # -> {MASK}"
        return header[:colon].rstrip() + f" -> {MASK}" + header[colon:] + text[len(header):]
    start = 0
    if role == "parameter":
        paren = text.find("(")
        start = paren + 1 if paren >= 0 else 0
    pattern = re.compile(r"(?<![\w.])" + re.escape(name) + r"(?![\w])")
    m = pattern.search(text, start)
    if m is None:
        return text + f"  # {name}: {MASK}"
    end = m.end()
    rest = text[end:]
    stripped = rest.lstrip()
    if stripped.startswith(":") and not stripped.startswith(":="):
        ann_start = end + (len(rest) - len(stripped)) + 1
        ann_end = _annotation_end(text, ann_start)
        return text[:end] + f": {MASK}" + (" " if text[ann_end:ann_end + 1] == "=" else "") + text[ann_end:].lstrip(" ")
    return text[:end] + f": {MASK}" + text[end:]


def _annotation_end(text: str, i: int) -> int:
    depth = 0
    while i < len(text):
        ch = text[i]
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            if depth == 0:
                return i
            depth -= 1
        elif ch in ",=\n" and depth == 0:
            return i
        i += 1
    return i


def _find_top_level(text: str, token: str) -> Optional[int]:
    depth = 0
    for i, ch in enumerate(text):
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        elif depth == 0 and text.startswith(token, i):
            return i
    return None


def render_slices(
    slices: list[Slice],
    mask: Optional[VariableLocation] = None,
    texts: Optional[dict[Node, str]] = None,
) -> str:
    """Render slice statements grouped by file with their original line numbers."""
    merged: dict[Node, SliceStatement] = {}
    for sl in slices:
        for st in sl.statements:
            merged[(st.path, st.stmt_id)] = st
    if mask is not None and (mask.path, mask.stmt_id) not in merged and texts is not None:
        node = (mask.path, mask.stmt_id)
        merged[node] = SliceStatement(mask.path, mask.line, mask.stmt_id, texts[node])
    if not merged:
        return ""
    blocks = []
    for path in sorted({n[0] for n in merged}):
        rows = [f"# file: {path}"]
        for st in sorted(s for n, s in merged.items() if n[0] == path):
            text = st.text
            if mask is not None and (st.path, st.stmt_id) == (mask.path, mask.stmt_id):
                name = mask.ref.name if mask.role != "variable" else mask.ref.dotted
                text = mask_statement(text, name, mask.role)
            for i, physical in enumerate(text.split("\n")):
                prefix = f"{st.line + i:>4} | "
                rows.append(prefix + physical)
        blocks.append("\n".join(rows))
    return "\n\n".join(blocks) + "\n"
