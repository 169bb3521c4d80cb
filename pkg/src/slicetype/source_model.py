"""Statement-level model of Python source files.

Each logical line becomes a :class:`Statement` carrying the variables it
defines and uses, the calls it makes, and its enclosing control statement.
Compound headers (``if``, ``for``, ``while``, ``with``, ``try``) become
``control`` statements; ``def`` and ``class`` lines become signature
statements that open their own scope.  The parser also records a
statement-level control-flow graph per scope, which the dependence graph
builder consumes.
"""
from __future__ import annotations

import ast
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

log = logging.getLogger(__name__)

MODULE_SCOPE = "<module>"
ENTRY = 0
EXIT = -1

STATEMENT_KINDS = (
    "assign",
    "call",
    "return",
    "function-signature",
    "class-signature",
    "import",
    "expression",
    "control",
)


class SourceError(Exception):
    """Base class for frontend failures."""


class SourceEncodingError(SourceError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: cannot decode as UTF-8 ({reason})")
        self.path = path


class SourceParseError(SourceError):
    def __init__(self, path: str, line: int, column: int, msg: str):
        super().__init__(f"{path}:{line}:{column}: {msg}")
        self.path = path
        self.line = line
        self.column = column


@dataclass(frozen=True, order=True)
class VariableRef:
    """A variable, optionally reached through a receiver chain.

    ``model.vocabulary`` is ``VariableRef("vocabulary", ("model",))``.
    """

    name: str
    qualifier: tuple[str, ...] = ()
    scope: str = MODULE_SCOPE

    @property
    def dotted(self) -> str:
        return ".".join(self.qualifier + (self.name,))

    @property
    def root(self) -> str:
        return self.qualifier[0] if self.qualifier else self.name

    @classmethod
    def from_dotted(cls, dotted: str, scope: str = MODULE_SCOPE) -> "VariableRef":
        parts = tuple(p for p in dotted.strip().split(".") if p)
        if not parts:
            raise ValueError(f"empty variable name: {dotted!r}")
        return cls(parts[-1], parts[:-1], scope)

    def __str__(self) -> str:
        return self.dotted


@dataclass(frozen=True)
class CallArg:
    """An actual argument: a variable, a literal of known type, or an opaque expression."""

    kind: str  # "var" | "literal" | "expr"
    text: str
    ref: Optional[VariableRef] = None
    literal_type: Optional[str] = None


@dataclass(frozen=True)
class CallSite:
    stmt_id: int
    line: int
    callee_name: str
    callee_qualifier: tuple[str, ...] = ()
    positional_args: tuple[CallArg, ...] = ()
    keyword_args: tuple[tuple[str, CallArg], ...] = ()
    receivers: tuple[VariableRef, ...] = ()

    @property
    def keywords(self) -> dict[str, CallArg]:
        return dict(self.keyword_args)


@dataclass(frozen=True)
class Statement:
    id: int
    line: int
    kind: str
    scope: str
    defs: frozenset[VariableRef] = frozenset()
    uses: frozenset[VariableRef] = frozenset()
    call_sites: tuple[CallSite, ...] = ()
    end_line: int = 0
    parent: Optional[int] = None  # nearest enclosing control/signature statement
    text: str = ""
    return_count: Optional[int] = None
    jump: Optional[str] = None  # "break" | "continue" | "raise"

    def mentions(self, dotted: str) -> bool:
        return any(r.dotted == dotted for r in self.defs | self.uses)


@dataclass(frozen=True)
class Param:
    name: str
    annotation: Optional[str] = None
    default: Optional[str] = None
    kind: str = "positional"  # positional | vararg | kwonly | kwarg


@dataclass(frozen=True)
class FunctionDecl:
    name: str
    qualname: str
    path: str
    stmt_id: int
    line: int
    params: tuple[Param, ...]
    body: tuple[int, int]  # inclusive statement id range, (0, -1) when empty
    return_arity: int = 0
    owner: Optional[str] = None
    returns: Optional[str] = None
    decorators: tuple[str, ...] = ()

    @property
    def is_method(self) -> bool:
        return self.owner is not None and "staticmethod" not in self.decorators

    def bindable_params(self) -> tuple[Param, ...]:
        """Parameters an explicit call binds, i.e. without the receiver of a method."""
        params = self.params
        if self.is_method and params and params[0].kind == "positional":
            params = params[1:]
        return params

    @property
    def has_varargs(self) -> bool:
        return any(p.kind == "vararg" for p in self.params)

    @property
    def has_kwargs(self) -> bool:
        return any(p.kind == "kwarg" for p in self.params)


@dataclass(frozen=True)
class ClassDecl:
    name: str
    qualname: str
    path: str
    stmt_id: int
    line: int
    fields: frozenset[str] = frozenset()
    methods: tuple[FunctionDecl, ...] = ()  # public only
    bases: tuple[str, ...] = ()
    constructor: Optional[FunctionDecl] = None


@dataclass(frozen=True)
class ImportDecl:
    stmt_id: int
    module: str  # as written, without leading dots
    names: tuple[str, ...]  # () for plain ``import m``
    level: int = 0


@dataclass(frozen=True, order=True)
class ImportEdge:
    importer: str
    module: str
    imported: Optional[str]  # project-relative path, None when external
    symbols: tuple[str, ...] = ()
    package: Optional[str] = None

    @property
    def external(self) -> bool:
        return self.imported is None


@dataclass
class SourceUnit:
    path: str
    module: str
    source: str
    statements: list[Statement] = field(default_factory=list)
    functions: list[FunctionDecl] = field(default_factory=list)
    classes: list[ClassDecl] = field(default_factory=list)
    imports: list[ImportDecl] = field(default_factory=list)
    # scope -> statement id -> successor ids; ENTRY/EXIT are virtual
    flow: dict[str, dict[int, tuple[int, ...]]] = field(default_factory=dict)
    scope_entry: dict[str, int] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._by_id = {s.id: s for s in self.statements}

    def statement(self, stmt_id: int) -> Statement:
        return self._by_id[stmt_id]

    def statements_at(self, line: int) -> list[Statement]:
        return [s for s in self.statements if s.line == line]

    def function(self, qualname: str) -> Optional[FunctionDecl]:
        for f in self.functions:
            if f.qualname == qualname:
                return f
        return None

    def scope_statements(self, scope: str) -> list[Statement]:
        return [s for s in self.statements if s.scope == scope]

    def top_level_functions(self) -> list[FunctionDecl]:
        return [f for f in self.functions if f.owner is None and "." not in f.qualname]


def module_name_for(path: str) -> str:
    parts = path.replace("\\", "/").split("/")
    if parts[-1].endswith(".py"):
        parts[-1] = parts[-1][:-3]
    if parts[-1] == "__init__":
        parts = parts[:-1]
    return ".".join(p for p in parts if p)


# -- expression analysis ------------------------------------------------------

_LITERAL_TYPES = {
    bool: "bool",
    int: "int",
    float: "float",
    complex: "complex",
    str: "str",
    bytes: "bytes",
    type(None): "none",
}


def attribute_chain(node: ast.AST) -> Optional[tuple[str, ...]]:
    """``a.b.c`` -> ("a", "b", "c"); None when not rooted at a name."""
    parts: list[str] = []
    while isinstance(node, ast.Attribute):
        parts.append(node.attr)
        node = node.value
    if isinstance(node, ast.Name):
        parts.append(node.id)
        return tuple(reversed(parts))
    return None


def literal_type(node: ast.AST) -> Optional[str]:
    if isinstance(node, ast.Constant):
        return _LITERAL_TYPES.get(type(node.value))
    if isinstance(node, (ast.List, ast.ListComp)):
        return "list"
    if isinstance(node, (ast.Dict, ast.DictComp)):
        return "dict"
    if isinstance(node, (ast.Set, ast.SetComp)):
        return "set"
    if isinstance(node, ast.Tuple):
        return "tuple"
    if isinstance(node, ast.JoinedStr):
        return "str"
    if isinstance(node, ast.UnaryOp) and isinstance(node.operand, ast.Constant):
        return literal_type(node.operand)
    return None


def _chain_refs(chain: tuple[str, ...], scope: str) -> list[VariableRef]:
    return [VariableRef(chain[i], chain[:i], scope) for i in range(len(chain))]


class _UseCollector(ast.NodeVisitor):
    """Collects read occurrences; lambda and comprehension internals are best-effort."""

    def __init__(self, scope: str):
        self.scope = scope
        self.uses: set[VariableRef] = set()
        self.defs: set[VariableRef] = set()
        self._bound: list[set[str]] = []

    def _is_bound(self, name: str) -> bool:
        return any(name in b for b in self._bound)

    def visit_Name(self, node: ast.Name) -> None:
        if isinstance(node.ctx, ast.Load) and not self._is_bound(node.id):
            self.uses.add(VariableRef(node.id, (), self.scope))

    def visit_Attribute(self, node: ast.Attribute) -> None:
        chain = attribute_chain(node)
        if chain is None:
            self.generic_visit(node)
            return
        if self._is_bound(chain[0]):
            return
        refs = _chain_refs(chain, self.scope)
        if isinstance(node.ctx, ast.Load):
            self.uses.update(refs)
        else:
            self.uses.update(refs[:-1])

    def visit_NamedExpr(self, node: ast.NamedExpr) -> None:
        self.visit(node.value)
        if isinstance(node.target, ast.Name):
            self.defs.add(VariableRef(node.target.id, (), self.scope))

    def visit_Lambda(self, node: ast.Lambda) -> None:
        for d in node.args.defaults + node.args.kw_defaults:
            if d is not None:
                self.visit(d)
        names = {a.arg for a in node.args.args + node.args.kwonlyargs + node.args.posonlyargs}
        if node.args.vararg:
            names.add(node.args.vararg.arg)
        if node.args.kwarg:
            names.add(node.args.kwarg.arg)
        self._bound.append(names)
        self.visit(node.body)
        self._bound.pop()

    def _comprehension(self, node, elts: list[ast.AST]) -> None:
        bound: set[str] = set()
        self._bound.append(bound)
        for gen in node.generators:
            self._bound.pop()
            self.visit(gen.iter)  # outer iterables see earlier targets only
            self._bound.append(bound)
            for n in ast.walk(gen.target):
                if isinstance(n, ast.Name):
                    bound.add(n.id)
            for cond in gen.ifs:
                self.visit(cond)
        for e in elts:
            self.visit(e)
        self._bound.pop()

    def visit_ListComp(self, node: ast.ListComp) -> None:
        self._comprehension(node, [node.elt])

    visit_SetComp = visit_ListComp
    visit_GeneratorExp = visit_ListComp

    def visit_DictComp(self, node: ast.DictComp) -> None:
        self._comprehension(node, [node.key, node.value])


def _expr_uses(node: Optional[ast.AST], scope: str) -> tuple[set[VariableRef], set[VariableRef]]:
    if node is None:
        return set(), set()
    c = _UseCollector(scope)
    c.visit(node)
    return c.uses, c.defs


def _target_refs(target: ast.AST, scope: str) -> tuple[list[VariableRef], set[VariableRef]]:
    """Definitions made by an assignment target, plus reads it implies."""
    defs: list[VariableRef] = []
    uses: set[VariableRef] = set()
    if isinstance(target, ast.Name):
        defs.append(VariableRef(target.id, (), scope))
    elif isinstance(target, ast.Attribute):
        chain = attribute_chain(target)
        if chain is None:
            u, _ = _expr_uses(target.value, scope)
            uses |= u
        else:
            refs = _chain_refs(chain, scope)
            defs.append(refs[-1])
            uses.update(refs[:-1])
    elif isinstance(target, (ast.Tuple, ast.List)):
        for elt in target.elts:
            d, u = _target_refs(elt, scope)
            defs.extend(d)
            uses |= u
    elif isinstance(target, ast.Starred):
        return _target_refs(target.value, scope)
    elif isinstance(target, ast.Subscript):
        u, _ = _expr_uses(target.value, scope)
        uses |= u
        u, _ = _expr_uses(target.slice, scope)
        uses |= u
    return defs, uses


def _call_arg(node: ast.AST, scope: str) -> CallArg:
    text = ast.unparse(node)
    chain = attribute_chain(node) if isinstance(node, (ast.Name, ast.Attribute)) else None
    if chain is not None:
        return CallArg("var", text, ref=_chain_refs(chain, scope)[-1])
    lt = literal_type(node)
    if lt is not None:
        return CallArg("literal", text, literal_type=lt)
    return CallArg("expr", text)


def _calls_in(node: Optional[ast.AST]) -> Iterator[ast.Call]:
    """Calls in evaluation-ish order, skipping lambda bodies."""
    if node is None:
        return
    stack = [node]
    found: list[ast.Call] = []
    while stack:
        n = stack.pop()
        if isinstance(n, ast.Lambda):
            continue
        if isinstance(n, ast.Call):
            found.append(n)
        stack.extend(reversed(list(ast.iter_child_nodes(n))))
    yield from found


def _make_call_sites(
    node: Optional[ast.AST],
    scope: str,
    stmt_id: int,
    receivers: tuple[VariableRef, ...] = (),
) -> tuple[CallSite, ...]:
    sites = []
    for call in _calls_in(node):
        chain = attribute_chain(call.func)
        if chain is None:
            continue
        sites.append(
            CallSite(
                stmt_id=stmt_id,
                line=call.lineno,
                callee_name=chain[-1],
                callee_qualifier=chain[:-1],
                positional_args=tuple(
                    _call_arg(a, scope) for a in call.args if not isinstance(a, ast.Starred)
                ),
                keyword_args=tuple(
                    (kw.arg, _call_arg(kw.value, scope)) for kw in call.keywords if kw.arg
                ),
                receivers=receivers if call is node else (),
            )
        )
    return tuple(sites)


def _return_count(value: Optional[ast.AST]) -> int:
    if value is None:
        return 0
    if isinstance(value, ast.Tuple):
        return len(value.elts)
    return 1


# -- statement builder -----------------------------------------------------------


class _Builder:
    def __init__(self, path: str, source: str, tree: ast.Module):
        self.path = path
        self.source = source
        self.lines = source.splitlines()
        self.tree = tree
        self.statements: list[Statement] = []
        self.functions: list[FunctionDecl] = []
        self.classes: list[ClassDecl] = []
        self.imports: list[ImportDecl] = []
        self.flow: dict[str, dict[int, tuple[int, ...]]] = {}
        self.scope_entry: dict[str, int] = {}
        self.diagnostics: list[str] = []
        self._next_id = 1
        self._ids: dict[int, int] = {}  # id(ast node) -> statement id
        self._class_pending: list[tuple[ast.ClassDef, str, int]] = []

    # text helpers
    def _header_end(self, node: ast.stmt, body: list[ast.stmt]) -> int:
        if not body or body[0].lineno <= node.lineno:
            return node.lineno
        end = body[0].lineno - 1
        while end > node.lineno:
            stripped = self.lines[end - 1].strip() if end - 1 < len(self.lines) else ""
            if stripped and not stripped.startswith("#"):
                break
            end -= 1
        return end

    def _text(self, line: int, end: int) -> str:
        return "\n".join(self.lines[line - 1 : end])

    def _add(self, node: ast.stmt, kind: str, scope: str, parent: Optional[int], *,
             defs: Iterable[VariableRef] = (), uses: Iterable[VariableRef] = (),
             sites: tuple[CallSite, ...] = (), end: Optional[int] = None,
             return_count: Optional[int] = None, jump: Optional[str] = None,
             line: Optional[int] = None, stmt_id: Optional[int] = None) -> int:
        sid = stmt_id if stmt_id is not None else self._reserve(node)
        line = line if line is not None else node.lineno
        end = end if end is not None else (node.end_lineno or line)
        sites = tuple(
            CallSite(sid, c.line, c.callee_name, c.callee_qualifier, c.positional_args,
                     c.keyword_args, c.receivers)
            for c in sites
        )
        self.statements.append(
            Statement(
                id=sid, line=line, kind=kind, scope=scope,
                defs=frozenset(defs), uses=frozenset(uses), call_sites=sites,
                end_line=end, parent=parent, text=self._text(line, end),
                return_count=return_count, jump=jump,
            )
        )
        return sid

    def _reserve(self, node: ast.AST) -> int:
        key = id(node)
        if key not in self._ids:
            self._ids[key] = self._next_id
            self._next_id += 1
        return self._ids[key]

    # scopes
    def build(self) -> None:
        self.scope_entry[MODULE_SCOPE] = ENTRY
        self._body(self.tree.body, MODULE_SCOPE, None, None)
        succ: dict[int, set[int]] = {}
        entry = self._flow(self.tree.body, {EXIT}, succ, None)
        succ[ENTRY] = set(entry)
        self.flow[MODULE_SCOPE] = _freeze(succ)
        self.statements.sort(key=lambda s: s.id)

    def _body(self, body: list[ast.stmt], scope: str, parent: Optional[int],
              owner: Optional[str]) -> None:
        for node in body:
            self._stmt(node, scope, parent, owner)

    def _stmt(self, node: ast.stmt, scope: str, parent: Optional[int], owner: Optional[str]) -> None:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            self._function(node, scope, owner)
        elif isinstance(node, ast.ClassDef):
            self._class(node, scope)
        elif isinstance(node, (ast.Assign, ast.AnnAssign, ast.AugAssign)):
            self._assign(node, scope, parent)
        elif isinstance(node, ast.Return):
            uses, defs = _expr_uses(node.value, scope)
            sid = self._reserve(node)
            self._add(node, "return", scope, parent, defs=defs, uses=uses,
                      sites=_make_call_sites(node.value, scope, sid),
                      return_count=_return_count(node.value))
        elif isinstance(node, ast.Expr):
            uses, defs = _expr_uses(node.value, scope)
            sid = self._reserve(node)
            kind = "call" if isinstance(node.value, ast.Call) else "expression"
            self._add(node, kind, scope, parent, defs=defs, uses=uses,
                      sites=_make_call_sites(node.value, scope, sid))
        elif isinstance(node, (ast.Import, ast.ImportFrom)):
            self._import(node, scope, parent)
        elif isinstance(node, (ast.If, ast.While)):
            uses, defs = _expr_uses(node.test, scope)
            sid = self._reserve(node)
            self._add(node, "control", scope, parent, defs=defs, uses=uses,
                      sites=_make_call_sites(node.test, scope, sid),
                      end=self._header_end(node, node.body))
            self._body(node.body, scope, sid, owner)
            self._body(node.orelse, scope, sid, owner)
        elif isinstance(node, (ast.For, ast.AsyncFor)):
            uses, defs = _expr_uses(node.iter, scope)
            tdefs, tuses = _target_refs(node.target, scope)
            sid = self._reserve(node)
            self._add(node, "control", scope, parent, defs=set(tdefs) | defs,
                      uses=uses | tuses, sites=_make_call_sites(node.iter, scope, sid),
                      end=self._header_end(node, node.body))
            self._body(node.body, scope, sid, owner)
            self._body(node.orelse, scope, sid, owner)
        elif isinstance(node, (ast.With, ast.AsyncWith)):
            uses: set[VariableRef] = set()
            defs: set[VariableRef] = set()
            sid = self._reserve(node)
            sites: list[CallSite] = []
            for item in node.items:
                u, d = _expr_uses(item.context_expr, scope)
                uses |= u
                defs |= d
                sites.extend(_make_call_sites(item.context_expr, scope, sid))
                if item.optional_vars is not None:
                    td, tu = _target_refs(item.optional_vars, scope)
                    defs.update(td)
                    uses |= tu
            self._add(node, "control", scope, parent, defs=defs, uses=uses, sites=tuple(sites),
                      end=self._header_end(node, node.body))
            self._body(node.body, scope, sid, owner)
        elif isinstance(node, ast.Try):
            sid = self._reserve(node)
            self._add(node, "control", scope, parent, end=self._header_end(node, node.body))
            self._body(node.body, scope, sid, owner)
            for h in node.handlers:
                uses, _ = _expr_uses(h.type, scope)
                defs = {VariableRef(h.name, (), scope)} if h.name else set()
                hid = self._reserve(h)
                self._add(h, "control", scope, sid, defs=defs, uses=uses,
                          end=self._header_end(h, h.body), stmt_id=hid)
                self._body(h.body, scope, hid, owner)
            self._body(node.orelse, scope, sid, owner)
            self._body(node.finalbody, scope, sid, owner)
        elif isinstance(node, ast.Match):
            uses, defs = _expr_uses(node.subject, scope)
            sid = self._reserve(node)
            first = node.cases[0].pattern.lineno if node.cases else node.lineno
            self._add(node, "control", scope, parent, defs=defs, uses=uses,
                      sites=_make_call_sites(node.subject, scope, sid),
                      end=max(node.lineno, first - 1))
            for case in node.cases:
                cid = self._reserve(case)
                cdefs = {
                    VariableRef(n, (), scope)
                    for p in ast.walk(case.pattern)
                    for n in ([getattr(p, "name", None)] + [getattr(p, "rest", None)])
                    if isinstance(n, str)
                }
                guses, _ = _expr_uses(case.guard, scope)
                self._add(case, "control", scope, sid, defs=cdefs, uses=guses,
                          line=case.pattern.lineno,
                          end=max(case.pattern.lineno, case.body[0].lineno - 1),
                          stmt_id=cid)
                self._body(case.body, scope, cid, owner)
        else:
            # pass/break/continue/raise/assert/del/global/nonlocal and anything unknown
            uses, defs = _expr_uses(node, scope)
            jump = None
            if isinstance(node, ast.Break):
                jump = "break"
            elif isinstance(node, ast.Continue):
                jump = "continue"
            elif isinstance(node, ast.Raise):
                jump = "raise"
            sid = self._reserve(node)
            self._add(node, "expression", scope, parent, defs=defs, uses=uses,
                      sites=_make_call_sites(node, scope, sid), jump=jump)

    def _assign(self, node, scope: str, parent: Optional[int]) -> None:
        sid = self._reserve(node)
        value = node.value
        uses, defs = _expr_uses(value, scope)
        targets = node.targets if isinstance(node, ast.Assign) else [node.target]
        receivers: list[VariableRef] = []
        for t in targets:
            d, u = _target_refs(t, scope)
            receivers.extend(d)
            defs.update(d)
            uses |= u
        if isinstance(node, ast.AugAssign):
            u, _ = _expr_uses(node.target, scope)
            # the target is read back before the write
            for t in _target_refs(node.target, scope)[0]:
                u.add(t)
            uses |= u
        if isinstance(node, ast.AnnAssign) and node.value is None:
            receivers = []
        recv = tuple(receivers) if isinstance(value, ast.Call) else ()
        self._add(node, "assign", scope, parent, defs=defs, uses=uses,
                  sites=_make_call_sites(value, scope, sid, recv))

    def _import(self, node, scope: str, parent: Optional[int]) -> None:
        sid = self._reserve(node)
        defs = set()
        if isinstance(node, ast.Import):
            for alias in node.names:
                bound = alias.asname or alias.name.split(".")[0]
                defs.add(VariableRef(bound, (), scope))
                self.imports.append(ImportDecl(sid, alias.name, ()))
        else:
            for alias in node.names:
                if alias.name != "*":
                    defs.add(VariableRef(alias.asname or alias.name, (), scope))
            self.imports.append(
                ImportDecl(sid, node.module or "", tuple(a.name for a in node.names), node.level)
            )
        self._add(node, "import", scope, parent, defs=defs)

    def _function(self, node, scope: str, owner: Optional[str]) -> None:
        sid = self._reserve(node)
        qual = node.name if scope == MODULE_SCOPE else f"{scope}.{node.name}"
        a = node.args
        params: list[Param] = []
        positional = a.posonlyargs + a.args
        defaults = [None] * (len(positional) - len(a.defaults)) + list(a.defaults)
        for arg, d in zip(positional, defaults):
            params.append(Param(arg.arg, _unparse(arg.annotation), _unparse(d)))
        if a.vararg:
            params.append(Param(a.vararg.arg, _unparse(a.vararg.annotation), None, "vararg"))
        for arg, d in zip(a.kwonlyargs, a.kw_defaults):
            params.append(Param(arg.arg, _unparse(arg.annotation), _unparse(d), "kwonly"))
        if a.kwarg:
            params.append(Param(a.kwarg.arg, _unparse(a.kwarg.annotation), None, "kwarg"))
        uses: set[VariableRef] = set()
        for d in a.defaults + [x for x in a.kw_defaults if x is not None]:
            uses |= _expr_uses(d, scope)[0]
        self._add(node, "function-signature", qual, None,
                  defs={VariableRef(p.name, (), qual) for p in params}, uses=uses,
                  end=self._header_end(node, node.body))
        first = self._next_id
        self._body(node.body, qual, sid, None)
        last = self._next_id - 1
        body_ids = [s.id for s in self.statements if s.scope == qual and s.id != sid]
        arity = max(
            (s.return_count or 0 for s in self.statements if s.scope == qual and s.kind == "return"),
            default=0,
        )
        decorators = tuple(_unparse(d) or "" for d in node.decorator_list)
        self.functions.append(
            FunctionDecl(
                name=node.name, qualname=qual, path=self.path, stmt_id=sid, line=node.lineno,
                params=tuple(params),
                body=(min(body_ids), max(body_ids)) if body_ids else (first, last),
                return_arity=arity, owner=owner, returns=_unparse(node.returns),
                decorators=decorators,
            )
        )
        succ: dict[int, set[int]] = {}
        succ[sid] = set(self._flow(node.body, {EXIT}, succ, None))
        self.flow[qual] = _freeze(succ)
        self.scope_entry[qual] = sid

    def _class(self, node: ast.ClassDef, scope: str) -> None:
        sid = self._reserve(node)
        qual = node.name if scope == MODULE_SCOPE else f"{scope}.{node.name}"
        uses: set[VariableRef] = set()
        for b in node.bases:
            uses |= _expr_uses(b, scope)[0]
        self._add(node, "class-signature", qual, None, uses=uses,
                  end=self._header_end(node, node.body))
        self._body(node.body, qual, sid, qual)
        succ: dict[int, set[int]] = {}
        succ[sid] = set(self._flow(node.body, {EXIT}, succ, None))
        self.flow[qual] = _freeze(succ)
        self.scope_entry[qual] = sid
        self._class_pending.append((node, qual, sid))

    def finish_classes(self) -> None:
        for node, qual, sid in self._class_pending:
            methods = [f for f in self.functions if f.owner == qual]
            fields: set[str] = set()
            for s in self.statements:
                if s.scope == qual and s.kind in ("assign", "expression"):
                    fields.update(r.name for r in s.defs if not r.qualifier)
            for m in methods:
                if not m.is_method or not m.params:
                    continue
                recv = m.params[0].name
                for s in self.statements:
                    if s.scope == m.qualname:
                        fields.update(r.name for r in s.defs if r.qualifier == (recv,))
            ctor = next((m for m in methods if m.name == "__init__"), None)
            self.classes.append(
                ClassDecl(
                    name=node.name, qualname=qual, path=self.path, stmt_id=sid, line=node.lineno,
                    fields=frozenset(fields),
                    methods=tuple(m for m in methods if not m.name.startswith("_")),
                    bases=tuple(_unparse(b) or "" for b in node.bases),
                    constructor=ctor,
                )
            )
        self.classes.sort(key=lambda c: c.stmt_id)
        self.functions.sort(key=lambda f: f.stmt_id)

    # control flow
    def _flow(self, body: list[ast.stmt], after: set[int], succ: dict[int, set[int]],
              loop: Optional[tuple[set[int], set[int]]]) -> set[int]:
        """Wire successors for ``body``; return the entry set of the block."""
        nxt = set(after)
        for node in reversed(body):
            nxt = self._flow_stmt(node, nxt, succ, loop)
        return nxt

    def _flow_stmt(self, node: ast.stmt, nxt: set[int], succ: dict[int, set[int]],
                   loop: Optional[tuple[set[int], set[int]]]) -> set[int]:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            return nxt
        sid = self._ids[id(node)]
        if isinstance(node, ast.If):
            then = self._flow(node.body, nxt, succ, loop)
            other = self._flow(node.orelse, nxt, succ, loop)
            succ[sid] = then | other
        elif isinstance(node, (ast.While, ast.For, ast.AsyncFor)):
            other = self._flow(node.orelse, nxt, succ, loop)
            body = self._flow(node.body, {sid}, succ, (set(nxt), {sid}))
            succ[sid] = body | other
        elif isinstance(node, (ast.With, ast.AsyncWith)):
            succ[sid] = self._flow(node.body, nxt, succ, loop)
        elif isinstance(node, ast.Try):
            final = self._flow(node.finalbody, nxt, succ, loop)
            orelse = self._flow(node.orelse, final, succ, loop)
            handler_ids = set()
            for h in node.handlers:
                hid = self._ids[id(h)]
                handler_ids.add(hid)
                succ[hid] = self._flow(h.body, final, succ, loop)
            before = set(succ)
            body = self._flow(node.body, orelse, succ, loop)
            # any statement of the protected body may raise into a handler
            for inner in set(succ) - before:
                succ[inner] = succ[inner] | handler_ids
            succ[sid] = body | handler_ids | (final if not node.handlers else set())
        elif isinstance(node, ast.Match):
            follow = set(nxt)
            case_entries: set[int] = set()
            for case in reversed(node.cases):
                cid = self._ids[id(case)]
                succ[cid] = self._flow(case.body, nxt, succ, loop) | follow
                follow = {cid}
                case_entries = {cid}
            succ[sid] = case_entries | set(nxt)
        elif isinstance(node, ast.Return):
            succ[sid] = {EXIT}
        elif isinstance(node, ast.Raise):
            succ[sid] = {EXIT}
        elif isinstance(node, ast.Break) and loop is not None:
            succ[sid] = set(loop[0])
        elif isinstance(node, ast.Continue) and loop is not None:
            succ[sid] = set(loop[1])
        else:
            succ[sid] = set(nxt)
        return {sid}


def _freeze(succ: dict[int, set[int]]) -> dict[int, tuple[int, ...]]:
    return {k: tuple(sorted(v)) for k, v in sorted(succ.items())}


def _unparse(node: Optional[ast.AST]) -> Optional[str]:
    return None if node is None else ast.unparse(node)


# -- public operations -----------------------------------------------------------


def parse_source(content: bytes | str, path: str) -> SourceUnit:
    """Parse one file into a :class:`SourceUnit`."""
    if isinstance(content, bytes):
        try:
            text = content.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SourceEncodingError(path, str(exc)) from exc
    else:
        text = content
    if text.startswith("﻿"):
        text = text[1:]
    try:
        tree = ast.parse(text, filename=path)
    except SyntaxError as exc:
        raise SourceParseError(path, exc.lineno or 0, exc.offset or 0, exc.msg) from exc
    b = _Builder(path, text, tree)
    b.build()
    b.finish_classes()
    return SourceUnit(
        path=path, module=module_name_for(path), source=text,
        statements=b.statements, functions=b.functions, classes=b.classes,
        imports=b.imports, flow=b.flow, scope_entry=b.scope_entry, diagnostics=b.diagnostics,
    )


def extract_def_use(unit: SourceUnit) -> list[tuple[int, frozenset[VariableRef], frozenset[VariableRef]]]:
    return [(s.id, s.defs, s.uses) for s in unit.statements]


def extract_class_defs(unit: SourceUnit) -> list[ClassDecl]:
    return list(unit.classes)


_BLOCK_KEYWORDS = ("else:", "finally:", "try:")


def render_unit(unit: SourceUnit) -> str:
    """Render the statement list back to source (comments and blank lines dropped)."""
    keep: set[int] = set()
    for s in unit.statements:
        keep.update(range(s.line, max(s.end_line, s.line) + 1))
    lines = unit.source.splitlines()
    for i, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if stripped.startswith(_BLOCK_KEYWORDS) or stripped.startswith("else :"):
            keep.add(i)
    return "\n".join(lines[i - 1] for i in sorted(keep) if i <= len(lines)) + "\n"
