"""A small grammar for Python and TypeScript type annotations.

Covers names (``a.b.C``), generic applications with ``[...]`` or ``<...>``,
array suffixes (``T[]``), unions (``|``), bracketed lists (``[int, str]`` as
in ``Callable[[int], str]``), string/number literals, ``...``, and object
literals ``{a?: number; b: string}``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Optional, Union

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<ellipsis>\.\.\.)
      | (?P<name>[A-Za-z_$][\w$]*(?:\s*\.\s*[A-Za-z_$][\w$]*)*)
      | (?P<number>-?\d+(?:\.\d+)?)
      | (?P<string>'[^']*'|"[^"]*")
      | (?P<arrow>=>)
      | (?P<punct>[\[\]<>{}(),;:|?&])
    )""",
    re.VERBOSE,
)


class TypeSyntaxError(ValueError):
    pass


@dataclass(frozen=True)
class Named:
    name: str
    args: Optional[tuple["TypeExpr", ...]] = None
    bracket: str = "["
    arrays: int = 0


@dataclass(frozen=True)
class Union_:
    members: tuple["TypeExpr", ...]


@dataclass(frozen=True)
class Obj:
    fields: tuple[tuple[str, bool, "TypeExpr"], ...]  # (name, optional, type)


@dataclass(frozen=True)
class ListOf:
    items: tuple["TypeExpr", ...]


@dataclass(frozen=True)
class Literal_:
    text: str


TypeExpr = Union[Named, Union_, Obj, ListOf, Literal_]


def tokenize(text: str) -> list[tuple[str, str, int, int]]:
    out = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise TypeSyntaxError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        kind = m.lastgroup
        value = m.group(kind)
        if kind == "name":
            value = re.sub(r"\s+", "", value)
        out.append((kind, value, m.start(kind), m.end()))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, tokens: list[tuple[str, str, int, int]]):
        self.toks = tokens
        self.i = 0

    def peek(self, value: Optional[str] = None) -> bool:
        if self.i >= len(self.toks):
            return False
        return value is None or self.toks[self.i][1] == value

    def take(self, value: Optional[str] = None) -> tuple[str, str, int, int]:
        if self.i >= len(self.toks):
            raise TypeSyntaxError("unexpected end of type")
        tok = self.toks[self.i]
        if value is not None and tok[1] != value:
            raise TypeSyntaxError(f"expected {value!r}, found {tok[1]!r}")
        self.i += 1
        return tok

    def union(self) -> TypeExpr:
        if self.peek("|"):
            self.take("|")
        members = [self.atom()]
        while self.peek("|"):
            self.take("|")
            members.append(self.atom())
        return members[0] if len(members) == 1 else Union_(tuple(members))

    def args(self, close: str) -> tuple[TypeExpr, ...]:
        items: list[TypeExpr] = []
        if self.peek(close):
            self.take(close)
            return ()
        while True:
            items.append(self.union())
            if self.peek(","):
                self.take(",")
                if self.peek(close):
                    break
                continue
            break
        self.take(close)
        return tuple(items)

    def atom(self) -> TypeExpr:
        kind, value, _, _ = self.take()
        if kind == "name":
            node: TypeExpr = Named(value)
            if self.peek("["):
                self.take("[")
                if self.peek("]"):
                    self.take("]")
                    node = Named(value, None, "[", 1)
                else:
                    node = Named(value, self.args("]"), "[")
            elif self.peek("<"):
                self.take("<")
                node = Named(value, self.args(">"), "<")
        elif value == "{":
            node = self.obj()
        elif value == "[":
            node = ListOf(self.args("]"))
        elif value == "(":
            node = self.union()
            self.take(")")
        elif kind in ("number", "string", "ellipsis"):
            node = Literal_(value)
        else:
            raise TypeSyntaxError(f"unexpected {value!r}")
        while self.peek("[") and self.i + 1 < len(self.toks) and self.toks[self.i + 1][1] == "]":
            self.take("[")
            self.take("]")
            if isinstance(node, Named):
                node = Named(node.name, node.args, node.bracket, node.arrays + 1)
            else:
                node = Named("Array", (node,), "<")
        return node

    def obj(self) -> Obj:
        fields = []
        while not self.peek("}"):
            kind, name, _, _ = self.take()
            if kind not in ("name", "string"):
                raise TypeSyntaxError(f"bad field name {name!r}")
            optional = False
            if self.peek("?"):
                self.take("?")
                optional = True
            self.take(":")
            fields.append((name.strip("'\""), optional, self.union()))
            if self.peek(",") or self.peek(";"):
                self.take()
            elif not self.peek("}"):
                raise TypeSyntaxError("expected ',' or '}' in object type")
        self.take("}")
        return Obj(tuple(fields))


def parse(text: str) -> TypeExpr:
    toks = tokenize(text)
    if not toks:
        raise TypeSyntaxError("empty type")
    p = _Parser(toks)
    node = p.union()
    if p.i != len(toks):
        raise TypeSyntaxError(f"trailing input after type: {toks[p.i][1]!r}")
    return node


def longest_type_span(text: str, reject: Optional[Callable[[str], bool]] = None) -> Optional[str]:
    """The longest substring of ``text`` (token aligned) that parses as a type.

    Ties go to the earliest span; ``reject`` can veto spans such as prose words.
    """
    try:
        toks = tokenize(text)
    except TypeSyntaxError:
        toks = _loose_tokens(text)
    best: Optional[tuple[int, int, int]] = None  # (length, -start, end index)
    for i in range(len(toks)):
        for j in range(len(toks), i, -1):
            start, end = toks[i][2], toks[j - 1][3]
            if best is not None and end - start <= best[0]:
                break
            p = _Parser(toks[i:j])
            try:
                p.union()
            except TypeSyntaxError:
                continue
            if p.i == j - i:
                if reject is not None and reject(text[start:end].strip()):
                    continue
                best = (end - start, -start, end)
                break
    if best is None:
        return None
    start = -best[1]
    return text[start : best[2]].strip()


def _loose_tokens(text: str) -> list[tuple[str, str, int, int]]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            pos += 1
            continue
        kind = m.lastgroup
        value = m.group(kind)
        if kind == "name":
            value = re.sub(r"\s+", "", value)
        out.append((kind, value, m.start(kind), m.end()))
        pos = m.end()
    return out


def render(node: TypeExpr, sort_unions: bool = True) -> str:
    """Whitespace-free rendering; union members are sorted when ``sort_unions``."""
    if isinstance(node, Named):
        out = node.name
        if node.args is not None:
            inner = [render(a, sort_unions) for a in node.args]
            if sort_unions and node.name.rpartition(".")[2] == "Union":
                inner = sorted(set(inner))
            close = "]" if node.bracket == "[" else ">"
            out += node.bracket + ",".join(inner) + close
        return out + "[]" * node.arrays
    if isinstance(node, Union_):
        members = [render(m, sort_unions) for m in node.members]
        return "|".join(sorted(set(members)) if sort_unions else members)
    if isinstance(node, Obj):
        parts = [f"{n}{'?' if opt else ''}:{render(t, sort_unions)}" for n, opt, t in node.fields]
        return "{" + ",".join(parts) + "}"
    if isinstance(node, ListOf):
        return "[" + ",".join(render(a, sort_unions) for a in node.items) + "]"
    return node.text


def is_structural(text: str) -> bool:
    try:
        return isinstance(parse(text), Obj)
    except TypeSyntaxError:
        return False


def is_bare_identifier(text: str) -> bool:
    return re.fullmatch(r"[A-Za-z_$][\w$]*", text.strip()) is not None
