"""Project index: every parsed unit of a source tree plus import resolution."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .source_model import (
    ClassDecl,
    FunctionDecl,
    ImportEdge,
    SourceUnit,
    module_name_for,
    parse_source,
)

log = logging.getLogger(__name__)


@dataclass
class Project:
    root: str
    units: dict[str, SourceUnit] = field(default_factory=dict)  # relative posix path -> unit

    def __post_init__(self) -> None:
        self.modules: dict[str, str] = {u.module: p for p, u in self.units.items()}
        self._edges: dict[str, list[ImportEdge]] = {}

    @classmethod
    def from_directory(cls, root: str | Path) -> "Project":
        root = Path(root)
        units = {}
        for f in sorted(root.rglob("*.py")):
            rel = f.relative_to(root).as_posix()
            units[rel] = parse_source(f.read_bytes(), rel)
        return cls(str(root), units)

    @classmethod
    def from_sources(cls, sources: Mapping[str, str | bytes], root: str = ".") -> "Project":
        return cls(root, {p: parse_source(src, p) for p, src in sorted(sources.items())})

    @property
    def paths(self) -> list[str]:
        return sorted(self.units)

    def unit(self, path: str) -> SourceUnit:
        return self.units[path]

    def find_unit(self, ref: str) -> Optional[SourceUnit]:
        """Look a file up by relative path, module name, or bare stem."""
        ref = ref.replace("\\", "/")
        if ref in self.units:
            return self.units[ref]
        if ref + ".py" in self.units:
            return self.units[ref + ".py"]
        if ref in self.modules:
            return self.units[self.modules[ref]]
        stems = [p for p in self.paths if Path(p).stem == ref]
        return self.units[stems[0]] if len(stems) == 1 else None

    def functions(self) -> Iterable[FunctionDecl]:
        for p in self.paths:
            yield from self.units[p].functions

    def classes(self) -> Iterable[ClassDecl]:
        for p in self.paths:
            yield from self.units[p].classes

    def import_edges(self, path: str) -> list[ImportEdge]:
        if path not in self._edges:
            self._edges[path] = resolve_imports(self.units[path], self)
        return self._edges[path]

    def visible_paths(self, path: str) -> list[str]:
        """The file itself plus every project file it imports."""
        seen = [path]
        for e in self.import_edges(path):
            if e.imported is not None and e.imported not in seen:
                seen.append(e.imported)
        return seen


def _package_of(path: str) -> str:
    mod = module_name_for(path)
    if path.endswith("__init__.py"):
        return mod
    return mod.rpartition(".")[0]


def resolve_imports(unit: SourceUnit, project: Project) -> list[ImportEdge]:
    """Map the unit's import statements onto project files or external packages."""
    edges: list[ImportEdge] = []
    for imp in unit.imports:
        if imp.level:
            base = _package_of(unit.path)
            for _ in range(imp.level - 1):
                base = base.rpartition(".")[0]
            target = ".".join(p for p in (base, imp.module) if p)
        else:
            target = imp.module
        resolved = False
        if target in project.modules:
            edges.append(ImportEdge(unit.path, target, project.modules[target], imp.names))
            resolved = True
        # ``from pkg import submodule`` names a module rather than a symbol
        for name in imp.names:
            sub = f"{target}.{name}" if target else name
            if sub in project.modules:
                edges.append(ImportEdge(unit.path, sub, project.modules[sub], (name,)))
                resolved = True
        if not resolved:
            edges.append(
                ImportEdge(unit.path, target, None, imp.names, target.split(".")[0] or None)
            )
    return sorted(set(edges))
