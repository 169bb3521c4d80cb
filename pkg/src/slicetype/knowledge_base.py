"""Structural type knowledge base: class names, packages, public API, fields."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from .project import Project
from .source_model import ClassDecl

log = logging.getLogger(__name__)

SOURCES = ("project", "library")


class ManifestFormatError(ValueError):
    def __init__(self, path: str, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = path
        self.line = line


@dataclass(frozen=True, order=True)
class MethodSig:
    name: str
    params: tuple[str, ...] = ()


@dataclass(frozen=True)
class TypeRecord:
    name: str
    package: str
    fields: frozenset[str] = frozenset()
    api: tuple[MethodSig, ...] = ()
    source: str = "project"

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("type record needs a name")
        if self.source not in SOURCES:
            raise ValueError(f"unknown record source {self.source!r}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.name, self.package)

    @property
    def method_names(self) -> frozenset[str]:
        return frozenset(m.name for m in self.api)

    @property
    def structure(self) -> frozenset[str]:
        return self.fields | self.method_names

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "package": self.package,
            "fields": sorted(self.fields),
            "api": [{"name": m.name, "params": list(m.params)} for m in sorted(self.api)],
            "source": self.source,
        }

    @classmethod
    def from_json(cls, obj: dict, default_source: str = "library") -> "TypeRecord":
        if not isinstance(obj, dict) or not isinstance(obj.get("name"), str):
            raise ValueError("record must be an object with a string 'name'")
        api = []
        for m in obj.get("api", []):
            if isinstance(m, str):
                api.append(MethodSig(m))
            else:
                api.append(MethodSig(m["name"], tuple(m.get("params", ()))))
        return cls(
            name=obj["name"],
            package=obj.get("package", ""),
            fields=frozenset(obj.get("fields", ())),
            api=tuple(sorted(set(api))),
            source=obj.get("source", default_source),
        )


def record_from_class(cls: ClassDecl, package: str) -> TypeRecord:
    api = tuple(
        sorted(MethodSig(m.name, tuple(p.name for p in m.bindable_params())) for m in cls.methods)
    )
    fields = frozenset(f for f in cls.fields if not f.startswith("_"))
    return TypeRecord(cls.name, package, fields, api, "project")


@dataclass
class KnowledgeBase:
    records: list[TypeRecord] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._reindex()

    def _reindex(self) -> None:
        self.name_index: dict[str, list[int]] = {}
        for i, r in enumerate(self.records):
            self.name_index.setdefault(r.name, []).append(i)
        self._token_stats = None

    @property
    def token_stats(self):
        """BM25 index over record names, rebuilt lazily after mutation."""
        if self._token_stats is None:
            from .bm25 import NameIndex

            self._token_stats = NameIndex(self.names())
        return self._token_stats

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def names(self) -> list[str]:
        return sorted(self.name_index)

    def add(self, record: TypeRecord) -> bool:
        if any(self.records[i].key == record.key for i in self.name_index.get(record.name, ())):
            self.diagnostics.append(f"duplicate type {record.package}.{record.name} rejected")
            log.warning("duplicate type %s.%s rejected", record.package, record.name)
            return False
        self.records.append(record)
        self.name_index.setdefault(record.name, []).append(len(self.records) - 1)
        self._token_stats = None
        return True

    def lookup(self, name: str) -> list[TypeRecord]:
        hits = [self.records[i] for i in self.name_index.get(name, ())]
        return sorted(hits, key=lambda r: (r.source != "project", r.package))

    def __contains__(self, name: str) -> bool:
        return name in self.name_index

    def to_json(self) -> list[dict]:
        ordered = sorted(self.records, key=lambda r: (r.source != "project", r.name, r.package))
        return [r.to_json() for r in ordered]

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "KnowledgeBase":
        kb = cls()
        for obj in json.loads(text):
            kb.add(TypeRecord.from_json(obj))
        return kb

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgeBase":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def build_project_kb(project: Project) -> KnowledgeBase:
    """One record per class declared in the project (imported project files included)."""
    kb = KnowledgeBase()
    for path in project.paths:
        unit = project.unit(path)
        for cls in unit.classes:
            pkg = unit.module
            if "." in cls.qualname:
                pkg = f"{pkg}.{cls.qualname.rpartition('.')[0]}"
            kb.add(record_from_class(cls, pkg))
    return kb


def read_manifest(path: str | Path) -> list[TypeRecord]:
    """Parse a JSON Lines library manifest, one record per line."""
    records = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            records.append(TypeRecord.from_json(json.loads(line), default_source="library"))
        except (ValueError, KeyError, TypeError) as exc:
            raise ManifestFormatError(str(path), lineno, str(exc)) from exc
    return records


def merge_library_kb(kb: KnowledgeBase, manifest: str | Path | Iterable[TypeRecord]) -> KnowledgeBase:
    records = read_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    for r in records:
        if r.source != "library":
            r = TypeRecord(r.name, r.package, r.fields, r.api, "library")
        kb.add(r)
    return kb


def bundled_manifest() -> Path:
    return Path(str(resources.files("slicetype") / "data" / "library_manifest.jsonl"))


def lookup_type(kb: KnowledgeBase, name: str) -> list[TypeRecord]:
    return kb.lookup(name)
