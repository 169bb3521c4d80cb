from __future__ import annotations

from pathlib import Path

import pytest

from slicetype.graphs import build_project_sdg
from slicetype.knowledge_base import build_project_kb
from slicetype.project import Project

FIXTURES = Path(__file__).parent / "fixtures"
GGNN = FIXTURES / "ggnn"


@pytest.fixture(scope="session")
def ggnn_project() -> Project:
    return Project.from_directory(GGNN)


@pytest.fixture(scope="session")
def ggnn_sdg(ggnn_project):
    return build_project_sdg(ggnn_project)


@pytest.fixture(scope="session")
def ggnn_kb(ggnn_project):
    return build_project_kb(ggnn_project)
