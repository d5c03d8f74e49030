from __future__ import annotations

from pathlib import Path

import pytest

from reqbench.corpus import Level, ReqKind, Requirement, RequirementSet

REPO_ROOT = Path(__file__).resolve().parent.parent
SAMPLES = REPO_ROOT / "samples"


@pytest.fixture(scope="session")
def samples_dir() -> Path:
    return SAMPLES


@pytest.fixture(scope="session")
def drtool_path() -> Path:
    return SAMPLES / "drtool_like.json"


@pytest.fixture(scope="session")
def seeded_path() -> Path:
    return SAMPLES / "seeded_defects.json"


@pytest.fixture(scope="session")
def seeded_manifest_path() -> Path:
    return SAMPLES / "seeded_defects_manifest.json"


def make_req(req_id: str, text: str, level: Level = Level.SYSTEM,
             kind_hint: ReqKind | None = None) -> Requirement:
    return Requirement(id=req_id, text=text, level=level, kind_hint=kind_hint)


def make_set(*reqs: Requirement, name: str = "fixture") -> RequirementSet:
    return RequirementSet(name=name, requirements=tuple(reqs))
