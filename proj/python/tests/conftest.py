import os
import pathlib

import pytest

SOURCE_DIR = pathlib.Path(os.environ.get("ASE_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))


@pytest.fixture
def source_dir() -> pathlib.Path:
    return SOURCE_DIR


@pytest.fixture
def paper_map(source_dir) -> pathlib.Path:
    return source_dir / "maps" / "paper_5x5.json"
