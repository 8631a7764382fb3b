import json
import shutil
import zipfile
from pathlib import Path

import pytest

from transit_typology.readers import load_feed

DATA_DIR = Path(__file__).parent / "test_readers" / "data"


@pytest.fixture
def minicity_dir() -> Path:
    return DATA_DIR / "minicity"


@pytest.fixture
def poznan_dir() -> Path:
    return DATA_DIR / "poznan"


@pytest.fixture
def boundary_path() -> Path:
    return DATA_DIR / "minicity_boundary.geojson"


@pytest.fixture
def minicity(minicity_dir):
    return load_feed(minicity_dir, "wro")


@pytest.fixture
def poznan(poznan_dir):
    return load_feed(poznan_dir, "poz")


@pytest.fixture
def feed_copy(tmp_path, minicity_dir):
    """Writable copy of the minicity feed."""
    target = tmp_path / "feed"
    shutil.copytree(minicity_dir, target)
    return target


@pytest.fixture
def minicity_zip(tmp_path, minicity_dir) -> Path:
    target = tmp_path / "minicity.zip"
    with zipfile.ZipFile(target, "w") as archive:
        for file in sorted(minicity_dir.glob("*.txt")):
            archive.write(file, file.name)
    return target


@pytest.fixture
def pipeline_config(tmp_path, minicity_dir, poznan_dir, boundary_path) -> dict:
    """Two small cities with a fast training schedule."""
    return {
        "cities": [
            {
                "city_tag": "wro",
                "feed_path": str(minicity_dir),
                "boundary_path": str(boundary_path),
            },
            {"city_tag": "poz", "feed_path": str(poznan_dir)},
        ],
        "train": {"epochs": 30, "batch_size": 4, "layer_sizes": [34, 12, 4]},
        "ks": [2, 3, 4],
        "levels": [2, 4],
        "typology_names": {"2": {"0": "busy", "1": "quiet"}},
        "output_dir": str(tmp_path / "out"),
        "seed": 7,
    }


@pytest.fixture
def config_file(tmp_path, pipeline_config) -> Path:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(pipeline_config, indent=2), encoding="utf-8")
    return path
