from __future__ import annotations

import json
import os
from pathlib import Path

import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field

from transit_typology.tools.utility import sha256_file

MANIFEST = "manifest.json"
KEY_DTYPES = {
    "region_id": str,
    "city": str,
    "city_tag": str,
    "stop_id": str,
    "trip_id": str,
    "headsign": str,
}


def write_csv(frame: pd.DataFrame, path: str | Path, index: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=index, lineterminator="\n")
    return path


def read_csv(path: str | Path, **kwargs) -> pd.DataFrame:
    """Reads an artifact table; id columns stay strings."""
    header = pd.read_csv(path, nrows=0).columns
    dtypes = {column: dtype for column, dtype in KEY_DTYPES.items() if column in header}
    return pd.read_csv(path, dtype=dtypes, keep_default_na=False, **kwargs)


def write_json(obj, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as file:
        json.dump(obj, file, indent=2, sort_keys=True)
        file.write("\n")
    return path


def read_json(path: str | Path):
    with open(path, "r", encoding="utf-8") as file:
        return json.load(file)


class StageRecord(BaseModel):
    input_hash: str
    outputs: dict[str, str] = Field(
        default_factory=dict, description="File name to SHA-256 of its content"
    )


class ArtifactStore(BaseModel):
    """Output directory laid out as {stage}/{scope}/files with a manifest.

    The manifest maps "stage/scope" to the hash of the stage's inputs and the
    hashes of the files it produced. Only completed stages are recorded.
    """

    root: Path

    def stage_dir(self, stage: str, scope: str) -> Path:
        return self.root / stage / scope

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST

    def load_manifest(self) -> dict[str, StageRecord]:
        if not self.manifest_path.exists():
            return {}
        data = read_json(self.manifest_path)
        return {key: StageRecord(**value) for key, value in data.get("stages", {}).items()}

    def _save_manifest(self, records: dict[str, StageRecord]) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self.manifest_path.with_suffix(".json.tmp")
        write_json(
            {"stages": {key: records[key].model_dump() for key in sorted(records)}}, tmp
        )
        os.replace(tmp, self.manifest_path)

    def record(self, stage: str, scope: str) -> StageRecord | None:
        return self.load_manifest().get(f"{stage}/{scope}")

    def is_fresh(self, stage: str, scope: str, input_hash: str) -> bool:
        """True if the stage ran on the same inputs and its files are intact."""
        record = self.record(stage, scope)
        if record is None or record.input_hash != input_hash:
            return False
        directory = self.stage_dir(stage, scope)
        for name, digest in record.outputs.items():
            file = directory / name
            if not file.is_file() or sha256_file(file) != digest:
                logger.debug(f"{stage}/{scope}: output {name} is missing or modified")
                return False
        return True

    def invalidate(self, stage: str, scope: str) -> None:
        records = self.load_manifest()
        if records.pop(f"{stage}/{scope}", None) is not None:
            self._save_manifest(records)

    def commit(self, stage: str, scope: str, input_hash: str, files: list[str]) -> StageRecord:
        directory = self.stage_dir(stage, scope)
        record = StageRecord(
            input_hash=input_hash,
            outputs={name: sha256_file(directory / name) for name in sorted(files)},
        )
        records = self.load_manifest()
        records[f"{stage}/{scope}"] = record
        self._save_manifest(records)
        return record
