from __future__ import annotations

import datetime as dt
import importlib.resources as pkg_resources
import json
import os
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field, ValidationError

from transit_typology.errors import ConfigError
from transit_typology.model import (
    DEFAULT_HOURS,
    HeadsignPolicy,
    LinkageConfig,
    NormalizationMode,
    TrainConfig,
    hour_range,
)

OUTPUT_ENV = "TRANSIT_TYPOLOGY_OUT"
TEMPLATE = "default_config.json"


class CityConfig(BaseModel):
    city_tag: str
    feed_path: Path
    boundary_path: Optional[Path] = None
    analysis_date: Optional[dt.date] = Field(
        default=None,
        description="Service day to analyse; the first Wednesday with service if unset",
    )


class PipelineConfig(BaseModel):
    cities: list[CityConfig]
    resolution: int = 8
    hours: tuple[int, int] = DEFAULT_HOURS
    normalization: NormalizationMode = NormalizationMode.GLOBAL
    frozen_normalization: Optional[Path] = Field(
        default=None,
        description="normalization.json of an earlier run to project into instead of refitting",
    )
    headsign_policy: HeadsignPolicy = HeadsignPolicy.STRICT
    min_routes: Optional[int] = None
    train: TrainConfig = Field(default_factory=TrainConfig)
    linkage: LinkageConfig = Field(default_factory=LinkageConfig)
    ks: list[int] = Field(default_factory=lambda: list(range(2, 10)))
    levels: list[int] = Field(default_factory=lambda: [2, 4, 8])
    typology_names: dict[int, dict[int, str]] = Field(default_factory=dict)
    output_dir: Path = Path("out")
    seed: int = 42
    workers: int = Field(default=1, ge=1)

    @property
    def city_tags(self) -> list[str]:
        return [city.city_tag for city in self.cities]

    @property
    def input_size(self) -> int:
        return 2 * len(hour_range(self.hours))


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def semantic_errors(data: dict) -> list[str]:
    """Checks that need more than one field; tolerant to wrongly typed input."""
    errors = []

    cities = data.get("cities")
    if isinstance(cities, list):
        if not cities:
            errors.append("cities: at least one city is required")
        seen = set()
        for index, city in enumerate(cities):
            if not isinstance(city, dict):
                continue
            tag = city.get("city_tag")
            if tag in seen:
                errors.append(f"cities[{index}].city_tag: duplicate city tag '{tag}'")
            seen.add(tag)
            for key in ("feed_path", "boundary_path"):
                path = city.get(key)
                if isinstance(path, (str, Path)) and not Path(path).exists():
                    errors.append(f"cities[{index}].{key}: '{path}' does not exist")

    hours = data.get("hours", list(DEFAULT_HOURS))
    if isinstance(hours, (list, tuple)) and len(hours) == 2 and all(map(_is_int, hours)):
        start, end = hours
        if not 0 <= start <= end <= 23:
            errors.append(f"hours: {start}..{end} must be an ordered range within 0..23")

    resolution = data.get("resolution", 8)
    if _is_int(resolution) and not 0 <= resolution <= 15:
        errors.append(f"resolution: {resolution} outside 0..15")

    ks = data.get("ks", list(range(2, 10)))
    if isinstance(ks, list) and all(map(_is_int, ks)):
        if any(k < 1 for k in ks):
            errors.append(f"ks: every k must be at least 1, got {ks}")
        if len(set(ks)) != len(ks):
            errors.append(f"ks: duplicate values in {ks}")
        levels = data.get("levels", [2, 4, 8])
        if isinstance(levels, list) and all(map(_is_int, levels)):
            unknown = sorted(set(levels) - set(ks))
            if unknown:
                errors.append(f"levels: {unknown} are not among ks {ks}")

    frozen = data.get("frozen_normalization")
    if isinstance(frozen, (str, Path)) and not Path(frozen).exists():
        errors.append(f"frozen_normalization: '{frozen}' does not exist")

    return errors


def _resolve(path, base: Path):
    if not isinstance(path, str):
        return path
    candidate = Path(path).expanduser()
    return str(candidate if candidate.is_absolute() else base / candidate)


def _prepare(raw: dict, base: Path) -> dict:
    """Resolves relative paths, applies the environment and the shared seed."""
    data = dict(raw)
    if isinstance(data.get("cities"), list):
        data["cities"] = [
            {
                **city,
                **{
                    key: _resolve(city[key], base)
                    for key in ("feed_path", "boundary_path")
                    if key in city
                },
            }
            if isinstance(city, dict)
            else city
            for city in data["cities"]
        ]
    for key in ("output_dir", "frozen_normalization"):
        if key in data:
            data[key] = _resolve(data[key], base)
    data.setdefault("output_dir", str(base / "out"))

    if os.environ.get(OUTPUT_ENV):
        data["output_dir"] = os.environ[OUTPUT_ENV]

    train = data.get("train", {})
    if isinstance(train, dict):
        train = dict(train)
        if "seed" in data:
            train["seed"] = data["seed"]
        hours = data.get("hours", list(DEFAULT_HOURS))
        sizes = train.get("layer_sizes", list(TrainConfig().layer_sizes))
        if (
            isinstance(hours, (list, tuple))
            and len(hours) == 2
            and all(map(_is_int, hours))
            and isinstance(sizes, (list, tuple))
            and len(sizes) == 3
        ):
            train["layer_sizes"] = [2 * (hours[1] - hours[0] + 1), *sizes[1:]]
        data["train"] = train
    return data


def config_from_dict(raw: dict, base: str | Path = ".") -> PipelineConfig:
    """Validates a config mapping, reporting every problem in one ConfigError."""
    data = _prepare(raw, Path(base))
    errors = []
    config = None
    try:
        config = PipelineConfig.model_validate(data)
    except ValidationError as e:
        for error in e.errors():
            location = ".".join(str(part) for part in error["loc"]) or "config"
            errors.append(f"{location}: {error['msg']}")
    errors += semantic_errors(data)

    if errors or config is None:
        raise ConfigError(errors)
    return config


def validate_config(path: str | Path) -> PipelineConfig:
    """Loads and checks a JSON pipeline config.

    Relative paths resolve against the config file's directory and the
    TRANSIT_TYPOLOGY_OUT environment variable overrides `output_dir`.

    Raises:
        ConfigError: With the list of all problems found.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file '{path}' does not exist"])
    try:
        with open(path, "r", encoding="utf-8") as file:
            raw = json.load(file)
    except json.JSONDecodeError as e:
        raise ConfigError([f"{path.name}: not valid JSON ({e})"])
    if not isinstance(raw, dict):
        raise ConfigError([f"{path.name}: top level must be a JSON object"])

    return config_from_dict(raw, path.resolve().parent)


def default_template() -> dict:
    """The packaged example config."""
    text = pkg_resources.files("transit_typology.static").joinpath(TEMPLATE).read_text(
        encoding="utf-8"
    )
    return json.loads(text)
