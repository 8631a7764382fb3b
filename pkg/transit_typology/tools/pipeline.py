from __future__ import annotations

import datetime as dt
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from loguru import logger
from pydantic import BaseModel, Field
from rich.progress import Progress

from transit_typology.errors import (
    ConfigError,
    FeedRejected,
    MissingStageError,
    StageError,
)
from transit_typology.ioutils.artifacts import (
    ArtifactStore,
    read_csv,
    read_json,
    write_csv,
    write_json,
)
from transit_typology.model import GLOBAL_SCOPE, RegionSet, TrainConfig
from transit_typology.tools import (
    autoencoder,
    clustering,
    features,
    feed,
    normalizer,
    regions,
    report,
)
from transit_typology.tools.config import CityConfig, PipelineConfig, semantic_errors
from transit_typology.tools.utility import sha256_json, sha256_path

STAGES = ["ingest", "featurize", "normalize", "embed", "cluster", "report"]
CITY_STAGES = {"ingest", "featurize"}
UPSTREAM = {
    "ingest": [],
    "featurize": ["ingest"],
    "normalize": ["featurize"],
    "embed": ["normalize"],
    "cluster": ["embed"],
    "report": ["ingest", "featurize", "cluster"],
}


class RunSummary(BaseModel):
    executed: list[str] = Field(default_factory=list)
    skipped: list[str] = Field(default_factory=list)
    manifest: Path


def parse_stages(value: str | list[str] | None) -> list[str]:
    """Normalizes a stage selection to pipeline order."""
    if value is None:
        return list(STAGES)
    names = value.split(",") if isinstance(value, str) else list(value)
    names = [name.strip() for name in names if name.strip()]
    unknown = sorted(set(names) - set(STAGES))
    if unknown:
        raise ConfigError([f"stages: unknown stage(s) {unknown}, choose from {STAGES}"])
    return [stage for stage in STAGES if stage in names]


def leaf_order(frame: pd.DataFrame) -> pd.DataFrame:
    """Rows sorted by (region_id, city), the row order of every corpus artifact."""
    return frame.sort_values(["region_id", "city"], kind="stable").reset_index(drop=True)


def regions_frame(region_set: RegionSet) -> pd.DataFrame:
    rows = [
        [cell, city, stop]
        for city in region_set.cities
        for cell in region_set.cells(city)
        for stop in region_set.regions[city][cell]
    ]
    return pd.DataFrame(rows, columns=["region_id", "city", "stop_id"])


def regions_from_frame(frame: pd.DataFrame, resolution: int) -> RegionSet:
    mapping: dict[str, dict[str, list[str]]] = {}
    for row in frame.itertuples(index=False):
        mapping.setdefault(row.city, {}).setdefault(row.region_id, []).append(row.stop_id)
    return RegionSet(resolution=resolution, regions=mapping)


# Per-city stages. They run in worker processes and only write files; the
# manifest is updated by the parent.


def _ingest(
    city: CityConfig, config: PipelineConfig, date: Optional[dt.date], directory: Path
) -> list[str]:
    bundle = feed.load_feed(city.feed_path, city.city_tag)
    validation = feed.validate_feed(bundle, config.headsign_policy, config.min_routes)
    write_json(validation.model_dump(mode="json"), directory / "validation.json")
    if not validation.accepted:
        raise FeedRejected(city.city_tag, validation.reasons)
    bundle = bundle.with_headsigns(validation.substitutions)

    day = date or city.analysis_date or feed.default_analysis_date(bundle)
    events = feed.departure_events(bundle, day, config.hours)
    region_set = regions.assign_stops(bundle, config.resolution)

    coverage: dict = {
        "analysis_date": day.isoformat(),
        "regions": region_set.n_regions,
        "stops_per_cell": {
            str(stops): int(cells)
            for stops, cells in regions.stops_per_cell(bundle, config.resolution)
            .value_counts()
            .sort_index()
            .items()
        },
        "reports": [],
    }
    if city.boundary_path is not None:
        boundary = regions.load_boundary(city.boundary_path)
        resolutions = sorted({config.resolution, min(config.resolution + 1, 15)})
        coverage["reports"] = [
            r.model_dump(mode="json")
            for r in regions.resolution_comparison(bundle, boundary, tuple(resolutions))
        ]

    write_csv(events, directory / "events.csv")
    write_csv(regions_frame(region_set), directory / "regions.csv")
    write_json(coverage, directory / "coverage.json")
    logger.info(
        f"{city.city_tag}: {len(events)} departures on {day} in {region_set.n_regions} regions"
    )
    return ["events.csv", "regions.csv", "validation.json", "coverage.json"]


def _featurize(
    city: CityConfig, config: PipelineConfig, source: Path, directory: Path
) -> list[str]:
    events = read_csv(source / "events.csv")
    region_set = regions_from_frame(read_csv(source / "regions.csv"), config.resolution)

    vectors = features.build_features(events, region_set, config.hours)
    aggregates = features.aggregate_all(vectors, events, region_set)

    write_csv(features.features_frame(vectors), directory / "features.csv")
    write_csv(features.aggregates_frame(aggregates), directory / "aggregates.csv")
    return ["features.csv", "aggregates.csv"]


def _city_task(
    stage: str,
    city: CityConfig,
    config: PipelineConfig,
    date: Optional[dt.date],
    store: ArtifactStore,
) -> tuple[str, list[str]]:
    directory = store.stage_dir(stage, city.city_tag)
    directory.mkdir(parents=True, exist_ok=True)
    try:
        if stage == "ingest":
            files = _ingest(city, config, date, directory)
        else:
            files = _featurize(
                city, config, store.stage_dir("ingest", city.city_tag), directory
            )
    except Exception as e:
        raise StageError(stage, city.city_tag, e) from e
    return city.city_tag, files


class Pipeline:
    """Runs the stages of a config against a content-addressed output directory.

    A stage is skipped if the manifest holds a record with the same input hash
    and its output files are unchanged.
    """

    def __init__(
        self,
        config: PipelineConfig,
        date: Optional[dt.date] = None,
        show_progress: bool = True,
    ):
        errors = semantic_errors(config.model_dump(mode="json"))
        if errors:
            raise ConfigError(errors)
        self.config = config
        self.date = date
        self.show_progress = show_progress
        self.store = ArtifactStore(root=Path(config.output_dir))
        self.summary = RunSummary(manifest=self.store.manifest_path)

    # hashing

    def _outputs(self, stage: str, scope: str, requested: str) -> dict[str, str]:
        record = self.store.record(stage, scope)
        if record is None:
            raise MissingStageError(stage, requested)
        return record.outputs

    def _city_outputs(self, stage: str, requested: str) -> dict[str, dict[str, str]]:
        return {
            tag: self._outputs(stage, tag, requested) for tag in self.config.city_tags
        }

    def input_hash(self, stage: str, scope: str) -> str:
        c = self.config
        match stage:
            case "ingest":
                city = next(city for city in c.cities if city.city_tag == scope)
                payload = {
                    "feed": sha256_path(city.feed_path),
                    "boundary": sha256_path(city.boundary_path)
                    if city.boundary_path
                    else None,
                    "date": self.date or city.analysis_date,
                    "hours": c.hours,
                    "resolution": c.resolution,
                    "headsign_policy": c.headsign_policy.value,
                    "min_routes": c.min_routes,
                }
            case "featurize":
                payload = {
                    "ingest": self._outputs("ingest", scope, stage),
                    "hours": c.hours,
                    "resolution": c.resolution,
                }
            case "normalize":
                payload = {
                    "featurize": self._city_outputs("featurize", stage),
                    "mode": c.normalization.value,
                    "hours": c.hours,
                    "frozen": sha256_path(c.frozen_normalization)
                    if c.frozen_normalization
                    else None,
                }
            case "embed":
                payload = {
                    "normalize": self._outputs("normalize", GLOBAL_SCOPE, stage),
                    "train": c.train.model_dump(mode="json"),
                }
            case "cluster":
                payload = {
                    "embed": self._outputs("embed", GLOBAL_SCOPE, stage),
                    "linkage": c.linkage.model_dump(mode="json"),
                    "ks": sorted(c.ks),
                }
            case "report":
                payload = {
                    "ingest": self._city_outputs("ingest", stage),
                    "featurize": self._city_outputs("featurize", stage),
                    "cluster": self._outputs("cluster", GLOBAL_SCOPE, stage),
                    "ks": sorted(c.ks),
                    "levels": sorted(c.levels),
                    "names": c.typology_names,
                    "hours": c.hours,
                }
            case _:
                raise ValueError(f"Unknown stage '{stage}'.")
        return sha256_json(payload)

    # execution

    def run(self, stages: list[str] | str | None = None) -> RunSummary:
        """Executes the selected stages in dependency order.

        Raises:
            MissingStageError: If a selected stage needs outputs of a stage that
                was neither selected nor run before.
            StageError: If a stage fails; its outputs are not recorded.
        """
        selected = parse_stages(stages)
        logger.info(f"Running stages {selected} into {self.store.root}")
        for stage in selected:
            if stage in CITY_STAGES:
                self._run_city_stage(stage)
            else:
                self._run_corpus_stage(stage)
        logger.info(
            f"{len(self.summary.executed)} stage runs, {len(self.summary.skipped)} cached"
        )
        return self.summary

    def _run_city_stage(self, stage: str) -> None:
        pending = []
        hashes = {}
        for city in self.config.cities:
            scope = city.city_tag
            hashes[scope] = self.input_hash(stage, scope)
            if self.store.is_fresh(stage, scope, hashes[scope]):
                logger.debug(f"{stage}/{scope}: cached")
                self.summary.skipped.append(f"{stage}/{scope}")
                continue
            self.store.invalidate(stage, scope)
            pending.append(city)

        if not pending:
            return

        tasks = (
            delayed(_city_task)(stage, city, self.config, self.date, self.store)
            for city in pending
        )
        with Progress(disable=not self.show_progress) as progress:
            task = progress.add_task(f"{stage}...", total=len(pending))
            results = Parallel(n_jobs=self.config.workers, return_as="generator")(tasks)
            for scope, files in results:
                self.store.commit(stage, scope, hashes[scope], files)
                self.summary.executed.append(f"{stage}/{scope}")
                progress.update(task, advance=1)

    def _run_corpus_stage(self, stage: str) -> None:
        scope = GLOBAL_SCOPE
        digest = self.input_hash(stage, scope)
        if self.store.is_fresh(stage, scope, digest):
            logger.debug(f"{stage}/{scope}: cached")
            self.summary.skipped.append(f"{stage}/{scope}")
            return

        self.store.invalidate(stage, scope)
        directory = self.store.stage_dir(stage, scope)
        directory.mkdir(parents=True, exist_ok=True)
        runner: Callable[[Path], list[str]] = getattr(self, f"_{stage}")
        try:
            files = runner(directory)
        except ConfigError:
            raise
        except Exception as e:
            raise StageError(stage, scope, e) from e

        self.store.commit(stage, scope, digest, files)
        self.summary.executed.append(f"{stage}/{scope}")
        logger.info(f"{stage}: done")

    def _corpus_table(self, stage: str, name: str) -> pd.DataFrame:
        frames = [
            read_csv(self.store.stage_dir(stage, tag) / name)
            for tag in self.config.city_tags
        ]
        return leaf_order(pd.concat(frames, ignore_index=True))

    def _normalize(self, directory: Path) -> list[str]:
        raw = self._corpus_table("featurize", "features.csv")
        if self.config.frozen_normalization is not None:
            params = normalizer.load_params(self.config.frozen_normalization)
            logger.info(f"Projecting into frozen normalization {self.config.frozen_normalization}")
        else:
            params = normalizer.fit(raw, self.config.normalization, self.config.hours)

        normalized = normalizer.transform_matrix(raw, params)
        normalizer.save_params(params, directory / "normalization.json")
        write_csv(normalized, directory / "normalized.csv")
        return ["normalization.json", "normalized.csv"]

    def _embed(self, directory: Path) -> list[str]:
        normalized = read_csv(
            self.store.stage_dir("normalize", GLOBAL_SCOPE) / "normalized.csv"
        )
        matrix = normalized.drop(columns=["region_id", "city"]).to_numpy(dtype=np.float64)
        train_config: TrainConfig = self.config.train

        model = autoencoder.init_model(train_config)
        model, history = autoencoder.train(model, matrix, train_config)
        embeddings = autoencoder.embed(model, normalized)

        autoencoder.save_model(model, directory / "model.json")
        write_csv(
            pd.DataFrame({"epoch": range(1, len(history) + 1), "loss": history}),
            directory / "loss_history.csv",
        )
        write_csv(autoencoder.embeddings_frame(embeddings), directory / "embeddings.csv")
        logger.info(f"Trained {len(history)} epochs, final loss {history[-1]:.6f}")
        return ["model.json", "loss_history.csv", "embeddings.csv"]

    def _cluster(self, directory: Path) -> list[str]:
        embeddings = read_csv(self.store.stage_dir("embed", GLOBAL_SCOPE) / "embeddings.csv")
        n_regions = len(embeddings)
        too_large = sorted(k for k in self.config.ks if k > n_regions)
        if too_large:
            raise ConfigError(
                [f"ks: {too_large} exceed the {n_regions} regions of the corpus"]
            )

        points = embeddings.drop(columns=["region_id", "city"]).to_numpy(dtype=np.float64)
        merges = clustering.agglomerate(points, self.config.linkage)
        cuts = clustering.cut_all(merges, self.config.ks)

        write_csv(clustering.merges_frame(merges), directory / "merges.csv")
        write_csv(
            clustering.assignments_frame(embeddings, cuts), directory / "assignments.csv"
        )
        return ["merges.csv", "assignments.csv"]

    def _report(self, directory: Path) -> list[str]:
        source = self.store.stage_dir("cluster", GLOBAL_SCOPE)
        merges = clustering.merges_from_frame(read_csv(source / "merges.csv"))
        assignments = read_csv(source / "assignments.csv")
        cuts = clustering.cuts_from_assignments(assignments)
        keys = assignments[assignments["k"] == min(cuts)][["region_id", "city"]]
        keys = keys.reset_index(drop=True)

        raw = self._corpus_table("featurize", "features.csv")
        aggregates = self._corpus_table("featurize", "aggregates.csv")
        region_set = regions_from_frame(
            self._corpus_table("ingest", "regions.csv"), self.config.resolution
        )
        if not raw[["region_id", "city"]].equals(keys):
            raise ValueError("Cluster assignments do not match the featurized regions.")

        files = []
        for k, flat in cuts.items():
            shares = report.share_table(flat, keys["city"].tolist(), self.config.city_tags)
            write_csv(shares.to_frame(), directory / f"shares_k{k}.csv", index=True)

            profiles = [
                report.hour_profile(flat, raw, label, self.config.hours)
                for label in range(k)
            ]
            write_csv(report.profiles_frame(profiles), directory / f"profiles_k{k}.csv")

            write_json(report.export_geojson(flat, keys), directory / f"regions_k{k}.geojson")
            files += [f"shares_k{k}.csv", f"profiles_k{k}.csv", f"regions_k{k}.geojson"]

        write_csv(report.scatter_data(cuts, aggregates), directory / "scatter.csv")
        write_csv(report.export_dendrogram(merges), directory / "dendrogram.csv")
        levels = report.typology_levels(cuts, self.config.levels, self.config.typology_names)
        write_json(report.typology_document(levels), directory / "typology.json")
        write_csv(report.region_counts(region_set), directory / "region_counts.csv")
        return files + ["scatter.csv", "dendrogram.csv", "typology.json", "region_counts.csv"]


def run(
    config: PipelineConfig,
    stages: list[str] | str | None = None,
    date: Optional[dt.date] = None,
    show_progress: bool = True,
) -> RunSummary:
    """Runs the pipeline; see `Pipeline.run`."""
    return Pipeline(config, date=date, show_progress=show_progress).run(stages)


def load_manifest(output_dir: str | Path) -> dict:
    return read_json(Path(output_dir) / "manifest.json")


__all__ = [
    "Pipeline",
    "RunSummary",
    "STAGES",
    "load_manifest",
    "parse_stages",
    "run",
]
