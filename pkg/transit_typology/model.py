from __future__ import annotations

import datetime as dt
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    field_serializer,
    field_validator,
    model_validator,
)

DEFAULT_HOURS: tuple[int, int] = (6, 22)
GLOBAL_SCOPE = "corpus"


def hour_range(hours: tuple[int, int]) -> list[int]:
    """Inclusive list of hours of a (start, end) window."""
    return list(range(hours[0], hours[1] + 1))


def feature_columns(hours: tuple[int, int] = DEFAULT_HOURS) -> list[str]:
    """Feature column names in features.csv order."""
    window = hour_range(hours)
    return [f"trips_at_{h}" for h in window] + [f"directions_at_{h}" for h in window]


# Enumerations


class LocationType(Enum):
    PLATFORM_OR_STOP = "platform_or_stop"
    STATION = "station"
    OTHER = "other"

    @classmethod
    def from_gtfs(cls, code: str) -> LocationType:
        match code.strip():
            case "" | "0":
                return cls.PLATFORM_OR_STOP
            case "1":
                return cls.STATION
            case _:
                return cls.OTHER


class HeadsignPolicy(Enum):
    STRICT = "strict"
    FALLBACK_LAST_STOP = "fallback_last_stop"


class ExceptionType(Enum):
    ADD = "add"
    REMOVE = "remove"

    @classmethod
    def from_gtfs(cls, code: str) -> ExceptionType:
        match code.strip():
            case "1":
                return cls.ADD
            case "2":
                return cls.REMOVE
            case _:
                raise ValueError(f"exception_type must be 1 or 2, got '{code}'")


class NormalizationMode(Enum):
    GLOBAL = "global"
    LOCAL = "local"


class Optimizer(Enum):
    SGD = "sgd"
    ADAM = "adaptive-moment"


class Linkage(Enum):
    WARD = "ward"
    AVERAGE = "average"


class Metric(Enum):
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"


class FeatureFamily(Enum):
    TRIPS = "trips"
    DIRECTIONS = "directions"


# GTFS records


class StopRecord(BaseModel):
    stop_id: str
    name: str
    lat: float = Field(description="Latitude in degrees WGS84")
    lng: float = Field(description="Longitude in degrees WGS84")
    location_type: LocationType = LocationType.PLATFORM_OR_STOP

    @field_validator("lat")
    def validate_lat(cls, value):
        if not -90.0 <= value <= 90.0:
            raise ValueError(f"Latitude {value} outside [-90, 90].")
        return value

    @field_validator("lng")
    def validate_lng(cls, value):
        if not -180.0 <= value <= 180.0:
            raise ValueError(f"Longitude {value} outside [-180, 180].")
        return value


class RouteRecord(BaseModel):
    route_id: str
    route_type: int = Field(description="Route type code of the GTFS enumeration")
    short_name: str = ""
    long_name: str = ""


class TripRecord(BaseModel):
    trip_id: str
    route_id: str
    service_id: str
    headsign: Optional[str] = Field(
        default=None, description="Destination displayed on the vehicle"
    )


class StopTimeRecord(BaseModel):
    trip_id: str
    stop_id: str
    stop_sequence: int = Field(ge=0)
    departure_secs: Optional[int] = Field(
        default=None,
        ge=0,
        description="Seconds past service-day midnight, may exceed 86400",
    )
    arrival_secs: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def validate_times(self) -> StopTimeRecord:
        if (
            self.departure_secs is not None
            and self.arrival_secs is not None
            and self.departure_secs < self.arrival_secs
        ):
            raise ValueError(
                f"Departure before arrival in trip {self.trip_id} at sequence {self.stop_sequence}."
            )
        return self


class CalendarRule(BaseModel):
    service_id: str
    weekdays: tuple[bool, bool, bool, bool, bool, bool, bool] = Field(
        description="Monday to Sunday service flags"
    )
    start_date: dt.date
    end_date: dt.date

    def covers(self, date: dt.date) -> bool:
        return self.start_date <= date <= self.end_date and self.weekdays[date.weekday()]


class CalendarException(BaseModel):
    service_id: str
    date: dt.date
    exception_type: ExceptionType


class ServiceCalendar(BaseModel):
    model_config: ConfigDict = ConfigDict(frozen=True)  # type: ignore

    rules: dict[str, CalendarRule] = Field(default_factory=dict)
    exceptions: list[CalendarException] = Field(default_factory=list)

    _by_date: dict[dt.date, dict[str, ExceptionType]] = PrivateAttr(
        default_factory=dict
    )

    def model_post_init(self, __context) -> None:
        for exception in self.exceptions:
            self._by_date.setdefault(exception.date, {})[exception.service_id] = (
                exception.exception_type
            )

    @property
    def service_ids(self) -> set[str]:
        return set(self.rules) | {e.service_id for e in self.exceptions}

    def active_services(self, date: dt.date) -> set[str]:
        """Services running on `date`; a dated exception always wins over the weekly rule."""
        active = {sid for sid, rule in self.rules.items() if rule.covers(date)}
        for service_id, exception_type in self._by_date.get(date, {}).items():
            if exception_type == ExceptionType.ADD:
                active.add(service_id)
            else:
                active.discard(service_id)
        return active

    def validity_window(self) -> tuple[dt.date, dt.date] | None:
        dates = [rule.start_date for rule in self.rules.values()]
        dates += [rule.end_date for rule in self.rules.values()]
        dates += [e.date for e in self.exceptions]
        if not dates:
            return None
        return min(dates), max(dates)


class FeedBundle(BaseModel):
    """Parsed and validated GTFS feed of a single city.

    Tables are kept as pandas DataFrames with trimmed string columns. Times are
    stored as nullable integer seconds past service-day midnight.

    Attributes:
        city_tag (str): Short identifier of the city.
        stops (pd.DataFrame): stop_id, stop_name, stop_lat, stop_lon, location_type.
        routes (pd.DataFrame): route_id, route_type, route_short_name, route_long_name.
        trips (pd.DataFrame): trip_id, route_id, service_id, trip_headsign.
        stop_times (pd.DataFrame): trip_id, stop_id, stop_sequence, arrival_secs,
            departure_secs, line.
        frequencies (pd.DataFrame | None): trip_id, start_secs, end_secs, headway_secs.
        calendar (ServiceCalendar): Weekly rules and dated exceptions.
        validity_window (tuple[date, date]): First and last calendar date of the feed.
    """

    model_config: ConfigDict = ConfigDict(  # type: ignore
        frozen=True,
        arbitrary_types_allowed=True,
    )

    city_tag: str
    stops: pd.DataFrame
    routes: pd.DataFrame
    trips: pd.DataFrame
    stop_times: pd.DataFrame
    frequencies: Optional[pd.DataFrame] = None
    calendar: ServiceCalendar
    validity_window: tuple[dt.date, dt.date]

    def __repr__(self):
        return (
            f"FeedBundle(city_tag={self.city_tag!r}, "
            f"stops={len(self.stops)}, "
            f"routes={len(self.routes)}, "
            f"trips={len(self.trips)}, "
            f"stop_times={len(self.stop_times)})"
        )

    @property
    def n_trips(self) -> int:
        return len(self.trips)

    def stop_records(self) -> list[StopRecord]:
        return [
            StopRecord(
                stop_id=row.stop_id,
                name=row.stop_name,
                lat=float(row.stop_lat),
                lng=float(row.stop_lon),
                location_type=LocationType(row.location_type),
            )
            for row in self.stops.itertuples(index=False)
        ]

    def route_records(self) -> list[RouteRecord]:
        return [
            RouteRecord(
                route_id=row.route_id,
                route_type=int(row.route_type),
                short_name=row.route_short_name,
                long_name=row.route_long_name,
            )
            for row in self.routes.itertuples(index=False)
        ]

    def trip_records(self) -> list[TripRecord]:
        return [
            TripRecord(
                trip_id=row.trip_id,
                route_id=row.route_id,
                service_id=row.service_id,
                headsign=row.trip_headsign or None,
            )
            for row in self.trips.itertuples(index=False)
        ]

    def stop_time_records(self) -> list[StopTimeRecord]:
        records = []
        for row in self.stop_times.itertuples(index=False):
            records.append(
                StopTimeRecord(
                    trip_id=row.trip_id,
                    stop_id=row.stop_id,
                    stop_sequence=int(row.stop_sequence),
                    departure_secs=None
                    if pd.isna(row.departure_secs)
                    else int(row.departure_secs),
                    arrival_secs=None
                    if pd.isna(row.arrival_secs)
                    else int(row.arrival_secs),
                )
            )
        return records

    def with_headsigns(self, headsigns: dict[str, str]) -> FeedBundle:
        """Returns a copy of the feed where the given trips carry new headsigns."""
        if not headsigns:
            return self
        trips = self.trips.copy()
        replacement = trips["trip_id"].map(headsigns)
        trips["trip_headsign"] = replacement.fillna(trips["trip_headsign"])
        return self.model_copy(update={"trips": trips})


class DepartureEvent(BaseModel):
    city_tag: str = ""
    stop_id: str
    lat: float
    lng: float
    hour_bucket: int = Field(ge=0, description="Hour of the service day")
    headsign: str
    trip_id: str


class ValidationReport(BaseModel):
    city_tag: str
    policy: HeadsignPolicy
    accepted: bool
    missing_headsigns: list[str] = Field(
        default_factory=list, description="Trips without a headsign"
    )
    substitutions: dict[str, str] = Field(
        default_factory=dict,
        description="Trip id to the final-stop name used as its headsign",
    )
    route_count: int = 0
    route_types: list[int] = Field(default_factory=list)
    reasons: list[str] = Field(default_factory=list)

    @property
    def substitution_count(self) -> int:
        return len(self.substitutions)


# Regions


class RegionSet(BaseModel):
    """Micro-regions of one or more cities.

    `regions` maps city tag to cell id to the sorted stop ids inside the cell.
    Only cells with at least one stop are present.
    """

    resolution: int = Field(ge=0, le=15)
    regions: dict[str, dict[str, list[str]]] = Field(default_factory=dict)

    _lookup: dict[tuple[str, str], str] = PrivateAttr(default_factory=dict)

    def model_post_init(self, __context) -> None:
        for city, cells in self.regions.items():
            for cell, stops in cells.items():
                if not stops:
                    raise ValueError(f"Region {cell} of '{city}' contains no stop.")
                for stop_id in stops:
                    if (city, stop_id) in self._lookup:
                        raise ValueError(
                            f"Stop {stop_id} of '{city}' is assigned to two regions."
                        )
                    self._lookup[(city, stop_id)] = cell

    @property
    def cities(self) -> list[str]:
        return sorted(self.regions)

    @property
    def n_regions(self) -> int:
        return sum(len(cells) for cells in self.regions.values())

    def cells(self, city_tag: str | None = None) -> list[str]:
        if city_tag is not None:
            return sorted(self.regions.get(city_tag, {}))
        return sorted({cell for cells in self.regions.values() for cell in cells})

    def cell_of_stop(self, city_tag: str, stop_id: str) -> str | None:
        return self._lookup.get((city_tag, stop_id))

    def merge(self, other: RegionSet) -> RegionSet:
        if other.resolution != self.resolution:
            raise ValueError(
                f"Cannot merge region sets of resolution {self.resolution} and {other.resolution}."
            )
        overlap = set(self.regions) & set(other.regions)
        if overlap:
            raise ValueError(f"Cities present in both region sets: {sorted(overlap)}")
        return RegionSet(
            resolution=self.resolution, regions={**self.regions, **other.regions}
        )


class CoverageReport(BaseModel):
    city_tag: str = ""
    resolution: int
    total_cells: int = Field(ge=0)
    cells_with_stops: int = Field(ge=0)
    empty_cells: int = Field(ge=0)
    empty_percentage: float


# Features


class RegionFeatureVector(BaseModel):
    region: str
    city_tag: str
    hours: tuple[int, int] = DEFAULT_HOURS
    trips_at: list[int] = Field(description="Departures per hour of the window")
    directions_at: list[int] = Field(description="Distinct headsigns per hour")

    @model_validator(mode="after")
    def validate_counts(self) -> RegionFeatureVector:
        n_hours = self.hours[1] - self.hours[0] + 1
        if len(self.trips_at) != n_hours or len(self.directions_at) != n_hours:
            raise ValueError(
                f"Region {self.region}: expected {n_hours} values per family, "
                f"got {len(self.trips_at)} and {len(self.directions_at)}."
            )
        for trips, directions in zip(self.trips_at, self.directions_at):
            if trips < 0 or directions < 0:
                raise ValueError(f"Region {self.region}: negative feature value.")
            if directions > trips:
                raise ValueError(
                    f"Region {self.region}: more directions than trips in one hour."
                )
        return self

    @property
    def values(self) -> list[int]:
        return [*self.trips_at, *self.directions_at]

    def trips(self, hour: int) -> int:
        return self.trips_at[hour - self.hours[0]]

    def directions(self, hour: int) -> int:
        return self.directions_at[hour - self.hours[0]]


class AggregatedFeatures(BaseModel):
    region: str
    city_tag: str = ""
    sum_trips: int = Field(ge=0)
    directions_whole_day: int = Field(ge=0)


# Normalization


class ScopeRange(BaseModel):
    min: float
    max: float

    @model_validator(mode="after")
    def validate_order(self) -> ScopeRange:
        if self.max < self.min:
            raise ValueError(f"max {self.max} is smaller than min {self.min}.")
        return self

    @property
    def degenerate(self) -> bool:
        return self.max == self.min


class NormalizationParams(BaseModel):
    """Fitted block-wise min/max ranges.

    `blocks` maps the feature family ('trips', 'directions') to the scope
    ('corpus' in global mode, a city tag in local mode) to its range.
    """

    mode: NormalizationMode
    hours: tuple[int, int] = DEFAULT_HOURS
    blocks: dict[str, dict[str, ScopeRange]]

    @model_validator(mode="after")
    def validate_scopes(self) -> NormalizationParams:
        for family in FeatureFamily:
            if family.value not in self.blocks:
                raise ValueError(f"Missing block '{family.value}'.")
        if self.mode == NormalizationMode.GLOBAL:
            for family, scopes in self.blocks.items():
                if list(scopes) != [GLOBAL_SCOPE]:
                    raise ValueError(
                        f"Global mode stores exactly one range per block, '{family}' has {list(scopes)}."
                    )
        return self


# Autoencoder


class TrainConfig(BaseModel):
    seed: int = 42
    epochs: int = Field(default=200, ge=1)
    batch_size: int = Field(default=32, ge=1)
    learning_rate: float = Field(default=1e-3, ge=0.0)
    optimizer: Optimizer = Optimizer.ADAM
    layer_sizes: tuple[int, ...] = Field(
        default=(34, 24, 16),
        description="Encoder widths from input to embedding; the decoder mirrors them",
    )

    @field_validator("layer_sizes")
    def validate_layer_sizes(cls, value):
        if len(value) != 3 or any(size < 1 for size in value):
            raise ValueError("layer_sizes must list three positive widths.")
        return value


class LayerParams(BaseModel):
    model_config: ConfigDict = ConfigDict(arbitrary_types_allowed=True)  # type: ignore

    weights: np.ndarray = Field(description="out x in weight matrix")
    biases: np.ndarray = Field(description="out biases")

    @field_validator("weights", "biases", mode="before")
    def to_array(cls, value):
        return np.asarray(value, dtype=np.float64)

    @model_validator(mode="after")
    def validate_layer(self) -> LayerParams:
        if self.weights.ndim != 2 or self.biases.ndim != 1:
            raise ValueError("Weights must be a matrix and biases a vector.")
        if self.weights.shape[0] != self.biases.shape[0]:
            raise ValueError(
                f"Weights {self.weights.shape} do not match biases {self.biases.shape}."
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.biases).all()):
            raise ValueError("Layer parameters contain NaN or Inf.")
        return self

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape  # type: ignore

    @field_serializer("weights", "biases")
    def serialize_array(self, value: np.ndarray):
        return value.ravel().tolist()


class AutoencoderModel(BaseModel):
    """Two-layer encoder and mirrored two-layer decoder.

    A rectifier follows the first layer of each half; the embedding and the
    reconstruction layers are linear.
    """

    encoder: list[LayerParams]
    decoder: list[LayerParams]
    config: TrainConfig = Field(default_factory=TrainConfig)

    @model_validator(mode="after")
    def validate_shapes(self) -> AutoencoderModel:
        if len(self.encoder) != 2 or len(self.decoder) != 2:
            raise ValueError("Encoder and decoder must have exactly two layers each.")
        d_in, d_hidden, d_embed = self.config.layer_sizes
        expected = [
            (d_hidden, d_in),
            (d_embed, d_hidden),
            (d_hidden, d_embed),
            (d_in, d_hidden),
        ]
        actual = [layer.shape for layer in self.layers]
        if actual != expected:
            raise ValueError(f"Layer shapes {actual} differ from {expected}.")
        return self

    @property
    def layers(self) -> list[LayerParams]:
        return [*self.encoder, *self.decoder]

    @property
    def embedding_dim(self) -> int:
        return self.config.layer_sizes[-1]

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.config.layer_sizes),
            "layers": [
                {
                    "shape": list(layer.shape),
                    "weights": layer.weights.ravel().tolist(),
                    "biases": layer.biases.tolist(),
                }
                for layer in self.layers
            ],
            "config": self.config.model_dump(mode="json"),
        }

    @classmethod
    def from_dict(cls, data: dict) -> AutoencoderModel:
        layers = [
            LayerParams(
                weights=np.asarray(layer["weights"], dtype=np.float64).reshape(
                    layer["shape"]
                ),
                biases=layer["biases"],
            )
            for layer in data["layers"]
        ]
        return cls(
            encoder=layers[:2],
            decoder=layers[2:],
            config=TrainConfig(**data["config"]),
        )

    def to_bytes(self) -> bytes:
        return b"".join(
            layer.weights.tobytes() + layer.biases.tobytes() for layer in self.layers
        )


class Embedding(BaseModel):
    region: str
    city_tag: str
    z: list[float]

    @field_validator("z")
    def validate_z(cls, value):
        if not value or not np.isfinite(value).all():
            raise ValueError("Embedding must be a non-empty finite vector.")
        return value


# Clustering


class LinkageConfig(BaseModel):
    linkage: Linkage = Linkage.WARD
    metric: Metric = Metric.EUCLIDEAN

    @model_validator(mode="after")
    def validate_ward_metric(self) -> LinkageConfig:
        if self.linkage == Linkage.WARD and self.metric != Metric.EUCLIDEAN:
            raise ValueError("Ward linkage requires the euclidean metric.")
        return self


class DendrogramMerge(BaseModel):
    step: int = Field(ge=0)
    left: int = Field(ge=0, description="Node id; leaves are 0..n-1, merges n+step")
    right: int = Field(ge=0)
    height: float = Field(ge=0.0)
    size: int = Field(ge=2)


class ClusterCut(BaseModel):
    k: int = Field(ge=1)
    labels: list[int] = Field(description="Label per leaf, in leaf order")

    @model_validator(mode="after")
    def validate_labels(self) -> ClusterCut:
        if self.labels and sorted(set(self.labels)) != list(range(self.k)):
            raise ValueError(f"A {self.k}-cut must use exactly the labels 0..{self.k - 1}.")
        return self

    def members(self, label: int) -> list[int]:
        return [leaf for leaf, lab in enumerate(self.labels) if lab == label]


# Reports


class ShareTable(BaseModel):
    k: int
    cities: list[str]
    percentages: dict[int, dict[str, float]] = Field(
        description="Label to city tag to percentage of the city's regions"
    )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame.from_dict(self.percentages, orient="index")
        frame = frame.reindex(index=sorted(self.percentages), columns=self.cities)
        frame.index.name = "label"
        return frame


class BoxStats(BaseModel):
    family: FeatureFamily
    hour: int
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: int = Field(ge=0)

    @model_validator(mode="after")
    def validate_order(self) -> BoxStats:
        if not self.q1 <= self.median <= self.q3:
            raise ValueError("Quartiles are not ordered.")
        return self


class HourProfileStats(BaseModel):
    k: int
    label: int
    size: int
    stats: list[BoxStats]


class TypologyLevel(BaseModel):
    level: int = Field(ge=1)
    k: int = Field(ge=1)
    names: dict[int, str] = Field(default_factory=dict)
    parents: Optional[dict[int, int]] = Field(
        default=None, description="Label to the label of the previous level"
    )
