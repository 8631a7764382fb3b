from __future__ import annotations

from typing import Sequence

import pandas as pd
from loguru import logger

from transit_typology.errors import UnassignedStop
from transit_typology.model import (
    DEFAULT_HOURS,
    AggregatedFeatures,
    DepartureEvent,
    RegionFeatureVector,
    RegionSet,
    feature_columns,
    hour_range,
)
from transit_typology.tools.feed import EVENT_COLUMNS

KEY_COLUMNS = ["region_id", "city"]
AGGREGATE_COLUMNS = [*KEY_COLUMNS, "sum_trips", "directions_whole_day"]

Events = pd.DataFrame | Sequence[DepartureEvent]


def _as_frame(events: Events) -> pd.DataFrame:
    if isinstance(events, pd.DataFrame):
        return events
    return pd.DataFrame(
        [event.model_dump() for event in events], columns=EVENT_COLUMNS
    )


def _locate(events: pd.DataFrame, regions: RegionSet) -> pd.DataFrame:
    """Adds the region of every event's stop."""
    located = events.copy()
    located["region"] = [
        regions.cell_of_stop(city, stop)
        for city, stop in zip(located["city_tag"], located["stop_id"])
    ]
    unassigned = located["region"].isna()
    if unassigned.any():
        first = located[unassigned].iloc[0]
        raise UnassignedStop(
            f"{int(unassigned.sum())} events depart from stops without region, "
            f"e.g. stop {first['stop_id']} of '{first['city_tag']}'.",
            suggestion="Build the region set from the same feed as the events.",
        )
    located["headsign"] = located["headsign"].fillna("").astype(str).str.strip()
    return located


def build_features(
    events: Events,
    regions: RegionSet,
    hours: tuple[int, int] = DEFAULT_HOURS,
) -> list[RegionFeatureVector]:
    """Counts departures and distinct headsigns per region and hour.

    Every region of `regions` gets a vector, regions without events are all
    zero. Departures of the same trip from two stops of one region are both
    counted. Blank headsigns do not count as a direction.

    Args:
        events (pd.DataFrame | Sequence[DepartureEvent]): Departure events.
        regions (RegionSet): Regions of the cities the events belong to.
        hours (tuple[int, int], optional): Inclusive hour window.
            Defaults to (6, 22).

    Raises:
        UnassignedStop: If an event departs from a stop outside every region.

    Returns:
        list[RegionFeatureVector]: One vector per region, sorted by
            (region, city).
    """
    window = hour_range(hours)
    frame = _locate(_as_frame(events), regions)

    outside = ~frame["hour_bucket"].between(hours[0], hours[1])
    if outside.any():
        logger.debug(f"Ignoring {int(outside.sum())} events outside hours {hours}")
        frame = frame[~outside]

    keys = ["city_tag", "region", "hour_bucket"]
    trips = frame.groupby(keys).size()
    directions = frame[frame["headsign"] != ""].groupby(keys)["headsign"].nunique()

    vectors = []
    for region, city in sorted(
        (region, city) for city in regions.cities for region in regions.cells(city)
    ):
        vectors.append(
            RegionFeatureVector(
                region=region,
                city_tag=city,
                hours=hours,
                trips_at=[int(trips.get((city, region, h), 0)) for h in window],
                directions_at=[int(directions.get((city, region, h), 0)) for h in window],
            )
        )
    return vectors


def aggregate(features: RegionFeatureVector, events: Events) -> AggregatedFeatures:
    """Whole-day totals of a region.

    `events` are the region's departure events; a headsign seen in several
    hours counts once.
    """
    frame = _as_frame(events)
    in_window = frame["hour_bucket"].between(features.hours[0], features.hours[1])
    headsigns = frame.loc[in_window, "headsign"].fillna("").astype(str).str.strip()
    return AggregatedFeatures(
        region=features.region,
        city_tag=features.city_tag,
        sum_trips=sum(features.trips_at),
        directions_whole_day=int(headsigns[headsigns != ""].nunique()),
    )


def aggregate_all(
    vectors: list[RegionFeatureVector], events: Events, regions: RegionSet
) -> list[AggregatedFeatures]:
    """`aggregate` for every vector, events are split by region first."""
    frame = _locate(_as_frame(events), regions)
    grouped = {key: group for key, group in frame.groupby(["city_tag", "region"])}
    empty = frame.iloc[0:0]
    return [
        aggregate(vector, grouped.get((vector.city_tag, vector.region), empty))
        for vector in vectors
    ]


def features_frame(vectors: list[RegionFeatureVector]) -> pd.DataFrame:
    """Vectors as a features.csv table: region_id, city, trips_at_*, directions_at_*."""
    hours = vectors[0].hours if vectors else DEFAULT_HOURS
    columns = [*KEY_COLUMNS, *feature_columns(hours)]
    rows = [[v.region, v.city_tag, *v.values] for v in vectors]
    return pd.DataFrame(rows, columns=columns)


def vectors_from_frame(
    frame: pd.DataFrame, hours: tuple[int, int] = DEFAULT_HOURS
) -> list[RegionFeatureVector]:
    n_hours = len(hour_range(hours))
    values = frame[feature_columns(hours)].to_numpy(dtype=int)
    return [
        RegionFeatureVector(
            region=str(region),
            city_tag=str(city),
            hours=hours,
            trips_at=row[:n_hours].tolist(),
            directions_at=row[n_hours:].tolist(),
        )
        for region, city, row in zip(frame["region_id"], frame["city"], values)
    ]


def aggregates_frame(aggregates: list[AggregatedFeatures]) -> pd.DataFrame:
    rows = [
        [a.region, a.city_tag, a.sum_trips, a.directions_whole_day] for a in aggregates
    ]
    return pd.DataFrame(rows, columns=AGGREGATE_COLUMNS)
