from __future__ import annotations

import datetime as dt

import pandas as pd
from loguru import logger

from transit_typology.errors import DateOutsideValidity, InvalidHourWindow
from transit_typology.model import (
    DEFAULT_HOURS,
    DepartureEvent,
    FeedBundle,
    HeadsignPolicy,
    LocationType,
    ValidationReport,
)
from transit_typology.readers.abstractreader import load_feed

EVENT_COLUMNS = ["city_tag", "stop_id", "lat", "lng", "hour_bucket", "headsign", "trip_id"]

__all__ = [
    "EVENT_COLUMNS",
    "active_services",
    "default_analysis_date",
    "departure_events",
    "events_to_records",
    "load_feed",
    "validate_feed",
]


def _check_hours(hours: tuple[int, int]) -> None:
    start, end = hours
    if not 0 <= start <= end <= 23:
        raise InvalidHourWindow(
            f"Hour window {hours} must lie within 0..23 and be ordered."
        )


def _final_stop_names(feed: FeedBundle) -> pd.Series:
    """Name of the last stop of every trip, indexed by trip_id."""
    last = feed.stop_times.loc[
        feed.stop_times.groupby("trip_id")["stop_sequence"].idxmax(),
        ["trip_id", "stop_id"],
    ]
    names = last.merge(feed.stops[["stop_id", "stop_name"]], on="stop_id", how="left")
    names["stop_name"] = names["stop_name"].where(
        names["stop_name"].fillna("") != "", names["stop_id"]
    )
    return names.set_index("trip_id")["stop_name"]


def validate_feed(
    feed: FeedBundle,
    headsign_policy: HeadsignPolicy = HeadsignPolicy.STRICT,
    min_routes: int | None = None,
) -> ValidationReport:
    """Screens a feed for missing headsigns and too few routes.

    Under `strict`, a single trip without a headsign rejects the feed. Under
    `fallback_last_stop`, such trips get the name of their final stop; the
    substitutions are listed in the report and can be applied with
    `FeedBundle.with_headsigns`.

    Args:
        feed (FeedBundle): The loaded feed.
        headsign_policy (HeadsignPolicy): How to treat missing headsigns.
        min_routes (int | None, optional): Minimum number of routes a feed must
            define to be accepted. Defaults to None (no minimum).

    Returns:
        ValidationReport: The screening result.
    """
    missing = feed.trips.loc[feed.trips["trip_headsign"] == "", "trip_id"]
    missing_ids = sorted(missing)
    reasons = []
    substitutions: dict[str, str] = {}

    if missing_ids:
        if headsign_policy == HeadsignPolicy.STRICT:
            reasons.append("missing_headsigns")
            logger.warning(
                f"{feed.city_tag}: {len(missing_ids)} trips without headsign, feed rejected"
            )
        else:
            final_names = _final_stop_names(feed)
            for trip_id in missing_ids:
                if trip_id not in final_names.index:
                    logger.debug(f"{feed.city_tag}: trip {trip_id} has no stop_times")
                    continue
                substitutions[trip_id] = str(final_names[trip_id])
                logger.debug(
                    f"{feed.city_tag}: trip {trip_id} headsign -> '{substitutions[trip_id]}'"
                )

    route_count = len(feed.routes)
    if min_routes is not None and route_count < min_routes:
        reasons.append("too_few_routes")
        logger.warning(
            f"{feed.city_tag}: {route_count} routes, fewer than the required {min_routes}"
        )

    return ValidationReport(
        city_tag=feed.city_tag,
        policy=headsign_policy,
        accepted=not reasons,
        missing_headsigns=missing_ids,
        substitutions=substitutions,
        route_count=route_count,
        route_types=sorted(int(t) for t in feed.routes["route_type"].unique()),
        reasons=reasons,
    )


def active_services(feed: FeedBundle, date: dt.date) -> set[str]:
    """Service ids running on `date`."""
    return feed.calendar.active_services(date)


def default_analysis_date(feed: FeedBundle) -> dt.date:
    """First Wednesday of the validity window on which at least one trip runs."""
    first, last = feed.validity_window
    day = first + dt.timedelta(days=(2 - first.weekday()) % 7)
    services = set(feed.trips["service_id"])
    while day <= last:
        if active_services(feed, day) & services:
            return day
        day += dt.timedelta(days=7)

    raise DateOutsideValidity(
        f"Feed '{feed.city_tag}' has no Wednesday with active trips between {first} and {last}.",
        suggestion="Pass an explicit analysis date.",
    )


def _expand_frequencies(feed: FeedBundle, times: pd.DataFrame) -> pd.DataFrame:
    """Replaces template trips by one copy per headway-based start time."""
    if feed.frequencies is None or feed.frequencies.empty:
        return times

    frequencies = feed.frequencies[feed.frequencies["trip_id"].isin(times["trip_id"])]
    if frequencies.empty:
        return times

    starts = frequencies.assign(
        start=[
            list(range(int(row.start_secs), int(row.end_secs), int(row.headway_secs)))
            for row in frequencies.itertuples(index=False)
        ]
    ).explode("start")
    starts = starts.dropna(subset=["start"])

    first_departure = times.groupby("trip_id")["secs"].min().rename("first")
    starts = starts.merge(first_departure, left_on="trip_id", right_index=True)
    starts["offset"] = starts["start"].astype(int) - starts["first"].astype(int)

    templated = times["trip_id"].isin(frequencies["trip_id"])
    expanded = times[templated].merge(starts[["trip_id", "offset"]], on="trip_id")
    expanded["secs"] = expanded["secs"] + expanded["offset"]

    logger.debug(
        f"{feed.city_tag}: expanded {frequencies['trip_id'].nunique()} frequency trips "
        f"into {len(starts)} departures"
    )
    return pd.concat(
        [times[~templated], expanded.drop(columns="offset")], ignore_index=True
    )


def departure_events(
    feed: FeedBundle,
    date: dt.date,
    hours: tuple[int, int] = DEFAULT_HOURS,
) -> pd.DataFrame:
    """Enumerates the departures of a service day that fall into an hour window.

    Every stop_time of a trip active on `date` yields one event, except the
    trip's final stop. Frequency-based trips are expanded first. Only
    platform/stop records emit events and times past midnight are not wrapped.

    Args:
        feed (FeedBundle): The loaded feed, possibly with substituted headsigns.
        date (dt.date): The service day.
        hours (tuple[int, int], optional): Inclusive hour window.
            Defaults to (6, 22).

    Raises:
        DateOutsideValidity: If `date` lies outside the feed's calendar.
        InvalidHourWindow: If `hours` is not an ordered range within 0..23.

    Returns:
        pd.DataFrame: One row per event with the `DepartureEvent` columns.
    """
    _check_hours(hours)
    first, last = feed.validity_window
    if not first <= date <= last:
        raise DateOutsideValidity(
            f"Date {date} lies outside the validity window {first}..{last} of '{feed.city_tag}'."
        )

    running = active_services(feed, date)
    trips = feed.trips[feed.trips["service_id"].isin(running)]
    times = feed.stop_times[feed.stop_times["trip_id"].isin(trips["trip_id"])].copy()

    final_sequence = times.groupby("trip_id")["stop_sequence"].transform("max")
    times = times[times["stop_sequence"] != final_sequence].copy()

    times["secs"] = times["departure_secs"].fillna(times["arrival_secs"])
    untimed = times["secs"].isna()
    if untimed.any():
        logger.warning(
            f"{feed.city_tag}: skipping {int(untimed.sum())} stop_times without departure "
            f"or arrival time (first at stop_times.txt line {int(times.loc[untimed, 'line'].iloc[0])})"
        )
        times = times[~untimed].copy()
    times["secs"] = times["secs"].astype(int)

    times = _expand_frequencies(feed, times)

    platforms = feed.stops[feed.stops["location_type"] == LocationType.PLATFORM_OR_STOP.value]
    events = times.merge(
        platforms[["stop_id", "stop_lat", "stop_lon"]], on="stop_id", how="inner"
    ).merge(trips[["trip_id", "trip_headsign"]], on="trip_id", how="inner")

    events["hour_bucket"] = events["secs"] // 3600
    events = events[events["hour_bucket"].between(hours[0], hours[1])]

    events = events.sort_values(["trip_id", "secs", "stop_sequence"], kind="stable")
    events = events.rename(
        columns={"stop_lat": "lat", "stop_lon": "lng", "trip_headsign": "headsign"}
    )
    events["headsign"] = events["headsign"].str.strip()
    events["city_tag"] = feed.city_tag
    events["hour_bucket"] = events["hour_bucket"].astype(int)

    logger.debug(f"{feed.city_tag}: {len(events)} departure events on {date}")
    return events[EVENT_COLUMNS].reset_index(drop=True)


def events_to_records(events: pd.DataFrame) -> list[DepartureEvent]:
    return [DepartureEvent(**row) for row in events.to_dict(orient="records")]
