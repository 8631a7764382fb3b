from __future__ import annotations

import datetime as dt
import re
from abc import abstractmethod
from pathlib import Path
from typing import IO, ContextManager

import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field, field_validator

from transit_typology.errors import (
    DanglingReference,
    FeedError,
    FeedNotFound,
    MalformedRow,
    MissingMandatoryFile,
)
from transit_typology.model import (
    CalendarException,
    CalendarRule,
    ExceptionType,
    FeedBundle,
    LocationType,
    ServiceCalendar,
)
from transit_typology.tools.utility import parse_gtfs_times

MANDATORY_FILES = [
    "agency.txt",
    "stops.txt",
    "routes.txt",
    "trips.txt",
    "stop_times.txt",
]
CALENDAR_FILES = ["calendar.txt", "calendar_dates.txt"]
WEEKDAYS = [
    "monday",
    "tuesday",
    "wednesday",
    "thursday",
    "friday",
    "saturday",
    "sunday",
]
REQUIRED_COLUMNS = {
    "stops.txt": ["stop_id", "stop_lat", "stop_lon"],
    "routes.txt": ["route_id", "route_type"],
    "trips.txt": ["route_id", "service_id", "trip_id"],
    "stop_times.txt": ["trip_id", "stop_id", "stop_sequence"],
    "calendar.txt": ["service_id", *WEEKDAYS, "start_date", "end_date"],
    "calendar_dates.txt": ["service_id", "date", "exception_type"],
    "frequencies.txt": ["trip_id", "start_time", "end_time", "headway_secs"],
}


def _line(index: int) -> int:
    """Line number of a data row; line 1 holds the header."""
    return int(index) + 2


def _error_line(error: Exception) -> int:
    """File line a pandas tokenizer error points at, else the header line."""
    match = re.search(r"\bline (\d+)", str(error))
    return int(match.group(1)) if match else 1


class AbstractFeedReader(BaseModel):
    """
    Abstract class for reading a GTFS feed into a `FeedBundle`.

    Subclasses only provide access to the feed's files; parsing and
    referential checks are shared.

    Attributes:
        path (str): Path to the feed (zip archive or directory).
        city_tag (str): Short identifier of the city the feed belongs to.
        silent (bool): If True, suppresses output messages.
    """

    path: str = Field(..., description="Path to the GTFS zip archive or directory.")

    city_tag: str = Field(..., description="Short identifier of the city.")

    silent: bool = Field(True, description="If True, suppresses output messages.")

    @field_validator("city_tag")
    def validate_city_tag(cls, value):
        value = value.strip()
        if not value:
            raise ValueError("city_tag must not be empty.")
        return value

    @abstractmethod
    def _member_names(self) -> set[str]:
        """Names of the files available in the feed."""
        pass

    @abstractmethod
    def _open_member(self, name: str) -> ContextManager[IO[bytes]]:
        """Opens a file of the feed in binary mode."""
        pass

    def read(self) -> FeedBundle:
        """Reads, parses and cross-checks the feed.

        Returns:
            FeedBundle: The immutable, validated feed.

        Raises:
            MissingMandatoryFile: If one of the mandatory GTFS files is absent.
            MalformedRow: If a row cannot be parsed.
            DanglingReference: If a row references an unknown entity.
        """
        members = self._member_names()
        for name in MANDATORY_FILES:
            if name not in members:
                raise MissingMandatoryFile(name)
        if not any(name in members for name in CALENDAR_FILES):
            raise MissingMandatoryFile(
                "calendar.txt",
                suggestion="A feed needs calendar.txt or calendar_dates.txt.",
            )

        ignored = sorted(
            members - set(MANDATORY_FILES) - set(CALENDAR_FILES) - {"frequencies.txt"}
        )
        if ignored:
            logger.debug(f"{self.city_tag}: ignoring optional files {ignored}")

        calendar = self._parse_calendar(members)
        window = calendar.validity_window()
        if window is None:
            raise FeedError(f"Feed '{self.city_tag}' defines no service dates.")

        stops = self._parse_stops(self._read_table("stops.txt"))
        routes = self._parse_routes(self._read_table("routes.txt"))
        trips = self._parse_trips(self._read_table("trips.txt"), routes, calendar)
        stop_times = self._parse_stop_times(
            self._read_table("stop_times.txt"), trips, stops
        )
        frequencies = None
        if "frequencies.txt" in members:
            frequencies = self._parse_frequencies(
                self._read_table("frequencies.txt"), trips
            )

        feed = FeedBundle(
            city_tag=self.city_tag,
            stops=stops,
            routes=routes,
            trips=trips,
            stop_times=stop_times,
            frequencies=frequencies,
            calendar=calendar,
            validity_window=window,
        )

        if not self.silent:
            self.print_success(feed)

        return feed

    def _read_table(self, name: str) -> pd.DataFrame:
        with self._open_member(name) as handle:
            try:
                table = pd.read_csv(
                    handle,
                    dtype=str,
                    keep_default_na=False,
                    encoding="utf-8-sig",
                )
            except (pd.errors.ParserError, UnicodeDecodeError) as e:
                raise MalformedRow(name, _error_line(e), f"unreadable CSV ({e})")

        table.columns = [column.strip() for column in table.columns]
        for column in table.columns:
            table[column] = table[column].str.strip()

        for column in REQUIRED_COLUMNS.get(name, []):
            if column not in table.columns:
                raise MalformedRow(name, 1, f"missing column '{column}'")

        logger.debug(f"{self.city_tag}: read {len(table)} rows from {name}")
        return table

    @staticmethod
    def _first_bad(mask: pd.Series) -> int:
        return _line(mask[mask].index[0])

    @staticmethod
    def _parse_date(value: str, name: str, index: int) -> dt.date:
        try:
            return dt.datetime.strptime(value, "%Y%m%d").date()
        except ValueError:
            raise MalformedRow(name, _line(index), f"invalid date '{value}'")

    def _parse_calendar(self, members: set[str]) -> ServiceCalendar:
        rules: dict[str, CalendarRule] = {}
        exceptions: list[CalendarException] = []

        if "calendar.txt" in members:
            table = self._read_table("calendar.txt")
            for index, row in table.iterrows():
                flags = [row[day] for day in WEEKDAYS]
                if any(flag not in {"0", "1"} for flag in flags):
                    raise MalformedRow(
                        "calendar.txt", _line(index), "weekday flags must be 0 or 1"
                    )
                start = self._parse_date(row["start_date"], "calendar.txt", index)
                end = self._parse_date(row["end_date"], "calendar.txt", index)
                if end < start:
                    raise MalformedRow(
                        "calendar.txt", _line(index), "end_date precedes start_date"
                    )
                if row["service_id"] in rules:
                    raise MalformedRow(
                        "calendar.txt",
                        _line(index),
                        f"duplicate service_id '{row['service_id']}'",
                    )
                rules[row["service_id"]] = CalendarRule(
                    service_id=row["service_id"],
                    weekdays=tuple(flag == "1" for flag in flags),
                    start_date=start,
                    end_date=end,
                )

        if "calendar_dates.txt" in members:
            table = self._read_table("calendar_dates.txt")
            for index, row in table.iterrows():
                try:
                    exception_type = ExceptionType.from_gtfs(row["exception_type"])
                except ValueError as e:
                    raise MalformedRow("calendar_dates.txt", _line(index), str(e))
                exceptions.append(
                    CalendarException(
                        service_id=row["service_id"],
                        date=self._parse_date(row["date"], "calendar_dates.txt", index),
                        exception_type=exception_type,
                    )
                )

        return ServiceCalendar(rules=rules, exceptions=exceptions)

    def _parse_stops(self, table: pd.DataFrame) -> pd.DataFrame:
        name = "stops.txt"
        if "stop_name" not in table.columns:
            table["stop_name"] = ""
        if "location_type" not in table.columns:
            table["location_type"] = ""

        duplicated = table["stop_id"].duplicated()
        if duplicated.any():
            raise MalformedRow(name, self._first_bad(duplicated), "duplicate stop_id")

        table["location_type"] = table["location_type"].map(
            lambda code: LocationType.from_gtfs(code).value
        )
        located = table["location_type"] != LocationType.OTHER.value
        table["stop_lat"] = pd.to_numeric(table["stop_lat"], errors="coerce")
        table["stop_lon"] = pd.to_numeric(table["stop_lon"], errors="coerce")

        bad_lat = located & ~table["stop_lat"].between(-90.0, 90.0)
        if bad_lat.any():
            raise MalformedRow(
                name, self._first_bad(bad_lat), "stop_lat missing or outside [-90, 90]"
            )
        bad_lon = located & ~table["stop_lon"].between(-180.0, 180.0)
        if bad_lon.any():
            raise MalformedRow(
                name,
                self._first_bad(bad_lon),
                "stop_lon missing or outside [-180, 180]",
            )

        return table[
            ["stop_id", "stop_name", "stop_lat", "stop_lon", "location_type"]
        ].reset_index(drop=True)

    def _parse_routes(self, table: pd.DataFrame) -> pd.DataFrame:
        name = "routes.txt"
        for column in ["route_short_name", "route_long_name"]:
            if column not in table.columns:
                table[column] = ""

        duplicated = table["route_id"].duplicated()
        if duplicated.any():
            raise MalformedRow(name, self._first_bad(duplicated), "duplicate route_id")

        route_type = pd.to_numeric(table["route_type"], errors="coerce")
        bad = route_type.isna() | (route_type % 1 != 0)
        if bad.any():
            raise MalformedRow(name, self._first_bad(bad), "route_type is not an integer")
        table["route_type"] = route_type.astype(int)

        return table[
            ["route_id", "route_type", "route_short_name", "route_long_name"]
        ].reset_index(drop=True)

    def _parse_trips(
        self, table: pd.DataFrame, routes: pd.DataFrame, calendar: ServiceCalendar
    ) -> pd.DataFrame:
        name = "trips.txt"
        if "trip_headsign" not in table.columns:
            table["trip_headsign"] = ""

        duplicated = table["trip_id"].duplicated()
        if duplicated.any():
            raise MalformedRow(name, self._first_bad(duplicated), "duplicate trip_id")

        unknown_routes = set(table["route_id"]) - set(routes["route_id"])
        if unknown_routes:
            raise DanglingReference(name, "route_id", list(unknown_routes))

        unknown_services = set(table["service_id"]) - calendar.service_ids
        if unknown_services:
            raise DanglingReference(name, "service_id", list(unknown_services))

        return table[
            ["trip_id", "route_id", "service_id", "trip_headsign"]
        ].reset_index(drop=True)

    def _parse_stop_times(
        self, table: pd.DataFrame, trips: pd.DataFrame, stops: pd.DataFrame
    ) -> pd.DataFrame:
        name = "stop_times.txt"
        for column in ["arrival_time", "departure_time"]:
            if column not in table.columns:
                table[column] = ""

        table["line"] = [_line(index) for index in table.index]

        sequence = pd.to_numeric(table["stop_sequence"], errors="coerce")
        bad = sequence.isna() | (sequence < 0) | (sequence % 1 != 0)
        if bad.any():
            raise MalformedRow(
                name, self._first_bad(bad), "stop_sequence is not a non-negative integer"
            )
        table["stop_sequence"] = sequence.astype(int)

        table["arrival_secs"], bad_arrival = parse_gtfs_times(table["arrival_time"])
        if bad_arrival.any():
            raise MalformedRow(name, self._first_bad(bad_arrival), "invalid arrival_time")
        table["departure_secs"], bad_departure = parse_gtfs_times(
            table["departure_time"]
        )
        if bad_departure.any():
            raise MalformedRow(
                name, self._first_bad(bad_departure), "invalid departure_time"
            )
        reversed_times = (table["departure_secs"] < table["arrival_secs"]).fillna(False)
        if reversed_times.any():
            raise MalformedRow(
                name, self._first_bad(reversed_times), "departure_time before arrival_time"
            )

        unknown_trips = set(table["trip_id"]) - set(trips["trip_id"])
        if unknown_trips:
            raise DanglingReference(name, "trip_id", list(unknown_trips))
        unknown_stops = set(table["stop_id"]) - set(stops["stop_id"])
        if unknown_stops:
            raise DanglingReference(name, "stop_id", list(unknown_stops))

        table = table.sort_values(["trip_id", "stop_sequence"], kind="stable")
        repeated = table.duplicated(["trip_id", "stop_sequence"])
        if repeated.any():
            raise MalformedRow(
                name,
                int(table.loc[repeated, "line"].iloc[0]),
                "stop_sequence is not strictly increasing within the trip",
            )

        return table[
            [
                "trip_id",
                "stop_id",
                "stop_sequence",
                "arrival_secs",
                "departure_secs",
                "line",
            ]
        ].reset_index(drop=True)

    def _parse_frequencies(
        self, table: pd.DataFrame, trips: pd.DataFrame
    ) -> pd.DataFrame:
        name = "frequencies.txt"
        table["start_secs"], bad_start = parse_gtfs_times(table["start_time"])
        table["end_secs"], bad_end = parse_gtfs_times(table["end_time"])
        bad = bad_start | bad_end | table["start_secs"].isna() | table["end_secs"].isna()
        if bad.any():
            raise MalformedRow(name, self._first_bad(bad), "invalid start_time or end_time")

        headway = pd.to_numeric(table["headway_secs"], errors="coerce")
        bad = headway.isna() | (headway <= 0) | (headway % 1 != 0)
        if bad.any():
            raise MalformedRow(
                name, self._first_bad(bad), "headway_secs is not a positive integer"
            )
        table["headway_secs"] = headway.astype(int)

        unknown_trips = set(table["trip_id"]) - set(trips["trip_id"])
        if unknown_trips:
            raise DanglingReference(name, "trip_id", list(unknown_trips))

        return table[["trip_id", "start_secs", "end_secs", "headway_secs"]].reset_index(
            drop=True
        )

    def print_success(self, feed: FeedBundle) -> None:
        """Prints a success message."""
        print(
            f" Loaded feed '{feed.city_tag}' with {len(feed.stops)} stops, "
            f"{len(feed.routes)} routes and {feed.n_trips} trips."
        )


def load_feed(path: str | Path, city_tag: str, silent: bool = True) -> FeedBundle:
    """Loads a GTFS feed from a zip archive or a directory.

    Args:
        path (str | Path): Path to the feed.
        city_tag (str): Short identifier of the city.
        silent (bool, optional): If False, prints a summary. Defaults to True.

    Raises:
        FeedNotFound: If `path` does not exist.

    Returns:
        FeedBundle: The parsed and validated feed.
    """
    from transit_typology.readers.gtfs_dir import DirectoryFeedReader
    from transit_typology.readers.gtfs_zip import ZipFeedReader

    path = Path(path)
    if not path.exists():
        raise FeedNotFound(str(path))

    if path.is_dir():
        reader: AbstractFeedReader = DirectoryFeedReader(
            path=str(path), city_tag=city_tag, silent=silent
        )
    else:
        reader = ZipFeedReader(path=str(path), city_tag=city_tag, silent=silent)

    return reader.read()
