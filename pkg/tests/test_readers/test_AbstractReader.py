import datetime as dt
import zipfile

import pytest
from pydantic import ValidationError

from transit_typology.errors import (
    DanglingReference,
    FeedError,
    FeedNotFound,
    MalformedRow,
    MissingMandatoryFile,
)
from transit_typology.model import LocationType
from transit_typology.readers import DirectoryFeedReader, ZipFeedReader, load_feed


def _replace(path, old, new):
    text = path.read_text(encoding="utf-8")
    assert old in text
    path.write_text(text.replace(old, new), encoding="utf-8")


def test_read_directory(minicity):
    assert minicity.city_tag == "wro"
    assert len(minicity.stops) == 4
    assert len(minicity.routes) == 2
    assert minicity.n_trips == 4
    assert len(minicity.stop_times) == 9
    assert len(minicity.frequencies) == 1
    assert minicity.validity_window == (dt.date(2024, 1, 1), dt.date(2024, 12, 31))


def test_stop_location_types(minicity):
    types = dict(zip(minicity.stops["stop_id"], minicity.stops["location_type"]))
    assert types["S1"] == LocationType.PLATFORM_OR_STOP.value
    # blank location_type means a platform
    assert types["S3"] == LocationType.PLATFORM_OR_STOP.value
    assert types["P1"] == LocationType.STATION.value


def test_times_are_seconds(minicity):
    first = minicity.stop_times.iloc[0]
    assert first["trip_id"] == "T1"
    assert first["departure_secs"] == 7 * 3600 + 10 * 60
    assert first["line"] == 2


def test_read_zip_matches_directory(minicity_zip, minicity):
    feed = load_feed(minicity_zip, "wro")

    assert feed.stops.equals(minicity.stops)
    assert feed.stop_times.equals(minicity.stop_times)
    assert feed.validity_window == minicity.validity_window


def test_read_zip_with_enclosing_folder(tmp_path, minicity_dir):
    target = tmp_path / "nested.zip"
    with zipfile.ZipFile(target, "w") as archive:
        for file in sorted(minicity_dir.glob("*.txt")):
            archive.write(file, f"gtfs/{file.name}")

    feed = ZipFeedReader(path=str(target), city_tag="wro").read()

    assert feed.n_trips == 4


def test_not_a_zip(tmp_path):
    path = tmp_path / "feed.zip"
    path.write_text("not a zip")

    with pytest.raises(FeedError, match="not a zip archive"):
        load_feed(path, "wro")


def test_missing_path(tmp_path):
    with pytest.raises(FeedNotFound) as info:
        load_feed(tmp_path / "nowhere", "wro")

    assert info.value.exit_code == 3
    assert "feed_path" in str(info.value)


def test_empty_city_tag(minicity_dir):
    with pytest.raises(ValidationError):
        DirectoryFeedReader(path=str(minicity_dir), city_tag="  ")


def test_print_success(minicity_dir, capsys):
    load_feed(minicity_dir, "wro", silent=False)

    assert "Loaded feed 'wro' with 4 stops" in capsys.readouterr().out


@pytest.mark.parametrize("name", ["agency.txt", "stops.txt", "stop_times.txt"])
def test_missing_mandatory_file(feed_copy, name):
    (feed_copy / name).unlink()

    with pytest.raises(MissingMandatoryFile) as info:
        load_feed(feed_copy, "wro")

    assert info.value.filename == name


def test_calendar_dates_alone_suffice(feed_copy):
    (feed_copy / "calendar.txt").unlink()
    (feed_copy / "calendar_dates.txt").write_text(
        "service_id,date,exception_type\n"
        "WK,20240103,1\n"
        "WE,20240106,1\n",
        encoding="utf-8",
    )

    feed = load_feed(feed_copy, "wro")

    assert feed.validity_window == (dt.date(2024, 1, 3), dt.date(2024, 1, 6))


def test_missing_both_calendar_files(feed_copy):
    (feed_copy / "calendar.txt").unlink()
    (feed_copy / "calendar_dates.txt").unlink()

    with pytest.raises(MissingMandatoryFile, match="calendar_dates.txt"):
        load_feed(feed_copy, "wro")


def test_malformed_time_reports_line(feed_copy):
    _replace(feed_copy / "stop_times.txt", "T2,08:30:00,08:30:00", "T2,8h30,8h30")

    with pytest.raises(MalformedRow) as info:
        load_feed(feed_copy, "wro")

    assert info.value.filename == "stop_times.txt"
    assert info.value.line == 6


def test_departure_before_arrival(feed_copy):
    _replace(feed_copy / "stop_times.txt", "T1,07:40:00,07:40:00", "T1,07:40:00,07:39:00")

    with pytest.raises(MalformedRow, match="departure_time before arrival_time"):
        load_feed(feed_copy, "wro")


def test_repeated_stop_sequence(feed_copy):
    _replace(feed_copy / "stop_times.txt", "T1,08:05:00,08:05:00,S3,3", "T1,08:05:00,08:05:00,S3,2")

    with pytest.raises(MalformedRow, match="strictly increasing"):
        load_feed(feed_copy, "wro")


def test_times_past_midnight_are_kept(feed_copy):
    _replace(feed_copy / "stop_times.txt", "T3,09:20:00,09:20:00", "T3,25:20:00,25:20:00")

    feed = load_feed(feed_copy, "wro")

    last = feed.stop_times[feed.stop_times["trip_id"] == "T3"].iloc[-1]
    assert last["arrival_secs"] == 25 * 3600 + 20 * 60


def test_dangling_stop(feed_copy):
    _replace(feed_copy / "stop_times.txt", "T2,08:30:00,08:30:00,S3", "T2,08:30:00,08:30:00,S9")

    with pytest.raises(DanglingReference) as info:
        load_feed(feed_copy, "wro")

    assert info.value.column == "stop_id"
    assert info.value.ids == ["S9"]


def test_dangling_service(feed_copy):
    _replace(feed_copy / "trips.txt", "R2,WE,T3", "R2,HOLIDAY,T3")

    with pytest.raises(DanglingReference, match="HOLIDAY"):
        load_feed(feed_copy, "wro")


def test_dangling_trip(feed_copy):
    with open(feed_copy / "stop_times.txt", "a", encoding="utf-8") as file:
        file.write("T9,10:00:00,10:00:00,S1,1\n")

    with pytest.raises(DanglingReference) as info:
        load_feed(feed_copy, "wro")

    assert info.value.filename == "stop_times.txt"
    assert info.value.column == "trip_id"
    assert info.value.ids == ["T9"]


def test_extra_field_reports_line(feed_copy):
    _replace(feed_copy / "stop_times.txt", "T2,08:30:00,08:30:00,S3,2", "T2,08:30:00,08:30:00,S3,2,x")

    with pytest.raises(MalformedRow, match="unreadable CSV") as info:
        load_feed(feed_copy, "wro")

    assert info.value.filename == "stop_times.txt"
    assert info.value.line == 6


def test_missing_column(feed_copy):
    _replace(feed_copy / "stops.txt", "stop_lat", "latitude")

    with pytest.raises(MalformedRow, match="missing column 'stop_lat'") as info:
        load_feed(feed_copy, "wro")

    assert info.value.line == 1


def test_bad_weekday_flag(feed_copy):
    _replace(feed_copy / "calendar.txt", "WE,0,0,0,0,0,1,1", "WE,0,0,0,0,0,yes,1")

    with pytest.raises(MalformedRow) as info:
        load_feed(feed_copy, "wro")

    assert info.value.filename == "calendar.txt"
    assert info.value.line == 3


def test_optional_files_are_ignored(feed_copy):
    (feed_copy / "shapes.txt").write_text("shape_id\nX\n", encoding="utf-8")

    feed = load_feed(feed_copy, "wro")

    assert feed.n_trips == 4
