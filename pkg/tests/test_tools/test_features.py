import datetime as dt

import pytest

from transit_typology.errors import UnassignedStop
from transit_typology.model import DepartureEvent, RegionFeatureVector, RegionSet
from transit_typology.tools.feed import departure_events, events_to_records
from transit_typology.tools.features import (
    aggregate,
    aggregate_all,
    aggregates_frame,
    build_features,
    features_frame,
    vectors_from_frame,
)
from transit_typology.tools.regions import assign_stops, cell_of

WEDNESDAY = dt.date(2024, 1, 3)


@pytest.fixture
def wro(minicity):
    events = departure_events(minicity, WEDNESDAY)
    regions = assign_stops(minicity)
    return events, regions


def _by_region(vectors):
    return {vector.region: vector for vector in vectors}


def test_feature_vectors(wro):
    events, regions = wro

    vectors = _by_region(build_features(events, regions))

    rynek = vectors[cell_of(51.11, 17.032)]
    assert len(rynek.values) == 34
    assert rynek.trips(7) == 2
    assert rynek.directions(7) == 1
    assert rynek.trips(8) == 1
    assert rynek.directions(8) == 1
    assert sum(rynek.trips_at) == 3

    dworzec = vectors[cell_of(51.098, 17.036)]
    assert dworzec.trips(8) == 3
    assert dworzec.directions(8) == 1
    assert sum(dworzec.trips_at) == 3


def test_records_and_frames_agree(wro):
    events, regions = wro

    assert build_features(events_to_records(events), regions) == build_features(
        events, regions
    )


def test_vectors_are_sorted_and_complete(minicity, poznan):
    events = departure_events(minicity, WEDNESDAY)
    regions = assign_stops(minicity).merge(assign_stops(poznan))

    vectors = build_features(events, regions)

    keys = [(vector.region, vector.city_tag) for vector in vectors]
    assert keys == sorted(keys)
    assert len(vectors) == 7
    # regions without any departure are all zero
    assert all(sum(v.values) == 0 for v in vectors if v.city_tag == "poz")


def test_directions_never_exceed_trips(poznan):
    events = departure_events(poznan, WEDNESDAY)

    for vector in build_features(events, assign_stops(poznan)):
        assert all(d <= t for t, d in zip(vector.trips_at, vector.directions_at))


def test_blank_headsigns_are_no_direction(wro):
    events, regions = wro
    events = events.copy()
    events.loc[events["trip_id"] == "T4", "headsign"] = "  "

    vectors = _by_region(build_features(events, regions))

    dworzec = vectors[cell_of(51.098, 17.036)]
    assert dworzec.trips(8) == 3
    assert dworzec.directions(8) == 0


def test_events_outside_window_are_ignored(wro):
    events, regions = wro

    vectors = _by_region(build_features(events, regions, hours=(8, 8)))

    rynek = vectors[cell_of(51.11, 17.032)]
    assert rynek.trips_at == [1]
    assert rynek.directions_at == [1]


def test_unassigned_stop(wro):
    events, _ = wro

    with pytest.raises(UnassignedStop):
        build_features(events, RegionSet(resolution=8, regions={"wro": {"x": ["S1"]}}))


def test_aggregates(wro):
    events, regions = wro
    vectors = build_features(events, regions)

    aggregates = {a.region: a for a in aggregate_all(vectors, events, regions)}

    rynek = aggregates[cell_of(51.11, 17.032)]
    assert rynek.sum_trips == 3
    assert rynek.directions_whole_day == 2
    dworzec = aggregates[cell_of(51.098, 17.036)]
    assert dworzec.sum_trips == 3
    assert dworzec.directions_whole_day == 1


def test_headsign_repeated_across_hours_counts_once():
    vector = RegionFeatureVector(
        region="r",
        city_tag="c",
        hours=(6, 7),
        trips_at=[1, 1],
        directions_at=[1, 1],
    )
    events = [
        DepartureEvent(
            city_tag="c", stop_id="s", lat=0.0, lng=0.0, hour_bucket=h, headsign="X", trip_id=t
        )
        for h, t in [(6, "a"), (7, "b")]
    ]

    result = aggregate(vector, events)

    assert result.sum_trips == 2
    assert result.directions_whole_day == 1


def test_vector_invariants():
    with pytest.raises(ValueError):
        RegionFeatureVector(region="r", city_tag="c", trips_at=[0], directions_at=[0])
    with pytest.raises(ValueError):
        RegionFeatureVector(
            region="r", city_tag="c", hours=(6, 6), trips_at=[1], directions_at=[2]
        )


def test_frame_round_trip(wro):
    events, regions = wro
    vectors = build_features(events, regions)

    frame = features_frame(vectors)

    assert list(frame.columns[:4]) == ["region_id", "city", "trips_at_6", "trips_at_7"]
    assert frame.shape == (2, 36)
    assert vectors_from_frame(frame) == vectors
    assert list(aggregates_frame(aggregate_all(vectors, events, regions)).columns) == [
        "region_id",
        "city",
        "sum_trips",
        "directions_whole_day",
    ]
