import h3
import numpy as np
import pandas as pd
import pytest

from transit_typology.errors import EmptyCity, GeometryFailure, MissingCut, UnknownLabel
from transit_typology.ioutils.geojson import cell_polygon
from transit_typology.model import ClusterCut, DendrogramMerge, FeatureFamily, RegionSet
from transit_typology.tools.report import (
    box_stats,
    export_dendrogram,
    export_geojson,
    hour_profile,
    profiles_frame,
    region_counts,
    scatter_data,
    share_table,
    typology_document,
    typology_levels,
)

CELLS = [h3.latlng_to_cell(51.1 + 0.02 * i, 17.03, 8) for i in range(4)]


def test_share_table_percentages():
    labels = [0] * 66 + [1] * 54
    cut = ClusterCut(k=2, labels=labels)

    table = share_table(cut, ["wro"] * 120)

    assert table.percentages == {0: {"wro": 55.0}, 1: {"wro": 45.0}}


def test_share_table_columns_sum_to_100():
    cut = ClusterCut(k=3, labels=[0, 1, 2, 0, 1, 2, 2])
    cities = ["a", "a", "a", "b", "b", "b", "b"]

    table = share_table(cut, cities)
    frame = table.to_frame()

    assert frame.index.name == "label"
    assert list(frame.columns) == ["a", "b"]
    assert frame["a"].tolist() == [33.33, 33.33, 33.33]
    assert frame["b"].tolist() == [25.0, 25.0, 50.0]
    for city in table.cities:
        assert sum(table.percentages[label][city] for label in range(3)) == pytest.approx(
            100.0, abs=0.01 * 3
        )


def test_share_table_empty_city():
    cut = ClusterCut(k=1, labels=[0, 0])

    with pytest.raises(EmptyCity):
        share_table(cut, ["a", "a"], cities=["a", "b"])


def test_box_stats_tukey():
    stats = box_stats([1, 2, 3, 4, 100], FeatureFamily.TRIPS, 7)

    assert (stats.q1, stats.median, stats.q3) == (2.0, 3.0, 4.0)
    assert stats.whisker_low == 1.0
    assert stats.whisker_high == 4.0
    assert stats.outliers == 1


def test_box_stats_single_value():
    stats = box_stats([5], FeatureFamily.DIRECTIONS, 6)

    assert (stats.whisker_low, stats.median, stats.whisker_high) == (5.0, 5.0, 5.0)
    assert stats.outliers == 0


@pytest.fixture
def raw_features():
    hours = (6, 7)
    rows = [
        ["r0", "a", 1, 2, 1, 1],
        ["r1", "a", 3, 4, 1, 2],
        ["r2", "b", 10, 0, 2, 0],
    ]
    columns = ["region_id", "city", "trips_at_6", "trips_at_7", "directions_at_6", "directions_at_7"]
    return hours, pd.DataFrame(rows, columns=columns)


def test_hour_profile(raw_features):
    hours, frame = raw_features
    cut = ClusterCut(k=2, labels=[0, 0, 1])

    profile = hour_profile(cut, frame, 0, hours)

    assert profile.size == 2
    assert [(box.family, box.hour) for box in profile.stats] == [
        (FeatureFamily.TRIPS, 6),
        (FeatureFamily.TRIPS, 7),
        (FeatureFamily.DIRECTIONS, 6),
        (FeatureFamily.DIRECTIONS, 7),
    ]
    assert profile.stats[0].median == 2.0
    assert profile.stats[1].median == 3.0


def test_hour_profile_unknown_label(raw_features):
    hours, frame = raw_features

    with pytest.raises(UnknownLabel):
        hour_profile(ClusterCut(k=2, labels=[0, 0, 1]), frame, 2, hours)


def test_profiles_frame(raw_features):
    hours, frame = raw_features
    cut = ClusterCut(k=2, labels=[0, 0, 1])

    profiles = profiles_frame([hour_profile(cut, frame, label, hours) for label in range(2)])

    assert len(profiles) == 8
    assert set(profiles["label"]) == {0, 1}


def test_scatter_data():
    aggregates = pd.DataFrame(
        {
            "region_id": ["r0", "r1", "r2"],
            "city": ["a", "a", "b"],
            "sum_trips": [3, 7, 10],
            "directions_whole_day": [1, 2, 2],
        }
    )
    cuts = {2: ClusterCut(k=2, labels=[0, 0, 1]), 3: ClusterCut(k=3, labels=[0, 2, 1])}

    frame = scatter_data(cuts, aggregates)

    assert list(frame.columns[-2:]) == ["label_k2", "label_k3"]
    assert frame["label_k3"].tolist() == [0, 2, 1]


def test_typology_levels():
    cuts = {
        2: ClusterCut(k=2, labels=[0, 0, 1, 1]),
        3: ClusterCut(k=3, labels=[0, 2, 1, 1]),
        4: ClusterCut(k=4, labels=[0, 2, 1, 3]),
    }
    names = {2: {0: "urban", 1: "suburban"}, 4: {3: "edge", 9: "ignored"}}

    levels = typology_levels(cuts, [4, 2], names)

    assert [(level.level, level.k) for level in levels] == [(1, 2), (2, 4)]
    assert levels[0].names == {0: "urban", 1: "suburban"}
    assert levels[0].parents is None
    assert levels[1].parents == {0: 0, 1: 1, 2: 0, 3: 1}
    assert levels[1].names == {3: "edge"}
    document = typology_document(levels)
    assert document["levels"][1]["parents"] == {"0": 0, "1": 1, "2": 0, "3": 1}


def test_typology_missing_cut():
    with pytest.raises(MissingCut):
        typology_levels({2: ClusterCut(k=2, labels=[0, 1])}, [2, 8])


def test_export_geojson():
    keys = pd.DataFrame({"region_id": CELLS[:3], "city": ["a", "a", "b"]})
    cut = ClusterCut(k=2, labels=[1, 0, 1])

    document = export_geojson(cut, keys)

    assert document["type"] == "FeatureCollection"
    assert len(document["features"]) == 3
    first = document["features"][0]
    assert first["properties"] == {"region_id": CELLS[0], "city": "a", "label": 1}
    ring = first["geometry"]["coordinates"][0]
    assert first["geometry"]["type"] == "Polygon"
    assert ring[0] == ring[-1]
    assert len(ring) == 7
    # positions are lng, lat
    lat, lng = h3.cell_to_latlng(CELLS[0])
    assert np.mean([p[0] for p in ring[:-1]]) == pytest.approx(lng, abs=1e-3)
    assert np.mean([p[1] for p in ring[:-1]]) == pytest.approx(lat, abs=1e-3)


def test_export_geojson_empty_cut():
    keys = pd.DataFrame({"region_id": [], "city": []})

    document = export_geojson(ClusterCut(k=1, labels=[]), keys)

    assert document == {"type": "FeatureCollection", "features": []}


def test_invalid_cell():
    with pytest.raises(GeometryFailure):
        cell_polygon("not-a-cell")


def test_export_dendrogram():
    merges = [
        DendrogramMerge(step=0, left=0, right=1, height=1.0, size=2),
        DendrogramMerge(step=1, left=2, right=3, height=2.5, size=3),
    ]

    frame = export_dendrogram(merges)

    assert frame["cumulative_height"].tolist() == [1.0, 3.5]


def test_region_counts():
    regions = RegionSet(
        resolution=8,
        regions={"b": {CELLS[0]: ["s"]}, "a": {CELLS[1]: ["s"], CELLS[2]: ["t"]}},
    )

    frame = region_counts(regions)

    assert frame.to_dict(orient="records") == [
        {"city": "a", "regions": 2},
        {"city": "b", "regions": 1},
    ]
