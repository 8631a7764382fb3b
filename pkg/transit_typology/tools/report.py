from __future__ import annotations

from collections import Counter

import numpy as np
import pandas as pd

from transit_typology.errors import EmptyCity, MissingCut, UnknownLabel
from transit_typology.ioutils.geojson import cell_polygon, feature, feature_collection
from transit_typology.model import (
    DEFAULT_HOURS,
    BoxStats,
    ClusterCut,
    DendrogramMerge,
    FeatureFamily,
    HourProfileStats,
    RegionSet,
    ShareTable,
    TypologyLevel,
    hour_range,
)
from transit_typology.tools.clustering import merges_frame
from transit_typology.tools.utility import percentage

WHISKER_SPAN = 1.5
PROFILE_COLUMNS = [
    "k",
    "label",
    "size",
    "family",
    "hour",
    "median",
    "q1",
    "q3",
    "whisker_low",
    "whisker_high",
    "outliers",
]


def share_table(
    cut: ClusterCut, city_tags: list[str], cities: list[str] | None = None
) -> ShareTable:
    """Percentage of every city's regions falling into each cluster.

    Args:
        cut (ClusterCut): Flat partition of the regions.
        city_tags (list[str]): City of every region, in leaf order.
        cities (list[str] | None, optional): Cities to report, in column order.
            Defaults to the sorted cities of `city_tags`.

    Raises:
        EmptyCity: If a requested city has no region.

    Returns:
        ShareTable: Percentages rounded half-up to two decimals.
    """
    if len(city_tags) != len(cut.labels):
        raise ValueError(
            f"{len(city_tags)} city tags for {len(cut.labels)} labelled regions."
        )
    cities = cities if cities is not None else sorted(set(city_tags))
    totals = Counter(city_tags)
    counts = Counter(zip(cut.labels, city_tags))

    percentages: dict[int, dict[str, float]] = {label: {} for label in range(cut.k)}
    for city in cities:
        if totals[city] == 0:
            raise EmptyCity(f"City '{city}' has no region in the cut.")
        for label in range(cut.k):
            percentages[label][city] = percentage(counts[(label, city)], totals[city])

    return ShareTable(k=cut.k, cities=cities, percentages=percentages)


def box_stats(values, family: FeatureFamily, hour: int) -> BoxStats:
    """Tukey box of one sample: linear quartiles and 1.5 IQR whiskers."""
    values = np.asarray(values, dtype=np.float64)
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    spread = WHISKER_SPAN * (q3 - q1)
    low_fence, high_fence = q1 - spread, q3 + spread
    inside = values[(values >= low_fence) & (values <= high_fence)]
    return BoxStats(
        family=family,
        hour=hour,
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        whisker_low=float(inside.min()),
        whisker_high=float(inside.max()),
        outliers=int(values.size - inside.size),
    )


def hour_profile(
    cut: ClusterCut,
    raw_features: pd.DataFrame,
    label: int,
    hours: tuple[int, int] = DEFAULT_HOURS,
) -> HourProfileStats:
    """Per-hour box statistics of a cluster's raw features.

    Args:
        cut (ClusterCut): Flat partition of the regions.
        raw_features (pd.DataFrame): features.csv rows in leaf order.
        label (int): Cluster to describe.
        hours (tuple[int, int], optional): Defaults to (6, 22).

    Raises:
        UnknownLabel: If `label` is not a label of the cut.
    """
    members = cut.members(label)
    if not members:
        raise UnknownLabel(f"Label {label} does not exist in the {cut.k}-cut.")

    rows = raw_features.iloc[members]
    stats = [
        box_stats(rows[f"{family.value}_at_{h}"], family, h)
        for family in FeatureFamily
        for h in hour_range(hours)
    ]
    return HourProfileStats(k=cut.k, label=label, size=len(members), stats=stats)


def profiles_frame(profiles: list[HourProfileStats]) -> pd.DataFrame:
    rows = [
        [
            profile.k,
            profile.label,
            profile.size,
            box.family.value,
            box.hour,
            box.median,
            box.q1,
            box.q3,
            box.whisker_low,
            box.whisker_high,
            box.outliers,
        ]
        for profile in profiles
        for box in profile.stats
    ]
    return pd.DataFrame(rows, columns=PROFILE_COLUMNS)


def scatter_data(cuts: dict[int, ClusterCut], aggregates: pd.DataFrame) -> pd.DataFrame:
    """Whole-day aggregates with one label column per requested k.

    `aggregates` holds region_id, city, sum_trips and directions_whole_day in
    leaf order.
    """
    frame = aggregates[
        ["region_id", "city", "sum_trips", "directions_whole_day"]
    ].reset_index(drop=True)
    for k, flat in sorted(cuts.items()):
        if len(flat.labels) != len(frame):
            raise ValueError(f"The {k}-cut labels {len(flat.labels)} of {len(frame)} regions.")
        frame[f"label_k{k}"] = flat.labels
    return frame


def typology_levels(
    cuts: dict[int, ClusterCut],
    level_spec: list[int],
    names: dict[int, dict[int, str]] | None = None,
) -> list[TypologyLevel]:
    """Named interpretation layers over selected cuts.

    Levels are ordered by ascending k. Every label of a level points to the
    label of the previous level that contains its regions.

    Raises:
        MissingCut: If a requested k has no cut.
    """
    names = names or {}
    ks = sorted(set(level_spec))
    missing = [k for k in ks if k not in cuts]
    if missing:
        raise MissingCut(
            f"No cut for k = {missing}.", suggestion="Add these ks to the report ks."
        )

    levels = []
    previous: ClusterCut | None = None
    for level, k in enumerate(ks, start=1):
        current = cuts[k]
        parents = None
        if previous is not None:
            parents = {}
            for label, parent in zip(current.labels, previous.labels):
                if parents.setdefault(label, parent) != parent:
                    raise ValueError(
                        f"The {k}-cut is not nested in the {previous.k}-cut."
                    )
            parents = dict(sorted(parents.items()))
        level_names = {
            label: name for label, name in names.get(k, {}).items() if label < k
        }
        levels.append(TypologyLevel(level=level, k=k, names=level_names, parents=parents))
        previous = current
    return levels


def typology_document(levels: list[TypologyLevel]) -> dict:
    return {"levels": [level.model_dump(mode="json") for level in levels]}


def export_geojson(cut: ClusterCut, keys: pd.DataFrame) -> dict:
    """One hexagon feature per region with its cluster label.

    Args:
        cut (ClusterCut): Flat partition of the regions.
        keys (pd.DataFrame): region_id and city of every region, in leaf order.

    Raises:
        GeometryFailure: If a region id is not a valid H3 cell.
    """
    features = [
        feature(
            cell_polygon(str(region)),
            {"region_id": str(region), "city": str(city), "label": int(label)},
        )
        for region, city, label in zip(keys["region_id"], keys["city"], cut.labels)
    ]
    return feature_collection(features)


def export_dendrogram(merges: list[DendrogramMerge]) -> pd.DataFrame:
    """The merge table with an extra running sum of merge heights."""
    frame = merges_frame(merges)
    frame["cumulative_height"] = frame["height"].cumsum()
    return frame


def region_counts(regions: RegionSet) -> pd.DataFrame:
    """Number of regions in every city."""
    return pd.DataFrame(
        [[city, len(regions.cells(city))] for city in regions.cities],
        columns=["city", "regions"],
    )
