from __future__ import annotations

import json
import math
from pathlib import Path

import h3
import pandas as pd
from loguru import logger

from transit_typology.errors import InvalidBoundary, InvalidCoordinate, RegionError
from transit_typology.model import (
    CoverageReport,
    FeedBundle,
    LocationType,
    RegionSet,
)
from transit_typology.tools.utility import percentage

DEFAULT_RESOLUTION = 8


def _check_resolution(resolution: int) -> None:
    if not 0 <= resolution <= 15:
        raise RegionError(f"H3 resolution must lie within 0..15, got {resolution}.")


def cell_of(lat: float, lng: float, resolution: int = DEFAULT_RESOLUTION) -> str:
    """Returns the H3 cell containing a WGS84 point.

    Args:
        lat (float): Latitude in degrees.
        lng (float): Longitude in degrees.
        resolution (int, optional): H3 resolution. Defaults to 8.

    Raises:
        InvalidCoordinate: If the point is not a valid WGS84 coordinate.

    Returns:
        str: The cell index as lowercase hexadecimal string.
    """
    _check_resolution(resolution)
    if not (math.isfinite(lat) and -90.0 <= lat <= 90.0):
        raise InvalidCoordinate(f"Latitude {lat} outside [-90, 90].")
    if not (math.isfinite(lng) and -180.0 <= lng <= 180.0):
        raise InvalidCoordinate(f"Longitude {lng} outside [-180, 180].")

    return h3.latlng_to_cell(lat, lng, resolution)


def _platforms(feed: FeedBundle) -> pd.DataFrame:
    return feed.stops[feed.stops["location_type"] == LocationType.PLATFORM_OR_STOP.value]


def _stop_cells(feed: FeedBundle, resolution: int) -> pd.Series:
    """Cell of every platform/stop record, indexed by stop_id."""
    platforms = _platforms(feed)
    cells = {}
    for row in platforms.itertuples(index=False):
        try:
            cells[row.stop_id] = cell_of(row.stop_lat, row.stop_lon, resolution)
        except InvalidCoordinate as e:
            raise InvalidCoordinate(f"Stop {row.stop_id} of '{feed.city_tag}': {e}")
    return pd.Series(cells, dtype=object)


def assign_stops(feed: FeedBundle, resolution: int = DEFAULT_RESOLUTION) -> RegionSet:
    """Groups the platform/stop records of a feed by H3 cell.

    Only cells holding at least one stop become regions. Stations and other
    location types are not assigned.
    """
    _check_resolution(resolution)
    cells = _stop_cells(feed, resolution)
    if cells.empty:
        logger.warning(f"{feed.city_tag}: no platform stops to assign")
        return RegionSet(resolution=resolution)

    regions = {
        str(cell): sorted(group.index)
        for cell, group in cells.groupby(cells, sort=True)
    }
    logger.debug(
        f"{feed.city_tag}: {len(cells)} stops in {len(regions)} regions at resolution {resolution}"
    )
    return RegionSet(resolution=resolution, regions={feed.city_tag: regions})


def stops_per_cell(feed: FeedBundle, resolution: int = DEFAULT_RESOLUTION) -> pd.Series:
    """Number of stops in every occupied cell, sorted by cell id."""
    cells = _stop_cells(feed, resolution)
    return cells.value_counts().sort_index().rename("stops")


def empty_percentage(total: int, empty: int) -> float:
    """Share of empty cells in percent, rounded half-up to two decimals."""
    if total <= 0:
        raise ValueError("Total cell count must be positive.")
    if not 0 <= empty <= total:
        raise ValueError(f"Empty cell count {empty} outside 0..{total}.")
    return percentage(empty, total)


def _geometries(boundary: dict) -> list[dict]:
    """Polygon and multipolygon geometries of a GeoJSON object."""
    kind = boundary.get("type")
    match kind:
        case "FeatureCollection":
            return [
                geometry
                for feature in boundary.get("features", [])
                for geometry in _geometries(feature)
            ]
        case "Feature":
            geometry = boundary.get("geometry")
            if geometry is None:
                raise InvalidBoundary("Boundary feature has no geometry.")
            return _geometries(geometry)
        case "Polygon" | "MultiPolygon":
            return [boundary]
        case _:
            raise InvalidBoundary(
                f"Unsupported boundary type '{kind}'.",
                suggestion="Use a GeoJSON Polygon or MultiPolygon in WGS84.",
            )


def _check_ring(ring: list) -> None:
    if len(ring) < 4:
        raise InvalidBoundary(f"Boundary ring has {len(ring)} positions, at least 4 needed.")
    if list(ring[0]) != list(ring[-1]):
        raise InvalidBoundary("Boundary ring is not closed.")
    for position in ring:
        lng, lat = position[0], position[1]
        if not (-180.0 <= lng <= 180.0 and -90.0 <= lat <= 90.0):
            raise InvalidBoundary(f"Boundary position {position} is not a WGS84 lng,lat pair.")


def boundary_cells(boundary: dict, resolution: int = DEFAULT_RESOLUTION) -> set[str]:
    """Cells whose centers lie inside a GeoJSON boundary."""
    _check_resolution(resolution)
    geometries = _geometries(boundary)
    if not geometries:
        raise InvalidBoundary("Boundary contains no polygon.")

    cells: set[str] = set()
    for geometry in geometries:
        polygons = (
            [geometry["coordinates"]]
            if geometry["type"] == "Polygon"
            else geometry["coordinates"]
        )
        for polygon in polygons:
            if not polygon:
                raise InvalidBoundary("Boundary polygon has no rings.")
            for ring in polygon:
                _check_ring(ring)
        try:
            cells.update(h3.geo_to_cells(geometry, resolution))
        except Exception as e:
            raise InvalidBoundary(f"H3 could not cover the boundary: {e}")
    return cells


def coverage_stats(
    feed: FeedBundle, boundary: dict, resolution: int = DEFAULT_RESOLUTION
) -> CoverageReport:
    """Counts the cells covering a boundary and how many of them hold no stop.

    Args:
        feed (FeedBundle): The city's feed.
        boundary (dict): GeoJSON Polygon, MultiPolygon, Feature or
            FeatureCollection in WGS84.
        resolution (int, optional): H3 resolution. Defaults to 8.

    Raises:
        InvalidBoundary: If the boundary is malformed or covers no cell.

    Returns:
        CoverageReport: Total, occupied and empty cell counts.
    """
    cells = boundary_cells(boundary, resolution)
    if not cells:
        raise InvalidBoundary(
            f"Boundary covers no cell at resolution {resolution}.",
            suggestion="Use a finer resolution or a larger boundary.",
        )

    occupied = set(_stop_cells(feed, resolution)) & cells
    empty = len(cells) - len(occupied)
    return CoverageReport(
        city_tag=feed.city_tag,
        resolution=resolution,
        total_cells=len(cells),
        cells_with_stops=len(occupied),
        empty_cells=empty,
        empty_percentage=empty_percentage(len(cells), empty),
    )


def resolution_comparison(
    feed: FeedBundle,
    boundary: dict,
    resolutions: tuple[int, ...] = (8, 9),
) -> list[CoverageReport]:
    """One coverage report per resolution, in the given order."""
    return [coverage_stats(feed, boundary, resolution) for resolution in resolutions]


def load_boundary(path: str | Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as file:
            return json.load(file)
    except json.JSONDecodeError as e:
        raise InvalidBoundary(f"Boundary file '{path}' is not valid JSON: {e}")
