from __future__ import annotations

import h3

from transit_typology.errors import GeometryFailure


def cell_polygon(cell: str) -> dict:
    """GeoJSON Polygon of an H3 cell with a closed lng,lat ring."""
    if not h3.is_valid_cell(cell):
        raise GeometryFailure(f"'{cell}' is not a valid H3 cell.")
    try:
        boundary = h3.cell_to_boundary(cell)
    except Exception as e:
        raise GeometryFailure(f"No boundary for cell '{cell}': {e}")

    ring = [[lng, lat] for lat, lng in boundary]
    ring.append(list(ring[0]))
    return {"type": "Polygon", "coordinates": [ring]}


def feature(geometry: dict, properties: dict) -> dict:
    return {"type": "Feature", "geometry": geometry, "properties": properties}


def feature_collection(features: list[dict]) -> dict:
    return {"type": "FeatureCollection", "features": features}
