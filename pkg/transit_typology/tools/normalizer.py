from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from transit_typology.errors import DegenerateBlock, EmptyMatrix, UnknownCity
from transit_typology.model import (
    DEFAULT_HOURS,
    GLOBAL_SCOPE,
    FeatureFamily,
    NormalizationMode,
    NormalizationParams,
    RegionFeatureVector,
    ScopeRange,
    hour_range,
)
from transit_typology.tools.features import features_frame


def block_columns(hours: tuple[int, int], family: FeatureFamily) -> list[str]:
    return [f"{family.value}_at_{h}" for h in hour_range(hours)]


def _as_frame(features: pd.DataFrame | list[RegionFeatureVector]) -> pd.DataFrame:
    if isinstance(features, pd.DataFrame):
        return features
    return features_frame(features)


def fit(
    features: pd.DataFrame | list[RegionFeatureVector],
    mode: NormalizationMode = NormalizationMode.GLOBAL,
    hours: tuple[int, int] = DEFAULT_HOURS,
) -> NormalizationParams:
    """Fits one min/max pair per feature block and scope.

    The 17 hourly columns of a block are pooled, so the day shape of a region
    survives scaling. In global mode the scope is the whole corpus, in local
    mode every city is scaled on its own.

    Args:
        features (pd.DataFrame | list[RegionFeatureVector]): Raw features with a
            `city` column (features.csv layout) or feature vectors.
        mode (NormalizationMode, optional): Defaults to global.
        hours (tuple[int, int], optional): Hour window of the features.
            Defaults to (6, 22).

    Raises:
        EmptyMatrix: If there are no regions to fit on.

    Returns:
        NormalizationParams: The fitted ranges.
    """
    frame = _as_frame(features)
    if frame.empty:
        raise EmptyMatrix("Cannot fit normalization on an empty feature matrix.")

    if mode == NormalizationMode.GLOBAL:
        scopes = {GLOBAL_SCOPE: frame}
    else:
        scopes = {str(city): group for city, group in frame.groupby("city", sort=True)}

    blocks: dict[str, dict[str, ScopeRange]] = {}
    for family in FeatureFamily:
        columns = block_columns(hours, family)
        blocks[family.value] = {}
        for scope, group in scopes.items():
            values = group[columns].to_numpy(dtype=np.float64)
            blocks[family.value][scope] = ScopeRange(
                min=float(values.min()), max=float(values.max())
            )
            logger.debug(
                f"{family.value}/{scope}: range {values.min()}..{values.max()}"
            )

    return NormalizationParams(mode=mode, hours=hours, blocks=blocks)


def _scope(params: NormalizationParams, city_tag: str) -> str:
    if params.mode == NormalizationMode.GLOBAL:
        return GLOBAL_SCOPE
    if city_tag not in params.blocks[FeatureFamily.TRIPS.value]:
        raise UnknownCity(
            f"City '{city_tag}' has no fitted range in local normalization.",
            suggestion="Refit the normalization including this city.",
        )
    return city_tag


def _scale(values: np.ndarray, scope_range: ScopeRange) -> np.ndarray:
    if scope_range.degenerate:
        return np.zeros_like(values, dtype=np.float64)
    scaled = (values - scope_range.min) / (scope_range.max - scope_range.min)
    outside = (scaled < 0.0) | (scaled > 1.0)
    if outside.any():
        logger.warning(
            f"{int(outside.sum())} values lie outside the fitted range "
            f"{scope_range.min}..{scope_range.max} and are clipped"
        )
        scaled = np.clip(scaled, 0.0, 1.0)
    return scaled


def _unscale(values: np.ndarray, scope_range: ScopeRange, family: str) -> np.ndarray:
    if scope_range.degenerate:
        raise DegenerateBlock(
            f"Block '{family}' has min = max = {scope_range.min}; scaling cannot be inverted."
        )
    return values * (scope_range.max - scope_range.min) + scope_range.min


def transform(
    vector: RegionFeatureVector, params: NormalizationParams
) -> list[float]:
    """Scales a feature vector to [0, 1] block by block.

    A degenerate block (min = max) maps to 0.0.

    Raises:
        UnknownCity: In local mode, if the vector's city was not fitted.
    """
    scope = _scope(params, vector.city_tag)
    trips = _scale(
        np.asarray(vector.trips_at, dtype=np.float64),
        params.blocks[FeatureFamily.TRIPS.value][scope],
    )
    directions = _scale(
        np.asarray(vector.directions_at, dtype=np.float64),
        params.blocks[FeatureFamily.DIRECTIONS.value][scope],
    )
    return [*trips.tolist(), *directions.tolist()]


def inverse_transform(
    values: list[float], params: NormalizationParams, city_tag: str = ""
) -> list[float]:
    """Maps scaled values back to raw counts (as reals).

    Raises:
        DegenerateBlock: If a block was fitted on a constant signal.
        UnknownCity: In local mode, if the city was not fitted.
    """
    scope = _scope(params, city_tag)
    n_hours = len(hour_range(params.hours))
    array = np.asarray(values, dtype=np.float64)
    if array.shape != (2 * n_hours,):
        raise ValueError(f"Expected {2 * n_hours} values, got {array.shape}.")

    trips = _unscale(
        array[:n_hours],
        params.blocks[FeatureFamily.TRIPS.value][scope],
        FeatureFamily.TRIPS.value,
    )
    directions = _unscale(
        array[n_hours:],
        params.blocks[FeatureFamily.DIRECTIONS.value][scope],
        FeatureFamily.DIRECTIONS.value,
    )
    return [*trips.tolist(), *directions.tolist()]


def transform_matrix(
    features: pd.DataFrame | list[RegionFeatureVector], params: NormalizationParams
) -> pd.DataFrame:
    """`transform` over a whole features table; key columns are kept."""
    frame = _as_frame(features)
    out = frame.copy()
    for family in FeatureFamily:
        columns = block_columns(params.hours, family)
        out[columns] = out[columns].astype(np.float64)
        for city, index in frame.groupby("city", sort=True).groups.items():
            scope_range = params.blocks[family.value][_scope(params, str(city))]
            out.loc[index, columns] = _scale(
                frame.loc[index, columns].to_numpy(dtype=np.float64), scope_range
            )
    return out


def inverse_transform_matrix(
    normalized: pd.DataFrame, params: NormalizationParams
) -> pd.DataFrame:
    out = normalized.copy()
    for family in FeatureFamily:
        columns = block_columns(params.hours, family)
        for city, index in normalized.groupby("city", sort=True).groups.items():
            scope_range = params.blocks[family.value][_scope(params, str(city))]
            out.loc[index, columns] = _unscale(
                normalized.loc[index, columns].to_numpy(dtype=np.float64),
                scope_range,
                family.value,
            )
    return out


def fit_transform(
    features: pd.DataFrame | list[RegionFeatureVector],
    mode: NormalizationMode = NormalizationMode.GLOBAL,
    hours: tuple[int, int] = DEFAULT_HOURS,
) -> tuple[NormalizationParams, pd.DataFrame]:
    params = fit(features, mode, hours)
    return params, transform_matrix(features, params)


def save_params(params: NormalizationParams, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        json.dump(params.model_dump(mode="json"), file, indent=2, sort_keys=True)


def load_params(path: str | Path) -> NormalizationParams:
    with open(path, "r", encoding="utf-8") as file:
        return NormalizationParams(**json.load(file))
