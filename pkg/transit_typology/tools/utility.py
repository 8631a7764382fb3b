import hashlib
import json
import sys
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import pandas as pd
from loguru import logger

logger.remove()
logger.add(sys.stderr, level="INFO")


def configure_logging(level: str = "INFO") -> None:
    """Replaces the stderr sink with one at the given level."""
    logger.remove()
    logger.add(sys.stderr, level=level)


def parse_gtfs_times(values: pd.Series) -> tuple[pd.Series, pd.Series]:
    """Parses GTFS 'H:MM:SS' strings into seconds past service-day midnight.

    Hours may exceed 23. Blank strings become <NA>.

    Args:
        values (pd.Series): Trimmed time strings.

    Returns:
        tuple[pd.Series, pd.Series]: Seconds as nullable integers and a boolean
            mask of entries that were non-blank but could not be parsed.
    """
    parts = values.str.extract(r"^(\d{1,3}):([0-5]\d):([0-5]\d)$")
    parsed = parts.notna().all(axis=1)
    blank = values.eq("")
    seconds = (
        parts[0].astype("float") * 3600
        + parts[1].astype("float") * 60
        + parts[2].astype("float")
    )
    seconds = seconds.where(parsed).astype("Int64")
    return seconds, ~parsed & ~blank


def percentage(part: int, whole: int, digits: int = 2) -> float:
    """100 * part / whole in exact decimal arithmetic, rounded half-up."""
    if whole <= 0:
        raise ValueError("The whole must be positive.")
    quantum = Decimal(1).scaleb(-digits)
    exact = Decimal(100 * int(part)) / Decimal(int(whole))
    return float(exact.quantize(quantum, rounding=ROUND_HALF_UP))


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as file:
        for chunk in iter(lambda: file.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_path(path: str | Path) -> str:
    """Content hash of a file, or of every file below a directory."""
    path = Path(path)
    if path.is_file():
        return sha256_file(path)

    digest = hashlib.sha256()
    for file in sorted(p for p in path.rglob("*") if p.is_file()):
        if file.name.startswith("."):
            continue
        digest.update(file.relative_to(path).as_posix().encode())
        digest.update(sha256_file(file).encode())
    return digest.hexdigest()


def sha256_json(obj) -> str:
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(payload.encode()).hexdigest()
