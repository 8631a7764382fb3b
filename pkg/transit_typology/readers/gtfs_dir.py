from pathlib import Path
from typing import IO, ContextManager

from pydantic import field_validator

from transit_typology.readers.abstractreader import AbstractFeedReader


class DirectoryFeedReader(AbstractFeedReader):
    """Reads a GTFS feed from an unpacked directory of .txt files."""

    @field_validator("path")
    def validate_path(cls, value):
        if not Path(value).is_dir():
            raise ValueError(f"'{value}' is not a directory.")
        return value

    def _member_names(self) -> set[str]:
        return {
            file.name
            for file in Path(self.path).iterdir()
            if file.is_file() and file.suffix == ".txt"
        }

    def _open_member(self, name: str) -> ContextManager[IO[bytes]]:
        return open(Path(self.path) / name, "rb")
