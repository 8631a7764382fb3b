import zipfile
from contextlib import contextmanager
from pathlib import PurePosixPath
from typing import IO, Iterator

from pydantic import PrivateAttr

from transit_typology.errors import FeedError
from transit_typology.readers.abstractreader import AbstractFeedReader


class ZipFeedReader(AbstractFeedReader):
    """Reads a GTFS feed from a zip archive.

    Members are matched by file name, so feeds zipped together with their
    enclosing folder are accepted as well.
    """

    _members: dict[str, str] = PrivateAttr(default_factory=dict)

    def model_post_init(self, __context) -> None:
        if not zipfile.is_zipfile(self.path):
            raise FeedError(
                f"'{self.path}' is not a zip archive.",
                suggestion="Pass a GTFS .zip file or a directory of .txt files.",
            )

        with zipfile.ZipFile(self.path) as archive:
            for info in archive.infolist():
                if info.is_dir() or info.filename.startswith("__MACOSX"):
                    continue
                name = PurePosixPath(info.filename).name
                self._members.setdefault(name, info.filename)

    def _member_names(self) -> set[str]:
        return set(self._members)

    @contextmanager
    def _open_member(self, name: str) -> Iterator[IO[bytes]]:
        with zipfile.ZipFile(self.path) as archive:
            with archive.open(self._members[name]) as handle:
                yield handle
