from .abstractreader import AbstractFeedReader, load_feed
from .gtfs_dir import DirectoryFeedReader
from .gtfs_zip import ZipFeedReader

__all__ = [
    "AbstractFeedReader",
    "DirectoryFeedReader",
    "ZipFeedReader",
    "load_feed",
]
