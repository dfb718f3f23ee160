import logging
import sqlite3
from pathlib import Path

from doppelganger.errors import FormatError, UsageError
from doppelganger.pairmine import MatchCandidate

logger = logging.getLogger(__name__)

# COLMAP packs an image pair into one integer: id1 * MAX_IMAGE_ID + id2
MAX_IMAGE_ID = 2147483647


class ColmapDatabase:
    """
    Class to read images and verified matches from a COLMAP database file.
    """
    def __init__(self, path, timeout: float = 1.0):
        self.path = Path(path)
        self.timeout = timeout
        if not self.path.is_file():
            raise UsageError(f"COLMAP database {self.path} does not exist")
        self.connection = sqlite3.connect(f"file:{self.path}?mode=ro", uri=True, timeout=timeout)

    @classmethod
    def auto_connect(cls, directory=".", timeout: float = 1.0):
        """
        Try to automatically find a COLMAP database in a directory.
        - directory: folder scanned for *.db files
        """
        for candidate in sorted(Path(directory).glob("*.db")):
            try:
                db = cls(candidate, timeout)
                if db.has_matches():
                    return db
                db.stop()
            except (sqlite3.Error, UsageError):
                pass

        raise UsageError(f"No COLMAP database found in {directory}.")

    @staticmethod
    def pair_id_to_image_ids(pair_id: int) -> tuple[int, int]:
        image_id2 = pair_id % MAX_IMAGE_ID
        image_id1 = (pair_id - image_id2) // MAX_IMAGE_ID
        return image_id1, image_id2

    def tables(self) -> set[str]:
        rows = self.connection.execute("SELECT name FROM sqlite_master WHERE type='table';")
        return {row[0] for row in rows}

    def has_matches(self) -> bool:
        return {"images", "two_view_geometries"} <= self.tables()

    def read_images(self) -> dict[int, str]:
        """
        Map image_id -> image name.
        """
        return {row[0]: row[1] for row in self.connection.execute("SELECT image_id, name FROM images;")}

    def read_pairs(self, min_num_matches: int = 15) -> list[MatchCandidate]:
        """
        Geometrically verified pairs with their inlier counts.
        - min_num_matches: skip pairs with fewer verified matches
        """
        if not self.has_matches():
            raise FormatError("database lacks the images/two_view_geometries tables", self.path)
        images = self.read_images()
        pairs = []
        cursor = self.connection.execute(
            "SELECT pair_id, rows FROM two_view_geometries WHERE rows>=? ORDER BY pair_id;",
            (min_num_matches,),
        )
        for pair_id, rows in cursor:
            id1, id2 = self.pair_id_to_image_ids(pair_id)
            if id1 not in images or id2 not in images:
                raise FormatError(f"pair_id {pair_id} references an unknown image", self.path)
            name1, name2 = images[id1], images[id2]
            for name in (name1, name2):
                if any(ch.isspace() for ch in name):
                    raise UsageError(f"image name {name!r} contains whitespace")
            pairs.append(MatchCandidate(name1, name2, int(rows)))
        logger.info("Read %d verified pairs from %s", len(pairs), self.path)
        return pairs

    def stop(self):
        """
        Close the database connection.
        """
        self.connection.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()
