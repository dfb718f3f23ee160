import sqlite3

import numpy as np
import pytest

from doppelganger.colmap_db import MAX_IMAGE_ID
from doppelganger.geomcore import GeoCamera, GeoPoint, Intrinsics, PosedCamera, ecef_to_wgs84, enu_to_ecef
from doppelganger.synth import SynthConfig, generate

ANCHOR = GeoPoint(48.8738, 2.2950, 50.0)


@pytest.fixture
def intrinsics():
    # 800x600 image, 500 px focal length
    return Intrinsics(500.0, 500.0, 400.0, 300.0)


@pytest.fixture
def posed(intrinsics):
    """
    Factory for cameras in a shared local frame.
    """
    def make(center, direction, frame="local", up=None):
        return PosedCamera(np.asarray(center, dtype=float), np.asarray(direction, dtype=float),
                           intrinsics, 800, 600, frame, up)
    return make


@pytest.fixture
def geotagged(intrinsics):
    """
    Factory for geotagged cameras placed by their ENU offset from ANCHOR.
    """
    def make(cam_id, east, north, heading, up=0.0):
        point = ecef_to_wgs84(enu_to_ecef([east, north, up], ANCHOR))
        return GeoCamera(cam_id, point.lat, point.lon, point.alt, heading, intrinsics, 800, 600)
    return make


@pytest.fixture(scope="session")
def default_scene():
    return generate(SynthConfig())


@pytest.fixture(scope="session")
def noiseless_scene():
    return generate(SynthConfig(noise_std=0.0))


def make_colmap_database(path, images, pairs):
    """
    Minimal COLMAP database with the images and two_view_geometries tables.
    - images: {image_id: name}
    - pairs: {(image_id1, image_id2): rows}
    """
    connection = sqlite3.connect(path)
    connection.execute("CREATE TABLE images (image_id INTEGER PRIMARY KEY, name TEXT, camera_id INTEGER);")
    connection.execute("CREATE TABLE two_view_geometries (pair_id INTEGER PRIMARY KEY, rows INTEGER, "
                       "cols INTEGER, data BLOB, config INTEGER);")
    connection.executemany("INSERT INTO images VALUES (?, ?, 1);", images.items())
    connection.executemany("INSERT INTO two_view_geometries VALUES (?, ?, 2, NULL, 2);",
                           [(a * MAX_IMAGE_ID + b, rows) for (a, b), rows in pairs.items()])
    connection.commit()
    connection.close()
    return path


@pytest.fixture
def colmap_database(tmp_path):
    return make_colmap_database(
        tmp_path / "database.db",
        {1: "s0_c000", 2: "s0_c001", 3: "s1_c000"},
        {(1, 2): 200, (1, 3): 60, (2, 3): 4},
    )


@pytest.fixture
def make_database(tmp_path):
    def make(name, images, pairs):
        return make_colmap_database(tmp_path / name, images, pairs)
    return make
