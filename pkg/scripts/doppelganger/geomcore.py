"""
Geodetic conversions, camera poses from geotag metadata, and the ray / frustum
predicates the pair-mining rules are built from.

Local frames are East-North-Up (ENU), in meters. Camera frames follow the
image convention: x to the right, y down, z along the viewing direction.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import pymap3d

from doppelganger.errors import DomainError

WGS84 = pymap3d.Ellipsoid.from_name("wgs84")
WGS84_A = WGS84.semimajor_axis
WGS84_E2 = 1.0 - (WGS84.semiminor_axis / WGS84.semimajor_axis) ** 2

# Below this |sin(angle)| two viewing rays are treated as parallel
PARALLEL_SIN = 1e-8

DEFAULT_NEAR = 0.5
DEFAULT_FAR = 200.0

_UP = np.array([0.0, 0.0, 1.0])
_NORTH = np.array([0.0, 1.0, 0.0])


def _check_finite(name: str, *values: float):
    for value in values:
        if not math.isfinite(value):
            raise DomainError(f"{name} must be finite, got {value!r}")


def _check_latitude(lat: float):
    _check_finite("latitude", lat)
    if not -90.0 <= lat <= 90.0:
        raise DomainError(f"latitude {lat!r} outside [-90, 90]")


@dataclass(frozen=True)
class Intrinsics:
    """
    Pinhole intrinsics in pixels.
    - fx, fy: focal lengths (> 0)
    - cx, cy: principal point
    """
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        _check_finite("intrinsics", self.fx, self.fy, self.cx, self.cy)
        if self.fx <= 0 or self.fy <= 0:
            raise DomainError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")

    @classmethod
    def centered(cls, focal: float, width: int, height: int) -> "Intrinsics":
        """
        Square pixels with the principal point at the image center.
        """
        return cls(focal, focal, width / 2.0, height / 2.0)


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float
    alt: float

    def __post_init__(self):
        _check_latitude(self.lat)
        _check_finite("longitude/altitude", self.lon, self.alt)


@dataclass(frozen=True)
class EcefPoint:
    x: float
    y: float
    z: float

    def __post_init__(self):
        _check_finite("ECEF coordinate", self.x, self.y, self.z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, values) -> "EcefPoint":
        x, y, z = (float(v) for v in values)
        return cls(x, y, z)


@dataclass(frozen=True)
class GeoCamera:
    """
    A camera described by its geotag metadata.
    - lat, lon: degrees; alt: ellipsoidal height in meters
    - heading: compass direction in degrees, clockwise from true north
    - pitch: degrees toward Up, 0 when the metadata has none
    """
    id: str
    lat: float
    lon: float
    alt: float
    heading: float
    intrinsics: Intrinsics
    width: int
    height: int
    pitch: float = 0.0

    def __post_init__(self):
        if not self.id or any(ch.isspace() for ch in self.id):
            raise DomainError(f"camera id must be non-empty without whitespace, got {self.id!r}")
        _check_latitude(self.lat)
        _check_finite(f"camera {self.id} metadata", self.lon, self.alt, self.heading, self.pitch)
        if not -90.0 <= self.pitch <= 90.0:
            raise DomainError(f"camera {self.id}: pitch {self.pitch} outside [-90, 90]")
        if self.width <= 0 or self.height <= 0:
            raise DomainError(f"camera {self.id}: image size must be positive")
        if not -180.0 <= self.lon <= 180.0:
            object.__setattr__(self, "lon", (self.lon + 180.0) % 360.0 - 180.0)
        object.__setattr__(self, "heading", self.heading % 360.0)

    @property
    def position(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lon, self.alt)


@dataclass(frozen=True, eq=False)
class PosedCamera:
    """
    A camera in a local metric (ENU) frame.
    - center: camera center in meters
    - dir: viewing direction, normalized on construction
    - frame: tag of the origin the camera was posed against
    - up: reference fixing the image roll (image y points away from it), ENU Up by default
    """
    center: np.ndarray
    dir: np.ndarray
    intrinsics: Intrinsics
    width: int
    height: int
    frame: str = field(default="")
    up: np.ndarray | None = None

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(3)
        direction = np.asarray(self.dir, dtype=float).reshape(3)
        if not (np.all(np.isfinite(center)) and np.all(np.isfinite(direction))):
            raise DomainError("camera center and direction must be finite")
        norm = np.linalg.norm(direction)
        if norm < 1e-12:
            raise DomainError("camera direction must be non-zero")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "dir", direction / norm)
        up = _UP if self.up is None else np.asarray(self.up, dtype=float).reshape(3)
        up_norm = np.linalg.norm(up)
        if not np.all(np.isfinite(up)) or up_norm < 1e-12:
            raise DomainError("camera up reference must be finite and non-zero")
        object.__setattr__(self, "up", up / up_norm)


class RayCase(enum.Enum):
    FRONT_FRONT = "FrontFront"
    BEHIND_BEHIND = "BehindBehind"
    MIXED = "Mixed"


@dataclass(frozen=True)
class RayRelation:
    """
    Where the two viewing rays come closest.
    - t_a, t_b: signed distances along each ray to the mutual closest points
    - gap: distance between those points
    """
    case: RayCase
    t_a: float
    t_b: float
    gap: float


def _case_from_params(t_a: float, t_b: float) -> RayCase:
    # t == 0 counts as behind
    if t_a > 0 and t_b > 0:
        return RayCase.FRONT_FRONT
    if t_a <= 0 and t_b <= 0:
        return RayCase.BEHIND_BEHIND
    return RayCase.MIXED


def wgs84_to_ecef(lat: float, lon: float, alt: float) -> EcefPoint:
    """
    Convert geodetic WGS84 coordinates to ECEF.
    - lat, lon: degrees
    - alt: ellipsoidal height in meters
    """
    _check_latitude(lat)
    _check_finite("longitude/altitude", lon, alt)
    x, y, z = pymap3d.geodetic2ecef(lat, lon, alt, ell=WGS84)
    return EcefPoint(float(x), float(y), float(z))


def ecef_to_wgs84(p: EcefPoint) -> GeoPoint:
    lat, lon, alt = pymap3d.ecef2geodetic(p.x, p.y, p.z, ell=WGS84)
    return GeoPoint(float(lat), float(lon), float(alt))


def ecef_to_enu(p: EcefPoint, origin) -> np.ndarray:
    """
    East-North-Up coordinates of an ECEF point relative to a geodetic origin.
    - origin: anything with lat/lon/alt (GeoPoint, GeoCamera)
    """
    _check_latitude(origin.lat)
    e, n, u = pymap3d.ecef2enu(p.x, p.y, p.z, origin.lat, origin.lon, origin.alt, ell=WGS84)
    return np.array([e, n, u], dtype=float)


def enu_to_ecef(enu, origin) -> EcefPoint:
    _check_latitude(origin.lat)
    e, n, u = (float(v) for v in np.asarray(enu, dtype=float).reshape(3))
    x, y, z = pymap3d.enu2ecef(e, n, u, origin.lat, origin.lon, origin.alt, ell=WGS84)
    return EcefPoint(float(x), float(y), float(z))


def heading_to_direction(heading: float, pitch: float = 0.0) -> np.ndarray:
    """
    Unit viewing direction in ENU from a compass heading and a pitch (degrees).
    """
    h = math.radians(heading % 360.0)
    p = math.radians(pitch)
    cos_p = math.cos(p)
    return np.array([math.sin(h) * cos_p, math.cos(h) * cos_p, math.sin(p)])


def origin_tag(origin) -> str:
    return f"{origin.lat!r}/{origin.lon!r}/{origin.alt!r}"


def camera_from_geotag(cam: GeoCamera, origin) -> PosedCamera:
    """
    Pose a geotagged camera in the ENU frame anchored at origin.
    """
    center = ecef_to_enu(wgs84_to_ecef(cam.lat, cam.lon, cam.alt), origin)
    return PosedCamera(
        center=center,
        dir=heading_to_direction(cam.heading, cam.pitch),
        intrinsics=cam.intrinsics,
        width=cam.width,
        height=cam.height,
        frame=origin_tag(origin),
    )


def camera_distance(a: PosedCamera, b: PosedCamera) -> float:
    return float(np.linalg.norm(a.center - b.center))


def view_angle(a: PosedCamera, b: PosedCamera) -> float:
    """
    Angle between the viewing directions, in degrees [0, 180].
    """
    cosine = float(np.clip(np.dot(a.dir, b.dir), -1.0, 1.0))
    return math.degrees(math.acos(cosine))


def classify_ray_relation(a: PosedCamera, b: PosedCamera) -> RayRelation:
    """
    Locate the mutual closest points of the two viewing rays and classify
    whether they lie in front of or behind each camera.
    """
    da, db = a.dir, b.dir
    w0 = a.center - b.center
    sin_angle = float(np.linalg.norm(np.cross(da, db)))

    if sin_angle < PARALLEL_SIN:
        # Parallel rays have no unique closest pair; look at the other center instead
        baseline = b.center - a.center
        t_a = float(np.dot(da, baseline))
        t_b = float(np.dot(db, -baseline))
        gap = float(np.linalg.norm(baseline - np.dot(baseline, da) * da))
        return RayRelation(_case_from_params(t_a, t_b), t_a, t_b, gap)

    cos_angle = float(np.dot(da, db))
    d = float(np.dot(da, w0))
    e = float(np.dot(db, w0))
    denom = sin_angle * sin_angle
    t_a = (cos_angle * e - d) / denom
    t_b = (e - cos_angle * d) / denom
    gap = float(np.linalg.norm((a.center + t_a * da) - (b.center + t_b * db)))
    return RayRelation(_case_from_params(t_a, t_b), t_a, t_b, gap)


def _corner_rays(intrinsics: Intrinsics, width: float, height: float) -> np.ndarray:
    # Corners in order (0,0), (w,0), (w,h), (0,h); camera frame, z = 1
    us = np.array([0.0, width, width, 0.0])
    vs = np.array([0.0, 0.0, height, height])
    return np.stack([
        (us - intrinsics.cx) / intrinsics.fx,
        (vs - intrinsics.cy) / intrinsics.fy,
        np.ones(4),
    ], axis=1)


def diagonal_fov(intrinsics: Intrinsics, width: float, height: float) -> float:
    """
    Angle in degrees between the rays through the (0, 0) and (width, height) corners.
    """
    if width <= 0 or height <= 0:
        raise DomainError(f"image size must be positive, got {width}x{height}")
    rays = _corner_rays(intrinsics, width, height)
    first, last = rays[0], rays[2]
    cosine = np.dot(first, last) / (np.linalg.norm(first) * np.linalg.norm(last))
    return math.degrees(math.acos(float(np.clip(cosine, -1.0, 1.0))))


def camera_rotation(cam: PosedCamera) -> np.ndarray:
    """
    Camera-to-world rotation; columns are the camera x (right), y (down) and z (dir) axes.
    """
    forward = cam.dir
    reference = cam.up
    if np.linalg.norm(np.cross(forward, reference)) <= 1e-9:
        # looking along the up reference
        reference = _NORTH if np.linalg.norm(np.cross(forward, _NORTH)) > 1e-9 else _UP
    right = np.cross(forward, reference)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.stack([right, down, forward], axis=1)


def _check_planes(near: float, far: float):
    if not (math.isfinite(near) and math.isfinite(far) and 0.0 < near < far):
        raise DomainError(f"frustum planes need 0 < near < far, got near={near} far={far}")


def frustum_vertices(cam: PosedCamera, near: float = DEFAULT_NEAR, far: float = DEFAULT_FAR) -> np.ndarray:
    """
    The 8 world-space corners of the truncated frustum, near rectangle first.
    """
    _check_planes(near, far)
    rays = _corner_rays(cam.intrinsics, cam.width, cam.height) @ camera_rotation(cam).T
    return np.concatenate([cam.center + near * rays, cam.center + far * rays])


def _frustum_axes(cam: PosedCamera):
    rotation = camera_rotation(cam)
    rays = _corner_rays(cam.intrinsics, cam.width, cam.height) @ rotation.T
    sides = np.cross(rays, np.roll(rays, -1, axis=0))
    faces = np.vstack([cam.dir, sides])
    edges = np.vstack([rotation[:, 0], rotation[:, 1], rays])
    return faces, edges


def frustum_overlap(a: PosedCamera, b: PosedCamera,
                    near: float = DEFAULT_NEAR, far: float = DEFAULT_FAR) -> bool:
    """
    Separating-axis test between the two truncated view frustums.
    - near, far: truncation distances along each optical axis (meters)
    """
    _check_planes(near, far)
    verts_a = frustum_vertices(a, near, far)
    verts_b = frustum_vertices(b, near, far)
    faces_a, edges_a = _frustum_axes(a)
    faces_b, edges_b = _frustum_axes(b)

    crosses = np.cross(edges_a[:, None, :], edges_b[None, :, :]).reshape(-1, 3)
    axes = np.vstack([faces_a, faces_b, crosses])
    norms = np.linalg.norm(axes, axis=1)
    axes = axes[norms > 1e-12] / norms[norms > 1e-12, None]

    proj_a = verts_a @ axes.T
    proj_b = verts_b @ axes.T
    tol = 1e-9 * max(1.0, far)
    separated = (proj_a.max(axis=0) < proj_b.min(axis=0) - tol) | \
                (proj_b.max(axis=0) < proj_a.min(axis=0) - tol)
    return not bool(np.any(separated))


def point_in_frustum(cam: PosedCamera, point, near: float = DEFAULT_NEAR, far: float = DEFAULT_FAR) -> bool:
    """
    Whether a world point lies inside the truncated frustum (boundary included).
    """
    _check_planes(near, far)
    local = camera_rotation(cam).T @ (np.asarray(point, dtype=float) - cam.center)
    depth = local[2]
    if not near <= depth <= far:
        return False
    u = cam.intrinsics.fx * local[0] / depth + cam.intrinsics.cx
    v = cam.intrinsics.fy * local[1] / depth + cam.intrinsics.cy
    return 0.0 <= u <= cam.width and 0.0 <= v <= cam.height
