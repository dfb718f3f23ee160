"""
Synthetic doppelganger scenes with ground truth.

A structure with `sides`-fold rotational symmetry stands at the scene center;
each side is photographed by a sector of cameras on a ring, all looking at the
center. Neighbouring cameras of one side truly match; cameras related by the
symmetry rotation (and their ring neighbours) form doppelganger pairs.
"""

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from doppelganger.disambig import EdgeData, ScoreQuad, SceneGraph, edge_key
from doppelganger.errors import DomainError, UsageError
from doppelganger.geomcore import (
    GeoCamera,
    GeoPoint,
    Intrinsics,
    PosedCamera,
    ecef_to_wgs84,
    enu_to_ecef,
    frustum_overlap,
)
from doppelganger.geoverify import ProbeCorrespondence, SimilarityTransform, component_seed, correspondences_from_layout

logger = logging.getLogger(__name__)

TRUE_BAND = (0.85, 1.0)
DOPPELGANGER_BAND = (0.0, 0.15)
TRUE_INLIERS = (120, 400)
DOPPELGANGER_INLIERS = (30, 120)


class PairTruth(enum.Enum):
    TRUE_MATCH = "TrueMatch"
    DOPPELGANGER = "Doppelganger"
    UNRELATED = "Unrelated"


@dataclass(frozen=True)
class SynthConfig:
    """
    - sides: order of rotational symmetry of the structure
    - cams_per_side: cameras photographing each side
    - ring_radius, structure_radius: meters
    - geo_anchor: geodetic position of the scene center
    - noise_std: RMS horizontal geotag error in meters
    - noise_clip: jitter radius cap, in units of noise_std
    - sector_fraction: share of each side's angular sector holding cameras
    - neighbor_span: ring distance (in cameras) joined by match edges
    """
    sides: int = 2
    cams_per_side: int = 40
    ring_radius: float = 30.0
    structure_radius: float = 10.0
    geo_anchor: GeoPoint = GeoPoint(48.8738, 2.2950, 50.0)
    noise_std: float = 1.0
    seed: int = 0
    noise_clip: float = 1.5
    sector_fraction: float = 0.6
    neighbor_span: int = 2
    focal: float = 500.0
    width: int = 800
    height: int = 600

    def __post_init__(self):
        if self.sides < 2:
            raise DomainError(f"sides must be at least 2, got {self.sides}")
        if self.cams_per_side < 1 or self.neighbor_span < 1:
            raise DomainError("camera and neighbour counts must be positive")
        if not self.ring_radius > self.structure_radius > 0:
            raise DomainError("need ring_radius > structure_radius > 0")
        if self.noise_std < 0 or self.noise_clip <= 0:
            raise DomainError("noise_std must be >= 0 and noise_clip > 0")
        if not 0.0 < self.sector_fraction <= 1.0:
            raise DomainError(f"sector_fraction must lie in (0, 1], got {self.sector_fraction}")

    @property
    def intrinsics(self) -> Intrinsics:
        return Intrinsics.centered(self.focal, self.width, self.height)


@dataclass
class SynthScene:
    config: SynthConfig
    cameras: list
    side: dict
    true_enu: dict
    gt_pair_labels: dict
    match_graph: SceneGraph
    corrupted_layout: dict
    corrected_layout: dict
    side_frames: list = field(default_factory=list)

    def side_of(self, cam_id: str) -> int:
        return self.side[cam_id]

    def camera_ids(self, side: int | None = None) -> list[str]:
        return [c.id for c in self.cameras if side is None or self.side[c.id] == side]


def camera_id(side: int, index: int) -> str:
    return f"s{side}_c{index:03d}"


def _keyed_rng(seed: int, *parts) -> np.random.Generator:
    return np.random.default_rng(component_seed(seed, ":".join(str(p) for p in parts)))


def _ring_angle(cfg: SynthConfig, side: int, index: int) -> float:
    step = cfg.sector_fraction * 2.0 * math.pi / cfg.sides / cfg.cams_per_side
    return 2.0 * math.pi * side / cfg.sides + (index - (cfg.cams_per_side - 1) / 2.0) * step


def _rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _jitter(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    if cfg.noise_std == 0:
        return np.zeros(3)
    sigma = cfg.noise_std / math.sqrt(2.0)
    limit = cfg.noise_clip * cfg.noise_std
    while True:
        offset = rng.normal(0.0, sigma, size=2)
        if np.hypot(*offset) <= limit:
            return np.array([offset[0], offset[1], 0.0])


def _side_frame(cfg: SynthConfig, side: int) -> SimilarityTransform:
    # Each reconstructed component lives in its own arbitrary model frame
    rng = _keyed_rng(cfg.seed, "frame", side)
    rotation = Rotation.random(None, rng).as_matrix()
    return SimilarityTransform(float(rng.uniform(0.05, 0.5)), rotation, rng.normal(0.0, 10.0, size=3))


def _draw_quad(seed: int, a: str, b: str, truth: PairTruth) -> ScoreQuad:
    low, high = TRUE_BAND if truth is PairTruth.TRUE_MATCH else DOPPELGANGER_BAND
    rng = _keyed_rng(seed, "oracle", a, b)
    return ScoreQuad(tuple(rng.uniform(low, high, size=4)))


def _draw_inliers(seed: int, a: str, b: str, truth: PairTruth) -> int:
    low, high = TRUE_INLIERS if truth is PairTruth.TRUE_MATCH else DOPPELGANGER_INLIERS
    return int(_keyed_rng(seed, "inliers", a, b).integers(low, high + 1))


def generate(cfg: SynthConfig) -> SynthScene:
    """
    Build a synthetic scene; a pure function of the config (seed included).
    """
    intrinsics = cfg.intrinsics
    cameras: list[GeoCamera] = []
    side_of: dict[str, int] = {}
    true_enu: dict[str, np.ndarray] = {}
    posed: dict[str, PosedCamera] = {}
    noise_rng = _keyed_rng(cfg.seed, "geotag")

    for side in range(cfg.sides):
        for index in range(cfg.cams_per_side):
            cam_id = camera_id(side, index)
            angle = _ring_angle(cfg, side, index)
            position = cfg.ring_radius * np.array([math.cos(angle), math.sin(angle), 0.0])
            direction = -position / np.linalg.norm(position)
            heading = math.degrees(math.atan2(direction[0], direction[1])) % 360.0

            tagged = ecef_to_wgs84(enu_to_ecef(position + _jitter(noise_rng, cfg), cfg.geo_anchor))
            cameras.append(GeoCamera(cam_id, tagged.lat, tagged.lon, tagged.alt, heading,
                                     intrinsics, cfg.width, cfg.height))
            side_of[cam_id] = side
            true_enu[cam_id] = position
            posed[cam_id] = PosedCamera(position, direction, intrinsics, cfg.width, cfg.height, "synth")

    labels: dict[tuple[str, str], PairTruth] = {}
    edges: dict[tuple[str, str], EdgeData] = {}
    ids = [c.id for c in cameras]
    index_of = {cam_id: int(cam_id.split("_c")[1]) for cam_id in ids}
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            key = edge_key(a, b)
            near = abs(index_of[a] - index_of[b]) <= cfg.neighbor_span
            if side_of[a] == side_of[b]:
                truth = PairTruth.TRUE_MATCH if near and frustum_overlap(posed[a], posed[b]) else PairTruth.UNRELATED
            else:
                truth = PairTruth.DOPPELGANGER if near else PairTruth.UNRELATED
            labels[key] = truth
            if truth is not PairTruth.UNRELATED:
                quad = _draw_quad(cfg.seed, *key, truth)
                edges[key] = EdgeData.from_quad(quad, _draw_inliers(cfg.seed, *key, truth))

    frames = [_side_frame(cfg, side) for side in range(cfg.sides)]
    corrected: dict[str, np.ndarray] = {}
    corrupted: dict[str, np.ndarray] = {}
    for cam_id in ids:
        side = side_of[cam_id]
        corrected[cam_id] = frames[side].apply(true_enu[cam_id])
        # Collapse onto side 0 by undoing the symmetry rotation
        folded = true_enu[cam_id] if side == 0 else _rotation_z(-2.0 * math.pi * side / cfg.sides) @ true_enu[cam_id]
        corrupted[cam_id] = frames[0].apply(folded)

    graph = SceneGraph(ids, edges)
    logger.info("Synthetic scene: %d cameras, %d edges (%d doppelganger)", len(ids), len(edges),
                sum(1 for k in edges if labels[k] is PairTruth.DOPPELGANGER))
    return SynthScene(cfg, cameras, side_of, true_enu, labels, graph, corrupted, corrected, frames)


def oracle_quad(scene: SynthScene, pair) -> ScoreQuad:
    """
    Stand-in classifier scores: high band for true matches, low band for doppelgangers.
    - pair: (id_a, id_b) of a match-graph edge, either order
    """
    key = edge_key(*pair)
    if key not in scene.match_graph.edges:
        raise UsageError(f"pair {key[0]}-{key[1]} is not a match-graph edge")
    return _draw_quad(scene.config.seed, *key, scene.gt_pair_labels[key])


def scored_edges(scene: SynthScene) -> list[tuple[str, str, ScoreQuad]]:
    return [(a, b, oracle_quad(scene, (a, b))) for a, b in sorted(scene.match_graph.edges)]


def ambiguous_quad(rng: np.random.Generator) -> ScoreQuad:
    """
    Two scores above 0.5 and two below, in random slots.
    """
    scores = np.concatenate([rng.uniform(0.55, 1.0, size=2), rng.uniform(0.0, 0.45, size=2)])
    return ScoreQuad(tuple(scores[rng.permutation(4)]))


def adversarial_quads(scene: SynthScene, flip_fraction: float) -> list[tuple[str, str, ScoreQuad]]:
    """
    Oracle scoring where a seeded fraction of the edges gets split votes instead.
    - flip_fraction: share of edges receiving ambiguous quads, in [0, 0.5)
    """
    if not 0.0 <= flip_fraction < 0.5:
        raise DomainError(f"flip_fraction must lie in [0, 0.5), got {flip_fraction}")
    scored = scored_edges(scene)
    count = int(round(flip_fraction * len(scored)))
    flipped = set()
    if count:
        picks = _keyed_rng(scene.config.seed, "flip").choice(len(scored), size=count, replace=False)
        flipped = {int(i) for i in picks}
    out = []
    for index, (a, b, quad) in enumerate(scored):
        if index in flipped:
            quad = ambiguous_quad(_keyed_rng(scene.config.seed, "ambiguous", a, b))
        out.append((a, b, quad))
    logger.debug("Flipped %d of %d edges to ambiguous votes", count, len(scored))
    return out


def component_purity(groups, scene: SynthScene) -> list[float]:
    """
    Share of each component's nodes that belong to its majority side.
    """
    purities = []
    for group in groups:
        sides = np.bincount([scene.side[cam_id] for cam_id in group], minlength=scene.config.sides)
        purities.append(float(sides.max() / len(group)))
    return purities


def layout_probes(scene: SynthScene, layout: str) -> list[tuple[str, list[ProbeCorrespondence]]]:
    """
    Probe correspondences for one of the layouts, grouped by component.
    - layout: "corrupted" (one collapsed component) or "corrected" (one component per side)
    """
    if layout == "corrupted":
        groups = {"model": scene.camera_ids()}
        positions = scene.corrupted_layout
    elif layout == "corrected":
        groups = {f"side{k}": scene.camera_ids(k) for k in range(scene.config.sides)}
        positions = scene.corrected_layout
    else:
        raise UsageError(f"unknown layout {layout!r}, expected 'corrupted' or 'corrected'")

    out = []
    for component_id, members in groups.items():
        layout_part = {m: positions[m] for m in members}
        out.append((component_id, correspondences_from_layout(layout_part, scene.cameras)))
    return out
