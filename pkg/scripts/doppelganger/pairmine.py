"""
Geometric rules that label matched image pairs as confident doppelgangers
(negatives) or confident true matches (positives) from camera metadata.
"""

import enum
import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from doppelganger.errors import DomainError, UsageError
from doppelganger.geomcore import (
    DEFAULT_FAR,
    DEFAULT_NEAR,
    EcefPoint,
    GeoCamera,
    GeoPoint,
    PosedCamera,
    RayCase,
    camera_distance,
    camera_from_geotag,
    classify_ray_relation,
    diagonal_fov,
    ecef_to_wgs84,
    frustum_overlap,
    view_angle,
    wgs84_to_ecef,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MiningConfig:
    """
    Thresholds of the pair-mining rules.
    - distant_threshold: meters beyond which a matched pair is a doppelganger
    - max_front_angle: view angle (deg) above which converging pairs are doppelgangers
    - near_positive_distance, max_positive_angle: bounds of the positive rule
    - min_candidate_inliers: pairs with fewer verified matches stay unlabeled
    - frustum_near, frustum_far: frustum truncation (meters)
    """
    distant_threshold: float = 150.0
    max_front_angle: float = 160.0
    near_positive_distance: float = 15.0
    max_positive_angle: float = 45.0
    min_candidate_inliers: int = 15
    frustum_near: float = DEFAULT_NEAR
    frustum_far: float = DEFAULT_FAR

    def __post_init__(self):
        values = {
            "distant_threshold": self.distant_threshold,
            "max_front_angle": self.max_front_angle,
            "near_positive_distance": self.near_positive_distance,
            "max_positive_angle": self.max_positive_angle,
            "min_candidate_inliers": self.min_candidate_inliers,
            "frustum_near": self.frustum_near,
            "frustum_far": self.frustum_far,
        }
        for name, value in values.items():
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be strictly positive, got {value!r}")
        if not 90.0 < self.max_front_angle < 180.0:
            raise DomainError(f"max_front_angle must lie in (90, 180), got {self.max_front_angle}")
        if not 0.0 < self.max_positive_angle <= 90.0:
            raise DomainError(f"max_positive_angle must lie in (0, 90], got {self.max_positive_angle}")
        if self.frustum_near >= self.frustum_far:
            raise DomainError("frustum_near must be smaller than frustum_far")


@dataclass(frozen=True)
class MatchCandidate:
    """
    A matched image pair, stored with the lexicographically smaller id first.
    - num_inliers: verified feature matches, None when unknown
    """
    id_a: str
    id_b: str
    num_inliers: int | None = None

    def __post_init__(self):
        if self.id_a == self.id_b:
            raise UsageError(f"pair joins image {self.id_a!r} to itself")
        if self.id_b < self.id_a:
            a, b = self.id_b, self.id_a
            object.__setattr__(self, "id_a", a)
            object.__setattr__(self, "id_b", b)
        if self.num_inliers is not None and self.num_inliers < 0:
            raise DomainError(f"negative inlier count for pair {self.id_a}-{self.id_b}")

    @property
    def key(self) -> tuple[str, str]:
        return self.id_a, self.id_b


class Verdict(enum.Enum):
    NEGATIVE = "Negative"
    POSITIVE = "Positive"
    UNKNOWN = "Unknown"


class Rule(enum.Enum):
    DISTANT = "Distant"
    FRONT_FRONT_WIDE_ANGLE = "FrontFrontWideAngle"
    BEHIND_BEHIND_OVER_FOV = "BehindBehindOverFov"
    MIXED_NO_FRUSTUM_OVERLAP = "MixedNoFrustumOverlap"
    POSITIVE_NEARBY_CONVERGING = "PositiveNearbyConverging"
    INDETERMINATE = "Indeterminate"


RULE_VERDICT = {
    Rule.DISTANT: Verdict.NEGATIVE,
    Rule.FRONT_FRONT_WIDE_ANGLE: Verdict.NEGATIVE,
    Rule.BEHIND_BEHIND_OVER_FOV: Verdict.NEGATIVE,
    Rule.MIXED_NO_FRUSTUM_OVERLAP: Verdict.NEGATIVE,
    Rule.POSITIVE_NEARBY_CONVERGING: Verdict.POSITIVE,
    Rule.INDETERMINATE: Verdict.UNKNOWN,
}


@dataclass(frozen=True)
class PairLabel:
    verdict: Verdict
    rule: Rule

    def __post_init__(self):
        if RULE_VERDICT[self.rule] is not self.verdict:
            raise UsageError(f"rule {self.rule.value} cannot yield verdict {self.verdict.value}")

    @classmethod
    def from_rule(cls, rule: Rule) -> "PairLabel":
        return cls(RULE_VERDICT[rule], rule)


def label_pair(a: PosedCamera, b: PosedCamera, cand: MatchCandidate, cfg: MiningConfig) -> PairLabel:
    """
    Apply the mining rules in their fixed order; exactly one rule fires.
    - a, b: the candidate's cameras, posed against the same origin
    """
    if a.frame != b.frame:
        raise UsageError(
            f"pair {cand.id_a}-{cand.id_b}: cameras posed in different local frames "
            f"({a.frame!r} vs {b.frame!r})"
        )

    if cand.num_inliers is not None and cand.num_inliers < cfg.min_candidate_inliers:
        return PairLabel.from_rule(Rule.INDETERMINATE)

    distance = camera_distance(a, b)
    if distance > cfg.distant_threshold:
        return PairLabel.from_rule(Rule.DISTANT)

    angle = view_angle(a, b)
    case = classify_ray_relation(a, b).case

    if case is RayCase.FRONT_FRONT and angle > cfg.max_front_angle:
        return PairLabel.from_rule(Rule.FRONT_FRONT_WIDE_ANGLE)

    if case is RayCase.BEHIND_BEHIND:
        fov = min(diagonal_fov(a.intrinsics, a.width, a.height),
                  diagonal_fov(b.intrinsics, b.width, b.height))
        if angle > fov:
            return PairLabel.from_rule(Rule.BEHIND_BEHIND_OVER_FOV)

    overlap = None
    if case is RayCase.MIXED:
        overlap = frustum_overlap(a, b, cfg.frustum_near, cfg.frustum_far)
        if not overlap:
            return PairLabel.from_rule(Rule.MIXED_NO_FRUSTUM_OVERLAP)

    if (case is RayCase.FRONT_FRONT
            and distance <= cfg.near_positive_distance
            and angle <= cfg.max_positive_angle):
        if overlap is None:
            overlap = frustum_overlap(a, b, cfg.frustum_near, cfg.frustum_far)
        if overlap:
            return PairLabel.from_rule(Rule.POSITIVE_NEARBY_CONVERGING)

    return PairLabel.from_rule(Rule.INDETERMINATE)


def dataset_origin(cams: list[GeoCamera]) -> GeoPoint:
    """
    Centroid of the camera positions: horizontal position of the mean ECEF
    point, mean ellipsoidal height.
    """
    if not cams:
        raise UsageError("cannot choose an origin for an empty camera list")
    positions = [c.position for c in cams]
    ecef = np.array([wgs84_to_ecef(p.lat, p.lon, p.alt).as_array() for p in positions])
    centroid = ecef_to_wgs84(EcefPoint.from_array(ecef.mean(axis=0)))
    return GeoPoint(centroid.lat, centroid.lon, float(np.mean([p.alt for p in positions])))


def rule_counts(labels) -> dict[Rule, int]:
    """
    Number of pairs per rule, every rule present.
    - labels: iterable of (MatchCandidate, PairLabel)
    """
    counts = Counter(label.rule for _, label in labels)
    return {rule: counts.get(rule, 0) for rule in Rule}


def mine_dataset(cams: list[GeoCamera], cands: list[MatchCandidate], cfg: MiningConfig,
                 workers: int | None = None) -> list[tuple[MatchCandidate, PairLabel]]:
    """
    Label every candidate pair of a dataset.
    - cams: all cameras; the ENU origin is their centroid
    - workers: evaluate in a thread pool; output order always follows cands
    """
    by_id: dict[str, GeoCamera] = {}
    for cam in cams:
        if cam.id in by_id:
            raise UsageError(f"duplicate camera id {cam.id!r}")
        by_id[cam.id] = cam

    for cand in cands:
        for image_id in cand.key:
            if image_id not in by_id:
                raise UsageError(f"pair {cand.id_a}-{cand.id_b} references unknown camera id {image_id!r}")

    if not cands:
        return []

    origin = dataset_origin(cams)
    posed = {cam_id: camera_from_geotag(cam, origin) for cam_id, cam in by_id.items()}
    logger.debug("Mining %d pairs over %d cameras, origin %s", len(cands), len(cams), origin)

    def _label(cand: MatchCandidate) -> PairLabel:
        return label_pair(posed[cand.id_a], posed[cand.id_b], cand, cfg)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            labels = list(pool.map(_label, cands))
    else:
        labels = [_label(cand) for cand in cands]

    result = list(zip(cands, labels))
    for rule, count in rule_counts(result).items():
        logger.info("%-26s %d", rule.value, count)
    return result
