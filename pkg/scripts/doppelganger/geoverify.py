"""
Geo-verification of reconstructions: align registered probe cameras to their
geotags with a RANSAC similarity fit per component and pool the inlier ratios.
"""

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from doppelganger.errors import DegenerateInputError, DomainError, UndefinedRatioError, UsageError
from doppelganger.geomcore import EcefPoint, wgs84_to_ecef

logger = logging.getLogger(__name__)

MIN_SAMPLE = 3
REFIT_ROUNDS = 5

# Relative size of the second singular value below which a point set is collinear
_RANK_TOL = 1e-9


@dataclass(frozen=True)
class ProbeCorrespondence:
    """
    A registered probe: its camera position in the model frame and its geotag in ECEF.
    """
    probe_id: str
    model_pos: tuple[float, float, float]
    geo_pos: EcefPoint

    def __post_init__(self):
        model = tuple(float(v) for v in self.model_pos)
        if len(model) != 3 or not all(math.isfinite(v) for v in model):
            raise DomainError(f"probe {self.probe_id}: model position must be 3 finite numbers")
        object.__setattr__(self, "model_pos", model)

    @classmethod
    def from_geotag(cls, probe_id: str, model_pos, lat: float, lon: float, alt: float) -> "ProbeCorrespondence":
        return cls(probe_id, tuple(model_pos), wgs84_to_ecef(lat, lon, alt))


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """
    x -> scale * rotation @ x + translation
    """
    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        translation = np.asarray(self.translation, dtype=float).reshape(3)
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise DomainError(f"similarity scale must be positive, got {self.scale}")
        if np.max(np.abs(rotation.T @ rotation - np.eye(3))) >= 1e-9 or np.linalg.det(rotation) <= 0:
            raise DomainError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    def apply(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return self.scale * points @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.scale * self.rotation
        out[:3, 3] = self.translation
        return out


@dataclass(frozen=True)
class RansacConfig:
    """
    - inlier_threshold: residual bound in meters
    - max_iterations: hard cap on minimal samples
    - confidence: target probability of drawing one all-inlier sample
    - seed: base seed; each component derives its own stream from it
    """
    inlier_threshold: float = 5.0
    max_iterations: int = 10000
    confidence: float = 0.999
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.inlier_threshold) and self.inlier_threshold > 0):
            raise DomainError(f"inlier_threshold must be positive, got {self.inlier_threshold}")
        if self.max_iterations < 1:
            raise DomainError(f"max_iterations must be at least 1, got {self.max_iterations}")
        if not 0.0 < self.confidence < 1.0:
            raise DomainError(f"confidence must lie in (0, 1), got {self.confidence}")
        if self.seed < 0:
            raise DomainError(f"seed must be non-negative, got {self.seed}")


class RansacResult(NamedTuple):
    transform: SimilarityTransform | None
    inliers: np.ndarray


@dataclass(frozen=True)
class ComponentAlignment:
    """
    - inliers: I_i, RANSAC inliers
    - registered: T_i, registered probes
    - unverifiable: fewer than 3 probes, counted with zero inliers
    """
    component_id: str
    transform: SimilarityTransform | None
    inliers: int
    registered: int
    unverifiable: bool = False
    inlier_ids: tuple = ()

    def __post_init__(self):
        if not 0 <= self.inliers <= self.registered:
            raise UsageError(
                f"component {self.component_id}: need 0 <= inliers <= registered, "
                f"got {self.inliers}/{self.registered}"
            )

    @property
    def ratio(self) -> float:
        return self.inliers / self.registered if self.registered else 0.0


@dataclass(frozen=True)
class AlignmentReport:
    per_component: list = field(default_factory=list)
    ir: float = 0.0

    @property
    def total_inliers(self) -> int:
        return sum(c.inliers for c in self.per_component)

    @property
    def total_registered(self) -> int:
        return sum(c.registered for c in self.per_component)


def umeyama(src, dst) -> SimilarityTransform:
    """
    Closed-form least-squares similarity mapping src onto dst.
    - src, dst: (N, 3) arrays with N >= 3, src not collinear
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.ndim != 2 or src.shape[1] != 3 or src.shape != dst.shape:
        raise DegenerateInputError(f"need two (N, 3) point arrays of equal size, got {src.shape} and {dst.shape}")
    n = src.shape[0]
    if n < MIN_SAMPLE:
        raise DegenerateInputError(f"need at least {MIN_SAMPLE} points, got {n}")

    mu_src = src.mean(axis=0)
    mu_dst = dst.mean(axis=0)
    src_c = src - mu_src
    dst_c = dst - mu_dst

    spread = np.linalg.svd(src_c, compute_uv=False)
    if spread[0] == 0 or spread[1] <= _RANK_TOL * spread[0]:
        raise DegenerateInputError("source points are coincident or collinear")

    sigma = dst_c.T @ src_c / n
    u, d, vt = np.linalg.svd(sigma)
    correction = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        correction[2] = -1.0

    rotation = u @ np.diag(correction) @ vt
    var_src = np.sum(src_c ** 2) / n
    scale = float(np.dot(d, correction) / var_src)
    if scale <= 0:
        raise DegenerateInputError("degenerate correspondence set (non-positive scale)")
    translation = mu_dst - scale * rotation @ mu_src
    return SimilarityTransform(scale, rotation, translation)


def _residuals(transform: SimilarityTransform, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    return np.linalg.norm(transform.apply(src) - dst, axis=1)


def _iteration_bound(inlier_fraction: float, confidence: float) -> float:
    if inlier_fraction >= 1.0:
        return 0.0
    all_inliers = inlier_fraction ** MIN_SAMPLE
    if all_inliers <= 0.0:
        return math.inf
    return math.log(1.0 - confidence) / math.log(1.0 - all_inliers)


def ransac_similarity(corrs, cfg: RansacConfig, rng: np.random.Generator | None = None) -> RansacResult:
    """
    Robust similarity fit from model positions to geotag positions.
    - corrs: list of ProbeCorrespondence (>= 3)
    - rng: random stream; defaults to one seeded with cfg.seed
    Returns (transform, inlier mask); the transform is None when no
    non-degenerate minimal sample was found.
    """
    n = len(corrs)
    if n < MIN_SAMPLE:
        raise DegenerateInputError(f"RANSAC needs at least {MIN_SAMPLE} correspondences, got {n}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    src = np.array([c.model_pos for c in corrs], dtype=float)
    dst = np.array([c.geo_pos.as_array() for c in corrs], dtype=float)

    # Center both sides; ECEF magnitudes would otherwise swamp the fit
    src_offset = src.mean(axis=0)
    dst_offset = dst.mean(axis=0)
    src_local = src - src_offset
    dst_local = dst - dst_offset

    best: SimilarityTransform | None = None
    best_mask = np.zeros(n, dtype=bool)
    best_count = 0
    bound = math.inf
    iteration = 0
    while iteration < cfg.max_iterations and iteration < bound:
        iteration += 1
        sample = rng.choice(n, size=MIN_SAMPLE, replace=False)
        try:
            candidate = umeyama(src_local[sample], dst_local[sample])
        except DegenerateInputError:
            continue
        mask = _residuals(candidate, src_local, dst_local) <= cfg.inlier_threshold
        count = int(mask.sum())
        if count > best_count:
            best, best_mask, best_count = candidate, mask, count
            bound = _iteration_bound(count / n, cfg.confidence)

    if best is None:
        logger.warning("RANSAC found no non-degenerate sample in %d iterations", iteration)
        return RansacResult(None, np.zeros(n, dtype=bool))

    # Refit on the consensus set until it stops growing
    for _ in range(REFIT_ROUNDS):
        if best_mask.sum() < MIN_SAMPLE:
            break
        try:
            refit = umeyama(src_local[best_mask], dst_local[best_mask])
        except DegenerateInputError:
            break
        refit_mask = _residuals(refit, src_local, dst_local) <= cfg.inlier_threshold
        if refit_mask.sum() < best_mask.sum():
            break
        unchanged = np.array_equal(refit_mask, best_mask)
        best, best_mask = refit, refit_mask
        if unchanged:
            break

    logger.debug("RANSAC: %d/%d inliers after %d iterations", int(best_mask.sum()), n, iteration)
    translation = best.translation + dst_offset - best.scale * best.rotation @ src_offset
    return RansacResult(SimilarityTransform(best.scale, best.rotation, translation), best_mask)


def pooled_inlier_ratio(per_component) -> float:
    """
    Component-weighted inlier ratio, which collapses to sum(I_i) / sum(T_i).
    - per_component: iterable of (I_i, T_i)
    """
    total_inliers = 0
    total_registered = 0
    for inliers, registered in per_component:
        if not 0 <= inliers <= registered:
            raise DomainError(f"need 0 <= I_i <= T_i, got ({inliers}, {registered})")
        total_inliers += inliers
        total_registered += registered
    if total_registered == 0:
        raise UndefinedRatioError("inlier ratio is undefined without registered probes")
    return total_inliers / total_registered


def component_seed(seed: int, component_id: str) -> np.random.SeedSequence:
    if seed < 0:
        raise DomainError(f"seed must be non-negative, got {seed}")
    digest = hashlib.sha256(str(component_id).encode("utf-8")).digest()
    return np.random.SeedSequence([int(seed), int.from_bytes(digest[:8], "little")])


def _align_component(component_id: str, corrs, cfg: RansacConfig) -> ComponentAlignment:
    ordered = sorted(corrs, key=lambda c: c.probe_id)
    if len(ordered) < MIN_SAMPLE:
        logger.warning("Component %s has %d registered probes; counted as unverifiable",
                       component_id, len(ordered))
        return ComponentAlignment(component_id, None, 0, len(ordered), unverifiable=True)

    rng = np.random.default_rng(component_seed(cfg.seed, component_id))
    transform, mask = ransac_similarity(ordered, cfg, rng)
    inlier_ids = tuple(c.probe_id for c, keep in zip(ordered, mask) if keep)
    logger.info("Component %s: %d/%d inliers", component_id, len(inlier_ids), len(ordered))
    return ComponentAlignment(component_id, transform, len(inlier_ids), len(ordered),
                              inlier_ids=inlier_ids)


def verify_model(components, cfg: RansacConfig, workers: int | None = None) -> AlignmentReport:
    """
    Align every reconstruction component independently and pool the inlier ratios.
    - components: list of (component_id, list of ProbeCorrespondence)
    - workers: align components in a thread pool
    """
    components = list(components)
    if not components:
        raise UsageError("no components to verify")

    seen_components: set[str] = set()
    owner: dict[str, str] = {}
    for component_id, corrs in components:
        if component_id in seen_components:
            raise UsageError(f"component {component_id!r} listed twice")
        seen_components.add(component_id)
        for corr in corrs:
            if corr.probe_id in owner:
                raise UsageError(
                    f"probe {corr.probe_id!r} registered in components "
                    f"{owner[corr.probe_id]!r} and {component_id!r}"
                )
            owner[corr.probe_id] = component_id

    def _run(item):
        component_id, corrs = item
        return _align_component(component_id, corrs, cfg)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run, components))
    else:
        results = [_run(item) for item in components]

    results.sort(key=lambda r: r.component_id)
    unscored = AlignmentReport(results)
    if unscored.total_registered == 0 or all(r.unverifiable for r in results):
        logger.warning("No component has enough registered probes; inlier ratio set to 0")
        return unscored
    ir = pooled_inlier_ratio((r.inliers, r.registered) for r in results)
    return AlignmentReport(results, ir)


def correspondences_from_layout(layout, cams) -> list[ProbeCorrespondence]:
    """
    Pair model-frame camera positions with the cameras' own geotags.
    - layout: mapping camera id -> model position
    - cams: GeoCamera list
    """
    by_id = {cam.id: cam for cam in cams}
    out = []
    for cam_id, position in layout.items():
        if cam_id not in by_id:
            raise UsageError(f"layout references unknown camera {cam_id!r}")
        cam = by_id[cam_id]
        out.append(ProbeCorrespondence.from_geotag(cam_id, position, cam.lat, cam.lon, cam.alt))
    return out
