"""
Doppelganger scene-graph toolkit: pair mining from geotags, four-score voting,
scene-graph pruning and geo-verification of reconstructions.
"""

from doppelganger.disambig import ScoreQuad, SceneGraph, aggregate, build_graph, components, prune
from doppelganger.geomcore import GeoCamera, GeoPoint, Intrinsics, PosedCamera, camera_from_geotag
from doppelganger.geoverify import RansacConfig, ransac_similarity, umeyama, verify_model
from doppelganger.pairmine import MatchCandidate, MiningConfig, label_pair, mine_dataset
from doppelganger.synth import SynthConfig, generate

__all__ = [
    "GeoCamera",
    "GeoPoint",
    "Intrinsics",
    "MatchCandidate",
    "MiningConfig",
    "PosedCamera",
    "RansacConfig",
    "SceneGraph",
    "ScoreQuad",
    "SynthConfig",
    "aggregate",
    "build_graph",
    "camera_from_geotag",
    "components",
    "generate",
    "label_pair",
    "mine_dataset",
    "prune",
    "ransac_similarity",
    "umeyama",
    "verify_model",
]
