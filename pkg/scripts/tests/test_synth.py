import math
from collections import Counter

import numpy as np
import pytest
from numpy.testing import assert_allclose

from doppelganger.disambig import ScoreQuad, aggregate, build_graph, components, prune
from doppelganger.errors import DomainError, UsageError
from doppelganger.geomcore import camera_from_geotag, ecef_to_enu, wgs84_to_ecef
from doppelganger.pairmine import MatchCandidate, MiningConfig, Verdict, label_pair
from doppelganger.synth import (
    PairTruth,
    SynthConfig,
    adversarial_quads,
    camera_id,
    component_purity,
    generate,
    layout_probes,
    oracle_quad,
    scored_edges,
)


def pruned_groups(scene, scored, tau=0.8):
    g = build_graph(scene.camera_ids(), scored)
    return prune(g, tau)[1].components


class TestGenerate:
    def test_default_scene(self, default_scene):
        scene = default_scene
        assert len(scene.cameras) == 80
        kinds = {cam_id: Counter() for cam_id in scene.camera_ids()}
        for (a, b) in scene.match_graph.edges:
            truth = scene.gt_pair_labels[(a, b)]
            assert truth is not PairTruth.UNRELATED
            kinds[a][truth] += 1
            kinds[b][truth] += 1
        for counts in kinds.values():
            assert counts[PairTruth.TRUE_MATCH] >= 1
            assert counts[PairTruth.DOPPELGANGER] >= 1

    def test_labels_cover_all_pairs(self, default_scene):
        assert len(default_scene.gt_pair_labels) == 80 * 79 // 2

    def test_noiseless_geotags(self, noiseless_scene):
        anchor = noiseless_scene.config.geo_anchor
        for cam in noiseless_scene.cameras:
            enu = ecef_to_enu(wgs84_to_ecef(cam.lat, cam.lon, cam.alt), anchor)
            assert_allclose(enu, noiseless_scene.true_enu[cam.id], atol=1e-6)

    def test_noise_is_bounded_and_horizontal(self, default_scene):
        cfg = default_scene.config
        for cam in default_scene.cameras:
            offset = ecef_to_enu(wgs84_to_ecef(cam.lat, cam.lon, cam.alt), cfg.geo_anchor) - default_scene.true_enu[cam.id]
            assert abs(offset[2]) < 1e-3
            assert np.hypot(offset[0], offset[1]) <= cfg.noise_clip * cfg.noise_std + 1e-6

    def test_deterministic(self):
        first = generate(SynthConfig(seed=4, cams_per_side=10))
        second = generate(SynthConfig(seed=4, cams_per_side=10))
        assert first.cameras == second.cameras
        assert first.gt_pair_labels == second.gt_pair_labels
        assert first.match_graph == second.match_graph
        for cam_id in first.camera_ids():
            assert np.array_equal(first.corrupted_layout[cam_id], second.corrupted_layout[cam_id])
            assert np.array_equal(first.corrected_layout[cam_id], second.corrected_layout[cam_id])

    def test_seed_changes_noise(self):
        first = generate(SynthConfig(seed=1, cams_per_side=5))
        second = generate(SynthConfig(seed=2, cams_per_side=5))
        assert first.cameras != second.cameras

    @pytest.mark.parametrize("kwargs", [
        {"sides": 1},
        {"ring_radius": 5.0, "structure_radius": 10.0},
        {"cams_per_side": 0},
        {"noise_std": -1.0},
    ])
    def test_invalid_config(self, kwargs):
        with pytest.raises(DomainError):
            SynthConfig(**kwargs)

    def test_rotational_symmetry(self):
        scene = generate(SynthConfig(sides=3, cams_per_side=8, noise_std=0.0))
        cfg = scene.config
        turn = 2 * math.pi / cfg.sides
        rotation = np.array([[math.cos(turn), -math.sin(turn), 0], [math.sin(turn), math.cos(turn), 0], [0, 0, 1]])

        def relabel(cam_id):
            side, index = cam_id[1:].split("_c")
            return camera_id((int(side) + 1) % cfg.sides, int(index))

        for cam_id, position in scene.true_enu.items():
            assert_allclose(rotation @ position, scene.true_enu[relabel(cam_id)], atol=1e-9)
        for (a, b), truth in scene.gt_pair_labels.items():
            key = tuple(sorted((relabel(a), relabel(b))))
            assert scene.gt_pair_labels[key] is truth

    def test_side_zero_layouts_agree(self, default_scene):
        for cam_id in default_scene.camera_ids(0):
            assert np.array_equal(default_scene.corrupted_layout[cam_id], default_scene.corrected_layout[cam_id])

    def test_corrupted_layout_collapses(self, default_scene):
        cfg = default_scene.config
        for index in range(cfg.cams_per_side):
            a = default_scene.corrupted_layout[camera_id(0, index)]
            b = default_scene.corrupted_layout[camera_id(1, index)]
            assert_allclose(a, b, atol=1e-9)

    def test_doppelgangers_fire_negative_rules(self, noiseless_scene):
        scene = noiseless_scene
        posed = {cam.id: camera_from_geotag(cam, scene.config.geo_anchor) for cam in scene.cameras}
        cfg = MiningConfig()
        for (a, b), truth in scene.gt_pair_labels.items():
            if truth is PairTruth.DOPPELGANGER:
                lab = label_pair(posed[a], posed[b], MatchCandidate(a, b), cfg)
                assert lab.verdict is Verdict.NEGATIVE


class TestOracle:
    def test_bands(self, default_scene):
        for (a, b), data in default_scene.match_graph.edges.items():
            value = aggregate(oracle_quad(default_scene, (b, a)))
            assert value == data.score
            if default_scene.gt_pair_labels[(a, b)] is PairTruth.TRUE_MATCH:
                assert value >= 0.85
                assert 120 <= data.num_inliers <= 400
            else:
                assert value <= 0.15
                assert 30 <= data.num_inliers <= 120

    def test_non_edge(self, default_scene):
        with pytest.raises(UsageError):
            oracle_quad(default_scene, (camera_id(0, 0), camera_id(0, 30)))

    def test_end_to_end_split(self, default_scene):
        groups = pruned_groups(default_scene, scored_edges(default_scene))
        assert len(groups) == 2
        assert sum(len(g) for g in groups) == 80
        assert component_purity(groups, default_scene) == [1.0, 1.0]
        assert {frozenset(default_scene.camera_ids(k)) for k in range(2)} == set(groups)

    def test_three_sides(self):
        scene = generate(SynthConfig(sides=3, cams_per_side=12))
        groups = pruned_groups(scene, scored_edges(scene))
        assert sorted(len(g) for g in groups) == [12, 12, 12]
        assert component_purity(groups, scene) == [1.0, 1.0, 1.0]

    def test_threshold_insensitive(self, default_scene):
        scored = scored_edges(default_scene)
        reference = pruned_groups(default_scene, scored, 0.2)
        for tau in np.linspace(0.2, 0.8, 13):
            assert pruned_groups(default_scene, scored, float(tau)) == reference

    def test_unpruned_graph_is_connected(self, default_scene):
        assert len(components(default_scene.match_graph)) == 1


class TestAdversarial:
    def test_zero_flip(self, default_scene):
        assert adversarial_quads(default_scene, 0.0) == scored_edges(default_scene)

    def test_ambiguous_example(self):
        assert aggregate(ScoreQuad((0.9, 0.7, 0.3, 0.2))) == pytest.approx(0.525)

    def test_flipped_quads_are_split_votes(self, default_scene):
        flipped = [
            quad for (a, b, quad), (_, _, orig) in zip(adversarial_quads(default_scene, 0.3),
                                                       scored_edges(default_scene))
            if quad != orig
        ]
        assert flipped
        for quad in flipped:
            assert sum(s > 0.5 for s in quad.s) == 2
            assert sum(s < 0.5 for s in quad.s) == 2

    def test_purity_under_flips(self, default_scene):
        groups = pruned_groups(default_scene, adversarial_quads(default_scene, 0.1))
        sizes = [len(g) for g in groups]
        purities = component_purity(groups, default_scene)
        pure_share = sum(p * s for p, s in zip(purities, sizes)) / sum(sizes)
        assert pure_share >= 0.95

    @pytest.mark.parametrize("fraction", [-0.1, 0.5, 0.9])
    def test_invalid_fraction(self, default_scene, fraction):
        with pytest.raises(DomainError):
            adversarial_quads(default_scene, fraction)


def test_layout_probes(default_scene):
    corrupted = layout_probes(default_scene, "corrupted")
    corrected = layout_probes(default_scene, "corrected")
    assert [cid for cid, _ in corrupted] == ["model"]
    assert [cid for cid, _ in corrected] == ["side0", "side1"]
    assert sum(len(c) for _, c in corrected) == 80
    with pytest.raises(UsageError):
        layout_probes(default_scene, "sideways")
