import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.spatial.transform import Rotation

from doppelganger.errors import DegenerateInputError, DomainError, UndefinedRatioError, UsageError
from doppelganger.geomcore import EcefPoint
from doppelganger.geoverify import (
    ComponentAlignment,
    ProbeCorrespondence,
    RansacConfig,
    SimilarityTransform,
    component_seed,
    correspondences_from_layout,
    pooled_inlier_ratio,
    ransac_similarity,
    umeyama,
    verify_model,
)
from doppelganger.synth import SynthConfig, generate, layout_probes

# Somewhere near the surface, so ECEF magnitudes match real probes
ECEF_BASE = np.array([4201000.0, 168000.0, 4780000.0])


def random_transform(rng, scale_range=(0.1, 10.0)):
    return SimilarityTransform(float(rng.uniform(*scale_range)), Rotation.random(None, rng).as_matrix(),
                               rng.uniform(-100, 100, 3))


def correspondences(src, dst, prefix="p"):
    return [ProbeCorrespondence(f"{prefix}{i:03d}", tuple(s), EcefPoint.from_array(d))
            for i, (s, d) in enumerate(zip(src, dst))]


def outlier_instance(rng, n_in, n_out, threshold=5.0):
    truth = SimilarityTransform(float(rng.uniform(0.5, 20)), Rotation.random(None, rng).as_matrix(), ECEF_BASE)
    src = rng.normal(0, 20, size=(n_in + n_out, 3))
    dst = truth.apply(src)
    directions = rng.normal(size=(n_out, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    dst[n_in:] += directions * rng.uniform(100 * threshold, 200 * threshold, size=(n_out, 1))
    order = rng.permutation(n_in + n_out)
    mask = np.zeros(n_in + n_out, dtype=bool)
    mask[:n_in] = True
    return truth, correspondences(src[order], dst[order]), mask[order]


class TestSimilarityTransform:
    def test_rejects_reflection(self):
        with pytest.raises(DomainError):
            SimilarityTransform(1.0, np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_rejects_bad_scale(self):
        with pytest.raises(DomainError):
            SimilarityTransform(0.0, np.eye(3), np.zeros(3))

    def test_matrix(self):
        t = SimilarityTransform(2.0, np.eye(3), [1.0, 2.0, 3.0])
        point = np.array([1.0, 1.0, 1.0])
        assert_allclose(t.matrix() @ np.append(point, 1.0), np.append(t.apply(point), 1.0))


class TestUmeyama:
    SRC = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 1.0]])

    def test_identity(self):
        t = umeyama(self.SRC, self.SRC)
        assert t.scale == pytest.approx(1.0, abs=1e-12)
        assert_allclose(t.rotation, np.eye(3), atol=1e-12)
        assert_allclose(t.translation, np.zeros(3), atol=1e-12)

    def test_pure_scale(self):
        t = umeyama(self.SRC, 2.0 * self.SRC)
        assert t.scale == pytest.approx(2.0, abs=1e-12)
        assert_allclose(t.rotation, np.eye(3), atol=1e-12)
        assert_allclose(t.translation, np.zeros(3), atol=1e-12)

    def test_recovery(self):
        rng = np.random.default_rng(30)
        for _ in range(100):
            truth = random_transform(rng)
            src = rng.uniform(-10, 10, size=(50, 3))
            t = umeyama(src, truth.apply(src))
            assert t.scale == pytest.approx(truth.scale, rel=1e-6)
            assert_allclose(t.rotation, truth.rotation, atol=1e-6)
            assert_allclose(t.translation, truth.translation, rtol=1e-6, atol=1e-6)
            assert_allclose(t.rotation.T @ t.rotation, np.eye(3), atol=1e-9)
            assert np.linalg.det(t.rotation) == pytest.approx(1.0, abs=1e-9)
            assert np.sum((t.apply(src) - truth.apply(src)) ** 2) == pytest.approx(0.0, abs=1e-12)

    def test_local_minimum(self):
        rng = np.random.default_rng(31)
        src = rng.normal(0, 5, size=(30, 3))
        dst = random_transform(rng).apply(src) + rng.normal(0, 0.5, size=(30, 3))
        best = umeyama(src, dst)
        cost = np.sum((best.apply(src) - dst) ** 2)
        for _ in range(100):
            nudge = Rotation.from_rotvec(rng.normal(0, 1e-3, 3)).as_matrix()
            other = SimilarityTransform(best.scale * (1 + rng.normal(0, 1e-3)), nudge @ best.rotation,
                                        best.translation + rng.normal(0, 1e-3, 3))
            assert np.sum((other.apply(src) - dst) ** 2) >= cost - 1e-9

    def test_equivariance(self):
        rng = np.random.default_rng(32)
        src = rng.normal(0, 5, size=(20, 3))
        dst = random_transform(rng).apply(src)
        q = Rotation.random(None, rng).as_matrix()
        base = umeyama(src, dst)
        turned = umeyama(src, dst @ q.T)
        assert turned.scale == pytest.approx(base.scale, rel=1e-9)
        assert_allclose(turned.rotation, q @ base.rotation, atol=1e-9)
        assert_allclose(turned.translation, q @ base.translation, atol=1e-9)

    def test_collinear(self):
        line = np.outer(np.arange(5.0), [1.0, 2.0, 3.0])
        with pytest.raises(DegenerateInputError):
            umeyama(line, line)

    def test_coincident(self):
        with pytest.raises(DegenerateInputError):
            umeyama(np.ones((4, 3)), np.ones((4, 3)))

    def test_too_few(self):
        with pytest.raises(DegenerateInputError):
            umeyama(self.SRC[:2], self.SRC[:2])


class TestRansac:
    def test_exact(self):
        rng = np.random.default_rng(40)
        truth, corrs, _ = outlier_instance(rng, 20, 0)
        transform, mask = ransac_similarity(corrs, RansacConfig())
        assert mask.all()
        assert transform.scale == pytest.approx(truth.scale, rel=1e-6)
        assert_allclose(transform.rotation, truth.rotation, atol=1e-6)
        assert_allclose(transform.translation, truth.translation, atol=1e-6)

    def test_outliers_rejected(self):
        rng = np.random.default_rng(41)
        _, corrs, expected = outlier_instance(rng, 14, 6)
        _, mask = ransac_similarity(corrs, RansacConfig())
        assert np.array_equal(mask, expected)

    def test_too_few(self):
        rng = np.random.default_rng(42)
        _, corrs, _ = outlier_instance(rng, 2, 0)
        with pytest.raises(DegenerateInputError):
            ransac_similarity(corrs, RansacConfig())

    def test_deterministic(self):
        rng = np.random.default_rng(43)
        _, corrs, _ = outlier_instance(rng, 10, 10)
        cfg = RansacConfig(seed=7)
        first, mask_first = ransac_similarity(corrs, cfg)
        second, mask_second = ransac_similarity(corrs, cfg)
        assert np.array_equal(mask_first, mask_second)
        assert_allclose(first.matrix(), second.matrix())

    def test_inliers_within_threshold(self):
        rng = np.random.default_rng(44)
        src = rng.normal(0, 20, size=(40, 3))
        dst = random_transform(rng).apply(src) + rng.normal(0, 2.0, size=(40, 3))
        corrs = correspondences(src, dst)
        cfg = RansacConfig(inlier_threshold=3.0)
        transform, mask = ransac_similarity(corrs, cfg)
        residuals = np.linalg.norm(transform.apply(src) - dst, axis=1)
        assert np.all(residuals[mask] <= cfg.inlier_threshold)
        assert np.all(residuals[~mask] > cfg.inlier_threshold)

    def test_all_collinear_fails(self):
        src = np.outer(np.arange(6.0), [1.0, 1.0, 0.0])
        corrs = correspondences(src, src + ECEF_BASE)
        transform, mask = ransac_similarity(corrs, RansacConfig(max_iterations=50))
        assert transform is None
        assert not mask.any()

    def test_seventy_thirty(self):
        rng = np.random.default_rng(45)
        exact = 0
        for seed in range(100):
            _, corrs, expected = outlier_instance(rng, 14, 6)
            _, mask = ransac_similarity(corrs, RansacConfig(seed=seed))
            exact += np.array_equal(mask, expected)
        assert exact >= 99

    @pytest.mark.parametrize("kwargs", [
        {"inlier_threshold": 0.0}, {"confidence": 1.0}, {"max_iterations": 0}, {"seed": -1},
    ])
    def test_invalid_config(self, kwargs):
        with pytest.raises(DomainError):
            RansacConfig(**kwargs)


class TestPooledRatio:
    @pytest.mark.parametrize("parts, expected", [
        ([(5, 10), (3, 5)], 8 / 15),
        ([(7, 10)], 0.7),
        ([(10, 10), (0, 10)], 0.5),
    ])
    def test_examples(self, parts, expected):
        assert pooled_inlier_ratio(parts) == pytest.approx(expected, abs=1e-12)

    def test_weighted_average_identity(self):
        rng = np.random.default_rng(50)
        for _ in range(1000):
            registered = rng.integers(1, 200, size=rng.integers(1, 8))
            inliers = [int(rng.integers(0, t + 1)) for t in registered]
            total = registered.sum()
            weighted = sum(i / t * (t / total) for i, t in zip(inliers, registered))
            ratio = pooled_inlier_ratio(zip(inliers, registered))
            assert 0.0 <= ratio <= 1.0
            assert ratio == pytest.approx(weighted, abs=1e-12)

    def test_undefined(self):
        with pytest.raises(UndefinedRatioError):
            pooled_inlier_ratio([(0, 0)])

    def test_inliers_exceed_registered(self):
        with pytest.raises(DomainError):
            pooled_inlier_ratio([(6, 5)])


class TestVerifyModel:
    def test_single_exact_component(self):
        rng = np.random.default_rng(60)
        _, corrs, _ = outlier_instance(rng, 20, 0)
        report = verify_model([("model", corrs)], RansacConfig())
        assert report.ir == 1.0
        assert report.per_component[0].inliers == 20

    def test_empty(self):
        with pytest.raises(UsageError):
            verify_model([], RansacConfig())

    def test_probe_in_two_components(self):
        rng = np.random.default_rng(61)
        _, corrs, _ = outlier_instance(rng, 5, 0)
        with pytest.raises(UsageError):
            verify_model([("a", corrs), ("b", corrs[:3])], RansacConfig())

    def test_small_component_counts_against(self):
        rng = np.random.default_rng(62)
        _, big, _ = outlier_instance(rng, 8, 0)
        _, small, _ = outlier_instance(rng, 2, 0)
        small = correspondences([c.model_pos for c in small], [c.geo_pos.as_array() for c in small], "q")
        report = verify_model([("big", big), ("small", small)], RansacConfig())
        flags = {c.component_id: c.unverifiable for c in report.per_component}
        assert flags == {"big": False, "small": True}
        assert report.ir == pytest.approx(8 / 10)

    def test_all_unverifiable(self, caplog):
        rng = np.random.default_rng(63)
        _, corrs, _ = outlier_instance(rng, 2, 0)
        with caplog.at_level(logging.WARNING, logger="doppelganger.geoverify"):
            report = verify_model([("tiny", corrs)], RansacConfig())
        assert report.ir == 0.0
        assert "inlier ratio" in caplog.text

    def test_order_invariance(self):
        rng = np.random.default_rng(64)
        _, first, _ = outlier_instance(rng, 12, 4)
        _, second, _ = outlier_instance(rng, 9, 3)
        second = correspondences([c.model_pos for c in second], [c.geo_pos.as_array() for c in second], "q")
        report = verify_model([("a", first), ("b", second)], RansacConfig(seed=3))
        shuffled = [("b", second[::-1]), ("a", [first[i] for i in rng.permutation(len(first))])]
        again = verify_model(shuffled, RansacConfig(seed=3), workers=2)
        assert again.ir == report.ir
        assert [(c.component_id, c.inlier_ids) for c in again.per_component] == \
               [(c.component_id, c.inlier_ids) for c in report.per_component]

    def test_alignment_invariant(self):
        with pytest.raises(UsageError):
            ComponentAlignment("x", None, 5, 4)

    def test_component_seed_depends_on_id(self):
        a = np.random.default_rng(component_seed(0, "a")).integers(1 << 30)
        b = np.random.default_rng(component_seed(0, "b")).integers(1 << 30)
        a_again = np.random.default_rng(component_seed(0, "a")).integers(1 << 30)
        assert a == a_again
        assert a != b

    def test_component_seed_uses_full_seed(self):
        low = np.random.default_rng(component_seed(1, "a")).integers(1 << 30, size=4)
        high = np.random.default_rng(component_seed(1 + (1 << 32), "a")).integers(1 << 30, size=4)
        assert not np.array_equal(low, high)
        with pytest.raises(DomainError):
            component_seed(-1, "a")


@pytest.mark.parametrize("seed", range(10))
def test_synthetic_layouts(seed):
    scene = generate(SynthConfig(seed=seed, noise_std=1.0))
    cfg = RansacConfig(inlier_threshold=2.0, seed=seed)
    corrupted = verify_model(layout_probes(scene, "corrupted"), cfg)
    corrected = verify_model(layout_probes(scene, "corrected"), cfg)
    assert corrupted.ir <= 0.6
    assert corrected.ir >= 0.95
    assert len(corrected.per_component) == 2


def test_correspondences_from_layout(noiseless_scene):
    layout = {cam_id: noiseless_scene.corrected_layout[cam_id] for cam_id in noiseless_scene.camera_ids(1)}
    corrs = correspondences_from_layout(layout, noiseless_scene.cameras)
    assert [c.probe_id for c in corrs] == noiseless_scene.camera_ids(1)
    result = ransac_similarity(corrs, RansacConfig(inlier_threshold=0.5))
    assert result.inliers.all()
    with pytest.raises(UsageError):
        correspondences_from_layout({"ghost": (0.0, 0.0, 0.0)}, noiseless_scene.cameras)


def test_report_totals(default_scene):
    report = verify_model(layout_probes(default_scene, "corrected"), RansacConfig(inlier_threshold=2.0))
    assert report.total_registered == 80
    assert report.ir == pytest.approx(report.total_inliers / report.total_registered, abs=1e-12)
    for c in report.per_component:
        assert c.ratio == pytest.approx(c.inliers / c.registered)
    unverifiable = ComponentAlignment("tiny", None, 0, 2, unverifiable=True)
    assert unverifiable.ratio == 0.0
