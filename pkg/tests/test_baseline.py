"""Ground-plane homography baseline: fitting, foot points, pair distances."""

import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from distmon.baseline import (
    BoundingBox,
    GroundPlaneMapper,
    baseline_pairs,
    baseline_positions,
    bounding_box,
    fit_ground_homography,
    map_to_ground,
)
from distmon.errors import DegenerateConfiguration, HomogeneousDivideByZero
from distmon.synth import Rng, SceneSpec, generate_scene

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def mask_with(shape, rects):
    mask = np.zeros(shape, dtype=np.int32)
    for label, (u0, v0, u1, v1) in rects.items():
        mask[v0 : v1 + 1, u0 : u1 + 1] = label
    return mask


class TestFitGroundHomography:
    def test_identity_mapping(self):
        h = fit_ground_homography(UNIT_SQUARE, UNIT_SQUARE)
        h = h / h[2, 2]
        np.testing.assert_allclose(h, np.eye(3), atol=1e-9)

    def test_synthesize_map_recover(self):
        rng = Rng(21)
        truth = np.array(
            [[1.2, 0.1, -30.0], [0.05, 0.9, 40.0], [1e-4, -2e-4, 1.0]]
        )
        pts = np.array(
            [[rng.uniform(0, 640), rng.uniform(0, 480)] for _ in range(6)]
        )
        mapped = np.array([map_to_ground(truth, p) for p in pts])
        h = fit_ground_homography(pts, mapped)
        h = h / h[2, 2] * truth[2, 2]
        np.testing.assert_allclose(h, truth, rtol=1e-9, atol=1e-9)

    def test_collinear_points_degenerate(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        with pytest.raises(DegenerateConfiguration):
            fit_ground_homography(pts, UNIT_SQUARE)

    def test_too_few_points(self):
        with pytest.raises(DegenerateConfiguration):
            fit_ground_homography(UNIT_SQUARE[:3], UNIT_SQUARE[:3])

    def test_scale_invariance_with_power_of_two(self):
        rng = Rng(22)
        img = np.array([[rng.uniform(0, 100), rng.uniform(0, 100)] for _ in range(8)])
        gnd = np.array([[rng.uniform(-5, 5), rng.uniform(0, 10)] for _ in range(8)])
        h1 = fit_ground_homography(img, gnd)
        h2 = fit_ground_homography(img, gnd * 2.0)
        probe = np.array([12.3, 45.6])
        x1, y1 = map_to_ground(h1, probe)
        x2, y2 = map_to_ground(h2, probe)
        assert x2 == pytest.approx(2.0 * x1, rel=1e-12)
        assert y2 == pytest.approx(2.0 * y1, rel=1e-12)


class TestMapToGround:
    def test_identity(self):
        assert map_to_ground(np.eye(3), (3.0, 4.0)) == (3.0, 4.0)

    def test_homogeneous_divide_by_zero(self):
        h = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
        with pytest.raises(HomogeneousDivideByZero):
            map_to_ground(h, (0.0, 5.0))


class TestBoundingBoxAndFootPoint:
    def test_foot_point_is_bottom_edge_midpoint(self):
        box = BoundingBox(u_min=10, v_min=20, u_max=30, v_max=60)
        assert box.foot_point == (20.0, 60.0)

    def test_bounding_box_from_mask(self):
        mask = mask_with((80, 80), {1: (10, 20, 30, 60)})
        assert bounding_box(mask, 1) == BoundingBox(10, 20, 30, 60)

    def test_inverted_extents_rejected(self):
        with pytest.raises(ValueError):
            BoundingBox(u_min=5, v_min=0, u_max=4, v_max=0)

    def test_foot_point_on_bottom_edge_for_random_masks(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            u0, v0 = rng.integers(0, 30, 2)
            du, dv = rng.integers(1, 20, 2)
            mask = mask_with((60, 60), {1: (u0, v0, u0 + du, v0 + dv)})
            box = bounding_box(mask, 1)
            foot = box.foot_point
            assert foot[1] == box.v_max
            assert box.u_min <= foot[0] <= box.u_max


class TestBaselinePositions:
    def test_identity_homography_returns_foot_pixels(self):
        mask = mask_with((80, 80), {1: (10, 20, 30, 60), 2: (50, 30, 60, 70)})
        out = baseline_positions(mask, np.eye(3))
        assert out == [(1, (20.0, 60.0)), (2, (55.0, 70.0))]

    def test_min_pixels_filter(self):
        mask = mask_with((80, 80), {1: (10, 20, 30, 60), 2: (50, 30, 50, 30)})
        out = baseline_positions(mask, np.eye(3), min_pixels=2)
        assert [iid for iid, _ in out] == [1]

    def test_pairs_symmetric_and_non_negative(self):
        positions = [(1, (0.0, 0.0)), (2, (3.0, 4.0)), (3, (-1.0, 1.0))]
        pairs = baseline_pairs(positions)
        assert [(p.id_a, p.id_b) for p in pairs] == [(1, 2), (1, 3), (2, 3)]
        assert all(p.distance >= 0 for p in pairs)
        assert pairs[0].distance == pytest.approx(5.0)


class TestSyntheticGroundScene:
    def test_baseline_matches_generator_truth(self):
        spec = SceneSpec(seed=1234, ground_visible=True)
        bundle = generate_scene(spec)
        corr = np.array(bundle.ground.correspondences)
        h = fit_ground_homography(corr[:, :2], corr[:, 2:])
        positions = baseline_positions(bundle.mask, h, min_pixels=40)
        truth = dict(bundle.ground.positions)
        for iid, (x, z) in positions:
            tx, tz = truth[iid]
            assert abs(x - tx) < 1e-6 and abs(z - tz) < 1e-6
        pairs = baseline_pairs(positions, spec.thresholds)
        truth_pairs = {(p.id_a, p.id_b): p.distance for p in bundle.ground.pairs}
        for p in pairs:
            assert abs(p.distance - truth_pairs[(p.id_a, p.id_b)]) < 1e-6


class TestGroundPlaneMapper:
    def test_fit_transform(self):
        rng = Rng(23)
        truth = np.array([[0.01, 0.0, -2.0], [0.0, 0.012, 1.0], [0.0, 1e-4, 1.0]])
        img = np.array([[rng.uniform(0, 600), rng.uniform(200, 420)] for _ in range(10)])
        gnd = np.array([map_to_ground(truth, p) for p in img])
        mapper = GroundPlaneMapper().fit(img, gnd)
        np.testing.assert_allclose(mapper.transform(img), gnd, rtol=1e-8, atol=1e-8)

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            GroundPlaneMapper().transform([[0.0, 0.0]])
