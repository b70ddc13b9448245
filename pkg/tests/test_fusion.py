import numpy as np
import pytest

from _oracles import oracle_conv2d_masked, oracle_knn
from tridepth import (
    CameraIntrinsics,
    DepthBinning,
    DimensionError,
    DomainError,
    Filter3,
    FusionConfig,
    PointSet,
    PointwiseMap,
    SparseDepthMap,
    coarse_heads,
    conv2d_masked,
    depth_to_points,
    fuse,
    fuse_step,
    knn_aggregate,
    make_distance_aware_binning,
    merge_front_view,
    project_tpv,
)
from tridepth.fusion import _BRUTE_LIMIT, _knn_brute, _knn_tree


def scene_cam(n=32):
    return CameraIntrinsics(
        fx=n * 0.7, fy=n * 0.7, cx=n / 2.0, cy=n / 2.0, width=n, height=n
    )


def sparse_scene(rng, n=32, density=0.1):
    mask = rng.random((n, n)) < density
    depth = np.where(mask, rng.uniform(2.0, 70.0, (n, n)), 0.0)
    return SparseDepthMap(depth, mask)


def box_config(steps=2, k=9):
    return FusionConfig(
        binning=make_distance_aware_binning(80.0),
        k=k,
        steps=steps,
        filter3=Filter3.box(),
        update_front=np.full((3, 3), 1.0 / 9.0),
        update_top=np.full((3, 3), 1.0 / 9.0),
        update_side=np.full((3, 3), 1.0 / 9.0),
    )


class TestKnn:
    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(0)
        pos = rng.normal(0.0, 5.0, (60, 3))
        want = oracle_knn(pos, 4)
        got = _knn_brute(pos, 4)
        assert np.array_equal(got, want)

    def test_tree_path_agrees_with_brute(self):
        rng = np.random.default_rng(1)
        pos = rng.normal(0.0, 5.0, (500, 3))
        assert np.array_equal(_knn_tree(pos, 6), _knn_brute(pos, 6))

    def test_tree_path_ties_on_lattice(self):
        # integer lattice forces many exactly equal distances
        g = np.arange(4, dtype=np.float64)
        pos = np.array(np.meshgrid(g, g, g)).reshape(3, -1).T.copy()
        assert np.array_equal(_knn_tree(pos, 7), _knn_brute(pos, 7))
        assert np.array_equal(_knn_brute(pos, 7), oracle_knn(pos, 7))

    def test_self_is_own_nearest(self):
        rng = np.random.default_rng(2)
        pos = rng.normal(0.0, 5.0, (50, 3))
        neigh = _knn_brute(pos, 1)
        assert np.array_equal(neigh[:, 0], np.arange(50))

    def test_collinear_pairs(self):
        pos = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
        feats = np.array([[0.0], [1.0], [10.0]])
        out = knn_aggregate(PointSet(pos, features=feats), k=2)
        assert np.allclose(out.features[:, 0], [0.5, 0.5, 5.5])

    def test_k1_identity_map_returns_input(self):
        rng = np.random.default_rng(12)
        pos = rng.normal(0.0, 4.0, (30, 3))
        feats = rng.uniform(0.0, 9.0, (30, 2))
        out = knn_aggregate(PointSet(pos, features=feats), k=1)
        assert np.array_equal(out.features, feats)

    def test_aggregate_means_features(self):
        pos = np.array([[0.0, 0.0, z] for z in (1.0, 2.0, 3.0, 10.0)])
        feats = np.array([[1.0], [2.0], [3.0], [10.0]])
        out = knn_aggregate(PointSet(pos, features=feats), k=2)
        # nearest pair of each point, mean feature
        assert np.allclose(out.features[:, 0], [1.5, 1.5, 2.5, 6.5])
        assert np.array_equal(out.positions, pos)

    def test_aggregate_defaults_to_positions(self):
        pos = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]])
        out = knn_aggregate(PointSet(pos), k=2)
        assert np.allclose(out.features, [[0.0, 0.0, 1.5], [0.0, 0.0, 1.5]])

    def test_k_out_of_range(self):
        pts = PointSet(np.zeros((3, 3)) + np.arange(3)[:, None])
        with pytest.raises(DomainError):
            knn_aggregate(pts, k=4)
        with pytest.raises(DomainError):
            knn_aggregate(pts, k=0)

    def test_large_cloud_uses_tree_consistently(self):
        rng = np.random.default_rng(3)
        n = _BRUTE_LIMIT + 10
        pos = rng.normal(0.0, 5.0, (n, 3))
        out = knn_aggregate(PointSet(pos), k=3)
        sub = rng.choice(n, 40, replace=False)
        brute = _knn_brute(pos, 3)
        tree = _knn_tree(pos, 3)
        assert np.array_equal(brute[sub], tree[sub])
        assert np.allclose(out.features[sub], pos[tree[sub]].mean(axis=1))


class TestPointwiseMap:
    def test_identity(self):
        f = np.arange(12.0).reshape(4, 3)
        assert np.array_equal(PointwiseMap.identity().apply(f), f)

    def test_linear(self):
        # weight rows are output channels
        w = np.array([[2.0, 0.0, 1.0], [0.0, 3.0, 1.0]])
        b = np.array([1.0, -1.0])
        f = np.array([[1.0, 2.0, 3.0]])
        out = PointwiseMap.linear(w, b).apply(f)
        assert np.allclose(out, [[6.0, 8.0]])

    def test_mean_pool(self):
        f = np.array([[1.0, 3.0], [2.0, 6.0]])
        out = PointwiseMap.mean_pool().apply(f)
        assert np.allclose(out, [[2.0], [4.0]])

    def test_linear_shape_check(self):
        with pytest.raises(DimensionError):
            PointwiseMap.linear(np.ones((3, 2)), np.ones(5))


class TestConv2dMasked:
    def test_none_kernel_passthrough(self):
        rng = np.random.default_rng(4)
        vals = rng.uniform(1.0, 5.0, (6, 6))
        mask = rng.random((6, 6)) < 0.5
        out_v, out_m = conv2d_masked(vals, mask, None)
        assert np.array_equal(out_v, vals) and np.array_equal(out_m, mask)

    def test_matches_pixel_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            vals = rng.uniform(1.0, 5.0, (7, 9))
            mask = rng.random((7, 9)) < 0.4
            kernel = rng.uniform(-0.3, 1.0, (3, 3))
            got_v, got_m = conv2d_masked(vals, mask, kernel)
            want_v, want_m = oracle_conv2d_masked(vals * mask, mask, kernel)
            assert np.array_equal(got_m, want_m)
            assert np.abs(got_v[got_m] - want_v[want_m]).max() <= 1e-12

    def test_dilates_validity(self):
        vals = np.zeros((5, 5))
        mask = np.zeros((5, 5), dtype=bool)
        vals[2, 2], mask[2, 2] = 4.0, True
        out_v, out_m = conv2d_masked(vals, mask, np.full((3, 3), 1.0 / 9.0))
        assert out_m.sum() == 9
        assert np.allclose(out_v[out_m], 4.0)

    def test_rejects_wrong_kernel_shape(self):
        with pytest.raises(DimensionError):
            conv2d_masked(np.zeros((4, 4)), np.zeros((4, 4), dtype=bool), np.ones((2, 2)))


class TestFuseStep:
    def test_density_monotone_and_values_preserved(self):
        rng = np.random.default_rng(6)
        cam = scene_cam()
        s = sparse_scene(rng)
        views = merge_front_view(
            project_tpv(depth_to_points(s, cam), cam, DepthBinning()), s
        )
        cfg = box_config(steps=1)
        prev = views
        for _ in range(4):
            nxt = fuse_step(prev, cam, cfg)
            for name in ("front", "top", "side"):
                old = getattr(prev, name)
                new = getattr(nxt, name)
                assert new.n_valid >= old.n_valid
                assert np.array_equal(new.values[old.mask], old.values[old.mask])
                assert np.all(new.mask[old.mask])
            prev = nxt

    def test_bit_exact_determinism(self):
        rng = np.random.default_rng(7)
        cam = scene_cam()
        s = sparse_scene(rng)
        views = merge_front_view(
            project_tpv(depth_to_points(s, cam), cam, DepthBinning()), s
        )
        a = fuse(views, cam, box_config(steps=3))
        b = fuse(views, cam, box_config(steps=3))
        for name in ("front", "top", "side"):
            assert np.array_equal(getattr(a, name).values, getattr(b, name).values)
            assert np.array_equal(getattr(a, name).mask, getattr(b, name).mask)

    def test_empty_views_are_a_fixed_point(self):
        cam = scene_cam(8)
        from tridepth import TpvViews

        views = TpvViews.empty(cam.height, cam.width, DepthBinning())
        out = fuse_step(views, cam, box_config(steps=1))
        assert out.front.n_valid == 0 and out.top.n_valid == 0

    def test_k_capped_by_point_count(self):
        cam = scene_cam(8)
        d = np.zeros((8, 8))
        d[4, 4] = 10.0
        s = SparseDepthMap(d, d > 0)
        views = merge_front_view(
            project_tpv(depth_to_points(s, cam), cam, DepthBinning()), s
        )
        out = fuse_step(views, cam, box_config(steps=1, k=9))
        assert out.front.n_valid >= 1

    def test_single_step_equals_one_call(self):
        rng = np.random.default_rng(8)
        cam = scene_cam()
        s = sparse_scene(rng)
        views = merge_front_view(
            project_tpv(depth_to_points(s, cam), cam, DepthBinning()), s
        )
        cfg = box_config(steps=1)
        a = fuse(views, cam, cfg)
        b = fuse_step(views, cam, cfg)
        assert np.array_equal(a.front.values, b.front.values)
        assert np.array_equal(a.front.mask, b.front.mask)

    def test_zero_steps_rejected(self):
        with pytest.raises(DomainError):
            box_config(steps=0)


class TestCoarseHeads:
    def test_identity_heads_copy_views(self):
        rng = np.random.default_rng(9)
        cam = scene_cam()
        s = sparse_scene(rng)
        views = merge_front_view(
            project_tpv(depth_to_points(s, cam), cam, DepthBinning()), s
        )
        o_t, o_s, o_f = coarse_heads(views)
        assert np.array_equal(o_f.values, views.front.values)
        assert np.array_equal(o_t.values, views.top.values)
        assert np.array_equal(o_s.values, views.side.values)

    def test_filter_heads_match_conv_oracle(self):
        rng = np.random.default_rng(10)
        cam = scene_cam(8)
        s = sparse_scene(rng, 8, density=0.5)
        views = merge_front_view(
            project_tpv(depth_to_points(s, cam), cam, DepthBinning()), s
        )
        kernel = rng.uniform(0.1, 1.0, (3, 3))
        o_t, o_s, o_f = coarse_heads(views, front=kernel)
        want_v, want_m = oracle_conv2d_masked(
            views.front.values * views.front.mask, views.front.mask, kernel
        )
        assert np.array_equal(o_f.mask, want_m)
        assert np.abs(o_f.values[want_m] - want_v[want_m]).max() <= 1e-12
        assert np.array_equal(o_t.values, views.top.values)


class TestFusionConfig:
    def test_rejects_bad_k(self):
        with pytest.raises(DomainError):
            box_config(k=0)

    def test_rejects_bad_kernel_shape(self):
        with pytest.raises(DimensionError):
            FusionConfig(
                binning=make_distance_aware_binning(80.0),
                update_front=np.ones((2, 2)),
            )
