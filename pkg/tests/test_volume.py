import math

import numpy as np
import pytest

import boundvol as bv
from boundvol.oracles import HalfspaceOracle, SphereOracle
from boundvol.volume import (
    RegionSpec,
    ball_union,
    clt_halfwidth,
    estimate_bvol,
    epsilon_sweep,
    hoeffding_tail,
    sample_region,
    unit_cube,
    wilson_interval,
)


class TestRegions:
    def test_unit_cube_samples_inside(self):
        pts = sample_region(unit_cube(5), seed=1, count=5000)
        assert pts.shape == (5000, 5)
        assert pts.min() >= 0.0 and pts.max() <= 1.0
        # coarse uniformity check on the first coordinate
        assert abs(pts[:, 0].mean() - 0.5) < 0.02

    def test_ball_union_samples_in_balls(self):
        centers = np.array([[0.2, 0.2], [0.8, 0.8]])
        pts = sample_region(ball_union(centers, 0.1), seed=2, count=4000)
        dists = np.min(np.max(np.abs(pts[:, None, :] - centers[None]), axis=-1), axis=1)
        assert dists.max() <= 0.1 + 1e-12

    def test_disjoint_balls_split_evenly(self):
        # half min center distance keeps the union disjoint; both balls
        # should receive about half of the samples
        centers = np.array([[0.1, 0.1], [0.9, 0.9]])
        pts = sample_region(ball_union(centers, 0.05), seed=3, count=10_000)
        near_first = np.max(np.abs(pts - centers[0]), axis=-1) <= 0.05
        assert abs(near_first.mean() - 0.5) < 0.02

    def test_clip_to_cube(self):
        centers = np.array([[0.0, 0.0]])
        pts = sample_region(ball_union(centers, 0.2, clip_to_cube=True), seed=4, count=2000)
        assert pts.min() >= 0.0

    def test_no_clip_by_default(self):
        pts = sample_region(ball_union(np.array([[0.0, 0.0]]), 0.2), seed=4, count=2000)
        assert pts.min() < 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            RegionSpec("triangle", 2)
        with pytest.raises(ValueError):
            ball_union(np.zeros((0, 2)), 0.1)
        with pytest.raises(ValueError):
            ball_union(np.zeros((1, 2)), 0.0)


class TestIntervals:
    def test_clt_halfwidth_example(self):
        # p-hat = 0.5 at l = 10^4 gives 1.96 / (2 * 100) = 0.0098
        assert clt_halfwidth(5000, 10_000) == pytest.approx(0.0098, abs=1e-4)

    def test_clt_shrinks_with_sqrt_l(self):
        a = clt_halfwidth(100, 1000)
        b = clt_halfwidth(10_000, 100_000)
        assert a / b == pytest.approx(10.0, rel=1e-6)

    def test_wilson_nonzero_at_edges(self):
        lo, hi = wilson_interval(0, 1000)
        assert lo == pytest.approx(0.0, abs=1e-12) and hi > 1e-4
        lo, hi = wilson_interval(1000, 1000)
        assert lo < 1.0 - 1e-4 and hi == pytest.approx(1.0, abs=1e-12)

    def test_hoeffding_frozen_value(self):
        assert hoeffding_tail(100_000, 0.01) == pytest.approx(2.0612e-9, rel=2e-2)

    def test_hoeffding_volume_scaling(self):
        assert hoeffding_tail(1000, 0.1, vol_u=2.0) == pytest.approx(
            math.exp(-2 * 1000 * 0.01 / 4))


class TestOracleEstimates:
    def test_halfspace_slab_volume(self):
        oracle = HalfspaceOracle(4)
        est = estimate_bvol(oracle, unit_cube(4), 0.05, 100_000, seed=7)
        assert abs(est.estimate - 0.1) <= 3 * est.clt_halfwidth

    def test_halfspace_ci_coverage(self):
        # criterion-8 style check at reduced size: the CLT interval
        # should cover the true slab volume in at least 90% of reps
        oracle = HalfspaceOracle(2)
        eps = 0.05
        covered = 0
        for rep in range(100):
            est = estimate_bvol(oracle, unit_cube(2), eps, 20_000, seed=1000 + rep)
            if abs(est.estimate - 2 * eps) <= est.clt_halfwidth:
                covered += 1
        assert covered >= 90

    def test_sphere_annulus_volume(self):
        r, eps = 0.3, 0.05
        oracle = SphereOracle(np.array([0.5, 0.5]), r)
        true = math.pi * ((r + eps) ** 2 - (r - eps) ** 2)
        est = estimate_bvol(oracle, unit_cube(2), eps, 200_000, seed=9)
        assert abs(est.estimate - true) <= 3 * est.clt_halfwidth

    def test_zero_epsilon_gives_zero(self):
        est = estimate_bvol(HalfspaceOracle(2), unit_cube(2), 0.0, 1000, seed=0)
        assert est.successes == 0
        assert est.wilson_interval is not None

    def test_invalid_trials(self):
        with pytest.raises(ValueError):
            estimate_bvol(HalfspaceOracle(2), unit_cube(2), 0.1, 0)


class TestSweep:
    def test_monotone_by_construction(self):
        oracle = HalfspaceOracle(3)
        out = epsilon_sweep(oracle, unit_cube(3), [0.01, 0.02, 0.05, 0.1], 20_000, seed=5)
        ests = [e.estimate for e in out]
        assert all(a <= b for a, b in zip(ests, ests[1:]))
        for e in out:
            assert abs(e.estimate - 2 * e.epsilon) <= 4 * max(e.clt_halfwidth, 1e-3)

    def test_non_increasing_grid_rejected(self):
        with pytest.raises(ValueError):
            epsilon_sweep(HalfspaceOracle(2), unit_cube(2), [0.1, 0.05], 100)
        with pytest.raises(ValueError):
            epsilon_sweep(HalfspaceOracle(2), unit_cube(2), [0.0, 0.1], 100)


class TestDeterminism:
    def test_worker_count_invariance_oracle(self):
        oracle = HalfspaceOracle(4)
        outs = [estimate_bvol(oracle, unit_cube(4), 0.05, 30_000, seed=3, workers=w)
                for w in (1, 4, 8)]
        assert outs[0].successes == outs[1].successes == outs[2].successes

    def test_worker_count_invariance_network(self):
        ds = bv.make_synthetic("blobs", 80, seed=2)
        from boundvol.layers import LayerSpec

        net = bv.init_he_normal(
            bv.build_network(
                [LayerSpec("dense", in_units=2, out_units=8, activation="relu"),
                 LayerSpec("dense", in_units=8, out_units=2, activation="softmax")]
            ), 6)
        net, _ = bv.train(net, ds, bv.TrainConfig(optimizer="sgd", learning_rate=0.1,
                                                  epochs=10, batch_size=16, seed=1))
        outs = [estimate_bvol(net, unit_cube(2), 0.05, 5000, seed=11, workers=w)
                for w in (1, 4, 8)]
        assert outs[0].successes == outs[1].successes == outs[2].successes
        assert outs[0].zero_grad_count == outs[2].zero_grad_count

    def test_sample_region_seed_sensitivity(self):
        a = sample_region(unit_cube(3), seed=1, count=100)
        b = sample_region(unit_cube(3), seed=2, count=100)
        assert not np.array_equal(a, b)


class TestNamedMeasures:
    def make_net_and_data(self):
        ds = bv.make_synthetic("blobs", 100, seed=8)
        from boundvol.layers import LayerSpec

        net = bv.init_he_normal(
            bv.build_network(
                [LayerSpec("dense", in_units=2, out_units=8, activation="relu"),
                 LayerSpec("dense", in_units=8, out_units=2, activation="softmax")]
            ), 4)
        net, _ = bv.train(net, ds, bv.TrainConfig(optimizer="adam", learning_rate=0.01,
                                                  epochs=20, batch_size=16, seed=2))
        return net, ds

    def test_run_bvol_metadata(self):
        net, _ = self.make_net_and_data()
        est = bv.run_bvol(net, 2, 0.05, trials=2000, seed=1)
        assert est.measure == "bvol"
        assert est.trials == 2000 and est.delta is None

    def test_run_train_bvol_subset(self):
        net, ds = self.make_net_and_data()
        est = bv.run_train_bvol(net, ds, 0.05, 0.2, trials=2000, subset=50, seed=1)
        assert est.measure == "train_bvol"
        assert est.n_centers == 50 and est.delta == 0.2

    def test_run_ladv_bvol_high_mass(self):
        # balls centered on boundary points with gap bound well below
        # epsilon should have estimate bounded away from zero
        net, ds = self.make_net_and_data()
        est = bv.run_ladv_bvol(net, ds, 0.1, 0.1, alpha=10, boundary_points=64,
                               trials=4000, seed=1)
        assert est.measure == "ladv_bvol" and est.alpha == 10
        assert est.estimate > 0.2

    def test_ladv_rejects_constant_network(self):
        from boundvol.attack import InvalidPairError
        from boundvol.layers import LayerSpec

        ds = bv.make_synthetic("blobs", 20, seed=1)
        net = bv.build_network(
            [LayerSpec("dense", in_units=2, out_units=2, activation="softmax")]
        )
        with pytest.raises(InvalidPairError):
            bv.run_ladv_bvol(net, ds, 0.05, 0.1, boundary_points=8, trials=100, seed=0)
