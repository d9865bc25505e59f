import math

import numpy as np
import pytest

from clusterfb.rng import stream_generator
from clusterfb.simulation import draw_channel_vars
from clusterfb.thresholds import (ClusterPlan, compute_thresholds, crossing_point,
                                  homogeneous_thresholds, loss_probability,
                                  max_expectation_bound, min_clusters, partition_users,
                                  rate_loss_analysis, rate_loss_bound, truncated_moments,
                                  type1_thresholds, type2_thresholds)

from oracles import rank_probability_enumeration, truncated_moments_quad


def reference_rates(seed, K=100, M=4, P=10.0, noise=1.0):
    variances = draw_channel_vars(stream_generator(seed, 1), K)
    return M * noise / (P * variances)


class TestPartition:
    def test_even(self):
        plan = partition_users(np.arange(1, 9, dtype=float), 4)
        assert plan.sizes == (2, 2, 2, 2)

    def test_remainder_goes_first(self):
        assert partition_users(np.arange(1, 8, dtype=float), 4).sizes == (2, 2, 2, 1)

    def test_single_cluster(self):
        plan = partition_users([3.0, 1.0, 2.0], 1)
        assert plan.sizes == (3,)
        assert plan.region_bits == 0

    def test_sorted_by_decreasing_mean(self):
        rates = np.array([2.0, 0.5, 1.0, 4.0, 0.25])
        plan = partition_users(rates, 2)
        order = np.concatenate(plan.clusters)
        assert np.all(np.diff(rates[order]) >= 0)

    def test_every_user_once(self, rng):
        rates = rng.uniform(0.1, 3, 23)
        plan = partition_users(rates, 5)
        assert sorted(np.concatenate(plan.clusters).tolist()) == list(range(23))
        assert max(plan.sizes) - min(plan.sizes) <= 1

    def test_too_many_clusters(self):
        with pytest.raises(ValueError):
            partition_users([1.0, 2.0], 3)

    @pytest.mark.parametrize("n, bits", [(1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (8, 3)])
    def test_region_bits(self, n, bits):
        assert partition_users(np.ones(8), n).region_bits == bits


class TestCrossingPoint:
    @pytest.mark.parametrize("lam, L", [(1.0, 2), (0.4, 5), (2.5, 12)])
    def test_homogeneous_closed_form(self, lam, L):
        assert crossing_point([lam] * L, 0, 1) == pytest.approx(math.log(L) / lam, rel=1e-10)

    def test_homogeneous_higher_ranks(self):
        # P_n = P_{n+1} for a binomial(L-1, q) at q = n / L.
        lam, L = 0.7, 6
        for n in range(1, L):
            assert crossing_point([lam] * L, 2, n) == pytest.approx(math.log(L / n) / lam,
                                                                    rel=1e-9)

    def test_heterogeneous_three_enumeration(self, rng):
        for _ in range(20):
            rates = rng.uniform(0.1, 3.0, 3)
            m = int(rng.integers(3))
            r = crossing_point(rates, m, 1)
            p1 = rank_probability_enumeration(rates, m, 1, r)
            p2 = rank_probability_enumeration(rates, m, 2, r)
            assert abs(p1 - p2) < 1e-10

    def test_single_member(self):
        with pytest.raises(ValueError):
            crossing_point([1.0], 0, 1)

    def test_rank_out_of_range(self):
        with pytest.raises(IndexError):
            crossing_point([1.0, 2.0], 0, 2)


class TestTypeThresholds:
    def test_type1_equals_type2_homogeneous(self):
        plan = partition_users(np.full(12, 0.8), 3)
        np.testing.assert_allclose(type1_thresholds(plan), type2_thresholds(plan), rtol=1e-10)

    def test_singleton_clusters(self):
        plan = partition_users([0.3, 0.9, 1.4], 3)
        np.testing.assert_array_equal(type1_thresholds(plan), [0.0, 0.0, 0.0])
        np.testing.assert_array_equal(type2_thresholds(plan), [0.0, 0.0, 0.0])

    def test_type2_substitution(self):
        plan = partition_users(np.full(25, 0.4), 1)
        assert type2_thresholds(plan)[0] == pytest.approx(math.log(25) / 0.4, rel=1e-14)
        assert math.log(25) / 0.4 == pytest.approx(8.0472, abs=5e-5)
        assert crossing_point(np.full(25, 0.4), 0, 1) == pytest.approx(8.0472, abs=5e-5)

    def test_single_cluster_matches_homogeneous(self):
        plan = partition_users(np.full(10, 1.3), 1)
        assert type2_thresholds(plan)[0] == pytest.approx(homogeneous_thresholds(1.3, 10, 1)[0])

    def test_type2_uses_cluster_average(self):
        rates = np.array([0.2, 0.4, 1.0, 2.0])
        plan = partition_users(rates, 2)
        np.testing.assert_allclose(type2_thresholds(plan),
                                   [math.log(2) / 0.3, math.log(2) / 1.5])

    @pytest.mark.parametrize("variant", ["type1", "type2"])
    def test_weakly_decreasing(self, variant, rng):
        for _ in range(10):
            rates = 0.4 / (1.0 - rng.random(int(rng.integers(4, 60))))
            n_clusters = int(rng.integers(1, 5))
            plan = compute_thresholds(partition_users(rates, n_clusters), variant)
            assert np.all(np.diff(plan.thresholds) <= 1e-12)
            assert np.all(plan.thresholds >= 0)

    def test_type1_at_least_member_crossings(self, rng):
        rates = rng.uniform(0.2, 2.0, 5)
        plan = compute_thresholds(partition_users(rates, 1), "type1")
        for m in range(5):
            assert plan.thresholds[0] >= crossing_point(rates, m, 1) - 1e-12

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            compute_thresholds(partition_users([1.0, 2.0], 1), "type3")

    def test_with_thresholds_validation(self):
        plan = partition_users([1.0, 2.0, 3.0, 4.0], 2)
        with pytest.raises(ValueError):
            plan.with_thresholds([0.1, 0.5])
        with pytest.raises(ValueError):
            plan.with_thresholds([0.5])
        with pytest.raises(ValueError):
            plan.with_thresholds([0.5, -0.1])

    def test_records(self):
        plan = compute_thresholds(partition_users([1.0, 2.0, 3.0], 2), "type2")
        rows = plan.to_records()
        assert [r[0] for r in rows] == [1, 1, 2]
        assert isinstance(plan, ClusterPlan)


class TestHomogeneous:
    def test_four_users(self):
        np.testing.assert_allclose(homogeneous_thresholds(1.0, 4, 4),
                                   [math.log(4), math.log(2), math.log(4 / 3), 0.0],
                                   atol=1e-15)

    def test_last_is_zero(self):
        assert homogeneous_thresholds(0.3, 9, 9)[-1] == 0.0

    def test_strictly_decreasing(self):
        assert np.all(np.diff(homogeneous_thresholds(0.5, 30, 10)) < 0)

    def test_matches_crossings(self):
        K, lam = 8, 0.6
        thr = homogeneous_thresholds(lam, K, 4)
        for p in range(1, 5):
            assert thr[p - 1] == pytest.approx(crossing_point([lam] * K, 0, p), rel=1e-9)


class TestLossProbability:
    def test_zero_threshold(self):
        assert loss_probability([0.3, 1.0], 0.0) == 0.0

    def test_two_users(self, rng):
        assert loss_probability([1.0, 1.0], math.log(2)) == pytest.approx(0.25)
        x = rng.exponential(1.0, (10**6, 2)).max(axis=1)
        assert np.mean(x < math.log(2)) == pytest.approx(0.25, abs=2e-3)

    def test_decreases_when_users_added(self, rng):
        rates = list(rng.uniform(0.1, 2.0, 3))
        prev = loss_probability(rates, 1.5)
        for _ in range(20):
            rates.append(rng.uniform(0.1, 2.0))
            cur = loss_probability(rates, 1.5)
            assert cur <= prev
            prev = cur


class TestTruncatedMoments:
    def test_zero_threshold(self):
        assert truncated_moments(1.0, 0.0) == (0.0, 0.0)

    def test_untruncated(self):
        assert truncated_moments(1.0, np.inf) == (1.0, 1.0)
        mean, var = truncated_moments(1.0, 60.0)
        assert mean == pytest.approx(1.0) and var == pytest.approx(1.0)

    def test_unit(self):
        mean, _ = truncated_moments(1.0, 1.0)
        assert mean == pytest.approx(1 - 2 / math.e, rel=1e-14)
        assert mean == pytest.approx(0.26424, abs=5e-6)

    @pytest.mark.parametrize("lam, r", [(1.0, 1.0), (0.4, 3.0), (2.5, 0.1), (0.05, 40.0)])
    def test_quadrature(self, lam, r):
        np.testing.assert_allclose(truncated_moments(lam, r), truncated_moments_quad(lam, r),
                                   rtol=1e-9, atol=1e-14)


class TestMaxExpectationBound:
    def test_hand_evaluation(self):
        assert max_expectation_bound([1.0, 1.0], [1.0, 1.0]) == pytest.approx(2.0)

    def test_at_least_max_mean(self, rng):
        for _ in range(100):
            K = int(rng.integers(2, 30))
            means = rng.uniform(0, 3, K)
            variances = rng.uniform(0, 2, K)
            assert max_expectation_bound(means, variances) >= means.max() - 1e-12

    def test_bounds_monte_carlo_max(self, rng):
        rates = np.array([0.4, 0.7, 1.0, 2.0, 3.0])
        r = 2.0
        x = rng.exponential(1.0 / rates, size=(10**6, rates.size))
        z = np.where(x <= r, x, 0.0).max(axis=1)
        moments = np.array([truncated_moments(lam, r) for lam in rates])
        bound = max_expectation_bound(moments[:, 0], moments[:, 1])
        assert z.mean() <= bound

    def test_needs_two(self):
        with pytest.raises(ValueError):
            max_expectation_bound([1.0], [1.0])


class TestRateLossBound:
    def test_zero_threshold(self):
        assert rate_loss_bound([0.4, 0.8], 0.0, 4) == 0.0

    def test_single_user_uses_mean(self):
        info = rate_loss_analysis([1.0], 1.0, 1)
        assert info.expectation_bound == pytest.approx(1 - 2 / math.e)

    def test_invariants(self, rng):
        rates = rng.uniform(0.2, 3.0, 8)
        info = rate_loss_analysis(rates, 0.7, 4)
        assert 0 <= info.loss_probability <= 1
        assert info.expectation_bound >= info.means.max()
        assert info.total >= 0

    @pytest.mark.parametrize("seed", range(4))
    def test_bounds_truncated_loss(self, seed):
        # Monte Carlo of M E[log2(1 + Z_(1))] P_L with Z_(1) the max truncated variable.
        rng = np.random.default_rng(100 + seed)
        K = int(rng.integers(2, 12))
        rates = rng.uniform(0.2, 2.0, K)
        r_min = rng.uniform(0.2, 2.5)
        x = rng.exponential(1.0 / rates, size=(10**6, K))
        samples = 4 * np.log2(1 + np.where(x <= r_min, x, 0.0).max(axis=1))
        samples *= loss_probability(rates, r_min)
        se = samples.std(ddof=1) / math.sqrt(samples.size)
        assert samples.mean() - 3 * se <= rate_loss_bound(rates, r_min, 4)

    def test_vanishes_with_users(self):
        rng = np.random.default_rng(3)
        rates = 0.4 / (1.0 - rng.random(200))
        values = [rate_loss_bound(rates[:K], 1.0, 4) for K in (10, 50, 100, 200)]
        assert all(b < a for a, b in zip(values, values[1:]))
        assert values[-1] < 1e-3 * values[0]

    def test_nonincreasing_in_clusters(self, rng):
        rates = reference_rates(5, K=40)
        for variant in ("type1", "type2"):
            bounds = [rate_loss_bound(rates,
                                      compute_thresholds(partition_users(rates, n),
                                                         variant).smallest_threshold, 4)
                      for n in range(1, 9)]
            assert all(b <= a * (1 + 1e-9) + 1e-300 for a, b in zip(bounds, bounds[1:]))


class TestMinClusters:
    def test_huge_tolerance(self, rng):
        assert min_clusters(rng.uniform(0.2, 2, 20), 1e9, 4) == 1

    @pytest.mark.parametrize("variant", ["type1", "type2"])
    def test_tiny_tolerance_needs_singleton_last_cluster(self, variant):
        # A singleton weakest cluster has threshold 0 and a zero bound; the first
        # count giving one is floor(K/2) + 1, so the scan never runs past it.
        for K in (2, 3, 7, 10):
            rates = np.linspace(0.4, 1.2, K)
            assert min_clusters(rates, 1e-300, 4, variant) == K // 2 + 1

    def test_permutation_invariant(self, rng):
        rates = reference_rates(11, K=30)
        for variant in ("type1", "type2"):
            expected = min_clusters(rates, 1e-2, 4, variant)
            assert min_clusters(rng.permutation(rates), 1e-2, 4, variant) == expected

    def test_result_meets_tolerance(self):
        rates = reference_rates(2, K=50)
        n = min_clusters(rates, 1e-2, 4, "type1")
        plan = compute_thresholds(partition_users(rates, n), "type1")
        assert rate_loss_bound(rates, plan.smallest_threshold, 4) <= 1e-2
        if n > 1:
            prev = compute_thresholds(partition_users(rates, n - 1), "type1")
            assert rate_loss_bound(rates, prev.smallest_threshold, 4) > 1e-2

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            min_clusters([1.0, 2.0], 0.0, 4)
