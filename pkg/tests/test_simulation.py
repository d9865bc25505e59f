import math

import numpy as np
import pytest

from clusterfb.fading import SystemConfig
from clusterfb.order_stats import expected_best_beam_log_rate
from clusterfb.rng import block_generator, stream_generator
from clusterfb.schemes import (ClusterFeedback, ConventionalFeedback, FullCSI,
                               SingleThresholdFeedback, default_schemes)
from clusterfb.simulation import (CSV_COLUMNS, run_drop, simulate, simulate_many,
                                  sweep_users)


def _config(K=12, seed=0):
    variances = 1.0 - np.random.default_rng(seed).random(K)
    return SystemConfig(M=4, N=4, P=10.0, noise_var=1.0, channel_vars=variances)


class TestRunDrop:
    @pytest.mark.parametrize("scheme", default_schemes(), ids=lambda s: s.name)
    def test_best_beam_record_invariants(self, scheme):
        cfg = _config()
        fitted = scheme.fit(cfg.rates)
        rng = np.random.default_rng(1)
        for _ in range(30):
            rec = run_drop(cfg, fitted, rng, mode="best_beam")
            assert np.all(rec.reported.sum(axis=1) <= 1)
            idle = rec.scheduled < 0
            assert np.all(rec.rates[idle] == 0)
            assert np.all(rec.bits[~rec.reported] == 0)
            assert np.all(rec.snr >= 0)
            for m in np.flatnonzero(~idle):
                k = rec.scheduled[m]
                assert rec.reported[k, m]
                assert rec.rates[m] == pytest.approx(math.log2(1 + rec.snr[k, m]))

    def test_full_csi_per_beam_rate(self):
        cfg = _config()
        scheme = FullCSI().fit(cfg.rates)
        rng = np.random.default_rng(2)
        for _ in range(30):
            rec = run_drop(cfg, scheme, rng, mode="best_beam")
            for m in range(cfg.M):
                mine = rec.best_beam == m
                expected = math.log2(1 + rec.snr[mine, m].max()) if mine.any() else 0.0
                assert rec.rates[m] == pytest.approx(expected)

    def test_all_beams_full_csi_schedules_max(self):
        cfg = _config()
        rec = run_drop(cfg, FullCSI().fit(cfg.rates), np.random.default_rng(3),
                       mode="all_beams")
        np.testing.assert_array_equal(rec.scheduled, rec.snr.argmax(axis=0))

    def test_everyone_silent(self):
        cfg = _config()
        scheme = ClusterFeedback().fit(cfg.rates)
        weak = SystemConfig(M=4, N=4, P=10.0, noise_var=1.0, channel_vars=np.full(12, 1e-9))
        for mode in ("best_beam", "all_beams"):
            rec = run_drop(weak, scheme, np.random.default_rng(4), mode=mode)
            assert rec.sum_rate == 0.0 and rec.feedback_bits == 0
            assert np.all(rec.scheduled == -1)

    def test_ties_go_to_smallest_index(self):
        cfg = SystemConfig(M=1, N=1, P=1.0, noise_var=1.0, channel_vars=(1.0, 1.0, 1.0))
        scheme = ConventionalFeedback(bits=0).fit(cfg.rates)
        rng = np.random.default_rng(5)
        for _ in range(20):
            assert run_drop(cfg, scheme, rng).scheduled[0] == 0

    def test_fine_quantization_approaches_full_csi(self):
        cfg = _config(K=8)
        full = FullCSI().fit(cfg.rates)
        agreement = []
        for b in (1, 4, 10):
            # One user per cluster gives all-zero thresholds: a single region [0, inf).
            scheme = ClusterFeedback(n_clusters=8, feedback_limit=1e6, b_max=b).fit(cfg.rates)
            assert np.all(scheme.thresholds_ == 0) and scheme.bits_[0] == b
            same = 0
            for d in range(300):
                a = run_drop(cfg, full, block_generator(9, d), mode="all_beams")
                c = run_drop(cfg, scheme, block_generator(9, d), mode="all_beams")
                same += np.sum(a.scheduled == c.scheduled)
            agreement.append(same / (300 * cfg.M))
        assert agreement[0] < agreement[1] < agreement[2]
        assert agreement[2] > 0.99

    def test_unknown_mode(self):
        cfg = _config()
        with pytest.raises(ValueError):
            run_drop(cfg, FullCSI().fit(cfg.rates), np.random.default_rng(0), mode="every")


class TestSimulate:
    def test_deterministic_across_workers(self):
        cfg = _config()
        schemes = default_schemes()
        a = simulate_many(cfg, schemes, 5000, seed=42, n_jobs=1, block_size=700)
        b = simulate_many(cfg, schemes, 5000, seed=42, n_jobs=4, block_size=700)
        for x, y in zip(a, b):
            assert x.sum_rate == y.sum_rate and x.fb_bits == y.fb_bits
            np.testing.assert_array_equal(x.per_drop_rate, y.per_drop_rate)

    def test_seed_matters(self):
        cfg = _config()
        a = simulate(cfg, FullCSI(), 500, seed=1)
        b = simulate(cfg, FullCSI(), 500, seed=2)
        assert a.sum_rate != b.sum_rate

    def test_standard_error_scaling(self):
        cfg = _config()
        small = simulate(cfg, FullCSI(), 20_000, seed=3)
        large = simulate(cfg, FullCSI(), 40_000, seed=4)
        assert (large.sum_rate_se / small.sum_rate_se) ** 2 == pytest.approx(0.5, rel=0.1)
        assert small.sum_rate_se > 0

    def test_best_beam_quadrature(self):
        cfg = _config(K=6)
        res = simulate(cfg, FullCSI(), 20_000, seed=5, mode="best_beam")
        expected = cfg.M * expected_best_beam_log_rate(cfg.rates, cfg.M)
        assert abs(res.sum_rate - expected) < 3 * res.sum_rate_se

    def test_quantized_accounting_is_lower(self):
        cfg = _config()
        scheme = SingleThresholdFeedback().fit(cfg.rates)
        true = simulate(cfg, scheme, 3000, seed=6, accounting="true")
        quant = simulate(cfg, scheme, 3000, seed=6, accounting="quantized")
        assert np.all(quant.per_drop_rate <= true.per_drop_rate + 1e-12)
        with pytest.raises(ValueError):
            simulate(cfg, scheme, 10, seed=6, accounting="optimistic")

    def test_matrix_model(self):
        cfg = _config(K=5)
        res = simulate(cfg, FullCSI(), 4000, seed=7, snr_model="matrix")
        ref = simulate(cfg, FullCSI(), 4000, seed=7)
        assert abs(res.sum_rate - ref.sum_rate) < 4 * math.hypot(res.sum_rate_se,
                                                                  ref.sum_rate_se)

    def test_refuses_mismatched_fit(self):
        cfg = _config()
        with pytest.raises(ValueError):
            simulate(cfg, FullCSI().fit(np.ones(3)), 10, seed=0)

    def test_paired_difference(self):
        cfg = _config()
        full, conv = simulate_many(cfg, [FullCSI(), ConventionalFeedback()], 4000, seed=8)
        mean, se = full.paired_difference(conv)
        assert mean == pytest.approx(full.sum_rate - conv.sum_rate)
        assert 0 < se < math.hypot(full.sum_rate_se, conv.sum_rate_se)

    def test_counted_bits_conventional(self):
        cfg = _config()
        for mode, per_user in (("best_beam", 1), ("all_beams", cfg.M)):
            res = simulate(cfg, ConventionalFeedback(bits=3), 200, seed=9, mode=mode)
            assert res.fb_bits == 3 * cfg.K * per_user and res.fb_bits_se == 0


class TestSweep:
    def test_rows_and_structure(self):
        rows = sweep_users(4, 4, 10.0, 1.0, [10, 40, 100], default_schemes(), 2000, seed=1)
        assert len(rows) == 15
        assert [r.K for r in rows[::5]] == [10, 40, 100]
        for row in rows:
            for col in CSV_COLUMNS:
                value = getattr(row, col)
                if isinstance(value, float):
                    assert math.isfinite(value)
        full = [r.sum_rate for r in rows if r.scheme == "full_csi"]
        assert full[0] < full[1] < full[2]
        conv = [r.fb_bits for r in rows if r.scheme == "conventional"]
        assert conv == [3 * 4 * 10, 3 * 4 * 40, 3 * 4 * 100]

    def test_variance_stream_independent_of_drops(self):
        a = sweep_users(4, 4, 10.0, 1.0, [10], [FullCSI()], 10, seed=3)
        b = sweep_users(4, 4, 10.0, 1.0, [10], [FullCSI()], 500, seed=3)
        assert a[0].extras["config"] == b[0].extras["config"]

    def test_stream_paths_distinct(self):
        x = stream_generator(0, 1).random(4)
        y = stream_generator(0, 2, 0).random(4)
        z = block_generator(0, 1).random(4)
        assert not np.allclose(x, y) and not np.allclose(x, z)
