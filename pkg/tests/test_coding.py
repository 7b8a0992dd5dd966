import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from spikedroop.coding import (
    BurstCodingParams,
    LatencyCodingParams,
    RateCodingParams,
    SpikeTrain,
    burst_encode,
    find_bursts,
    first_spike_latency,
    latency_encode,
    latency_train,
    rate_encode,
)
from spikedroop.errors import ValidationError

LN_1_OVER_06 = 0.51082562376599068321  # mpmath, 20 digits

series = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=60)


class TestSpikeTrain:
    def test_rejects_unsorted(self):
        with pytest.raises(ValidationError):
            SpikeTrain(0, "S_v", (0.2, 0.1))

    def test_rejects_duplicates(self):
        with pytest.raises(ValidationError):
            SpikeTrain(0, "S_v", (0.1, 0.1))

    def test_rejects_unknown_channel(self):
        with pytest.raises(ValidationError):
            SpikeTrain(0, "S_x", ())

    def test_horizon_check(self):
        with pytest.raises(ValidationError):
            SpikeTrain(0, "S_i", (0.5, 2.0), horizon=1.0)


class TestRateEncode:
    dt = 1e-3

    def test_negative_error_is_silent(self):
        n = 50
        train = rate_encode(np.zeros(n), -np.ones(n), RateCodingParams(0.9, 0.05), self.dt)
        assert len(train) == 0

    def test_falling_voltage_positive_error_fires_every_sample(self):
        n = 50
        train = rate_encode(-np.ones(n), np.ones(n), RateCodingParams(0.9, 0.01), self.dt)
        assert len(train) == n
        assert np.allclose(np.diff(train.times), self.dt)

    def test_steady_state_is_sparse_with_deadband(self):
        n = 50
        train = rate_encode(np.zeros(n), np.zeros(n), RateCodingParams(0.9, 0.05), self.dt)
        assert len(train) == 0

    def test_literal_rule_fires_at_steady_state(self):
        # 0 <= 0.9 * 0 holds, so without a deadband every sample fires
        n = 50
        train = rate_encode(np.zeros(n), np.zeros(n), RateCodingParams(0.9, 0.0), self.dt)
        assert len(train) == n

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            rate_encode(np.zeros(3), np.zeros(4), RateCodingParams(0.9, 0.05), self.dt)

    def test_spike_times_offset(self):
        train = rate_encode([0, -1, 0], [0, 1, 0], RateCodingParams(0.9, 0.05), 0.5, t0=2.0)
        assert train.times == (2.5,)

    @pytest.mark.parametrize("kw", [dict(kappa=0.0, deadband=0.0), dict(kappa=1.0, deadband=-1.0)])
    def test_params_invalid(self, kw):
        with pytest.raises(ValidationError):
            RateCodingParams(**kw)

    @settings(max_examples=60)
    @given(v=series, e=series, lam=st.floats(1.0, 10.0))
    def test_density_monotone_in_error_scale(self, v, e, lam):
        n = min(len(v), len(e))
        v, e = np.array(v[:n]), np.abs(np.array(e[:n]))
        p = RateCodingParams(0.9, 0.05)
        assert len(rate_encode(v, lam * e, p, self.dt)) >= len(rate_encode(v, e, p, self.dt))

    @settings(max_examples=60)
    @given(v=series, e=series)
    def test_deterministic(self, v, e):
        n = min(len(v), len(e))
        p = RateCodingParams(0.9, 0.05)
        a = rate_encode(v[:n], e[:n], p, self.dt)
        b = rate_encode(list(v[:n]), list(e[:n]), p, self.dt)
        assert a.times == b.times


class TestLatencyEncode:
    def test_unit_drive(self):
        t = latency_encode(1.0, 1.0, LatencyCodingParams(tau=1.0, v_th=0.4))
        assert t == pytest.approx(LN_1_OVER_06, rel=1e-12)

    def test_subthreshold_is_infinite(self):
        assert latency_encode(0.3, 1.0, LatencyCodingParams(1.0, 0.4)) == math.inf

    def test_at_threshold_is_infinite(self):
        assert latency_encode(0.4, 1.0, LatencyCodingParams(1.0, 0.4)) == math.inf

    def test_huge_drive_is_near_zero(self):
        t = latency_encode(0.4e6, 1.0, LatencyCodingParams(1.0, 0.4))
        assert 0 <= t < 2e-6

    def test_params_invalid(self):
        with pytest.raises(ValidationError):
            LatencyCodingParams(tau=0.0, v_th=1.0)
        with pytest.raises(ValidationError):
            LatencyCodingParams(tau=1.0, v_th=0.0)

    @given(i1=st.floats(0.41, 100), i2=st.floats(0.41, 100))
    def test_strictly_decreasing(self, i1, i2):
        assume(abs(i1 - i2) > 1e-6 * max(i1, i2))
        p = LatencyCodingParams(0.02, 0.4)
        hi, lo = max(i1, i2), min(i1, i2)
        assert latency_encode(hi, 1.0, p) < latency_encode(lo, 1.0, p)


class TestBurstEncode:
    rate = RateCodingParams(0.9, 0.05)

    def test_no_trigger_empty(self):
        train, kb = burst_encode(np.zeros(10), -np.ones(10), self.rate, BurstCodingParams(4.8), 1e-3)
        assert len(train) == 0
        assert np.all(kb == 1.0)

    def test_kappa_b_growth(self):
        train, kb = burst_encode(-np.ones(4), np.ones(4), self.rate, BurstCodingParams(4.8, 1.0), 1e-3)
        assert len(train) == 4
        assert kb == pytest.approx([1.0, 4.8, 23.04, 110.592], rel=1e-12)

    def test_isolated_trigger_resets(self):
        v = [1.0, -1.0, 1.0, 1.0]
        e = [0.0, 1.0, -1.0, -1.0]
        train, kb = burst_encode(v, e, self.rate, BurstCodingParams(4.8), 1e-3)
        assert train.times == pytest.approx((1e-3,))
        assert kb[2] == 4.8
        assert kb[3] == 1.0

    def test_ceiling(self):
        n = 40
        _, kb = burst_encode(-np.ones(n), np.ones(n), self.rate,
                             BurstCodingParams(4.8, 1.0, kappa_b_max=1e6), 1e-3)
        assert kb.max() == 1e6

    def test_xi_must_exceed_one(self):
        with pytest.raises(ValidationError):
            BurstCodingParams(1.0)

    @settings(max_examples=60)
    @given(v=series, e=series)
    def test_burst_internal_isi_not_longer_than_preceding(self, v, e):
        n = min(len(v), len(e))
        train, _ = burst_encode(v[:n], e[:n], self.rate, BurstCodingParams(4.8), 1e-3)
        times = np.asarray(train.times)
        for start, stop in find_bursts(train, 1e-3):
            if start == 0 or stop - start < 2:
                continue
            inner = np.diff(times[start:stop])
            assert inner.max() <= times[start] - times[start - 1] + 1e-12

    @settings(max_examples=30)
    @given(n=st.integers(1, 50))
    def test_steady_state_sparse(self, n):
        train, _ = burst_encode(np.zeros(n), np.zeros(n), self.rate, BurstCodingParams(4.8), 1e-3)
        assert len(train) == 0


class TestFirstSpikeLatency:
    def test_lookup(self):
        train = SpikeTrain(0, "S_i", (1.0, 1.2))
        assert first_spike_latency(train, 1.05) == pytest.approx(0.15)

    def test_empty(self):
        assert first_spike_latency(SpikeTrain(0, "S_i", ()), 0.0) == math.inf

    def test_spike_exactly_at_t0(self):
        assert first_spike_latency(SpikeTrain(0, "S_i", (0.5,)), 0.5) == 0.0

    def test_matches_latency_encode(self):
        p = LatencyCodingParams(tau=1.0, v_th=0.4)
        train = latency_train(1.0, 1.0, p, t0=0.0)
        assert first_spike_latency(train, 0.0) == pytest.approx(LN_1_OVER_06, rel=1e-12)

    def test_subthreshold_train_is_empty(self):
        assert len(latency_train(0.1, 1.0, LatencyCodingParams(1.0, 0.4), t0=0.0)) == 0
