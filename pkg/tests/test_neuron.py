import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikedroop.coding import LatencyCodingParams, latency_encode
from spikedroop.errors import NumericalError, ValidationError
from spikedroop.neuron import (
    LifParams,
    LifState,
    decay_factor,
    lif_step,
    membrane_closed_form,
    run_constant_input,
)

# Frozen with mpmath at 20 digits before the implementation existed.
EXP_M01 = 0.90483741803595956814
EXP_M1 = 0.3678794411714423216
ONE_MINUS_EXP_M1 = 0.63212055882855767841


def params(threshold, r=1.0, c=0.01):
    return LifParams(membrane_resistance=r, membrane_capacitance=c, threshold=threshold)


class TestDecayFactor:
    def test_zero_step_is_one(self):
        assert decay_factor(0.0, 0.01) == 1.0

    def test_tenth_of_tau(self):
        assert decay_factor(1e-3, 10e-3) == pytest.approx(EXP_M01, rel=1e-12)

    def test_one_tau(self):
        assert decay_factor(0.02, 0.02) == pytest.approx(EXP_M1, rel=1e-12)

    @pytest.mark.parametrize("tau", [0.0, -1.0])
    def test_rejects_nonpositive_tau(self, tau):
        with pytest.raises(ValidationError):
            decay_factor(1e-3, tau)

    @given(st.floats(0, 10), st.floats(1e-6, 10))
    def test_in_unit_interval(self, dt, tau):
        b = decay_factor(dt, tau)
        assert 0.0 <= b <= 1.0


class TestLifParams:
    def test_tau_is_rc(self):
        p = params(0.4, r=2.0, c=0.005)
        assert p.tau == pytest.approx(0.01, rel=1e-12)

    @pytest.mark.parametrize("kw", [
        dict(membrane_resistance=0.0, membrane_capacitance=1.0, threshold=1.0),
        dict(membrane_resistance=1.0, membrane_capacitance=-1.0, threshold=1.0),
        dict(membrane_resistance=1.0, membrane_capacitance=1.0, threshold=0.0),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValidationError):
            LifParams(**kw)


class TestFiringRegimes:
    """Constant-current behaviour around two thresholds."""

    dt = 1e-4
    horizon = 1.0

    def count(self, current, threshold):
        return len(run_constant_input(current, params(threshold), self.dt, self.horizon))

    def test_half_amp_fires_at_low_threshold(self):
        spikes = run_constant_input(0.5, params(0.4), self.dt, self.horizon)
        assert len(spikes) > 2
        isi = np.diff(spikes)
        assert np.ptp(isi) <= self.dt + 1e-12  # periodic

    def test_half_amp_silent_at_high_threshold(self):
        assert self.count(0.5, 0.8) == 0

    def test_one_amp_fires_at_both_with_shorter_isi_low(self):
        low = run_constant_input(1.0, params(0.4), self.dt, self.horizon)
        high = run_constant_input(1.0, params(0.8), self.dt, self.horizon)
        assert len(low) > 1 and len(high) > 1
        assert np.mean(np.diff(low)) < np.mean(np.diff(high))


class TestLifStep:
    def test_reset_is_exact_zero(self):
        p = params(0.4)
        state = LifState(v_mem=0.39)
        state, spike = lif_step(state, 10.0, p, 1e-3)
        assert spike == 1
        assert state.v_mem == 0.0

    def test_no_input_decays(self):
        p = params(0.4)
        state, spike = lif_step(LifState(v_mem=0.2), 0.0, p, 1e-3)
        assert spike == 0
        assert state.v_mem == pytest.approx(0.2 * math.exp(-0.1))

    def test_records_spike_time(self):
        p = params(0.4)
        state, _ = lif_step(LifState(v_mem=0.39, time=0.5), 10.0, p, 1e-3)
        assert state.last_spike_time == pytest.approx(0.501)

    def test_rejects_nonfinite_input(self):
        with pytest.raises(NumericalError):
            lif_step(LifState(), float("nan"), params(0.4), 1e-3)

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValidationError):
            lif_step(LifState(), 1.0, params(0.4), 0.0)

    def test_closed_inequality(self):
        # steady state exactly on threshold after one huge step
        p = params(0.5)
        state, spike = lif_step(LifState(), 0.5, p, 1e3)
        assert spike == 1


class TestClosedForm:
    def test_t_zero(self):
        assert membrane_closed_form(1.0, 1.0, 0.01, 0.3, 0.0) == 0.3

    def test_long_time(self):
        v = membrane_closed_form(0.7, 2.0, 0.01, 0.0, 0.2)
        assert v == pytest.approx(1.4, rel=1e-8)

    def test_one_tau(self):
        v = membrane_closed_form(2.0, 1.5, 0.01, 0.0, 0.01)
        assert v == pytest.approx(ONE_MINUS_EXP_M1 * 3.0, rel=1e-12)

    def test_stepped_matches_closed_form(self):
        p = params(1e9)  # no firing
        dt = p.tau / 100
        state = LifState()
        worst = 0.0
        for n in range(1, 501):
            state, _ = lif_step(state, 0.8, p, dt)
            ref = membrane_closed_form(0.8, 1.0, p.tau, 0.0, n * dt)
            worst = max(worst, abs(state.v_mem - ref) / ref)
        assert worst < 0.02


@settings(max_examples=40, deadline=None)
@given(
    ia=st.floats(0.45, 3.0),
    ib=st.floats(0.45, 3.0),
)
def test_monotone_firing_rate(ia, ib):
    hi, lo = max(ia, ib), min(ia, ib)
    p = params(0.4)
    n_hi = len(run_constant_input(hi, p, 1e-4, 0.3))
    n_lo = len(run_constant_input(lo, p, 1e-4, 0.3))
    assert n_hi >= n_lo


@settings(max_examples=40, deadline=None)
@given(current=st.floats(0.0, 0.79), v0=st.floats(0.0, 0.79))
def test_subthreshold_silence(current, v0):
    p = params(0.8)
    assert run_constant_input(current, p, 1e-4, 0.3, v0=v0) == []


@settings(max_examples=40, deadline=None)
@given(
    current=st.floats(0.5, 5.0),
    threshold=st.floats(0.1, 0.45),
    tau=st.floats(0.005, 0.05),
)
def test_first_spike_matches_latency_formula(current, threshold, tau):
    r = 1.0
    p = LifParams(membrane_resistance=r, membrane_capacitance=tau / r, threshold=threshold)
    dt = tau / 200
    expected = latency_encode(current, r, LatencyCodingParams(tau=tau, v_th=threshold))
    spikes = run_constant_input(current, p, dt, expected + 10 * dt)
    assert spikes, "expected at least one spike"
    assert abs(spikes[0] - expected) <= 2 * dt
