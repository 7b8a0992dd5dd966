import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikedroop.config import EventConfig, ScenarioSettings, SystemConfig
from spikedroop.errors import ValidationError
from spikedroop.grid import GridState
from spikedroop.scenarios import (
    ASSIGNMENTS,
    Event,
    ScenarioConfig,
    correlation_analysis,
    intermittent_profile,
    metric_mask,
    oscillation_index,
    plug_event,
    run_scenario,
    scenario_config,
    settle_times,
    sharing_error,
)


def fft_power_share(x):
    """Independent route: one-sided power from a bare FFT of the linearly detrended signal."""
    n = x.size
    t = np.arange(n)
    resid = x - np.polyval(np.polyfit(t, x, 1), t)
    p = np.abs(np.fft.rfft(resid)) ** 2
    p[1:(n + 1) // 2] *= 2    # fold negative frequencies, Nyquist and DC stay single
    k = 1 + int(np.argmax(p[1:]))
    return p[k] / p.sum(), k


class TestOscillationIndex:
    def test_constant(self):
        assert oscillation_index(np.full(500, 3.3), 1e-3) == (0.0, 0.0)

    def test_ramp_counts_as_constant(self):
        assert oscillation_index(np.linspace(0, 5, 500), 1e-3)[0] == 0.0

    def test_sine_5hz(self):
        t = np.arange(1000) * 1e-3
        index, freq = oscillation_index(np.sin(2 * np.pi * 5 * t), 1e-3)
        assert index > 0.9
        assert freq == pytest.approx(5.0, abs=1.0)

    def test_white_noise_over_seeds(self):
        n, seeds = 1024, 40
        mean_power = np.zeros(n // 2 + 1)
        for seed in range(seeds):
            x = np.random.default_rng(seed).standard_normal(n)
            index, _ = oscillation_index(x, 1e-3)
            assert index < 0.2
            resid = x - np.polyval(np.polyfit(np.arange(n), x, 1), np.arange(n))
            mean_power += np.abs(np.fft.rfft(resid)) ** 2 / seeds
        body = mean_power[1:-1]
        assert body.max() < 5 * body.mean()

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.5, 40), st.floats(0, 2))
    def test_matches_fft_route_and_is_a_fraction(self, seed, freq, noise):
        rng = np.random.default_rng(seed)
        t = np.arange(600) * 1e-3
        x = np.sin(2 * np.pi * freq * t + rng.uniform(0, 6)) + noise * rng.standard_normal(600)
        index, f = oscillation_index(x, 1e-3)
        expect, k = fft_power_share(x)
        assert 0.0 <= index <= 1.0
        assert index == pytest.approx(expect, rel=1e-9, abs=1e-12)
        assert f == pytest.approx(k / 0.6)

    def test_too_short(self):
        with pytest.raises(ValidationError):
            oscillation_index(np.zeros(100), 1e-3)

    def test_non_finite(self):
        x = np.zeros(300)
        x[5] = np.nan
        with pytest.raises(ValidationError):
            oscillation_index(x, 1e-3)


class TestCorrelationAnalysis:
    ts = 1e-3
    times = np.arange(100) * 1e-3

    def test_identical_trains(self):
        spikes = self.times[::4]
        v_dot = np.zeros(100)
        cur = np.full(100, 2.0)
        samples, skipped = correlation_analysis(self.times, v_dot, cur, cur, spikes, spikes,
                                                0.9, [(0.0, 0.1)], self.ts)
        assert skipped == []
        assert samples[0].c_out / samples[0].c_in == 1.0
        assert samples[0].c_in == pytest.approx(0.25)

    def test_constructed_mu_recovered(self):
        rng = np.random.default_rng(3)
        kappa, mu = 0.9, 0.7
        inp = np.sort(rng.choice(self.times, 40, replace=False))
        out = np.sort(rng.choice(self.times, 30, replace=False))
        c_i, c_o = 0.4, 0.3
        v_dot = rng.normal(0, 50, 100)
        i_out = rng.uniform(1, 5, 100)
        i_in = (v_dot / kappa + c_o * i_out) / (mu * c_i)
        samples, _ = correlation_analysis(self.times, v_dot, i_in, i_out, inp, out, kappa,
                                          [(0.0, 0.1)], self.ts)
        (s,) = samples
        assert (s.c_in, s.c_out) == pytest.approx((c_i, c_o))
        assert s.mu == pytest.approx(mu, abs=1e-6)

    def test_windows_without_output_are_skipped(self):
        spikes = np.array([0.01, 0.02])
        cur = np.ones(100)
        samples, skipped = correlation_analysis(self.times, np.zeros(100), cur, cur, spikes,
                                                spikes, 0.9, [(0.0, 0.05), (0.05, 0.1)], self.ts)
        assert len(samples) == 1 and skipped == [0.05]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_rates_are_fractions(self, seed):
        rng = np.random.default_rng(seed)
        inp = self.times[rng.random(100) < rng.random()]
        out = self.times[rng.random(100) < rng.random()]
        cur = rng.uniform(0.5, 3, 100)
        samples, skipped = correlation_analysis(self.times, rng.normal(size=100), cur, cur, inp,
                                                out, 0.9, [(0.0, 0.05), (0.05, 0.1)], self.ts)
        assert len(samples) + len(skipped) == 2
        for s in samples:
            assert 0 < s.c_in <= 1 and 0 < s.c_out <= 1


class TestPlugEvent:
    def setup_method(self):
        self.model = SystemConfig().grid_model()
        self.loads = np.full(4, 2.0)

    def test_plug_out_zeroes_current(self):
        st0 = self.model.steady_state(np.zeros(4), self.loads)
        st1 = plug_event(st0, 2, "out", t=4.0)
        assert st1.der_current[2] == 0 and st1.filtered_current[2] == 0
        assert not st1.online[2] and st1.time == 4.0
        solved = self.model.steady_state(np.zeros(4), self.loads, st1.online)
        assert solved.der_current[2] == 0
        assert solved.der_current.sum() == pytest.approx(8.0)

    def test_last_source_rejected(self):
        st0 = self.model.steady_state(np.zeros(4), self.loads)
        for k in (0, 1, 2):
            st0 = plug_event(st0, k, "out")
        with pytest.raises(ValidationError):
            plug_event(st0, 3, "out")

    def test_bad_index_and_direction(self):
        st0 = self.model.steady_state(np.zeros(4), self.loads)
        with pytest.raises(ValidationError):
            plug_event(st0, 4, "out")
        with pytest.raises(ValidationError):
            plug_event(st0, 0, "sideways")

    def test_out_then_in_returns_to_start(self):
        m = self.model
        st0 = m.steady_state(np.zeros(4), self.loads)
        v, i, f, on = st0.bus_voltage, st0.der_current, st0.filtered_current, st0.online
        r = m.effective_droop(np.zeros(4))
        dt = 5e-5
        for step in range(40000):
            if step == 4000:
                s = plug_event(GridState(0, v, i, f, on), 2, "out")
                i, f, on = s.der_current, s.filtered_current, s.online
            if step == 12000:
                on = plug_event(GridState(0, v, i, f, on), 2, "in").online
            v, i, f = m.advance(v, i, f, on, r, self.loads, dt)
        assert np.allclose(v, st0.bus_voltage, rtol=1e-3)
        assert np.allclose(i, st0.der_current, rtol=1e-3)


class TestConfigAndHelpers:
    def test_named_timelines(self):
        sys_cfg = SystemConfig()
        c1 = scenario_config("case_i", sys_cfg)
        assert [(e.time, e.kind) for e in c1.events] == [
            (1.0, "load_step"), (2.0, "input_transient"), (5.0, "load_step")]
        c4 = scenario_config("case_iv", sys_cfg)
        assert (4.0, "plug_out", 2) in [(e.time, e.kind, e.target) for e in c4.events]
        assert scenario_config("case_ii", sys_cfg).synaptic_delay == 0.1
        assert c1.assignment.voltage == "rate" and c1.assignment.sharing == "latency"
        assert scenario_config("case_iii", sys_cfg).assignment.voltage == "burst"

    def test_events_must_increase(self):
        with pytest.raises(ValidationError):
            ScenarioConfig("custom", ASSIGNMENTS["custom"],
                           (Event(1.0, "load_step"), Event(1.0, "load_step")), 2.0)
        with pytest.raises(ValidationError):
            ScenarioConfig("custom", ASSIGNMENTS["custom"], (Event(2.0, "load_step"),), 2.0)

    def test_unknown_scenario(self):
        with pytest.raises(ValidationError):
            scenario_config("case_v", SystemConfig())

    def test_metric_mask(self):
        t = np.arange(0, 6, 0.1)
        m = metric_mask(t, (Event(5.0, "load_step"),), 6.0)
        kept = t[m]
        assert kept.min() == pytest.approx(4.5)
        assert not np.any((kept >= 5.0 - 1e-9) & (kept < 5.2 - 1e-9))

    def test_settle_times(self):
        t = np.arange(0, 2, 0.01)
        dr = np.where(t < 1.3, 1.0, 0.0)[:, None]
        (settle,) = settle_times(t, dr, (Event(1.0, "load_step"),), 2.0, 0.04)
        assert settle == pytest.approx(0.3)

    def test_sharing_error(self):
        on = np.ones(3, bool)
        assert sharing_error(np.array([2.0, 2.0, 2.0]), np.ones(3), on) == 0
        assert sharing_error(np.array([1.0, 2.0, 3.0]), np.ones(3), on) == pytest.approx(0.5)
        assert sharing_error(np.array([2.0, 4.0, 0.0]), np.array([1.0, 2.0, 1.0]),
                             np.array([True, True, False])) == 0

    def test_intermittent_profile(self):
        rng = np.random.default_rng(0)
        p = intermittent_profile(20000, 0.3, 0.02, 1e-3, 0.2, rng)
        assert set(np.unique(p)) <= {0.8, 1.0}
        assert np.mean(p < 1) == pytest.approx(0.3, abs=0.05)
        # whole blocks dip together
        assert np.all(np.ptp(p.reshape(-1, 20), axis=1) == 0)


class TestRuns:
    def short_system(self, events):
        base = SystemConfig()
        return base.replace(scenario=ScenarioSettings(horizon=0.3, events=events))

    def test_deterministic(self):
        sys_cfg = self.short_system((EventConfig(0.1, "load_step", "2", 3.0),))
        a, ma = run_scenario(scenario_config("custom", sys_cfg), sys_cfg)
        b, mb = run_scenario(scenario_config("custom", sys_cfg), sys_cfg)
        for name in ("t", "v_bus", "i_out", "delta_r", "v_mem", "sample_i_out"):
            assert np.array_equal(getattr(a, name), getattr(b, name), equal_nan=True)
        assert a.spikes == b.spikes
        assert [(k, repr(v)) for k, v in ma.rows()] == [(k, repr(v)) for k, v in mb.rows()]

    def test_load_step_raises_current(self):
        sys_cfg = self.short_system((EventConfig(0.1, "load_step", "all", 4.0),))
        log, _ = run_scenario(scenario_config("custom", sys_cfg), sys_cfg)
        before = log.sample_i_out[log.sample_t < 0.1].sum(axis=1)[-1]
        after = log.sample_i_out[-1].sum()
        # capacitor charging keeps the sum a little off the demand while voltage moves
        assert before == pytest.approx(8.0, rel=0.02)
        assert after == pytest.approx(12.0, rel=0.02)
        assert log.sample_load[-1] == 12.0

    def test_case_iv_source_three_drops_out(self, case_runs):
        log, metrics, _ = case_runs("case_iv")
        late = log.t > 4.0
        assert np.all(log.i_out[late, 2] == 0)
        assert not any(k == 2 and t > 4.0 for t, k, _ in log.spikes)
        before = log.sample_i_out[(log.sample_t > 3.5) & (log.sample_t < 4.0)].mean(axis=0)
        after = log.sample_i_out[(log.sample_t > 4.5) & (log.sample_t < 5.0)].mean(axis=0)
        assert np.all(after[[0, 1, 3]] > before[[0, 1, 3]])
