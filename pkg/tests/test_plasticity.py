import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wtanet.circuit import CircuitState
from wtanet.errors import ConfigurationError
from wtanet.params import StdpParams
from wtanet.plasticity import (
    SpikeTrace,
    alpha_kernel,
    alpha_table,
    apply_post_spike,
    learning_rate,
    stdp_update,
)

P = StdpParams()
LN_C = P.ln_c


class TestAlphaKernel:
    def test_zero_at_zero_lag(self):
        assert alpha_kernel(0, P) == 0.0

    def test_zero_for_negative_lag(self):
        assert alpha_kernel(-3, P) == 0.0

    def test_closed_form_at_two(self):
        # (1/(2-8)) * (e^-1 - e^-0.25) = 0.06848689...
        assert alpha_kernel(2, P) == pytest.approx(0.068487, abs=1e-6)

    def test_zero_beyond_window(self):
        assert alpha_kernel(P.window + 1, P) == 0.0
        assert alpha_kernel(P.window, P) > 0.0

    def test_table_matches_kernel(self):
        tab = alpha_table(P)
        assert tab[0] == 0.0
        for d in range(P.window + 1):
            assert tab[d] == alpha_kernel(d, P)

    @settings(max_examples=200)
    @given(st.floats(0.01, 40.0))
    def test_positive_inside_window(self, t):
        assert alpha_kernel(t, P) > 0.0

    def test_shape_peaks_between_taus(self):
        # rising then falling, peak near (tau_f*tau_s/(tau_s-tau_f))*ln(tau_s/tau_f) ~= 3.7
        values = [alpha_kernel(d, P) for d in range(1, 20)]
        peak = int(np.argmax(values)) + 1
        assert peak == 4
        assert values[0] < values[2] > values[10]


class TestLearningRate:
    def test_first_spike(self):
        assert learning_rate(1, P) == 1.0

    def test_power_of_two(self):
        assert learning_rate(32, P) == pytest.approx(0.0625, abs=1e-12)

    def test_large_count(self):
        assert learning_rate(10**6, P) == pytest.approx(1.5848931924611124e-05, rel=1e-12)

    def test_zero_count_rejected(self):
        with pytest.raises(ConfigurationError):
            learning_rate(0, P)

    @settings(max_examples=200)
    @given(st.integers(1, 10**6))
    def test_strictly_decreasing(self, n):
        assert learning_rate(n + 1, P) < learning_rate(n, P)


class TestStdpUpdate:
    def test_absent_pre_is_pure_depression(self):
        assert stdp_update(-1.0, None, 1.0, P) == pytest.approx(-2.0)

    def test_clamped_at_floor(self):
        assert stdp_update(LN_C, None, 1.0, P) == LN_C

    def test_clamped_at_ceiling(self):
        # deep below the fixed point, one potentiation overshoots and clamps at 0
        w = stdp_update(LN_C, 4, 1.0, P)
        assert w == 0.0

    def test_fixed_point_is_stationary(self):
        alpha = alpha_kernel(2, P)
        w_star = math.log(alpha)
        assert stdp_update(w_star, 2, 0.3, P) == pytest.approx(w_star, abs=1e-12)

    def test_iterated_potentiation_converges_to_fixed_point(self):
        # analytic fixed point of the update, clamped into the weight domain
        for t_diff in (1, 2, 4, 8, 16):
            alpha = alpha_kernel(t_diff, P)
            expected = min(max(math.log(alpha), LN_C), 0.0)
            w = -9.0
            for _ in range(20000):
                w = stdp_update(w, t_diff, 0.01, P)
            assert w == pytest.approx(expected, abs=1e-6)

    def test_convergence_is_monotone_from_below_with_small_eta(self):
        alpha = alpha_kernel(3, P)
        w_star = math.log(alpha)
        w = w_star - 2.0
        prev = w
        for _ in range(1000):
            w = stdp_update(w, 3, 0.001, P)
            assert w >= prev - 1e-15
            assert w <= w_star + 1e-9
            prev = w

    @settings(max_examples=500)
    @given(
        st.floats(LN_C, 0.0),
        st.one_of(st.none(), st.integers(-5, 60)),
        st.floats(0.0, 1.0),
    )
    def test_bounded_under_arbitrary_updates(self, w, t_diff, eta):
        out = stdp_update(w, t_diff, eta, P)
        assert LN_C <= out <= 0.0

    @settings(max_examples=200)
    @given(st.floats(LN_C + 1e-6, 0.0), st.floats(1e-4, 1.0))
    def test_depression_strictly_decreases_off_floor(self, w, eta):
        assert stdp_update(w, None, eta, P) < w


class TestSpikeTrace:
    def test_record_and_lag(self):
        tr = SpikeTrace(4)
        assert tr.t_diff(0, 10) is None
        tr.record(np.array([0, 2]), 7)
        assert tr.t_diff(0, 10) == 3
        assert tr.t_diff(2, 7) == 0
        assert tr.t_diff(1, 10) is None

    def test_reset_clears(self):
        tr = SpikeTrace(3)
        tr.record(np.array([1]), 5)
        tr.reset()
        assert tr.t_diff(1, 6) is None


def fresh_state(K):
    return CircuitState(
        mu=np.zeros(K),
        psi=1.0,
        ema_rate=0.1,
        spike_counts=np.zeros(K, dtype=np.int64),
        stimulus_counts=np.zeros(K, dtype=np.int64),
    )


class TestApplyPostSpike:
    def test_empty_fired_is_noop(self):
        st_ = fresh_state(2)
        w = np.full((2, 3), -1.0)
        before = w.copy()
        apply_post_spike(st_, SpikeTrace(3), w, [], 5, P)
        assert np.array_equal(w, before)
        assert st_.spike_counts.sum() == 0

    def test_single_post_spike_row_update(self):
        # pre 0 fired 2 steps before the post spike, all other inputs absent:
        # entry 0 moves toward the potentiation fixed point, the rest drop by eta
        st_ = fresh_state(2)
        tr = SpikeTrace(3)
        tr.record(np.array([0]), 8)
        w = np.full((2, 3), -3.0)
        apply_post_spike(st_, tr, w, [1], 10, P)
        eta = 1.0  # first spike of neuron 1
        expected_pot = -3.0 + eta * (alpha_kernel(2, P) * math.exp(3.0) - 1.0)
        assert w[1, 0] == pytest.approx(expected_pot, abs=1e-12)
        assert w[1, 0] > -3.0
        assert w[1, 1] == pytest.approx(-4.0)
        assert w[1, 2] == pytest.approx(-4.0)
        # non-fired row untouched
        assert np.all(w[0] == -3.0)
        assert st_.spike_counts.tolist() == [0, 1]

    def test_simultaneous_posts_use_separate_eta(self):
        st_ = fresh_state(2)
        st_.spike_counts[:] = [0, 31]  # neuron 1 already fired 31 times
        tr = SpikeTrace(2)
        w = np.full((2, 2), -2.0)
        apply_post_spike(st_, tr, w, [0, 1], 4, P)
        assert w[0, 0] == pytest.approx(-3.0)          # eta = 1
        assert w[1, 0] == pytest.approx(-2.0625)       # eta = 32^-0.8
        assert st_.spike_counts.tolist() == [1, 32]

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_weights_stay_bounded(self, seed):
        rng = np.random.default_rng(seed)
        K, M = 3, 5
        st_ = fresh_state(K)
        tr = SpikeTrace(M)
        w = rng.uniform(LN_C, 0.0, size=(K, M))
        for t in range(50):
            tr.record(np.nonzero(rng.random(M) < 0.3)[0], t)
            fired = np.nonzero(rng.random(K) < 0.4)[0]
            apply_post_spike(st_, tr, w, fired, t, P)
            assert w.min() >= LN_C and w.max() <= 0.0
