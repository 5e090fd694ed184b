"""Alpha-kernel STDP with an adaptive per-neuron learning rate.

Every time a circuit neuron z_k fires, each synapse into z_k is updated:

    w' = clamp(w + eta * (alpha(t_diff) * e^(-w) - 1), ln c, 0)

where t_diff is the lag since the most recent spike of the pre-synaptic
neuron within the current integration window (absent pre-spike means
alpha = 0, a pure depression step), and eta = N(z_k)^-0.8 shrinks with the
neuron's lifetime spike count.  Potentiation requires alpha * e^(-w) > 1,
i.e. the weight must sit below ln(alpha); repeated potentiation at a fixed
lag converges to the fixed point w* = ln(alpha(t_diff)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import CircuitState
from .errors import ConfigurationError
from .params import StdpParams


def alpha_kernel(t_diff: float, params: StdpParams) -> float:
    """Alpha-shaped timing kernel; zero for t_diff <= 0 and beyond the window."""
    if t_diff <= 0 or t_diff > params.window:
        return 0.0
    return (
        (math.exp(-t_diff / params.tau_f) - math.exp(-t_diff / params.tau_s))
        / (params.tau_f - params.tau_s)
    )


def alpha_table(params: StdpParams) -> np.ndarray:
    """Kernel tabulated at integer lags 0..window (entry 0 is 0)."""
    return np.array([alpha_kernel(d, params) for d in range(params.window + 1)])


def learning_rate(spike_count: int, params: StdpParams) -> float:
    """Adaptive rate eta = N^-rate_exponent; defined only after the neuron fired."""
    if spike_count < 1:
        raise ConfigurationError("learning_rate needs spike_count >= 1")
    return float(spike_count) ** -params.rate_exponent


def stdp_update(w: float, t_diff: int | None, eta: float, params: StdpParams) -> float:
    """One synaptic update; t_diff None means no recorded pre-spike."""
    alpha = 0.0 if t_diff is None else alpha_kernel(t_diff, params)
    w = w + eta * (alpha * math.exp(-w) - 1.0)
    return min(max(w, params.ln_c), 0.0)


class SpikeTrace:
    """Most recent pre-synaptic spike arrival per input neuron.

    The whole trace is cleared by the circuit's lateral-inhibition reset, so
    a recorded time always lies inside the current integration window.  The
    scheduler records a step's arrivals after that step's plasticity: an
    update therefore sees the most recent arrival strictly before the post
    spike (a same-step arrival would contribute alpha(0) = 0 while erasing
    the causal lag).
    """

    ABSENT = -1

    def __init__(self, size: int):
        self.last = np.full(size, self.ABSENT, dtype=np.int64)

    def record(self, indices: np.ndarray, t: int):
        self.last[indices] = t

    def reset(self):
        self.last.fill(self.ABSENT)

    def t_diff(self, n: int, t: int) -> int | None:
        last = self.last[n]
        if last == self.ABSENT:
            return None
        return int(t - last)


def apply_post_spike(
    state: CircuitState,
    trace: SpikeTrace,
    weights: np.ndarray,
    fired,
    t: int,
    params: StdpParams,
    count_spikes: bool = True,
) -> np.ndarray:
    """Update the rows of ``weights`` for every fired post-neuron, in place.

    ``weights`` is whichever matrix (bottom-up or top-down) pairs with
    ``trace``; both share the same pre-population.  Lifetime spike counts are
    incremented first, so eta reflects the count including the triggering
    spike.  Rows of non-fired neurons are untouched.  When one firing event
    updates a second matrix (bottom-up then top-down), pass
    ``count_spikes=False`` on the second call so the event is counted once.
    """
    fired = np.asarray(fired, dtype=np.int64)
    if fired.size == 0:
        return weights
    if weights.shape[1] != trace.last.shape[0]:
        raise ConfigurationError("trace size differs from weight matrix inputs")
    for k in fired:
        if count_spikes:
            state.spike_counts[k] += 1
        eta = learning_rate(int(state.spike_counts[k]), params)
        row = weights[k]
        for n in range(weights.shape[1]):
            row[n] = stdp_update(row[n], trace.t_diff(n, t), eta, params)
    return weights
