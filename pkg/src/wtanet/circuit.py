"""Discrete-time dynamics of a single winner-take-all circuit.

A circuit is a layer of K excitatory neurons driven by spikes from input
populations.  Synaptic weights are stored in the log domain, in [ln c, 0];
excitation uses the shifted value (w - ln c) in [0, -ln c] so drive is never
negative.  Each timestep the membrane potential integrates excitation minus
inhibition, clamped to [0, mu_max], and every neuron fires independently with
probability exp(mu - mu_max).  Inhibition is the sum of a lateral reset signal
(infinite, one step after any circuit spike) and a homeostatic control signal
psi * |y(t)| that stabilizes the circuit's output rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .params import CircuitParams

# Lateral inhibition sentinel: strong enough to zero every membrane potential.
RESET = math.inf

SENSORY = "sensory"
EXCITATORY = "excitatory"


@dataclass(frozen=True)
class NeuronPopulation:
    size: int
    role: str = EXCITATORY

    def __post_init__(self):
        if self.size < 1:
            raise ConfigurationError(f"population size must be >= 1, got {self.size}")
        if self.role not in (SENSORY, EXCITATORY):
            raise ConfigurationError(f"unknown population role {self.role!r}")


@dataclass(frozen=True)
class SpikeVector:
    """Spikes of one population at one timestep; the sole inter-circuit message."""

    population: str
    fired: np.ndarray          # unique neuron indices, int
    t: int = 0

    @staticmethod
    def of(population: str, indices, t: int = 0) -> "SpikeVector":
        arr = np.asarray(indices, dtype=np.int64)
        return SpikeVector(population, arr, t)

    @property
    def count(self) -> int:
        return int(self.fired.size)

    def validate(self, size: int):
        if self.fired.size and (self.fired.min() < 0 or self.fired.max() >= size):
            raise ConfigurationError(
                f"spike index out of range for population {self.population!r} of size {size}"
            )
        if np.unique(self.fired).size != self.fired.size:
            raise ConfigurationError("spike indices must be unique")


@dataclass
class CircuitState:
    """Mutable per-circuit state: membranes, controller, and spike counters."""

    mu: np.ndarray                 # K membrane potentials, >= 0
    psi: float                     # control-inhibition gain
    ema_rate: float                # moving average of output spikes/timestep
    spike_counts: np.ndarray       # lifetime N(z_k), int64
    stimulus_counts: np.ndarray    # S(z_k) for the stimulus at hand, int64

    @staticmethod
    def fresh(params: CircuitParams) -> "CircuitState":
        return CircuitState(
            mu=np.zeros(params.K),
            psi=params.psi_init,
            ema_rate=params.target_rate,
            spike_counts=np.zeros(params.K, dtype=np.int64),
            stimulus_counts=np.zeros(params.K, dtype=np.int64),
        )


def init_weights(shape, c: float, rng: np.random.Generator,
                 lo_frac: float = 0.25, hi_frac: float = 0.0) -> np.ndarray:
    """Seeded initial weights, uniform in [lo_frac * ln c, hi_frac * ln c]."""
    if not 0.0 <= hi_frac < lo_frac <= 1.0:
        raise ConfigurationError(
            f"init range fractions must satisfy 0 <= hi < lo <= 1, "
            f"got lo={lo_frac} hi={hi_frac}"
        )
    ln_c = math.log(c)
    return rng.uniform(lo_frac * ln_c, hi_frac * ln_c, size=shape)


def check_weights(w: np.ndarray, c: float):
    ln_c = math.log(c)
    if w.ndim != 2:
        raise ConfigurationError("weight matrix must be 2-D")
    if w.size and (w.min() < ln_c - 1e-12 or w.max() > 1e-12):
        raise ConfigurationError(f"weights out of [ln c, 0] = [{ln_c}, 0]")


def compute_excitation(
    w_up: np.ndarray,
    w_down: np.ndarray | None,
    y_up: SpikeVector,
    y_down: SpikeVector | None = None,
    td_factor=1.0,
    *,
    c: float,
) -> np.ndarray:
    """Combined excitatory drive u_k = sum over fired inputs of (w - ln c).

    Top-down contributions are scaled by ``td_factor``, either one scalar or
    one factor per fired top-down input.
    """
    ln_c = math.log(c)
    K = w_up.shape[0]
    u = np.zeros(K)
    if y_up.fired.size:
        if y_up.fired.max() >= w_up.shape[1] or y_up.fired.min() < 0:
            raise ConfigurationError(
                f"bottom-up spike index out of range for matrix with {w_up.shape[1]} inputs"
            )
        for m in y_up.fired:
            u += w_up[:, m] - ln_c
    if y_down is not None and y_down.fired.size:
        if w_down is None:
            raise ConfigurationError("top-down spikes supplied but no top-down matrix")
        if y_down.fired.max() >= w_down.shape[1] or y_down.fired.min() < 0:
            raise ConfigurationError(
                f"top-down spike index out of range for matrix with {w_down.shape[1]} inputs"
            )
        if w_down.shape[0] != K:
            raise ConfigurationError("top-down matrix row count differs from bottom-up")
        factors = np.broadcast_to(np.asarray(td_factor, dtype=float), (y_down.fired.size,))
        if np.any(factors < 0):
            raise ConfigurationError("td_factor must be >= 0")
        for f, n in zip(factors, y_down.fired):
            u += f * (w_down[:, n] - ln_c)
    return u


def lateral_inhibition(z_prev: SpikeVector) -> float:
    """RESET if the circuit fired at t-1, else 0."""
    return RESET if z_prev.count else 0.0


def control_inhibition(state: CircuitState, y_count: float) -> float:
    """Homeostatic inhibition psi * |y(t)|; does not mutate state."""
    if y_count < 0:
        raise ConfigurationError("y_count must be >= 0")
    return state.psi * y_count


def update_psi(state: CircuitState, observed_rate: float, params: CircuitParams) -> float:
    """One multiplicative controller step against the target output rate."""
    psi = state.psi
    if observed_rate > params.target_rate:
        psi *= 1.0 + params.psi_gain
    elif observed_rate < params.target_rate:
        psi /= 1.0 + params.psi_gain
    return min(max(psi, 0.0), params.psi_max)


def update_membrane(state: CircuitState, u: np.ndarray, inhibition: float,
                    params: CircuitParams) -> np.ndarray:
    """mu(t) = max(0, mu(t-1) + u - I), clamped to mu_max.

    ``inhibition`` may be RESET (infinite), which zeroes every potential
    regardless of excitation.
    """
    if len(u) != len(state.mu):
        raise ConfigurationError("excitation length differs from K")
    mu = np.maximum(state.mu + u - inhibition, 0.0)
    return np.minimum(mu, params.mu_max)


def sample_spikes(state: CircuitState, params: CircuitParams,
                  rng: np.random.Generator, t: int = 0) -> SpikeVector:
    """Each neuron fires independently with probability exp(mu_k - mu_max).

    Draws exactly K uniforms in index order, so identical seeds replay
    identical spike trains.
    """
    p = np.exp(state.mu - params.mu_max)
    draws = rng.random(len(state.mu))
    fired = np.nonzero(draws < p)[0]
    return SpikeVector("z", fired.astype(np.int64), t)


def posterior_snapshot(state: CircuitState) -> np.ndarray:
    """Softmax of the membrane potentials, computed with max subtraction."""
    mu = state.mu
    shifted = mu - mu.max()
    e = np.exp(shifted)
    return e / e.sum()
