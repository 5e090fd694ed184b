"""Parameter containers for circuit dynamics, plasticity, and feedback scaling.

Defaults reproduce the experiment constants: 150-step stimuli at 1 ms per step,
200 Hz active sensory rate, weight constant c = 1e-8 (so the maximum effective
connection strength is -ln c ~= 18.42), mu_max = 19.2558, STDP time constants
tau_f = 2 and tau_s = 8, and adaptive learning rate 1/N^0.8.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigurationError

DEFAULT_C = 1e-8
DEFAULT_MU_MAX = 19.2558
# Alternative legacy value for mu_max: -ln(1e-8) = 18.420680743952367.
MU_MAX_ALT = -math.log(DEFAULT_C)


@dataclass(frozen=True)
class CircuitParams:
    """Shared dynamics constants of a WTA circuit."""

    K: int = 38
    mu_max: float = DEFAULT_MU_MAX
    c: float = DEFAULT_C
    target_rate: float = 0.1        # desired circuit output, spikes/timestep
    psi_gain: float = 0.01          # multiplicative controller step
    psi_init: float = 1.0
    psi_max: float = field(default=10.0 * -math.log(DEFAULT_C))
    ema_decay: float = 0.99         # decay of the output-rate moving average

    def __post_init__(self):
        if self.K < 1:
            raise ConfigurationError(f"K must be >= 1, got {self.K}")
        if not self.mu_max > 0:
            raise ConfigurationError(f"mu_max must be > 0, got {self.mu_max}")
        if not 0.0 < self.c < 1.0:
            raise ConfigurationError(f"c must be in (0, 1), got {self.c}")
        if not 0.0 < self.target_rate <= 1.0:
            raise ConfigurationError(
                f"target_rate must be in (0, 1], got {self.target_rate}"
            )
        if self.psi_gain <= 0:
            raise ConfigurationError(f"psi_gain must be > 0, got {self.psi_gain}")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigurationError(f"ema_decay must be in [0, 1), got {self.ema_decay}")

    @property
    def ln_c(self) -> float:
        return math.log(self.c)


@dataclass(frozen=True)
class StdpParams:
    """Constants of the alpha-kernel STDP rule."""

    tau_f: float = 2.0
    tau_s: float = 8.0
    c: float = DEFAULT_C
    rate_exponent: float = 0.8
    window: int = 40                # lags beyond this treated as absent (5 * tau_s)

    def __post_init__(self):
        if self.tau_f <= 0 or self.tau_s <= 0:
            raise ConfigurationError("tau_f and tau_s must be > 0")
        if self.tau_f == self.tau_s:
            raise ConfigurationError("tau_f and tau_s must differ")
        if not 0.0 < self.c < 1.0:
            raise ConfigurationError(f"c must be in (0, 1), got {self.c}")
        if self.window < self.tau_s:
            raise ConfigurationError("window must be >= tau_s")

    @property
    def ln_c(self) -> float:
        return math.log(self.c)


TD_MODES = ("off", "constant", "adaptive")


@dataclass(frozen=True)
class TdPolicy:
    """Scaling policy for top-down (feedback) spikes.

    ``off`` disables feedback edges entirely; ``constant`` multiplies every
    top-down contribution by ``factor``; ``adaptive`` scales each parent
    neuron's feedback by phi(S) = 1.5 + 0.3 * S^1.3 capped at 3, where S is
    that neuron's spike count for the stimulus at hand.  ``phi_literal_max``
    replaces the cap with a lower bound of 3 (the formula's printed form).
    """

    mode: str = "off"
    factor: float = 1.0
    phi_a: float = 1.5
    phi_b: float = 0.3
    phi_p: float = 1.3
    phi_cap: float = 3.0
    phi_literal_max: bool = False

    def __post_init__(self):
        if self.mode not in TD_MODES:
            raise ConfigurationError(f"td mode must be one of {TD_MODES}, got {self.mode!r}")
        if self.factor <= 0:
            raise ConfigurationError(f"td factor must be > 0, got {self.factor}")
        if self.phi_cap < self.phi_a:
            raise ConfigurationError("phi_cap must be >= phi_a")

    @property
    def enabled(self) -> bool:
        return self.mode != "off"


def td_policy_from_label(label: str) -> TdPolicy:
    """Map an experiment label (off, x1, x2, x3, phi, phi-literal) to a policy."""
    label = label.strip().lower()
    if label in ("off", "no-td", "none"):
        return TdPolicy(mode="off")
    if label.startswith("x"):
        try:
            return TdPolicy(mode="constant", factor=float(label[1:]))
        except ValueError:
            raise ConfigurationError(f"bad td label {label!r}") from None
    if label == "phi":
        return TdPolicy(mode="adaptive")
    if label == "phi-literal":
        return TdPolicy(mode="adaptive", phi_literal_max=True)
    raise ConfigurationError(f"bad td label {label!r}")


def td_policy_label(policy: TdPolicy) -> str:
    if policy.mode == "off":
        return "off"
    if policy.mode == "constant":
        f = policy.factor
        return f"x{int(f)}" if f == int(f) else f"x{f}"
    return "phi-literal" if policy.phi_literal_max else "phi"
