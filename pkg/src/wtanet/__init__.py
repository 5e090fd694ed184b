"""wtanet: discrete-time winner-take-all spiking networks with STDP learning.

Circuits of stochastically firing neurons compete under lateral inhibition,
learn input patterns through spike-timing-dependent plasticity, and compose
into tree-structured networks whose per-circuit softmax readouts factorize
the joint distribution over hidden causes.  Includes the MNIST population-code
encoding, hierarchical and integration network builders, top-down feedback
with constant or adaptive scaling, and the train/freeze/test experiment
protocol.
"""

from .params import CircuitParams, StdpParams, TdPolicy, td_policy_from_label

__version__ = "0.1.0"

__all__ = [
    "CircuitParams",
    "StdpParams",
    "TdPolicy",
    "td_policy_from_label",
    "__version__",
]
