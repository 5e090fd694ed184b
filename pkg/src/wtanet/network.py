"""Runtime network: packed state, lockstep scheduler, and feedback scaling.

Circuits advance in lockstep on a double-buffered spike board: at timestep t
each circuit consumes the t-1 spikes of its children bottom-up and of its
parent top-down (sensory spikes are consumed at t directly), so information
crosses exactly one edge per timestep in either direction.  All per-circuit
state lives in flat arrays (see PackedNet) shared by the NumPy and compiled
kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .circuit import init_weights
from .errors import ConfigurationError
from .params import CircuitParams, StdpParams, TdPolicy
from .plasticity import alpha_table
from .topology import NetworkTopology


def td_factor(policy: TdPolicy, S: int) -> float:
    """Scale factor applied to a parent neuron's top-down spikes.

    ``S`` is the number of spikes that neuron generated for the stimulus at
    hand.  Adaptive mode grows the factor with S, capped at phi_cap (or, with
    phi_literal_max, bounded below by it).
    """
    if S < 0:
        raise ConfigurationError("S must be >= 0")
    if policy.mode == "off":
        return 1.0
    if policy.mode == "constant":
        return policy.factor
    v = policy.phi_a + policy.phi_b * float(S) ** policy.phi_p
    if policy.phi_literal_max:
        return v if v > policy.phi_cap else policy.phi_cap
    return v if v < policy.phi_cap else policy.phi_cap


_TD_MODE_CODE = {"off": 0, "constant": 1}


def pack_sensory_steps(pop_order, pop_sizes, steps):
    """Pack per-step {population: fired indices} dicts into a kernel block.

    Returns (sens_ptr, sens_idx): the slice for (step t, population p) is
    sens_idx[sens_ptr[t * n_pops + p] : sens_ptr[t * n_pops + p + 1]].
    """
    n_pops = len(pop_order)
    ptr = np.zeros(len(steps) * n_pops + 1, dtype=np.int64)
    chunks = []
    total = 0
    for t, step in enumerate(steps):
        for p, pop_id in enumerate(pop_order):
            fired = np.asarray(step.get(pop_id, ()), dtype=np.int64)
            if fired.size and (fired.min() < 0 or fired.max() >= pop_sizes[p]):
                raise ConfigurationError(f"sensory index out of range for {pop_id}")
            chunks.append(fired)
            total += fired.size
            ptr[t * n_pops + p + 1] = total
    idx = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
    return ptr, idx.astype(np.int64)


class PackedNet:
    """Flat-array state of every circuit, shared by both kernel backends."""

    def __init__(self, topology: NetworkTopology, params: CircuitParams,
                 stdp: StdpParams, policy: TdPolicy):
        if abs(params.c - stdp.c) > 0:
            raise ConfigurationError("circuit and plasticity weight constants differ")
        self.topology = topology
        self.params = params
        self.stdp = stdp
        self.policy = policy

        self.pop_order = [p.id for p in topology.populations]
        self.pop_index = {p: i for i, p in enumerate(self.pop_order)}
        self.pop_sizes = np.array([p.size for p in topology.populations], dtype=np.int64)
        self.circ_order = [c.id for c in topology.circuits]
        self.circ_index = {c: i for i, c in enumerate(self.circ_order)}

        C = len(self.circ_order)
        self.n_circuits = C
        self.n_pops = len(self.pop_order)
        self.K = np.array([c.K for c in topology.circuits], dtype=np.int64)
        self.circ_off = np.zeros(C + 1, dtype=np.int64)
        np.cumsum(self.K, out=self.circ_off[1:])
        total_k = int(self.circ_off[C])

        # wiring: children CSR and bottom-up input sizes
        cptr = [0]
        ckind, cid, coff = [], [], []
        M = np.zeros(C, dtype=np.int64)
        for i, circ in enumerate(topology.circuits):
            edge = topology.up_edge_of(circ.id)
            pos = 0
            if edge is not None:
                for s in edge.sources:
                    if s in self.pop_index:
                        ckind.append(0)
                        cid.append(self.pop_index[s])
                        size = int(self.pop_sizes[self.pop_index[s]])
                    else:
                        ckind.append(1)
                        cid.append(self.circ_index[s])
                        size = int(self.K[self.circ_index[s]])
                    coff.append(pos)
                    pos += size
            M[i] = pos
            cptr.append(len(ckind))
        self.cptr = np.array(cptr, dtype=np.int64)
        self.ckind = np.array(ckind, dtype=np.int64)
        self.cid = np.array(cid, dtype=np.int64)
        self.coff = np.array(coff, dtype=np.int64)
        self.M = M

        # feedback wiring: parent index where a mirrored down-edge exists
        self.fb_parent = np.full(C, -1, dtype=np.int64)
        P = np.zeros(C, dtype=np.int64)
        for i, circ in enumerate(topology.circuits):
            parent = topology.parent_of(circ.id)
            if parent is not None and topology.has_down_edge(parent, circ.id):
                pi = self.circ_index[parent]
                self.fb_parent[i] = pi
                P[i] = int(self.K[pi])
        self.P = P
        if policy.mode == "off" and np.any(P > 0):
            raise ConfigurationError("top-down edges present but policy mode is off")

        def offsets(sizes):
            out = np.zeros(C + 1, dtype=np.int64)
            np.cumsum(sizes, out=out[1:])
            return out

        self.wup_off = offsets(self.K * self.M)
        self.wdn_off = offsets(self.K * self.P)
        self.lastup_off = offsets(self.M)
        self.lastdn_off = offsets(self.P)

        self.mu = np.zeros(total_k)
        self.Ncnt = np.zeros(total_k, dtype=np.int64)
        self.Scnt = np.zeros(total_k, dtype=np.int64)
        self.psi = np.full(C, params.psi_init)
        self.ema = np.full(C, params.target_rate)
        self.wup_flat = np.zeros(int(self.wup_off[C]))
        self.wdn_flat = np.zeros(int(self.wdn_off[C]))
        self.lastup_flat = np.full(int(self.lastup_off[C]), -1, dtype=np.int64)
        self.lastdn_flat = np.full(int(self.lastdn_off[C]), -1, dtype=np.int64)
        self.factors_flat = np.zeros(int(self.lastdn_off[C]))
        self.zprev_idx = np.zeros(total_k, dtype=np.int64)
        self.zprev_cnt = np.zeros(C, dtype=np.int64)
        self.zcur_idx = np.zeros(total_k, dtype=np.int64)
        self.zcur_cnt = np.zeros(C, dtype=np.int64)

        self.alpha_tab = alpha_table(stdp)
        self.window = stdp.window
        self.ln_c = params.ln_c
        self.mu_max = params.mu_max
        self.target_rate = params.target_rate
        self.psi_gain = params.psi_gain
        self.psi_max = params.psi_max
        self.ema_decay = params.ema_decay
        self.eta_exp = stdp.rate_exponent
        self.td_mode = _TD_MODE_CODE.get(policy.mode, 3 if policy.phi_literal_max else 2)
        self.td_kappa = policy.factor
        self.phi_a = policy.phi_a
        self.phi_b = policy.phi_b
        self.phi_p = policy.phi_p
        self.phi_cap = policy.phi_cap

    # -- views -------------------------------------------------------------
    def mu_of(self, circuit_id: str) -> np.ndarray:
        i = self.circ_index[circuit_id]
        return self.mu[self.circ_off[i]:self.circ_off[i + 1]]

    def counts_of(self, circuit_id: str) -> np.ndarray:
        i = self.circ_index[circuit_id]
        return self.Ncnt[self.circ_off[i]:self.circ_off[i + 1]]

    def stimulus_counts_of(self, circuit_id: str) -> np.ndarray:
        i = self.circ_index[circuit_id]
        return self.Scnt[self.circ_off[i]:self.circ_off[i + 1]]

    def w_up_of(self, circuit_id: str) -> np.ndarray:
        i = self.circ_index[circuit_id]
        Ki, Mi = int(self.K[i]), int(self.M[i])
        return self.wup_flat[self.wup_off[i]:self.wup_off[i + 1]].reshape(Ki, Mi)

    def w_down_of(self, circuit_id: str):
        i = self.circ_index[circuit_id]
        if self.P[i] == 0:
            return None
        Ki, Pi = int(self.K[i]), int(self.P[i])
        return self.wdn_flat[self.wdn_off[i]:self.wdn_off[i + 1]].reshape(Ki, Pi)


class Network:
    """A packed network plus its sampling stream and stimulus clock."""

    def __init__(self, topology: NetworkTopology, params: CircuitParams = None,
                 stdp: StdpParams = None, policy: TdPolicy = None,
                 init_rng: np.random.Generator = None,
                 sampling_rng: np.random.Generator = None,
                 backend: str = None):
        self.params = params or CircuitParams()
        self.stdp = stdp or StdpParams()
        self.policy = policy or TdPolicy()
        self.state = PackedNet(topology, self.params, self.stdp, self.policy)
        self.topology = topology
        self.rng = sampling_rng or np.random.default_rng(0)
        self.t = 0
        self._run = kernels.get_backend(backend)
        if init_rng is not None:
            self.initialize_weights(init_rng)

    @property
    def backend(self) -> str:
        return self._run.__module__.rsplit(".", 1)[-1].lstrip("_")

    def initialize_weights(self, rng: np.random.Generator,
                           lo_frac: float = 0.25, hi_frac: float = 0.0):
        """Seeded init, all up-edge matrices first, then down-edge matrices."""
        s = self.state
        c = self.params.c
        for i in range(s.n_circuits):
            if s.M[i]:
                block = init_weights((int(s.K[i]), int(s.M[i])), c, rng,
                                     lo_frac, hi_frac)
                s.wup_flat[s.wup_off[i]:s.wup_off[i + 1]] = block.ravel()
        for i in range(s.n_circuits):
            if s.P[i]:
                block = init_weights((int(s.K[i]), int(s.P[i])), c, rng,
                                     lo_frac, hi_frac)
                s.wdn_flat[s.wdn_off[i]:s.wdn_off[i + 1]] = block.ravel()

    def reset_for_stimulus(self):
        """Per-stimulus reset: potentials, traces, S counters, rate EMA, board."""
        s = self.state
        s.mu.fill(0.0)
        s.lastup_flat.fill(-1)
        s.lastdn_flat.fill(-1)
        s.Scnt.fill(0)
        s.ema.fill(self.params.target_rate)
        s.zprev_cnt.fill(0)
        s.zcur_cnt.fill(0)
        self.t = 0

    def run_stimulus(self, sens_ptr, sens_idx, T: int, learn: bool,
                     record: bool = False):
        """Run T timesteps against a packed sensory block; advances the clock."""
        out = self._run(self.state, sens_ptr, sens_idx, int(T), self.t,
                        1 if learn else 0, 1 if record else 0, self.rng)
        self.t += int(T)
        n, r_t, r_c, r_k = out
        if record:
            return r_t[:n].copy(), r_c[:n].copy(), r_k[:n].copy()
        return None

    def step(self, sensory: dict, learn: bool = False):
        """Single lockstep timestep; ``sensory`` maps population id to indices.

        Returns the fired indices of every circuit at this step.
        """
        s = self.state
        ptr, idx = pack_sensory_steps(s.pop_order, s.pop_sizes, [sensory])
        r_t, r_c, r_k = self.run_stimulus(ptr, idx, 1, learn, record=True)
        return {cid: r_k[r_c == i] for i, cid in enumerate(s.circ_order)}

    # -- readouts ------------------------------------------------------------
    def posterior(self, circuit_id: str) -> np.ndarray:
        mu = self.state.mu_of(circuit_id)
        e = np.exp(mu - mu.max())
        return e / e.sum()

    def joint_posterior(self) -> dict:
        return {cid: self.posterior(cid) for cid in self.state.circ_order}

    def weight_checksum(self) -> float:
        return float(self.state.wup_flat.sum() + self.state.wdn_flat.sum())
