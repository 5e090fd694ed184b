"""Experiment orchestration: configuration, training, testing, suites.

A run is fully determined by its RunConfig: one master seed derives the
weights-init, encoding, tie-break, and sampling streams, so identical
configurations reproduce byte-identical artifacts.  Training presents each
image for a fixed number of timesteps with plasticity on, resetting
potentials, traces, per-stimulus counters, and the rate EMA at each onset;
weight-map snapshots are exported on the configured schedule and training is
resumable from the rolling checkpoint.  Testing freezes plasticity, replays
the test set once, then derives label assignments and classifications from
the recorded responses.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import traceback
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .checkpoint import (
    Checkpoint,
    extract_checkpoint,
    load_checkpoint,
    restore_network,
    restore_rng,
    rng_state_of,
    save_checkpoint,
)
from .encoding import CubePartition, binarize, encode, sample_stream, stack_streams
from .errors import CheckpointMismatchError, ConfigurationError
from .evaluation import (
    assign_labels,
    classify,
    summarize,
    write_per_class_csv,
    write_run_csv,
)
from .network import Network
from .params import CircuitParams, StdpParams, td_policy_from_label, td_policy_label
from .topology import build_hierarchical, build_integration

DESIGNS = ("hierarchical", "integration")

STREAM_NAMES = ("weights-init", "encoding", "tie-break", "sampling")


@dataclass(frozen=True)
class RunConfig:
    design: str = "integration"
    td: str = "off"
    seed: int = 0
    train_count: int = 60000
    test_count: int = 10000
    duration: int = 150
    rate_hz: float = 200.0
    dt_ms: float = 1.0
    grid: tuple = (4, 4)
    image_shape: tuple = (28, 28)
    K_h: int = 38
    K_o: int = 99
    K_f: int = 98
    mu_max: float = 19.2558
    c: float = 1e-8
    target_rate: float = 0.1
    psi_gain: float = 0.01
    psi_init: float = field(default=-math.log(1e-8))
    psi_max: float = field(default=10.0 * -math.log(1e-8))
    ema_decay: float = 0.99
    tau_f: float = 2.0
    tau_s: float = 8.0
    rate_exponent: float = 0.8
    stdp_window: int = 40
    binarize_threshold: int = 1
    init_lo_frac: float = 0.25
    init_hi_frac: float = 0.0
    phi_literal_max: bool = False
    distinct_pairs: bool = False
    snapshot_schedule: tuple = (0, 1000, 10000)
    checkpoint_every: int = 1000
    assign_on: str = "test"
    data_dir: str = ""
    out_dir: str = "runs"

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ConfigurationError(f"design must be one of {DESIGNS}")
        if self.train_count < 0 or self.test_count < 1:
            raise ConfigurationError("counts must be positive")
        td_policy_from_label(self.td)
        if self.assign_on not in ("test", "train"):
            raise ConfigurationError("assign_on must be test or train")

    def circuit_params(self) -> CircuitParams:
        return CircuitParams(
            K=self.K_h, mu_max=self.mu_max, c=self.c,
            target_rate=self.target_rate, psi_gain=self.psi_gain,
            psi_init=self.psi_init, psi_max=self.psi_max,
            ema_decay=self.ema_decay,
        )

    def stdp_params(self) -> StdpParams:
        return StdpParams(tau_f=self.tau_f, tau_s=self.tau_s, c=self.c,
                          rate_exponent=self.rate_exponent, window=self.stdp_window)

    def td_policy(self):
        policy = td_policy_from_label(self.td)
        if policy.mode == "adaptive" and self.phi_literal_max:
            policy = replace(policy, phi_literal_max=True)
        return policy

    def partition(self) -> CubePartition:
        return CubePartition(self.grid, self.image_shape)

    def config_hash(self) -> str:
        """Hash of everything that shapes the trained artifact."""
        keys = [
            "design", "td", "seed", "train_count", "duration", "rate_hz",
            "dt_ms", "grid", "image_shape", "K_h", "K_o", "K_f", "mu_max",
            "c", "target_rate", "psi_gain", "psi_init", "psi_max",
            "ema_decay", "tau_f", "tau_s", "rate_exponent", "stdp_window",
            "binarize_threshold", "init_lo_frac", "init_hi_frac",
            "phi_literal_max", "distinct_pairs",
        ]
        d = asdict(self)
        payload = json.dumps({k: d[k] for k in keys}, sort_keys=True,
                             separators=(",", ":"), default=list)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def derive_streams(seed: int) -> dict:
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return {name: np.random.default_rng(ss)
            for name, ss in zip(STREAM_NAMES, children)}


def build_topology(config: RunConfig):
    top_down = config.td_policy().enabled
    if config.design == "hierarchical":
        return build_hierarchical(config.grid, config.K_h, config.K_o,
                                  config.image_shape, top_down=top_down)
    a = build_hierarchical(config.grid, config.K_h, config.K_o,
                           config.image_shape, top_down=top_down, prefix="a.")
    b = build_hierarchical(config.grid, config.K_h, config.K_o,
                           config.image_shape, top_down=top_down, prefix="b.")
    return build_integration(a, b, config.K_f, top_down=top_down)


def build_network(config: RunConfig, streams: dict, backend: str = None) -> Network:
    net = Network(
        build_topology(config),
        config.circuit_params(),
        config.stdp_params(),
        config.td_policy(),
        sampling_rng=streams["sampling"],
        backend=backend,
    )
    net.initialize_weights(streams["weights-init"],
                           config.init_lo_frac, config.init_hi_frac)
    return net


def readout_circuits(topology) -> list:
    """The root circuit plus any root children that head their own subtree."""
    roots = topology.roots()
    if len(roots) != 1:
        raise ConfigurationError("expected exactly one root circuit")
    root = roots[0]
    out = [root]
    for child in topology.circuit_children(root):
        if topology.circuit_children(child):
            out.append(child)
    return out


def snapshot_circuits(topology) -> list:
    """One first-layer circuit per sub-network plus every readout."""
    readouts = readout_circuits(topology)
    firsts = []
    for r in readouts:
        cur = r
        while True:
            children = topology.circuit_children(cur)
            if not children:
                break
            cur = children[0]
        if cur not in firsts and cur not in readouts:
            firsts.append(cur)
    return firsts + readouts


def _stimulus_block(config, part, data, index, enc_rng):
    img = data[index % len(data)]
    mask = binarize(img, config.binarize_threshold)
    stream = encode(mask, part, config.duration, config.rate_hz, config.dt_ms)
    if config.design == "integration":
        if config.distinct_pairs:
            other = data[(index + len(data) // 2) % len(data)]
            mask_b = binarize(other, config.binarize_threshold)
        else:
            mask_b = mask
        stream_b = encode(mask_b, part, config.duration, config.rate_hz,
                          config.dt_ms)
        stream = stack_streams([stream, stream_b])
    return sample_stream(stream, enc_rng), img.label


def train(config: RunConfig, data, resume_from=None, backend: str = None,
          progress=None) -> str:
    """Unsupervised training pass; returns the final checkpoint path."""
    if not data:
        raise ConfigurationError("no training data")
    os.makedirs(config.out_dir, exist_ok=True)
    _write_config_record(config)
    part = config.partition()
    chash = config.config_hash()

    if resume_from:
        ckpt = load_checkpoint(resume_from)
        if ckpt.config_hash != chash:
            raise CheckpointMismatchError(
                f"checkpoint hash {ckpt.config_hash} != config hash {chash}"
            )
        net = restore_network(ckpt, backend=backend)
        streams = {
            "encoding": restore_rng(ckpt.rng_states["encoding"]),
            "tie-break": restore_rng(ckpt.rng_states["tie-break"]),
            "sampling": net.rng,
        }
        start = ckpt.stimuli_seen
    else:
        streams = derive_streams(config.seed)
        net = build_network(config, streams, backend=backend)
        start = 0

    def save(path, seen):
        save_checkpoint(path, net, chash, seen, {
            "encoding": rng_state_of(streams["encoding"]),
            "tie-break": rng_state_of(streams["tie-break"]),
            "sampling": rng_state_of(net.rng),
        })

    latest = os.path.join(config.out_dir, "checkpoint_latest.ckpt")
    final = os.path.join(config.out_dir, "checkpoint_final.ckpt")
    n = config.train_count
    for i in range(start, n):
        if i in config.snapshot_schedule:
            _export_snapshots(net, part, config, i)
        (ptr, idx), _label = _stimulus_block(config, part, data, i,
                                             streams["encoding"])
        net.reset_for_stimulus()
        net.run_stimulus(ptr, idx, config.duration, learn=True)
        seen = i + 1
        if config.checkpoint_every and seen % config.checkpoint_every == 0 and seen < n:
            save(latest, seen)
        if progress and seen % progress == 0:
            print(f"trained {seen}/{n} stimuli", flush=True)
    if n in config.snapshot_schedule:
        _export_snapshots(net, part, config, n)
    save(final, n)
    return final


def _export_snapshots(net, part, config, seen):
    from .weightmaps import export_weight_maps
    out = os.path.join(config.out_dir, "snapshots", f"{seen:06d}")
    for cid in snapshot_circuits(net.topology):
        export_weight_maps(net, part, cid, out)


def _write_config_record(config: RunConfig):
    lines = [f"{k} = {v}" for k, v in sorted(asdict(config).items())]
    path = os.path.join(config.out_dir, "config.txt")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def test(config: RunConfig, checkpoint, data, backend: str = None,
         write_csv: bool = True, check_hash: bool = True,
         assign_data=None) -> dict:
    """Frozen evaluation; returns {readout circuit id: EvalReport}."""
    ckpt = load_checkpoint(checkpoint) if not isinstance(checkpoint, Checkpoint) \
        else checkpoint
    if check_hash and ckpt.config_hash != config.config_hash():
        raise CheckpointMismatchError(
            f"checkpoint hash {ckpt.config_hash} != config hash "
            f"{config.config_hash()}; refusing to run"
        )
    net = restore_network(ckpt, backend=backend)
    part = config.partition()
    enc_rng = restore_rng(ckpt.rng_states["encoding"])
    tie_rng = restore_rng(ckpt.rng_states["tie-break"])
    readouts = readout_circuits(net.topology)

    def frozen_pass(images):
        counts = {r: [] for r in readouts}
        labels = []
        for i in range(len(images)):
            (ptr, idx), label = _stimulus_block(config, part, images, i, enc_rng)
            net.reset_for_stimulus()
            net.run_stimulus(ptr, idx, config.duration, learn=False)
            for r in readouts:
                counts[r].append(net.state.stimulus_counts_of(r).copy())
            labels.append(label)
        return {r: np.array(v) for r, v in counts.items()}, np.array(labels)

    images = data[:config.test_count]
    counts, true_labels = frozen_pass(images)
    if config.assign_on == "train":
        if assign_data is None:
            raise ConfigurationError("assign_on=train needs assignment data")
        a_counts, a_labels = frozen_pass(assign_data[:config.test_count])
    else:
        a_counts, a_labels = counts, true_labels

    reports = {}
    for r in readouts:
        responses = np.zeros((counts[r].shape[1], 10))
        for row, label in zip(a_counts[r], a_labels):
            responses[:, label] += row
        assignment = assign_labels(responses, tie_rng)
        verdicts = [
            classify(counts[r][i], assignment, tie_rng, int(true_labels[i]))
            for i in range(len(images))
        ]
        reports[r] = summarize(verdicts, metadata={
            "seed": config.seed,
            "design": config.design,
            "td_policy": config.td,
            "network": r,
            "config_hash": ckpt.config_hash,
        })
    if write_csv:
        os.makedirs(config.out_dir, exist_ok=True)
        write_run_csv(os.path.join(config.out_dir, "results.csv"),
                      [reports[r] for r in readouts])
        for r in readouts:
            safe = r.replace("/", "_")
            write_per_class_csv(
                os.path.join(config.out_dir, f"per_class_{safe}.csv"), reports[r])
    return reports


def test_standalone(ckpt: Checkpoint, root: str, config: RunConfig, data,
                    backend: str = None) -> dict:
    """Extract the subtree at ``root`` from a checkpoint and test it alone."""
    sub = extract_checkpoint(ckpt, root)
    sub_design = "hierarchical"
    sub_config = replace(config, design=sub_design, out_dir=config.out_dir)
    reports = test(sub_config, sub, data, backend=backend, write_csv=False,
                   check_hash=False)
    out = {}
    for r, rep in reports.items():
        rep.metadata.update(network=f"{r}-iso", design="hierarchical-iso")
        out[f"{r}-iso"] = rep
    return out


EXP2_POLICIES = ("x1", "x2", "x3", "phi")
EXP2_ISOLATION_POLICIES = ("x2",)


def run_experiment_suite(suite: str, seeds, config: RunConfig, data_train,
                         data_test, backend: str = None, progress=None) -> dict:
    """Batch protocol over seeds; partial failures are logged, not fatal.

    exp1: integration without feedback, reporting the integrating circuit and
    both embedded sub-networks per seed.  exp2: integration networks under
    each feedback policy, plus (under the isolation policies) standalone
    tests of the trained sub-networks against a hierarchical network trained
    alone with the same feedback.
    """
    if suite not in ("exp1", "exp2"):
        raise ConfigurationError("suite must be exp1 or exp2")
    if not seeds:
        raise ConfigurationError("need at least one seed")
    os.makedirs(config.out_dir, exist_ok=True)
    reports = []
    failures = []

    def one_run(cfg, tag):
        final = train(cfg, data_train, backend=backend, progress=progress)
        return load_checkpoint(final), test(cfg, final, data_test,
                                            backend=backend)

    for seed in seeds:
        if suite == "exp1":
            jobs = [("exp1", replace(config, design="integration", td="off",
                                     seed=seed,
                                     out_dir=os.path.join(config.out_dir,
                                                          "exp1", f"seed{seed}")))]
        else:
            jobs = [("exp2", replace(config, design="integration", td=td,
                                     seed=seed,
                                     out_dir=os.path.join(config.out_dir, "exp2",
                                                          td, f"seed{seed}")))
                    for td in EXP2_POLICIES]
        for tag, cfg in jobs:
            try:
                ckpt, reps = one_run(cfg, tag)
                reports.extend(reps.values())
                if suite == "exp2" and cfg.td in EXP2_ISOLATION_POLICIES:
                    for root in ("a.l2", "b.l2"):
                        reports.extend(
                            test_standalone(ckpt, root, cfg, data_test,
                                            backend=backend).values())
                    hx = replace(cfg, design="hierarchical",
                                 out_dir=os.path.join(config.out_dir, "exp2",
                                                      cfg.td, f"seed{seed}-hx"))
                    _, hx_reps = one_run(hx, "hx")
                    for rep in hx_reps.values():
                        rep.metadata.update(network="h_x")
                        reports.append(rep)
            except Exception as exc:
                failures.append((tag, seed, cfg.td, repr(exc)))
                with open(os.path.join(config.out_dir, "failures.log"), "a") as fh:
                    fh.write(f"{tag} seed={seed} td={cfg.td}: {exc}\n")
                    fh.write(traceback.format_exc() + "\n")

    write_run_csv(os.path.join(config.out_dir, "runs.csv"), reports)
    summary = summarize_suite(reports)
    _write_summary_csv(os.path.join(config.out_dir, "summary.csv"), summary)
    return {"reports": reports, "summary": summary, "failures": failures}


def summarize_suite(reports) -> list:
    """Mean and stddev of each metric per (design, policy, network)."""
    groups = {}
    for rep in reports:
        md = rep.metadata
        key = (md.get("design", ""), md.get("td_policy", ""), md.get("network", ""))
        groups.setdefault(key, []).append(rep)
    rows = []
    for key in sorted(groups):
        reps = groups[key]
        row = {"design": key[0], "td_policy": key[1], "network": key[2],
               "n_runs": len(reps)}
        for metric in ("accuracy", "confidence", "confidence_error"):
            vals = np.array([getattr(r, metric) for r in reps])
            row[f"{metric}_mean"] = float(vals.mean())
            row[f"{metric}_std"] = float(vals.std(ddof=0))
        rows.append(row)
    return rows


def _write_summary_csv(path, rows):
    import csv
    cols = ["design", "td_policy", "network", "n_runs",
            "accuracy_mean", "accuracy_std", "confidence_mean",
            "confidence_std", "confidence_error_mean", "confidence_error_std"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            for k, v in out.items():
                if isinstance(v, float):
                    out[k] = f"{v:.6f}"
            writer.writerow(out)
