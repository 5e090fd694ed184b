"""Unsupervised readout: neuron-to-digit assignment, classification, calibration.

Each final-layer neuron is assigned the digit it responded to most over the
test set; a stimulus is classified by the digit whose assigned neurons spiked
most (ties broken at random, seeded), with confidence the dominant digit's
spike share.  The confidence error measures, per predicted class, the total
variation between the average spike-share distribution and the empirical
distribution of true labels.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

N_CLASSES = 10
DEAD = -1
ABSTAIN = -1

RUN_CSV_SCHEMA = 1
RUN_CSV_COLUMNS = [
    "schema", "seed", "design", "td_policy", "network", "n_stimuli",
    "n_abstain", "accuracy", "confidence", "confidence_error", "config_hash",
]


@dataclass(frozen=True)
class LabelAssignment:
    """Digit of each final-layer neuron (DEAD = never responded) + histograms."""

    digit_of: np.ndarray        # (n_neurons,) int, DEAD for silent neurons
    histograms: np.ndarray      # (n_neurons, 10) response counts

    @property
    def n_dead(self) -> int:
        return int(np.sum(self.digit_of == DEAD))


@dataclass(frozen=True)
class StimulusVerdict:
    predicted: int              # ABSTAIN when the final layer stayed silent
    confidence: float
    true_label: int
    digit_spikes: np.ndarray    # (10,) spikes per assigned digit

    @property
    def abstained(self) -> bool:
        return self.predicted == ABSTAIN

    @property
    def correct(self) -> bool:
        return self.predicted == self.true_label


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    confidence: float
    confidence_error: float
    n_stimuli: int
    n_abstain: int
    confusion: np.ndarray       # (10, 11) true class x predicted class (+abstain)
    spike_share: np.ndarray     # (10, 10) predicted class x mean digit spike share
    predicted_counts: np.ndarray  # (10,) verdicts per predicted class
    metadata: dict = field(default_factory=dict)


def assign_labels(responses: np.ndarray, rng: np.random.Generator) -> LabelAssignment:
    """Argmax digit per neuron; silent rows DEAD.

    Ties are broken by a seeded rule keyed on the histogram itself, so the
    choice is stable across reruns and invariant to neuron reordering.
    """
    responses = np.asarray(responses)
    if responses.ndim != 2 or responses.shape[1] != N_CLASSES:
        raise ConfigurationError(f"responses must be (n, {N_CLASSES})")
    if responses.size and responses.min() < 0:
        raise ConfigurationError("response counts must be non-negative")
    salt = int(rng.integers(0, 2**63))
    digit_of = np.full(responses.shape[0], DEAD, dtype=np.int64)
    for k in range(responses.shape[0]):
        row = responses[k]
        total = row.sum()
        if total == 0:
            continue
        best = row.max()
        tied = np.nonzero(row == best)[0]
        if tied.size == 1:
            digit_of[k] = tied[0]
        else:
            key = hashlib.blake2b(np.asarray(row, dtype=np.float64).tobytes(),
                                  digest_size=8).digest()
            tie_rng = np.random.default_rng([salt, int.from_bytes(key, "big")])
            digit_of[k] = tie_rng.choice(tied)
    return LabelAssignment(digit_of, responses.copy())


def classify(neuron_counts: np.ndarray, labels: LabelAssignment,
             rng: np.random.Generator, true_label: int) -> StimulusVerdict:
    """Histogram the stimulus spikes over assigned digits and pick the argmax."""
    neuron_counts = np.asarray(neuron_counts)
    if neuron_counts.shape != labels.digit_of.shape:
        raise ConfigurationError("spike counts do not match the assignment")
    hist = np.zeros(N_CLASSES)
    alive = labels.digit_of != DEAD
    np.add.at(hist, labels.digit_of[alive], neuron_counts[alive])
    total = hist.sum()
    if total == 0:
        return StimulusVerdict(ABSTAIN, 0.0, true_label, hist)
    best = hist.max()
    tied = np.nonzero(hist == best)[0]
    predicted = int(tied[0] if tied.size == 1 else rng.choice(tied))
    return StimulusVerdict(predicted, float(hist[predicted] / total), true_label, hist)


def confidence_error(verdicts) -> float:
    """Count-weighted total variation between spike shares and truth shares.

    For each predicted class c over its verdicts: p_spike(c') is the mean
    spike share of class c', p_true(c') the fraction whose true label is c';
    the class error is half the L1 distance between the two distributions.
    """
    groups = {}
    for v in verdicts:
        if v.abstained:
            continue
        groups.setdefault(v.predicted, []).append(v)
    if not groups:
        raise ConfigurationError("confidence_error needs at least one non-abstain verdict")
    total_n = 0
    acc = 0.0
    for c, group in groups.items():
        shares = np.zeros(N_CLASSES)
        truth = np.zeros(N_CLASSES)
        for v in group:
            s = v.digit_spikes.sum()
            shares += v.digit_spikes / s
            truth[v.true_label] += 1.0
        n = len(group)
        shares /= n
        truth /= n
        err = 0.5 * np.abs(shares - truth).sum()
        acc += n * err
        total_n += n
    return float(acc / total_n)


def summarize(verdicts, metadata=None) -> EvalReport:
    """Aggregate verdicts; abstentions count as incorrect."""
    verdicts = list(verdicts)
    n = len(verdicts)
    confusion = np.zeros((N_CLASSES, N_CLASSES + 1), dtype=np.int64)
    share_sum = np.zeros((N_CLASSES, N_CLASSES))
    pred_counts = np.zeros(N_CLASSES, dtype=np.int64)
    n_correct = 0
    n_abstain = 0
    conf_sum = 0.0
    for v in verdicts:
        col = N_CLASSES if v.abstained else v.predicted
        confusion[v.true_label, col] += 1
        if v.abstained:
            n_abstain += 1
            continue
        n_correct += int(v.correct)
        conf_sum += v.confidence
        pred_counts[v.predicted] += 1
        share_sum[v.predicted] += v.digit_spikes / v.digit_spikes.sum()
    n_classified = n - n_abstain
    spike_share = np.zeros((N_CLASSES, N_CLASSES))
    nz = pred_counts > 0
    spike_share[nz] = share_sum[nz] / pred_counts[nz, None]
    return EvalReport(
        accuracy=n_correct / n if n else 0.0,
        confidence=conf_sum / n_classified if n_classified else 0.0,
        confidence_error=confidence_error(verdicts) if n_classified else 0.0,
        n_stimuli=n,
        n_abstain=n_abstain,
        confusion=confusion,
        spike_share=spike_share,
        predicted_counts=pred_counts,
        metadata=dict(metadata or {}),
    )


# -- CSV output -------------------------------------------------------------

def run_csv_row(report: EvalReport) -> dict:
    md = report.metadata
    return {
        "schema": RUN_CSV_SCHEMA,
        "seed": md.get("seed", ""),
        "design": md.get("design", ""),
        "td_policy": md.get("td_policy", ""),
        "network": md.get("network", ""),
        "n_stimuli": report.n_stimuli,
        "n_abstain": report.n_abstain,
        "accuracy": f"{report.accuracy:.6f}",
        "confidence": f"{report.confidence:.6f}",
        "confidence_error": f"{report.confidence_error:.6f}",
        "config_hash": md.get("config_hash", ""),
    }


def write_run_csv(path, reports):
    """One row per evaluated network; schema version in every row."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RUN_CSV_COLUMNS)
        writer.writeheader()
        for r in reports:
            writer.writerow(run_csv_row(r))


def write_per_class_csv(path, report: EvalReport):
    """Confusion matrix rows (true class) and spike-share rows (predicted class)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["schema", RUN_CSV_SCHEMA, "network",
                         report.metadata.get("network", "")])
        writer.writerow(["kind", "class"] + [f"c{d}" for d in range(N_CLASSES)]
                        + ["abstain_or_count"])
        for t in range(N_CLASSES):
            writer.writerow(["confusion", t] + report.confusion[t].tolist())
        for c in range(N_CLASSES):
            writer.writerow(["spike_share", c]
                            + [f"{x:.6f}" for x in report.spike_share[c]]
                            + [int(report.predicted_counts[c])])
