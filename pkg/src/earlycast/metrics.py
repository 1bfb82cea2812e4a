"""Decision metrics: thresholded accuracy curves, time to (correct) decision.

A model's evaluation on one trial is its trace of per-history-size outputs
y^1..y^T. The 50% rule rounds each output; the 75% rule calls an output
decisive only outside (theta_lo, theta_hi). The time to decision is the
last crossing into the decisive region, defined only when the final output
is itself decisive (non-strict comparisons); a trace that is decisive from
step 1 and never crosses again decided at step 1. The time to correct
decision additionally requires the thresholded final output to match the
label. Steps convert to milliseconds at 10 ms per step (100 Hz).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .lstm import ModelBundle
from .pipeline import ProcessedTrial
from .psc import PscConfig, psc_classify
from .tcn import TcnBundle

MS_PER_STEP = 10.0
CONTACT_REFERENCE_MS = 400.0


@dataclass
class DecisionThresholds:
    theta_hi: float = 0.75
    theta_lo: float = 0.25
    accuracy_round: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.theta_lo < 0.5 < self.theta_hi < 1.0):
            raise ValueError("need 0 < theta_lo < 0.5 < theta_hi < 1")


@dataclass
class TrialEvaluation:
    trial_id: str
    trace: np.ndarray   # (T,) outputs in [0, 1]
    label: int
    is_warmup: np.ndarray | None = None
    contact_frame: int | None = None
    drop_kind: str = "unknown"


def ttd(trace: np.ndarray, thresholds: DecisionThresholds) -> int | None:
    """Time to decision (1-based step), or None when undefined."""
    y = np.asarray(trace, dtype=np.float64)
    if y.size == 0:
        raise ValueError("empty trace")
    hi, lo = thresholds.theta_hi, thresholds.theta_lo
    if not (y[-1] >= hi or y[-1] <= lo):
        return None
    up = (y[:-1] < hi) & (y[1:] >= hi)
    down = (y[:-1] > lo) & (y[1:] <= lo)
    cross = np.flatnonzero(up | down)
    if cross.size:
        return int(cross[-1]) + 2  # crossing at array index i+1 -> step i+2
    return 1 if (y[0] >= hi or y[0] <= lo) else None


def y_bin(trace: np.ndarray, thresholds: DecisionThresholds) -> int | None:
    """Thresholded final output: 1 above theta_hi, 0 below theta_lo, else None."""
    final = float(np.asarray(trace)[-1])
    if final >= thresholds.theta_hi:
        return 1
    if final <= thresholds.theta_lo:
        return 0
    return None


def ttcd(trace: np.ndarray, label: int,
         thresholds: DecisionThresholds) -> int | None:
    """Time to correct decision: TTD when the final decision matches the label."""
    decided = y_bin(trace, thresholds)
    if decided is None or decided != int(label):
        return None
    return ttd(trace, thresholds)


def accuracy_curve_50(evaluations: list[TrialEvaluation],
                      thresholds: DecisionThresholds | None = None) -> np.ndarray:
    """Rounded-output accuracy per history size; outputs >= 0.5 round to 1."""
    thresholds = thresholds or DecisionThresholds()
    if not evaluations:
        raise ValueError("empty evaluation set")
    traces = np.stack([e.trace for e in evaluations])
    labels = np.array([e.label for e in evaluations])[:, None]
    return ((traces >= thresholds.accuracy_round).astype(int) == labels).mean(axis=0)


@dataclass
class Curve75:
    accuracy: np.ndarray        # correct decisive / all trials, per history size
    decisive_count: np.ndarray  # trials outside (theta_lo, theta_hi), per history size
    correct_count: np.ndarray
    n_trials: int

    @property
    def accuracy_decisive(self) -> np.ndarray:
        """Correct / decisive, NaN where nothing was decisive."""
        with np.errstate(invalid="ignore"):
            return np.where(self.decisive_count > 0,
                            self.correct_count / np.maximum(self.decisive_count, 1),
                            np.nan)


def accuracy_curve_75(evaluations: list[TrialEvaluation],
                      thresholds: DecisionThresholds | None = None) -> Curve75:
    """Confidence-thresholded accuracy per history size.

    An output strictly above theta_hi decides 1, strictly below theta_lo
    decides 0, anything between is indecisive and counts against accuracy
    (the denominator is all trials; the decisive-only ratio is recoverable
    from the emitted counts).
    """
    thresholds = thresholds or DecisionThresholds()
    if not evaluations:
        raise ValueError("empty evaluation set")
    traces = np.stack([e.trace for e in evaluations])
    labels = np.array([e.label for e in evaluations])[:, None]
    hi_mask = traces > thresholds.theta_hi
    lo_mask = traces < thresholds.theta_lo
    decisive = hi_mask | lo_mask
    correct = (hi_mask & (labels == 1)) | (lo_mask & (labels == 0))
    n = len(evaluations)
    return Curve75(accuracy=correct.mean(axis=0),
                   decisive_count=decisive.sum(axis=0),
                   correct_count=correct.sum(axis=0),
                   n_trials=n)


def ball_hand_distance(trial: ProcessedTrial, frame: int) -> float:
    """Euclidean hand-base to ball-center distance at a 0-based window frame."""
    tail = trial.absolute_tail
    if not 0 <= frame < tail.shape[0]:
        raise ValueError(f"frame {frame} out of range [0, {tail.shape[0]})")
    return float(np.hypot(tail[frame, 0] - tail[frame, 2],
                          tail[frame, 1] - tail[frame, 3]))


@dataclass
class MetricsReport:
    n_test: int
    seq_len: int
    thresholds: DecisionThresholds
    accuracy50: np.ndarray
    accuracy75: np.ndarray
    accuracy75_decisive_count: np.ndarray
    accuracy75_correct_count: np.ndarray
    n_decisions: int
    mttd_steps: float | None
    n_correct_decisions: int
    mttcd_steps: float | None
    ttd_values: list = field(default_factory=list)
    ttcd_values: list = field(default_factory=list)

    @property
    def mttd_ms(self):
        return None if self.mttd_steps is None else self.mttd_steps * MS_PER_STEP

    @property
    def mttcd_ms(self):
        return None if self.mttcd_steps is None else self.mttcd_steps * MS_PER_STEP

    @property
    def mttd_delta_ms(self):
        return None if self.mttd_ms is None else self.mttd_ms - CONTACT_REFERENCE_MS

    @property
    def mttcd_delta_ms(self):
        return None if self.mttcd_ms is None else self.mttcd_ms - CONTACT_REFERENCE_MS

    def to_dict(self) -> dict:
        return {
            "n_test": self.n_test,
            "seq_len": self.seq_len,
            "thresholds": {"theta_hi": self.thresholds.theta_hi,
                           "theta_lo": self.thresholds.theta_lo,
                           "accuracy_round": self.thresholds.accuracy_round},
            "accuracy50": [float(v) for v in self.accuracy50],
            "accuracy75": [float(v) for v in self.accuracy75],
            "accuracy75_decisive_count": [int(v) for v in self.accuracy75_decisive_count],
            "accuracy75_correct_count": [int(v) for v in self.accuracy75_correct_count],
            "n_decisions": self.n_decisions,
            "mttd_steps": self.mttd_steps,
            "mttd_ms": self.mttd_ms,
            "mttd_delta_ms": self.mttd_delta_ms,
            "n_correct_decisions": self.n_correct_decisions,
            "mttcd_steps": self.mttcd_steps,
            "mttcd_ms": self.mttcd_ms,
            "mttcd_delta_ms": self.mttcd_delta_ms,
        }


def aggregate(evaluations: list[TrialEvaluation],
              thresholds: DecisionThresholds | None = None) -> MetricsReport:
    """Accuracy curves plus pooled decision statistics for one model."""
    thresholds = thresholds or DecisionThresholds()
    if not evaluations:
        raise ValueError("empty evaluation set")
    curve75 = accuracy_curve_75(evaluations, thresholds)
    ttd_vals = []
    ttcd_vals = []
    for ev in evaluations:
        d = ttd(ev.trace, thresholds)
        if d is not None:
            ttd_vals.append(d)
        c = ttcd(ev.trace, ev.label, thresholds)
        if c is not None:
            ttcd_vals.append(c)
    return MetricsReport(
        n_test=len(evaluations),
        seq_len=len(evaluations[0].trace),
        thresholds=thresholds,
        accuracy50=accuracy_curve_50(evaluations, thresholds),
        accuracy75=curve75.accuracy,
        accuracy75_decisive_count=curve75.decisive_count,
        accuracy75_correct_count=curve75.correct_count,
        n_decisions=len(ttd_vals),
        mttd_steps=float(np.mean(ttd_vals)) if ttd_vals else None,
        n_correct_decisions=len(ttcd_vals),
        mttcd_steps=float(np.mean(ttcd_vals)) if ttcd_vals else None,
        ttd_values=ttd_vals,
        ttcd_values=ttcd_vals,
    )


# ----------------------------------------------------------------------
# model evaluation


def _trace_for(model, trial: ProcessedTrial):
    if isinstance(model, PscConfig):
        pt = psc_classify(model, trial.features)
        return pt.outputs, pt.is_warmup
    if isinstance(model, ModelBundle):
        if not model.config.has_classifier:
            raise ValueError(f"{model.variant} has no classification head to evaluate")
        y = kernels.classifier_trace(trial.features, model.trunk_tuple(),
                                     model.cls_w, model.cls_b)
        return y, None
    if isinstance(model, TcnBundle):
        cur = trial.features
        for i, blk in enumerate(model.blocks):
            branch = np.maximum(kernels.conv1d_causal(cur, blk.k1, blk.b1, blk.dilation), 0.0)
            branch = np.maximum(kernels.conv1d_causal(branch, blk.k2, blk.b2, blk.dilation), 0.0)
            res = cur if blk.down_k is None else kernels.conv1d_causal(cur, blk.down_k, blk.down_b, 1)
            cur = np.maximum(branch + res, 0.0)
        with np.errstate(over="ignore"):
            y = 1.0 / (1.0 + np.exp(-(cur @ model.head_w[0] + model.head_b[0])))
        return y, None
    raise TypeError(f"cannot evaluate {type(model).__name__}")


def evaluate_model(model, test_trials: list[ProcessedTrial],
                   thresholds: DecisionThresholds | None = None,
                   workers: int = 1) -> list[TrialEvaluation]:
    """One dropout-free forward pass per trial.

    Every architecture is causal, so the per-step output at step t is the
    model's classification given the first t frames. ``model`` is a
    classifier bundle, a TCN bundle, or a PscConfig.
    """
    def one(trial: ProcessedTrial) -> TrialEvaluation:
        trace, warm = _trace_for(model, trial)
        return TrialEvaluation(trial_id=trial.trial_id, trace=trace,
                               label=trial.label, is_warmup=warm,
                               contact_frame=trial.contact_frame,
                               drop_kind=trial.drop_kind)

    if workers <= 1 or len(test_trials) < 2:
        return [one(t) for t in test_trials]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, test_trials))
