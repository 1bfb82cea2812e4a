"""Preprocessing: smoothing, relative coordinates, truncation, splits, normalization.

The fixed order is smooth -> relative -> truncate -> split -> normalize.
Smoothing applies only to the 18 arm/hand marker columns; the two ball
columns pass through untouched. Relative conversion emits L-1 frame
differences, and truncation keeps the last 60 of them, so a raw trial
needs at least 61 frames.

Index conventions: raw frames are 0-based. The 60 retained window frames
are raw frames (L-60)..(L-1), indexed 0..59; ``absolute_tail`` row k holds
the absolute hand-base and ball coordinates at window frame k (taken after
smoothing, so the cumulative sum of the raw difference columns matches the
tail increments exactly). The processed ``contact_frame`` is the window
frame index of first contact, c_raw - (L - 60). History step t (1-based,
t = 1..60) is the difference ending at window frame t-1: a model that has
consumed t steps knows window frames up to t-1.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import DataFormatError

N_FEATURES = 20
MARKER_COLS = 18          # shoulder, elbow, wrist, hand base, 5 fingertips (x, y each)
HAND_BASE_COLS = (6, 7)   # marker 4
BALL_COLS = (18, 19)
SEQ_LEN = 60
SAVGOL_WINDOW = 7
SAVGOL_ORDER = 3


@dataclass
class RawTrial:
    trial_id: str
    frames: np.ndarray          # (L, 20) absolute coordinates at 100 Hz
    label: int                  # 1 = catch, 0 = drop
    hand_side: str              # left | right
    contact_frame: int          # 0-based raw frame of first ball contact
    drop_kind: str = "catch"    # catch | jump_off | miss

    def validate(self) -> None:
        if self.frames.ndim != 2 or self.frames.shape[1] != N_FEATURES:
            raise DataFormatError(
                f"trial {self.trial_id}: frames must be (L, {N_FEATURES}), got {self.frames.shape}")
        if self.frames.shape[0] < SEQ_LEN:
            raise DataFormatError(
                f"trial {self.trial_id}: needs at least {SEQ_LEN} frames, got {self.frames.shape[0]}")
        if not np.isfinite(self.frames).all():
            raise DataFormatError(f"trial {self.trial_id}: non-finite coordinates")
        if not 0 <= self.contact_frame < self.frames.shape[0]:
            raise DataFormatError(f"trial {self.trial_id}: contact_frame out of range")
        if self.label not in (0, 1):
            raise DataFormatError(f"trial {self.trial_id}: label must be 0 or 1")
        if self.hand_side not in ("left", "right"):
            raise DataFormatError(f"trial {self.trial_id}: bad hand_side {self.hand_side!r}")


@dataclass
class ProcessedTrial:
    trial_id: str
    features: np.ndarray        # (60, 20) frame differences (normalized after normalize())
    label: int
    absolute_tail: np.ndarray   # (60, 4): hand-base x, y, ball x, y per window frame
    contact_frame: int          # 0-based window frame of first contact
    hand_side: str = "right"
    drop_kind: str = "catch"


@dataclass
class NormStats:
    mean: np.ndarray  # (20,)
    std: np.ndarray   # (20,)


@dataclass
class Splits:
    train: list
    validation: list
    test: list

    def all_parts(self):
        return self.train, self.validation, self.test


# ----------------------------------------------------------------------
# smoothing


@lru_cache(maxsize=256)
def _savgol_weights(length: int, order: int, pos: int) -> np.ndarray:
    offs = np.arange(length, dtype=np.float64) - pos
    a = np.vander(offs, order + 1, increasing=True)
    # value at the evaluation point of the least-squares polynomial fit
    coef, *_ = np.linalg.lstsq(a, np.eye(length), rcond=None)
    return coef[0]


def savgol_smooth(series: np.ndarray, window: int = SAVGOL_WINDOW,
                  order: int = SAVGOL_ORDER) -> np.ndarray:
    """Savitzky-Golay smoothing of every column of an (L, K) series.

    Interior points use the symmetric window; points near the edges refit
    the polynomial on the truncated asymmetric window, so polynomials of
    degree <= order are reproduced exactly everywhere.
    """
    series = np.asarray(series, dtype=np.float64)
    length = series.shape[0]
    if window % 2 != 1:
        raise ValueError(f"window must be odd, got {window}")
    if order >= window:
        raise ValueError(f"order {order} must be < window {window}")
    if window >= length:
        raise ValueError(f"window {window} must be < series length {length}")
    half = window // 2
    out = np.empty_like(series)
    center = _savgol_weights(window, order, half)
    interior = np.arange(half, length - half)
    # gather the full symmetric windows as one tensor product
    idx = interior[:, None] + np.arange(-half, half + 1)[None, :]
    out[interior] = np.einsum("w,iwk->ik", center, series[idx])
    for i in range(half):
        lo, hi = 0, min(length, i + half + 1)
        out[i] = _savgol_weights(hi - lo, order, i - lo) @ series[lo:hi]
    for i in range(length - half, length):
        lo, hi = max(0, i - half), length
        out[i] = _savgol_weights(hi - lo, order, i - lo) @ series[lo:hi]
    return out


def smooth_markers(frames: np.ndarray, window: int = SAVGOL_WINDOW,
                   order: int = SAVGOL_ORDER) -> np.ndarray:
    """Smooth the marker columns only; ball columns pass through."""
    out = frames.astype(np.float64).copy()
    out[:, :MARKER_COLS] = savgol_smooth(frames[:, :MARKER_COLS], window, order)
    return out


# ----------------------------------------------------------------------
# relative coordinates and truncation


def to_relative(series: np.ndarray) -> np.ndarray:
    """Frame-to-frame differences: out[t] = in[t+1] - in[t], shape (L-1, K)."""
    series = np.asarray(series, dtype=np.float64)
    if series.shape[0] < 2:
        raise ValueError(f"need at least 2 frames, got {series.shape[0]}")
    return np.diff(series, axis=0)


def truncate(frames: np.ndarray, target: int = SEQ_LEN) -> tuple[np.ndarray, int]:
    """Keep the last ``target`` rows; returns (tail, dropped_count)."""
    n = frames.shape[0]
    if n < target:
        raise ValueError(f"cannot truncate {n} rows to {target}")
    f = n - target
    return frames[f:], f


def truncate_trial(frames: np.ndarray, contact_frame: int,
                   target: int = SEQ_LEN) -> tuple[np.ndarray, int, int]:
    """Truncate a frame sequence and re-index its contact frame."""
    tail, f = truncate(frames, target)
    return tail, contact_frame - f, f


def preprocess_trial(raw: RawTrial, window: int = SAVGOL_WINDOW,
                     order: int = SAVGOL_ORDER) -> ProcessedTrial:
    raw.validate()
    smoothed = smooth_markers(raw.frames, window, order)
    rel = to_relative(smoothed)
    features, _ = truncate(rel, SEQ_LEN)
    length = raw.frames.shape[0]
    tail_cols = list(HAND_BASE_COLS) + list(BALL_COLS)
    absolute_tail = smoothed[length - SEQ_LEN:, tail_cols].copy()
    contact = raw.contact_frame - (length - SEQ_LEN)
    return ProcessedTrial(
        trial_id=raw.trial_id, features=np.ascontiguousarray(features),
        label=raw.label, absolute_tail=absolute_tail, contact_frame=contact,
        hand_side=raw.hand_side, drop_kind=raw.drop_kind)


def preprocess(trials: list[RawTrial], window: int = SAVGOL_WINDOW,
               order: int = SAVGOL_ORDER) -> list[ProcessedTrial]:
    return [preprocess_trial(t, window, order) for t in trials]


# ----------------------------------------------------------------------
# splitting and normalization


def split_dataset(trials: list, rng: np.random.Generator) -> Splits:
    """Random label-blind 60/20/20 partition.

    Train gets floor(0.6 n); the remainder splits evenly with the odd
    element going to test.
    """
    n = len(trials)
    if n < 5:
        raise ValueError(f"need at least 5 trials to split, got {n}")
    perm = rng.permutation(n)
    n_train = int(np.floor(0.6 * n))
    rest = n - n_train
    n_val = rest // 2
    train = [trials[i] for i in perm[:n_train]]
    val = [trials[i] for i in perm[n_train:n_train + n_val]]
    test = [trials[i] for i in perm[n_train + n_val:]]
    return Splits(train, val, test)


def compute_norm_stats(trials: list[ProcessedTrial]) -> NormStats:
    if not trials:
        raise ValueError("cannot compute stats on an empty split")
    stacked = np.concatenate([t.features for t in trials], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    zero = np.flatnonzero(std == 0.0)
    if zero.size:
        raise ValueError(f"zero standard deviation in feature column(s) {zero.tolist()}")
    return NormStats(mean, std)


def normalize(splits: Splits) -> tuple[Splits, NormStats]:
    """Scale every split by the training split's per-feature mean/std."""
    stats = compute_norm_stats(splits.train)

    def apply(trials):
        return [replace(t, features=(t.features - stats.mean) / stats.std)
                for t in trials]

    return Splits(apply(splits.train), apply(splits.validation), apply(splits.test)), stats


def denormalize(features: np.ndarray, stats: NormStats) -> np.ndarray:
    return features * stats.std + stats.mean


def to_arrays(trials: list[ProcessedTrial]) -> tuple[np.ndarray, np.ndarray]:
    """(features (N, T, F), labels (N,)) view of a processed split."""
    x = np.stack([t.features for t in trials])
    y = np.array([float(t.label) for t in trials])
    return x, y
