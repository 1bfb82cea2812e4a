"""Predictive sequential classification: the coupled classifier/predictor rollout.

For every history size t the classifier and predictor advance their
canonical states on the real frame x^t. From the warm-up step onward both
states are copied and the remaining steps are rolled out closed-loop: each
predicted frame feeds both copied models, the predictor's output becomes
the next input, and the classifier's output at the synthetic final step is
recorded as the predictive classification for history t. The canonical
states are never touched by a rollout, so the trace at history t is a pure
function of the first t real frames. At full history the rollout is empty
and the trace equals the plain per-step classifier output.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .lstm import ModelBundle


class PredictorProtocol:
    """Anything that can forecast the next frame from a running state.

    Implementations provide ``initial_state()`` and
    ``step(x, state) -> (next_frame_prediction, new_state)``. Used to swap
    stub predictors into the rollout. ``step`` must not mutate its inputs:
    rollouts fork the canonical state by aliasing it.
    """

    def initial_state(self):
        raise NotImplementedError

    def step(self, x, state):
        raise NotImplementedError


class LstmPredictor(PredictorProtocol):
    """Adapter exposing a trained PREDICTOR bundle through the protocol."""

    def __init__(self, bundle: ModelBundle):
        if bundle.config.variant != "PREDICTOR" or bundle.pred_w is None:
            raise ValueError(f"predictor bundle must be PREDICTOR, got {bundle.config.variant}")
        self.bundle = bundle
        self._trunk = bundle.trunk_tuple()

    def initial_state(self):
        return kernels.lstm2_zero_state(self.bundle.config.hidden)

    def step(self, x, state):
        state = kernels.lstm2_step(x, state, self._trunk)
        return kernels.dense_linear(state[2], self.bundle.pred_w, self.bundle.pred_b), state


class OraclePredictor(PredictorProtocol):
    """Stub that returns the true future frames of a known series."""

    def __init__(self, series: np.ndarray):
        self.series = np.asarray(series, dtype=np.float64)

    def initial_state(self):
        return 0  # next frame index to reveal

    def step(self, x, state):
        t_next = min(state + 1, self.series.shape[0] - 1)
        return self.series[t_next].copy(), state + 1


class ConstantPredictor(PredictorProtocol):
    """Stub that always predicts the same frame (degenerate-input probe)."""

    def __init__(self, frame: np.ndarray):
        self.frame = np.asarray(frame, dtype=np.float64)

    def initial_state(self):
        return None

    def step(self, x, state):
        return self.frame.copy(), None


@dataclass
class PscConfig:
    classifier: ModelBundle
    predictor: ModelBundle | PredictorProtocol
    warmup_steps: int = 10
    seq_len: int = 60

    def __post_init__(self):
        if not (1 <= self.warmup_steps <= self.seq_len):
            raise ValueError("need 1 <= warmup_steps <= seq_len")
        if self.classifier.config.variant != "MTM":
            raise ValueError(
                f"classifier bundle must be MTM, got {self.classifier.config.variant}")
        if isinstance(self.predictor, ModelBundle):
            if self.predictor.config.variant != "PREDICTOR":
                raise ValueError(
                    f"predictor bundle must be PREDICTOR, got {self.predictor.config.variant}")
            if self.predictor.config.input_features != self.classifier.config.input_features:
                raise ValueError("classifier and predictor feature spaces differ")


@dataclass
class PredictionTrace:
    """Per-history-size predictive classifications for one trial."""

    outputs: np.ndarray            # (T,) in [0, 1]
    is_warmup: np.ndarray          # (T,) bool; True where the raw classifier output was used
    unroll_steps: int              # inner rollout iterations (per model)
    predictions: list | None = None  # optional per-history rollouts, each (T - t, F)
    trial_id: str | None = None


def psc_classify(config: PscConfig, series: np.ndarray, *,
                 collect_predictions: bool = False,
                 history_subset: set[int] | None = None) -> PredictionTrace:
    """Predictive classification trace for one normalized (T, F) series.

    ``history_subset`` restricts which history sizes run a rollout (the
    canonical pass always runs); other entries fall back to the raw
    classifier output. Evaluation is dropout-free everywhere.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2 or series.shape[0] != config.seq_len:
        raise ValueError(f"series must be ({config.seq_len}, F), got {series.shape}")
    cls = config.classifier
    fast = (isinstance(config.predictor, ModelBundle)
            and not collect_predictions and history_subset is None)
    if fast:
        pred = config.predictor
        y, unrolls = kernels.psc_trace(
            series, cls.trunk_tuple(), cls.cls_w, cls.cls_b,
            pred.trunk_tuple(), pred.pred_w, pred.pred_b, config.warmup_steps)
        warm = np.arange(1, config.seq_len + 1) < config.warmup_steps
        return PredictionTrace(y, warm, unrolls)
    predictor = (LstmPredictor(config.predictor)
                 if isinstance(config.predictor, ModelBundle) else config.predictor)
    return _psc_generic(config, series, predictor, collect_predictions, history_subset)


def _psc_generic(config: PscConfig, series: np.ndarray, predictor: PredictorProtocol,
                 collect_predictions: bool, history_subset) -> PredictionTrace:
    cls = config.classifier
    trunk = cls.trunk_tuple()
    t_len = config.seq_len
    cstate = kernels.lstm2_zero_state(cls.config.hidden)
    pstate = predictor.initial_state()
    y = np.empty(t_len)
    warm = np.zeros(t_len, dtype=bool)
    preds: list | None = [] if collect_predictions else None
    unrolls = 0
    for t0 in range(t_len):
        hist = t0 + 1
        cstate = kernels.lstm2_step(series[t0], cstate, trunk)
        x_next, pstate = predictor.step(series[t0], pstate)
        y_now = kernels.dense_sigmoid(cstate[2], cls.cls_w, cls.cls_b)
        in_warmup = hist < config.warmup_steps
        skipped = history_subset is not None and hist not in history_subset
        if in_warmup or skipped:
            y[t0] = y_now
            warm[t0] = in_warmup
            if preds is not None:
                preds.append(None)
            continue
        rc = tuple(s.copy() for s in cstate)
        rp = pstate
        x_roll = np.asarray(x_next, dtype=np.float64)
        rolled = []
        y_roll = y_now
        for _ in range(hist, t_len):
            if preds is not None:
                rolled.append(x_roll.copy())
            rc = kernels.lstm2_step(x_roll, rc, trunk)
            x_roll, rp = predictor.step(x_roll, rp)
            y_roll = kernels.dense_sigmoid(rc[2], cls.cls_w, cls.cls_b)
            unrolls += 1
        y[t0] = y_roll
        if preds is not None:
            preds.append(np.array(rolled).reshape(len(rolled), -1))
    return PredictionTrace(y, warm, unrolls, predictions=preds)


def train_psc(train_split, val_split, rng: np.random.Generator, **config_overrides):
    """Train the classifier (MTM) and the ancillary predictor separately.

    The two models get independent seeds derived from ``rng``. Keyword
    overrides (epochs, hidden, ...) apply to both configs. Returns
    (classifier_bundle, predictor_bundle, histories).
    """
    from .lstm import LstmModelConfig, train_model
    from .rng import make_rng

    seeds = rng.integers(0, 2**63, size=2)
    cls_cfg = LstmModelConfig.for_variant("MTM", **config_overrides)
    pred_cfg = LstmModelConfig.for_variant("PREDICTOR", **config_overrides)
    classifier, cls_hist = train_model(cls_cfg, train_split, val_split, make_rng(seeds[0]))
    predictor, pred_hist = train_model(pred_cfg, train_split, val_split, make_rng(seeds[1]))
    classifier.seed = int(seeds[0])
    predictor.seed = int(seeds[1])
    return classifier, predictor, {"classifier": cls_hist, "predictor": pred_hist}
