"""Two-layer LSTM sequence models: MTO, MTM, HYB and the trajectory predictor.

All four variants share the same trunk (two LSTM layers, 64 hidden units by
default) and differ in their heads and training objective:

* ``MTO``  - sigmoid classification head, loss on the final step only
* ``MTM``  - sigmoid classification head, mean loss over every step
* ``HYB``  - classification head plus a linear next-frame prediction head,
  trained on the sum of the two losses
* ``PREDICTOR`` - prediction head only (the ancillary forecaster)

Gate order in the packed weights is input, forget, candidate, output. Each
layer holds one packed input matrix W (4H x F_in), one packed recurrent
matrix U (4H x H) and a single bias vector b (4H), so a layer contributes
4 * (H * (F_in + H) + H) trainable parameters.

Dropout follows the inverted convention (masks carry 1/keep) and exists
only in train mode. Recurrent dropout is variational: one mask per gate
group per sequence per epoch, applied to the hidden state entering U.
Output dropout is resampled per step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Graph, Tensor, backward, forward
from .errors import TrainingDivergedError
from .initializers import orthogonal, xavier_uniform
from .optim import AdamState, adam_step

VARIANTS = ("MTO", "MTM", "HYB", "PREDICTOR")

_OUTPUT_DROPOUT = {"MTO": 0.5, "MTM": 0.4, "HYB": 0.4, "PREDICTOR": 0.4}
_EPOCHS = {"MTO": 250, "MTM": 200, "HYB": 200, "PREDICTOR": 200}

# Trials per gradient chunk. Full-batch gradients are accumulated over
# chunks (identical mean up to float addition order); this only bounds the
# peak size of the activation tape. Graphs are shared across equal-sized
# chunks, so memory stays at one tape per distinct chunk size.
CHUNK_TRIALS = 96


@dataclass
class LstmLayerParams:
    W: np.ndarray  # (4H, F_in)
    U: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    def count(self) -> int:
        return self.W.size + self.U.size + self.b.size


def layer_param_count(input_features: int, hidden: int) -> int:
    """Closed-form parameter count of one LSTM layer."""
    return 4 * (hidden * (input_features + hidden) + hidden)


@dataclass
class LstmModelConfig:
    variant: str
    input_features: int = 20
    hidden: int = 64
    layers: int = 2
    output_dropout: float = 0.4
    recurrent_dropout: float = 0.2
    epochs: int = 200
    full_batch: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not (0.0 <= self.output_dropout < 1.0 and 0.0 <= self.recurrent_dropout < 1.0):
            raise ValueError("dropout rates must be in [0, 1)")
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")

    @classmethod
    def for_variant(cls, variant: str, **overrides) -> "LstmModelConfig":
        cfg = dict(variant=variant,
                   output_dropout=_OUTPUT_DROPOUT[variant],
                   epochs=_EPOCHS[variant])
        cfg.update(overrides)
        return cls(**cfg)

    @property
    def has_classifier(self) -> bool:
        return self.variant in ("MTO", "MTM", "HYB")

    @property
    def has_predictor(self) -> bool:
        return self.variant in ("HYB", "PREDICTOR")


@dataclass
class ModelBundle:
    """Architecture description plus weights for one trained (or fresh) model."""

    config: LstmModelConfig
    layers: list[LstmLayerParams]
    cls_w: np.ndarray | None = None  # (1, H)
    cls_b: np.ndarray | None = None  # (1,)
    pred_w: np.ndarray | None = None  # (F, H)
    pred_b: np.ndarray | None = None  # (F,)
    seed: int | None = None
    epochs_run: int = 0
    final_losses: dict = field(default_factory=dict)

    @property
    def variant(self) -> str:
        return self.config.variant

    def parameter_items(self) -> list[tuple[str, np.ndarray]]:
        items = []
        for i, layer in enumerate(self.layers):
            items += [(f"layer{i}.W", layer.W), (f"layer{i}.U", layer.U),
                      (f"layer{i}.b", layer.b)]
        if self.cls_w is not None:
            items += [("cls.w", self.cls_w), ("cls.b", self.cls_b)]
        if self.pred_w is not None:
            items += [("pred.w", self.pred_w), ("pred.b", self.pred_b)]
        return items

    def parameter_count(self) -> int:
        return sum(arr.size for _, arr in self.parameter_items())

    def trunk_tuple(self) -> tuple[np.ndarray, ...]:
        """Packed (W1, U1, b1, W2, U2, b2) for the evaluation kernels."""
        l1, l2 = self.layers
        return (l1.W, l1.U, l1.b, l2.W, l2.U, l2.b)


def build_model(config: LstmModelConfig, rng: np.random.Generator) -> ModelBundle:
    """Fresh bundle: W Xavier-uniform, U orthogonal, biases zero."""
    layers = []
    f_in = config.input_features
    for _ in range(config.layers):
        W = xavier_uniform(rng, f_in, 4 * config.hidden)
        U = orthogonal(rng, 4 * config.hidden, config.hidden)
        b = np.zeros(4 * config.hidden)
        layers.append(LstmLayerParams(W, U, b))
        f_in = config.hidden
    bundle = ModelBundle(config=config, layers=layers)
    if config.has_classifier:
        bundle.cls_w = xavier_uniform(rng, config.hidden, 1)
        bundle.cls_b = np.zeros(1)
    if config.has_predictor:
        bundle.pred_w = xavier_uniform(rng, config.hidden, config.input_features)
        bundle.pred_b = np.zeros(config.input_features)
    return bundle


# ----------------------------------------------------------------------
# dropout masks


@dataclass
class DropoutMasks:
    """Inverted-dropout masks for one epoch of one batch.

    ``recurrent[l]`` has shape (4, N, H): one mask per gate group, fixed per
    sequence. ``output[l]`` has shape (T, N, H): resampled per step.
    """

    recurrent: list[np.ndarray] | None
    output: list[np.ndarray] | None


def sample_masks(config: LstmModelConfig, rng: np.random.Generator,
                 n_seq: int, seq_len: int) -> DropoutMasks:
    """Draw all masks in a fixed order (per layer: recurrent, then output)."""
    rec, out = None, None
    if config.recurrent_dropout > 0.0:
        rec = []
    if config.output_dropout > 0.0:
        out = []
    for _ in range(config.layers):
        if rec is not None:
            keep = 1.0 - config.recurrent_dropout
            rec.append((rng.random((4, n_seq, config.hidden)) < keep) / keep)
        if out is not None:
            keep = 1.0 - config.output_dropout
            out.append((rng.random((seq_len, n_seq, config.hidden)) < keep) / keep)
    return DropoutMasks(rec, out)


# ----------------------------------------------------------------------
# tape construction


def lstm_cell_graph(g: Graph, x: Tensor, h: Tensor, c: Tensor, W: Tensor,
                    U: Tensor, b: Tensor,
                    rec_masks: list[Tensor] | None = None) -> tuple[Tensor, Tensor]:
    """One LSTM cell step composed from graph primitives.

    ``x`` is (N, F_in), ``h``/``c`` are (N, H); weights use the packed
    i, f, g, o layout. ``rec_masks``, when given, holds four (N, H) gate
    masks multiplied onto ``h`` before the recurrent matmul. Returns the
    new (h, c). The batched training path uses the fused sequence op; this
    builder is the reference semantics for a single step.
    """
    hid = U.shape[1]
    if x.shape[0] != h.shape[0] or h.shape != c.shape or h.shape[1] != hid:
        raise ValueError(f"inconsistent cell shapes: x {x.shape}, h {h.shape}, c {c.shape}")
    if W.shape[0] != 4 * hid or W.shape[1] != x.shape[1] or b.shape != (4 * hid,):
        raise ValueError(f"inconsistent weight shapes: W {W.shape}, U {U.shape}, b {b.shape}")
    xz = g.add(g.matmul(x, W, transpose_b=True), b)
    if rec_masks is None:
        hz = g.matmul(h, U, transpose_b=True)
        z = g.add(xz, hz)
        pre = [g.slice_cols(z, gi * hid, (gi + 1) * hid) for gi in range(4)]
    else:
        pre = []
        for gi in range(4):
            hm = g.mul(h, rec_masks[gi])
            u_g = g.slice_time(U, gi * hid, (gi + 1) * hid)
            hz = g.matmul(hm, u_g, transpose_b=True)
            pre.append(g.add(g.slice_cols(xz, gi * hid, (gi + 1) * hid), hz))
    gate_i = g.sigmoid(pre[0])
    gate_f = g.sigmoid(pre[1])
    gate_g = g.tanh(pre[2])
    gate_o = g.sigmoid(pre[3])
    c_new = g.add(g.mul(gate_f, c), g.mul(gate_i, gate_g))
    h_new = g.mul(gate_o, g.tanh(c_new))
    return h_new, c_new


class SequenceGraph:
    """Recorded forward pass of a model over a (stacked) batch of sequences.

    Rows are time-major: row t*N + i holds step t of sequence i. Leaves for
    inputs, targets and masks can be rebound on replay; parameter leaves
    alias the bundle arrays, so in-place optimizer updates are picked up.
    """

    def __init__(self, bundle: ModelBundle, n_seq: int, seq_len: int, train: bool):
        cfg = bundle.config
        self.n_seq = n_seq
        self.seq_len = seq_len
        self.train = train
        g = Graph()
        self.graph = g
        n, t_len, hid = n_seq, seq_len, cfg.hidden
        use_rec = train and cfg.recurrent_dropout > 0.0
        use_out = train and cfg.output_dropout > 0.0

        self.x = g.leaf(np.zeros((t_len * n, cfg.input_features)), name="x")
        self.param_leaves: dict[str, Tensor] = {}
        for name, arr in bundle.parameter_items():
            self.param_leaves[name] = g.leaf(arr, requires_grad=True, name=name)

        self.rec_masks: list[Tensor] = []
        self.out_masks: list[Tensor] = []

        layer_in = self.x
        for li in range(cfg.layers):
            W = self.param_leaves[f"layer{li}.W"]
            U = self.param_leaves[f"layer{li}.U"]
            b = self.param_leaves[f"layer{li}.b"]
            xz = g.add(g.matmul(layer_in, W, transpose_b=True), b)
            rec_leaf = None
            if use_rec:
                rec_leaf = g.leaf(np.ones((4, n, hid)), name=f"rec{li}")
                self.rec_masks.append(rec_leaf)
            stack = g.lstm_sequence(xz, U, rec_leaf, t_len)
            if use_out:
                om = g.leaf(np.ones((t_len * n, hid)), name=f"out{li}")
                self.out_masks.append(om)
                stack = g.mul(stack, om)
            layer_in = stack

        self.cls: Tensor | None = None
        self.pred: Tensor | None = None
        if cfg.has_classifier:
            wc = self.param_leaves["cls.w"]
            bc = self.param_leaves["cls.b"]
            self.cls = g.sigmoid(g.add(g.matmul(layer_in, wc, transpose_b=True), bc))
        if cfg.has_predictor:
            wp = self.param_leaves["pred.w"]
            bp = self.param_leaves["pred.b"]
            self.pred = g.add(g.matmul(layer_in, wp, transpose_b=True), bp)

    def mask_bindings(self, masks: DropoutMasks | None) -> dict:
        binds = {}
        if masks is None:
            return binds
        for li, leaf in enumerate(self.rec_masks):
            binds[leaf] = masks.recurrent[li]
        if self.out_masks:
            t_len, n = self.seq_len, self.n_seq
            for li, leaf in enumerate(self.out_masks):
                binds[leaf] = masks.output[li].reshape(t_len * n, -1)
        return binds


def stack_time_major(series_batch: np.ndarray) -> np.ndarray:
    """(N, T, F) -> (T*N, F) with row t*N + i holding step t of sequence i."""
    n, t_len, f = series_batch.shape
    return np.ascontiguousarray(series_batch.transpose(1, 0, 2)).reshape(t_len * n, f)


@dataclass
class SequenceOutputs:
    classifications: np.ndarray | None  # (T,) per-step sigmoid outputs
    predictions: np.ndarray | None      # (T, F) per-step next-frame predictions


def forward_sequence(bundle: ModelBundle, series: np.ndarray, mode: str = "eval",
                     masks: DropoutMasks | None = None) -> SequenceOutputs:
    """Run one series (T, F) through the model's recorded forward pass.

    Train mode applies the supplied dropout masks with inverted scaling;
    eval mode applies no dropout. With both dropout rates zero the two
    modes execute the identical tape.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2 or series.shape[0] < 1:
        raise ValueError(f"series must be (T, F) with T >= 1, got {series.shape}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    train = mode == "train"
    cfg = bundle.config
    needs_masks = train and (cfg.output_dropout > 0.0 or cfg.recurrent_dropout > 0.0)
    if needs_masks and masks is None:
        raise ValueError("train mode requires dropout masks for nonzero rates")
    t_len = series.shape[0]
    sg = SequenceGraph(bundle, 1, t_len, train=train)
    binds = {sg.x: series.reshape(t_len, -1)}
    if train:
        binds.update(sg.mask_bindings(masks))
    forward(sg.graph, binds)
    cls = sg.cls.data.reshape(t_len).copy() if sg.cls is not None else None
    pred = sg.pred.data.reshape(t_len, -1).copy() if sg.pred is not None else None
    return SequenceOutputs(cls, pred)


# ----------------------------------------------------------------------
# training


def _chunk_indices(n: int, cap: int) -> list[np.ndarray]:
    n_chunks = max(1, -(-n // cap))
    return [np.arange(i * n // n_chunks, (i + 1) * n // n_chunks) for i in range(n_chunks)]


def _attach_loss(sg: SequenceGraph, cfg: LstmModelConfig, weight: float):
    """Add the variant's objective to a sequence graph; returns bindable targets."""
    g = sg.graph
    n, t_len = sg.n_seq, sg.seq_len
    targets = {}
    parts = []
    if cfg.variant == "MTO":
        y = g.leaf(np.zeros((n, 1)), name="y")
        targets["labels"] = y
        final = g.slice_time(sg.cls, (t_len - 1) * n, t_len * n)
        parts.append(g.bce_loss(final, y))
    elif cfg.variant in ("MTM", "HYB"):
        y = g.leaf(np.zeros((t_len * n, 1)), name="y")
        targets["labels"] = y
        parts.append(g.bce_loss(sg.cls, y))
    if cfg.has_predictor:
        if t_len < 2:
            raise ValueError("prediction objective needs at least 2 steps")
        tgt = g.leaf(np.zeros(((t_len - 1) * n, cfg.input_features)), name="next_frames")
        targets["next_frames"] = tgt
        pred_head = g.slice_time(sg.pred, 0, (t_len - 1) * n)
        parts.append(g.mse_loss(pred_head, tgt))
    loss = parts[0] if len(parts) == 1 else g.add(parts[0], parts[1])
    scaled = g.scale(loss, weight)
    return loss, scaled, targets


def _chunk_bindings(cfg: LstmModelConfig, targets: dict, sg: SequenceGraph,
                    x_chunk: np.ndarray, y_chunk: np.ndarray) -> dict:
    n, t_len = x_chunk.shape[0], x_chunk.shape[1]
    stacked = stack_time_major(x_chunk)
    binds = {sg.x: stacked}
    if "labels" in targets:
        if cfg.variant == "MTO":
            binds[targets["labels"]] = y_chunk.reshape(n, 1)
        else:
            binds[targets["labels"]] = np.tile(y_chunk, t_len).reshape(t_len * n, 1)
    if "next_frames" in targets:
        binds[targets["next_frames"]] = stacked[n:]
    return binds


def train_model(config: LstmModelConfig, train_split, val_split,
                rng: np.random.Generator, chunk_trials: int = CHUNK_TRIALS):
    """Full-batch Adam training for exactly ``config.epochs`` epochs.

    ``train_split`` and ``val_split`` are (features, labels) pairs with
    features of shape (N, T, F). Returns (bundle, history) where history
    has per-epoch train and validation losses. The recorded train loss is
    the full-batch objective the epoch's update used; the validation loss
    is measured after the update, without dropout.
    """
    x_train, y_train = train_split
    x_val, y_val = val_split
    x_train = np.asarray(x_train, dtype=np.float64)
    x_val = np.asarray(x_val, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.float64)
    if x_train.ndim != 3 or x_train.shape[0] == 0 or x_val.ndim != 3 or x_val.shape[0] == 0:
        raise ValueError("splits must be nonempty (N, T, F) arrays")
    n_train, t_len, _ = x_train.shape

    bundle = build_model(config, rng)
    params = [Tensor(arr, requires_grad=True, name=name)
              for name, arr in bundle.parameter_items()]
    adam = AdamState()
    masks_needed = config.output_dropout > 0.0 or config.recurrent_dropout > 0.0

    # one tape per distinct (chunk size, mode); chunks rebind inputs/targets
    graph_cache: dict[tuple[int, bool], tuple] = {}

    def graph_for(n: int, train: bool, weight: float):
        key = (n, train)
        if key not in graph_cache:
            sg = SequenceGraph(bundle, n, t_len, train=train)
            loss, scaled, targets = _attach_loss(sg, config, weight)
            graph_cache[key] = (sg, loss, scaled, targets)
        return graph_cache[key]

    train_chunks = []
    for idx in _chunk_indices(n_train, chunk_trials):
        n = len(idx)
        sg, loss, scaled, targets = graph_for(n, True, n / n_train)
        binds = _chunk_bindings(config, targets, sg, x_train[idx], y_train[idx])
        train_chunks.append((sg, loss, scaled, binds, n))
    val_chunks = []
    for idx in _chunk_indices(x_val.shape[0], chunk_trials):
        n = len(idx)
        sg, loss, _, targets = graph_for(n, False, 1.0)
        binds = _chunk_bindings(config, targets, sg, x_val[idx], y_val[idx])
        val_chunks.append((sg, loss, binds, n))

    names = [name for name, _ in bundle.parameter_items()]
    grad_accum = [np.zeros_like(arr) for _, arr in bundle.parameter_items()]
    history = {"train_loss": [], "val_loss": []}
    for epoch in range(config.epochs):
        for buf in grad_accum:
            buf[...] = 0.0
        epoch_loss = 0.0
        for sg, loss, scaled, binds, n in train_chunks:
            if masks_needed:
                masks = sample_masks(config, rng, n, t_len)
                binds = dict(binds)
                binds.update(sg.mask_bindings(masks))
            forward(sg.graph, binds)
            epoch_loss += float(loss.data) * n / n_train
            backward(sg.graph, scaled)
            for buf, name in zip(grad_accum, names):
                buf += sg.param_leaves[name].grad
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(config.variant, epoch, epoch_loss)
        adam_step(adam, params, grad_accum)
        val_loss = 0.0
        for sg, loss, binds, n in val_chunks:
            forward(sg.graph, binds)
            val_loss += float(loss.data) * n / x_val.shape[0]
        history["train_loss"].append(epoch_loss)
        history["val_loss"].append(val_loss)

    bundle.epochs_run = config.epochs
    bundle.final_losses = {
        "train": history["train_loss"][-1],
        "val": history["val_loss"][-1],
    }
    return bundle, history
