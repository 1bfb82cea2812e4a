"""Temporal convolutional network baselines (TCN-10/30/60).

A network is a chain of residual blocks, one block per dilation per stack,
followed by a per-step dense sigmoid head. Each block holds two causal
dilated convolutions (kernel size k, the block's dilation), each followed
by a rectifier and dropout, plus a 1x1 downsample convolution on the
residual path when the block changes channel count; the block output is
the rectified sum of branch and residual.

The three named configurations take their nominal receptive field from
stacks * kernel_size * last_dilation. The effective field measured by
perturbation probing is larger; see the tests for the probe.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Graph, Tensor, backward, forward
from .errors import TrainingDivergedError
from .initializers import he_normal, xavier_uniform
from .optim import AdamState, adam_step


@dataclass
class TcnConfig:
    name: str
    stacks: int
    filters: int
    dilations: tuple[int, ...]
    dropout: float
    batch_size: int
    kernel_size: int = 2
    epochs: int = 500
    input_features: int = 20

    def __post_init__(self):
        if self.stacks < 1 or self.filters < 1 or self.kernel_size < 1:
            raise ValueError("stacks, filters and kernel_size must be positive")
        if not self.dilations or any(d < 1 for d in self.dilations):
            raise ValueError("dilations must be positive")
        self.dilations = tuple(self.dilations)

    @property
    def nominal_receptive_field(self) -> int:
        return self.stacks * self.kernel_size * self.dilations[-1]

    @property
    def block_dilations(self) -> tuple[int, ...]:
        return self.dilations * self.stacks


TCN_PRESETS = {
    "TCN10": TcnConfig("TCN10", stacks=1, filters=32, dilations=(1, 5),
                       dropout=0.2, batch_size=32),
    "TCN30": TcnConfig("TCN30", stacks=3, filters=20, dilations=(1, 5),
                       dropout=0.3, batch_size=64),
    "TCN60": TcnConfig("TCN60", stacks=2, filters=20, dilations=(1, 5, 10, 15),
                       dropout=0.3, batch_size=64),
}


def tcn_config(name: str, **overrides) -> TcnConfig:
    base = TCN_PRESETS[name]
    cfg = {k: getattr(base, k) for k in
           ("name", "stacks", "filters", "dilations", "dropout", "batch_size",
            "kernel_size", "epochs", "input_features")}
    cfg.update(overrides)
    return TcnConfig(**cfg)


@dataclass
class ResidualBlockParams:
    k1: np.ndarray  # (C_in, k, C_out)
    b1: np.ndarray  # (C_out,)
    k2: np.ndarray  # (C_out, k, C_out)
    b2: np.ndarray
    down_k: np.ndarray | None  # (C_in, 1, C_out) iff C_in != C_out
    down_b: np.ndarray | None
    dilation: int

    def count(self) -> int:
        n = self.k1.size + self.b1.size + self.k2.size + self.b2.size
        if self.down_k is not None:
            n += self.down_k.size + self.down_b.size
        return n


def block_param_count(c_in: int, c_out: int, k: int) -> int:
    n = (c_in * k * c_out + c_out) + (c_out * k * c_out + c_out)
    if c_in != c_out:
        n += c_in * c_out + c_out
    return n


@dataclass
class TcnBundle:
    config: TcnConfig
    blocks: list[ResidualBlockParams]
    head_w: np.ndarray  # (1, filters)
    head_b: np.ndarray  # (1,)
    seed: int | None = None
    epochs_run: int = 0
    final_losses: dict = field(default_factory=dict)

    @property
    def variant(self) -> str:
        return self.config.name

    def parameter_items(self) -> list[tuple[str, np.ndarray]]:
        items = []
        for i, blk in enumerate(self.blocks):
            items += [(f"block{i}.k1", blk.k1), (f"block{i}.b1", blk.b1),
                      (f"block{i}.k2", blk.k2), (f"block{i}.b2", blk.b2)]
            if blk.down_k is not None:
                items += [(f"block{i}.down_k", blk.down_k), (f"block{i}.down_b", blk.down_b)]
        items += [("head.w", self.head_w), ("head.b", self.head_b)]
        return items

    def parameter_count(self) -> int:
        return sum(arr.size for _, arr in self.parameter_items())


def build_tcn(config: TcnConfig, rng: np.random.Generator) -> TcnBundle:
    """Fresh bundle: He-normal convolution kernels, Xavier head, zero biases."""
    blocks = []
    c_in = config.input_features
    k = config.kernel_size
    c_out = config.filters
    for d in config.block_dilations:
        k1 = he_normal(rng, c_in * k, (c_in, k, c_out))
        k2 = he_normal(rng, c_out * k, (c_out, k, c_out))
        down_k = down_b = None
        if c_in != c_out:
            down_k = he_normal(rng, c_in, (c_in, 1, c_out))
            down_b = np.zeros(c_out)
        blocks.append(ResidualBlockParams(k1, np.zeros(c_out), k2, np.zeros(c_out),
                                          down_k, down_b, dilation=d))
        c_in = c_out
    head_w = xavier_uniform(rng, config.filters, 1)
    return TcnBundle(config, blocks, head_w, np.zeros(1))


# ----------------------------------------------------------------------
# tape construction


class TcnGraph:
    """Recorded forward pass over a batch of series, shape (N, T, C)."""

    def __init__(self, bundle: TcnBundle, n_seq: int, seq_len: int, train: bool):
        cfg = bundle.config
        self.n_seq = n_seq
        self.seq_len = seq_len
        g = Graph()
        self.graph = g
        use_drop = train and cfg.dropout > 0.0
        self.x = g.leaf(np.zeros((n_seq, seq_len, cfg.input_features)), name="x")
        self.param_leaves: dict[str, Tensor] = {}
        for name, arr in bundle.parameter_items():
            self.param_leaves[name] = g.leaf(arr, requires_grad=True, name=name)
        self.drop_masks: list[Tensor] = []

        cur = self.x
        for i, blk in enumerate(bundle.blocks):
            k1 = self.param_leaves[f"block{i}.k1"]
            b1 = self.param_leaves[f"block{i}.b1"]
            k2 = self.param_leaves[f"block{i}.k2"]
            b2 = self.param_leaves[f"block{i}.b2"]
            out = g.relu(g.conv1d_causal(cur, k1, b1, blk.dilation))
            out = self._maybe_drop(g, out, use_drop)
            out = g.relu(g.conv1d_causal(out, k2, b2, blk.dilation))
            out = self._maybe_drop(g, out, use_drop)
            if blk.down_k is not None:
                res = g.conv1d_causal(cur, self.param_leaves[f"block{i}.down_k"],
                                      self.param_leaves[f"block{i}.down_b"], 1)
            else:
                res = cur
            cur = g.relu(g.add(out, res))

        flat = g.reshape(cur, (n_seq * seq_len, cfg.filters))
        self.cls = g.sigmoid(g.add(
            g.matmul(flat, self.param_leaves["head.w"], transpose_b=True),
            self.param_leaves["head.b"]))

    def _maybe_drop(self, g: Graph, t: Tensor, use_drop: bool) -> Tensor:
        if not use_drop:
            return t
        mask = g.leaf(np.ones(t.shape), name=f"drop{len(self.drop_masks)}")
        self.drop_masks.append(mask)
        return g.mul(t, mask)


def sample_tcn_masks(config: TcnConfig, rng: np.random.Generator,
                     shapes: list[tuple[int, ...]]) -> list[np.ndarray]:
    keep = 1.0 - config.dropout
    return [(rng.random(s) < keep) / keep for s in shapes]


def tcn_forward(bundle: TcnBundle, series: np.ndarray, mode: str = "eval",
                masks: list[np.ndarray] | None = None) -> np.ndarray:
    """Per-step class probabilities for one (T, F) series."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2 or series.shape[0] < 1:
        raise ValueError(f"series must be (T, F) with T >= 1, got {series.shape}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    train = mode == "train"
    if train and bundle.config.dropout > 0.0 and masks is None:
        raise ValueError("train mode requires dropout masks for nonzero rates")
    tg = TcnGraph(bundle, 1, series.shape[0], train=train)
    binds = {tg.x: series[None]}
    if train and tg.drop_masks:
        for leaf, m in zip(tg.drop_masks, masks):
            binds[leaf] = m
    forward(tg.graph, binds)
    return tg.cls.data.reshape(series.shape[0]).copy()


# ----------------------------------------------------------------------
# training


def train_tcn(config: TcnConfig, train_split, val_split, rng: np.random.Generator):
    """Mini-batch Adam on per-step mean BCE for exactly ``config.epochs`` epochs.

    Batches are drawn by reshuffling each epoch; the last partial batch is
    included. Returns (bundle, history).
    """
    x_train, y_train = train_split
    x_val, y_val = val_split
    x_train = np.asarray(x_train, dtype=np.float64)
    x_val = np.asarray(x_val, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.float64)
    if x_train.ndim != 3 or x_train.shape[0] == 0:
        raise ValueError("train split must be a nonempty (N, T, F) array")
    n_train, t_len, _ = x_train.shape

    bundle = build_tcn(config, rng)
    params = [Tensor(arr, requires_grad=True, name=name)
              for name, arr in bundle.parameter_items()]
    adam = AdamState()

    graphs: dict[int, tuple] = {}

    def graph_for(n: int, train: bool):
        key = n if train else -n
        if key not in graphs:
            tg = TcnGraph(bundle, n, t_len, train=train)
            y_leaf = tg.graph.leaf(np.zeros((n * t_len, 1)), name="y")
            loss = tg.graph.bce_loss(tg.cls, y_leaf)
            graphs[key] = (tg, y_leaf, loss)
        return graphs[key]

    def run(tg, y_leaf, loss, xb, yb, masks):
        binds = {tg.x: xb, y_leaf: np.repeat(yb, t_len).reshape(-1, 1)}
        if masks is not None:
            for leaf, m in zip(tg.drop_masks, masks):
                binds[leaf] = m
        forward(tg.graph, binds)
        return float(loss.data)

    history = {"train_loss": [], "val_loss": []}
    use_drop = config.dropout > 0.0
    for epoch in range(config.epochs):
        perm = rng.permutation(n_train)
        epoch_loss = 0.0
        for start in range(0, n_train, config.batch_size):
            idx = perm[start:start + config.batch_size]
            tg, y_leaf, loss = graph_for(len(idx), train=True)
            masks = None
            if use_drop:
                shapes = [m.shape for m in tg.drop_masks]
                masks = sample_tcn_masks(config, rng, shapes)
            batch_loss = run(tg, y_leaf, loss, x_train[idx], y_train[idx], masks)
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(config.name, epoch, batch_loss)
            backward(tg.graph, loss)
            grads = [tg.param_leaves[name].grad for name, _ in bundle.parameter_items()]
            adam_step(adam, params, grads)
            epoch_loss += batch_loss * len(idx) / n_train
        vg, vy, vloss = graph_for(x_val.shape[0], train=False)
        val_loss = run(vg, vy, vloss, x_val, y_val, None)
        history["train_loss"].append(epoch_loss)
        history["val_loss"].append(val_loss)

    bundle.epochs_run = config.epochs
    bundle.final_losses = {"train": history["train_loss"][-1],
                           "val": history["val_loss"][-1]}
    return bundle, history
