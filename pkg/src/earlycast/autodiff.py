"""Dense float64 tensors with reverse-mode automatic differentiation.

The design is a recorded operation tape: a :class:`Graph` holds an
append-only list of nodes, each node referencing strictly earlier nodes as
inputs. Building an op computes its value eagerly; :func:`forward` replays
the whole tape (optionally with new data bound to leaf nodes, reusing all
output buffers), and :func:`backward` runs a single reverse pass over the
append order, so a gradient is never read before it is fully accumulated.

Supported primitives: matrix multiply (with transpose flags), elementwise
add / multiply, scalar scaling, sigmoid, tanh, rectifier, concatenation,
slicing along the leading (time) axis and the trailing (feature) axis,
reshape, dropout-mask multiply (an elementwise multiply by a mask input),
one-dimensional causal dilated convolution, and the two losses (binary
cross-entropy, mean squared error).

Tensors are float64 and row-major. Tensor data is treated as immutable
while a graph is being built or executed; parameter updates between
executions mutate leaf buffers in place, which the next replay picks up.
"""
from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np

BCE_CLAMP = 1e-7


class GraphError(ValueError):
    """Malformed graph, shape mismatch, or invalid binding."""


class Tensor:
    """Dense n-dimensional float64 array, optionally tracked by a graph.

    ``data`` is a C-contiguous ndarray (row-major flat layout). ``grad``
    is populated by :func:`backward` for tensors with ``requires_grad``.
    """

    __slots__ = ("data", "requires_grad", "grad", "node_id", "graph_id", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node_id: int | None = None
        self.graph_id: int | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        tag = self.name or (f"node{self.node_id}" if self.node_id is not None else "free")
        return f"Tensor({tag}, shape={self.shape}, requires_grad={self.requires_grad})"


class _Node:
    __slots__ = ("op", "input_ids", "out", "attrs")

    def __init__(self, op: str, input_ids: tuple[int, ...], out: Tensor, attrs: dict):
        self.op = op
        self.input_ids = input_ids
        self.out = out
        self.attrs = attrs


def _sigmoid_into(x: np.ndarray, out: np.ndarray) -> None:
    with np.errstate(over="ignore"):
        np.exp(np.negative(x), out=out)
    out += 1.0
    np.divide(1.0, out, out=out)


class Graph:
    """Append-only operation tape over :class:`Tensor` values."""

    _next_graph_id = 0

    def __init__(self):
        self.nodes: list[_Node] = []
        self._id = Graph._next_graph_id
        Graph._next_graph_id += 1

    # ------------------------------------------------------------------
    # construction helpers

    def leaf(self, data, requires_grad: bool = False, name: str | None = None) -> Tensor:
        """Register an input tensor (no producing operation)."""
        t = Tensor(data, requires_grad=requires_grad, name=name)
        self._register(t)
        self.nodes.append(_Node("leaf", (), t, {}))
        return t

    def _register(self, t: Tensor) -> None:
        t.node_id = len(self.nodes)
        t.graph_id = self._id

    def _check_input(self, t: Tensor, op: str) -> None:
        if t.graph_id != self._id or t.node_id is None:
            raise GraphError(f"{op}: input tensor {t!r} does not belong to this graph")

    def _emit(self, op: str, inputs: Sequence[Tensor], out_data: np.ndarray,
              attrs: dict | None = None, name: str | None = None) -> Tensor:
        for t in inputs:
            self._check_input(t, op)
        out = Tensor(out_data, requires_grad=any(t.requires_grad for t in inputs), name=name)
        self._register(out)
        node = _Node(op, tuple(t.node_id for t in inputs), out, attrs or {})
        self.nodes.append(node)
        return out

    def _fail(self, op: str, msg: str) -> None:
        raise GraphError(f"{op} (node {len(self.nodes)}): {msg}")

    # ------------------------------------------------------------------
    # primitives

    def matmul(self, a: Tensor, b: Tensor, transpose_a: bool = False,
               transpose_b: bool = False, name: str | None = None) -> Tensor:
        am = a.data.T if transpose_a else a.data
        bm = b.data.T if transpose_b else b.data
        if am.ndim != 2 or bm.ndim != 2:
            self._fail("matmul", f"expects 2-D operands, got {a.shape} and {b.shape}")
        if am.shape[1] != bm.shape[0]:
            self._fail("matmul", f"inner dimensions differ: {am.shape} x {bm.shape}")
        out = np.matmul(am, bm)
        return self._emit("matmul", (a, b), out,
                          {"ta": transpose_a, "tb": transpose_b}, name)

    def add(self, a: Tensor, b: Tensor, name: str | None = None) -> Tensor:
        if b.shape != a.shape and b.shape != a.shape[-1:]:
            self._fail("add", f"shapes {a.shape} and {b.shape} are not addable")
        return self._emit("add", (a, b), a.data + b.data, name=name)

    def mul(self, a: Tensor, b: Tensor, name: str | None = None) -> Tensor:
        """Elementwise product; also serves as the dropout-mask multiply."""
        if a.shape != b.shape:
            self._fail("mul", f"shapes differ: {a.shape} vs {b.shape}")
        return self._emit("mul", (a, b), a.data * b.data, name=name)

    def scale(self, a: Tensor, s: float, name: str | None = None) -> Tensor:
        return self._emit("scale", (a,), a.data * float(s), {"s": float(s)}, name)

    def sigmoid(self, a: Tensor, name: str | None = None) -> Tensor:
        out = np.empty_like(a.data)
        _sigmoid_into(a.data, out)
        return self._emit("sigmoid", (a,), out, name=name)

    def tanh(self, a: Tensor, name: str | None = None) -> Tensor:
        return self._emit("tanh", (a,), np.tanh(a.data), name=name)

    def relu(self, a: Tensor, name: str | None = None) -> Tensor:
        return self._emit("relu", (a,), np.maximum(a.data, 0.0), name=name)

    def concat(self, parts: Sequence[Tensor], axis: int = 0, name: str | None = None) -> Tensor:
        if not parts:
            self._fail("concat", "needs at least one input")
        out = np.concatenate([p.data for p in parts], axis=axis)
        return self._emit("concat", parts, out, {"axis": axis}, name)

    def slice_time(self, a: Tensor, start: int, stop: int, name: str | None = None) -> Tensor:
        """Contiguous slice along axis 0 (the time axis by convention)."""
        if not (0 <= start < stop <= a.shape[0]):
            self._fail("slice_time", f"range [{start}:{stop}] invalid for shape {a.shape}")
        return self._emit("slice_time", (a,), a.data[start:stop].copy(),
                          {"start": start, "stop": stop}, name)

    def slice_cols(self, a: Tensor, start: int, stop: int, name: str | None = None) -> Tensor:
        """Contiguous slice along the trailing axis (gate/channel groups)."""
        if not (0 <= start < stop <= a.shape[-1]):
            self._fail("slice_cols", f"range [{start}:{stop}] invalid for shape {a.shape}")
        return self._emit("slice_cols", (a,), np.ascontiguousarray(a.data[..., start:stop]),
                          {"start": start, "stop": stop}, name)

    def reshape(self, a: Tensor, shape: tuple[int, ...], name: str | None = None) -> Tensor:
        if int(np.prod(shape)) != a.size:
            self._fail("reshape", f"cannot reshape {a.shape} to {shape}")
        return self._emit("reshape", (a,), a.data.reshape(shape).copy(),
                          {"shape": tuple(shape)}, name)

    def conv1d_causal(self, x: Tensor, kernel: Tensor, bias: Tensor, dilation: int,
                      name: str | None = None) -> Tensor:
        """Causal dilated 1-D convolution.

        ``x`` is (T, C_in) or (N, T, C_in); ``kernel`` is (C_in, k, C_out)
        with tap k-1 reading the current step and tap m reading step
        t - (k-1-m) * dilation; out-of-range steps are zero (left padding).
        """
        if kernel.data.ndim != 3:
            self._fail("conv1d", f"kernel must be (C_in, k, C_out), got {kernel.shape}")
        c_in, k, c_out = kernel.shape
        if bias.shape != (c_out,):
            self._fail("conv1d", f"bias shape {bias.shape} != ({c_out},)")
        if dilation < 1:
            self._fail("conv1d", f"dilation must be >= 1, got {dilation}")
        if x.data.ndim not in (2, 3) or x.shape[-1] != c_in:
            self._fail("conv1d", f"input shape {x.shape} incompatible with kernel {kernel.shape}")
        attrs = {"dilation": int(dilation), "k": k, "batched": x.data.ndim == 3}
        out = _conv1d_forward(x.data, kernel.data, bias.data, dilation)
        return self._emit("conv1d", (x, kernel, bias), out, attrs, name)

    def lstm_sequence(self, xz: Tensor, U: Tensor, rec_masks: Tensor | None,
                      seq_len: int, name: str | None = None) -> Tensor:
        """Fused LSTM layer over a whole sequence (hand-derived BPTT vjp).

        ``xz`` is the precomputed input drive x @ W.T + b, stacked
        time-major as (T*N, 4H); ``U`` is the packed recurrent matrix
        (4H, H); ``rec_masks``, when given, is a (4, N, H) tensor of
        per-gate variational dropout masks applied to the hidden state
        entering U. Gate order: input, forget, candidate, output. Returns
        the stacked hidden states (T*N, H). Initial h and c are zero.
        States needed by the backward pass are cached on the node.
        """
        if xz.data.ndim != 2 or xz.shape[0] % seq_len != 0:
            self._fail("lstm_sequence", f"xz shape {xz.shape} not divisible by T={seq_len}")
        n = xz.shape[0] // seq_len
        hid = U.shape[1]
        if xz.shape[1] != 4 * hid or U.shape[0] != 4 * hid:
            self._fail("lstm_sequence", f"xz {xz.shape} inconsistent with U {U.shape}")
        if rec_masks is not None:
            if rec_masks.shape != (4, n, hid):
                self._fail("lstm_sequence",
                           f"rec_masks {rec_masks.shape} != (4, {n}, {hid})")
            if rec_masks.requires_grad:
                self._fail("lstm_sequence", "rec_masks must not require gradients")
        attrs = {
            "t": seq_len, "n": n, "hid": hid, "masked": rec_masks is not None,
            "gates": np.empty((seq_len, 4, n, hid)),    # i, f, g, o (activated)
            "c": np.empty((seq_len, n, hid)),
            "tanh_c": np.empty((seq_len, n, hid)),
        }
        out = np.empty((seq_len * n, hid))
        inputs = (xz, U) if rec_masks is None else (xz, U, rec_masks)
        node_out = self._emit("lstm_sequence", inputs, out, attrs, name)
        _lstm_sequence_forward(self.nodes[-1], [n.out for n in self.nodes])
        return node_out

    # ------------------------------------------------------------------
    # losses

    def bce_loss(self, pred: Tensor, target: Tensor, name: str | None = None) -> Tensor:
        """Mean binary cross-entropy; predictions clamped to [1e-7, 1-1e-7]."""
        if pred.size == 0:
            self._fail("bce_loss", "empty input")
        if pred.shape != target.shape:
            self._fail("bce_loss", f"shapes differ: {pred.shape} vs {target.shape}")
        out = np.zeros(())
        node_out = self._emit("bce_loss", (pred, target), out, name=name)
        _bce_forward(pred.data, target.data, node_out.data)
        return node_out

    def mse_loss(self, pred: Tensor, target: Tensor, name: str | None = None) -> Tensor:
        """Mean squared error over all elements."""
        if pred.shape != target.shape:
            self._fail("mse_loss", f"shapes differ: {pred.shape} vs {target.shape}")
        if pred.size == 0:
            self._fail("mse_loss", "empty input")
        diff = pred.data - target.data
        out = np.array(np.mean(diff * diff))
        return self._emit("mse_loss", (pred, target), out, name=name)


# ----------------------------------------------------------------------
# forward replay


def _conv1d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
                    dilation: int, out: np.ndarray | None = None) -> np.ndarray:
    c_in, k, c_out = kernel.shape
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    n, t, _ = x.shape
    pad = (k - 1) * dilation
    xp = np.zeros((n, t + pad, c_in))
    xp[:, pad:, :] = x
    # cols[n, t, c, m] reads step t - (k-1-m)*dilation
    cols = np.empty((n, t, c_in, k))
    for m in range(k):
        cols[:, :, :, m] = xp[:, m * dilation:m * dilation + t, :]
    res = cols.reshape(n * t, c_in * k) @ kernel.reshape(c_in * k, c_out)
    res += bias
    res = res.reshape(n, t, c_out)
    if squeeze:
        res = res[0]
    if out is not None:
        np.copyto(out, res)
        return out
    return res


def _bce_forward(pred: np.ndarray, target: np.ndarray, out: np.ndarray) -> None:
    p = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    out[...] = -np.mean(target * np.log(p) + (1.0 - target) * np.log1p(-p))


def _lstm_sequence_forward(node: _Node, tensors: list[Tensor]) -> None:
    at = node.attrs
    t_len, n, hid = at["t"], at["n"], at["hid"]
    xz = tensors[node.input_ids[0]].data
    u = tensors[node.input_ids[1]].data  # (4H, H)
    masks = tensors[node.input_ids[2]].data if at["masked"] else None
    gates, cs, tanh_cs = at["gates"], at["c"], at["tanh_c"]
    out = node.out.data
    # contiguous per-gate transposed recurrent blocks: u3[g] = U_g.T
    u3 = np.ascontiguousarray(u.reshape(4, hid, hid).transpose(0, 2, 1))
    h = np.zeros((n, hid))
    c = np.zeros((n, hid))
    z = np.empty((4, n, hid))
    hm = np.empty((4, n, hid))
    with np.errstate(over="ignore"):
        for ts in range(t_len):
            np.copyto(z, xz[ts * n:(ts + 1) * n].reshape(n, 4, hid).transpose(1, 0, 2))
            if masks is None:
                np.add(z, h @ u3, out=z)
            else:
                np.multiply(h[None, :, :], masks, out=hm)
                z += hm @ u3
            gate = gates[ts]
            np.exp(-z[:2], out=gate[:2])
            np.exp(-z[3], out=gate[3])
            gate[:2] += 1.0
            gate[3] += 1.0
            np.divide(1.0, gate[:2], out=gate[:2])
            np.divide(1.0, gate[3], out=gate[3])
            np.tanh(z[2], out=gate[2])
            i_g, f_g, g_g, o_g = gate
            np.multiply(f_g, c, out=cs[ts])
            cs[ts] += i_g * g_g
            c = cs[ts]
            np.tanh(c, out=tanh_cs[ts])
            h = out[ts * n:(ts + 1) * n]
            np.multiply(o_g, tanh_cs[ts], out=h)


def _lstm_sequence_backward(node: _Node, g_out: np.ndarray, tensors, acc) -> None:
    at = node.attrs
    t_len, n, hid = at["t"], at["n"], at["hid"]
    xz_t_in, u_in = node.input_ids[0], node.input_ids[1]
    u = tensors[u_in].data            # (4H, H)
    masks = tensors[node.input_ids[2]].data if at["masked"] else None
    gates, cs, tanh_cs = at["gates"], at["c"], at["tanh_c"]
    out = node.out.data
    need_xz = tensors[xz_t_in].requires_grad
    need_u = tensors[u_in].requires_grad
    dxz = np.zeros((t_len * n, 4 * hid)) if need_xz else None
    u4 = u.reshape(4, hid, hid)       # u4[g] is the gate's (H, H) block
    du3 = np.zeros((4, hid, hid)) if need_u else None
    dh = np.zeros((n, hid))
    dc = np.zeros((n, hid))
    dz = np.empty((4, n, hid))
    hm = np.empty((4, n, hid))
    rec = np.empty((4, n, hid))
    for ts in range(t_len - 1, -1, -1):
        dh += g_out[ts * n:(ts + 1) * n]
        i_g, f_g, g_g, o_g = gates[ts]
        tc = tanh_cs[ts]
        c_prev = cs[ts - 1] if ts > 0 else 0.0
        h_prev = out[(ts - 1) * n:ts * n] if ts > 0 else None
        dc += dh * o_g * (1.0 - tc * tc)
        np.multiply(dc, g_g, out=dz[0])
        dz[0] *= i_g * (1.0 - i_g)
        np.multiply(dc, c_prev, out=dz[1])
        dz[1] *= f_g * (1.0 - f_g)
        np.multiply(dc, i_g, out=dz[2])
        dz[2] *= 1.0 - g_g * g_g
        np.multiply(dh, tc, out=dz[3])
        dz[3] *= o_g * (1.0 - o_g)
        if need_xz:
            dxz[ts * n:(ts + 1) * n] = dz.transpose(1, 0, 2).reshape(n, 4 * hid)
        dc *= f_g
        if ts > 0:
            np.matmul(dz, u4, out=rec)
            if masks is None:
                dh = rec.sum(axis=0)
                if need_u:
                    du3 += dz.transpose(0, 2, 1) @ h_prev[None, :, :]
            else:
                rec *= masks
                dh = rec.sum(axis=0)
                if need_u:
                    np.multiply(h_prev[None, :, :], masks, out=hm)
                    du3 += dz.transpose(0, 2, 1) @ hm
        else:
            dh = np.zeros((n, hid))
    if need_xz:
        acc(xz_t_in, dxz, owned=True)
    if need_u:
        acc(u_in, du3.reshape(4 * hid, hid), owned=True)


def _replay_node(node: _Node, tensors: list[Tensor]) -> None:
    op = node.op
    ins = [tensors[i].data for i in node.input_ids]
    out = node.out.data
    if op == "matmul":
        a = ins[0].T if node.attrs["ta"] else ins[0]
        b = ins[1].T if node.attrs["tb"] else ins[1]
        np.matmul(a, b, out=out)
    elif op == "add":
        np.add(ins[0], ins[1], out=out)
    elif op == "mul":
        np.multiply(ins[0], ins[1], out=out)
    elif op == "scale":
        np.multiply(ins[0], node.attrs["s"], out=out)
    elif op == "sigmoid":
        _sigmoid_into(ins[0], out)
    elif op == "tanh":
        np.tanh(ins[0], out=out)
    elif op == "relu":
        np.maximum(ins[0], 0.0, out=out)
    elif op == "concat":
        axis = node.attrs["axis"]
        off = 0
        for arr in ins:
            n = arr.shape[axis]
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(off, off + n)
            np.copyto(out[tuple(sl)], arr)
            off += n
    elif op == "slice_time":
        np.copyto(out, ins[0][node.attrs["start"]:node.attrs["stop"]])
    elif op == "slice_cols":
        np.copyto(out, ins[0][..., node.attrs["start"]:node.attrs["stop"]])
    elif op == "reshape":
        np.copyto(out, ins[0].reshape(node.attrs["shape"]))
    elif op == "conv1d":
        _conv1d_forward(ins[0], ins[1], ins[2], node.attrs["dilation"], out=out)
    elif op == "lstm_sequence":
        _lstm_sequence_forward(node, tensors)
    elif op == "bce_loss":
        _bce_forward(ins[0], ins[1], out)
    elif op == "mse_loss":
        diff = ins[0] - ins[1]
        out[...] = np.mean(diff * diff)
    elif op == "leaf":
        pass
    else:  # pragma: no cover
        raise GraphError(f"unknown op {op!r}")


def forward(graph: Graph, inputs: Mapping[Tensor, np.ndarray] | None = None) -> None:
    """Re-execute the recorded graph in append order.

    ``inputs`` maps leaf tensors of this graph to replacement data, which is
    copied into the leaf buffers after shape validation. All op outputs are
    recomputed in place, so tensors returned at build time stay valid.
    """
    tensors = [n.out for n in graph.nodes]
    if inputs:
        for t, value in inputs.items():
            if t.graph_id != graph._id or t.node_id is None:
                raise GraphError(f"binding target {t!r} does not belong to this graph")
            node = graph.nodes[t.node_id]
            if node.op != "leaf":
                raise GraphError(f"cannot bind non-leaf node {t.node_id} ({node.op})")
            value = np.asarray(value, dtype=np.float64)
            if value.shape != t.shape:
                raise GraphError(
                    f"binding for node {t.node_id} ({t.name or 'leaf'}): "
                    f"expected shape {t.shape}, got {value.shape}")
            np.copyto(t.data, value)
    for node in graph.nodes:
        _replay_node(node, tensors)


# ----------------------------------------------------------------------
# backward


def _unbroadcast_add(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    # bias-style broadcast: reduce over all leading axes
    return grad.reshape(-1, shape[-1]).sum(axis=0)


def backward(graph: Graph, loss: Tensor) -> None:
    """Reverse-mode gradients of a scalar loss for every requires_grad tensor.

    Gradients are fresh arrays; tensors not influencing the loss get zeros.
    """
    if loss.graph_id != graph._id or loss.node_id is None:
        raise GraphError("loss tensor does not belong to this graph")
    if loss.size != 1:
        raise GraphError(f"loss must be scalar, got shape {loss.shape}")

    tensors = [n.out for n in graph.nodes]
    for t in tensors:
        t.grad = None
    bufs: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}

    def acc(idx: int, contribution: np.ndarray, owned: bool = False) -> None:
        """Accumulate a gradient contribution; ``owned`` marks a fresh array
        the caller will not reuse, which can be adopted without copying."""
        tgt = tensors[idx]
        buf = bufs.get(idx)
        if buf is None:
            if owned and contribution.shape == tgt.shape and contribution.flags.c_contiguous:
                bufs[idx] = contribution
            else:
                bufs[idx] = np.ascontiguousarray(contribution, dtype=np.float64).reshape(tgt.shape).copy()
        else:
            buf += contribution.reshape(tgt.shape)

    for node in reversed(graph.nodes):
        g = bufs.get(node.out.node_id)
        if g is None or node.op == "leaf":
            continue
        if not node.out.requires_grad:
            continue
        ins = node.input_ids
        a = tensors[ins[0]] if ins else None
        op = node.op
        if op == "matmul":
            ta, tb = node.attrs["ta"], node.attrs["tb"]
            b = tensors[ins[1]]
            am = a.data.T if ta else a.data
            bm = b.data.T if tb else b.data
            if a.requires_grad:
                da = g @ bm.T
                acc(ins[0], da.T if ta else da, owned=not ta)
            if b.requires_grad:
                db = am.T @ g
                acc(ins[1], db.T if tb else db, owned=not tb)
        elif op == "add":
            b = tensors[ins[1]]
            if a.requires_grad:
                acc(ins[0], g)
            if b.requires_grad:
                acc(ins[1], _unbroadcast_add(g, b.shape))
        elif op == "mul":
            b = tensors[ins[1]]
            if a.requires_grad:
                acc(ins[0], g * b.data, owned=True)
            if b.requires_grad:
                acc(ins[1], g * a.data, owned=True)
        elif op == "scale":
            if a.requires_grad:
                acc(ins[0], g * node.attrs["s"], owned=True)
        elif op == "sigmoid":
            if a.requires_grad:
                y = node.out.data
                acc(ins[0], g * y * (1.0 - y), owned=True)
        elif op == "tanh":
            if a.requires_grad:
                y = node.out.data
                acc(ins[0], g * (1.0 - y * y), owned=True)
        elif op == "relu":
            if a.requires_grad:
                acc(ins[0], g * (a.data > 0.0), owned=True)
        elif op == "concat":
            axis = node.attrs["axis"]
            off = 0
            for idx in ins:
                part = tensors[idx]
                n = part.shape[axis]
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(off, off + n)
                if part.requires_grad:
                    acc(idx, g[tuple(sl)])
                off += n
        elif op == "slice_time":
            if a.requires_grad:
                buf = bufs.get(ins[0])
                if buf is None:
                    buf = np.zeros_like(a.data)
                    bufs[ins[0]] = buf
                buf[node.attrs["start"]:node.attrs["stop"]] += g
        elif op == "slice_cols":
            if a.requires_grad:
                buf = bufs.get(ins[0])
                if buf is None:
                    buf = np.zeros_like(a.data)
                    bufs[ins[0]] = buf
                buf[..., node.attrs["start"]:node.attrs["stop"]] += g
        elif op == "reshape":
            if a.requires_grad:
                acc(ins[0], g.reshape(a.shape))
        elif op == "conv1d":
            kernel, bias = tensors[ins[1]], tensors[ins[2]]
            _conv1d_backward(g, a, kernel, bias, node.attrs["dilation"], acc, ins)
        elif op == "lstm_sequence":
            _lstm_sequence_backward(node, g, tensors, acc)
        elif op == "bce_loss":
            if a.requires_grad:
                target = tensors[ins[1]].data
                p = a.data
                inside = (p > BCE_CLAMP) & (p < 1.0 - BCE_CLAMP)
                pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
                dp = np.where(inside, (pc - target) / (pc * (1.0 - pc)), 0.0)
                acc(ins[0], g * dp / p.size)
        elif op == "mse_loss":
            diff = a.data - tensors[ins[1]].data
            if a.requires_grad:
                acc(ins[0], g * 2.0 * diff / diff.size)
            if tensors[ins[1]].requires_grad:
                acc(ins[1], g * (-2.0) * diff / diff.size)
        else:  # pragma: no cover
            raise GraphError(f"unknown op {op!r}")

    for t in tensors:
        if t.requires_grad:
            buf = bufs.get(t.node_id)
            t.grad = buf if buf is not None else np.zeros_like(t.data)


def _conv1d_backward(g: np.ndarray, x: Tensor, kernel: Tensor, bias: Tensor,
                     dilation: int, acc, ins) -> None:
    c_in, k, c_out = kernel.shape
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    go = g[None] if squeeze else g
    n, t, _ = xd.shape
    pad = (k - 1) * dilation
    if bias.requires_grad:
        acc(ins[2], go.sum(axis=(0, 1)))
    if kernel.requires_grad:
        xp = np.zeros((n, t + pad, c_in))
        xp[:, pad:, :] = xd
        cols = np.empty((n, t, c_in, k))
        for m in range(k):
            cols[:, :, :, m] = xp[:, m * dilation:m * dilation + t, :]
        dk = cols.reshape(n * t, c_in * k).T @ go.reshape(n * t, c_out)
        acc(ins[1], dk.reshape(c_in, k, c_out))
    if x.requires_grad:
        dcols = go.reshape(n * t, c_out) @ kernel.data.reshape(c_in * k, c_out).T
        dcols = dcols.reshape(n, t, c_in, k)
        dxp = np.zeros((n, t + pad, c_in))
        for m in range(k):
            dxp[:, m * dilation:m * dilation + t, :] += dcols[:, :, :, m]
        dx = dxp[:, pad:, :]
        acc(ins[0], dx[0] if squeeze else dx)
