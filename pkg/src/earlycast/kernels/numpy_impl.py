"""Pure-numpy evaluation kernels (reference backend).

These run the inference-time hot loops: single-series LSTM traces, the
predictive-classification unroll, and causal dilated convolution. The numba
backend provides jitted twins with identical semantics; within one backend
every path shares the same cell arithmetic, so traces that are defined to
coincide (for example the full-history predictive trace and the plain
classifier output) match bitwise.
"""
from __future__ import annotations

import numpy as np

NAME = "numpy"


def _sigmoid(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def lstm_cell(x, h, c, W, U, b):
    """One LSTM cell step for a single frame.

    Gate order in the packed weights is input, forget, candidate, output.
    Returns the new (h, c).
    """
    hid = h.shape[0]
    z = W @ x + U @ h + b
    i = _sigmoid(z[:hid])
    f = _sigmoid(z[hid:2 * hid])
    g = np.tanh(z[2 * hid:3 * hid])
    o = _sigmoid(z[3 * hid:])
    c2 = f * c + i * g
    h2 = o * np.tanh(c2)
    return h2, c2


def dense_sigmoid(h, w, b):
    """Scalar sigmoid head: sigmoid(w . h + b) with w of shape (1, H)."""
    return float(_sigmoid(w[0] @ h + b[0]))


def dense_linear(h, w, b):
    """Linear head: w @ h + b with w of shape (F, H)."""
    return w @ h + b


def lstm2_step(x, state, p):
    """Advance a two-layer LSTM by one frame. state is (h1, c1, h2, c2)."""
    h1, c1, h2, c2 = state
    W1, U1, b1, W2, U2, b2 = p
    h1, c1 = lstm_cell(x, h1, c1, W1, U1, b1)
    h2, c2 = lstm_cell(h1, h2, c2, W2, U2, b2)
    return h1, c1, h2, c2


def lstm2_zero_state(hidden):
    z = np.zeros(hidden)
    return z.copy(), z.copy(), z.copy(), z.copy()


def classifier_trace(series, trunk, wc, bc):
    """Per-step sigmoid classification outputs for a (T, F) series."""
    t_len = series.shape[0]
    hid = trunk[0].shape[0] // 4
    state = lstm2_zero_state(hid)
    y = np.empty(t_len)
    for t in range(t_len):
        state = lstm2_step(series[t], state, trunk)
        y[t] = dense_sigmoid(state[2], wc, bc)
    return y


def predictor_trace(series, trunk, wp, bp):
    """Per-step next-frame predictions, shape (T, F)."""
    t_len, n_feat = series.shape
    hid = trunk[0].shape[0] // 4
    state = lstm2_zero_state(hid)
    out = np.empty((t_len, n_feat))
    for t in range(t_len):
        state = lstm2_step(series[t], state, trunk)
        out[t] = dense_linear(state[2], wp, bp)
    return out


def psc_trace(series, cls_trunk, wc, bc, pred_trunk, wp, bp, warmup):
    """Predictive sequential classification over one (T, F) series.

    For every history size t the canonical classifier/predictor states are
    advanced on the real frame; from the warmup step onward both states are
    copied and the remaining steps are rolled out on the predictor's own
    outputs, recording the classifier output at the synthetic final step.
    Returns (trace, unroll_steps) where unroll_steps counts inner rollout
    iterations (per model).
    """
    t_len = series.shape[0]
    hid_c = cls_trunk[0].shape[0] // 4
    hid_p = pred_trunk[0].shape[0] // 4
    cs = lstm2_zero_state(hid_c)
    ps = lstm2_zero_state(hid_p)
    y = np.empty(t_len)
    unroll_steps = 0
    for t in range(t_len):
        cs = lstm2_step(series[t], cs, cls_trunk)
        ps = lstm2_step(series[t], ps, pred_trunk)
        y_now = dense_sigmoid(cs[2], wc, bc)
        if t + 1 < warmup:
            y[t] = y_now
            continue
        x_next = dense_linear(ps[2], wp, bp)
        ch1, cc1, ch2, cc2 = (s.copy() for s in cs)
        ph1, pc1, ph2, pc2 = (s.copy() for s in ps)
        y_roll = y_now
        for _ in range(t + 1, t_len):
            ch1, cc1, ch2, cc2 = lstm2_step(x_next, (ch1, cc1, ch2, cc2), cls_trunk)
            ph1, pc1, ph2, pc2 = lstm2_step(x_next, (ph1, pc1, ph2, pc2), pred_trunk)
            y_roll = dense_sigmoid(ch2, wc, bc)
            x_next = dense_linear(ph2, wp, bp)
            unroll_steps += 1
        y[t] = y_roll
    return y, unroll_steps


def conv1d_causal(x, kernel, bias, dilation):
    """Causal dilated convolution of a (T, C_in) series -> (T, C_out).

    Tap m of the kernel reads step t - (k-1-m) * dilation; steps before the
    series start are zero.
    """
    t_len = x.shape[0]
    c_in, k, c_out = kernel.shape
    pad = (k - 1) * dilation
    xp = np.zeros((t_len + pad, c_in))
    xp[pad:] = x
    cols = np.empty((t_len, c_in, k))
    for m in range(k):
        cols[:, :, m] = xp[m * dilation:m * dilation + t_len]
    return cols.reshape(t_len, c_in * k) @ kernel.reshape(c_in * k, c_out) + bias
