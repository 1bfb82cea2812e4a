"""Numba-jitted twins of the numpy evaluation kernels.

Importing this module requires numba. Function semantics match
``numpy_impl`` exactly; only the execution strategy differs. fastmath stays
off so IEEE evaluation order is preserved.
"""
from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def _sigmoid_vec(x):
    return 1.0 / (1.0 + np.exp(-x))


@njit(**_JIT)
def lstm_cell(x, h, c, W, U, b):
    hid = h.shape[0]
    z = np.dot(W, x) + np.dot(U, h) + b
    i = _sigmoid_vec(z[:hid])
    f = _sigmoid_vec(z[hid:2 * hid])
    g = np.tanh(z[2 * hid:3 * hid])
    o = _sigmoid_vec(z[3 * hid:])
    c2 = f * c + i * g
    h2 = o * np.tanh(c2)
    return h2, c2


@njit(**_JIT)
def dense_sigmoid(h, w, b):
    return 1.0 / (1.0 + np.exp(-(np.dot(w[0], h) + b[0])))


@njit(**_JIT)
def dense_linear(h, w, b):
    return np.dot(w, h) + b


@njit(**_JIT)
def _step2(x, h1, c1, h2, c2, W1, U1, b1, W2, U2, b2):
    h1, c1 = lstm_cell(x, h1, c1, W1, U1, b1)
    h2, c2 = lstm_cell(h1, h2, c2, W2, U2, b2)
    return h1, c1, h2, c2


def lstm2_step(x, state, p):
    h1, c1, h2, c2 = state
    W1, U1, b1, W2, U2, b2 = p
    return _step2(x, h1, c1, h2, c2, W1, U1, b1, W2, U2, b2)


def lstm2_zero_state(hidden):
    z = np.zeros(hidden)
    return z.copy(), z.copy(), z.copy(), z.copy()


@njit(**_JIT)
def _classifier_trace(series, W1, U1, b1, W2, U2, b2, wc, bc):
    t_len = series.shape[0]
    hid = W1.shape[0] // 4
    h1 = np.zeros(hid)
    c1 = np.zeros(hid)
    h2 = np.zeros(hid)
    c2 = np.zeros(hid)
    y = np.empty(t_len)
    for t in range(t_len):
        h1, c1, h2, c2 = _step2(series[t], h1, c1, h2, c2, W1, U1, b1, W2, U2, b2)
        y[t] = dense_sigmoid(h2, wc, bc)
    return y


def classifier_trace(series, trunk, wc, bc):
    W1, U1, b1, W2, U2, b2 = trunk
    return _classifier_trace(series, W1, U1, b1, W2, U2, b2, wc, bc)


@njit(**_JIT)
def _predictor_trace(series, W1, U1, b1, W2, U2, b2, wp, bp):
    t_len = series.shape[0]
    n_feat = series.shape[1]
    hid = W1.shape[0] // 4
    h1 = np.zeros(hid)
    c1 = np.zeros(hid)
    h2 = np.zeros(hid)
    c2 = np.zeros(hid)
    out = np.empty((t_len, n_feat))
    for t in range(t_len):
        h1, c1, h2, c2 = _step2(series[t], h1, c1, h2, c2, W1, U1, b1, W2, U2, b2)
        out[t] = dense_linear(h2, wp, bp)
    return out


def predictor_trace(series, trunk, wp, bp):
    W1, U1, b1, W2, U2, b2 = trunk
    return _predictor_trace(series, W1, U1, b1, W2, U2, b2, wp, bp)


@njit(**_JIT)
def _psc_trace(series, cW1, cU1, cb1, cW2, cU2, cb2, wc, bc,
               pW1, pU1, pb1, pW2, pU2, pb2, wp, bp, warmup):
    t_len = series.shape[0]
    hid_c = cW1.shape[0] // 4
    hid_p = pW1.shape[0] // 4
    ch1 = np.zeros(hid_c)
    cc1 = np.zeros(hid_c)
    ch2 = np.zeros(hid_c)
    cc2 = np.zeros(hid_c)
    ph1 = np.zeros(hid_p)
    pc1 = np.zeros(hid_p)
    ph2 = np.zeros(hid_p)
    pc2 = np.zeros(hid_p)
    y = np.empty(t_len)
    unroll_steps = 0
    for t in range(t_len):
        ch1, cc1, ch2, cc2 = _step2(series[t], ch1, cc1, ch2, cc2, cW1, cU1, cb1, cW2, cU2, cb2)
        ph1, pc1, ph2, pc2 = _step2(series[t], ph1, pc1, ph2, pc2, pW1, pU1, pb1, pW2, pU2, pb2)
        y_now = dense_sigmoid(ch2, wc, bc)
        if t + 1 < warmup:
            y[t] = y_now
            continue
        x_next = dense_linear(ph2, wp, bp)
        rch1 = ch1.copy()
        rcc1 = cc1.copy()
        rch2 = ch2.copy()
        rcc2 = cc2.copy()
        rph1 = ph1.copy()
        rpc1 = pc1.copy()
        rph2 = ph2.copy()
        rpc2 = pc2.copy()
        y_roll = y_now
        for _ in range(t + 1, t_len):
            rch1, rcc1, rch2, rcc2 = _step2(x_next, rch1, rcc1, rch2, rcc2,
                                            cW1, cU1, cb1, cW2, cU2, cb2)
            rph1, rpc1, rph2, rpc2 = _step2(x_next, rph1, rpc1, rph2, rpc2,
                                            pW1, pU1, pb1, pW2, pU2, pb2)
            y_roll = dense_sigmoid(rch2, wc, bc)
            x_next = dense_linear(rph2, wp, bp)
            unroll_steps += 1
        y[t] = y_roll
    return y, unroll_steps


def psc_trace(series, cls_trunk, wc, bc, pred_trunk, wp, bp, warmup):
    cW1, cU1, cb1, cW2, cU2, cb2 = cls_trunk
    pW1, pU1, pb1, pW2, pU2, pb2 = pred_trunk
    return _psc_trace(series, cW1, cU1, cb1, cW2, cU2, cb2, wc, bc,
                      pW1, pU1, pb1, pW2, pU2, pb2, wp, bp, warmup)


@njit(**_JIT)
def conv1d_causal(x, kernel, bias, dilation):
    t_len = x.shape[0]
    c_in = kernel.shape[0]
    k = kernel.shape[1]
    c_out = kernel.shape[2]
    out = np.empty((t_len, c_out))
    for t in range(t_len):
        for co in range(c_out):
            acc = bias[co]
            for m in range(k):
                s = t - (k - 1 - m) * dilation
                if s >= 0:
                    for ci in range(c_in):
                        acc += x[s, ci] * kernel[ci, m, co]
            out[t, co] = acc
    return out
