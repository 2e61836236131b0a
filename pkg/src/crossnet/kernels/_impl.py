"""LSTM sequence-scan kernels, written once in the numba-compatible numpy
subset so the same source runs as plain numpy or under @njit.

Layout conventions:
  zx    (L, 4H)  input projections x_t @ Wx, precomputed for the whole sequence
  wh    (H, 4H)  recurrent weights
  b     (4H,)    bias, gate order [input, forget, candidate, output]
  h0,c0 (H,)     initial states

The recurrence is the standard gated cell: sigmoid input/forget/output
gates, tanh candidate, tanh on the cell for the hidden output, no peepholes.
"""

import numpy as np


def lstm_seq_forward(zx, wh, b, h0, c0):
    """Scan the cell over a sequence.

    Returns (hs, cs, gates, tanhc): hidden and cell states per step, plus the
    gate activations and tanh(c) stashed for the backward pass.
    """
    L = zx.shape[0]
    H = h0.shape[0]
    hs = np.zeros((L, H))
    cs = np.zeros((L, H))
    gates = np.zeros((L, 4 * H))
    tanhc = np.zeros((L, H))
    h = h0
    c = c0
    for t in range(L):
        z = zx[t] + np.dot(h, wh) + b
        i = 1.0 / (1.0 + np.exp(-z[0:H]))
        f = 1.0 / (1.0 + np.exp(-z[H:2 * H]))
        g = np.tanh(z[2 * H:3 * H])
        o = 1.0 / (1.0 + np.exp(-z[3 * H:4 * H]))
        c = f * c + i * g
        ch = np.tanh(c)
        h = o * ch
        gates[t, 0:H] = i
        gates[t, H:2 * H] = f
        gates[t, 2 * H:3 * H] = g
        gates[t, 3 * H:4 * H] = o
        cs[t] = c
        tanhc[t] = ch
        hs[t] = h
    return hs, cs, gates, tanhc


def lstm_seq_backward(wh, h0, c0, hs, cs, gates, tanhc, dhs, dh_last, dc_last):
    """Backpropagate through the scan.

    dhs carries the gradient arriving at every per-step hidden state;
    dh_last/dc_last the extra gradient on the final states. Returns
    (dzx, dwh, db, dh0, dc0).
    """
    L, H = hs.shape
    dzx = np.zeros((L, 4 * H))
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * H)
    dh_rec = dh_last.copy()
    dc_rec = dc_last.copy()
    for t in range(L - 1, -1, -1):
        dh = dhs[t] + dh_rec
        i = gates[t, 0:H]
        f = gates[t, H:2 * H]
        g = gates[t, 2 * H:3 * H]
        o = gates[t, 3 * H:4 * H]
        ch = tanhc[t]
        if t > 0:
            c_prev = cs[t - 1]
            h_prev = hs[t - 1]
        else:
            c_prev = c0
            h_prev = h0
        do = dh * ch
        dc = dc_rec + dh * o * (1.0 - ch * ch)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_rec = dc * f
        dzx[t, 0:H] = di * i * (1.0 - i)
        dzx[t, H:2 * H] = df * f * (1.0 - f)
        dzx[t, 2 * H:3 * H] = dg * (1.0 - g * g)
        dzx[t, 3 * H:4 * H] = do * o * (1.0 - o)
        dz = dzx[t]
        db += dz
        dwh += h_prev.reshape(H, 1) * dz.reshape(1, 4 * H)
        dh_rec = np.dot(wh, dz)
    return dzx, dwh, db, dh_rec, dc_rec
