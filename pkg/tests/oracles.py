"""Independent reference implementations used as test oracles.

Everything here is deliberately written with plain Python floats, lists,
and explicit loops (no numpy vectorization, no code shared with the
package) so a bug in the library cannot hide in its own oracle.
"""

import math


def naive_matmul(a, b):
    """Triple-loop matrix product over nested lists."""
    rows, inner, cols = len(a), len(a[0]), len(b[0])
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            s = 0.0
            for k in range(inner):
                s += a[i][k] * b[k][j]
            out[i][j] = s
    return out


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def scalar_lstm_step(x, h_prev, c_prev, wx, wh, b):
    """One LSTM cell update in scalar arithmetic.

    wx is (in_dim, 4H), wh is (H, 4H), b is (4H,); gate order [i, f, g, o].
    Returns (h, c) as lists.
    """
    H = len(h_prev)
    z = [0.0] * (4 * H)
    for j in range(4 * H):
        s = b[j]
        for k in range(len(x)):
            s += x[k] * wx[k][j]
        for k in range(H):
            s += h_prev[k] * wh[k][j]
        z[j] = s
    h_out = [0.0] * H
    c_out = [0.0] * H
    for j in range(H):
        i_g = _sigmoid(z[j])
        f_g = _sigmoid(z[H + j])
        g_g = math.tanh(z[2 * H + j])
        o_g = _sigmoid(z[3 * H + j])
        c = f_g * c_prev[j] + i_g * g_g
        c_out[j] = c
        h_out[j] = o_g * math.tanh(c)
    return h_out, c_out


def scalar_attention(h_rows, w1, b1, w2, b2, activation="tanh"):
    """Compatibility scores, softmax weights, and the aggregated vector.

    h_rows is (L, 2H) nested lists, w1 is (d, 2H), b1 (d,), w2 (d,),
    b2 scalar. Returns (scores, weights, aspect).
    """
    act = math.tanh if activation == "tanh" else _sigmoid
    L = len(h_rows)
    d = len(w1)
    scores = []
    for row in h_rows:
        s = b2
        for a in range(d):
            pre = b1[a]
            for k in range(len(row)):
                pre += w1[a][k] * row[k]
            s += w2[a] * act(pre)
        scores.append(s)
    m = max(scores)
    exps = [math.exp(s - m) for s in scores]
    total = sum(exps)
    weights = [e / total for e in exps]
    width = len(h_rows[0])
    aspect = [0.0] * width
    for i in range(L):
        for k in range(width):
            aspect[k] += weights[i] * h_rows[i][k]
    return scores, weights, aspect


def scalar_softmax(xs):
    m = max(xs)
    exps = [math.exp(x - m) for x in xs]
    total = sum(exps)
    return [e / total for e in exps]


def scalar_predict_head(rep, mlp_w, mlp_b, out_w, out_b):
    """tanh hidden layer then softmax logits, all scalar arithmetic."""
    hidden = []
    for j in range(len(mlp_w)):
        s = mlp_b[j]
        for k in range(len(rep)):
            s += mlp_w[j][k] * rep[k]
        hidden.append(math.tanh(s))
    logits = []
    for j in range(len(out_w)):
        s = out_b[j]
        for k in range(len(hidden)):
            s += out_w[j][k] * hidden[k]
        logits.append(s)
    return scalar_softmax(logits)


def scalar_batch_loss(prob_rows, golds, weight_matrices, lam, floor=1e-12):
    """Mean floored cross-entropy plus lam * sum of squared weight norms."""
    total = 0.0
    for probs, gold in zip(prob_rows, golds):
        total += -math.log(max(probs[gold], floor))
    loss = total / len(golds)
    reg = 0.0
    for w in weight_matrices:
        for row in w:
            if isinstance(row, (int, float)):
                reg += row * row
            else:
                for v in row:
                    reg += v * v
    return loss + lam * reg


def f1_by_definition(golds, preds, n_classes, classes=None):
    """Per-class-definition micro/macro F1 (counting loops, no matrices)."""
    if classes is None:
        classes = list(range(n_classes))
    per_class_f1 = []
    for c in classes:
        tp = sum(1 for g, p in zip(golds, preds) if g == c and p == c)
        fp = sum(1 for g, p in zip(golds, preds) if g != c and p == c)
        fn = sum(1 for g, p in zip(golds, preds) if g == c and p != c)
        prec = tp / (tp + fp) if tp + fp > 0 else 0.0
        rec = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        per_class_f1.append(f1)
    macro = sum(per_class_f1) / len(per_class_f1)
    tp_all = sum(1 for g, p in zip(golds, preds) if g == p)
    fp_all = sum(1 for g, p in zip(golds, preds) if g != p)
    fn_all = fp_all
    prec = tp_all / (tp_all + fp_all) if tp_all + fp_all > 0 else 0.0
    rec = tp_all / (tp_all + fn_all) if tp_all + fn_all > 0 else 0.0
    micro = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    return micro, macro, (micro + macro) / 2.0


def scalar_adam_step(value, grad, m, v, t, lr, beta1, beta2, eps):
    """One ADAM update on a single scalar parameter; returns new state."""
    t = t + 1
    m = beta1 * m + (1 - beta1) * grad
    v = beta2 * v + (1 - beta2) * grad * grad
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    value = value - lr * m_hat / (math.sqrt(v_hat) + eps)
    return value, m, v, t
