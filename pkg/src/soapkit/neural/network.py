"""Forward and reverse-mode passes for the network building blocks.

Plain numpy, float64, no autograd: every backward function here is the
hand-derived adjoint of its forward partner and is checked against central
finite differences in the test suite. Gate order in all LSTM weight
matrices is input, forget, cell, output.
"""

from __future__ import annotations

import numpy as np


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def init_lstm(gen, input_dim: int, hidden: int) -> dict:
    # input matrices get twice the usual uniform bound: inputs here are
    # attention-pooled means whose per-coordinate scale sits well below 1
    lw = 2.0 / np.sqrt(input_dim)
    lu = 1.0 / np.sqrt(hidden)
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0  # unit forget bias; keeps early cell-state gradients alive
    return {
        "W": gen.uniform(-lw, lw, size=(4 * hidden, input_dim)),
        "U": gen.uniform(-lu, lu, size=(4 * hidden, hidden)),
        "b": b,
    }


def lstm_forward(X: np.ndarray, W, U, b, in_mask=None, rec_mask=None,
                 reverse: bool = False) -> tuple:
    """Run an LSTM over X (N, Din) from zero initial state.

    in_mask / rec_mask are variational dropout masks (fixed per sequence)
    applied to the step input and the recurrent hidden input. Returns
    (H (N, hidden), cache).
    """
    n, _ = X.shape
    hidden = U.shape[1]
    Xm = X * in_mask if in_mask is not None else X
    WX = Xm @ W.T  # (N, 4H)
    order = range(n - 1, -1, -1) if reverse else range(n)
    H = np.zeros((n, hidden))
    HM = np.zeros((n, hidden))      # masked h_prev per step
    GATES = np.zeros((n, 4 * hidden))
    CPREV = np.zeros((n, hidden))
    TC = np.zeros((n, hidden))
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    for t in order:
        hm = h * rec_mask if rec_mask is not None else h
        z = WX[t] + U @ hm + b
        i = _sigmoid(z[:hidden])
        f = _sigmoid(z[hidden:2 * hidden])
        g = np.tanh(z[2 * hidden:3 * hidden])
        o = _sigmoid(z[3 * hidden:])
        CPREV[t] = c
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        H[t] = h
        HM[t] = hm
        GATES[t] = np.concatenate([i, f, g, o])
        TC[t] = tc
    cache = {"Xm": Xm, "HM": HM, "GATES": GATES, "CPREV": CPREV, "TC": TC,
             "W": W, "U": U, "in_mask": in_mask, "rec_mask": rec_mask,
             "reverse": reverse, "hidden": hidden}
    return H, cache


def lstm_backward(dH: np.ndarray, cache, cuts=frozenset()) -> tuple:
    """Adjoint of lstm_forward. `cuts` holds sequence positions where the
    carried state gradient is zeroed (truncated BPTT boundaries; forward
    values were not truncated). Returns (dX, grads{"W","U","b"})."""
    hidden = cache["hidden"]
    W, U = cache["W"], cache["U"]
    reverse = cache["reverse"]
    n = dH.shape[0]
    dZ = np.zeros((n, 4 * hidden))
    dh_carry = np.zeros(hidden)
    dc_carry = np.zeros(hidden)
    order = range(n) if reverse else range(n - 1, -1, -1)
    rec_mask = cache["rec_mask"]
    for t in order:
        gates = cache["GATES"][t]
        i, f = gates[:hidden], gates[hidden:2 * hidden]
        g, o = gates[2 * hidden:3 * hidden], gates[3 * hidden:]
        tc = cache["TC"][t]
        dh = dH[t] + dh_carry
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_carry
        di = dc * g
        df = dc * cache["CPREV"][t]
        dg = dc * i
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ])
        dZ[t] = dz
        dh_carry = U.T @ dz
        if rec_mask is not None:
            dh_carry = dh_carry * rec_mask
        dc_carry = dc * f
        # truncation: state gradients stop at chunk boundaries
        boundary = t if not reverse else t + 1
        if boundary in cuts:
            dh_carry = np.zeros(hidden)
            dc_carry = np.zeros(hidden)
    grads = {
        "W": dZ.T @ cache["Xm"],
        "U": dZ.T @ cache["HM"],
        "b": dZ.sum(axis=0),
    }
    dX = dZ @ W
    if cache["in_mask"] is not None:
        dX = dX * cache["in_mask"]
    return dX, grads


def attention_forward(E: np.ndarray, w_layer: np.ndarray, w_word: np.ndarray) -> tuple:
    """Collapse one utterance's embeddings E (T, K, D) into a vector.

    Per token, the K layer vectors are mixed by softmax(E_t w_layer); the
    resulting token vectors are pooled by softmax(L w_word). A zero w_word
    gives the unweighted token mean. E holds real tokens only (pads are
    dropped upstream; their zero vectors cannot carry signal anyway).
    """
    S = E @ w_layer                      # (T, K)
    A = softmax(S, axis=1)
    L = np.einsum("tk,tkd->td", A, E)    # (T, D)
    q = L @ w_word                       # (T,)
    aw = softmax(q, axis=0)
    u = aw @ L
    return u, {"E": E, "A": A, "L": L, "aw": aw, "w_word": w_word}


def attention_backward(du: np.ndarray, cache) -> tuple:
    """Adjoint of attention_forward; embeddings are frozen so only the two
    attention vectors receive gradients. Returns (d_w_layer, d_w_word)."""
    E, A, L, aw, w_word = cache["E"], cache["A"], cache["L"], cache["aw"], cache["w_word"]
    dL = np.outer(aw, du)
    daw = L @ du
    dq = aw * (daw - float(aw @ daw))
    d_w_word = L.T @ dq
    dL += np.outer(dq, w_word)
    dA = np.einsum("td,tkd->tk", dL, E)
    dS = A * (dA - (A * dA).sum(axis=1, keepdims=True))
    d_w_layer = np.einsum("tk,tkd->d", dS, E)
    return d_w_layer, d_w_word


def weighted_ce_loss_and_dlogits(probs: np.ndarray, targets: np.ndarray,
                                 class_weights: np.ndarray) -> tuple:
    """Sum over rows of -sum_c w_c t_c log p_c, plus d(loss)/d(logits).

    For softmax probs the logit gradient is p * (w . t) - w * t per row.
    """
    p = np.clip(probs, 1e-300, None)
    loss = -float((class_weights * targets * np.log(p)).sum())
    s = targets @ class_weights
    dlogits = probs * s[:, None] - targets * class_weights
    return loss, dlogits


def dropout_mask(gen, size: int, rate: float) -> np.ndarray | None:
    """Inverted dropout mask (None when rate is 0)."""
    if rate <= 0.0:
        return None
    keep = 1.0 - rate
    return (gen.random(size) < keep).astype(float) / keep


def global_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    return float(np.sqrt(total))


def clip_by_global_norm(grads: dict, max_norm: float) -> tuple:
    """Scale all gradients by max_norm/||g|| when the global norm exceeds
    max_norm. Returns (grads, norm_before, scale)."""
    norm = global_norm(grads)
    scale = 1.0
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm, scale
