"""Hot numeric kernels for the tape-free inference path.

Sampling, Monte Carlo rollouts and discriminator scoring dominate the
adversarial-training runtime, so these inner loops are compiled with numba
when it is available. Every kernel is plain float64 numpy code, so the same
source runs uncompiled as a fallback. Kernels are self-contained (no calls
between them) so each path stays pure and numba can cache compilations.

Selection is controlled by the TITLEGAN_NUMBA environment variable at import
time:

    auto (default)  use numba if importable, else pure numpy
    1               require numba (ImportError if missing)
    0               force the pure-numpy path

``PURE`` keeps the undecorated functions so benchmarks can compare both paths
in one process. LSTM gate layout is [input | forget | cell | output] along
the 4H axis everywhere in this package.
"""

import os

import numpy as np

_FLAG = os.environ.get("TITLEGAN_NUMBA", "auto").strip().lower()

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:
    _HAVE_NUMBA = False
    if _FLAG in ("1", "true", "on"):
        raise

USE_NUMBA = _HAVE_NUMBA and _FLAG not in ("0", "false", "off")


def _jit(fn):
    if USE_NUMBA:
        return njit(cache=True)(fn)
    return fn


def _lstm_step(x, h, c, wx, wh, b):
    """One LSTM cell update; returns (h_next, c_next)."""
    hsize = wh.shape[0]
    z = x @ wx + h @ wh + b
    gi = 1.0 / (1.0 + np.exp(-z[:hsize]))
    gf = 1.0 / (1.0 + np.exp(-z[hsize : 2 * hsize]))
    gg = np.tanh(z[2 * hsize : 3 * hsize])
    go = 1.0 / (1.0 + np.exp(-z[3 * hsize :]))
    c_next = gf * c + gi * gg
    h_next = go * np.tanh(c_next)
    return h_next, c_next


def _lstm_sequence(emb, wx, wh, b):
    """Run an LSTM from a zero state over (T, d) embeddings.

    Returns ((T, H) hidden states, final cell state)."""
    steps = emb.shape[0]
    hsize = wh.shape[0]
    states = np.empty((steps, hsize))
    h = np.zeros(hsize)
    c = np.zeros(hsize)
    for t in range(steps):
        z = emb[t] @ wx + h @ wh + b
        gi = 1.0 / (1.0 + np.exp(-z[:hsize]))
        gf = 1.0 / (1.0 + np.exp(-z[hsize : 2 * hsize]))
        gg = np.tanh(z[2 * hsize : 3 * hsize])
        go = 1.0 / (1.0 + np.exp(-z[3 * hsize :]))
        c = gf * c + gi * gg
        h = go * np.tanh(c)
        states[t] = h
    return states, c


def _softmax1d(x):
    e = np.exp(x - np.max(x))
    return e / np.sum(e)


def _attend(h, enc_states, wq, wk, ba, v):
    """Concat-scorer attention; returns (context, weights)."""
    scores = np.tanh(enc_states @ wk + (h @ wq + ba)) @ v
    e = np.exp(scores - np.max(scores))
    alpha = e / np.sum(e)
    ctx = alpha @ enc_states
    return ctx, alpha


def _decode_step(
    h,
    c,
    emb_prev,
    enc_states,
    img_vec,
    attr_vec,
    attn_wq,
    attn_wk,
    attn_b,
    attn_v,
    fuse_w,
    fuse_b,
    dec_wx,
    dec_wh,
    dec_b,
    out_w,
    out_b,
    pad_id,
    inv_temp,
):
    """One fused decoder step: attention, fusion, LSTM, masked output softmax.

    Returns (h_next, c_next, probs) with probs[pad_id] == 0.
    """
    hsize = h.shape[0]
    scores = np.tanh(enc_states @ attn_wk + (h @ attn_wq + attn_b)) @ attn_v
    es = np.exp(scores - np.max(scores))
    alpha = es / np.sum(es)
    ctx = alpha @ enc_states
    fused = np.tanh(
        ctx @ fuse_w[:hsize]
        + img_vec @ fuse_w[hsize : 2 * hsize]
        + attr_vec @ fuse_w[2 * hsize :]
        + fuse_b
    )
    d = emb_prev.shape[0]
    z = emb_prev @ dec_wx[:d] + fused @ dec_wx[d:] + h @ dec_wh + dec_b
    gi = 1.0 / (1.0 + np.exp(-z[:hsize]))
    gf = 1.0 / (1.0 + np.exp(-z[hsize : 2 * hsize]))
    gg = np.tanh(z[2 * hsize : 3 * hsize])
    go = 1.0 / (1.0 + np.exp(-z[3 * hsize :]))
    c_next = gf * c + gi * gg
    h_next = go * np.tanh(c_next)
    logits = (h_next @ out_w + out_b) * inv_temp
    logits[pad_id] = -1e30
    ep = np.exp(logits - np.max(logits))
    probs = ep / np.sum(ep)
    return h_next, c_next, probs


def _disc_forward(emb, wx1, wh1, b1, wx2, wh2, b2, head_w, head_b):
    """Two stacked LSTMs over (T, d) embeddings; returns P(real) from the final state."""
    steps = emb.shape[0]
    hsize = wh1.shape[0]
    h1 = np.zeros(hsize)
    c1 = np.zeros(hsize)
    h2 = np.zeros(hsize)
    c2 = np.zeros(hsize)
    for t in range(steps):
        z1 = emb[t] @ wx1 + h1 @ wh1 + b1
        gi = 1.0 / (1.0 + np.exp(-z1[:hsize]))
        gf = 1.0 / (1.0 + np.exp(-z1[hsize : 2 * hsize]))
        gg = np.tanh(z1[2 * hsize : 3 * hsize])
        go = 1.0 / (1.0 + np.exp(-z1[3 * hsize :]))
        c1 = gf * c1 + gi * gg
        h1 = go * np.tanh(c1)
        z2 = h1 @ wx2 + h2 @ wh2 + b2
        gi = 1.0 / (1.0 + np.exp(-z2[:hsize]))
        gf = 1.0 / (1.0 + np.exp(-z2[hsize : 2 * hsize]))
        gg = np.tanh(z2[2 * hsize : 3 * hsize])
        go = 1.0 / (1.0 + np.exp(-z2[3 * hsize :]))
        c2 = gf * c2 + gi * gg
        h2 = go * np.tanh(c2)
    logits = h2 @ head_w + head_b
    e = np.exp(logits - np.max(logits))
    p = e / np.sum(e)
    return p[0]


def _categorical(probs, u):
    """Invert the CDF of probs at u; returns the sampled index."""
    acc = 0.0
    last = 0
    for idx in range(probs.shape[0]):
        p = probs[idx]
        if p > 0.0:
            last = idx
            acc += p
            if u < acc:
                return idx
    return last


PURE = {
    "lstm_step": _lstm_step,
    "lstm_sequence": _lstm_sequence,
    "softmax1d": _softmax1d,
    "attend": _attend,
    "decode_step": _decode_step,
    "disc_forward": _disc_forward,
    "categorical": _categorical,
}

lstm_step = _jit(_lstm_step)
lstm_sequence = _jit(_lstm_sequence)
softmax1d = _jit(_softmax1d)
attend = _jit(_attend)
decode_step = _jit(_decode_step)
disc_forward = _jit(_disc_forward)
categorical = _jit(_categorical)

ACTIVE = {
    "lstm_step": lstm_step,
    "lstm_sequence": lstm_sequence,
    "softmax1d": softmax1d,
    "attend": attend,
    "decode_step": decode_step,
    "disc_forward": disc_forward,
    "categorical": categorical,
}


def warmup(hidden=4, embed=3, vocab=6):
    """Trigger JIT compilation of every kernel on tiny inputs."""
    rng = np.random.default_rng(0)
    wx = rng.standard_normal((embed, 4 * hidden))
    wh = rng.standard_normal((hidden, 4 * hidden))
    b = rng.standard_normal(4 * hidden)
    emb = rng.standard_normal((3, embed))
    lstm_step(emb[0], np.zeros(hidden), np.zeros(hidden), wx, wh, b)
    lstm_sequence(emb, wx, wh, b)
    softmax1d(np.zeros(vocab))
    enc = rng.standard_normal((3, hidden))
    attn_wq = rng.standard_normal((hidden, hidden))
    attn_wk = rng.standard_normal((hidden, hidden))
    attn_b = rng.standard_normal(hidden)
    attn_v = rng.standard_normal(hidden)
    attend(np.zeros(hidden), enc, attn_wq, attn_wk, attn_b, attn_v)
    fuse_w = rng.standard_normal((3 * hidden, hidden))
    fuse_b = rng.standard_normal(hidden)
    dec_wx = rng.standard_normal((embed + hidden, 4 * hidden))
    out_w = rng.standard_normal((hidden, vocab))
    out_b = rng.standard_normal(vocab)
    _, _, probs = decode_step(
        np.zeros(hidden), np.zeros(hidden), emb[0], enc,
        np.zeros(hidden), np.zeros(hidden),
        attn_wq, attn_wk, attn_b, attn_v, fuse_w, fuse_b,
        dec_wx, wh, b, out_w, out_b, 0, 1.0,
    )
    categorical(probs, 0.5)
    disc_forward(emb, wx, wh, b, rng.standard_normal((hidden, 4 * hidden)), wh, b,
                 rng.standard_normal((hidden, 2)), rng.standard_normal(2))
