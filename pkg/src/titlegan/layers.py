"""Taped building blocks shared by the generator and discriminator."""

from __future__ import annotations

from . import tensor as T
from .params import ParamStore
from .tensor import Tensor


def taped_lstm_cell(params: ParamStore, prefix: str, hidden_dim: int,
                    x: Tensor, h: Tensor, c: Tensor):
    """Standard LSTM gating on the tape; gate layout [i | f | g | o].

    i, f, o = sigmoid(...), g = tanh(...), c' = f*c + i*g, h' = o*tanh(c').
    """
    hs = hidden_dim
    z = T.add(
        T.add(T.matmul(x, params[f"{prefix}.wx"]), T.matmul(h, params[f"{prefix}.wh"])),
        params[f"{prefix}.b"],
    )
    gi = T.sigmoid(T.slice_vec(z, 0, hs))
    gf = T.sigmoid(T.slice_vec(z, hs, 2 * hs))
    gg = T.tanh(T.slice_vec(z, 2 * hs, 3 * hs))
    go = T.sigmoid(T.slice_vec(z, 3 * hs, 4 * hs))
    c2 = T.add(T.mul(gf, c), T.mul(gi, gg))
    h2 = T.mul(go, T.tanh(c2))
    return h2, c2
