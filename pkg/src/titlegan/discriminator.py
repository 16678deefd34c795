"""Binary real-vs-generated classifier over short titles.

Titles are embedded and run through two stacked LSTM layers; the final
top-layer state feeds a two-way softmax whose "real" probability is both the
classification output and the reward signal for the generator. PAD tokens are
dropped before the recurrence, so trailing padding never changes a score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from . import tensor as T
from .corpus import PAD
from .layers import taped_lstm_cell
from .params import ParamStore, init_uniform, make_rng
from .tensor import Tensor

_STREAM_INIT = 21

REAL, FAKE = 0, 1  # two-way softmax logit order

SCORE_CLAMP = 1e-7  # scores are clamped to [eps, 1-eps] before any log


@dataclass
class DiscriminatorConfig:
    vocab_size: int
    embed_dim: int = 32
    hidden_dim: int = 32


def _expected_shapes(cfg: DiscriminatorConfig) -> dict:
    v, d, h = cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim
    return {
        "embed": (v, d),
        "lstm1.wx": (d, 4 * h), "lstm1.wh": (h, 4 * h), "lstm1.b": (4 * h,),
        "lstm2.wx": (h, 4 * h), "lstm2.wh": (h, 4 * h), "lstm2.b": (4 * h,),
        "head.w": (h, 2), "head.b": (2,),
    }


def _fan_ins(cfg: DiscriminatorConfig) -> dict:
    d, h = cfg.embed_dim, cfg.hidden_dim
    return {
        "embed": d,
        "lstm1.wx": d, "lstm1.wh": h, "lstm1.b": d + h,
        "lstm2.wx": h, "lstm2.wh": h, "lstm2.b": 2 * h,
        "head.w": h, "head.b": h,
    }


class Discriminator:
    def __init__(self, config: DiscriminatorConfig,
                 params: ParamStore | None = None, seed: int = 0):
        from .generator import check_shapes  # shared validation

        self.config = config
        if params is None:
            params = ParamStore()
            rng = make_rng(seed, _STREAM_INIT)
            fans = _fan_ins(config)
            for name, shape in _expected_shapes(config).items():
                params.add(name, init_uniform(rng, shape, fans[name]))
        else:
            check_shapes(params, _expected_shapes(config), "discriminator")
        self.params = params

    def _effective(self, token_ids) -> list:
        ids = [int(t) for t in token_ids if int(t) != PAD]
        if not ids:
            raise ValueError("discriminator needs a nonempty (non-PAD) sequence")
        return ids

    def score(self, token_ids) -> Tensor:
        """Taped P(real) for one title; strictly inside (0, 1)."""
        ids = self._effective(token_ids)
        p = self.params
        hs = self.config.hidden_dim
        h1, c1 = Tensor(np.zeros(hs)), Tensor(np.zeros(hs))
        h2, c2 = Tensor(np.zeros(hs)), Tensor(np.zeros(hs))
        for tok in ids:
            x = T.lookup(p["embed"], tok)
            h1, c1 = taped_lstm_cell(p, "lstm1", hs, x, h1, c1)
            h2, c2 = taped_lstm_cell(p, "lstm2", hs, h1, h2, c2)
        logits = T.add(T.matmul(h2, p["head.w"]), p["head.b"])
        return T.pick(T.softmax(logits), REAL)

    def score_fast(self, token_ids) -> float:
        """Tape-free twin of score() for the reward hot path."""
        ids = self._effective(token_ids)
        p = self.params
        return float(kernels.disc_forward(
            p["embed"].data[np.asarray(ids, dtype=np.intp)],
            p["lstm1.wx"].data, p["lstm1.wh"].data, p["lstm1.b"].data,
            p["lstm2.wx"].data, p["lstm2.wh"].data, p["lstm2.b"].data,
            p["head.w"].data, p["head.b"].data,
        ))

    def disc_loss(self, real_batch, fake_batch, mode: str = "cross-entropy") -> Tensor:
        """Discriminator objective over two batches of titles.

        cross-entropy (default): mean of -log D(real) and -log(1 - D(fake))
        over the combined batch. paper-literal: minimize
        -mean(log D(real)) + mean(log D(fake)), the raw adversarial form,
        kept for comparison despite being unbounded below.
        """
        real_batch = list(real_batch)
        fake_batch = list(fake_batch)
        if not real_batch or not fake_batch:
            raise ValueError("disc_loss needs nonempty real and fake batches")
        if mode not in ("cross-entropy", "paper-literal"):
            raise ValueError(f"unknown disc loss mode {mode!r}")
        one = Tensor(1.0)
        real_logs = []
        fake_logs = []
        for seq in real_batch:
            d = T.clip(self.score(seq), SCORE_CLAMP, 1.0 - SCORE_CLAMP)
            real_logs.append(T.log(d))
        for seq in fake_batch:
            d = T.clip(self.score(seq), SCORE_CLAMP, 1.0 - SCORE_CLAMP)
            if mode == "cross-entropy":
                fake_logs.append(T.log(T.add(one, T.neg(d))))
            else:
                fake_logs.append(T.log(d))
        def _mean(terms):
            total = terms[0]
            for t in terms[1:]:
                total = T.add(total, t)
            return T.scale(total, 1.0 / len(terms))
        if mode == "cross-entropy":
            total = real_logs[0]
            for t in real_logs[1:] + fake_logs:
                total = T.add(total, t)
            return T.scale(T.neg(total), 1.0 / (len(real_logs) + len(fake_logs)))
        return T.add(T.neg(_mean(real_logs)), _mean(fake_logs))
