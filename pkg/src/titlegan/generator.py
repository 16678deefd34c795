"""Multi-modal attention seq2seq policy over short-title tokens.

Three modalities are encoded per product: the long title through a one-layer
LSTM, the attribute tags through mean-pooled embeddings and a two-layer dense
head, and the image feature vector through a tanh projection. At every
decoder step a concat-scorer attention summarizes the title states, the three
vectors are fused as tanh(W [context; image; attrs] + b), and an LSTM cell
consumes [prev-token embedding; fusion] to produce a PAD-masked distribution
over the vocabulary.

Two forward paths exist on purpose: the taped path (decode_step,
sequence_logprob) used for training, and a tape-free kernel path
(fast_encode, generate, continue_from) used for sampling and Monte Carlo
rollouts, where almost all inference time is spent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from . import tensor as T
from .corpus import BOS, EOS, PAD
from .layers import taped_lstm_cell
from .params import ParamStore, init_uniform, make_rng
from .tensor import Tensor

_STREAM_INIT = 11
_STREAM_SAMPLE = 12


@dataclass
class GeneratorConfig:
    vocab_size: int
    embed_dim: int = 32
    hidden_dim: int = 32
    image_dim: int = 16
    max_len: int = 12
    use_attrs: bool = True
    use_image: bool = True


@dataclass
class RecordInputs:
    """Encoded inputs for one product."""

    title_ids: list
    attr_ids: list
    image: np.ndarray


@dataclass
class EncoderOutput:
    title_states: Tensor  # (K, H)
    attrs: Tensor  # (H,)
    image: Tensor  # (H,)
    final_h: Tensor  # (H,) last encoder hidden state, seeds the decoder
    final_c: Tensor  # (H,) last encoder cell state


@dataclass
class DecoderState:
    h: Tensor
    c: Tensor
    t: int = 0


@dataclass
class StepOutput:
    state: DecoderState
    dist: Tensor  # (vocab,), sums to 1, PAD at exactly 0
    attention: Tensor  # (K,)
    context: Tensor  # (H,) fused vector


@dataclass
class FastEncoding:
    """Raw-array twin of EncoderOutput for the kernel path."""

    title_states: np.ndarray
    attrs: np.ndarray
    image: np.ndarray
    final_h: np.ndarray
    final_c: np.ndarray


def _expected_shapes(cfg: GeneratorConfig) -> dict:
    v, d, h, z = cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim, cfg.image_dim
    return {
        "embed": (v, d),
        "enc.wx": (d, 4 * h), "enc.wh": (h, 4 * h), "enc.b": (4 * h,),
        "attr.w1": (d, h), "attr.b1": (h,), "attr.w2": (h, h), "attr.b2": (h,),
        "img.w": (z, h), "img.b": (h,),
        "attn.wq": (h, h), "attn.wk": (h, h), "attn.b": (h,), "attn.v": (h,),
        "fuse.w": (3 * h, h), "fuse.b": (h,),
        "dec.wx": (d + h, 4 * h), "dec.wh": (h, 4 * h), "dec.b": (4 * h,),
        "out.w": (h, v), "out.b": (v,),
    }


def _fan_ins(cfg: GeneratorConfig) -> dict:
    d, h, z = cfg.embed_dim, cfg.hidden_dim, cfg.image_dim
    return {
        "embed": d,
        "enc.wx": d, "enc.wh": h, "enc.b": d + h,
        "attr.w1": d, "attr.b1": d, "attr.w2": h, "attr.b2": h,
        "img.w": z, "img.b": z,
        "attn.wq": 2 * h, "attn.wk": 2 * h, "attn.b": 2 * h, "attn.v": h,
        "fuse.w": 3 * h, "fuse.b": 3 * h,
        "dec.wx": d + 2 * h, "dec.wh": h, "dec.b": d + 2 * h,
        "out.w": h, "out.b": h,
    }


class DimMismatchError(ValueError):
    """Stored parameters disagree with the configured model dimensions."""


def check_shapes(store: ParamStore, expected: dict, owner: str):
    for name, shape in expected.items():
        if name not in store:
            raise DimMismatchError(f"{owner}: missing parameter {name!r}")
        found = store[name].shape
        if tuple(found) != tuple(shape):
            raise DimMismatchError(
                f"{owner}: parameter {name!r} shape mismatch, "
                f"expected {tuple(shape)}, found {tuple(found)}"
            )
    extra = [n for n in store.names() if n not in expected]
    if extra:
        raise DimMismatchError(f"{owner}: unexpected parameters {extra}")


class Generator:
    """The title policy. Holds config plus a ParamStore named per subsystem."""

    def __init__(self, config: GeneratorConfig, params: ParamStore | None = None,
                 seed: int = 0):
        self.config = config
        if params is None:
            params = ParamStore()
            rng = make_rng(seed, _STREAM_INIT)
            fans = _fan_ins(config)
            for name, shape in _expected_shapes(config).items():
                params.add(name, init_uniform(rng, shape, fans[name]))
        else:
            check_shapes(params, _expected_shapes(config), "generator")
        self.params = params
        # PAD can never be emitted: a finite -1e30 keeps tensors NaN/Inf free
        # while exp() underflows its probability to exactly zero.
        mask = np.zeros(config.vocab_size)
        mask[PAD] = -1e30
        self._pad_mask = Tensor(mask)

    # ----- taped path -------------------------------------------------

    def lstm_cell(self, prefix: str, x: Tensor, h: Tensor, c: Tensor):
        """Standard LSTM gating for the parameter group `prefix`."""
        return taped_lstm_cell(self.params, prefix, self.config.hidden_dim, x, h, c)

    def _encode_title_full(self, title_ids):
        if not title_ids:
            raise ValueError("cannot encode an empty title")
        hs = self.config.hidden_dim
        h = Tensor(np.zeros(hs))
        c = Tensor(np.zeros(hs))
        rows = []
        for tok in title_ids:
            x = T.lookup(self.params["embed"], int(tok))
            h, c = self.lstm_cell("enc", x, h, c)
            rows.append(T.reshape(h, (1, hs)))
        return T.concat(rows, axis=0), h, c

    def encode_title(self, title_ids) -> Tensor:
        """Run the encoder LSTM over the long title; returns (K, H) states."""
        return self._encode_title_full(title_ids)[0]

    def encode_attrs(self, attr_ids) -> Tensor:
        """Mean-pool tag embeddings, then dense -> tanh -> dense."""
        p = self.params
        if attr_ids:
            emb = T.lookup(p["embed"], list(attr_ids))
            weights = Tensor(np.full(len(attr_ids), 1.0 / len(attr_ids)))
            pooled = T.matmul(weights, emb)
        else:
            pooled = Tensor(np.zeros(self.config.embed_dim))
        hidden = T.tanh(T.add(T.matmul(pooled, p["attr.w1"]), p["attr.b1"]))
        return T.add(T.matmul(hidden, p["attr.w2"]), p["attr.b2"])

    def project_image(self, features) -> Tensor:
        features = np.asarray(features, dtype=np.float64)
        if features.shape != (self.config.image_dim,):
            raise ValueError(
                f"image features must have length {self.config.image_dim}, "
                f"got shape {features.shape}"
            )
        p = self.params
        return T.tanh(T.add(T.matmul(Tensor(features), p["img.w"]), p["img.b"]))

    def encode(self, inputs: RecordInputs) -> EncoderOutput:
        """Encode all three modalities; disabled ones contribute zero vectors."""
        hs = self.config.hidden_dim
        states, final_h, final_c = self._encode_title_full(inputs.title_ids)
        attrs = (self.encode_attrs(inputs.attr_ids) if self.config.use_attrs
                 else Tensor(np.zeros(hs)))
        image = (self.project_image(inputs.image) if self.config.use_image
                 else Tensor(np.zeros(hs)))
        return EncoderOutput(states, attrs, image, final_h, final_c)

    def attend(self, h_prev: Tensor, title_states: Tensor):
        """Concat-scorer attention: v . tanh(W [h; o_k] + b) per position.

        Returns (context, weights); the context is the weights' convex
        combination of the title states.
        """
        if title_states.shape[0] == 0:
            raise ValueError("cannot attend over zero encoder states")
        p = self.params
        pre = T.add(T.add(T.matmul(title_states, p["attn.wk"]),
                          T.matmul(h_prev, p["attn.wq"])), p["attn.b"])
        scores = T.matmul(T.tanh(pre), p["attn.v"])
        alpha = T.softmax(scores)
        return T.matmul(alpha, title_states), alpha

    def fuse(self, context: Tensor, image: Tensor, attrs: Tensor) -> Tensor:
        p = self.params
        joint = T.concat([context, image, attrs])
        return T.tanh(T.add(T.matmul(joint, p["fuse.w"]), p["fuse.b"]))

    def initial_state(self, enc: EncoderOutput) -> DecoderState:
        """Decoder starts from the encoder's final (h, c)."""
        return DecoderState(enc.final_h, enc.final_c, 0)

    def decode_step(self, state: DecoderState, prev_token: int,
                    enc: EncoderOutput) -> StepOutput:
        """One decoder step conditioned on the previous token."""
        p = self.params
        context, alpha = self.attend(state.h, enc.title_states)
        fused = self.fuse(context, enc.image, enc.attrs)
        x = T.concat([T.lookup(p["embed"], int(prev_token)), fused])
        h2, c2 = self.lstm_cell("dec", x, state.h, state.c)
        logits = T.add(T.add(T.matmul(h2, p["out.w"]), p["out.b"]), self._pad_mask)
        dist = T.softmax(logits)
        return StepOutput(DecoderState(h2, c2, state.t + 1), dist, alpha, fused)

    def sequence_logprob(self, inputs: RecordInputs, target_ids,
                         append_eos: bool = True):
        """Teacher-forced log-probability of a token sequence.

        Returns (total, per_step) where per_step are scalar tensors for each
        target. With append_eos the sequence is scored through its EOS.
        """
        targets = [int(t) for t in target_ids]
        if not targets and not append_eos:
            raise ValueError("cannot score an empty sequence")
        if append_eos:
            targets = targets + [EOS]
        enc = self.encode(inputs)
        state = self.initial_state(enc)
        prev = BOS
        steps = []
        total = None
        for tgt in targets:
            out = self.decode_step(state, prev, enc)
            lp = T.log(T.pick(out.dist, tgt))
            steps.append(lp)
            total = lp if total is None else T.add(total, lp)
            state = out.state
            prev = tgt
        return total, steps

    # ----- kernel path ------------------------------------------------

    def fast_encode(self, inputs: RecordInputs) -> FastEncoding:
        """Tape-free encoder pass over raw arrays (used by sampling/rollouts)."""
        if not inputs.title_ids:
            raise ValueError("cannot encode an empty title")
        cfg = self.config
        p = self.params
        emb = p["embed"].data
        states, final_c = kernels.lstm_sequence(
            emb[np.asarray(inputs.title_ids, dtype=np.intp)],
            p["enc.wx"].data, p["enc.wh"].data, p["enc.b"].data,
        )
        if cfg.use_attrs:
            if inputs.attr_ids:
                pooled = emb[np.asarray(inputs.attr_ids, dtype=np.intp)].sum(axis=0)
                pooled = pooled / len(inputs.attr_ids)
            else:
                pooled = np.zeros(cfg.embed_dim)
            hidden = np.tanh(pooled @ p["attr.w1"].data + p["attr.b1"].data)
            attrs = hidden @ p["attr.w2"].data + p["attr.b2"].data
        else:
            attrs = np.zeros(cfg.hidden_dim)
        if cfg.use_image:
            feats = np.asarray(inputs.image, dtype=np.float64)
            if feats.shape != (cfg.image_dim,):
                raise ValueError(
                    f"image features must have length {cfg.image_dim}, "
                    f"got shape {feats.shape}"
                )
            image = np.tanh(feats @ p["img.w"].data + p["img.b"].data)
        else:
            image = np.zeros(cfg.hidden_dim)
        return FastEncoding(states, attrs, image, states[-1].copy(), final_c)

    def _fast_step(self, h, c, prev_token: int, enc: FastEncoding,
                   inv_temp: float = 1.0):
        p = self.params
        return kernels.decode_step(
            h, c, p["embed"].data[prev_token],
            enc.title_states, enc.image, enc.attrs,
            p["attn.wq"].data, p["attn.wk"].data, p["attn.b"].data, p["attn.v"].data,
            p["fuse.w"].data, p["fuse.b"].data,
            p["dec.wx"].data, p["dec.wh"].data, p["dec.b"].data,
            p["out.w"].data, p["out.b"].data, PAD, inv_temp,
        )

    def replay(self, enc: FastEncoding, tokens):
        """Advance the decoder through given tokens; returns (h, c, prev)."""
        h, c = enc.final_h, enc.final_c
        prev = BOS
        for tok in tokens:
            h, c, _ = self._fast_step(h, c, prev, enc)
            prev = int(tok)
        return h, c, prev

    def fast_logprobs(self, enc: FastEncoding, tokens) -> list:
        """Tape-free log pi(token) per step of a teacher-forced pass."""
        h, c = enc.final_h, enc.final_c
        prev = BOS
        out = []
        for tok in tokens:
            h, c, probs = self._fast_step(h, c, prev, enc)
            out.append(float(np.log(probs[int(tok)])))
            prev = int(tok)
        return out

    def continue_from(self, enc: FastEncoding, h, c, prev: int, budget: int,
                      rng, temperature: float = 1.0) -> list:
        """Sample up to `budget` further tokens; stops early at EOS."""
        inv_temp = 1.0 / float(temperature)
        out = []
        for _ in range(budget):
            h, c, probs = self._fast_step(h, c, prev, enc, inv_temp)
            tok = int(kernels.categorical(probs, rng.random()))
            if tok == EOS:
                break
            out.append(tok)
            prev = tok
        return out

    def generate(self, inputs: RecordInputs, mode: str = "greedy",
                 temperature: float = 1.0, seed: int = 0,
                 max_len: int | None = None) -> list:
        """Decode a short title; returns token ids without BOS/EOS.

        Greedy picks the argmax (ties resolved to the lowest token id);
        sampling draws from the temperature-scaled distribution with a
        deterministic stream derived from `seed`.
        """
        if mode not in ("greedy", "sample"):
            raise ValueError(f"unknown decode mode {mode!r}")
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        max_len = self.config.max_len if max_len is None else int(max_len)
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        enc = self.fast_encode(inputs)
        if mode == "sample":
            rng = make_rng(seed, _STREAM_SAMPLE)
            return self.continue_from(enc, enc.final_h, enc.final_c, BOS,
                                      max_len, rng, temperature)
        h, c = enc.final_h, enc.final_c
        prev = BOS
        out = []
        for _ in range(max_len):
            h, c, probs = self._fast_step(h, c, prev, enc)
            tok = int(np.argmax(probs))
            if tok == EOS:
                break
            out.append(tok)
            prev = tok
        return out
