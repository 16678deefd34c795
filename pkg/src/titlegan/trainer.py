"""Training orchestration: MLE pretraining, rollout rewards, adversarial loop.

The generator is first fit by teacher-forced maximum likelihood, then tuned
with REINFORCE: each sampled title gets per-step rewards from the
discriminator, where a prefix's reward is the mean discriminator score of
Monte Carlo completions under the current policy and the final step is scored
directly. The discriminator is refreshed on gold titles versus fresh samples.
Generator updates use the standard score-function surrogate
-(reward - baseline) * log pi(token); the discriminator stays frozen during
generator steps.

Titles are EOS-terminated before discriminator scoring so that even an empty
sample is scoreable; gold titles get the same treatment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import EOS, Vocab
from .discriminator import Discriminator
from .generator import Generator, RecordInputs
from .params import (ParamStore, clip_global_norm, derive_seed, make_optimizer,
                     make_rng, save_checkpoint)
from .rouge import corpus_rouge
from .tensor import GradTape
from . import tensor as T

_STREAM_EPOCH = 31
_STREAM_SAMPLE = 32
_STREAM_REWARD = 33
_STREAM_DISC = 34
_STREAM_BATCH = 35
_STREAM_ROLLOUT = 36


@dataclass
class TrainerConfig:
    pretrain_epochs: int = 10
    rounds: int = 5
    g_steps: int = 1
    d_steps: int = 1
    batch_size: int = 16
    n_rollouts: int = 4
    gen_lr: float = 0.002
    disc_lr: float = 0.002
    adv_gen_lr: float | None = None  # defaults to gen_lr when unset
    max_len: int = 12
    clip_norm: float = 5.0
    temperature: float = 1.0
    seed: int = 0
    baseline: str = "none"  # none | moving-average
    baseline_decay: float = 0.9
    disc_loss_mode: str = "cross-entropy"  # cross-entropy | paper-literal
    optimizer: str = "sgd"  # sgd | adam

    def validate(self):
        if self.pretrain_epochs < 0 or self.rounds < 0:
            raise ValueError("pretrain_epochs and rounds must be >= 0")
        for name in ("g_steps", "d_steps", "batch_size", "n_rollouts", "max_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.baseline not in ("none", "moving-average"):
            raise ValueError(f"unknown baseline mode {self.baseline!r}")
        if self.disc_loss_mode not in ("cross-entropy", "paper-literal"):
            raise ValueError(f"unknown disc loss mode {self.disc_loss_mode!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        return self


@dataclass
class RewardTrace:
    """Per-step rewards and log-probs for one sampled title."""

    sequence: list
    rewards: list
    logprobs: list

    def __post_init__(self):
        assert len(self.sequence) == len(self.rewards) == len(self.logprobs)


def record_inputs(vocab: Vocab, record) -> RecordInputs:
    return RecordInputs(
        title_ids=vocab.encode(record.long_title),
        attr_ids=vocab.encode(record.attr_tags),
        image=np.asarray(record.image_features, dtype=np.float64),
    )


def _score_title(disc, tokens) -> float:
    """Discriminator reward for a title; EOS-terminated by convention."""
    return float(disc.score_fast(list(tokens) + [EOS]))


def mc_rollout(gen: Generator, prefix, inputs: RecordInputs, n_rollouts: int,
               max_len: int, seed: int, temperature: float = 1.0) -> list:
    """Complete a prefix n_rollouts times under the current policy.

    Completions stop at EOS or max_len total tokens; rollout n uses the
    stream derived from (seed, n). A prefix already at max_len is returned
    unchanged for every rollout.
    """
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    prefix = [int(t) for t in prefix]
    if len(prefix) >= max_len:
        return [list(prefix) for _ in range(n_rollouts)]
    enc = gen.fast_encode(inputs)
    h, c, prev = gen.replay(enc, prefix)
    out = []
    for n in range(n_rollouts):
        rng = make_rng(seed, _STREAM_ROLLOUT, n)
        cont = gen.continue_from(enc, h, c, prev, max_len - len(prefix), rng,
                                 temperature)
        out.append(prefix + cont)
    return out


def step_rewards(gen: Generator, disc, sequence, inputs: RecordInputs,
                 n_rollouts: int, seed: int, max_len: int | None = None,
                 temperature: float = 1.0) -> RewardTrace:
    """Per-step rewards for a sampled title.

    For t < N the reward is the mean discriminator score over n_rollouts
    Monte Carlo completions of the prefix s_1..s_t; the final step is the
    score of the full title with no rollout.
    """
    sequence = [int(t) for t in sequence]
    max_len = gen.config.max_len if max_len is None else max_len
    n = len(sequence)
    rewards = []
    for t in range(1, n):
        completions = mc_rollout(gen, sequence[:t], inputs, n_rollouts, max_len,
                                 derive_seed(seed, _STREAM_REWARD, t), temperature)
        rewards.append(
            sum(_score_title(disc, comp) for comp in completions) / n_rollouts
        )
    if n:
        rewards.append(_score_title(disc, sequence))
    enc = gen.fast_encode(inputs)
    logprobs = gen.fast_logprobs(enc, sequence)
    return RewardTrace(sequence=sequence, rewards=rewards, logprobs=logprobs)


def pg_gradients(gen: Generator, disc, batch, config: TrainerConfig, seed: int,
                 baseline: float = 0.0):
    """REINFORCE surrogate gradients for one batch of RecordInputs.

    Samples one title per record, scores it with step_rewards, and
    differentiates -(1/B) sum_records sum_t (r_t - baseline) log pi(s_t).
    Returns (grads, mean terminal reward, traces).
    """
    if not batch:
        raise ValueError("empty batch")
    traces = []
    terminal = []
    with GradTape() as tape:
        surrogate_terms = []
        for idx, inputs in enumerate(batch):
            sample_seed = derive_seed(seed, _STREAM_SAMPLE, idx)
            seq = gen.generate(inputs, mode="sample", temperature=config.temperature,
                               seed=sample_seed, max_len=config.max_len)
            trace = step_rewards(gen, disc, seq, inputs, config.n_rollouts,
                                 derive_seed(seed, _STREAM_REWARD, idx),
                                 config.max_len, config.temperature)
            traces.append(trace)
            terminal.append(trace.rewards[-1] if trace.rewards
                            else _score_title(disc, []))
            if not seq:
                continue
            _, steps = gen.sequence_logprob(inputs, seq, append_eos=False)
            for lp, r in zip(steps, trace.rewards):
                surrogate_terms.append(T.scale(lp, -(r - baseline)))
        if surrogate_terms:
            total = surrogate_terms[0]
            for term in surrogate_terms[1:]:
                total = T.add(total, term)
            loss = T.scale(total, 1.0 / len(batch))
            if not math.isfinite(loss.item()):
                raise FloatingPointError(
                    f"non-finite policy-gradient surrogate ({loss.item()}) on a "
                    f"batch of {len(batch)}; rewards={[t.rewards for t in traces]}"
                )
            grads = tape.gradients(loss, gen.params.tensors)
        else:
            grads = {n: np.zeros(t.shape) for n, t in gen.params.items()}
    return grads, float(np.mean(terminal)), traces


def generator_pg_step(gen: Generator, disc, batch, config: TrainerConfig,
                      opt, seed: int, baseline_state: dict | None = None) -> float:
    """One REINFORCE update of the generator; returns the mean terminal reward.

    The discriminator is only read, never written. baseline_state, when the
    moving-average baseline is on, carries {"value": float} across steps and
    is updated after the gradients are taken.
    """
    baseline = 0.0
    if config.baseline == "moving-average" and baseline_state is not None:
        baseline = baseline_state.get("value", 0.0)
    grads, mean_reward, _ = pg_gradients(gen, disc, batch, config, seed, baseline)
    grads, _ = clip_global_norm(grads, config.clip_norm)
    opt.step(gen.params, grads)
    if config.baseline == "moving-average" and baseline_state is not None:
        decay = config.baseline_decay
        baseline_state["value"] = decay * baseline + (1.0 - decay) * mean_reward
    return mean_reward


def discriminator_step(disc: Discriminator, gen: Generator, real_batch,
                       config: TrainerConfig, opt, seed: int) -> float:
    """One discriminator update on gold titles vs fresh samples; returns loss."""
    if not real_batch:
        raise ValueError("empty real batch")
    real_seqs = []
    fake_seqs = []
    for idx, (inputs, gold_ids) in enumerate(real_batch):
        real_seqs.append(list(gold_ids) + [EOS])
        fake = gen.generate(inputs, mode="sample", temperature=config.temperature,
                            seed=derive_seed(seed, _STREAM_DISC, idx),
                            max_len=config.max_len)
        fake_seqs.append(fake + [EOS])
    with GradTape() as tape:
        loss = disc.disc_loss(real_seqs, fake_seqs, config.disc_loss_mode)
        grads = tape.gradients(loss, disc.params.tensors)
    grads, _ = clip_global_norm(grads, config.clip_norm)
    opt.step(disc.params, grads)
    return loss.item()


def mle_loss(gen: Generator, pairs):
    """Teacher-forced NLL over (inputs, gold ids) pairs.

    Returns (loss tensor = total NLL / total tokens, token count); the EOS
    after each gold title counts as a predicted token.
    """
    total = None
    n_tokens = 0
    for inputs, gold_ids in pairs:
        logprob, steps = gen.sequence_logprob(inputs, gold_ids, append_eos=True)
        total = logprob if total is None else T.add(total, logprob)
        n_tokens += len(steps)
    return T.scale(T.neg(total), 1.0 / n_tokens), n_tokens


def eval_nll(gen: Generator, pairs) -> float:
    """Mean per-token NLL without touching parameters."""
    loss, _ = mle_loss(gen, pairs)
    return loss.item()


def pretrain_mle(gen: Generator, records, vocab: Vocab, config: TrainerConfig):
    """MLE pretraining on gold short titles.

    Returns a loss log: entry 0 is the pre-update evaluation NLL, then one
    token-weighted mean training NLL per epoch.
    """
    if not records:
        raise ValueError("empty training set")
    config.validate()
    pairs = [(record_inputs(vocab, r), vocab.encode(r.short_title)) for r in records]
    log = [{"epoch": 0, "nll": eval_nll(gen, pairs)}]
    opt = make_optimizer(config.optimizer, config.gen_lr)
    for epoch in range(1, config.pretrain_epochs + 1):
        order = make_rng(config.seed, _STREAM_EPOCH, epoch).permutation(len(pairs))
        nll_sum = 0.0
        tok_sum = 0
        for start in range(0, len(pairs), config.batch_size):
            batch = [pairs[i] for i in order[start : start + config.batch_size]]
            with GradTape() as tape:
                loss, n_tokens = mle_loss(gen, batch)
                grads = tape.gradients(loss, gen.params.tensors)
            grads, _ = clip_global_norm(grads, config.clip_norm)
            opt.step(gen.params, grads)
            nll_sum += loss.item() * n_tokens
            tok_sum += n_tokens
        log.append({"epoch": epoch, "nll": nll_sum / tok_sum})
    return log


def evaluate_rouge(gen: Generator, records, vocab: Vocab,
                   max_len: int | None = None) -> dict:
    """Corpus ROUGE of greedy decodes against gold short titles."""
    pairs = []
    for rec in records:
        ids = gen.generate(record_inputs(vocab, rec), mode="greedy",
                           max_len=max_len)
        pairs.append((vocab.decode(ids), rec.short_title))
    return corpus_rouge(pairs)


def _disc_gap(disc: Discriminator, gen: Generator, pairs, config: TrainerConfig,
              seed: int) -> tuple:
    """Mean real and fake scores on a probe batch (post-update diagnostic)."""
    reals = []
    fakes = []
    for idx, (inputs, gold_ids) in enumerate(pairs):
        reals.append(_score_title(disc, gold_ids))
        fake = gen.generate(inputs, mode="sample", temperature=config.temperature,
                            seed=derive_seed(seed, _STREAM_DISC, 1_000_000 + idx),
                            max_len=config.max_len)
        fakes.append(_score_title(disc, fake))
    return float(np.mean(reals)), float(np.mean(fakes))


def adversarial_train(gen: Generator, disc: Discriminator, train_records,
                      valid_records, vocab: Vocab, config: TrainerConfig,
                      checkpoint_dir=None) -> list:
    """Alternate generator REINFORCE steps and discriminator updates.

    Per round: g_steps policy-gradient updates, then d_steps discriminator
    updates, then validation ROUGE and a real-vs-fake probe. Returns one
    metrics dict per round; checkpoints each round when checkpoint_dir is set.
    """
    config.validate()
    if not train_records:
        raise ValueError("empty training set")
    pairs = [(record_inputs(vocab, r), vocab.encode(r.short_title))
             for r in train_records]
    gen_lr = config.adv_gen_lr if config.adv_gen_lr is not None else config.gen_lr
    gen_opt = make_optimizer(config.optimizer, gen_lr)
    disc_opt = make_optimizer(config.optimizer, config.disc_lr)
    baseline_state = {"value": 0.0}
    metrics = []
    for rnd in range(1, config.rounds + 1):
        reward_acc = []
        for g in range(config.g_steps):
            order = make_rng(config.seed, _STREAM_BATCH, rnd, g).permutation(len(pairs))
            batch = [pairs[i][0] for i in order[: config.batch_size]]
            reward_acc.append(
                generator_pg_step(gen, disc, batch, config, gen_opt,
                                  derive_seed(config.seed, rnd, g), baseline_state)
            )
        loss_acc = []
        for d in range(config.d_steps):
            order = make_rng(config.seed, _STREAM_BATCH, rnd, 10_000 + d).permutation(
                len(pairs))
            batch = [pairs[i] for i in order[: config.batch_size]]
            loss_acc.append(
                discriminator_step(disc, gen, batch, config, disc_opt,
                                   derive_seed(config.seed, rnd, 10_000 + d))
            )
        probe = pairs[: min(len(pairs), 64)]
        real_mean, fake_mean = _disc_gap(disc, gen, probe, config,
                                         derive_seed(config.seed, rnd))
        entry = {
            "round": rnd,
            "mean_reward": float(np.mean(reward_acc)),
            "disc_loss": float(np.mean(loss_acc)),
            "disc_real": real_mean,
            "disc_fake": fake_mean,
        }
        if valid_records:
            scores = evaluate_rouge(gen, valid_records, vocab, config.max_len)
            entry["rouge1"] = scores["rouge1"].recall
            entry["rouge2"] = scores["rouge2"].recall
            entry["rougeL"] = scores["rougeL"].recall
        else:
            entry["rouge1"] = entry["rouge2"] = entry["rougeL"] = None
        metrics.append(entry)
        if checkpoint_dir is not None:
            path = f"{checkpoint_dir}/round_{rnd:03d}.ckpt"
            save_checkpoint(path, {"gen": gen.params, "disc": disc.params},
                            config.seed, rnd)
    return metrics
