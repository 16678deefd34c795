import math

import numpy as np
import pytest

from helpers import (ARM_A, ARM_B, FixedRewardDisc, bandit_exact_gradient,
                     bandit_inputs, bandit_policy, make_bandit_generator)
from titlegan.corpus import EOS, SynthConfig, build_vocab, synth_generate
from titlegan.discriminator import Discriminator, DiscriminatorConfig
from titlegan.generator import Generator, GeneratorConfig
from titlegan.params import SGD, make_optimizer
from titlegan.trainer import (RewardTrace, TrainerConfig, adversarial_train,
                              discriminator_step, eval_nll, generator_pg_step,
                              mc_rollout, pg_gradients, pretrain_mle,
                              record_inputs, step_rewards)


@pytest.fixture(scope="module")
def small_world():
    records = synth_generate(SynthConfig(n_records=30, seed=8))
    vocab = build_vocab(records, 1)
    return records, vocab


def small_gen(vocab, seed=0, d=8, h=8, max_len=8):
    return Generator(GeneratorConfig(vocab_size=len(vocab), embed_dim=d,
                                     hidden_dim=h, image_dim=16, max_len=max_len),
                     seed=seed)


def small_disc(vocab, seed=0, d=8, h=8):
    return Discriminator(DiscriminatorConfig(vocab_size=len(vocab), embed_dim=d,
                                             hidden_dim=h), seed=seed)


# ---- Monte Carlo rollouts ---------------------------------------------------

def test_mc_rollout_prefix_at_max_len(small_world):
    records, vocab = small_world
    gen = small_gen(vocab)
    inputs = record_inputs(vocab, records[0])
    prefix = [4, 5, 6]
    outs = mc_rollout(gen, prefix, inputs, n_rollouts=4, max_len=3, seed=1)
    assert outs == [prefix] * 4


def test_mc_rollout_counts_and_determinism(small_world):
    records, vocab = small_world
    gen = small_gen(vocab)
    inputs = record_inputs(vocab, records[0])
    one = mc_rollout(gen, [4], inputs, n_rollouts=1, max_len=6, seed=3)
    assert len(one) == 1
    many = mc_rollout(gen, [4], inputs, n_rollouts=5, max_len=6, seed=3)
    again = mc_rollout(gen, [4], inputs, n_rollouts=5, max_len=6, seed=3)
    assert many == again
    assert all(comp[:1] == [4] and len(comp) <= 6 for comp in many)
    assert all(EOS not in comp for comp in many)


# ---- per-step rewards --------------------------------------------------------

def test_step_rewards_constant_discriminator(small_world):
    records, vocab = small_world
    gen = small_gen(vocab)
    inputs = record_inputs(vocab, records[1])
    disc = FixedRewardDisc(reward_a=0.37, reward_b=0.37, default=0.37)
    trace = step_rewards(gen, disc, [4, 5, 6], inputs, n_rollouts=3, seed=5)
    assert trace.rewards == pytest.approx([0.37, 0.37, 0.37])
    assert len(trace.logprobs) == 3
    assert all(lp < 0 for lp in trace.logprobs)


def test_step_rewards_single_token(small_world):
    records, vocab = small_world
    gen = small_gen(vocab)
    inputs = record_inputs(vocab, records[2])
    disc = small_disc(vocab, seed=4)
    trace = step_rewards(gen, disc, [5], inputs, n_rollouts=2, seed=5)
    assert len(trace.rewards) == 1
    assert trace.rewards[0] == pytest.approx(disc.score_fast([5, EOS]))
    assert 0.0 < trace.rewards[0] < 1.0


def test_step_rewards_n1_matches_single_rollout(small_world):
    records, vocab = small_world
    gen = small_gen(vocab)
    inputs = record_inputs(vocab, records[3])
    disc = small_disc(vocab, seed=2)
    seq = [4, 6]
    trace = step_rewards(gen, disc, seq, inputs, n_rollouts=1, seed=9, max_len=6)
    from titlegan.params import derive_seed
    from titlegan.trainer import _STREAM_REWARD

    completions = mc_rollout(gen, seq[:1], inputs, 1, 6,
                             derive_seed(9, _STREAM_REWARD, 1))
    want = disc.score_fast(completions[0] + [EOS])
    assert trace.rewards[0] == pytest.approx(want)


def test_reward_trace_lengths_validated():
    with pytest.raises(AssertionError):
        RewardTrace(sequence=[1], rewards=[0.5, 0.5], logprobs=[-1.0])


# ---- policy-gradient steps ----------------------------------------------------

def test_zero_rewards_zero_gradient(small_world):
    records, vocab = small_world
    gen = small_gen(vocab)
    disc = FixedRewardDisc(reward_a=0.0, reward_b=0.0, default=0.0)
    cfg = TrainerConfig(batch_size=2, n_rollouts=2, max_len=6)
    batch = [record_inputs(vocab, r) for r in records[:2]]
    grads, reward, _ = pg_gradients(gen, disc, batch, cfg, seed=3)
    assert reward == 0.0
    assert all(not np.any(g) for g in grads.values())
    before = gen.params.state_bytes()
    generator_pg_step(gen, disc, batch, cfg, SGD(0.5), seed=3)
    assert gen.params.state_bytes() == before


def test_discriminator_frozen_during_generator_step(small_world):
    records, vocab = small_world
    gen = small_gen(vocab, seed=1)
    disc = small_disc(vocab, seed=2)
    cfg = TrainerConfig(batch_size=3, n_rollouts=2, max_len=6)
    batch = [record_inputs(vocab, r) for r in records[:3]]
    disc_before = disc.params.state_bytes()
    gen_before = gen.params.state_bytes()
    reward = generator_pg_step(gen, disc, batch, cfg, SGD(0.05), seed=1)
    assert disc.params.state_bytes() == disc_before
    assert gen.params.state_bytes() != gen_before
    assert 0.0 < reward < 1.0


def test_bandit_estimator_is_unbiased_smoke():
    gen = make_bandit_generator(0.4, -0.2)
    disc = FixedRewardDisc()
    cfg = TrainerConfig(batch_size=1, n_rollouts=1, max_len=1)
    inputs = bandit_inputs()
    exact = bandit_exact_gradient(gen, disc)
    n = 3000
    samples = np.zeros((n, 2))
    for i in range(n):
        grads, _, _ = pg_gradients(gen, disc, [inputs], cfg, seed=i)
        g = -grads["out.b"]  # surrogate is minimized; estimator targets ascent
        samples[i] = (g[ARM_A], g[ARM_B])
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(n)
    for j, arm in enumerate((ARM_A, ARM_B)):
        assert abs(mean[j] - exact[arm]) < 3.5 * se[j], (
            f"arm {arm}: mean {mean[j]:.5f} vs exact {exact[arm]:.5f} se {se[j]:.5f}")


def test_bandit_training_prefers_better_arm():
    gen = make_bandit_generator(0.0, 0.0)
    disc = FixedRewardDisc(reward_a=0.9, reward_b=0.1)
    cfg = TrainerConfig(batch_size=8, n_rollouts=1, max_len=1, gen_lr=0.4)
    opt = SGD(cfg.gen_lr)
    inputs = [bandit_inputs()] * cfg.batch_size
    for step in range(250):
        generator_pg_step(gen, disc, inputs, cfg, opt, seed=step)
    probs = bandit_policy(gen)
    assert probs[ARM_A] > 0.95


def test_moving_average_baseline_kills_constant_reward_gradient():
    gen = make_bandit_generator(0.3, -0.1)
    disc = FixedRewardDisc(reward_a=0.7, reward_b=0.7, default=0.7)
    cfg = TrainerConfig(batch_size=4, n_rollouts=1, max_len=1,
                        baseline="moving-average")
    inputs = [bandit_inputs()] * 4
    state = {"value": 0.0}
    opt = SGD(0.0)  # keep the policy fixed; only the baseline moves
    for step in range(80):
        generator_pg_step(gen, disc, inputs, cfg, opt, seed=step, baseline_state=state)
    assert state["value"] == pytest.approx(0.7, abs=1e-3)
    grads, _, _ = pg_gradients(gen, disc, inputs, cfg, seed=999,
                               baseline=state["value"])
    assert np.max(np.abs(grads["out.b"])) < 1e-3


# ---- MLE pretraining -----------------------------------------------------------

def test_pretrain_zero_epochs_is_noop(small_world):
    records, vocab = small_world
    gen = small_gen(vocab)
    before = gen.params.state_bytes()
    log = pretrain_mle(gen, records, vocab,
                       TrainerConfig(pretrain_epochs=0, batch_size=8))
    assert gen.params.state_bytes() == before
    assert len(log) == 1 and log[0]["epoch"] == 0


def test_pretrain_initial_loss_near_log_vocab(small_world):
    records, vocab = small_world
    gen = small_gen(vocab)
    pairs = [(record_inputs(vocab, r), vocab.encode(r.short_title)) for r in records]
    nll = eval_nll(gen, pairs)
    assert nll == pytest.approx(math.log(len(vocab)), rel=0.06)


def test_pretrain_loss_decreases(small_world):
    records, vocab = small_world
    gen = small_gen(vocab, seed=3)
    cfg = TrainerConfig(pretrain_epochs=5, batch_size=8, gen_lr=0.01,
                        optimizer="adam", seed=3)
    log = pretrain_mle(gen, records, vocab, cfg)
    losses = [e["nll"] for e in log]
    assert len(losses) == 6
    for earlier, later in zip(losses, losses[1:]):
        assert later <= earlier + 1e-6
    assert losses[-1] < 0.5 * losses[0]


# ---- discriminator updates ------------------------------------------------------

def test_discriminator_step_zero_lr(small_world):
    records, vocab = small_world
    gen = small_gen(vocab, seed=1)
    disc = small_disc(vocab, seed=5)
    cfg = TrainerConfig(batch_size=4, max_len=6)
    batch = [(record_inputs(vocab, r), vocab.encode(r.short_title))
             for r in records[:4]]
    before = disc.params.state_bytes()
    loss = discriminator_step(disc, gen, batch, cfg, SGD(0.0), seed=2)
    assert disc.params.state_bytes() == before
    assert math.isfinite(loss)


def test_discriminator_learns_against_silly_generator(small_world):
    records, vocab = small_world
    gen = small_gen(vocab, seed=1)
    # rig: the generator emits one repeated noise token
    gen.params["out.w"].data = np.zeros_like(gen.params["out.w"].data)
    bias = np.zeros(len(vocab))
    bias[:4] = -50.0
    bias[5] = 8.0
    gen.params["out.b"].data = bias
    disc = small_disc(vocab, seed=3)
    cfg = TrainerConfig(batch_size=6, max_len=6, disc_lr=0.2)
    opt = SGD(cfg.disc_lr)
    pool = [(record_inputs(vocab, r), vocab.encode(r.short_title)) for r in records]
    for step in range(200):
        batch = [pool[i % len(pool)] for i in range(step * 6, step * 6 + 6)]
        discriminator_step(disc, gen, batch, cfg, opt, seed=step)
        if step >= 20 and step % 10 == 0:
            reals = np.mean([disc.score_fast(p[1] + [EOS]) for p in pool])
            fakes = np.mean([disc.score_fast([5] * 6 + [EOS])])
            if reals - fakes > 0.5:
                break
    reals = np.mean([disc.score_fast(p[1] + [EOS]) for p in pool])
    fakes = disc.score_fast([5] * 6 + [EOS])
    assert reals - fakes > 0.5


# ---- adversarial loop -------------------------------------------------------------

def test_adversarial_zero_rounds_noop(small_world):
    records, vocab = small_world
    gen = small_gen(vocab, seed=1)
    disc = small_disc(vocab, seed=2)
    g0, d0 = gen.params.state_bytes(), disc.params.state_bytes()
    cfg = TrainerConfig(rounds=0, batch_size=4, n_rollouts=2, max_len=6)
    metrics = adversarial_train(gen, disc, records, [], vocab, cfg)
    assert metrics == []
    assert gen.params.state_bytes() == g0
    assert disc.params.state_bytes() == d0


def test_adversarial_metrics_and_determinism(small_world, tmp_path):
    records, vocab = small_world

    def run():
        gen = small_gen(vocab, seed=1)
        disc = small_disc(vocab, seed=2)
        cfg = TrainerConfig(rounds=3, batch_size=4, n_rollouts=2, max_len=6,
                            gen_lr=0.01, disc_lr=0.05, seed=11)
        return adversarial_train(gen, disc, records[:20], records[20:24], vocab,
                                 cfg, checkpoint_dir=None)

    first = run()
    second = run()
    assert first == second
    assert len(first) == 3
    for entry in first:
        assert 0.0 < entry["mean_reward"] < 1.0
        assert math.isfinite(entry["disc_loss"])
        assert 0.0 <= entry["rouge1"] <= 1.0


def test_adversarial_checkpoints_per_round(small_world, tmp_path):
    records, vocab = small_world
    gen = small_gen(vocab, seed=1)
    disc = small_disc(vocab, seed=2)
    cfg = TrainerConfig(rounds=2, batch_size=3, n_rollouts=2, max_len=6, seed=4)
    adversarial_train(gen, disc, records[:12], [], vocab, cfg,
                      checkpoint_dir=str(tmp_path))
    from titlegan.params import load_checkpoint

    for rnd in (1, 2):
        groups, seed, step = load_checkpoint(tmp_path / f"round_{rnd:03d}.ckpt")
        assert step == rnd and set(groups) == {"gen", "disc"}
    final = load_checkpoint(tmp_path / "round_002.ckpt")[0]
    assert final["gen"]["embed"].data.tobytes() == gen.params["embed"].data.tobytes()


def test_trainer_config_validation():
    with pytest.raises(ValueError):
        TrainerConfig(rounds=-1).validate()
    with pytest.raises(ValueError):
        TrainerConfig(n_rollouts=0).validate()
    with pytest.raises(ValueError):
        TrainerConfig(baseline="exotic").validate()
    with pytest.raises(ValueError):
        TrainerConfig(temperature=0.0).validate()
    TrainerConfig().validate()
