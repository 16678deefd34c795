"""Shared test utilities: finite-difference oracle, bandit rig, stub rewards."""

import numpy as np

from titlegan import tensor as T
from titlegan.corpus import EOS, Vocab
from titlegan.generator import Generator, GeneratorConfig
from titlegan.tensor import GradTape, Tensor


def fd_gradients(loss_fn, tensors, eps=1e-5):
    """Central finite differences of loss_fn() w.r.t. every tensor entry."""
    out = {}
    for name, t in tensors.items():
        grad = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_fn()
            flat[i] = orig - eps
            lo = loss_fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * eps)
        out[name] = grad
    return out


def max_rel_err(analytic, numeric):
    """Relative error with denominator max(1e-8, |a| + |n|), max over entries."""
    a = np.asarray(analytic).reshape(-1)
    n = np.asarray(numeric).reshape(-1)
    denom = np.maximum(1e-8, np.abs(a) + np.abs(n))
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def gradient_report(analytic, numeric, comp_floor=1e-6):
    """Norm-relative and componentwise errors per tensor.

    Components with |a| + |n| < comp_floor sit below the eps=1e-5 central
    finite-difference noise floor in float64 and are excluded from the
    componentwise maximum; the norm-level check still covers them.
    """
    report = {}
    for name in analytic:
        a = np.asarray(analytic[name]).reshape(-1)
        n = np.asarray(numeric[name]).reshape(-1)
        norm_err = float(np.linalg.norm(a - n)
                         / max(1e-8, np.linalg.norm(a) + np.linalg.norm(n)))
        mag = np.abs(a) + np.abs(n)
        mask = mag >= comp_floor
        comp_err = float(np.max(np.abs(a[mask] - n[mask]) / mag[mask])) if mask.any() else 0.0
        report[name] = (norm_err, comp_err)
    return report


def check_gradients(loss_fn, tensors, tol=1e-4, eps=1e-5, norm_check=True,
                    comp_floor=1e-6):
    """Assert analytic tape gradients match central finite differences."""
    with GradTape() as tape:
        loss = loss_fn()
        analytic = tape.gradients(loss, tensors)
    numeric = fd_gradients(lambda: loss_fn().item(), tensors, eps)
    report = gradient_report(analytic, numeric, comp_floor)
    bad = {name: errs for name, errs in report.items()
           if errs[1] > tol or (norm_check and errs[0] > tol)}
    assert not bad, f"gradient mismatch beyond {tol}: {bad}"
    return report


# ---- two-armed bandit rig -------------------------------------------------

BANDIT_VOCAB = Vocab(["t", "arm_a", "arm_b"])
TOK_T = BANDIT_VOCAB.token_to_id["t"]
ARM_A = BANDIT_VOCAB.token_to_id["arm_a"]
ARM_B = BANDIT_VOCAB.token_to_id["arm_b"]


def make_bandit_generator(theta_a, theta_b, off=-40.0):
    """One-step policy: zero weights everywhere, logits live in out.b.

    With all weights zero the decoder state stays zero, so the output
    distribution is softmax(out.b) with PAD masked; every non-arm token is
    pinned to a large negative logit.
    """
    cfg = GeneratorConfig(vocab_size=len(BANDIT_VOCAB), embed_dim=3, hidden_dim=3,
                          image_dim=2, max_len=1)
    gen = Generator(cfg, seed=0)
    for name, t in gen.params.items():
        t.data = np.zeros_like(t.data)
    bias = np.full(cfg.vocab_size, off)
    bias[ARM_A] = theta_a
    bias[ARM_B] = theta_b
    gen.params["out.b"].data = bias
    return gen


def bandit_inputs():
    from titlegan.generator import RecordInputs

    return RecordInputs(title_ids=[TOK_T], attr_ids=[], image=np.zeros(2))


class FixedRewardDisc:
    """Reward stub: scores depend only on a title's first token."""

    def __init__(self, reward_a=0.9, reward_b=0.1, default=0.5):
        self.rewards = {ARM_A: reward_a, ARM_B: reward_b}
        self.default = default

    def score_fast(self, tokens):
        tokens = [t for t in tokens if t != EOS]
        if not tokens:
            return self.default
        return self.rewards.get(int(tokens[0]), self.default)


def bandit_policy(gen):
    """Exact masked next-token distribution of the rigged bandit generator."""
    enc = gen.encode(bandit_inputs())
    out = gen.decode_step(gen.initial_state(enc), 1, enc)
    return out.dist.data.copy()


def bandit_exact_gradient(gen, disc):
    """Enumerated E[reward * grad log pi] over non-EOS outcomes, w.r.t. out.b.

    This is what the single-sample REINFORCE estimator averages to; the EOS
    outcome contributes no surrogate term (empty title), and its probability
    is ~e^-40 under the rig.
    """
    probs = bandit_policy(gen)
    grad = np.zeros_like(probs)
    for tok, p in enumerate(probs):
        if p == 0.0 or tok == EOS:
            continue
        r = disc.score_fast([tok, EOS])
        # d log pi(tok) / d b_j = delta(j, tok) - pi_j
        grad += r * p * (np.eye(len(probs))[tok] - probs)
    return grad
