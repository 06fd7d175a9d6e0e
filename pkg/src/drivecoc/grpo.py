"""Group-relative policy optimization on a small autoregressive token policy.

The objective for a group of K rollouts with rewards r_i is

    loss = -sum_i w_i * (log pi(tau_i) - lambda_kl * KL_i),
    w = softmax(beta * (r - mean(r))),

with the weights held constant during differentiation and KL_i the exact
per-step categorical KL(pi || pi_ref) summed along rollout i.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError

__all__ = [
    "ToyPolicy",
    "RolloutGroup",
    "advantages",
    "group_weights",
    "reward_weights",
    "make_group",
    "grpo_loss",
    "grpo_loss_and_grad",
    "sft_loss",
    "sft_loss_and_grad",
    "curation_scores",
    "select_for_training",
    "GrpoDemoConfig",
    "run_sft",
    "run_grpo_demo",
]


def _log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _softmax(z):
    return np.exp(_log_softmax(z))


class ToyPolicy:
    """Next-token model with logits ``B[prev] + P[t] + context @ W``.

    ``B`` has one extra row for the begin-of-sequence state. The context is
    a fixed vector shared by every sequence the policy generates.
    """

    def __init__(self, vocab_size=256, max_len=8, context_dim=8, context=None, seed=0, init_scale=0.01):
        rng = np.random.default_rng(seed)
        self.vocab_size = vocab_size
        self.max_len = max_len
        self.context = (
            rng.standard_normal(context_dim) if context is None else np.asarray(context, dtype=float)
        )
        self.params = {
            "B": init_scale * rng.standard_normal((vocab_size + 1, vocab_size)),
            "P": init_scale * rng.standard_normal((max_len, vocab_size)),
            "W": init_scale * rng.standard_normal((len(self.context), vocab_size)),
        }

    @property
    def bos(self):
        return self.vocab_size

    def copy(self):
        other = ToyPolicy.__new__(ToyPolicy)
        other.vocab_size, other.max_len = self.vocab_size, self.max_len
        other.context = self.context.copy()
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def _check(self, seqs):
        seqs = np.atleast_2d(np.asarray(seqs))
        if not np.issubdtype(seqs.dtype, np.integer):
            raise ValidationError("token sequences must be integers", field="tokens")
        if seqs.shape[1] > self.max_len:
            raise ValidationError(f"sequence longer than max_len {self.max_len}", field="tokens")
        bad = np.argwhere((seqs < 0) | (seqs >= self.vocab_size))
        if len(bad):
            i, t = map(int, bad[0])
            raise ValidationError(
                f"token {int(seqs[i, t])} at [{i}, {t}] is outside the vocabulary",
                field="tokens", index=[i, t],
            )
        return seqs

    def _prev(self, seqs):
        return np.column_stack([np.full(len(seqs), self.bos), seqs[:, :-1]])

    def logits(self, seqs):
        """Per-step logits, shape (n, L, V), for teacher-forced ``seqs``."""
        seqs = self._check(seqs)
        p = self.params
        L = seqs.shape[1]
        return p["B"][self._prev(seqs)] + p["P"][None, :L] + (self.context @ p["W"])[None, None, :]

    def step_log_probs(self, seqs):
        return _log_softmax(self.logits(seqs))

    def sequence_log_prob(self, seqs):
        seqs = self._check(seqs)
        lp = self.step_log_probs(seqs)
        return np.take_along_axis(lp, seqs[..., None], axis=-1)[..., 0].sum(axis=1)

    def sample(self, n, length, rng):
        seqs = np.zeros((n, length), dtype=np.int64)
        prev = np.full(n, self.bos)
        bias = self.context @ self.params["W"]
        for t in range(length):
            probs = _softmax(self.params["B"][prev] + self.params["P"][t] + bias)
            u = rng.random((n, 1))
            seqs[:, t] = np.minimum((probs.cumsum(axis=1) < u).sum(axis=1), self.vocab_size - 1)
            prev = seqs[:, t]
        return seqs

    def prefix_probability(self, prefix):
        """Exact probability that a sampled sequence starts with ``prefix``."""
        prefix = np.asarray(prefix)[None, :]
        return float(np.exp(self.sequence_log_prob(prefix)[0]))

    def backprop_logits(self, seqs, g):
        """Parameter gradients given d(loss)/d(logits) ``g`` of shape (n, L, V)."""
        seqs = self._check(seqs)
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        np.add.at(grads["B"], self._prev(seqs).ravel(), g.reshape(-1, self.vocab_size))
        grads["P"][:seqs.shape[1]] += g.sum(axis=0)
        grads["W"] += np.outer(self.context, g.sum(axis=(0, 1)))
        return grads

    def get_flat(self):
        return np.concatenate([self.params[k].ravel() for k in ("B", "P", "W")])

    def set_flat(self, flat):
        i = 0
        for k in ("B", "P", "W"):
            n = self.params[k].size
            self.params[k] = np.asarray(flat[i:i + n], dtype=float).reshape(self.params[k].shape)
            i += n


def sft_loss_and_grad(policy, seqs):
    """Mean token negative log-likelihood and its gradient."""
    seqs = policy._check(seqs)
    lp = policy.step_log_probs(seqs)
    n_tok = seqs.size
    nll = -np.take_along_axis(lp, seqs[..., None], axis=-1).sum() / n_tok
    g = np.exp(lp)
    np.put_along_axis(g, seqs[..., None], np.take_along_axis(g, seqs[..., None], axis=-1) - 1.0, axis=-1)
    return float(nll), policy.backprop_logits(seqs, g / n_tok)


def sft_loss(policy, seqs):
    return sft_loss_and_grad(policy, seqs)[0]


def _step_kl(lp, lq):
    p = np.exp(lp)
    return (p * (lp - lq)).sum(axis=-1)


@dataclass
class RolloutGroup:
    tokens: np.ndarray
    logp: np.ndarray
    logp_ref: np.ndarray
    rewards: np.ndarray
    kl: np.ndarray
    beta: float = 1.0
    lambda_kl: float = 0.05
    breakdowns: list = field(default_factory=list)

    def __post_init__(self):
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.logp = np.asarray(self.logp, dtype=float)
        self.logp_ref = np.asarray(self.logp_ref, dtype=float)
        self.kl = np.asarray(self.kl, dtype=float)
        if len(self.rewards) < 2:
            raise ValidationError("a rollout group needs K >= 2", field="rewards")
        if not (np.all(np.isfinite(self.logp)) and np.all(np.isfinite(self.logp_ref))):
            raise ValidationError("rollout log-probabilities must be finite", field="logp")

    def to_dict(self):
        return {
            "tokens": np.asarray(self.tokens).tolist(),
            "logp": self.logp.tolist(),
            "logp_ref": self.logp_ref.tolist(),
            "rewards": self.rewards.tolist(),
            "kl": self.kl.tolist(),
            "beta": self.beta,
            "lambda_kl": self.lambda_kl,
        }

    @classmethod
    def from_dict(cls, d):
        rewards = d["rewards"]
        k = len(rewards)
        return cls(
            np.asarray(d.get("tokens", [[]] * k)),
            d.get("logp", [0.0] * k),
            d.get("logp_ref", d.get("logp", [0.0] * k)),
            rewards,
            d.get("kl", [0.0] * k),
            d.get("beta", 1.0),
            d.get("lambda_kl", 0.05),
        )


def advantages(group):
    r = group.rewards if isinstance(group, RolloutGroup) else np.asarray(group, dtype=float)
    if len(r) < 2:
        raise ValidationError("advantages need K >= 2", field="rewards")
    return r - r.mean()


def group_weights(adv, beta):
    """softmax(beta * adv) with the max subtracted first."""
    z = beta * np.asarray(adv, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValidationError("advantages must be finite", field="advantages")
    e = np.exp(z - z.max())
    return e / e.sum()


def reward_weights(rewards, beta):
    """Group weights straight from rewards: softmax(beta * (r - max r)).

    Softmax ignores constant shifts, so this equals ``group_weights(advantages(r))``.
    Shifting by the max instead of the mean keeps the result bit-identical when
    every reward moves by the same exactly representable constant.
    """
    r = np.asarray(rewards, dtype=float)
    if len(r) < 2:
        raise ValidationError("a rollout group needs K >= 2", field="rewards")
    return group_weights(r - r.max(), beta)


def make_group(policy, ref, tokens, rewards, beta=1.0, lambda_kl=0.05):
    tokens = policy._check(tokens)
    lp, lq = policy.step_log_probs(tokens), ref.step_log_probs(tokens)
    return RolloutGroup(
        tokens,
        np.take_along_axis(lp, tokens[..., None], axis=-1)[..., 0].sum(axis=1),
        np.take_along_axis(lq, tokens[..., None], axis=-1)[..., 0].sum(axis=1),
        rewards,
        _step_kl(lp, lq).sum(axis=1),
        beta,
        lambda_kl,
    )


def grpo_loss(group):
    w = reward_weights(group.rewards, group.beta)
    return float(-np.sum(w * (group.logp - group.lambda_kl * group.kl)))


def grpo_loss_and_grad(policy, ref, tokens, rewards, beta=1.0, lambda_kl=0.05):
    """Loss and parameter gradient for a sampled group; the weights are constants."""
    tokens = policy._check(tokens)
    w = reward_weights(rewards, beta)
    lp, lq = policy.step_log_probs(tokens), ref.step_log_probs(tokens)
    p = np.exp(lp)
    logp = np.take_along_axis(lp, tokens[..., None], axis=-1)[..., 0].sum(axis=1)
    kl_steps = (p * (lp - lq)).sum(axis=-1)
    loss = -np.sum(w * (logp - lambda_kl * kl_steps.sum(axis=1)))
    # d log pi(token)/d z = onehot - p ; d KL/d z = p * (log p - log q - KL)
    onehot = np.zeros_like(p)
    np.put_along_axis(onehot, tokens[..., None], 1.0, axis=-1)
    d_kl = p * (lp - lq - kl_steps[..., None])
    g = -w[:, None, None] * ((onehot - p) - lambda_kl * d_kl)
    return float(loss), policy.backprop_logits(tokens, g)


def curation_scores(group, beta=None):
    """KL(softmax(beta * r) || softmax(log pi)) per group; high = model and reward disagree."""
    groups = [group] if isinstance(group, RolloutGroup) else list(group)
    out = []
    for g in groups:
        b = g.beta if beta is None else beta
        lp_reward = _log_softmax(b * g.rewards)
        lp_model = _log_softmax(g.logp)
        out.append(float(np.sum(np.exp(lp_reward) * (lp_reward - lp_model))))
    return out[0] if isinstance(group, RolloutGroup) else np.asarray(out)


def select_for_training(scores, fraction, rng):
    """Top ``fraction`` by disagreement plus as many uniformly drawn from the rest."""
    scores = np.asarray(scores, dtype=float)
    n = len(scores)
    k = int(round(fraction * n))
    order = np.argsort(-scores, kind="stable")
    top = order[:k]
    rest = order[k:]
    extra = rng.choice(rest, size=min(k, len(rest)), replace=False) if k else np.array([], dtype=int)
    return np.concatenate([top, np.sort(extra)]).astype(int)


class _Adam:
    def __init__(self, params, lr):
        self.lr = lr
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads, b1=0.9, b2=0.999, eps=1e-8):
        self.t += 1
        for k in params:
            self.m[k] = b1 * self.m[k] + (1 - b1) * grads[k]
            self.v[k] = b2 * self.v[k] + (1 - b2) * grads[k] ** 2
            mh = self.m[k] / (1 - b1 ** self.t)
            vh = self.v[k] / (1 - b2 ** self.t)
            params[k] -= self.lr * mh / (np.sqrt(vh) + eps)


@dataclass(frozen=True)
class GrpoDemoConfig:
    vocab_size: int = 256
    seq_len: int = 6
    prefix_len: int = 3
    corpus_size: int = 200
    corpus_target_fraction: float = 0.3
    sft_steps: int = 150
    sft_lr: float = 0.05
    iterations: int = 200
    group_size: int = 6
    groups_per_iter: int = 4
    beta: float = 1.0
    lambda_kl: float = 0.05
    lr: float = 0.02
    eval_samples: int = 256


def _noisy_corpus(cfg, target, rng):
    """SFT data in which only some sequences start with the target prefix.

    The rest start with one of a few decoy prefixes that share the first
    token, so the SFT policy splits its mass between target and decoys.
    """
    n = cfg.corpus_size
    seqs = rng.integers(cfg.vocab_size, size=(n, cfg.seq_len))
    decoys = [np.concatenate([target[:1], rng.integers(cfg.vocab_size, size=cfg.prefix_len - 1)]) for _ in range(2)]
    for i in range(n):
        if rng.random() < cfg.corpus_target_fraction:
            seqs[i, :cfg.prefix_len] = target
        else:
            seqs[i, :cfg.prefix_len] = decoys[rng.integers(len(decoys))]
    return seqs


def run_sft(cfg, rng):
    """Fit a fresh policy to a noisy corpus; returns (policy, hidden prefix, loss curve)."""
    target = rng.integers(cfg.vocab_size, size=cfg.prefix_len)
    corpus = _noisy_corpus(cfg, target, rng)
    policy = ToyPolicy(cfg.vocab_size, cfg.seq_len, seed=int(rng.integers(2**31)))
    opt = _Adam(policy.params, cfg.sft_lr)
    curve = []
    for _ in range(cfg.sft_steps):
        loss, grads = sft_loss_and_grad(policy, corpus)
        curve.append(loss)
        opt.step(policy.params, grads)
    return policy, target, curve


def run_grpo_demo(cfg=None, seed=0):
    """SFT on a noisy corpus, then GRPO with reward 1 iff the sequence starts with a hidden prefix.

    Returns a report with the per-iteration mean sampled group reward and the
    exact expected reward (prefix probability) before and after GRPO.
    """
    cfg = cfg or GrpoDemoConfig()
    rng = np.random.default_rng(seed)
    policy, target, sft_curve = run_sft(cfg, rng)
    ref = policy.copy()

    def reward(seqs):
        return np.all(seqs[:, :cfg.prefix_len] == target, axis=1).astype(float)

    start = policy.prefix_probability(target)
    opt = _Adam(policy.params, cfg.lr)
    curve = []
    for _ in range(cfg.iterations):
        total = {k: np.zeros_like(v) for k, v in policy.params.items()}
        rewards_seen = []
        for _ in range(cfg.groups_per_iter):
            seqs = policy.sample(cfg.group_size, cfg.seq_len, rng)
            r = reward(seqs)
            rewards_seen.append(r.mean())
            _, grads = grpo_loss_and_grad(policy, ref, seqs, r, cfg.beta, cfg.lambda_kl)
            for k in total:
                total[k] += grads[k] / cfg.groups_per_iter
        opt.step(policy.params, total)
        curve.append(float(np.mean(rewards_seen)))
    final = policy.prefix_probability(target)
    final_rate = float(reward(policy.sample(cfg.eval_samples, cfg.seq_len, rng)).mean())
    return {
        "seed": seed,
        "iterations": cfg.iterations,
        "sft_loss_curve": sft_curve,
        "mean_reward_curve": curve,
        "expected_reward_initial": start,
        "expected_reward_final": final,
        "final_consistency_rate": final_rate,
    }
