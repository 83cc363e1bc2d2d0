"""A tiny next-token model with hand-written backpropagation.

The architecture is deliberately boring: embed each token of a fixed-length
context, flatten, one tanh hidden layer, linear readout, mean cross-entropy.
It exists to give the optimizers a realistic nonconvex workload whose
gradients can be checked against finite differences to near machine
precision, so everything runs in float64.

Training data comes from a seeded order-1 Markov chain over a small token
alphabet; its entropy rate sits well below log(vocab), so there is signal
to learn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class StaleCacheError(RuntimeError):
    """Backward called with a cache from an older parameter version."""


@dataclass(frozen=True)
class LMConfig:
    vocab: int = 16
    context: int = 8
    embed_dim: int = 16
    hidden_dim: int = 64

    def __post_init__(self):
        if min(self.vocab, self.context, self.embed_dim, self.hidden_dim) < 1:
            raise ValueError("all model dimensions must be >= 1")

    @property
    def param_count(self) -> int:
        v, k, e, h = self.vocab, self.context, self.embed_dim, self.hidden_dim
        return v * e + k * e * h + h + h * v + v


PARAM_ORDER = ("embed", "w1", "b1", "w2", "b2")


@dataclass(frozen=True)
class TinyLM:
    cfg: LMConfig
    params: dict[str, Tensor]
    version: int = 0

    @classmethod
    def init(cls, seed: int, cfg: LMConfig | None = None) -> "TinyLM":
        """Deterministic init: weights uniform in +-1/sqrt(fan_in), biases 0."""
        cfg = cfg or LMConfig()
        rng = np.random.default_rng(seed)
        v, k, e, h = cfg.vocab, cfg.context, cfg.embed_dim, cfg.hidden_dim

        def uniform(shape, fan_in):
            bound = 1.0 / math.sqrt(fan_in)
            return Tensor(rng.uniform(-bound, bound, shape))

        params = {
            "embed": uniform((v, e), e),
            "w1": uniform((k * e, h), k * e),
            "b1": Tensor.zeros((h,)),
            "w2": uniform((h, v), h),
            "b2": Tensor.zeros((v,)),
        }
        return cls(cfg, params, 0)

    def with_params(self, new_params: dict[str, Tensor]) -> "TinyLM":
        for name in PARAM_ORDER:
            if new_params[name].shape != self.params[name].shape:
                raise ValueError(f"shape change for {name}")
        return TinyLM(self.cfg, dict(new_params), self.version + 1)

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [(name, self.params[name]) for name in PARAM_ORDER]

    @property
    def param_count(self) -> int:
        return self.cfg.param_count

    def checksum(self) -> float:
        return float(sum(float(np.sum(self.params[n].data)) for n in PARAM_ORDER))


@dataclass(frozen=True)
class Batch:
    contexts: np.ndarray  # B x k int64
    targets: np.ndarray  # B int64

    def __post_init__(self):
        if self.contexts.ndim != 2 or self.targets.ndim != 1:
            raise ValueError("contexts must be B x k, targets length B")
        if self.contexts.shape[0] != self.targets.shape[0]:
            raise ValueError("batch size mismatch between contexts and targets")


def _check_batch(cfg: LMConfig, batch: Batch) -> None:
    if batch.contexts.shape[1] != cfg.context:
        raise ValueError(f"context length {batch.contexts.shape[1]} != {cfg.context}")
    for arr in (batch.contexts, batch.targets):
        if arr.min() < 0 or arr.max() >= cfg.vocab:
            raise ValueError("token id out of range")


@dataclass
class ForwardCache:
    model_version: int
    contexts: np.ndarray
    targets: np.ndarray
    x: np.ndarray  # B x (k*e) flattened embeddings
    a1: np.ndarray  # B x h tanh activations
    probs: np.ndarray  # B x V softmax


def forward_loss(model: TinyLM, batch: Batch) -> tuple[float, ForwardCache]:
    """Mean cross-entropy of the next token, max-subtracted softmax."""
    _check_batch(model.cfg, batch)
    cfg = model.cfg
    B = batch.contexts.shape[0]
    embed = model.params["embed"].as_array()
    w1 = model.params["w1"].as_array()
    b1 = model.params["b1"].as_array()
    w2 = model.params["w2"].as_array()
    b2 = model.params["b2"].as_array()

    x = embed[batch.contexts.reshape(-1)].reshape(B, cfg.context * cfg.embed_dim)
    z1 = x @ w1 + b1
    a1 = np.tanh(z1)
    logits = a1 @ w2 + b2
    zmax = logits.max(axis=1, keepdims=True)
    shifted = logits - zmax
    expz = np.exp(shifted)
    denom = expz.sum(axis=1, keepdims=True)
    probs = expz / denom
    log_denom = np.log(denom[:, 0])
    loss = float(np.mean(log_denom - shifted[np.arange(B), batch.targets]))
    return loss, ForwardCache(model.version, batch.contexts, batch.targets, x, a1, probs)


def backward(model: TinyLM, cache: ForwardCache) -> dict[str, Tensor]:
    """Exact gradients of the mean cross-entropy, same shapes as parameters."""
    if cache.model_version != model.version:
        raise StaleCacheError(
            f"cache built at version {cache.model_version}, model is at {model.version}"
        )
    cfg = model.cfg
    B = cache.contexts.shape[0]
    w1 = model.params["w1"].as_array()
    w2 = model.params["w2"].as_array()

    dlogits = cache.probs.copy()
    dlogits[np.arange(B), cache.targets] -= 1.0
    dlogits /= B

    dw2 = cache.a1.T @ dlogits
    db2 = dlogits.sum(axis=0)
    da1 = dlogits @ w2.T
    dz1 = da1 * (1.0 - cache.a1**2)
    dw1 = cache.x.T @ dz1
    db1 = dz1.sum(axis=0)
    dx = dz1 @ w1.T
    dembed = np.zeros((cfg.vocab, cfg.embed_dim))
    np.add.at(
        dembed, cache.contexts.reshape(-1), dx.reshape(B * cfg.context, cfg.embed_dim)
    )
    return {
        "embed": Tensor._adopt(dembed.reshape(-1), (cfg.vocab, cfg.embed_dim)),
        "w1": Tensor._adopt(dw1.reshape(-1), w1.shape),
        "b1": Tensor._adopt(db1, (cfg.hidden_dim,)),
        "w2": Tensor._adopt(dw2.reshape(-1), w2.shape),
        "b2": Tensor._adopt(db2, (cfg.vocab,)),
    }


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthCorpus:
    """Seeded order-1 Markov source over ``vocab`` tokens."""

    transition: np.ndarray = field(repr=False)
    vocab: int
    seed: int

    def __post_init__(self):
        rows = self.transition.sum(axis=1)
        if not np.allclose(rows, 1.0, atol=1e-12):
            raise ValueError("transition rows must sum to 1")

    def stationary(self) -> np.ndarray:
        values, vectors = np.linalg.eig(self.transition.T)
        idx = int(np.argmin(np.abs(values - 1.0)))
        pi = np.real(vectors[:, idx])
        pi = np.abs(pi)
        return pi / pi.sum()

    def entropy_rate(self) -> float:
        """sum_i pi_i sum_j -P_ij log P_ij, in nats."""
        pi = self.stationary()
        p = self.transition
        with np.errstate(divide="ignore", invalid="ignore"):
            plogp = np.where(p > 0, p * np.log(p), 0.0)
        return float(-(pi @ plogp.sum(axis=1)))

    def tokens(self, length: int, seed: int) -> np.ndarray:
        """Deterministic token stream: stationary start, inverse-CDF steps."""
        if length < 1:
            raise ValueError(f"length must be >= 1, got {length}")
        rng = np.random.default_rng((self.seed, seed))
        cum = np.cumsum(self.transition, axis=1)
        cum[:, -1] = 1.0
        start_cum = np.cumsum(self.stationary())
        start_cum[-1] = 1.0
        out = np.empty(length, dtype=np.int64)
        out[0] = int(np.searchsorted(start_cum, rng.random()))
        draws = rng.random(length - 1)
        for i in range(1, length):
            out[i] = int(np.searchsorted(cum[out[i - 1]], draws[i - 1]))
        return out


def make_corpus(
    vocab: int = 16, seed: int = 0, concentration: float = 0.3, peak: float | None = None
) -> SynthCorpus:
    """Random Markov chain. Small ``concentration`` gives skewed rows whose
    entropy rate sits well below log(vocab); ``peak`` instead builds a
    near-deterministic chain that follows a random permutation with the
    given probability."""
    rng = np.random.default_rng(seed)
    if peak is not None:
        if not 0.0 < peak < 1.0:
            raise ValueError(f"peak must be in (0, 1), got {peak}")
        perm = rng.permutation(vocab)
        p = np.full((vocab, vocab), (1.0 - peak) / (vocab - 1))
        p[np.arange(vocab), perm] = peak
    else:
        p = rng.dirichlet(np.full(vocab, concentration), size=vocab)
        p = np.maximum(p, 1e-12)
        p /= p.sum(axis=1, keepdims=True)
    return SynthCorpus(p, vocab, seed)


def gen_corpus(seed: int, length: int, vocab: int = 16, **kwargs) -> np.ndarray:
    """Convenience: build the seeded chain and emit one stream."""
    corpus = make_corpus(vocab=vocab, seed=seed, **kwargs)
    return corpus.tokens(length, 0)


def sample_batch(
    tokens: np.ndarray, batch_size: int, context: int, rng: np.random.Generator
) -> Batch:
    """Random windows: context = tokens[i : i+k], target = tokens[i+k]."""
    if tokens.size < context + 1:
        raise ValueError(f"stream of {tokens.size} tokens is shorter than context+1")
    starts = rng.integers(0, tokens.size - context, size=batch_size)
    contexts = np.stack([tokens[s : s + context] for s in starts])
    targets = tokens[starts + context]
    return Batch(contexts, targets)


def eval_batches(
    tokens: np.ndarray, batch_size: int, context: int, n_batches: int, seed: int
) -> list[Batch]:
    """Fixed held-out batches, deterministic in (tokens, seed)."""
    rng = np.random.default_rng(seed)
    return [sample_batch(tokens, batch_size, context, rng) for _ in range(n_batches)]
