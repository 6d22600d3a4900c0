"""Tabular softmax policy over a probability-token vocabulary.

The "language model" of this testbed: one categorical distribution per
question category over 99 tokens (0.01 ... 0.99), each token standing for a
predicted probability. Includes the PPO value table and the rollout batch
container.
"""

import json
from dataclasses import dataclass, field

import numpy as np


def default_tokens() -> np.ndarray:
    t = np.arange(1, 100) / 100.0
    t.setflags(write=False)
    return t


DEFAULT_TOKENS = default_tokens()


@dataclass(frozen=True)
class ProbVocab:
    """Strictly increasing probability values, all inside (0, 1)."""

    tokens: np.ndarray = field(default_factory=default_tokens)

    def __post_init__(self):
        t = np.asarray(self.tokens, dtype=np.float64)
        if t.ndim != 1 or t.size < 1:
            raise ValueError("vocabulary must be a nonempty 1-d sequence")
        if np.any(np.diff(t) <= 0):
            raise ValueError("vocabulary must be strictly increasing")
        if t[0] <= 0.0 or t[-1] >= 1.0:
            raise ValueError("vocabulary values must lie strictly inside (0, 1)")
        t.setflags(write=False)
        object.__setattr__(self, "tokens", t)

    def __len__(self) -> int:
        return int(self.tokens.size)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax, stable under large logits."""
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


class TabularPolicy:
    """Per-category logits over the probability vocabulary."""

    def __init__(self, logits: np.ndarray, vocab: ProbVocab | None = None):
        logits = np.array(logits, dtype=np.float64)
        vocab = vocab if vocab is not None else ProbVocab()
        if logits.ndim != 2 or logits.shape[1] != len(vocab):
            raise ValueError("logits must have shape (K, V) matching the vocab")
        if not np.all(np.isfinite(logits)):
            raise ValueError("logits must be finite")
        self.logits = logits
        self.vocab = vocab

    @classmethod
    def zeros(cls, k: int, vocab: ProbVocab | None = None) -> "TabularPolicy":
        vocab = vocab if vocab is not None else ProbVocab()
        return cls(np.zeros((k, len(vocab))), vocab)

    @property
    def k(self) -> int:
        return self.logits.shape[0]

    @property
    def v(self) -> int:
        return self.logits.shape[1]

    def _check_category(self, category: int) -> int:
        c = int(category)
        if not 0 <= c < self.k:
            raise ValueError(f"category {c} out of range [0, {self.k})")
        return c

    def probs_all(self) -> np.ndarray:
        return softmax(self.logits)

    def probs(self, category: int) -> np.ndarray:
        return softmax(self.logits[self._check_category(category)])

    def log_probs_all(self) -> np.ndarray:
        return log_softmax(self.logits)

    def sample_group(self, category: int, g: int, rng: np.random.Generator):
        """Draw g i.i.d. tokens for one category.

        Returns (token_index, probability value, log-probability), each of
        length g. Log-probabilities are those of the current policy, i.e.
        the sampling-time distribution.
        """
        if g < 1:
            raise ValueError("g must be >= 1")
        c = self._check_category(category)
        idx = self.sample_matrix(np.full(g, c), 1, rng)[:, 0]
        logp = self.log_probs_all()[c, idx]
        return idx, self.vocab.tokens[idx], logp

    def sample_matrix(self, categories: np.ndarray, g: int,
                      rng: np.random.Generator) -> np.ndarray:
        """Token indices of shape (len(categories), g), one group per row."""
        cdf = np.cumsum(self.probs_all(), axis=1)
        cdf[:, -1] = 1.0
        u = rng.random((len(categories), g))
        return (cdf[categories][:, None, :] < u[:, :, None]).sum(axis=2)

    def grad_logprob(self, category: int, token: int) -> np.ndarray:
        """d log pi(token | category) / d logits[category] = onehot - probs."""
        c = self._check_category(category)
        t = int(token)
        if not 0 <= t < self.v:
            raise ValueError(f"token {t} out of range [0, {self.v})")
        g = -self.probs(c)
        g[t] += 1.0
        return g

    def mean_prediction(self, category: int) -> float:
        return float(self.probs(category) @ self.vocab.tokens)

    def mean_predictions(self) -> np.ndarray:
        return self.probs_all() @ self.vocab.tokens

    def argmax_predictions(self) -> np.ndarray:
        return self.vocab.tokens[self.logits.argmax(axis=1)]

    def copy(self) -> "TabularPolicy":
        return TabularPolicy(self.logits.copy(), self.vocab)


class ValueTable:
    """One scalar value estimate per category (the PPO baseline)."""

    def __init__(self, psi: np.ndarray):
        psi = np.array(psi, dtype=np.float64)
        if psi.ndim != 1 or not np.all(np.isfinite(psi)):
            raise ValueError("psi must be a finite 1-d array")
        self.psi = psi

    @classmethod
    def zeros(cls, k: int) -> "ValueTable":
        return cls(np.zeros(k))

    @property
    def k(self) -> int:
        return int(self.psi.size)

    def lookup(self, category: int) -> float:
        c = int(category)
        if not 0 <= c < self.k:
            raise ValueError(f"category {c} out of range [0, {self.k})")
        return float(self.psi[c])

    def copy(self) -> "ValueTable":
        return ValueTable(self.psi.copy())


@dataclass(frozen=True)
class RolloutBatch:
    """Grouped samples from one collection pass.

    categories/answers have shape (N,); tokens, p_hat, logp_old and rewards
    have shape (N, G). logp_old are the sampling-time log-probabilities and
    define the old policy for clipped updates.
    """

    categories: np.ndarray
    answers: np.ndarray
    tokens: np.ndarray
    p_hat: np.ndarray
    logp_old: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        n, g = self.tokens.shape
        if self.categories.shape != (n,) or self.answers.shape != (n,):
            raise ValueError("categories/answers must have shape (N,)")
        for arr in (self.p_hat, self.logp_old, self.rewards):
            if arr.shape != (n, g):
                raise ValueError("per-entry arrays must have shape (N, G)")

    @property
    def n_groups(self) -> int:
        return self.tokens.shape[0]

    @property
    def g(self) -> int:
        return self.tokens.shape[1]


def save_checkpoint(path, policy: TabularPolicy,
                    values: ValueTable | None = None) -> None:
    """JSON checkpoint {vocab, logits, psi}; round-trips doubles exactly."""
    payload = {
        "vocab": policy.vocab.tokens.tolist(),
        "logits": policy.logits.tolist(),
        "psi": values.psi.tolist() if values is not None else None,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    with open(path) as fh:
        payload = json.load(fh)
    vocab = ProbVocab(np.array(payload["vocab"], dtype=np.float64))
    policy = TabularPolicy(np.array(payload["logits"], dtype=np.float64), vocab)
    values = None
    if payload.get("psi") is not None:
        values = ValueTable(np.array(payload["psi"], dtype=np.float64))
    return policy, values
