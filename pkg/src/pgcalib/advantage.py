"""Group advantage estimators and the exact advantage of a prediction.

All estimators operate on the rewards of a group of G predictions sampled
from the same prompt. They accept 1-d groups or (N, G) batches; the group
axis is always the last one.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .env import RewardRule, reward, reward_tables
from .policy import DEFAULT_TOKENS


class Algo(enum.Enum):
    PPO = "ppo"
    RLOO = "rloo"
    GRPO = "grpo"
    GRPO_NO_STD = "grpo-nostd"


@dataclass(frozen=True)
class EstimatorSpec:
    """Which advantage estimator to use; eps stabilizes the GRPO denominator."""

    kind: Algo
    eps: float = 1e-4

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")


def adv_ppo(rewards, value):
    """r_i - V(s) with an externally supplied baseline value."""
    return np.asarray(rewards, dtype=np.float64) - value


def adv_rloo(rewards):
    """r_i minus the mean reward of the other group members."""
    r = np.asarray(rewards, dtype=np.float64)
    g = r.shape[-1]
    if g < 2:
        raise ValueError("leave-one-out baseline requires a group of >= 2")
    total = r.sum(axis=-1, keepdims=True)
    return r - (total - r) / (g - 1)


def adv_grpo_nostd(rewards):
    """r_i minus the group mean; sums to zero within each group."""
    r = np.asarray(rewards, dtype=np.float64)
    return r - r.mean(axis=-1, keepdims=True)


def adv_grpo(rewards, eps: float = 1e-4):
    """(r_i - mean) / (population std + eps)."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    r = np.asarray(rewards, dtype=np.float64)
    centered = r - r.mean(axis=-1, keepdims=True)
    std = np.sqrt((centered ** 2).mean(axis=-1, keepdims=True))
    return centered / (std + eps)


def group_advantages(rewards, spec: EstimatorSpec, value=None):
    """Dispatch on the estimator kind. `value` is required for PPO."""
    if spec.kind is Algo.PPO:
        if value is None:
            raise ValueError("PPO advantages need a baseline value")
        return adv_ppo(rewards, value)
    if spec.kind is Algo.RLOO:
        return adv_rloo(rewards)
    if spec.kind is Algo.GRPO:
        return adv_grpo(rewards, spec.eps)
    if spec.kind is Algo.GRPO_NO_STD:
        return adv_grpo_nostd(rewards)
    raise ValueError(f"unknown estimator kind: {spec.kind!r}")


def _check_dist(policy_dist, tokens):
    dist = np.asarray(policy_dist, dtype=np.float64)
    if tokens is None:
        if dist.size != DEFAULT_TOKENS.size:
            raise ValueError("tokens required when the distribution does not "
                             "match the default vocabulary size")
        tokens = DEFAULT_TOKENS
    tokens = np.asarray(tokens, dtype=np.float64)
    if dist.shape != tokens.shape:
        raise ValueError("distribution and token values must align")
    if np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-8:
        raise ValueError("policy distribution must be normalized")
    return dist, tokens


def true_advantage(policy_dist, p_true: float, p_hat: float, rule: RewardRule,
                   tokens=None) -> float:
    """Exact advantage of predicting p_hat when answers are Bernoulli(p_true).

    A = p*(r(p_hat,1) - mu1) + (1-p)*(r(p_hat,0) - mu0), with mu1/mu0 the
    expected rewards of the policy's own predictions under each answer.
    Evaluated exactly from the token distribution, no sampling.
    """
    dist, tokens = _check_dist(policy_dist, tokens)
    r0, r1 = reward_tables(tokens, rule)
    mu0 = float(dist @ r0)
    mu1 = float(dist @ r1)
    return (p_true * (reward(p_hat, 1, rule) - mu1)
            + (1.0 - p_true) * (reward(p_hat, 0, rule) - mu0))


def true_advantage_all(policy_dist, p_true: float, rule: RewardRule,
                       tokens=None) -> np.ndarray:
    """true_advantage evaluated for every vocabulary token at once."""
    dist, tokens = _check_dist(policy_dist, tokens)
    r0, r1 = reward_tables(tokens, rule)
    mu0 = float(dist @ r0)
    mu1 = float(dist @ r1)
    return p_true * (r1 - mu1) + (1.0 - p_true) * (r0 - mu0)


def expected_nostd_advantage(policy_dist, p_true: float, p_hat: float,
                             rule: RewardRule, g: int, tokens=None) -> float:
    """Closed-form expectation of the mean-baselined group advantage.

    Equals ((G-1)/G) times the true advantage: proportional, attenuated by
    the group's own contribution to its baseline.
    """
    if g < 1:
        raise ValueError("group size must be >= 1")
    return (g - 1) / g * true_advantage(policy_dist, p_true, p_hat, rule,
                                        tokens)
