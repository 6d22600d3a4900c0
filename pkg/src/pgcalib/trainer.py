"""Policy-gradient training loop over the synthetic world.

One step = collect a rollout (prompts_per_rollout prompts, G samples each),
then one or more gradient updates on it. A single update without clipping
uses the vanilla policy gradient; otherwise the clipped surrogate is used,
which coincides with the vanilla gradient on the first update of every
rollout (all importance ratios are exactly 1).
"""

import csv
from dataclasses import dataclass

import numpy as np

from .advantage import Algo, EstimatorSpec, group_advantages
from .env import CategoryTable, Dataset, RewardRule, reward_tables
from .metrics import ReliabilityBin, accuracy, auroc, ece, reliability
from .policy import RolloutBatch, TabularPolicy, ValueTable
from .rng import stream

_EPOCH_TAG = 10
_ROLLOUT_TAG = 11


@dataclass
class TrainConfig:
    algo: EstimatorSpec
    group_size: int = 2
    prompts_per_rollout: int = 512
    updates_per_rollout: int = 1
    clip_eps: float | None = None
    policy_lr: float = 6.0
    value_lr: float = 1e-1
    lr_schedule: str = "linear"
    steps: int = 30_000
    seed: int = 1
    reward: RewardRule = RewardRule.LOG_LIKELIHOOD
    eval_every: int = 200
    readout: str = "argmax"

    def validate(self) -> None:
        if self.group_size < 1 or self.prompts_per_rollout < 1:
            raise ValueError("group_size and prompts_per_rollout must be >= 1")
        if self.updates_per_rollout < 1 or self.steps < 0:
            raise ValueError("updates_per_rollout must be >= 1 and steps >= 0")
        if self.updates_per_rollout > 1 and self.clip_eps is None:
            raise ValueError("multiple updates per rollout require clip_eps")
        if self.clip_eps is not None and self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive when present")
        if self.policy_lr <= 0 or self.value_lr <= 0 or self.eval_every < 1:
            raise ValueError("learning rates and eval_every must be positive")
        if (self.algo.kind in (Algo.RLOO, Algo.GRPO)
                and self.group_size < 2):
            raise ValueError(f"{self.algo.kind.value} requires group_size >= 2")
        if self.readout not in ("mean", "argmax"):
            raise ValueError("readout must be 'mean' or 'argmax'")
        if self.lr_schedule not in ("constant", "linear"):
            raise ValueError("lr_schedule must be 'constant' or 'linear'")

    def step_lr(self, step: int) -> float:
        """Policy learning rate at a given step.

        The "linear" schedule holds the rate constant for the first two
        thirds of training and then anneals linearly to zero, so runs end
        in a low-noise regime. Off-policy schedules that reuse each
        rollout for several updates amplify the effective step size, and
        without the anneal that amplification dominates the final
        calibration error.
        """
        if self.lr_schedule == "constant" or self.steps <= 1:
            return self.policy_lr
        knee = 2 * self.steps // 3
        if step < knee:
            return self.policy_lr
        return self.policy_lr * (self.steps - step) / (self.steps - knee)


@dataclass(frozen=True)
class TrainLogRow:
    step: int
    mean_reward: float
    ece: float
    auroc: float
    accuracy: float
    mean_abs_advantage: float
    clip_fraction: float


@dataclass(frozen=True)
class EvalReport:
    ece: float
    auroc: float
    accuracy: float
    reliability: list[ReliabilityBin]
    category_pairs: list[tuple[int, float, float]]


@dataclass
class TrainResult:
    policy: TabularPolicy
    values: ValueTable | None
    log: list[TrainLogRow]
    category_pairs: list[tuple[int, float, float]]
    eval_report: EvalReport
    train_report: EvalReport


class Adam:
    """Adaptive-moment optimizer with per-element step counts.

    Updates can be masked by leading-axis index so parameters without data
    in a batch keep their state untouched.
    """

    def __init__(self, shape, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = np.zeros(self.m.shape[0], dtype=np.int64)

    def step(self, grad: np.ndarray, mask: np.ndarray | None = None):
        """Return the update for +lr * direction(grad), restricted to mask."""
        if mask is None:
            mask = np.ones(self.m.shape[0], dtype=bool)
        self.t[mask] += 1
        self.m[mask] = self.beta1 * self.m[mask] + (1 - self.beta1) * grad[mask]
        self.v[mask] = (self.beta2 * self.v[mask]
                        + (1 - self.beta2) * grad[mask] ** 2)
        t = self.t[mask].astype(np.float64)
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        if self.m.ndim > 1:
            bc1 = bc1[:, None]
            bc2 = bc2[:, None]
        m_hat = self.m[mask] / bc1
        v_hat = self.v[mask] / bc2
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps), mask


def _prompt_indices(n: int, config: TrainConfig, step: int) -> np.ndarray:
    """Without-replacement draw for this step; pure in (seed, step)."""
    p = config.prompts_per_rollout
    out = np.empty(p, dtype=np.int64)
    pos = step * p
    filled = 0
    while filled < p:
        epoch, offset = divmod(pos, n)
        perm = stream(config.seed, _EPOCH_TAG, epoch).permutation(n)
        take = min(n - offset, p - filled)
        out[filled:filled + take] = perm[offset:offset + take]
        filled += take
        pos += take
    return out


def collect_rollouts(policy: TabularPolicy, values: ValueTable | None,
                     dataset: Dataset, config: TrainConfig,
                     step: int) -> RolloutBatch:
    """Sample G predictions per prompt and score them against the prompt's
    observed answer; log-probabilities are stored at sampling time."""
    if len(dataset) == 0:
        raise ValueError("dataset must be nonempty")
    idx = _prompt_indices(len(dataset), config, step)
    cats = dataset.category_id[idx]
    answers = dataset.answer[idx]
    rng = stream(config.seed, _ROLLOUT_TAG, step)
    tokens = policy.sample_matrix(cats, config.group_size, rng)
    p_hat = policy.vocab.tokens[tokens]
    logp = np.take_along_axis(policy.log_probs_all()[cats], tokens, axis=1)
    r0, r1 = reward_tables(policy.vocab.tokens, config.reward)
    rewards = np.where(answers[:, None] == 1, r1[tokens], r0[tokens])
    return RolloutBatch(categories=cats, answers=answers, tokens=tokens,
                        p_hat=p_hat, logp_old=logp, rewards=rewards)


def batch_advantages(batch: RolloutBatch, config: TrainConfig,
                     values: ValueTable | None) -> np.ndarray:
    value = None
    if config.algo.kind is Algo.PPO:
        if values is None:
            raise ValueError("PPO requires a value table")
        value = values.psi[batch.categories][:, None]
    return group_advantages(batch.rewards, config.algo, value)


def _accumulate_policy_grad(policy: TabularPolicy, cats: np.ndarray,
                            tokens: np.ndarray, weights: np.ndarray):
    """Gradient of sum_i w_i * log pi(token_i | cat_i) over the logit table."""
    k, v = policy.logits.shape
    grad = np.zeros((k, v))
    g = tokens.shape[1]
    np.add.at(grad, (np.repeat(cats, g), tokens.ravel()), weights.ravel())
    wsum = np.bincount(cats, weights=weights.sum(axis=1), minlength=k)
    grad -= policy.probs_all() * wsum[:, None]
    present = np.bincount(cats, minlength=k) > 0
    return grad, present


def vanilla_pg_step(policy: TabularPolicy, batch: RolloutBatch,
                    advantages: np.ndarray, lr: float) -> TabularPolicy:
    """One plain-SGD ascent step along the empirical-mean policy gradient.

    Plain SGD (rather than an adaptive-moment method) keeps the update
    proportional to the advantage magnitudes, which the unbiasedness of the
    leave-one-out estimators relies on.
    """
    weights = advantages / advantages.size
    grad, _ = _accumulate_policy_grad(policy, batch.categories,
                                      batch.tokens, weights)
    policy.logits += lr * grad
    return policy


def clipped_pg_step(policy: TabularPolicy, batch: RolloutBatch,
                    advantages: np.ndarray, clip_eps: float, lr: float):
    """One ascent step on the clipped surrogate.

    Entries where the clipped branch of min(ratio*A, clip(ratio)*A) is
    active contribute zero gradient. Returns (policy, clip_fraction), the
    fraction of nonzero-advantage entries that were clipped.
    """
    if clip_eps is None or clip_eps <= 0:
        raise ValueError("clipped update requires a positive clip_eps")
    logp_new = np.take_along_axis(policy.log_probs_all()[batch.categories],
                                  batch.tokens, axis=1)
    ratio = np.exp(logp_new - batch.logp_old)
    clipped = (((advantages > 0) & (ratio > 1.0 + clip_eps))
               | ((advantages < 0) & (ratio < 1.0 - clip_eps)))
    weights = np.where(clipped, 0.0, advantages * ratio) / advantages.size
    grad, _ = _accumulate_policy_grad(policy, batch.categories,
                                      batch.tokens, weights)
    policy.logits += lr * grad
    active = advantages != 0
    frac = float(clipped[active].mean()) if active.any() else 0.0
    return policy, frac


def value_step(values: ValueTable, batch: RolloutBatch, config: TrainConfig,
               opt: Adam) -> ValueTable:
    """One step of MSE regression of the value table onto batch rewards."""
    if config.algo.kind is not Algo.PPO:
        raise ValueError("value_step only applies to PPO")
    k = values.k
    counts = np.bincount(batch.categories, minlength=k) * batch.g
    sums = np.bincount(batch.categories, weights=batch.rewards.sum(axis=1),
                       minlength=k)
    present = counts > 0
    grad = np.zeros(k)
    grad[present] = 2.0 * (values.psi[present] - sums[present] / counts[present])
    update, mask = opt.step(grad, present)
    values.psi[mask] -= update
    return values


def evaluate(policy: TabularPolicy, eval_dataset: Dataset,
             table: CategoryTable | None = None, bins: int = 10,
             readout: str = "mean") -> EvalReport:
    """Score deterministic per-category predictions on a dataset.

    Metrics use the chosen readout (probability-weighted mean of the token
    values, or the modal token). The per-category pairs always report the
    mean readout, which summarizes the whole distribution. Per-category
    true rates come from the table when given, otherwise from empirical
    frequencies in the dataset.
    """
    if len(eval_dataset) == 0:
        raise ValueError("eval dataset must be nonempty")
    per_cat = (policy.mean_predictions() if readout == "mean"
               else policy.argmax_predictions())
    mean_cat = policy.mean_predictions()
    preds = per_cat[eval_dataset.category_id]
    labels = eval_dataset.answer
    if table is not None:
        true_p = table.rates
    else:
        counts = np.bincount(eval_dataset.category_id, minlength=policy.k)
        pos = np.bincount(eval_dataset.category_id, weights=labels,
                          minlength=policy.k)
        true_p = np.divide(pos, counts, out=np.full(policy.k, np.nan),
                           where=counts > 0)
    pairs = [(c, float(true_p[c]), float(mean_cat[c]))
             for c in range(policy.k)]
    return EvalReport(ece=ece(preds, labels, bins),
                      auroc=auroc(preds, labels),
                      accuracy=accuracy(preds, labels),
                      reliability=reliability(preds, labels, bins),
                      category_pairs=pairs)


def run(config: TrainConfig, table: CategoryTable, train_dataset: Dataset,
        eval_dataset: Dataset) -> TrainResult:
    """Full optimization loop; deterministic given config and seeds."""
    config.validate()
    policy = TabularPolicy.zeros(table.k)
    values = ValueTable.zeros(table.k) if config.algo.kind is Algo.PPO else None
    value_opt = (Adam(table.k, lr=config.value_lr)
                 if values is not None else None)
    use_clipped = config.clip_eps is not None
    log: list[TrainLogRow] = []
    last = (float("nan"),) * 3
    for step in range(config.steps):
        batch = collect_rollouts(policy, values, train_dataset, config, step)
        adv = batch_advantages(batch, config, values)
        lr = config.step_lr(step)
        stale_fracs = []
        for update in range(config.updates_per_rollout):
            if use_clipped:
                policy, frac = clipped_pg_step(policy, batch, adv,
                                               config.clip_eps, lr)
                if update > 0:
                    stale_fracs.append(frac)
            else:
                policy = vanilla_pg_step(policy, batch, adv, lr)
            if values is not None:
                values = value_step(values, batch, config, value_opt)
        if step % config.eval_every == 0 or step == config.steps - 1:
            rep = evaluate(policy, eval_dataset, table,
                           readout=config.readout)
            last = (rep.ece, rep.auroc, rep.accuracy)
        log.append(TrainLogRow(
            step=step,
            mean_reward=float(batch.rewards.mean()),
            ece=last[0], auroc=last[1], accuracy=last[2],
            mean_abs_advantage=float(np.abs(adv).mean()),
            clip_fraction=float(np.mean(stale_fracs)) if stale_fracs else 0.0))
    eval_report = evaluate(policy, eval_dataset, table, readout=config.readout)
    train_report = evaluate(policy, train_dataset, table,
                            readout=config.readout)
    return TrainResult(policy=policy, values=values, log=log,
                       category_pairs=eval_report.category_pairs,
                       eval_report=eval_report, train_report=train_report)


def train_log_to_csv(log: list[TrainLogRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "mean_reward", "ece", "auroc", "accuracy",
                    "mean_abs_advantage", "clip_fraction"])
        for row in log:
            w.writerow([row.step] + [f"{x:.17g}" for x in (
                row.mean_reward, row.ece, row.auroc, row.accuracy,
                row.mean_abs_advantage, row.clip_fraction)])


def category_pairs_to_csv(pairs: list[tuple[int, float, float]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["category", "true_p", "mean_pred"])
        for c, true_p, mean_pred in pairs:
            w.writerow([c, f"{true_p:.17g}", f"{mean_pred:.17g}"])
