"""Scikit-learn style front end for the tabular policy-gradient trainer.

X is a column of integer category ids and y the observed binary outcomes;
fitting runs the configured policy-gradient algorithm and predict_proba
reads out the learned per-category probability.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .advantage import Algo, EstimatorSpec
from .env import CategoryTable, Dataset, RewardRule
from .trainer import TrainConfig, run

_ALGOS = {a.value: a for a in Algo}
_REWARDS = {r.value: r for r in RewardRule}


class PolicyGradientCalibrator(BaseEstimator, ClassifierMixin):
    """Binary probability predictor trained with a policy gradient.

    Parameters mirror the training configuration; see TrainConfig. The
    `algo` choice selects the advantage estimator ("ppo", "rloo", "grpo",
    "grpo-nostd").
    """

    def __init__(self, algo="grpo-nostd", group_size=2,
                 prompts_per_rollout=512, updates_per_rollout=1,
                 clip_eps=None, policy_lr=6.0, value_lr=1e-1,
                 lr_schedule="linear", steps=30_000,
                 seed=1, reward="loglik", grpo_eps=1e-4, eval_every=200,
                 readout="mean"):
        self.algo = algo
        self.group_size = group_size
        self.prompts_per_rollout = prompts_per_rollout
        self.updates_per_rollout = updates_per_rollout
        self.clip_eps = clip_eps
        self.policy_lr = policy_lr
        self.value_lr = value_lr
        self.lr_schedule = lr_schedule
        self.steps = steps
        self.seed = seed
        self.reward = reward
        self.grpo_eps = grpo_eps
        self.eval_every = eval_every
        self.readout = readout

    def _config(self) -> TrainConfig:
        if self.algo not in _ALGOS:
            raise ValueError(f"unknown algo {self.algo!r}; "
                             f"choose from {sorted(_ALGOS)}")
        if self.reward not in _REWARDS:
            raise ValueError(f"unknown reward {self.reward!r}; "
                             f"choose from {sorted(_REWARDS)}")
        return TrainConfig(
            algo=EstimatorSpec(kind=_ALGOS[self.algo], eps=self.grpo_eps),
            group_size=self.group_size,
            prompts_per_rollout=self.prompts_per_rollout,
            updates_per_rollout=self.updates_per_rollout,
            clip_eps=self.clip_eps, policy_lr=self.policy_lr,
            value_lr=self.value_lr, lr_schedule=self.lr_schedule,
            steps=self.steps, seed=self.seed,
            reward=_REWARDS[self.reward], eval_every=self.eval_every,
            readout=self.readout)

    def _categories(self, X) -> np.ndarray:
        X = np.asarray(X)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise ValueError("X must be a single column of category ids")
            X = X[:, 0]
        cats = X.astype(np.int64)
        if not np.array_equal(cats, np.asarray(X, dtype=np.float64)):
            raise ValueError("category ids must be integers")
        if np.any(cats < 0):
            raise ValueError("category ids must be nonnegative")
        return cats

    def fit(self, X, y):
        X, y = check_X_y(np.asarray(X).reshape(len(X), -1), y)
        cats = self._categories(X)
        y = np.asarray(y).astype(np.int64)
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("y must be binary")
        config = self._config()
        config.validate()
        dataset = Dataset(question_id=np.arange(len(cats)), category_id=cats,
                          answer=y, split="train")
        k = int(cats.max()) + 1
        counts = np.bincount(cats, minlength=k)
        if np.any(counts == 0):
            raise ValueError("every category id in [0, max] needs samples")
        # empirical rates, clipped into (0, 1) for table validity
        rates = np.clip(np.bincount(cats, weights=y, minlength=k) / counts,
                        1e-9, 1.0 - 1e-9)
        table = CategoryTable(rates=rates, seed=int(self.seed))
        result = run(config, table, dataset, dataset)
        self.n_categories_ = k
        self.classes_ = np.array([0, 1])
        self.policy_ = result.policy
        self.value_table_ = result.values
        self.result_ = result
        self.log_ = result.log
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "policy_")
        X = check_array(np.asarray(X).reshape(len(X), -1))
        cats = self._categories(X)
        if np.any(cats >= self.n_categories_):
            raise ValueError("unseen category id")
        per_cat = (self.policy_.mean_predictions() if self.readout == "mean"
                   else self.policy_.argmax_predictions())
        p = per_cat[cats]
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(np.int64)
