"""Synthetic question world: categories with hidden Bernoulli rates.

A world is a table of per-category answer rates drawn uniformly from (0, 1).
Datasets are (question, category, answer) triples where the answer is a
Bernoulli draw from the rate of the question's category. Rewards score a
predicted probability against an observed binary answer with a strictly
proper scoring rule.
"""

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

from .rng import stream

_CATEGORY_TAG = 0
_DATASET_TAG = 1


class RewardRule(enum.Enum):
    LOG_LIKELIHOOD = "loglik"
    BRIER = "brier"


@dataclass(frozen=True)
class CategoryTable:
    """Ground-truth Bernoulli rate per category."""

    rates: np.ndarray
    seed: int = 0

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=np.float64)
        if rates.ndim != 1 or rates.size < 1:
            raise ValueError("rates must be a nonempty 1-d sequence")
        if np.any(rates <= 0.0) or np.any(rates >= 1.0):
            raise ValueError("every rate must lie strictly inside (0, 1)")
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)

    @property
    def k(self) -> int:
        return int(self.rates.size)


@dataclass(frozen=True)
class Sample:
    question_id: int
    category_id: int
    answer: int


@dataclass(frozen=True)
class Dataset:
    """Fixed collection of samples drawn from one CategoryTable."""

    question_id: np.ndarray
    category_id: np.ndarray
    answer: np.ndarray
    split: str = "train"

    def __post_init__(self):
        q = np.asarray(self.question_id, dtype=np.int64)
        c = np.asarray(self.category_id, dtype=np.int64)
        a = np.asarray(self.answer, dtype=np.int64)
        if q.size < 1 or q.shape != c.shape or q.shape != a.shape:
            raise ValueError("dataset columns must be nonempty and equal length")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("answers must be binary")
        for name, arr in (("question_id", q), ("category_id", c), ("answer", a)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return int(self.question_id.size)

    def __getitem__(self, i: int) -> Sample:
        return Sample(int(self.question_id[i]), int(self.category_id[i]),
                      int(self.answer[i]))


def gen_categories(k: int, seed: int) -> CategoryTable:
    """Draw k category rates i.i.d. Uniform(0, 1), strictly interior."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = stream(seed, _CATEGORY_TAG)
    rates = rng.uniform(size=k)
    # uniform() can return exactly 0.0; redraw the (measure-zero) offenders
    bad = (rates <= 0.0) | (rates >= 1.0)
    while np.any(bad):
        rates[bad] = rng.uniform(size=int(bad.sum()))
        bad = (rates <= 0.0) | (rates >= 1.0)
    return CategoryTable(rates=rates, seed=seed)


def gen_dataset(table: CategoryTable, n: int, seed: int,
                split: str = "train") -> Dataset:
    """Sample n questions with uniform categories and Bernoulli answers."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = stream(seed, _DATASET_TAG)
    cats = rng.integers(0, table.k, size=n)
    answers = (rng.random(n) < table.rates[cats]).astype(np.int64)
    return Dataset(question_id=np.arange(n, dtype=np.int64),
                   category_id=cats, answer=answers, split=split)


def reward(p_hat, answer, rule: RewardRule):
    """Score predicted probability p_hat against binary answer.

    Log-likelihood: a*ln(p) + (1-a)*ln(1-p), requires p in (0, 1).
    Brier: -(a - p)^2, requires p in [0, 1].

    Accepts scalars or arrays (broadcasting); returns the same shape.
    """
    p = np.asarray(p_hat, dtype=np.float64)
    a = np.asarray(answer)
    if not np.all((a == 0) | (a == 1)):
        raise ValueError("answer must be binary")
    scalar = p.ndim == 0 and a.ndim == 0
    if rule is RewardRule.LOG_LIKELIHOOD:
        if np.any(p <= 0.0) or np.any(p >= 1.0):
            raise ValueError("log-likelihood reward requires p_hat in (0, 1)")
        out = np.where(a == 1, np.log(p), np.log1p(-p))
    elif rule is RewardRule.BRIER:
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("Brier reward requires p_hat in [0, 1]")
        out = -((a - p) ** 2)
    else:
        raise ValueError(f"unknown reward rule: {rule!r}")
    return float(out) if scalar else out


def reward_tables(tokens: np.ndarray, rule: RewardRule):
    """Per-token rewards (r(t, 0), r(t, 1)) for a vocabulary of probabilities."""
    zeros = np.zeros_like(tokens, dtype=np.int64)
    return reward(tokens, zeros, rule), reward(tokens, zeros + 1, rule)


def dataset_to_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["question_id", "category_id", "answer"])
        for q, c, a in zip(dataset.question_id, dataset.category_id,
                           dataset.answer):
            w.writerow([int(q), int(c), int(a)])


def dataset_from_csv(path, split: str = "train") -> Dataset:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["question_id", "category_id", "answer"]:
            raise ValueError(f"unexpected dataset header: {header!r}")
        rows = [(int(q), int(c), int(a)) for q, c, a in r]
    if not rows:
        raise ValueError("empty dataset file")
    q, c, a = (np.array(col, dtype=np.int64) for col in zip(*rows))
    return Dataset(question_id=q, category_id=c, answer=a, split=split)
