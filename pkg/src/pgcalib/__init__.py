"""Policy-gradient calibration testbed for stochastic binary outcomes."""

from .advantage import (Algo, EstimatorSpec, adv_grpo, adv_grpo_nostd,
                        adv_ppo, adv_rloo, expected_nostd_advantage,
                        true_advantage, true_advantage_all)
from .bias import (AdvantageCurve, FixedPolicy, SigmaPair,
                   approx_grpo_advantage, discretize_beta,
                   empirical_advantage_curve, exact_advantage_curve,
                   sigma_estimates)
from .env import (CategoryTable, Dataset, RewardRule, Sample,
                  dataset_from_csv, dataset_to_csv, gen_categories,
                  gen_dataset, reward)
from .estimator import PolicyGradientCalibrator
from .metrics import ReliabilityBin, accuracy, auroc, ece, reliability
from .policy import (ProbVocab, RolloutBatch, TabularPolicy, ValueTable,
                     load_checkpoint, save_checkpoint)
from .trainer import (EvalReport, TrainConfig, TrainLogRow, TrainResult,
                      collect_rollouts, evaluate, run)

__version__ = "0.1.0"

__all__ = [
    "Algo", "EstimatorSpec", "adv_grpo", "adv_grpo_nostd", "adv_ppo",
    "adv_rloo", "expected_nostd_advantage", "true_advantage",
    "true_advantage_all", "AdvantageCurve", "FixedPolicy", "SigmaPair",
    "approx_grpo_advantage", "discretize_beta", "empirical_advantage_curve",
    "exact_advantage_curve", "sigma_estimates", "CategoryTable", "Dataset",
    "RewardRule", "Sample", "dataset_from_csv", "dataset_to_csv",
    "gen_categories", "gen_dataset", "reward", "PolicyGradientCalibrator",
    "ReliabilityBin", "accuracy", "auroc", "ece", "reliability", "ProbVocab",
    "RolloutBatch", "TabularPolicy", "ValueTable", "load_checkpoint",
    "save_checkpoint", "EvalReport", "TrainConfig", "TrainLogRow",
    "TrainResult", "collect_rollouts", "evaluate", "run",
]
