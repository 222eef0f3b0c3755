"""Measure the action-generalization gap of Q-learning on augmented action spaces."""

from .augmentation import (AugmentationSpec, AugmentedEnv, SimilarityMatrix, build_augmentation,
                           identity_similarity)
from .curves import LearningCurve, curve_auc, read_curve, steps_to_threshold, write_curve
from .dqn import DqnConfig, train_dqn, weighted_td_loss
from .envs import CartPole, ChainMDP, Pendulum, chain_optimal_q, make_env
from .harness import ExperimentConfig, GapReport, generalization_gap, run_experiment
from .qcore import AgentHyperparams, TabularQ, Transition, oracle_q_update, train_tabular

__version__ = "0.1.0"

__all__ = [
    "AgentHyperparams", "AugmentationSpec", "AugmentedEnv", "CartPole", "ChainMDP", "DqnConfig",
    "ExperimentConfig", "GapReport", "LearningCurve", "Pendulum", "SimilarityMatrix", "TabularQ",
    "Transition", "build_augmentation", "chain_optimal_q", "curve_auc", "generalization_gap",
    "identity_similarity", "make_env", "oracle_q_update", "read_curve", "run_experiment",
    "steps_to_threshold", "train_dqn", "train_tabular", "weighted_td_loss", "write_curve",
]
