"""A scikit-learn style facade over campaigns.

``fit`` runs a campaign on a scheme universe; the fitted discoveries then act
as a classifier over concrete blocks (which discovery explains a block) and
as a feature map (which discoveries subsume a block).
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .analysis import coverage, subsumption_matrix
from .bblock import BasicBlock
from .discovery import CampaignConfig, run_campaign
from .fixtures import mini_isa
from .isa import SchemeUniverse
from .predictors import Evaluator, Judge

__all__ = ["InconsistencyFinder"]


def check_blocks(blocks) -> list:
    """Validate estimator input: a non-empty sequence of concrete basic blocks."""
    if isinstance(blocks, BasicBlock):
        raise TypeError("expected a sequence of BasicBlock, got a single block; wrap it in a list")
    try:
        blocks = list(blocks)
    except TypeError:
        raise TypeError(f"expected a sequence of BasicBlock, got {type(blocks).__name__}") from None
    if not blocks:
        raise ValueError("expected at least one block")
    bad = [i for i, b in enumerate(blocks) if not isinstance(b, BasicBlock)]
    if bad:
        raise TypeError(f"element {bad[0]} is {type(blocks[bad[0]]).__name__}, not BasicBlock")
    return blocks


class InconsistencyFinder(BaseEstimator):
    """Discover inconsistencies between ``predictors`` (a pair) on a universe.

    Hyperparameters mirror :class:`~blockdiff.discovery.CampaignConfig`.
    Fitted attributes: ``discoveries_``, ``stats_``, ``universe_``, ``config_``.
    """

    def __init__(
        self,
        predictors=None,
        seed: int = 0,
        metric: str = "relative",
        threshold: float = 0.5,
        n_samples: int = 100,
        max_block_len: int = 5,
        generalizations_per_candidate: int = 5,
        patience: int | None = 50,
        max_discoveries: int | None = None,
        max_candidates: int | None = None,
        time_budget: float | None = None,
        parallelism: int = 1,
        probe_support: bool = True,
    ):
        self.predictors = predictors
        self.seed = seed
        self.metric = metric
        self.threshold = threshold
        self.n_samples = n_samples
        self.max_block_len = max_block_len
        self.generalizations_per_candidate = generalizations_per_candidate
        self.patience = patience
        self.max_discoveries = max_discoveries
        self.max_candidates = max_candidates
        self.time_budget = time_budget
        self.parallelism = parallelism
        self.probe_support = probe_support

    def fit(self, X: SchemeUniverse | None = None, y=None):
        """Run a campaign over universe ``X`` (the built-in mini ISA if None). ``y`` is ignored."""
        if X is None:
            X = mini_isa()
        if not isinstance(X, SchemeUniverse):
            raise TypeError(f"fit expects a SchemeUniverse, got {type(X).__name__}")
        if self.predictors is None or len(self.predictors) != 2:
            raise ValueError("predictors must be a pair of predictor specs")
        self.config_ = CampaignConfig(
            predictors=tuple(self.predictors),
            seed=self.seed,
            metric=self.metric,
            threshold=self.threshold,
            n_samples=self.n_samples,
            max_block_len=self.max_block_len,
            generalizations_per_candidate=self.generalizations_per_candidate,
            patience=self.patience,
            max_discoveries=self.max_discoveries,
            max_candidates=self.max_candidates,
            time_budget=self.time_budget,
            parallelism=self.parallelism,
            probe_support=self.probe_support,
        )
        campaign = run_campaign(self.config_, X)
        self.discoveries_ = list(campaign.discoveries)
        self.stats_ = dict(campaign.stats)
        self.universe_ = campaign.universe
        return self

    def transform(self, blocks: Sequence[BasicBlock]) -> np.ndarray:
        """``(n_blocks, n_discoveries)`` 0/1 matrix: does discovery ``j`` subsume block ``i``."""
        check_is_fitted(self, "discoveries_")
        blocks = check_blocks(blocks)
        return subsumption_matrix(self.discoveries_, blocks, self.universe_).T.astype(float)

    def predict(self, blocks: Sequence[BasicBlock]) -> np.ndarray:
        """Position in ``discoveries_`` of the first discovery subsuming each block, or -1."""
        m = self.transform(blocks) > 0
        if m.shape[1] == 0:
            return np.full(m.shape[0], -1)
        return np.where(m.any(axis=1), m.argmax(axis=1), -1)

    def score(self, blocks: Sequence[BasicBlock], y=None) -> float:
        """Fraction of the blocks' interesting ones that some discovery explains (1.0 if none)."""
        check_is_fitted(self, "discoveries_")
        blocks = check_blocks(blocks)
        judge = Judge(self.config_.predictors, self.metric, self.threshold, Evaluator(self.parallelism))
        return coverage(self.discoveries_, blocks, judge, self.universe_).covered_fraction
