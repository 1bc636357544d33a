"""Differential testing of basic-block throughput predictors.

Finds blocks on which two predictors disagree, minimizes them and generalizes
them into abstract blocks that describe whole classes of inconsistencies.
"""
__version__ = "0.1.0"

from .absdom import AbstractBlock, AbstractInsn, block_subsumes, member, represent, subsumes_concrete
from .analysis import coverage, generality, inconsistency_matrix, mean_interestingness, rank, select_cover
from .bblock import BasicBlock, render
from .discovery import CampaignConfig, Discovery, filter_subsumed, generalize, minimize, run_campaign
from .estimator import InconsistencyFinder
from .fixtures import mini_isa
from .isa import SchemeUniverse, load_universe
from .predictors import ExternalPredictor, SyntheticPredictor, load_predictor, rel_difference
from .sampler import SamplerConfig, sample, sample_batch

__all__ = [
    "AbstractBlock",
    "AbstractInsn",
    "BasicBlock",
    "CampaignConfig",
    "Discovery",
    "ExternalPredictor",
    "InconsistencyFinder",
    "SamplerConfig",
    "SchemeUniverse",
    "SyntheticPredictor",
    "block_subsumes",
    "coverage",
    "filter_subsumed",
    "generality",
    "generalize",
    "inconsistency_matrix",
    "load_predictor",
    "load_universe",
    "mean_interestingness",
    "member",
    "mini_isa",
    "minimize",
    "rank",
    "rel_difference",
    "render",
    "represent",
    "run_campaign",
    "sample",
    "sample_batch",
    "select_cover",
    "subsumes_concrete",
]
