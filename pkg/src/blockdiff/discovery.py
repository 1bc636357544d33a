"""Campaigns: sample, filter, minimize and generalize inconsistencies.

A campaign repeatedly samples a random basic block, keeps it only if the two
predictors disagree on it, shrinks it to a 1-minimal interesting core and,
unless an earlier discovery already subsumes the core, generalizes it into an
abstract block. Every generalization records a witness tree: the expansions
that were tried, whether they were kept, and the sampled blocks that decided.
"""
from __future__ import annotations

import logging
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .absdom import (
    AbstractBlock,
    apply_expansion,
    available_expansions,
    block_subsumes,
    describe,
    represent,
    subsumes_concrete,
)
from .bblock import BasicBlock
from .isa import SchemeUniverse
from .predictors import (
    Evaluator,
    Evidence,
    ExternalPredictor,
    Judge,
    PredictorConfigError,
    PredictorSpec,
    abstract_interesting,
    load_predictor,
    probe_support,
)
from .sampler import SampleFailure, SamplerConfig, sample

logger = logging.getLogger(__name__)

__all__ = [
    "Campaign",
    "CampaignConfig",
    "Discovery",
    "WitnessNode",
    "filter_subsumed",
    "generalize",
    "minimize",
    "run_campaign",
]


@dataclass(frozen=True)
class CampaignConfig:
    predictors: tuple
    seed: int
    metric: str = "relative"
    threshold: float = 0.5
    n_samples: int = 100
    max_block_len: int = 5
    generalizations_per_candidate: int = 5
    time_budget: float | None = None
    max_discoveries: int | None = None
    patience: int | None = None
    max_candidates: int | None = None
    parallelism: int = 1
    probe_support: bool = True
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    isa: str | None = None
    filters: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "predictors", tuple(self.predictors))
        object.__setattr__(self, "filters", tuple(self.filters))
        if len(self.predictors) != 2:
            raise ValueError("a campaign compares exactly two predictors")
        for name in ("n_samples", "max_block_len", "generalizations_per_candidate", "parallelism"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        stops = (self.time_budget, self.max_discoveries, self.patience, self.max_candidates)
        if all(s is None for s in stops):
            raise ValueError(
                "set at least one termination condition "
                "(time_budget, max_discoveries, patience or max_candidates)"
            )
        for s in stops:
            if s is not None and s <= 0:
                raise ValueError("termination limits must be positive")
        if self.metric not in ("relative", "absolute"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.threshold <= 0:
            raise ValueError("threshold must be > 0")

    _SCALARS = (
        "seed", "metric", "threshold", "n_samples", "max_block_len",
        "generalizations_per_candidate", "time_budget", "max_discoveries", "patience",
        "max_candidates", "parallelism", "probe_support", "isa",
    )

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: Path | None = None) -> "CampaignConfig":
        d = dict(d)
        known = set(cls._SCALARS) | {"predictors", "sampler", "filters"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {', '.join(sorted(unknown))}")
        if "predictors" not in d or "seed" not in d:
            raise ValueError("config needs 'predictors' and 'seed'")
        preds = tuple(load_predictor(p, base_dir) for p in d["predictors"])
        s = d.get("sampler", {})
        sampler = SamplerConfig(
            max_retries=s.get("max_retries", 100),
            memory_displacement_pool=tuple(s.get("memory_displacement_pool", (0, 64, 128, 192))),
            max_block_len=max(d.get("max_block_len", 5), 8),
        )
        kwargs = {k: d[k] for k in cls._SCALARS if k in d}
        if kwargs.get("isa") and base_dir is not None and not Path(kwargs["isa"]).is_absolute():
            kwargs["isa"] = str(base_dir / kwargs["isa"])
        return cls(predictors=preds, sampler=sampler, filters=tuple(d.get("filters", ())), **kwargs)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self._SCALARS}
        out["predictors"] = [p.to_dict() for p in self.predictors]
        out["sampler"] = {
            "max_retries": self.sampler.max_retries,
            "memory_displacement_pool": list(self.sampler.memory_displacement_pool),
        }
        out["filters"] = list(self.filters)
        return out


@dataclass
class WitnessNode:
    block: AbstractBlock
    expansion: Any = None
    outcome: str = "root"  # root | accepted | rejected
    evidence: Evidence = field(default_factory=Evidence)
    children: list = field(default_factory=list)
    base_not_interesting: bool = False

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def final(self) -> "WitnessNode":
        """The last accepted node along the accepted path (the root if none)."""
        node = self
        while True:
            nxt = [c for c in node.children if c.outcome == "accepted"]
            if not nxt:
                return node
            node = nxt[0]


@dataclass
class Discovery:
    id: int
    block: AbstractBlock
    origin: BasicBlock
    witness: WitnessNode
    mean_difference: float = math.nan
    generality: int = 0

    @property
    def evidence(self) -> Evidence:
        return self.witness.final().evidence

    @property
    def generalized(self) -> bool:
        return not self.witness.base_not_interesting


@dataclass
class Campaign:
    config: CampaignConfig
    universe: SchemeUniverse
    discoveries: list
    stats: dict


def _child(rng: random.Random) -> random.Random:
    return random.Random(rng.getrandbits(64))


def minimize(block: BasicBlock, judge: Judge, rng: random.Random) -> BasicBlock:
    """Greedily drop instructions while the block stays interesting (1-minimal result)."""
    current = block
    changed = True
    while changed and len(current) > 1:
        changed = False
        order = list(range(len(current)))
        rng.shuffle(order)
        for pos in order:
            candidate = current.without(pos)
            if judge.interesting(candidate):
                current = candidate
                changed = True
                break
    return current


def generalize(
    block: BasicBlock,
    judge: Judge,
    n_samples: int,
    universe: SchemeUniverse,
    sampler_cfg: SamplerConfig,
    rng: random.Random,
) -> tuple[AbstractBlock, WitnessNode]:
    """Expand ``represent(block)`` in random order, keeping expansions that stay interesting."""
    ab = represent(block)
    ok, ev = abstract_interesting(ab, judge, n_samples, universe, sampler_cfg, rng)
    root = WitnessNode(ab, evidence=ev, base_not_interesting=not ok)
    if not ok:
        return ab, root
    node = root
    rejected: set = set()
    while True:
        avail = [e for e in available_expansions(ab) if e not in rejected]
        if not avail:
            return ab, root
        exp = rng.choice(avail)
        candidate = apply_expansion(ab, exp)
        ok, ev = abstract_interesting(candidate, judge, n_samples, universe, sampler_cfg, rng)
        child = WitnessNode(candidate, exp, "accepted" if ok else "rejected", ev)
        node.children.append(child)
        if ok:
            ab, node = candidate, child
        else:
            rejected.add(exp)


def filter_subsumed(discoveries: Sequence[Discovery], universe: SchemeUniverse) -> list:
    """Drop each discovery that some later discovery subsumes."""
    out = []
    for i, d in enumerate(discoveries):
        if not any(block_subsumes(later.block, d.block, universe) for later in discoveries[i + 1 :]):
            out.append(d)
    return out


def startup_probe(cfg: CampaignConfig, universe: SchemeUniverse, evaluator: Evaluator) -> SchemeUniverse:
    """Check both predictors and restrict the universe to schemes both support."""
    for p in cfg.predictors:
        if isinstance(p, ExternalPredictor):
            p.check_available()
    if not cfg.probe_support:
        return universe
    rng = random.Random(cfg.seed ^ 0x5EED)
    keep = {s.id for s in universe.schemes}
    for p in cfg.predictors:
        supported = set(probe_support(p, universe, cfg.sampler, rng, evaluator))
        if not supported:
            raise PredictorConfigError(f"predictor {p.name!r} supports none of the schemes")
        keep &= supported
    if not keep:
        raise PredictorConfigError("the predictors have no supported scheme in common")
    return universe.restrict(sorted(keep)) if len(keep) < len(universe) else universe


def run_campaign(cfg: CampaignConfig, universe: SchemeUniverse) -> Campaign:
    from .analysis import generality, mean_interestingness

    started = time.monotonic()
    evaluator = Evaluator(cfg.parallelism)
    judge = Judge(cfg.predictors, cfg.metric, cfg.threshold, evaluator)
    cfg.sampler.check_capacity(universe, cfg.max_block_len)
    full_size = len(universe)
    universe = startup_probe(cfg, universe, evaluator)

    rng = random.Random(cfg.seed)
    discoveries: list[Discovery] = []
    stats = {
        "universe_size": full_size,
        "supported_schemes": len(universe),
        "candidates": 0,
        "interesting_candidates": 0,
        "subsumed_early": 0,
        "sampler_failures": 0,
        "sampling_operations": 0,
        "not_generalizable": 0,
    }
    since_last = 0

    def done() -> bool:
        if cfg.time_budget is not None and time.monotonic() - started >= cfg.time_budget:
            return True
        if cfg.max_discoveries is not None and len(discoveries) >= cfg.max_discoveries:
            return True
        if cfg.patience is not None and since_last >= cfg.patience:
            return True
        return cfg.max_candidates is not None and stats["candidates"] >= cfg.max_candidates

    while not done():
        crng = _child(rng)
        stats["candidates"] += 1
        since_last += 1
        n = crng.randint(1, cfg.max_block_len)
        try:
            candidate = sample(AbstractBlock.top(n), universe, cfg.sampler, crng)
        except SampleFailure:
            stats["sampler_failures"] += 1
            continue
        if not judge.interesting(candidate):
            continue
        stats["interesting_candidates"] += 1
        core = minimize(candidate, judge, crng)
        if any(subsumes_concrete(d.block, core, universe) for d in discoveries):
            stats["subsumed_early"] += 1
            continue
        for _ in range(cfg.generalizations_per_candidate):
            ab, tree = generalize(core, judge, cfg.n_samples, universe, cfg.sampler, _child(crng))
            d = Discovery(len(discoveries), ab, core, tree)
            d.mean_difference = mean_interestingness(d, cfg.metric)
            d.generality = generality(d, universe)
            discoveries.append(d)
            if tree.base_not_interesting:
                stats["not_generalizable"] += 1
            logger.info("discovery %d: %s", d.id, " | ".join(describe(ab)))
        since_last = 0

    stats["sampling_operations"] += stats["candidates"]
    for d in discoveries:
        for node in d.witness.walk():
            stats["sampling_operations"] += len(node.evidence.samples) + node.evidence.sampler_failures
            stats["sampler_failures"] += node.evidence.sampler_failures
    stats["discoveries_before_filter"] = len(discoveries)
    final = filter_subsumed(discoveries, universe)
    stats["discoveries"] = len(final)
    stats["wall_time_s"] = time.monotonic() - started
    return Campaign(cfg, universe, final, stats)

