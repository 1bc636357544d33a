"""Random concretization of abstract blocks.

Sampling proceeds greedily in three steps: pick a represented scheme per
abstract instruction, pin fixed-register operands (propagating must-alias
constraints), then fill the remaining operands while avoiding must-not-alias
conflicts. A pass that dead-ends is discarded and retried from scratch; there
is no backtracking within a pass.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import NamedTuple

from .absdom import MUST, AbstractBlock, gamma_in
from .bblock import BasicBlock, ConcreteOperand, InstructionInstance
from .isa import OperandScheme, SchemeUniverse

__all__ = [
    "EmptyConcretization",
    "SampleBatch",
    "SampleFailure",
    "SamplerConfig",
    "UnderfilledBatch",
    "sample",
    "sample_batch",
    "sample_unconstrained",
]


class SampleFailure(RuntimeError):
    """All sampling passes dead-ended. ``constraint`` names the last blocker."""

    def __init__(self, constraint: str, attempts: int):
        super().__init__(f"sampling failed after {attempts} passes: {constraint}")
        self.constraint = constraint
        self.attempts = attempts


class EmptyConcretization(ValueError):
    """Some abstract instruction represents no scheme of the universe."""


class UnderfilledBatch(RuntimeError):
    def __init__(self, blocks: list, failures: int, requested: int):
        super().__init__(f"only {len(blocks)} of {requested} blocks sampled ({failures} failures)")
        self.blocks = blocks
        self.failures = failures
        self.requested = requested


@dataclass(frozen=True)
class SamplerConfig:
    max_retries: int = 100
    memory_displacement_pool: tuple = (0, 64, 128, 192)
    immediate_range: tuple = (0, 127)
    # hard bound on block length accepted by sample_unconstrained
    max_block_len: int = 8

    def __post_init__(self):
        object.__setattr__(self, "memory_displacement_pool", tuple(self.memory_displacement_pool))
        if self.max_retries < 1:
            raise ValueError("max_retries must be positive")
        pool = self.memory_displacement_pool
        if not pool or len(set(pool)) != len(pool):
            raise ValueError("displacement pool must be non-empty and pairwise distinct")

    def memory_locations(self, universe: SchemeUniverse) -> list:
        return [(b, d) for b in universe.memory_bases for d in self.memory_displacement_pool]

    def check_capacity(self, universe: SchemeUniverse, block_len: int) -> None:
        """Reject configurations that cannot give each instruction its own memory location."""
        n = len(self.memory_locations(universe))
        if n < block_len:
            raise ValueError(
                f"{n} distinct memory locations (bases x displacements) cannot separate "
                f"{block_len} instructions; enlarge memory_displacement_pool"
            )


class _DeadEnd(Exception):
    pass


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _may_match(a: OperandScheme, b: OperandScheme, universe: SchemeUniverse) -> bool:
    if a.kind == "memory" and b.kind == "memory":
        return True
    if a.is_register and b.is_register:
        return _reg_class(a, universe) == _reg_class(b, universe)
    return False


def _reg_class(o: OperandScheme, universe: SchemeUniverse) -> str:
    if o.kind == "fixed-register":
        return universe.register(o.fixed_register).reg_class
    return o.register_class


def _allowed_groups(o: OperandScheme, universe: SchemeUniverse) -> set:
    if o.kind == "fixed-register":
        return {universe.register(o.fixed_register).alias_group}
    return {
        r.alias_group
        for r in universe.registers
        if r.reg_class == o.register_class and r.width == o.width and not r.reserved_for_memory
    }


def _register_in(group: str, o: OperandScheme, universe: SchemeUniverse):
    if o.kind == "fixed-register":
        return universe.register(o.fixed_register)
    for r in universe.alias_groups()[group]:
        if r.reg_class == o.register_class and r.width == o.width:
            return r
    raise _DeadEnd(f"alias group {group} has no {o.register_class}:{o.width} register")


def _gamma_lists(ab: AbstractBlock, universe: SchemeUniverse) -> list:
    out = []
    for k, insn in enumerate(ab.insns, 1):
        g = sorted(gamma_in(insn, universe))
        if not g:
            raise EmptyConcretization(f"abstract instruction {k} represents no scheme")
        out.append(g)
    return out


def _sample_pass(ab, universe, cfg, rng, gammas) -> BasicBlock:
    # step 1: schemes
    schemes = [universe.schemes[rng.choice(g)] for g in gammas]
    slots = {
        (ii, oi): os_
        for ii, s in enumerate(schemes, 1)
        for oi, os_ in enumerate(s.operands, 1)
    }
    aliased = [p for p, o in slots.items() if o.kind != "immediate"]
    uf = _UnionFind(aliased)
    mustnot = []
    for (p, q), kind in ab.aliasing.items():
        if p not in slots or q not in slots or not _may_match(slots[p], slots[q], universe):
            continue
        if kind == MUST:
            uf.union(p, q)
        else:
            mustnot.append((p, q))

    classes: dict = {}
    for p in aliased:
        classes.setdefault(uf.find(p), []).append(p)
    forbid: dict = {root: set() for root in classes}
    for p, q in mustnot:
        rp, rq = uf.find(p), uf.find(q)
        if rp == rq:
            raise _DeadEnd(f"operands {p} and {q} must and must not alias")
        forbid[rp].add(rq)
        forbid[rq].add(rp)

    choice: dict = {}

    def assign(root, candidates, what):
        taken = {choice[n] for n in forbid[root] if n in choice}
        free = sorted(c for c in candidates if c not in taken)
        if not free:
            raise _DeadEnd(f"no {what} left for operands {classes[root]}")
        choice[root] = rng.choice(free)

    locations = cfg.memory_locations(universe)
    loc_keys = [(b.name, d) for b, d in locations]
    bases = {b.name: b for b, _ in locations}

    def candidates(root):
        ops = [slots[p] for p in classes[root]]
        if ops[0].kind == "memory":
            return None
        allowed = set.intersection(*(_allowed_groups(o, universe) for o in ops))
        if not allowed:
            raise _DeadEnd(f"operands {classes[root]} cannot share a register")
        return allowed

    # step 2: fixed registers first, then step 3: everything else in position order
    roots = sorted(classes)
    fixed = [r for r in roots if any(slots[p].kind == "fixed-register" for p in classes[r])]
    rest = [r for r in roots if r not in fixed]
    for root in fixed + rest:
        cands = candidates(root)
        if cands is None:
            if not loc_keys:
                raise _DeadEnd("no reserved memory base registers")
            assign(root, loc_keys, "memory location")
        else:
            assign(root, cands, "register")

    insns = []
    for ii, s in enumerate(schemes, 1):
        ops = []
        for oi, os_ in enumerate(s.operands, 1):
            if os_.kind == "immediate":
                if os_.fixed_value is not None:
                    v = os_.fixed_value
                else:
                    hi = min(cfg.immediate_range[1], 2 ** (os_.width - 1) - 1)
                    v = rng.randint(cfg.immediate_range[0], hi)
                ops.append(ConcreteOperand.imm(v))
                continue
            c = choice[uf.find((ii, oi))]
            if os_.kind == "memory":
                ops.append(ConcreteOperand.mem(bases[c[0]], c[1]))
            else:
                ops.append(ConcreteOperand.reg(_register_in(c, os_, universe)))
        insns.append(InstructionInstance(s, tuple(ops)))
    block = BasicBlock(tuple(insns))
    if __debug__:
        for insn in block.insns:
            for co in insn.operands:
                if co.kind == "memory":
                    assert (co.mem_base.name, co.mem_displacement) in loc_keys
                elif co.kind == "register":
                    assert not co.register.reserved_for_memory
    return block


class _Counter:
    def __init__(self):
        self.failed_passes = 0


def sample(
    ab: AbstractBlock,
    universe: SchemeUniverse,
    cfg: SamplerConfig,
    rng: random.Random,
    stats: _Counter | None = None,
) -> BasicBlock:
    """Draw one block from the concretization of ``ab``.

    Raises :class:`EmptyConcretization` if an abstract instruction is
    unsatisfiable and :class:`SampleFailure` once ``cfg.max_retries`` passes
    have dead-ended.
    """
    gammas = _gamma_lists(ab, universe)
    reason = ""
    for _ in range(cfg.max_retries):
        try:
            return _sample_pass(ab, universe, cfg, rng, gammas)
        except _DeadEnd as exc:
            reason = str(exc)
            if stats is not None:
                stats.failed_passes += 1
    raise SampleFailure(reason, cfg.max_retries)


def sample_unconstrained(
    n: int, universe: SchemeUniverse, cfg: SamplerConfig, rng: random.Random
) -> BasicBlock:
    if not 1 <= n <= cfg.max_block_len:
        raise ValueError(f"block length must be in [1, {cfg.max_block_len}], got {n}")
    return sample(AbstractBlock.top(n), universe, cfg, rng)


class SampleBatch(NamedTuple):
    blocks: list
    failures: int
    failed_passes: int = 0


def sample_batch(
    ab: AbstractBlock,
    count: int,
    universe: SchemeUniverse,
    cfg: SamplerConfig,
    rng: random.Random,
) -> SampleBatch:
    """Sample ``count`` blocks. Failed draws are counted and replaced; a short batch raises."""
    if count < 1:
        raise ValueError("count must be >= 1")
    stats = _Counter()
    blocks, failures = [], 0
    # a failed draw gets replaced, but at most ``count`` times in total
    while len(blocks) < count and failures < count:
        try:
            blocks.append(sample(ab, universe, cfg, rng, stats))
        except SampleFailure:
            failures += 1
    if len(blocks) < count:
        raise UnderfilledBatch(blocks, failures, count)
    return SampleBatch(blocks, failures, stats.failed_passes)
