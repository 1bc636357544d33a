import collections
import random

import pytest

import oracles
from conftest import random_abstract
from test_absdom import ab1
from blockdiff.absdom import MUST, MUSTNOT, AbstractBlock, AbstractInsn, AliasMap, EditDistance, represent
from blockdiff.bblock import do_alias
from blockdiff.sampler import (
    EmptyConcretization,
    SampleFailure,
    SamplerConfig,
    UnderfilledBatch,
    sample,
    sample_batch,
    sample_unconstrained,
)


def test_samples_are_members(U, cfg):
    rng = random.Random(1)
    for _ in range(300):
        ab = random_abstract(rng)
        b = sample(ab, U, cfg, rng)
        assert oracles.member(b, ab, U)


def test_example_must_alias(EX, cfg):
    rng = random.Random(2)
    for _ in range(100):
        b = sample(ab1(), EX, cfg, rng)
        assert b.insns[0].scheme.mnemonic == "mov" and b.insns[1].scheme.mnemonic == "add"
        assert do_alias(b.operand(1, 1), b.operand(2, 2))
        assert oracles.member(b, ab1(), EX)


def test_memory_mustnot_gets_distinct_locations(U, cfg):
    rng = random.Random(3)
    store = AbstractInsn.of(U.scheme("mov_m64_r64"))
    load = AbstractInsn.of(U.scheme("add_r64_m64"))
    must = AbstractBlock((store, load), AliasMap.from_mapping({((1, 1), (2, 2)): MUST}))
    mustnot = AbstractBlock((store, load), AliasMap.from_mapping({((1, 1), (2, 2)): MUSTNOT}))
    for _ in range(100):
        b = sample(must, U, cfg, rng)
        assert b.operand(1, 1) == b.operand(2, 2)
        b = sample(mustnot, U, cfg, rng)
        assert not do_alias(b.operand(1, 1), b.operand(2, 2))


def five_pairwise_distinct(U):
    insn = AbstractInsn.of(U.scheme("add_r64_r64"))
    pairs = {((i, 1), (j, 1)): MUSTNOT for i in range(1, 6) for j in range(i + 1, 6)}
    return AbstractBlock((insn,) * 5, AliasMap.from_mapping(pairs))


def test_unsatisfiable_constraints_raise_sample_failure(U):
    cfg = SamplerConfig(max_retries=7)
    with pytest.raises(SampleFailure) as exc:
        sample(five_pairwise_distinct(U), U, cfg, random.Random(4))
    assert exc.value.attempts == 7
    assert "no register left" in exc.value.constraint


def test_underfilled_batch_reports_failures(U):
    cfg = SamplerConfig(max_retries=3)
    with pytest.raises(UnderfilledBatch) as exc:
        sample_batch(five_pairwise_distinct(U), 4, U, cfg, random.Random(5))
    assert exc.value.blocks == [] and exc.value.failures == 4 and exc.value.requested == 4


def test_batch_counts_and_determinism(U, cfg):
    ab = represent(sample_unconstrained(3, U, cfg, random.Random(6)))
    a = sample_batch(ab, 20, U, cfg, random.Random(7))
    b = sample_batch(ab, 20, U, cfg, random.Random(7))
    assert len(a.blocks) == 20 and a.failures == 0
    assert a.blocks == b.blocks
    with pytest.raises(ValueError):
        sample_batch(ab, 0, U, cfg, random.Random(7))


def test_empty_concretization(U, cfg):
    ab = AbstractBlock((AbstractInsn(mnemonic=EditDistance("zzzzzzzzzz", 0)),))
    with pytest.raises(EmptyConcretization):
        sample(ab, U, cfg, random.Random(8))


def test_config_validation_and_capacity(U):
    with pytest.raises(ValueError):
        SamplerConfig(max_retries=0)
    with pytest.raises(ValueError):
        SamplerConfig(memory_displacement_pool=(0, 0))
    with pytest.raises(ValueError):
        SamplerConfig(memory_displacement_pool=())
    small = SamplerConfig(memory_displacement_pool=(0,))
    small.check_capacity(U, 2)  # two bases x one displacement
    with pytest.raises(ValueError, match="memory_displacement_pool"):
        small.check_capacity(U, 3)


def test_unconstrained_length_bounds(U, cfg):
    rng = random.Random(9)
    for n in range(1, cfg.max_block_len + 1):
        assert len(sample_unconstrained(n, U, cfg, rng)) == n
    for n in (0, cfg.max_block_len + 1):
        with pytest.raises(ValueError):
            sample_unconstrained(n, U, cfg, rng)


def test_scheme_choice_roughly_uniform(U, cfg):
    rng = random.Random(10)
    counts = collections.Counter(
        sample_unconstrained(1, U, cfg, rng).insns[0].scheme.id for _ in range(3000)
    )
    assert set(counts) == {s.id for s in U.schemes}
    assert all(50 <= c <= 150 for c in counts.values())  # expected 100 each


def test_operands_respect_config(U):
    cfg = SamplerConfig(memory_displacement_pool=(8, 16), immediate_range=(3, 5))
    rng = random.Random(11)
    for _ in range(300):
        b = sample_unconstrained(3, U, cfg, rng)
        for insn in b.insns:
            for os_, co in zip(insn.scheme.operands, insn.operands):
                if co.kind == "memory":
                    assert co.mem_displacement in (8, 16) and co.mem_base.reserved_for_memory
                elif co.kind == "register":
                    assert not co.register.reserved_for_memory
                elif os_.fixed_value is None:
                    assert 3 <= co.value <= 5
