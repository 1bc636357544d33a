import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from blockdiff.absdom import apply_expansion, available_expansions, represent  # noqa: E402
from blockdiff.fixtures import mini_isa  # noqa: E402
from blockdiff.isa import parse_universe  # noqa: E402
from blockdiff.predictors import Rule, SyntheticPredictor  # noqa: E402
from blockdiff.sampler import SamplerConfig, sample_unconstrained  # noqa: E402

MINI = mini_isa()


@pytest.fixture(scope="session")
def U():
    return MINI


@pytest.fixture
def cfg():
    return SamplerConfig()


def random_block(rng, n=None, universe=MINI, max_len=5):
    return sample_unconstrained(n or rng.randint(1, max_len), universe, SamplerConfig(), rng)


def random_abstract(rng, n=None, universe=MINI, max_steps=None):
    """β of a random block followed by a random number of random expansions."""
    ab = represent(random_block(rng, n, universe))
    steps = rng.randint(0, ab.steps_to_top()) if max_steps is None else max_steps
    for _ in range(steps):
        avail = available_expansions(ab)
        if not avail:
            break
        ab = apply_expansion(ab, rng.choice(avail))
    return ab


def uniform(name, cost=1.0, rules=(), universe=MINI, **overrides):
    costs = {s.id: cost for s in universe.schemes}
    costs.update(overrides)
    return SyntheticPredictor.build(name, costs, [Rule.from_dict(r) for r in rules])


PLANTED_RULE = {"when": {"mem_alias_rw": True}, "then": {"multiply": 6}}


def planted_pair():
    return uniform("base"), uniform("planted", rules=[PLANTED_RULE])


def _reg(name, width, group, reserved=False):
    return {"name": name, "width": width, "alias_group": group, "reg_class": "GPR",
            "reserved_for_memory": reserved}


def _scheme(sid, mnemonic, category, operands, reads=False, writes=False, size=None, uops=1):
    return {"id": sid, "mnemonic": mnemonic, "category": category, "isa_set": "BASE",
            "prefixes": [], "uop_count": uops,
            "memory": {"reads": reads, "writes": writes, "size": size}, "operands": operands}


R64 = {"kind": "register-class", "access": ["R"], "width": 64, "register_class": "GPR"}
W64 = {"kind": "register-class", "access": ["W"], "width": 64, "register_class": "GPR"}
RW64 = {"kind": "register-class", "access": ["R", "W"], "width": 64, "register_class": "GPR"}
MEM_R = {"kind": "memory", "access": ["R"], "width": 64}
MEM_RW = {"kind": "memory", "access": ["R", "W"], "width": 64}


def example_isa_dict():
    """The registers and schemes of the worked example "mov rbx, [rdx + 42]; add [r8], rbx"."""
    return {
        "registers": [
            _reg("rbx", 64, "b"), _reg("ebx", 32, "b"), _reg("rcx", 64, "c"), _reg("rdx", 64, "d"),
            _reg("r8", 64, "r8", True), _reg("r9", 64, "r9", True),
        ],
        "schemes": [
            _scheme("mov_r64_m64", "mov", "datamov", [W64, MEM_R], reads=True, size=64),
            _scheme("mov_r64_r64", "mov", "datamov", [W64, R64]),
            _scheme("add_m64_r64", "add", "arith", [MEM_RW, R64], reads=True, writes=True, size=64, uops=4),
            _scheme("sub_m64_r64", "sub", "arith", [MEM_RW, R64], reads=True, writes=True, size=64, uops=4),
            _scheme("adc_m64_r64", "adc", "arith", [MEM_RW, R64], reads=True, writes=True, size=64, uops=4),
            _scheme("add_r64_r64", "add", "arith", [RW64, R64]),
            _scheme("xor_r64_r64", "xor", "logical", [RW64, R64]),
            _scheme("bsr_r64_r64", "bsr", "bitbyte", [W64, R64]),
            _scheme("nop", "nop", "nop", []),
        ],
    }


@pytest.fixture(scope="session")
def EX():
    return parse_universe(example_isa_dict(), source="example")


def rng_for(seed):
    return random.Random(seed)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
