import json
import math
import random
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import PLANTED_RULE, planted_pair, random_block, uniform
from blockdiff.absdom import AbstractBlock, AbstractInsn, Singleton
from blockdiff.bblock import BasicBlock, ConcreteOperand, InstructionInstance
from blockdiff.predictors import (
    Crash,
    Cycles,
    Evaluator,
    ExternalPredictor,
    Judge,
    PredictorConfigError,
    Rule,
    SyntheticPredictor,
    Timeout,
    Unsupported,
    abstract_interesting,
    has_memory_dependency,
    is_interesting,
    load_predictor,
    parse_output,
    predict_batch,
    probe_support,
    rel_difference,
    result_difference,
    result_from_json,
    result_to_json,
)
from blockdiff.sampler import SamplerConfig

reg, mem, imm = ConcreteOperand.reg, ConcreteOperand.mem, ConcreteOperand.imm
finite = st.floats(min_value=0, max_value=1e6, allow_nan=False)


def store_load(U, same=True):
    r = U.register
    return BasicBlock((
        InstructionInstance(U.scheme("mov_m64_r64"), (mem(r("r14"), 0), reg(r("rax")))),
        InstructionInstance(U.scheme("add_r64_m64"), (reg(r("rbx")), mem(r("r14"), 0 if same else 64))),
    ))


# -- metric -------------------------------------------------------------------------


@given(finite, finite)
def test_rel_difference_properties(a, b):
    d = rel_difference(a, b)
    assert d == rel_difference(b, a)
    assert 0 <= d <= 2
    assert oracles.isclose(d, oracles.rel_difference(a, b))
    if a == b:
        assert d == 0


@given(st.floats(min_value=1e-3, max_value=1e3), finite, finite)
def test_rel_difference_scale_invariant(c, a, b):
    if a + b > 1e-6:
        assert math.isclose(rel_difference(c * a, c * b), rel_difference(a, b), rel_tol=1e-9, abs_tol=1e-12)


def test_rel_difference_examples():
    assert rel_difference(0, 0) == 0
    assert rel_difference(1, 6) == pytest.approx(10 / 7)
    assert rel_difference(0, 5) == 2


def test_interestingness_of_failures():
    assert is_interesting((Crash("x"), Cycles(1)), "relative", 0.5)
    assert is_interesting((Cycles(1), Timeout()), "relative", 0.5)
    assert not is_interesting((Unsupported(), Cycles(1)), "relative", 0.5)
    assert not is_interesting((Cycles(1), Cycles(1.5)), "relative", 0.5)  # 0.4
    assert is_interesting((Cycles(1), Cycles(2)), "relative", 0.5)  # 0.667
    assert not is_interesting((Cycles(1), Cycles(2)), "absolute", 1.0)  # strictly greater
    assert result_difference((Crash(), Cycles(1)), "relative") == math.inf
    assert result_difference((Unsupported(), Cycles(1)), "relative") is None


def test_result_json_round_trip():
    for r in (Cycles(3.5), Crash("boom"), Timeout(), Unsupported()):
        assert result_from_json(json.loads(json.dumps(result_to_json(r)))) == r
    with pytest.raises(ValueError):
        Cycles(-1)
    with pytest.raises(ValueError):
        Cycles(math.inf)


# -- synthetic predictors -------------------------------------------------------------


def test_planted_rule_fires_only_on_dependency(U):
    base, planted = planted_pair()
    dep, nodep = store_load(U), store_load(U, same=False)
    assert base(dep) == Cycles(2) and planted(dep) == Cycles(12)
    assert planted(nodep) == Cycles(2)
    rng = random.Random(1)
    for _ in range(500):
        b = random_block(rng)
        assert has_memory_dependency(b) == oracles.memory_rw_dependency(b)
        expected = len(b) * (6 if oracles.memory_rw_dependency(b) else 1)
        assert planted(b) == Cycles(expected)


def test_rules_apply_in_order(U):
    r = U.register
    shl = BasicBlock((InstructionInstance(U.scheme("shl_r64_cl"), (reg(r("rax")), reg(r("cl")))),))
    p = uniform("p", cost=2.0, rules=[
        {"when": {"feature": "category", "equals": "shift"}, "then": {"add": 1}},
        {"when": {"min_length": 1}, "then": {"multiply": 3}},
    ])
    assert p(shl) == Cycles(9)
    crash = uniform("c", rules=[{"when": {"feature": "scheme", "equals": "shl_r64_cl"}, "then": {"crash": "boom"}}])
    assert crash(shl) == Crash("boom")
    partial = SyntheticPredictor.build("partial", {"add_r64_r64": 1.0})
    assert partial(shl) == Unsupported()
    with_default = SyntheticPredictor.build("d", {"add_r64_r64": 1.0}, default_cost=4.0)
    assert with_default(shl) == Cycles(4.0)


def test_rule_validation():
    with pytest.raises(PredictorConfigError):
        Rule.from_dict({"when": {"feature": "latency", "equals": 3}, "then": {"add": 1}})
    with pytest.raises(PredictorConfigError):
        Rule.from_dict({"when": {"sometimes": True}, "then": {"add": 1}})
    with pytest.raises(PredictorConfigError):
        Rule.from_dict({"when": {"min_length": 2}, "then": {"divide": 2}})
    with pytest.raises(PredictorConfigError):
        SyntheticPredictor.build("neg", {"nop": -1})
    r = Rule.from_dict(PLANTED_RULE)
    assert Rule.from_dict(r.to_dict()) == r


def test_load_predictor(tmp_path):
    spec = uniform("base").to_dict()
    assert load_predictor(spec) == uniform("base")
    p = tmp_path / "tool.json"
    spec.pop("name")
    p.write_text(json.dumps(spec))
    loaded = load_predictor("tool.json", base_dir=tmp_path)
    assert loaded.name == "tool"
    with pytest.raises(PredictorConfigError, match="cannot load"):
        load_predictor(tmp_path / "missing.json")
    with pytest.raises(PredictorConfigError, match="needs 'costs'"):
        load_predictor({"type": "synthetic", "name": "x"})
    with pytest.raises(PredictorConfigError, match="needs 'command'"):
        load_predictor({"type": "external", "name": "x"})
    with pytest.raises(PredictorConfigError, match="stdin"):
        load_predictor({"type": "external", "name": "x", "command": "cat", "input": "pipe"})
    with pytest.raises(PredictorConfigError, match="unknown predictor type"):
        load_predictor({"type": "oracle"})
    ext = load_predictor({"type": "external", "name": "x", "command": "tool --fast", "env": {"A": "1"}})
    assert ext.command == ("tool", "--fast") and ext.env == (("A", "1"),)


# -- external predictors ---------------------------------------------------------------


def script(tmp_path, name, body):
    p = tmp_path / name
    p.write_text("import sys, time\n" + body)
    return p


def ext(path, *args, **kw):
    return ExternalPredictor(path.stem, (sys.executable, str(path), *args), **kw)


def test_external_stdin_and_file(tmp_path, U):
    lines = script(tmp_path, "lines.py", "print(len(sys.stdin.read().splitlines()) * 1.5)\n")
    from_file = script(tmp_path, "fromfile.py", "print(len(open(sys.argv[1]).read().splitlines()))\nprint('extra')\n")
    b = store_load(U)
    assert ext(lines)(b) == Cycles(3.0)
    assert ext(from_file, "{file}", input_mode="file")(b) == Cycles(2.0)


def test_external_failures(tmp_path, U):
    b = store_load(U)
    crash = ext(script(tmp_path, "crash.py", "sys.stderr.write('segfault'); sys.exit(3)\n"))(b)
    assert isinstance(crash, Crash) and "exit code 3" in crash.detail and "segfault" in crash.detail
    assert ext(script(tmp_path, "slow.py", "time.sleep(5)\n"), timeout=0.3)(b) == Timeout()
    assert isinstance(ext(script(tmp_path, "junk.py", "print('n/a')\n"))(b), Crash)
    missing = ExternalPredictor("missing", ("/nonexistent/tool",))
    assert isinstance(missing(b), Crash)
    with pytest.raises(PredictorConfigError, match="not found"):
        missing.check_available()


def test_parse_output():
    assert parse_output("4.25\nnoise\n") == Cycles(4.25)
    assert isinstance(parse_output(""), Crash)
    assert isinstance(parse_output("-1"), Crash)
    assert isinstance(parse_output("inf"), Crash)
    assert isinstance(parse_output("nan"), Crash)


def test_evaluator_caches_by_text(tmp_path, U):
    log = tmp_path / "calls.log"
    counter = script(tmp_path, "count.py", f"open({str(log)!r}, 'a').write('x')\nprint(1)\n")
    p = ext(counter)
    ev = Evaluator(parallelism=3)
    blocks = [store_load(U), store_load(U, same=False), store_load(U)]
    assert ev.evaluate(p, blocks) == [Cycles(1)] * 3
    assert ev.evaluate(p, blocks[:2]) == [Cycles(1)] * 2
    assert log.read_text() == "xx" and ev.invocations == 2
    with pytest.raises(ValueError):
        Evaluator(parallelism=0)


def test_parallelism_does_not_change_results(U):
    rng = random.Random(2)
    blocks = [random_block(rng) for _ in range(100)]
    pair = planted_pair()
    assert predict_batch(pair, blocks, 1) == predict_batch(pair, blocks, 8)


# -- abstract interestingness and probing -----------------------------------------------


def test_abstract_interesting(U, cfg):
    judge = Judge(planted_pair())
    ok, ev = abstract_interesting(AbstractBlock.top(2), judge, 20, U, cfg, random.Random(3))
    assert not ok and len(ev.samples) == 20
    crash = uniform("c", rules=[{"when": {"feature": "category", "equals": "shift"}, "then": {"crash": "x"}}])
    judge = Judge((uniform("base"), crash))
    shift = AbstractBlock((AbstractInsn(category=Singleton("shift")),))
    ok, ev = abstract_interesting(shift, judge, 20, U, cfg, random.Random(4))
    assert ok and ev.all_interesting and ev.failure is None
    with pytest.raises(ValueError):
        abstract_interesting(shift, judge, 0, U, cfg, random.Random(4))
    with pytest.raises(ValueError):
        Judge(planted_pair(), threshold=0)


def test_probe_support(U, cfg):
    costs = {s.id: (0.0 if s.id == "mov_r16_r16" else 1.0) for s in U.schemes if s.category != "shift"}
    p = SyntheticPredictor.build("partial", costs, [{"when": {"feature": "mnemonic", "equals": "bsr"}, "then": {"crash": "x"}}])
    got = probe_support(p, U, cfg, random.Random(5))
    expected = [s.id for s in U.schemes if s.category != "shift" and s.id != "mov_r16_r16"]
    assert got == expected
    assert "bsr_r64_r64" in got  # crashes are findings, not missing support
