"""Throughput predictors and interestingness.

Two kinds of predictor share one interface. External predictors are
subprocesses speaking a line protocol: the block's assembly text goes in on
standard input (or through a temporary file), and the first line of standard
output must be a decimal cycles-per-iteration value. Synthetic predictors are
deterministic cost tables with rewrite rules, used to plant inconsistencies.
"""
from __future__ import annotations

import json
import math
import os
import random
import shutil
import subprocess
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence, Union

from .absdom import AbstractBlock
from .bblock import BasicBlock, render
from .isa import SchemeUniverse, feature_of
from .sampler import (
    EmptyConcretization,
    SamplerConfig,
    UnderfilledBatch,
    sample,
    sample_batch,
)

__all__ = [
    "Crash",
    "Cycles",
    "Evaluator",
    "Evidence",
    "ExternalPredictor",
    "Judge",
    "PredictorConfigError",
    "Rule",
    "SyntheticPredictor",
    "Timeout",
    "Unsupported",
    "abstract_interesting",
    "is_interesting",
    "load_predictor",
    "predict",
    "predict_batch",
    "probe_support",
    "rel_difference",
]


class PredictorConfigError(ValueError):
    """A predictor is misconfigured or unusable; raised before any block is evaluated."""


# -- results ----------------------------------------------------------------


@dataclass(frozen=True)
class Cycles:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"cycles must be finite and >= 0, got {self.value}")


@dataclass(frozen=True)
class Crash:
    detail: str = ""


@dataclass(frozen=True)
class Timeout:
    pass


@dataclass(frozen=True)
class Unsupported:
    pass


PredictorResult = Union[Cycles, Crash, Timeout, Unsupported]


def is_failure(r: PredictorResult) -> bool:
    return isinstance(r, (Crash, Timeout))


def result_to_json(r: PredictorResult) -> dict:
    if isinstance(r, Cycles):
        return {"cycles": r.value}
    if isinstance(r, Crash):
        return {"crash": r.detail}
    if isinstance(r, Timeout):
        return {"timeout": True}
    return {"unsupported": True}


def result_from_json(d: Mapping) -> PredictorResult:
    if "cycles" in d:
        return Cycles(d["cycles"])
    if "crash" in d:
        return Crash(d["crash"])
    if "timeout" in d:
        return Timeout()
    return Unsupported()


# -- predictor specs --------------------------------------------------------

_FEATURE_PREDICATES = ("mnemonic", "category", "isa_set", "uop_count")


@dataclass(frozen=True)
class Rule:
    """``when`` one predicate holds for a block, ``then`` apply one effect.

    Predicates: ``{"feature": name, "equals": value}`` (any instruction; name
    may also be ``scheme`` for the scheme id), ``{"mem_alias_rw": true}`` (two
    different instructions write and read the same memory location), or
    ``{"min_length": n}``. Effects: ``{"multiply": f}``, ``{"add": c}`` or
    ``{"crash": detail}``.
    """

    when: tuple
    then: tuple

    @classmethod
    def from_dict(cls, d: Mapping) -> "Rule":
        when, then = dict(d["when"]), dict(d["then"])
        if len(when) == 2 and "feature" in when and "equals" in when:
            if when["feature"] not in _FEATURE_PREDICATES + ("scheme",):
                raise PredictorConfigError(f"rule on unsupported feature {when['feature']!r}")
        elif len(when) != 1 or next(iter(when)) not in ("mem_alias_rw", "min_length"):
            raise PredictorConfigError(f"bad rule predicate {when!r}")
        if len(then) != 1 or next(iter(then)) not in ("multiply", "add", "crash"):
            raise PredictorConfigError(f"bad rule effect {then!r}")
        return cls(tuple(sorted(when.items())), tuple(sorted(then.items())))

    def to_dict(self) -> dict:
        return {"when": dict(self.when), "then": dict(self.then)}

    def matches(self, block: BasicBlock) -> bool:
        when = dict(self.when)
        if "feature" in when:
            name, value = when["feature"], when["equals"]
            if name == "scheme":
                return any(i.scheme.id == value for i in block.insns)
            return any(feature_of(i.scheme, name) == value for i in block.insns)
        if "min_length" in when:
            return len(block) >= when["min_length"]
        return bool(when["mem_alias_rw"]) == has_memory_dependency(block)


def has_memory_dependency(block: BasicBlock) -> bool:
    """Two different instructions write and read one memory location."""
    writes, reads = [], []
    for n, insn in enumerate(block.insns):
        for os_, co in zip(insn.scheme.operands, insn.operands):
            if co.kind != "memory":
                continue
            if "W" in os_.access:
                writes.append((n, co.location))
            if "R" in os_.access:
                reads.append((n, co.location))
    return any(wn != rn and wl == rl for wn, wl in writes for rn, rl in reads)


@dataclass(frozen=True)
class SyntheticPredictor:
    name: str
    costs: tuple  # sorted (scheme_id, cost) pairs
    rules: tuple = ()
    default_cost: float | None = None

    @classmethod
    def build(cls, name, costs: Mapping[str, float], rules=(), default_cost=None):
        rules = tuple(r if isinstance(r, Rule) else Rule.from_dict(r) for r in rules)
        for sid, c in costs.items():
            if c < 0:
                raise PredictorConfigError(f"{name}: negative cost for {sid}")
        return cls(name, tuple(sorted(costs.items())), rules, default_cost)

    def to_dict(self) -> dict:
        return {
            "type": "synthetic",
            "name": self.name,
            "costs": dict(self.costs),
            "default_cost": self.default_cost,
            "rules": [r.to_dict() for r in self.rules],
        }

    def __call__(self, block: BasicBlock) -> PredictorResult:
        table = dict(self.costs)
        total = 0.0
        for insn in block.insns:
            c = table.get(insn.scheme.id, self.default_cost)
            if c is None:
                return Unsupported()
            total += c
        for rule in self.rules:
            if not rule.matches(block):
                continue
            (kind, arg), = rule.then
            if kind == "crash":
                return Crash(str(arg))
            total = total * arg if kind == "multiply" else total + arg
        return Cycles(total)


@dataclass(frozen=True)
class ExternalPredictor:
    name: str
    command: tuple
    timeout: float = 10.0
    env: tuple = ()
    input_mode: str = "stdin"  # or "file": "{file}" in command is replaced by a temp path

    def to_dict(self) -> dict:
        return {
            "type": "external",
            "name": self.name,
            "command": list(self.command),
            "timeout": self.timeout,
            "env": dict(self.env),
            "input": self.input_mode,
        }

    def check_available(self) -> None:
        exe = self.command[0]
        if shutil.which(exe) is None and not os.access(exe, os.X_OK):
            raise PredictorConfigError(f"predictor {self.name!r}: executable {exe!r} not found")

    def __call__(self, block: BasicBlock) -> PredictorResult:
        text = render(block)
        env = {**os.environ, **dict(self.env)} if self.env else None
        tmp = None
        try:
            if self.input_mode == "file":
                with tempfile.NamedTemporaryFile("w", suffix=".s", delete=False) as fh:
                    fh.write(text)
                    tmp = fh.name
                cmd = [a.replace("{file}", tmp) for a in self.command]
                stdin = None
            else:
                cmd, stdin = list(self.command), text
            proc = subprocess.run(
                cmd, input=stdin, capture_output=True, text=True, timeout=self.timeout, env=env
            )
        except subprocess.TimeoutExpired:
            return Timeout()
        except OSError as exc:
            return Crash(f"cannot run {self.command[0]}: {exc}")
        finally:
            if tmp:
                os.unlink(tmp)
        if proc.returncode != 0:
            return Crash(f"exit code {proc.returncode}: {proc.stderr.strip()[:200]}")
        return parse_output(proc.stdout)


def parse_output(stdout: str) -> PredictorResult:
    first = stdout.splitlines()[0] if stdout.splitlines() else ""
    try:
        value = float(first.strip())
    except ValueError:
        return Crash(f"unparseable predictor output: {first[:80]!r}")
    if not math.isfinite(value) or value < 0:
        return Crash(f"invalid cycle count {value}")
    return Cycles(value)


PredictorSpec = Union[SyntheticPredictor, ExternalPredictor]


def load_predictor(spec: Union[Mapping, str, Path], base_dir: Path | None = None) -> PredictorSpec:
    """Predictor from a config record or from a JSON file holding one."""
    if isinstance(spec, (str, Path)):
        path = Path(spec)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            spec = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise PredictorConfigError(f"cannot load predictor spec {path}: {exc}") from None
        spec.setdefault("name", path.stem)
    kind = spec.get("type", "synthetic")
    name = spec.get("name", kind)
    if kind == "synthetic":
        if "costs" not in spec:
            raise PredictorConfigError(f"synthetic predictor {name!r} needs 'costs'")
        return SyntheticPredictor.build(
            name, spec["costs"], spec.get("rules", ()), spec.get("default_cost")
        )
    if kind == "external":
        cmd = spec.get("command")
        if not cmd:
            raise PredictorConfigError(f"external predictor {name!r} needs 'command'")
        if isinstance(cmd, str):
            cmd = cmd.split()
        mode = spec.get("input", "stdin")
        if mode not in ("stdin", "file"):
            raise PredictorConfigError(f"predictor {name!r}: input must be 'stdin' or 'file'")
        return ExternalPredictor(
            name, tuple(cmd), float(spec.get("timeout", 10.0)),
            tuple(sorted(spec.get("env", {}).items())), mode,
        )
    raise PredictorConfigError(f"unknown predictor type {kind!r}")


def identity(spec: PredictorSpec) -> str:
    return json.dumps(spec.to_dict(), sort_keys=True)


def predict(spec: PredictorSpec, block: BasicBlock) -> PredictorResult:
    return spec(block)


# -- batch evaluation -------------------------------------------------------


@dataclass
class Evaluator:
    """Bounded-parallel predictor evaluation with a shared result cache.

    The cache is keyed by predictor identity and rendered assembly text, so a
    block that occurs repeatedly is only ever sent to a predictor once.
    """

    parallelism: int = 1
    cache: dict = field(default_factory=dict, repr=False)
    invocations: int = 0
    _lock: Any = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")

    def evaluate(self, spec: PredictorSpec, blocks: Sequence[BasicBlock]) -> list:
        ident = identity(spec)
        texts = [render(b) for b in blocks]
        todo: dict[str, BasicBlock] = {}
        for t, b in zip(texts, blocks):
            if (ident, t) not in self.cache and t not in todo:
                todo[t] = b
        if todo:
            items = list(todo.items())
            if self.parallelism == 1 or len(items) == 1:
                results = [spec(b) for _, b in items]
            else:
                with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
                    results = list(pool.map(spec, (b for _, b in items)))
            with self._lock:
                self.invocations += len(items)
                for (t, _), r in zip(items, results):
                    self.cache.setdefault((ident, t), r)
        return [self.cache[(ident, t)] for t in texts]

    def predict_batch(self, pair: Sequence[PredictorSpec], blocks: Sequence[BasicBlock]) -> list:
        a, b = pair
        return list(zip(self.evaluate(a, blocks), self.evaluate(b, blocks)))


def predict_batch(
    pair: Sequence[PredictorSpec], blocks: Sequence[BasicBlock], parallelism: int = 1,
    evaluator: Evaluator | None = None,
) -> list:
    """Result pairs aligned with ``blocks``; identical for any ``parallelism``."""
    ev = evaluator or Evaluator(parallelism)
    return ev.predict_batch(pair, blocks)


# -- interestingness --------------------------------------------------------


def rel_difference(a: float, b: float) -> float:
    """Absolute difference normalized by the mean; 0 when both are 0."""
    if a == 0 and b == 0:
        return 0.0
    return abs(a - b) * 2 / (a + b)


def difference(metric: str, a: float, b: float) -> float:
    if metric == "relative":
        return rel_difference(a, b)
    if metric == "absolute":
        return abs(a - b)
    raise ValueError(f"unknown metric {metric!r}")


def is_interesting(results: Sequence[PredictorResult], metric: str, threshold: float) -> bool:
    ra, rb = results
    if is_failure(ra) or is_failure(rb):
        return True
    if isinstance(ra, Unsupported) or isinstance(rb, Unsupported):
        return False
    return difference(metric, ra.value, rb.value) > threshold


def result_difference(results: Sequence[PredictorResult], metric: str) -> float | None:
    """Metric value for one pair of results: inf for tool failures, None if unsupported."""
    ra, rb = results
    if is_failure(ra) or is_failure(rb):
        return math.inf
    if isinstance(ra, Unsupported) or isinstance(rb, Unsupported):
        return None
    return difference(metric, ra.value, rb.value)


@dataclass(frozen=True)
class EvidenceSample:
    block: BasicBlock
    result_a: PredictorResult
    result_b: PredictorResult
    interesting: bool


@dataclass(frozen=True)
class Evidence:
    samples: tuple = ()
    failure: str | None = None
    sampler_failures: int = 0

    @property
    def all_interesting(self) -> bool:
        return self.failure is None and bool(self.samples) and all(s.interesting for s in self.samples)


@dataclass
class Judge:
    """A predictor pair plus the interestingness criterion applied to it."""

    pair: tuple
    metric: str = "relative"
    threshold: float = 0.5
    evaluator: Evaluator = field(default_factory=Evaluator)

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be > 0")
        if self.metric not in ("relative", "absolute"):
            raise ValueError(f"unknown metric {self.metric!r}")
        self.pair = tuple(self.pair)

    def results(self, blocks: Sequence[BasicBlock]) -> list:
        return self.evaluator.predict_batch(self.pair, blocks)

    def interesting(self, block: BasicBlock) -> bool:
        return is_interesting(self.results([block])[0], self.metric, self.threshold)

    def evidence(self, blocks: Sequence[BasicBlock], failure=None, sampler_failures=0) -> Evidence:
        samples = tuple(
            EvidenceSample(b, ra, rb, is_interesting((ra, rb), self.metric, self.threshold))
            for b, (ra, rb) in zip(blocks, self.results(blocks))
        )
        return Evidence(samples, failure, sampler_failures)


def abstract_interesting(
    ab: AbstractBlock,
    judge: Judge,
    n_samples: int,
    universe: SchemeUniverse,
    cfg: SamplerConfig,
    rng: random.Random,
) -> tuple[bool, Evidence]:
    """Sample ``n_samples`` members of ``ab``; interesting iff every sample is."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    try:
        batch = sample_batch(ab, n_samples, universe, cfg, rng)
    except UnderfilledBatch as exc:
        ev = judge.evidence(exc.blocks, failure=str(exc), sampler_failures=exc.failures)
        return False, ev
    except EmptyConcretization as exc:
        return False, Evidence((), failure=str(exc))
    ev = judge.evidence(batch.blocks, sampler_failures=batch.failures)
    return ev.all_interesting, ev


def probe_support(
    spec: PredictorSpec, universe: SchemeUniverse, cfg: SamplerConfig, rng: random.Random,
    evaluator: Evaluator | None = None,
) -> list:
    """Ids of schemes the predictor supports.

    A scheme is unsupported if a one-instruction block of it yields
    ``Unsupported`` or a zero cycle count. Crashes and timeouts are kept:
    they are findings, not missing support.
    """
    blocks = [
        sample(AbstractBlock.top(1), universe.restrict([s.id]), cfg, rng) for s in universe.schemes
    ]
    results = (evaluator or Evaluator()).evaluate(spec, blocks)
    return [
        s.id
        for s, r in zip(universe.schemes, results)
        if not isinstance(r, Unsupported) and not (isinstance(r, Cycles) and r.value == 0)
    ]

