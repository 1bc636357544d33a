"""Abstract basic blocks: feature lattices, aliasing abstraction, expansions, subsumption.

An abstract block is a sequence of abstract instructions (one lattice value per
instruction feature) and an alias map over operand positions. Concretization
(``gamma``) of an abstract instruction is computed explicitly against the
finite scheme universe; concretization of whole blocks is only ever sampled
(see :mod:`blockdiff.sampler`) or tested for membership.
"""
from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Mapping, Union

from rapidfuzz.distance import Levenshtein

from .bblock import BasicBlock, do_alias, operands_match
from .isa import FEATURES, InstructionScheme, SchemeUniverse, feature_of

__all__ = [
    "AbstractBlock",
    "AbstractInsn",
    "AliasDrop",
    "AliasMap",
    "DEF_NONE",
    "EditDistance",
    "InsnFeature",
    "LogSize",
    "Singleton",
    "SubsetOrNone",
    "TOP",
    "apply_expansion",
    "available_expansions",
    "block_subsumes",
    "feature_beta",
    "feature_expansions",
    "feature_gamma",
    "gamma_in",
    "insn_subsumes",
    "member",
    "represent",
    "subsumes_concrete",
]

EDIT_DISTANCE_MAX = 3
LOG_SIZE_MAX = 5

MUST = "must"
MUSTNOT = "mustnot"


# -- feature lattices -------------------------------------------------------


class _Top:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "TOP"

    def __reduce__(self):
        return (_Top, ())


TOP = _Top()


@dataclass(frozen=True)
class Singleton:
    value: Any


@dataclass(frozen=True)
class EditDistance:
    base: str
    d: int = 0

    def __post_init__(self):
        if not 0 <= self.d <= EDIT_DISTANCE_MAX:
            raise ValueError(f"edit distance {self.d} outside [0, {EDIT_DISTANCE_MAX}]")


@dataclass(frozen=True)
class LogSize:
    k: int

    def __post_init__(self):
        if not 0 <= self.k <= LOG_SIZE_MAX:
            raise ValueError(f"log size {self.k} outside [0, {LOG_SIZE_MAX}]")


@dataclass(frozen=True)
class SubsetOrNone:
    """``elements is None`` encodes DefNone (the feature value must be empty)."""

    elements: frozenset | None

    def __post_init__(self):
        if self.elements is not None and not self.elements:
            raise ValueError("SubsetOrNone needs a non-empty element set or DefNone")

    @property
    def is_def_none(self) -> bool:
        return self.elements is None


DEF_NONE = SubsetOrNone(None)

FeatureValue = Union[_Top, Singleton, EditDistance, LogSize, SubsetOrNone]

_DOMAIN = {
    "mnemonic": EditDistance,
    "category": Singleton,
    "isa_set": Singleton,
    "prefixes": Singleton,
    "uop_count": LogSize,
    "memory_usage": SubsetOrNone,
    "operand_schemes": SubsetOrNone,
}


def _check_feature(feature: str) -> None:
    if feature not in _DOMAIN:
        raise KeyError(f"unknown feature {feature!r}")


def feature_beta(feature: str, raw: Any) -> FeatureValue:
    """Most specific lattice value describing a raw feature value."""
    _check_feature(feature)
    dom = _DOMAIN[feature]
    if dom is Singleton:
        return Singleton(raw)
    if dom is EditDistance:
        return EditDistance(raw, 0)
    if dom is LogSize:
        # ceil(log2(n + 1)) is the smallest k with n < 2**k
        k = math.ceil(math.log2(raw + 1))
        return LogSize(k) if k <= LOG_SIZE_MAX else TOP
    return SubsetOrNone(frozenset(raw)) if raw else DEF_NONE


def _feature_holds(feature: str, av: FeatureValue, raw: Any) -> bool:
    if av is TOP:
        return True
    if isinstance(av, Singleton):
        return raw == av.value
    if isinstance(av, EditDistance):
        return Levenshtein.distance(raw, av.base) <= av.d
    if isinstance(av, LogSize):
        return raw < 2**av.k
    if av.is_def_none:
        return not raw
    return raw >= av.elements


def feature_gamma(feature: str, av: FeatureValue, universe: SchemeUniverse) -> frozenset:
    """Indices of the universe's schemes represented by ``av``."""
    _check_feature(feature)
    if av is TOP:
        return universe.all_indices

    def compute():
        return frozenset(
            n
            for n, s in enumerate(universe.schemes)
            if _feature_holds(feature, av, feature_of(s, feature))
        )

    return universe.cached(("feature", feature, av), compute)


def feature_expansions(feature: str, av: FeatureValue) -> list:
    """Immediate successors of ``av`` in the feature's generalization order."""
    _check_feature(feature)
    if av is TOP:
        raise ValueError(f"cannot expand {feature}: already TOP")
    if isinstance(av, Singleton):
        return [TOP]
    if isinstance(av, EditDistance):
        return [EditDistance(av.base, av.d + 1)] if av.d < EDIT_DISTANCE_MAX else [TOP]
    if isinstance(av, LogSize):
        return [LogSize(av.k + 1)] if av.k < LOG_SIZE_MAX else [TOP]
    if av.is_def_none or len(av.elements) == 1:
        return [TOP]
    return [SubsetOrNone(av.elements - {e}) for e in sorted(av.elements)]


def steps_to_top(av: FeatureValue) -> int:
    """Length of every ascending chain from ``av`` to TOP."""
    if av is TOP:
        return 0
    if isinstance(av, EditDistance):
        return EDIT_DISTANCE_MAX - av.d + 1
    if isinstance(av, LogSize):
        return LOG_SIZE_MAX - av.k + 1
    if isinstance(av, SubsetOrNone) and not av.is_def_none:
        return len(av.elements)
    return 1


# -- abstract instructions --------------------------------------------------


@dataclass(frozen=True)
class AbstractInsn:
    mnemonic: FeatureValue = TOP
    category: FeatureValue = TOP
    isa_set: FeatureValue = TOP
    prefixes: FeatureValue = TOP
    uop_count: FeatureValue = TOP
    memory_usage: FeatureValue = TOP
    operand_schemes: FeatureValue = TOP

    def __post_init__(self):
        for f in FEATURES:
            v = getattr(self, f)
            if v is not TOP and not isinstance(v, _DOMAIN[f]):
                raise TypeError(f"{f} takes {_DOMAIN[f].__name__} or TOP, got {v!r}")

    def get(self, feature: str) -> FeatureValue:
        _check_feature(feature)
        return getattr(self, feature)

    def replace(self, feature: str, value: FeatureValue) -> "AbstractInsn":
        _check_feature(feature)
        return dataclasses.replace(self, **{feature: value})

    def items(self) -> Iterator[tuple[str, FeatureValue]]:
        for f in FEATURES:
            yield f, getattr(self, f)

    @property
    def is_top(self) -> bool:
        return all(v is TOP for _, v in self.items())

    @classmethod
    def of(cls, scheme: InstructionScheme) -> "AbstractInsn":
        return cls(**{f: feature_beta(f, feature_of(scheme, f)) for f in FEATURES})


def gamma_in(insn: AbstractInsn, universe: SchemeUniverse) -> frozenset:
    """Scheme indices represented by an abstract instruction (per-feature intersection)."""

    def compute():
        out = universe.all_indices
        for f, v in insn.items():
            if v is not TOP:
                out = out & feature_gamma(f, v, universe)
        return out

    return universe.cached(("insn", insn), compute)


# -- aliasing ---------------------------------------------------------------

OperandIndex = tuple  # (insn_index, operand_index), both 1-based
Pair = tuple  # (OperandIndex, OperandIndex), canonically ordered


def canonical_pair(p: OperandIndex, q: OperandIndex) -> Pair:
    p, q = tuple(p), tuple(q)
    if p == q:
        raise ValueError(f"alias entry for operand {p} with itself")
    return (p, q) if p < q else (q, p)


@dataclass(frozen=True)
class AliasMap:
    """Immutable map from canonical operand pairs to ``must``/``mustnot``; absent means TOP."""

    entries: tuple = ()

    def __post_init__(self):
        for pair, kind in self.entries:
            if kind not in (MUST, MUSTNOT):
                raise ValueError(f"bad alias kind {kind!r}")
            if canonical_pair(*pair) != pair:
                raise ValueError(f"alias key {pair} not in canonical order")
        keys = [p for p, _ in self.entries]
        if keys != sorted(set(keys)):
            raise ValueError("alias entries must be sorted and unique")

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "AliasMap":
        canon = {}
        for (p, q), kind in mapping.items():
            canon[canonical_pair(p, q)] = kind
        return cls(tuple(sorted(canon.items())))

    def get(self, p: OperandIndex, q: OperandIndex):
        key = canonical_pair(p, q)
        for pair, kind in self.entries:
            if pair == key:
                return kind
        return None

    def items(self):
        return iter(self.entries)

    def keys(self):
        return [p for p, _ in self.entries]

    def as_dict(self) -> dict:
        return dict(self.entries)

    def without(self, pair: Pair) -> "AliasMap":
        if pair not in self.keys():
            raise KeyError(f"no alias entry for {pair}")
        return AliasMap(tuple(e for e in self.entries if e[0] != pair))

    def __len__(self):
        return len(self.entries)

    def __contains__(self, pair):
        return pair in self.keys()


# -- abstract blocks --------------------------------------------------------


@dataclass(frozen=True)
class AbstractBlock:
    insns: tuple
    aliasing: AliasMap = AliasMap()

    def __post_init__(self):
        object.__setattr__(self, "insns", tuple(self.insns))
        if not self.insns:
            raise ValueError("an abstract block needs at least one abstract instruction")
        if not isinstance(self.aliasing, AliasMap):
            object.__setattr__(self, "aliasing", AliasMap.from_mapping(self.aliasing))
        n = len(self.insns)
        for (p, q), _ in self.aliasing.items():
            if not (1 <= p[0] <= n and 1 <= q[0] <= n):
                raise ValueError(f"alias entry {(p, q)} out of range for {n} instructions")

    def __len__(self):
        return len(self.insns)

    @classmethod
    def top(cls, n: int) -> "AbstractBlock":
        return cls(tuple(AbstractInsn() for _ in range(n)))

    @property
    def is_top(self) -> bool:
        return not len(self.aliasing) and all(i.is_top for i in self.insns)

    def steps_to_top(self) -> int:
        return len(self.aliasing) + sum(steps_to_top(v) for i in self.insns for _, v in i.items())


def represent(block: BasicBlock) -> AbstractBlock:
    """The most specific abstract block containing ``block``."""
    insns = tuple(AbstractInsn.of(i.scheme) for i in block.insns)
    positions = [
        (ii, oi)
        for ii, insn in enumerate(block.insns, 1)
        for oi in range(1, len(insn.operands) + 1)
    ]
    entries = []
    for p, q in itertools.combinations(positions, 2):
        a, b = block.operand(*p), block.operand(*q)
        if operands_match(a, b):
            entries.append(((p, q), MUST if do_alias(a, b) else MUSTNOT))
    return AbstractBlock(insns, AliasMap(tuple(sorted(entries))))


def _alias_ok(block: BasicBlock, aliasing: AliasMap) -> bool:
    for (p, q), kind in aliasing.items():
        a, b = block.operand(*p), block.operand(*q)
        if a is None or b is None or not operands_match(a, b):
            continue
        if do_alias(a, b) != (kind == MUST):
            return False
    return True


def member(block: BasicBlock, ab: AbstractBlock, universe: SchemeUniverse) -> bool:
    """Whether ``block`` lies in the concretization of ``ab``."""
    if len(block) != len(ab):
        return False
    for insn, ai in zip(block.insns, ab.insns):
        if universe.index_of(insn.scheme) not in gamma_in(ai, universe):
            return False
    return _alias_ok(block, ab.aliasing)


# -- expansions -------------------------------------------------------------


@dataclass(frozen=True)
class InsnFeature:
    insn_index: int  # 1-based
    feature: str
    value: Any  # the successor this expansion moves to

    def __str__(self):
        return f"insn {self.insn_index} {self.feature} -> {describe_value(self.feature, self.value)}"


@dataclass(frozen=True)
class AliasDrop:
    pair: tuple

    def __str__(self):
        (i1, o1), (i2, o2) = self.pair
        return f"drop alias op {o1} of insn {i1} / op {o2} of insn {i2}"


Expansion = Union[InsnFeature, AliasDrop]


def available_expansions(ab: AbstractBlock) -> list:
    out: list = []
    for k, insn in enumerate(ab.insns, 1):
        for f, v in insn.items():
            if v is not TOP:
                out.extend(InsnFeature(k, f, succ) for succ in feature_expansions(f, v))
    out.extend(AliasDrop(pair) for pair in ab.aliasing.keys())
    return out


def _applicable(ab: AbstractBlock, e) -> bool:
    if isinstance(e, AliasDrop):
        return e.pair in ab.aliasing
    if not 1 <= e.insn_index <= len(ab):
        return False
    cur = ab.insns[e.insn_index - 1].get(e.feature)
    return cur is not TOP and e.value in feature_expansions(e.feature, cur)


def apply_expansion(ab: AbstractBlock, e) -> AbstractBlock:
    if not _applicable(ab, e):
        raise ValueError(f"expansion {e} does not apply to this block")
    if isinstance(e, AliasDrop):
        return AbstractBlock(ab.insns, ab.aliasing.without(e.pair))
    insns = list(ab.insns)
    insns[e.insn_index - 1] = insns[e.insn_index - 1].replace(e.feature, e.value)
    return AbstractBlock(tuple(insns), ab.aliasing)


# -- subsumption ------------------------------------------------------------


def insn_subsumes(general: AbstractInsn, specific: AbstractInsn, universe: SchemeUniverse) -> bool:
    return gamma_in(specific, universe) <= gamma_in(general, universe)


def rotation_mappings(n1: int, n2: int) -> Iterator[tuple]:
    """Injective maps ``range(n1) -> range(n2)`` whose image order is a rotation.

    Yields tuples ``m`` with ``m[i]`` the 0-based target of instruction ``i``.
    """
    for subset in itertools.combinations(range(n2), n1):
        for r in range(n1 if n1 else 1):
            yield tuple(subset[(i + r) % n1] for i in range(n1))


def _alias_preserved(a1: AbstractBlock, a2: AbstractBlock, m: tuple) -> bool:
    for ((i, o1), (j, o2)), kind in a1.aliasing.items():
        if a2.aliasing.get((m[i - 1] + 1, o1), (m[j - 1] + 1, o2)) != kind:
            return False
    return True


def find_mapping(a1: AbstractBlock, a2: AbstractBlock, universe: SchemeUniverse) -> tuple | None:
    """A witness mapping for ``block_subsumes(a1, a2)``, or None."""
    n1, n2 = len(a1), len(a2)
    if n1 > n2:
        return None
    covers = [
        [insn_subsumes(g, s, universe) for s in a2.insns] for g in a1.insns
    ]
    for m in rotation_mappings(n1, n2):
        if all(covers[i][m[i]] for i in range(n1)) and _alias_preserved(a1, a2, m):
            return m
    return None


def block_subsumes(a1: AbstractBlock, a2: AbstractBlock, universe: SchemeUniverse) -> bool:
    """Whether ``a1`` subsumes ``a2``: injective, rotation-ordered, gamma- and alias-preserving."""
    return find_mapping(a1, a2, universe) is not None


def subsumes_concrete(a: AbstractBlock, b: BasicBlock, universe: SchemeUniverse) -> bool:
    return block_subsumes(a, represent(b), universe)


# -- serialization & display ------------------------------------------------


def value_to_json(feature: str, v: FeatureValue) -> dict:
    if v is TOP:
        return {"top": True}
    if isinstance(v, Singleton):
        val = sorted(v.value) if isinstance(v.value, frozenset) else v.value
        return {"value": val}
    if isinstance(v, EditDistance):
        return {"base": v.base, "d": v.d}
    if isinstance(v, LogSize):
        return {"k": v.k}
    if v.is_def_none:
        return {"def_none": True}
    return {"subset": sorted(v.elements)}


def value_from_json(feature: str, d: Mapping) -> FeatureValue:
    if d.get("top"):
        return TOP
    if "value" in d:
        val = d["value"]
        return Singleton(frozenset(val) if feature == "prefixes" else val)
    if "base" in d:
        return EditDistance(d["base"], d["d"])
    if "k" in d:
        return LogSize(d["k"])
    if d.get("def_none"):
        return DEF_NONE
    return SubsetOrNone(frozenset(d["subset"]))


def block_to_json(ab: AbstractBlock) -> dict:
    return {
        "insns": [{f: value_to_json(f, v) for f, v in i.items()} for i in ab.insns],
        "aliasing": [
            {"a": list(p), "b": list(q), "kind": kind} for (p, q), kind in ab.aliasing.items()
        ],
    }


def block_from_json(d: Mapping) -> AbstractBlock:
    insns = tuple(
        AbstractInsn(**{f: value_from_json(f, rec.get(f, {"top": True})) for f in FEATURES})
        for rec in d["insns"]
    )
    aliasing = {(tuple(e["a"]), tuple(e["b"])): e["kind"] for e in d["aliasing"]}
    return AbstractBlock(insns, AliasMap.from_mapping(aliasing))


def describe_value(feature: str, v: FeatureValue) -> str:
    if v is TOP:
        return "⊤"
    if isinstance(v, Singleton):
        if isinstance(v.value, frozenset):
            return "{" + ", ".join(sorted(v.value)) + "}" if v.value else "{}"
        return str(v.value)
    if isinstance(v, EditDistance):
        if v.d == 0:
            return v.base
        return f"{v.base} + {v.d} edit{'s' if v.d > 1 else ''}"
    if isinstance(v, LogSize):
        return f"< {2 ** v.k}"
    if v.is_def_none:
        return "DefNone"
    if feature == "memory_usage":
        return "+".join(sorted(v.elements, key=lambda e: (e not in "RW", e)))
    return "{" + ", ".join(sorted(v.elements)) + "}"


def describe(ab: AbstractBlock) -> list[str]:
    """Human-readable lines; TOP features and TOP alias entries are omitted."""
    lines = []
    for k, insn in enumerate(ab.insns, 1):
        parts = [f"{f}: {describe_value(f, v)}" for f, v in insn.items() if v is not TOP]
        lines.append(f"{k}. " + ("; ".join(parts) if parts else "⊤"))
    for ((i1, o1), (i2, o2)), kind in ab.aliasing.items():
        verb = "must alias" if kind == MUST else "must not alias"
        lines.append(f"op {o1} of insn {i1} {verb} with op {o2} of insn {i2}")
    return lines


def iter_gamma_sizes(ab: AbstractBlock, universe: SchemeUniverse) -> Iterable[int]:
    return (len(gamma_in(i, universe)) for i in ab.insns)
