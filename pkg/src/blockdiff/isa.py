"""ISA description: registers, operand schemes and instruction schemes.

An ISA description is a JSON document with two top-level lists, ``registers``
and ``schemes``. The formal schema ships as ``schemas/isa.schema.json``.
"""
from __future__ import annotations

import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import jsonschema

__all__ = [
    "FEATURES",
    "ISAError",
    "InstructionScheme",
    "MemoryUsage",
    "OperandScheme",
    "RegisterDef",
    "SchemeUniverse",
    "feature_of",
    "load_universe",
    "parse_universe",
]

#: Feature names understood by :func:`feature_of`, in canonical order.
FEATURES = (
    "mnemonic",
    "category",
    "isa_set",
    "prefixes",
    "uop_count",
    "memory_usage",
    "operand_schemes",
)

OPERAND_KINDS = ("register-class", "memory", "immediate", "fixed-register")


class ISAError(ValueError):
    """Raised for malformed or inconsistent ISA descriptions."""


@dataclass(frozen=True)
class RegisterDef:
    name: str
    width: int
    alias_group: str
    reg_class: str
    reserved_for_memory: bool = False


@dataclass(frozen=True)
class OperandScheme:
    kind: str
    width: int
    access: frozenset = frozenset()
    register_class: str | None = None
    fixed_register: str | None = None
    fixed_value: int | None = None
    # implicit operands take part in aliasing but are not printed
    implicit: bool = False

    @property
    def access_str(self) -> str:
        return "".join(a for a in "RW" if a in self.access)

    @property
    def token(self) -> str:
        """Canonical token, e.g. ``RW:GPR:64``, ``R:cl``, ``W:MEM:64``, ``IMM:8``, ``0x0``."""
        if self.kind == "register-class":
            return f"{self.access_str}:{self.register_class}:{self.width}"
        if self.kind == "memory":
            return f"{self.access_str}:MEM:{self.width}"
        if self.kind == "fixed-register":
            return f"{self.access_str}:{self.fixed_register}"
        if self.fixed_value is not None:
            return hex(self.fixed_value)
        return f"IMM:{self.width}"

    @property
    def is_register(self) -> bool:
        return self.kind in ("register-class", "fixed-register")


@dataclass(frozen=True)
class MemoryUsage:
    reads: bool = False
    writes: bool = False
    size: int | None = None

    def as_set(self) -> frozenset:
        if not (self.reads or self.writes):
            return frozenset()
        out = set()
        if self.reads:
            out.add("R")
        if self.writes:
            out.add("W")
        if self.size is not None:
            out.add(f"Size:{self.size}")
        return frozenset(out)


@dataclass(frozen=True)
class InstructionScheme:
    id: str
    mnemonic: str
    category: str
    isa_set: str
    uop_count: int
    memory: MemoryUsage
    operands: tuple[OperandScheme, ...]
    prefixes: frozenset = frozenset()

    def __str__(self) -> str:
        ops = ", ".join(o.token for o in self.operands)
        pre = " ".join(sorted(self.prefixes))
        return f"{pre + ' ' if pre else ''}{self.mnemonic} {ops}".strip()


def feature_of(scheme: InstructionScheme, feature: str) -> Any:
    """Raw value of ``feature`` for ``scheme``.

    Set-valued features come back as frozensets so they can be hashed and
    compared; ``memory_usage`` is empty for schemes that do not touch memory.
    """
    if feature == "mnemonic":
        return scheme.mnemonic
    if feature == "category":
        return scheme.category
    if feature == "isa_set":
        return scheme.isa_set
    if feature == "prefixes":
        return scheme.prefixes
    if feature == "uop_count":
        return scheme.uop_count
    if feature == "memory_usage":
        return scheme.memory.as_set()
    if feature == "operand_schemes":
        return frozenset(o.token for o in scheme.operands)
    raise KeyError(f"unknown feature {feature!r}")


@dataclass(frozen=True, eq=False)
class SchemeUniverse:
    """Immutable, validated set of instruction schemes plus the register file.

    Equality is field-by-field on registers and schemes. Lookup tables and the
    concretization cache are derived state.
    """

    schemes: tuple[InstructionScheme, ...]
    registers: tuple[RegisterDef, ...]
    source: str | None = None
    _index: dict = field(init=False, repr=False)
    _regs: dict = field(init=False, repr=False)
    _cache: dict = field(init=False, repr=False)
    _lock: Any = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {s.id: n for n, s in enumerate(self.schemes)})
        object.__setattr__(self, "_regs", {r.name: r for r in self.registers})
        object.__setattr__(self, "_cache", {})
        object.__setattr__(self, "_lock", threading.Lock())
        _validate(self)

    def __eq__(self, other):
        if not isinstance(other, SchemeUniverse):
            return NotImplemented
        return self.schemes == other.schemes and self.registers == other.registers

    def __hash__(self):
        return hash((self.schemes, self.registers))

    def __len__(self):
        return len(self.schemes)

    def __iter__(self):
        return iter(self.schemes)

    def scheme(self, scheme_id: str) -> InstructionScheme:
        try:
            return self.schemes[self._index[scheme_id]]
        except KeyError:
            raise KeyError(f"unknown scheme id {scheme_id!r}") from None

    def index_of(self, scheme: InstructionScheme | str) -> int:
        sid = scheme if isinstance(scheme, str) else scheme.id
        return self._index[sid]

    def register(self, name: str) -> RegisterDef:
        try:
            return self._regs[name]
        except KeyError:
            raise KeyError(f"unknown register {name!r}") from None

    @property
    def all_indices(self) -> frozenset:
        return frozenset(range(len(self.schemes)))

    @property
    def memory_bases(self) -> tuple[RegisterDef, ...]:
        return tuple(r for r in self.registers if r.reserved_for_memory)

    def alias_groups(self) -> dict[str, tuple[RegisterDef, ...]]:
        groups: dict[str, list] = {}
        for r in self.registers:
            groups.setdefault(r.alias_group, []).append(r)
        return {g: tuple(rs) for g, rs in groups.items()}

    def cached(self, key, compute):
        """Memoize ``compute()`` under ``key``; safe for concurrent callers."""
        try:
            return self._cache[key]
        except KeyError:
            pass
        value = compute()
        with self._lock:
            return self._cache.setdefault(key, value)

    def restrict(self, keep: Iterable[str]) -> "SchemeUniverse":
        keep = set(keep)
        return SchemeUniverse(
            tuple(s for s in self.schemes if s.id in keep), self.registers, self.source
        )

    def to_dict(self) -> dict:
        return {
            "registers": [_register_to_dict(r) for r in self.registers],
            "schemes": [_scheme_to_dict(s) for s in self.schemes],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def _validate(u: SchemeUniverse) -> None:
    seen: set[str] = set()
    widths: dict[tuple[str, int], str] = {}
    for r in u.registers:
        if r.name in seen:
            raise ISAError(f"duplicate register name {r.name!r}")
        seen.add(r.name)
        key = (r.alias_group, r.width)
        if key in widths:
            raise ISAError(
                f"alias group {r.alias_group!r} has two {r.width}-bit registers: "
                f"{widths[key]!r} and {r.name!r}"
            )
        widths[key] = r.name
    for group, regs in u.alias_groups().items():
        if len({r.reserved_for_memory for r in regs}) > 1:
            raise ISAError(f"alias group {group!r} mixes reserved and allocatable registers")

    ids: set[str] = set()
    for s in u.schemes:
        if s.id in ids:
            raise ISAError(f"duplicate scheme id {s.id!r}")
        ids.add(s.id)
        _validate_scheme(u, s)


def _validate_scheme(u: SchemeUniverse, s: InstructionScheme) -> None:
    where = f"scheme {s.id!r}"
    mem_ops = [o for o in s.operands if o.kind == "memory"]
    reads = any("R" in o.access for o in mem_ops)
    writes = any("W" in o.access for o in mem_ops)
    if (reads, writes) != (s.memory.reads, s.memory.writes):
        raise ISAError(f"{where}: memory reads/writes disagree with memory operand access")
    if mem_ops and s.memory.size is None:
        raise ISAError(f"{where}: memory operand without memory size")
    if s.uop_count < 1:
        raise ISAError(f"{where}: uop_count must be positive")
    for n, o in enumerate(s.operands, 1):
        ow = f"{where}, operand {n}"
        if o.kind not in OPERAND_KINDS:
            raise ISAError(f"{ow}: unknown kind {o.kind!r}")
        if o.kind == "immediate":
            if o.access - {"R"}:
                raise ISAError(f"{ow}: immediates are read-only")
            continue
        if not o.access:
            raise ISAError(f"{ow}: empty access for {o.kind} operand")
        if o.kind == "register-class":
            if not o.register_class:
                raise ISAError(f"{ow}: register-class operand without register_class")
            if not any(
                r.reg_class == o.register_class and r.width == o.width and not r.reserved_for_memory
                for r in u.registers
            ):
                raise ISAError(f"{ow}: no allocatable {o.register_class}:{o.width} register")
        elif o.kind == "fixed-register":
            if o.fixed_register not in u._regs:
                raise ISAError(f"{ow}: unknown fixed register {o.fixed_register!r}")
            if u._regs[o.fixed_register].reserved_for_memory:
                raise ISAError(f"{ow}: fixed register {o.fixed_register!r} is reserved for memory")


def _register_to_dict(r: RegisterDef) -> dict:
    return {
        "name": r.name,
        "width": r.width,
        "alias_group": r.alias_group,
        "reg_class": r.reg_class,
        "reserved_for_memory": r.reserved_for_memory,
    }


def _operand_to_dict(o: OperandScheme) -> dict:
    d: dict[str, Any] = {"kind": o.kind, "width": o.width, "access": sorted(o.access)}
    if o.register_class is not None:
        d["register_class"] = o.register_class
    if o.fixed_register is not None:
        d["fixed_register"] = o.fixed_register
    if o.fixed_value is not None:
        d["fixed_value"] = o.fixed_value
    if o.implicit:
        d["implicit"] = True
    return d


def _scheme_to_dict(s: InstructionScheme) -> dict:
    return {
        "id": s.id,
        "mnemonic": s.mnemonic,
        "category": s.category,
        "isa_set": s.isa_set,
        "prefixes": sorted(s.prefixes),
        "uop_count": s.uop_count,
        "memory": {"reads": s.memory.reads, "writes": s.memory.writes, "size": s.memory.size},
        "operands": [_operand_to_dict(o) for o in s.operands],
    }


def _schema() -> dict:
    text = resources.files("blockdiff").joinpath("schemas/isa.schema.json").read_text()
    return json.loads(text)


_FILTER_RE = re.compile(r"^\s*(\w+)\s*(==|!=)\s*(\S+)\s*$")


def _memory_label(s: InstructionScheme) -> str:
    m = s.memory
    return {(False, False): "none", (True, False): "R", (False, True): "W", (True, True): "R+W"}[
        (m.reads, m.writes)
    ]


def _compile_filter(expr: str):
    """Compile ``'<field> ==|!= <value>'``; the result returns True to keep a scheme.

    ``field`` is ``id``, ``memory`` (values ``none``, ``R``, ``W``, ``R+W``) or
    one of the string-valued features.
    """
    m = _FILTER_RE.match(expr)
    if not m:
        raise ISAError(f"bad filter expression {expr!r}; expected '<field> == <value>' or '!='")
    name, op, value = m.groups()
    if name == "memory":
        get = _memory_label
    elif name in ("id", "mnemonic", "category", "isa_set"):
        get = lambda s, name=name: getattr(s, name)  # noqa: E731
    else:
        raise ISAError(f"bad filter field {name!r} in {expr!r}")
    if op == "==":
        return lambda s: get(s) == value
    return lambda s: get(s) != value


def parse_universe(
    data: Mapping, filters: Sequence[str] = (), source: str | None = None
) -> SchemeUniverse:
    """Build a universe from an already-decoded ISA description."""
    try:
        jsonschema.validate(data, _schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ISAError(f"{source or 'ISA description'}: at {path}: {exc.message}") from None

    registers = tuple(
        RegisterDef(
            name=r["name"],
            width=r["width"],
            alias_group=r["alias_group"],
            reg_class=r["reg_class"],
            reserved_for_memory=r.get("reserved_for_memory", False),
        )
        for r in data["registers"]
    )
    schemes = []
    for s in data["schemes"]:
        mem = s["memory"]
        schemes.append(
            InstructionScheme(
                id=s["id"],
                mnemonic=s["mnemonic"],
                category=s["category"],
                isa_set=s["isa_set"],
                uop_count=s["uop_count"],
                memory=MemoryUsage(mem["reads"], mem["writes"], mem.get("size")),
                operands=tuple(
                    OperandScheme(
                        kind=o["kind"],
                        width=o["width"],
                        access=frozenset(o.get("access", ())),
                        register_class=o.get("register_class"),
                        fixed_register=o.get("fixed_register"),
                        fixed_value=o.get("fixed_value"),
                        implicit=o.get("implicit", False),
                    )
                    for o in s["operands"]
                ),
                prefixes=frozenset(s.get("prefixes", ())),
            )
        )
    universe = SchemeUniverse(tuple(schemes), registers, source)
    preds = [_compile_filter(f) for f in filters]
    if preds:
        keep = [s.id for s in universe.schemes if all(p(s) for p in preds)]
        universe = universe.restrict(keep)
    return universe


def load_universe(path: str | Path, filters: Sequence[str] = ()) -> SchemeUniverse:
    """Load and validate an ISA description file, applying ``filters``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ISAError(f"cannot read ISA description {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ISAError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_universe(data, filters, source=str(path))
