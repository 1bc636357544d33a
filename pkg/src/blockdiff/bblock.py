"""Concrete basic blocks and operand aliasing."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .isa import InstructionScheme, OperandScheme, RegisterDef, SchemeUniverse

__all__ = [
    "BasicBlock",
    "ConcreteOperand",
    "InstructionInstance",
    "block_from_dict",
    "block_to_dict",
    "do_alias",
    "operands_match",
    "render",
]


@dataclass(frozen=True)
class ConcreteOperand:
    kind: str  # "register" | "memory" | "immediate"
    register: RegisterDef | None = None
    mem_base: RegisterDef | None = None
    mem_displacement: int = 0
    value: int | None = None

    @classmethod
    def reg(cls, r: RegisterDef) -> "ConcreteOperand":
        return cls("register", register=r)

    @classmethod
    def mem(cls, base: RegisterDef, displacement: int = 0) -> "ConcreteOperand":
        return cls("memory", mem_base=base, mem_displacement=displacement)

    @classmethod
    def imm(cls, value: int) -> "ConcreteOperand":
        return cls("immediate", value=value)

    @property
    def location(self) -> tuple[str, int] | None:
        if self.kind != "memory":
            return None
        return (self.mem_base.name, self.mem_displacement)


@dataclass(frozen=True)
class InstructionInstance:
    scheme: InstructionScheme
    operands: tuple[ConcreteOperand, ...]

    def __post_init__(self):
        ops = self.scheme.operands
        if len(ops) != len(self.operands):
            raise ValueError(
                f"{self.scheme.id}: expected {len(ops)} operands, got {len(self.operands)}"
            )
        for n, (os_, co) in enumerate(zip(ops, self.operands), 1):
            _check_operand(self.scheme.id, n, os_, co)


_KIND_OF = {
    "register-class": "register",
    "fixed-register": "register",
    "memory": "memory",
    "immediate": "immediate",
}


def _check_operand(sid: str, n: int, os_: OperandScheme, co: ConcreteOperand) -> None:
    if _KIND_OF[os_.kind] != co.kind:
        raise ValueError(f"{sid}: operand {n} must be {os_.kind}, got {co.kind}")
    if os_.kind == "register-class":
        r = co.register
        if r.reg_class != os_.register_class or r.width != os_.width:
            raise ValueError(f"{sid}: operand {n}: {r.name} is not {os_.register_class}:{os_.width}")
    elif os_.kind == "fixed-register" and co.register.name != os_.fixed_register:
        raise ValueError(f"{sid}: operand {n} must be {os_.fixed_register}")
    elif os_.kind == "immediate" and os_.fixed_value is not None and co.value != os_.fixed_value:
        raise ValueError(f"{sid}: operand {n} must be {os_.fixed_value:#x}")


@dataclass(frozen=True)
class BasicBlock:
    insns: tuple[InstructionInstance, ...]

    def __post_init__(self):
        if not self.insns:
            raise ValueError("a basic block needs at least one instruction")

    def __len__(self):
        return len(self.insns)

    def __iter__(self) -> Iterator[InstructionInstance]:
        return iter(self.insns)

    def __getitem__(self, idx):
        return self.insns[idx]

    def operand(self, insn_index: int, operand_index: int) -> ConcreteOperand | None:
        """1-based operand lookup; None if the operand does not exist."""
        if not 1 <= insn_index <= len(self.insns):
            return None
        ops = self.insns[insn_index - 1].operands
        if not 1 <= operand_index <= len(ops):
            return None
        return ops[operand_index - 1]

    def without(self, position: int) -> "BasicBlock":
        """Copy with the 0-based instruction ``position`` removed."""
        return BasicBlock(self.insns[:position] + self.insns[position + 1 :])

    def __str__(self):
        return "; ".join(render(self).splitlines())


def operands_match(a: ConcreteOperand, b: ConcreteOperand) -> bool:
    """Whether two operands could refer to the same data at all."""
    if a.kind == "register" and b.kind == "register":
        return a.register.reg_class == b.register.reg_class
    return a.kind == "memory" and b.kind == "memory"


def do_alias(a: ConcreteOperand, b: ConcreteOperand) -> bool:
    if not operands_match(a, b):
        raise ValueError("do_alias is only defined for matching operands")
    if a.kind == "register":
        return a.register.alias_group == b.register.alias_group
    return a.location == b.location


def _render_operand(os_: OperandScheme, co: ConcreteOperand) -> str:
    if co.kind == "register":
        return co.register.name
    if co.kind == "memory":
        d = co.mem_displacement
        if d == 0:
            return f"[{co.mem_base.name}]"
        sign = "+" if d > 0 else "-"
        return f"[{co.mem_base.name} {sign} {abs(d)}]"
    if os_.fixed_value is not None:
        return hex(co.value)
    return str(co.value)


def render_insn(insn: InstructionInstance) -> str:
    ops = ", ".join(
        _render_operand(os_, co)
        for os_, co in zip(insn.scheme.operands, insn.operands)
        if not os_.implicit
    )
    head = " ".join(sorted(insn.scheme.prefixes) + [insn.scheme.mnemonic])
    return f"{head} {ops}" if ops else head


def render(block: BasicBlock) -> str:
    """Intel-syntax assembly, one instruction per line, one trailing newline."""
    return "".join(render_insn(i) + "\n" for i in block.insns)


def _operand_to_dict(co: ConcreteOperand) -> dict:
    if co.kind == "register":
        return {"reg": co.register.name}
    if co.kind == "memory":
        return {"base": co.mem_base.name, "disp": co.mem_displacement}
    return {"imm": co.value}


def _operand_from_dict(d: dict, universe: SchemeUniverse) -> ConcreteOperand:
    if "reg" in d:
        return ConcreteOperand.reg(universe.register(d["reg"]))
    if "base" in d:
        return ConcreteOperand.mem(universe.register(d["base"]), d["disp"])
    return ConcreteOperand.imm(d["imm"])


def block_to_dict(block: BasicBlock) -> list:
    return [
        {"scheme": i.scheme.id, "operands": [_operand_to_dict(o) for o in i.operands]}
        for i in block.insns
    ]


def block_from_dict(data: list, universe: SchemeUniverse) -> BasicBlock:
    return BasicBlock(
        tuple(
            InstructionInstance(
                universe.scheme(i["scheme"]),
                tuple(_operand_from_dict(o, universe) for o in i["operands"]),
            )
            for i in data
        )
    )
