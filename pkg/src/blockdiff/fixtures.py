"""A small x86-flavoured ISA for tests, demos and the ``gen-isa-fixture`` command.

Thirty schemes over twelve allocatable general-purpose registers in four
alias groups, plus two reserved memory base registers (each its own group).
"""
from __future__ import annotations

from .isa import SchemeUniverse, parse_universe

_GROUPS = {
    "a": [("rax", 64), ("eax", 32), ("ax", 16)],
    "b": [("rbx", 64), ("ebx", 32), ("bx", 16)],
    "c": [("rcx", 64), ("ecx", 32), ("cl", 8)],
    "d": [("rdx", 64), ("edx", 32), ("dx", 16)],
}
_BASES = ["r14", "r15"]


def _reg(access, width=64):
    return {"kind": "register-class", "access": list(access), "width": width, "register_class": "GPR"}


def _mem(access, width=64):
    return {"kind": "memory", "access": list(access), "width": width}


def _imm(width, value=None):
    d = {"kind": "immediate", "access": ["R"], "width": width}
    if value is not None:
        d["fixed_value"] = value
    return d


_CL = {"kind": "fixed-register", "access": ["R"], "width": 8, "fixed_register": "cl"}


def _scheme(sid, mnemonic, category, operands, uops=1, isa_set="BASE", prefixes=()):
    mem_ops = [o for o in operands if o["kind"] == "memory"]
    return {
        "id": sid,
        "mnemonic": mnemonic,
        "category": category,
        "isa_set": isa_set,
        "prefixes": list(prefixes),
        "uop_count": uops,
        "memory": {
            "reads": any("R" in o["access"] for o in mem_ops),
            "writes": any("W" in o["access"] for o in mem_ops),
            "size": mem_ops[0]["width"] if mem_ops else None,
        },
        "operands": operands,
    }


def mini_isa_dict() -> dict:
    registers = [
        {"name": n, "width": w, "alias_group": g, "reg_class": "GPR", "reserved_for_memory": False}
        for g, regs in _GROUPS.items()
        for n, w in regs
    ]
    registers += [
        {"name": b, "width": 64, "alias_group": b, "reg_class": "GPR", "reserved_for_memory": True}
        for b in _BASES
    ]
    S = _scheme
    schemes = [
        S("add_r64_r64", "add", "arith", [_reg("RW"), _reg("R")]),
        S("add_r64_m64", "add", "arith", [_reg("RW"), _mem("R")], uops=2),
        S("add_m64_r64", "add", "arith", [_mem("RW"), _reg("R")], uops=4),
        S("add_r64_i8", "add", "arith", [_reg("RW"), _imm(8)]),
        S("adc_r64_r64", "adc", "arith", [_reg("RW"), _reg("R")], uops=2),
        S("adc_r64_m64", "adc", "arith", [_reg("RW"), _mem("R")], uops=3),
        S("sub_r64_r64", "sub", "arith", [_reg("RW"), _reg("R")]),
        S("sub_m64_r64", "sub", "arith", [_mem("RW"), _reg("R")], uops=4),
        S("sub_r32_r32", "sub", "arith", [_reg("RW", 32), _reg("R", 32)]),
        S("imul_r64_r64", "imul", "mul", [_reg("RW"), _reg("R")]),
        S("imul_r64_m64", "imul", "mul", [_reg("RW"), _mem("R")], uops=2),
        S("and_r64_r64", "and", "logical", [_reg("RW"), _reg("R")]),
        S("and_m64_r64", "and", "logical", [_mem("RW"), _reg("R")], uops=4),
        S("and_r64_m64", "and", "logical", [_reg("RW"), _mem("R")], uops=2),
        S("or_m64_r64", "or", "logical", [_mem("RW"), _reg("R")], uops=4),
        S("xor_r64_r64", "xor", "logical", [_reg("RW"), _reg("R")]),
        S("xor_r32_r32", "xor", "logical", [_reg("RW", 32), _reg("R", 32)]),
        S("lock_add_m64_r64", "add", "arith", [_mem("RW"), _reg("R")], uops=8, prefixes=["lock"]),
        S("mov_r64_r64", "mov", "datamov", [_reg("W"), _reg("R")]),
        S("mov_r64_m64", "mov", "datamov", [_reg("W"), _mem("R")]),
        S("mov_m64_r64", "mov", "datamov", [_mem("W"), _reg("R")], uops=2),
        S("mov_r32_i32", "mov", "datamov", [_reg("W", 32), _imm(32)]),
        S("mov_r16_r16", "mov", "datamov", [_reg("W", 16), _reg("R", 16)]),
        S("xchg_m64_r64", "xchg", "datamov", [_mem("RW"), _reg("RW")], uops=8),
        S("shl_r64_cl", "shl", "shift", [_reg("RW"), _CL], uops=2),
        S("sar_r64_cl", "sar", "shift", [_reg("RW"), _CL], uops=2),
        S("shr_r64_i8", "shr", "shift", [_reg("RW"), _imm(8)]),
        S("shld_r64_r64_cl", "shld", "shift", [_reg("RW"), _reg("R"), _CL], uops=4, isa_set="I386"),
        S("shl_r16_0", "shl", "shift", [_reg("RW", 16), _imm(8, 0)], isa_set="I186"),
        S("bsr_r64_r64", "bsr", "bitbyte", [_reg("W"), _reg("R")], isa_set="I386"),
    ]
    return {"registers": registers, "schemes": schemes}


def mini_isa() -> SchemeUniverse:
    return parse_universe(mini_isa_dict(), source="<mini-isa>")
