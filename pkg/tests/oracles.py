"""Independent reference implementations used to cross-check the package.

Nothing here calls the package's own gamma, subsumption or cover code: each
oracle re-derives its answer from the definitions, by brute force.
"""
from __future__ import annotations

import itertools
import math

from blockdiff.absdom import MUST, TOP, EditDistance, LogSize, Singleton, SubsetOrNone
from blockdiff.isa import FEATURES


def levenshtein(a: str, b: str) -> int:
    """Textbook dynamic program."""
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def raw_feature(scheme, feature):
    """Feature values read straight from the scheme record."""
    if feature == "memory_usage":
        m = scheme.memory
        out = set()
        if m.reads:
            out.add("R")
        if m.writes:
            out.add("W")
        if m.reads or m.writes:
            out.add(f"Size:{m.size}")
        return frozenset(out)
    if feature == "operand_schemes":
        return frozenset(o.token for o in scheme.operands)
    return getattr(scheme, feature)


def holds(feature, av, raw) -> bool:
    if av is TOP:
        return True
    if isinstance(av, Singleton):
        return raw == av.value
    if isinstance(av, EditDistance):
        return levenshtein(raw, av.base) <= av.d
    if isinstance(av, LogSize):
        return raw < 2**av.k
    assert isinstance(av, SubsetOrNone)
    if av.elements is None:
        return len(raw) == 0
    return set(av.elements) <= set(raw)


def gamma_in(insn, universe) -> set:
    return {
        n
        for n, s in enumerate(universe.schemes)
        if all(holds(f, insn.get(f), raw_feature(s, f)) for f in FEATURES)
    }


def member(block, ab, universe) -> bool:
    if len(block) != len(ab):
        return False
    for insn, ai in zip(block.insns, ab.insns):
        idx = [s.id for s in universe.schemes].index(insn.scheme.id)
        if idx not in gamma_in(ai, universe):
            return False
    for ((i1, o1), (i2, o2)), kind in ab.aliasing.items():
        if i1 > len(block) or i2 > len(block):
            continue
        ops1, ops2 = block.insns[i1 - 1].operands, block.insns[i2 - 1].operands
        if o1 > len(ops1) or o2 > len(ops2):
            continue
        a, b = ops1[o1 - 1], ops2[o2 - 1]
        if a.kind == b.kind == "register" and a.register.reg_class == b.register.reg_class:
            alias = a.register.alias_group == b.register.alias_group
        elif a.kind == b.kind == "memory":
            alias = (a.mem_base.name, a.mem_displacement) == (b.mem_base.name, b.mem_displacement)
        else:
            continue
        if alias != (kind == MUST):
            return False
    return True


def _between(lo: int, hi: int, n: int):
    """Indices strictly between lo and hi walking forward cyclically over range(n)."""
    k = (lo + 1) % n
    while k != hi:
        yield k
        k = (k + 1) % n


def subsumes(a1, a2, universe) -> bool:
    """Try every injective map (permutations) and check C1-C4 literally."""
    n1, n2 = len(a1), len(a2)
    g1 = [gamma_in(i, universe) for i in a1.insns]
    g2 = [gamma_in(i, universe) for i in a2.insns]
    al2 = dict(a2.aliasing.items())
    for m in itertools.permutations(range(n2), n1):  # C1 by construction
        if not all(g2[m[i]] <= g1[i] for i in range(n1)):  # C2
            continue
        ok = True
        for ((i, o1), (j, o2)), kind in a1.aliasing.items():  # C3
            p, q = (m[i - 1] + 1, o1), (m[j - 1] + 1, o2)
            if al2.get((p, q), al2.get((q, p))) != kind:
                ok = False
                break
        if not ok:
            continue
        image = set(m)
        if n1 > 1 and any(  # C4
            k in image for i in range(n1) for k in _between(m[i], m[(i + 1) % n1], n2)
        ):
            continue
        return True
    return False


def best_cover(cover, k: int) -> int:
    """Maximum number of columns covered by at most k rows."""
    n, m = len(cover), len(cover[0]) if len(cover) else 0
    best = 0
    for size in range(0, min(k, n) + 1):
        for rows in itertools.combinations(range(n), size):
            best = max(best, sum(any(cover[r][j] for r in rows) for j in range(m)))
    return best


def rel_difference(a: float, b: float) -> float:
    if a == b == 0:
        return 0.0
    return abs(a - b) / ((a + b) / 2)


def prob_any_differing(n_diff: int, n_total: int, length: int) -> float:
    """Chance that a block of ``length`` uniformly drawn schemes contains a differing one."""
    return 1 - ((n_total - n_diff) / n_total) ** length


def memory_rw_dependency(block) -> bool:
    """Planted predicate, restated: some instruction writes a location another reads."""
    accesses = []
    for n, insn in enumerate(block.insns):
        for os_, co in zip(insn.scheme.operands, insn.operands):
            if co.kind == "memory":
                accesses.append((n, (co.mem_base.name, co.mem_displacement), os_.access))
    return any(
        n1 != n2 and loc1 == loc2 and "W" in acc1 and "R" in acc2
        for n1, loc1, acc1 in accesses
        for n2, loc2, acc2 in accesses
    )


def isclose(a, b, tol=1e-9):
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol)
