"""Post-campaign analysis: ranking, top-k cover selection, coverage, pairwise matrices."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .absdom import gamma_in, represent, block_subsumes
from .bblock import BasicBlock
from .isa import SchemeUniverse
from .predictors import Evaluator, Judge, is_interesting, result_difference

__all__ = [
    "CoverageReport",
    "InconsistencyMatrix",
    "coverage",
    "generality",
    "inconsistency_matrix",
    "mean_interestingness",
    "rank",
    "select_cover",
    "subsumption_matrix",
]


def mean_interestingness(discovery, metric: str = "relative") -> float:
    """Mean metric over the discovery's final evidence; inf if any sample crashed."""
    diffs = [
        result_difference((s.result_a, s.result_b), metric) for s in discovery.evidence.samples
    ]
    diffs = [d for d in diffs if d is not None]
    if not diffs:
        return math.nan
    if any(math.isinf(d) for d in diffs):
        return math.inf
    return sum(diffs) / len(diffs)


def generality(discovery, universe: SchemeUniverse) -> int:
    """Smallest number of schemes any abstract instruction of the discovery represents."""
    block = getattr(discovery, "block", discovery)
    return min(len(gamma_in(i, universe)) for i in block.insns)


def rank(discoveries: Sequence, by: str = "interestingness") -> list:
    """Discoveries sorted descending by ``interestingness`` or ``generality``; ties by id."""
    if by == "interestingness":
        key = lambda d: (-(d.mean_difference if not math.isnan(d.mean_difference) else -math.inf), d.id)  # noqa: E731
    elif by == "generality":
        key = lambda d: (-d.generality, d.id)  # noqa: E731
    else:
        raise ValueError(f"unknown ranking {by!r}")
    return sorted(discoveries, key=key)


def subsumption_matrix(
    discoveries: Sequence, blocks: Sequence[BasicBlock], universe: SchemeUniverse
) -> np.ndarray:
    """Boolean matrix, ``[i, j]`` true iff discovery ``i`` subsumes block ``j``."""
    reps = [represent(b) for b in blocks]
    out = np.zeros((len(discoveries), len(blocks)), dtype=bool)
    for i, d in enumerate(discoveries):
        ab = getattr(d, "block", d)
        for j, r in enumerate(reps):
            out[i, j] = block_subsumes(ab, r, universe)
    return out


def _bits(row) -> int:
    v = 0
    for j, x in enumerate(row):
        if x:
            v |= 1 << j
    return v


def _select_exact(masks: list, k: int) -> tuple:
    """Branch and bound over include/exclude decisions in index order.

    Among optimal selections the smallest one wins, then the lexicographically
    smallest. Pre-order of the include-first search tree is lexicographic
    order of the selected index tuples, so keeping only strict improvements of
    (covered, -size) yields exactly that selection.
    """
    n = len(masks)
    best = [0, ()]

    def bound(covered: int, start: int, slots: int) -> int:
        gains = sorted((bin(masks[i] & ~covered).count("1") for i in range(start, n)), reverse=True)
        return bin(covered).count("1") + sum(gains[:slots])

    def hopeless(limit: int, size: int) -> bool:
        # nothing reachable beats the incumbent, or only ties it with more rows
        return limit < best[0] or (limit == best[0] and size >= len(best[1]))

    def dfs(start: int, covered: int, chosen: tuple):
        value = bin(covered).count("1")
        if value > best[0] or (value == best[0] and len(chosen) < len(best[1])):
            best[0], best[1] = value, chosen
        if len(chosen) == k or start == n:
            return
        slots = k - len(chosen)
        if hopeless(bound(covered, start, slots), len(chosen) + 1):
            return
        for i in range(start, n):
            if masks[i] & ~covered == 0:
                continue  # a row adding nothing never belongs to a smallest optimum
            dfs(i + 1, covered | masks[i], chosen + (i,))
            if hopeless(bound(covered, i + 1, slots), len(chosen) + 1):
                return

    dfs(0, 0, ())
    return best[1]


def _select_milp(cover: np.ndarray, k: int) -> tuple:
    from scipy.optimize import Bounds, LinearConstraint, milp

    n, m = cover.shape
    # variables: used[0..n), covered[0..m)
    c = np.concatenate([np.zeros(n), -np.ones(m)])
    rows = [np.concatenate([np.ones(n), np.zeros(m)])]
    lo, hi = [-np.inf], [k]
    for j in range(m):
        rows.append(np.concatenate([-cover[:, j].astype(float), np.eye(m)[j]]))
        lo.append(-np.inf)
        hi.append(0)
    res = milp(
        c,
        constraints=LinearConstraint(np.array(rows), lo, hi),
        integrality=np.ones(n + m),
        bounds=Bounds(0, 1),
    )
    if not res.success:
        raise RuntimeError(f"MILP solver failed: {res.message}")
    return tuple(i for i in range(n) if res.x[i] > 0.5)


def select_cover(
    discoveries: Sequence,
    test_set: Sequence[BasicBlock] | None,
    k: int,
    universe: SchemeUniverse | None = None,
    *,
    cover: np.ndarray | None = None,
    solver: str = "exact",
) -> list:
    """At most ``k`` discoveries subsuming as many test blocks as possible.

    Ties go to the fewest discoveries, then to the lexicographically smallest
    set of positions. Pass a
    precomputed ``cover`` matrix to skip the subsumption checks. The ``milp``
    solver is an alternative backend with the same objective (its tie-breaking
    is unspecified).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if cover is None:
        cover = subsumption_matrix(discoveries, test_set, universe)
    cover = np.asarray(cover, dtype=bool)
    if solver == "exact":
        chosen = _select_exact([_bits(row) for row in cover], k)
    elif solver == "milp":
        chosen = _select_milp(cover, k) if len(discoveries) else ()
    else:
        raise ValueError(f"unknown solver {solver!r}")
    return [discoveries[i] for i in chosen]


def covered_count(cover: np.ndarray, chosen_rows: Sequence[int]) -> int:
    if len(chosen_rows) == 0 or cover.shape[1] == 0:
        return 0
    return int(cover[list(chosen_rows)].any(axis=0).sum())


@dataclass
class CoverageReport:
    test_set_size: int
    interesting: int
    covered: int
    per_discovery: dict
    top_k: int
    top_k_ids: list
    top_k_covered: int
    vacuous: bool = False

    @property
    def covered_fraction(self) -> float:
        return 1.0 if self.vacuous else self.covered / self.interesting

    @property
    def top_k_fraction(self) -> float:
        return 1.0 if self.vacuous else self.top_k_covered / self.interesting

    def to_dict(self) -> dict:
        return {
            "test_set_size": self.test_set_size,
            "interesting": self.interesting,
            "covered": self.covered,
            "covered_fraction": self.covered_fraction,
            "vacuous": self.vacuous,
            "per_discovery": {str(k): v for k, v in self.per_discovery.items()},
            "top_k": self.top_k,
            "top_k_ids": self.top_k_ids,
            "top_k_covered": self.top_k_covered,
            "top_k_fraction": self.top_k_fraction,
        }


def coverage(
    discoveries: Sequence,
    test_set: Sequence[BasicBlock],
    judge: Judge,
    universe: SchemeUniverse,
    k: int = 10,
) -> CoverageReport:
    """How many interesting test blocks the discoveries (and the best ``k`` of them) subsume."""
    results = judge.results(test_set)
    interesting = [
        b for b, r in zip(test_set, results) if is_interesting(r, judge.metric, judge.threshold)
    ]
    cover = subsumption_matrix(discoveries, interesting, universe)
    covered = int(cover.any(axis=0).sum()) if len(discoveries) and interesting else 0
    per = {d.id: int(cover[i].sum()) for i, d in enumerate(discoveries)}
    top = select_cover(discoveries, None, k, cover=cover) if len(discoveries) else []
    pos = {d.id: i for i, d in enumerate(discoveries)}
    return CoverageReport(
        test_set_size=len(test_set),
        interesting=len(interesting),
        covered=covered,
        per_discovery=per,
        top_k=k,
        top_k_ids=[d.id for d in top],
        top_k_covered=covered_count(cover, [pos[d.id] for d in top]),
        vacuous=not interesting,
    )


@dataclass
class InconsistencyMatrix:
    tools: list
    fractions: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"tools": list(self.tools), "fractions": self.fractions.tolist()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + list(self.tools))
        for name, row in zip(self.tools, self.fractions):
            w.writerow([name] + [repr(float(x)) for x in row])
        return buf.getvalue()


def inconsistency_matrix(
    tools: Sequence,
    test_set: Sequence[BasicBlock],
    threshold: float = 0.5,
    evaluator: Evaluator | None = None,
) -> InconsistencyMatrix:
    """Fraction of blocks each tool pair disagrees on (relative metric)."""
    if len(tools) < 2:
        raise ValueError("need at least two tools")
    ev = evaluator or Evaluator()
    results = [ev.evaluate(t, test_set) for t in tools]
    n = len(tools)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            hits = sum(
                is_interesting((a, b), "relative", threshold) for a, b in zip(results[i], results[j])
            )
            out[i, j] = out[j, i] = hits / len(test_set) if test_set else 0.0
    return InconsistencyMatrix([t.name for t in tools], out)
