"""Command-line interface.

Every command reads an optional JSON config whose keys mirror
:class:`~blockdiff.discovery.CampaignConfig` fields; flags override fields
one-to-one. Randomized commands require ``--seed``. Exit codes: 0 success,
1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import random
import sys
import time
from pathlib import Path

from . import __version__
from .analysis import coverage, inconsistency_matrix, rank, select_cover, subsumption_matrix
from .archive import BUILTIN_ISA, ArchiveError, check_output_dir, dump_json, read_archive, write_archive
from .bblock import block_from_dict, block_to_dict
from .discovery import CampaignConfig, run_campaign
from .fixtures import mini_isa, mini_isa_dict
from .isa import SchemeUniverse, load_universe, parse_universe
from .predictors import Evaluator, Judge, load_predictor, probe_support
from .report import fmt_number, write_report
from .sampler import SampleFailure, SamplerConfig, sample_unconstrained

__all__ = ["main"]

logger = logging.getLogger("blockdiff")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- helpers ---------------------------------------------------------------------


def _read_config(path: str | None) -> tuple[dict, Path | None]:
    if path is None:
        return {}, None
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except FileNotFoundError:
        raise UsageError(f"config file {p} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"{p}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ValueError(f"{p}: config must be a JSON object")
    return data, p.parent


def load_isa(source: str | None, filters=()) -> tuple[SchemeUniverse, SchemeUniverse]:
    """(unfiltered, filtered) universes; ``None`` selects the built-in mini ISA."""
    if source in (None, BUILTIN_ISA):
        return mini_isa(), parse_universe(mini_isa_dict(), filters, source=BUILTIN_ISA)
    return load_universe(source), load_universe(source, filters)


def _universe_from(cfg: dict, args) -> tuple[SchemeUniverse, SchemeUniverse]:
    return load_isa(getattr(args, "isa", None) or cfg.get("isa"), cfg.get("filters", ()))


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_testset(path: str, universe: SchemeUniverse) -> list:
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except FileNotFoundError:
        raise UsageError(f"test set {p} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"{p}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if data.get("sha256") not in (None, universe.content_hash()):
        raise ValueError(f"{p}: test set was sampled from a different ISA than the archive")
    try:
        return [block_from_dict(b, universe) for b in data["blocks"]]
    except (KeyError, ValueError, TypeError) as exc:
        raise ValueError(f"{p}: malformed test set: {exc}") from None


# -- commands --------------------------------------------------------------------


def cmd_gen_isa_fixture(args) -> int:
    _write_or_print(mini_isa().to_json(), args.out)
    return 0


def cmd_probe(args) -> int:
    cfg, base = _read_config(args.config)
    if "predictors" not in cfg:
        raise UsageError("probe needs 'predictors' in the config")
    _, universe = _universe_from(cfg, args)
    rng = random.Random(args.seed)
    evaluator = Evaluator()
    out = {}
    for spec in cfg["predictors"]:
        p = load_predictor(spec, base)
        out[p.name] = probe_support(p, universe, SamplerConfig(), rng, evaluator)
    common = sorted(set.intersection(*(set(v) for v in out.values()))) if out else []
    result = {"universe_size": len(universe), "supported": out, "common": common}
    for name, ids in out.items():
        logger.info("%s supports %d of %d schemes", name, len(ids), len(universe))
    _write_or_print(dump_json(result), args.out)
    return 0


def cmd_testset(args) -> int:
    cfg, _ = _read_config(args.config)
    full, universe = _universe_from(cfg, args)
    max_len = args.max_block_len or cfg.get("max_block_len", 5)
    if args.length is not None and args.length < 1 or max_len < 1:
        raise UsageError("block lengths must be >= 1")
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    scfg = SamplerConfig(max_block_len=max(args.length or max_len, 8))
    scfg.check_capacity(universe, args.length or max_len)
    rng = random.Random(args.seed)
    blocks = []
    for _ in range(args.count):
        n = args.length or rng.randint(1, max_len)
        blocks.append(sample_unconstrained(n, universe, scfg, rng))
    data = {
        "source": full.source or BUILTIN_ISA,
        "sha256": full.content_hash(),
        "seed": args.seed,
        "blocks": [block_to_dict(b) for b in blocks],
    }
    _write_or_print(dump_json(data), args.out)
    return 0


def cmd_heatmap(args) -> int:
    cfg, base = _read_config(args.config)
    tools = cfg.get("tools", cfg.get("predictors"))
    if not tools or len(tools) < 2:
        raise UsageError("heatmap needs at least two entries in 'tools' (or 'predictors')")
    _, universe = _universe_from(cfg, args)
    tools = [load_predictor(t, base) for t in tools]
    scfg = SamplerConfig(max_block_len=max(args.length, 8))
    scfg.check_capacity(universe, args.length)
    rng = random.Random(args.seed)
    blocks = [sample_unconstrained(args.length, universe, scfg, rng) for _ in range(args.count)]
    threshold = args.threshold if args.threshold is not None else cfg.get("threshold", 0.5)
    m = inconsistency_matrix(tools, blocks, threshold, Evaluator(args.parallelism))
    if args.csv:
        Path(args.csv).write_text(m.to_csv())
    if args.json:
        Path(args.json).write_text(dump_json(m.to_dict()))
    width = max(len(t) for t in m.tools)
    print(" " * width + "".join(f" {t:>{width}}" for t in m.tools))
    for name, row in zip(m.tools, m.fractions):
        print(f"{name:>{width}}" + "".join(f" {100 * x:>{width - 1}.1f}%" for x in row))
    return 0


_CAMPAIGN_FLAGS = {
    "patience": "patience",
    "max_discoveries": "max_discoveries",
    "max_candidates": "max_candidates",
    "time_budget": "time_budget",
    "n_samples": "n_samples",
    "threshold": "threshold",
    "metric": "metric",
    "max_block_len": "max_block_len",
    "generalizations": "generalizations_per_candidate",
    "parallelism": "parallelism",
    "isa": "isa",
}


def cmd_campaign(args) -> int:
    raw, base = _read_config(args.config)
    raw.pop("tools", None)  # heatmap-only key; a config file may serve both commands
    for flag, field_name in _CAMPAIGN_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            raw[field_name] = value
    if args.no_probe:
        raw["probe_support"] = False
    raw["seed"] = args.seed
    if "predictors" not in raw:
        raise UsageError("campaign needs 'predictors' in the config")
    if args.isa:  # flag paths are relative to the working directory, not the config
        raw["isa"] = str(Path(args.isa).resolve())
    cfg = CampaignConfig.from_dict(raw, base)
    check_output_dir(Path(args.out), args.force)  # fail before the campaign, not after
    full, universe = load_isa(cfg.isa, cfg.filters)
    started = time.monotonic()
    campaign = run_campaign(cfg, universe)
    write_archive(campaign, full, Path(args.out), force=args.force)
    s = campaign.stats
    print(
        f"{s['discoveries']} discoveries ({s['discoveries_before_filter']} before filtering) from "
        f"{s['candidates']} candidates in {time.monotonic() - started:.1f}s; archive: {args.out}"
    )
    return 0


def cmd_rank(args) -> int:
    archive = read_archive(Path(args.archive))
    rows = rank(archive.discoveries, args.by)
    if args.json:
        print(dump_json([
            {"id": d.id, "mean_difference": fmt_number(d.mean_difference), "generality": d.generality}
            for d in rows
        ]), end="")
        return 0
    print(f"{'id':>4} {'interestingness':>16} {'generality':>10}  abstract block")
    from .absdom import describe

    for d in rows:
        print(f"{d.id:>4} {fmt_number(d.mean_difference):>16} {d.generality:>10}  {' | '.join(describe(d.block))}")
    return 0


def cmd_cover(args) -> int:
    archive = read_archive(Path(args.archive))
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    blocks = _load_testset(args.testset, archive.full_universe)
    cover = subsumption_matrix(archive.discoveries, blocks, archive.universe)
    chosen = select_cover(archive.discoveries, blocks, args.k, cover=cover, solver=args.solver)
    pos = {d.id: i for i, d in enumerate(archive.discoveries)}
    rows = [pos[d.id] for d in chosen]
    covered = int(cover[rows].any(axis=0).sum()) if rows and len(blocks) else 0
    print(dump_json({"selected": [d.id for d in chosen], "covered": covered, "test_set_size": len(blocks)}), end="")
    return 0


def cmd_coverage(args) -> int:
    archive = read_archive(Path(args.archive))
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    cfg = CampaignConfig.from_dict(archive.config)
    blocks = _load_testset(args.testset, archive.full_universe)
    judge = Judge(
        cfg.predictors,
        args.metric or cfg.metric,
        args.threshold if args.threshold is not None else cfg.threshold,
        Evaluator(cfg.parallelism),
    )
    rep = coverage(archive.discoveries, blocks, judge, archive.universe, args.k)
    text = dump_json(rep.to_dict())
    _write_or_print(text, args.out)
    return 0


def cmd_report(args) -> int:
    out = write_report(Path(args.archive), Path(args.out))
    print(f"report written to {out}/index.html")
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="blockdiff", description="Differential testing of basic-block throughput predictors.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed: bool):
        sp.add_argument("--config", help="JSON config file (keys mirror campaign config fields)")
        if seed:
            sp.add_argument("--seed", type=int, required=True, help="random seed (required)")

    sp = sub.add_parser("gen-isa-fixture", help="write the built-in 30-scheme mini ISA as JSON")
    common(sp, False)
    sp.add_argument("--out", help="output file (default: stdout)")
    sp.set_defaults(func=cmd_gen_isa_fixture)

    sp = sub.add_parser("probe", help="list the schemes each predictor supports")
    common(sp, True)
    sp.add_argument("--isa", help="ISA description file (default: built-in mini ISA)")
    sp.add_argument("--out", help="output JSON file (default: stdout)")
    sp.set_defaults(func=cmd_probe)

    sp = sub.add_parser("testset", help="sample random blocks and store them")
    common(sp, True)
    sp.add_argument("--isa")
    sp.add_argument("--count", type=int, default=1000)
    sp.add_argument("--length", type=int, help="fixed block length (default: uniform in [1, max_block_len])")
    sp.add_argument("--max-block-len", type=int)
    sp.add_argument("--out", help="output JSON file (default: stdout)")
    sp.set_defaults(func=cmd_testset)

    sp = sub.add_parser("heatmap", help="pairwise inconsistency fractions over random blocks")
    common(sp, True)
    sp.add_argument("--isa")
    sp.add_argument("--count", type=int, default=10000)
    sp.add_argument("--length", type=int, default=4)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--parallelism", type=int, default=1)
    sp.add_argument("--csv", help="write the matrix as CSV")
    sp.add_argument("--json", help="write the matrix as JSON")
    sp.set_defaults(func=cmd_heatmap)

    sp = sub.add_parser("campaign", help="run a discovery campaign and write an archive")
    common(sp, True)
    sp.add_argument("--out", required=True, help="archive directory")
    sp.add_argument("--force", action="store_true", help="overwrite an existing archive")
    sp.add_argument("--isa")
    sp.add_argument("--patience", type=int)
    sp.add_argument("--max-discoveries", type=int)
    sp.add_argument("--max-candidates", type=int)
    sp.add_argument("--time-budget", type=float)
    sp.add_argument("--n-samples", type=int)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--metric", choices=["relative", "absolute"])
    sp.add_argument("--max-block-len", type=int)
    sp.add_argument("--generalizations", type=int, help="generalizations per candidate")
    sp.add_argument("--parallelism", type=int)
    sp.add_argument("--no-probe", action="store_true", help="skip the startup support probe")
    sp.set_defaults(func=cmd_campaign)

    sp = sub.add_parser("rank", help="list an archive's discoveries in ranked order")
    common(sp, False)
    sp.add_argument("archive")
    sp.add_argument("--by", choices=["interestingness", "generality"], default="interestingness")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_rank)

    sp = sub.add_parser("cover", help="best k discoveries for covering a test set")
    common(sp, False)
    sp.add_argument("archive")
    sp.add_argument("--testset", required=True)
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--solver", choices=["exact", "milp"], default="exact")
    sp.set_defaults(func=cmd_cover)

    sp = sub.add_parser("coverage", help="how many interesting test blocks the discoveries explain")
    common(sp, False)
    sp.add_argument("archive")
    sp.add_argument("--testset", required=True)
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--metric", choices=["relative", "absolute"])
    sp.add_argument("--out", help="output JSON file (default: stdout)")
    sp.set_defaults(func=cmd_coverage)

    sp = sub.add_parser("report", help="render an archive as static HTML")
    common(sp, False)
    sp.add_argument("archive")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"blockdiff: error: {exc}", file=sys.stderr)
        return 1
    except (ArchiveError, SampleFailure, ValueError, OSError, RuntimeError) as exc:
        print(f"blockdiff: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
