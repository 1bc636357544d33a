"""Campaign archives: a directory of deterministic JSON files.

Layout::

    config.json           normalized campaign configuration
    universe.ref          ISA source, its content hash and the supported scheme ids
    discoveries/NNN.json  abstract block, origin block and metrics
    witnesses/NNN.json    the generalization tree with all evidence
    stats.json            campaign counters (wall time excluded to keep runs byte-identical)

``NNN`` is the discovery id (its position before subsumption filtering).
"""
from __future__ import annotations

import json
import math
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from .absdom import AliasDrop, InsnFeature, block_from_json, block_to_json, describe, value_from_json, value_to_json
from .bblock import block_from_dict, block_to_dict, render
from .discovery import Campaign, Discovery, WitnessNode
from .fixtures import mini_isa
from .isa import SchemeUniverse, load_universe
from .predictors import Evidence, EvidenceSample, result_difference, result_from_json, result_to_json

__all__ = [
    "ArchiveError",
    "LoadedArchive",
    "BUILTIN_ISA",
    "dump_json",
    "number_from_json",
    "number_to_json",
    "read_archive",
    "resolve_universe",
    "write_archive",
]

BUILTIN_ISA = "<mini-isa>"
_FILES = ("config.json", "universe.ref", "stats.json")
_DIRS = ("discoveries", "witnesses")


class ArchiveError(ValueError):
    """A missing or malformed archive file; the message names the file."""


def dump_json(obj: Any, compact: bool = False) -> str:
    if compact:  # deep witness trees would be mostly indentation
        return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False) + "\n"
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def number_to_json(x: float) -> Any:
    """JSON has no infinity or NaN: encode them as strings."""
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def number_from_json(v: Any) -> float:
    return float(v)


# -- schemas ------------------------------------------------------------------

_NUMBER = {"anyOf": [{"type": "number"}, {"enum": ["inf", "-inf", "nan"]}]}
_ABSTRACT = {
    "type": "object",
    "required": ["insns", "aliasing"],
    "properties": {"insns": {"type": "array", "minItems": 1}, "aliasing": {"type": "array"}},
}
_CONCRETE = {
    "type": "array",
    "minItems": 1,
    "items": {"type": "object", "required": ["scheme", "operands"]},
}
DISCOVERY_SCHEMA = {
    "type": "object",
    "required": ["id", "block", "origin", "metrics", "generalized"],
    "properties": {
        "id": {"type": "integer", "minimum": 0},
        "block": _ABSTRACT,
        "origin": _CONCRETE,
        "metrics": {
            "type": "object",
            "required": ["mean_difference", "generality"],
            "properties": {"mean_difference": _NUMBER, "generality": {"type": "integer"}},
        },
        "generalized": {"type": "boolean"},
    },
}
_NODE = {
    "type": "object",
    "required": ["block", "expansion", "outcome", "evidence", "children"],
    "properties": {
        "block": _ABSTRACT,
        "outcome": {"enum": ["root", "accepted", "rejected"]},
        "evidence": {
            "type": "object",
            "required": ["samples", "failure", "sampler_failures"],
            "properties": {
                "samples": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["block", "a", "b", "interesting"],
                    },
                }
            },
        },
        "children": {"type": "array", "items": {"$ref": "#/$defs/node"}},
    },
}
WITNESS_SCHEMA = {**_NODE, "required": _NODE["required"] + ["discovery"], "$defs": {"node": _NODE}}
STATS_SCHEMA = {"type": "object", "required": ["candidates", "discoveries"]}
UNIVERSE_REF_SCHEMA = {
    "type": "object",
    "required": ["source", "sha256", "supported"],
    "properties": {"supported": {"type": "array", "items": {"type": "string"}}},
}
CONFIG_SCHEMA = {"type": "object", "required": ["predictors", "seed", "metric", "threshold"]}


# -- encoding -------------------------------------------------------------------


def expansion_to_json(exp) -> dict | None:
    if exp is None:
        return None
    if isinstance(exp, InsnFeature):
        return {
            "kind": "feature",
            "insn": exp.insn_index,
            "feature": exp.feature,
            "value": value_to_json(exp.feature, exp.value),
        }
    return {"kind": "alias", "pair": [list(p) for p in exp.pair]}


def expansion_from_json(d: Mapping | None):
    if d is None:
        return None
    if d["kind"] == "feature":
        return InsnFeature(d["insn"], d["feature"], value_from_json(d["feature"], d["value"]))
    return AliasDrop(tuple(tuple(p) for p in d["pair"]))


def _evidence_to_json(ev: Evidence, metric: str) -> dict:
    samples = []
    for s in ev.samples:
        diff = result_difference((s.result_a, s.result_b), metric)
        samples.append(
            {
                "block": block_to_dict(s.block),
                "asm": render(s.block),
                "a": result_to_json(s.result_a),
                "b": result_to_json(s.result_b),
                "difference": None if diff is None else number_to_json(diff),
                "interesting": s.interesting,
            }
        )
    return {"samples": samples, "failure": ev.failure, "sampler_failures": ev.sampler_failures}


def _evidence_from_json(d: Mapping, universe: SchemeUniverse) -> Evidence:
    samples = tuple(
        EvidenceSample(
            block_from_dict(s["block"], universe),
            result_from_json(s["a"]),
            result_from_json(s["b"]),
            s["interesting"],
        )
        for s in d["samples"]
    )
    return Evidence(samples, d["failure"], d["sampler_failures"])


def node_to_json(node: WitnessNode, metric: str) -> dict:
    return {
        "block": block_to_json(node.block),
        "description": describe(node.block),
        "expansion": expansion_to_json(node.expansion),
        "expansion_text": None if node.expansion is None else str(node.expansion),
        "outcome": node.outcome,
        "base_not_interesting": node.base_not_interesting,
        "evidence": _evidence_to_json(node.evidence, metric),
        "children": [node_to_json(c, metric) for c in node.children],
    }


def node_from_json(d: Mapping, universe: SchemeUniverse) -> WitnessNode:
    return WitnessNode(
        block_from_json(d["block"]),
        expansion_from_json(d["expansion"]),
        d["outcome"],
        _evidence_from_json(d["evidence"], universe),
        [node_from_json(c, universe) for c in d["children"]],
        d.get("base_not_interesting", False),
    )


def discovery_to_json(d: Discovery) -> dict:
    return {
        "id": d.id,
        "block": block_to_json(d.block),
        "description": describe(d.block),
        "origin": block_to_dict(d.origin),
        "origin_asm": render(d.origin),
        "metrics": {
            "mean_difference": number_to_json(d.mean_difference),
            "generality": d.generality,
        },
        "generalized": d.generalized,
    }


# -- universe reference ------------------------------------------------------------


def universe_ref(universe: SchemeUniverse, full: SchemeUniverse) -> dict:
    return {
        "source": full.source or BUILTIN_ISA,
        "sha256": full.content_hash(),
        "supported": [s.id for s in universe.schemes],
    }


def resolve_universe(ref: Mapping, ref_path: Path | None = None) -> tuple[SchemeUniverse, SchemeUniverse]:
    """(full universe, campaign universe) for a ``universe.ref`` record; checks the hash."""
    where = str(ref_path) if ref_path else "universe.ref"
    source = ref["source"]
    try:
        full = mini_isa() if source == BUILTIN_ISA else load_universe(source)
    except OSError as exc:
        raise ArchiveError(f"{where}: cannot load ISA {source!r}: {exc}") from None
    if full.content_hash() != ref["sha256"]:
        raise ArchiveError(f"{where}: ISA {source!r} changed since the campaign (hash mismatch)")
    unknown = [s for s in ref["supported"] if s not in {x.id for x in full.schemes}]
    if unknown:
        raise ArchiveError(f"{where}: unknown scheme ids {unknown}")
    return full, full.restrict(ref["supported"])


# -- write / read -----------------------------------------------------------------


def check_output_dir(out: Path, force: bool = False) -> bool:
    """Raise unless ``out`` may receive an archive; True if an old archive will be replaced."""
    out = Path(out)
    if out.exists() and not out.is_dir():
        raise ArchiveError(f"{out}: exists and is not a directory")
    if not out.exists() or not any(out.iterdir()):
        return False
    if not force:
        raise ArchiveError(f"{out}: directory is not empty (use --force to overwrite)")
    if not (out / "stats.json").exists():
        raise ArchiveError(f"{out}: refusing to overwrite a directory that is not a campaign archive")
    return True


def write_archive(campaign: Campaign, full_universe: SchemeUniverse, out: Path, force: bool = False) -> Path:
    out = Path(out)
    if check_output_dir(out, force):
        for name in _FILES:
            (out / name).unlink(missing_ok=True)
        for name in _DIRS:
            shutil.rmtree(out / name, ignore_errors=True)
    for name in _DIRS:
        (out / name).mkdir(parents=True, exist_ok=True)
    metric = campaign.config.metric
    (out / "config.json").write_text(dump_json(campaign.config.to_dict()))
    (out / "universe.ref").write_text(dump_json(universe_ref(campaign.universe, full_universe)))
    stats = {k: v for k, v in campaign.stats.items() if k != "wall_time_s"}
    (out / "stats.json").write_text(dump_json(stats))
    for d in campaign.discoveries:
        (out / "discoveries" / f"{d.id:03d}.json").write_text(dump_json(discovery_to_json(d)))
        tree = node_to_json(d.witness, metric)
        tree["discovery"] = d.id
        (out / "witnesses" / f"{d.id:03d}.json").write_text(dump_json(tree, compact=True))
    return out


@dataclass
class LoadedArchive:
    path: Path
    config: dict
    universe: SchemeUniverse  # restricted to the supported schemes
    full_universe: SchemeUniverse
    discoveries: list
    stats: dict
    raw_discoveries: list  # the JSON records, in discovery order
    raw_witnesses: list


def _load(path: Path, schema: Mapping) -> Any:
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ArchiveError(f"{path}: missing archive file") from None
    except json.JSONDecodeError as exc:
        raise ArchiveError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ArchiveError(f"{path}: schema mismatch at {loc}: {exc.message}") from None
    return data


def read_archive(path: Path) -> LoadedArchive:
    path = Path(path)
    if not path.is_dir():
        raise ArchiveError(f"{path}: not a campaign archive directory")
    config = _load(path / "config.json", CONFIG_SCHEMA)
    ref = _load(path / "universe.ref", UNIVERSE_REF_SCHEMA)
    stats = _load(path / "stats.json", STATS_SCHEMA)
    full, universe = resolve_universe(ref, path / "universe.ref")
    discoveries, raw_d, raw_w = [], [], []
    for f in sorted((path / "discoveries").glob("*.json")):
        rec = _load(f, DISCOVERY_SCHEMA)
        wf = path / "witnesses" / f.name
        tree = _load(wf, WITNESS_SCHEMA)
        if tree["discovery"] != rec["id"]:
            raise ArchiveError(f"{wf}: belongs to discovery {tree['discovery']}, expected {rec['id']}")
        try:
            d = Discovery(
                rec["id"],
                block_from_json(rec["block"]),
                block_from_dict(rec["origin"], full),
                node_from_json(tree, full),
                number_from_json(rec["metrics"]["mean_difference"]),
                rec["metrics"]["generality"],
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ArchiveError(f"{f}: cannot decode discovery: {exc}") from None
        discoveries.append(d)
        raw_d.append(rec)
        raw_w.append(tree)
    if len(discoveries) != stats["discoveries"]:
        raise ArchiveError(
            f"{path / 'stats.json'}: records {stats['discoveries']} discoveries, found {len(discoveries)}"
        )
    return LoadedArchive(path, config, universe, full, discoveries, stats, raw_d, raw_w)
