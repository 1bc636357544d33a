"""Static HTML reports for campaign archives.

Rendering is a pure function of the archive: no timestamps, no network
resources, stable ordering. Every number shown in a table cell is carried
verbatim in a ``data-value`` attribute so it can be traced to the archive.
"""
from __future__ import annotations

import html
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .analysis import rank
from .archive import LoadedArchive, number_from_json, read_archive

__all__ = ["ReportBundle", "fmt_number", "render_report", "write_report"]

_CSS = """
body { font-family: sans-serif; margin: 2em; color: #222; }
table { border-collapse: collapse; margin: 1em 0; }
th, td { border: 1px solid #bbb; padding: 0.25em 0.6em; text-align: left; vertical-align: top; }
th { background: #eee; }
td.num { text-align: right; font-variant-numeric: tabular-nums; }
pre { margin: 0; }
.accepted { color: #176117; font-weight: bold; }
.rejected { color: #a11; font-weight: bold; }
.root { color: #225; font-weight: bold; }
.flag { background: #fec; padding: 0 0.3em; }
ol.path > li { margin-bottom: 1em; }
ul.rejected-leaves { margin-top: 0.3em; }
nav a { margin-right: 1em; }
""".strip()


def fmt_number(x: float) -> str:
    """Display form of a metric; infinity is shown as the infinity sign."""
    if math.isinf(x):
        return "∞" if x > 0 else "-∞"
    if math.isnan(x):
        return "n/a"
    if float(x).is_integer():
        return str(int(x))
    return f"{x:.4f}"


def _num(value) -> str:
    """A numeric table cell. ``value`` is the archive's JSON encoding of the number."""
    x = number_from_json(value)
    return f'<td class="num" data-value="{html.escape(str(value))}">{fmt_number(x)}</td>'


def _result(r: Mapping) -> str:
    if "cycles" in r:
        return _num(r["cycles"])
    if "crash" in r:
        return f'<td class="rejected">crash: {html.escape(str(r["crash"]))}</td>'
    if "timeout" in r:
        return '<td class="rejected">timeout</td>'
    return "<td>unsupported</td>"


def _page(title: str, body: str) -> str:
    return (
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
        f"<title>{html.escape(title)}</title>\n<style>\n{_CSS}\n</style>\n</head>\n<body>\n"
        f"{body}\n</body>\n</html>\n"
    )


def _lines(lines) -> str:
    return "<br>".join(html.escape(x) for x in lines) or "⊤ (any block of this length)"


def _nav(extra: str = "") -> str:
    return (
        '<nav><a href="index.html">by interestingness</a>'
        f'<a href="index_generality.html">by generality</a>{extra}</nav>'
    )


def _predictor_names(config: Mapping) -> tuple:
    return tuple(p.get("name", f"tool {i}") for i, p in enumerate(config["predictors"], 1))


def _index(archive: LoadedArchive, by: str) -> str:
    cfg = archive.config
    a, b = _predictor_names(cfg)
    order = rank(archive.discoveries, by)
    raw = {r["id"]: r for r in archive.raw_discoveries}
    other = "generality" if by == "interestingness" else "interestingness"
    parts = [
        f"<h1>Inconsistencies: {html.escape(a)} vs {html.escape(b)}</h1>",
        _nav(),
        f"<p>Sorted by {by} (descending). Metric: {html.escape(cfg['metric'])}, "
        f"threshold {html.escape(str(cfg['threshold']))}, seed {html.escape(str(cfg['seed']))}. "
        f"Also available sorted by {other}.</p>",
    ]
    if not order:
        parts.append("<p>No discoveries.</p>")
    else:
        parts.append(
            "<table><thead><tr><th>#</th><th>discovery</th><th>mean interestingness</th>"
            "<th>generality</th><th>instructions</th><th>abstract block</th></tr></thead><tbody>"
        )
        for pos, d in enumerate(order, 1):
            rec = raw[d.id]
            flag = "" if rec["generalized"] else ' <span class="flag">not generalizable</span>'
            parts.append(
                f'<tr><td>{pos}</td><td><a href="discovery-{d.id:03d}.html">{d.id:03d}</a>{flag}</td>'
                f'{_num(rec["metrics"]["mean_difference"])}{_num(rec["metrics"]["generality"])}'
                f"<td>{len(d.block)}</td><td>{_lines(rec['description'])}</td></tr>"
            )
        parts.append("</tbody></table>")
    parts.append("<h2>Campaign statistics</h2><table><tbody>")
    for k in sorted(archive.stats):
        v = archive.stats[k]
        cell = _num(v) if isinstance(v, (int, float)) else f"<td>{html.escape(str(v))}</td>"
        parts.append(f"<tr><th>{html.escape(k)}</th>{cell}</tr>")
    parts.append("</tbody></table>")
    return _page(f"Discoveries by {by}", "\n".join(parts))


def _evidence_table(ev: Mapping, names: tuple, anchor: str, limit: int | None = None) -> str:
    samples = ev["samples"] if limit is None else ev["samples"][:limit]
    parts = [f'<table id="{anchor}"><thead><tr><th>block</th><th>{html.escape(names[0])}</th>'
             f"<th>{html.escape(names[1])}</th><th>difference</th><th>interesting</th></tr></thead><tbody>"]
    for s in samples:
        diff = s["difference"]
        dcell = "<td>n/a</td>" if diff is None else _num(diff)
        parts.append(
            f"<tr><td><pre>{html.escape(s['asm'])}</pre></td>{_result(s['a'])}{_result(s['b'])}"
            f"{dcell}<td>{'yes' if s['interesting'] else 'no'}</td></tr>"
        )
    parts.append("</tbody></table>")
    return "".join(parts)


def _evidence_summary(ev: Mapping) -> str:
    n = len(ev["samples"])
    hits = sum(1 for s in ev["samples"] if s["interesting"])
    out = f"{hits} of {n} sampled blocks interesting; {ev['sampler_failures']} sampler failures"
    if ev["failure"]:
        out += f"; {ev['failure']}"
    return html.escape(out)


def _discovery_page(archive: LoadedArchive, rec: Mapping, tree: Mapping) -> str:
    names = _predictor_names(archive.config)
    did = rec["id"]
    final = tree
    while True:
        nxt = [c for c in final["children"] if c["outcome"] == "accepted"]
        if not nxt:
            break
        final = nxt[0]
    parts = [
        f"<h1>Discovery {did:03d}</h1>",
        _nav(f'<a href="witness-{did:03d}.html">witness tree</a>'),
        "<table><tbody>",
        f"<tr><th>mean interestingness</th>{_num(rec['metrics']['mean_difference'])}</tr>",
        f"<tr><th>generality</th>{_num(rec['metrics']['generality'])}</tr>",
        f"<tr><th>generalized</th><td>{'yes' if rec['generalized'] else 'no (representative of the origin block)'}</td></tr>",
        "</tbody></table>",
        "<h2>Abstract block</h2>",
        f"<p>{_lines(rec['description'])}</p>",
        "<h2>Origin block (minimized)</h2>",
        f"<pre>{html.escape(rec['origin_asm'])}</pre>",
        "<h2>Example blocks</h2>",
        f"<p>{_evidence_summary(final['evidence'])}. First 10 shown; all are on the "
        f'<a href="witness-{did:03d}.html">witness page</a>.</p>',
        _evidence_table(final["evidence"], names, "examples", limit=10),
    ]
    return _page(f"Discovery {did:03d}", "\n".join(parts))


def _witness_page(archive: LoadedArchive, tree: Mapping) -> str:
    names = _predictor_names(archive.config)
    did = tree["discovery"]
    counter = [0]
    tables: list[str] = []

    def node_html(node: Mapping) -> str:
        counter[0] += 1
        anchor = f"ev-{counter[0]}"
        label = node["expansion_text"] or "representative of the origin block"
        tables.append(
            f'<h3 id="{anchor}-h">Evidence {counter[0]}: {html.escape(label)} '
            f'(<span class="{node["outcome"]}">{node["outcome"]}</span>)</h3>'
            f'<p>{_evidence_summary(node["evidence"])}</p>'
            + _evidence_table(node["evidence"], names, anchor)
        )
        return (
            f'<span class="{node["outcome"]}">{node["outcome"]}</span> {html.escape(label)} '
            f'— <a href="#{anchor}">evidence</a>: {_evidence_summary(node["evidence"])}'
        )

    parts = [f"<h1>Witness tree of discovery {did:03d}</h1>", _nav(f'<a href="discovery-{did:03d}.html">discovery</a>')]
    if tree.get("base_not_interesting"):
        parts.append('<p class="flag">The representative of the origin block was not interesting '
                     "on all samples; it was not generalized.</p>")
    parts.append('<ol class="path">')
    node = tree
    while node is not None:
        parts.append(f"<li>{node_html(node)}<br><small>{_lines(node['description'])}</small>")
        rejected = [c for c in node["children"] if c["outcome"] == "rejected"]
        if rejected:
            parts.append('<ul class="rejected-leaves">')
            for leaf in rejected:
                parts.append(f"<li>{node_html(leaf)}</li>")
            parts.append("</ul>")
        parts.append("</li>")
        accepted = [c for c in node["children"] if c["outcome"] == "accepted"]
        node = accepted[0] if accepted else None
    parts.append("</ol>")
    parts.append("<h2>Evidence</h2>")
    parts.extend(tables)
    return _page(f"Witness tree {did:03d}", "\n".join(parts))


@dataclass
class ReportBundle:
    archive: Path
    pages: dict  # file name -> HTML text

    def write(self, out: Path) -> Path:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in sorted(self.pages.items()):
            (out / name).write_text(text, encoding="utf-8")
        return out


def render_report(archive: LoadedArchive | str | Path) -> ReportBundle:
    if not isinstance(archive, LoadedArchive):
        archive = read_archive(Path(archive))
    pages = {
        "index.html": _index(archive, "interestingness"),
        "index_generality.html": _index(archive, "generality"),
    }
    for rec, tree in zip(archive.raw_discoveries, archive.raw_witnesses):
        pages[f"discovery-{rec['id']:03d}.html"] = _discovery_page(archive, rec, tree)
        pages[f"witness-{rec['id']:03d}.html"] = _witness_page(archive, tree)
    return ReportBundle(archive.path, pages)


def write_report(archive_path: str | Path, out: str | Path) -> Path:
    return render_report(archive_path).write(out)
