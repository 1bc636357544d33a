import json
import math
import re
import shutil
from html.parser import HTMLParser
from pathlib import Path

import pytest

from conftest import MINI, planted_pair, uniform
from blockdiff.analysis import rank
from blockdiff.archive import (
    ArchiveError,
    number_from_json,
    number_to_json,
    node_to_json,
    read_archive,
    write_archive,
)
from blockdiff.discovery import CampaignConfig, run_campaign
from blockdiff.report import fmt_number, render_report, write_report


def planted_campaign(seed=42):
    return run_campaign(CampaignConfig(planted_pair(), seed=seed, n_samples=30, patience=30), MINI)


def crash_campaign():
    crash = uniform("crash", rules=[{"when": {"feature": "category", "equals": "shift"}, "then": {"crash": "boom"}}])
    return run_campaign(CampaignConfig((uniform("base"), crash), seed=5, n_samples=10, max_discoveries=2,
                                       generalizations_per_candidate=1, max_candidates=300), MINI)


@pytest.fixture(scope="module")
def planted(tmp_path_factory):
    camp = planted_campaign()
    path = write_archive(camp, MINI, tmp_path_factory.mktemp("arch") / "a")
    return camp, path


def tree_files(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# -- archive ---------------------------------------------------------------------------------


def test_number_encoding():
    for x in (0.0, 1.5, 7):
        assert number_from_json(number_to_json(x)) == x
    assert number_to_json(math.inf) == "inf" and number_from_json("inf") == math.inf
    assert math.isnan(number_from_json(number_to_json(math.nan)))


def test_round_trip(planted):
    camp, path = planted
    loaded = read_archive(path)
    assert [d.id for d in loaded.discoveries] == [d.id for d in camp.discoveries]
    for a, b in zip(camp.discoveries, loaded.discoveries):
        assert a.block == b.block and a.origin == b.origin
        assert a.mean_difference == b.mean_difference and a.generality == b.generality
        assert node_to_json(a.witness, "relative") == node_to_json(b.witness, "relative")
    stats = {k: v for k, v in camp.stats.items() if k != "wall_time_s"}
    assert loaded.stats == stats
    assert loaded.universe == camp.universe
    assert CampaignConfig.from_dict(loaded.config) == camp.config


def test_layout_and_determinism(planted, tmp_path):
    _, path = planted
    assert sorted(p.name for p in path.iterdir()) == ["config.json", "discoveries", "stats.json", "universe.ref", "witnesses"]
    again = write_archive(planted_campaign(), MINI, tmp_path / "b")
    assert tree_files(again) == tree_files(path)
    assert "wall_time_s" not in json.loads((path / "stats.json").read_text())


def test_overwrite_rules(planted, tmp_path):
    camp, _ = planted
    out = write_archive(camp, MINI, tmp_path / "x")
    with pytest.raises(ArchiveError, match="not empty"):
        write_archive(camp, MINI, out)
    write_archive(camp, MINI, out, force=True)
    read_archive(out)
    other = tmp_path / "notes"
    other.mkdir()
    (other / "todo.txt").write_text("keep me")
    with pytest.raises(ArchiveError, match="not a campaign archive"):
        write_archive(camp, MINI, other, force=True)
    assert (other / "todo.txt").read_text() == "keep me"


def corrupted(path, tmp_path):
    dst = tmp_path / "corrupt"
    shutil.copytree(path, dst)
    return dst


def test_schema_error_names_file_and_field(planted, tmp_path):
    dst = corrupted(planted[1], tmp_path)
    f = sorted((dst / "discoveries").iterdir())[0]
    rec = json.loads(f.read_text())
    rec["metrics"]["generality"] = "wide"
    f.write_text(json.dumps(rec))
    with pytest.raises(ArchiveError, match=re.escape(f.name) + r": schema mismatch at metrics/generality"):
        read_archive(dst)


def test_hash_and_count_checks(planted, tmp_path):
    dst = corrupted(planted[1], tmp_path)
    ref = json.loads((dst / "universe.ref").read_text())
    ref["sha256"] = "0" * 64
    (dst / "universe.ref").write_text(json.dumps(ref))
    with pytest.raises(ArchiveError, match="hash mismatch"):
        read_archive(dst)
    shutil.rmtree(dst)
    dst = corrupted(planted[1], tmp_path)
    name = sorted((dst / "discoveries").iterdir())[0].name
    (dst / "discoveries" / name).unlink()
    (dst / "witnesses" / name).unlink()
    with pytest.raises(ArchiveError, match="found"):
        read_archive(dst)
    with pytest.raises(ArchiveError, match="not a campaign archive"):
        read_archive(tmp_path / "nowhere")


# -- report ---------------------------------------------------------------------------------


class Links(HTMLParser):
    def __init__(self):
        super().__init__()
        self.hrefs, self.ids, self.values = [], set(), []

    def handle_starttag(self, tag, attrs):
        a = dict(attrs)
        if "href" in a:
            self.hrefs.append(a["href"])
        if "id" in a:
            self.ids.add(a["id"])
        if "data-value" in a:
            self.values.append(a["data-value"])


def parse(text):
    p = Links()
    p.feed(text)
    return p


def json_scalars(obj, out):
    if isinstance(obj, dict):
        for v in obj.values():
            json_scalars(v, out)
    elif isinstance(obj, list):
        for v in obj:
            json_scalars(v, out)
    else:
        out.add(str(obj))
    return out


def test_report_pages_and_links(planted):
    camp, path = planted
    bundle = render_report(path)
    n = len(camp.discoveries)
    assert len(bundle.pages) == 2 + 2 * n
    parsed = {name: parse(text) for name, text in bundle.pages.items()}
    for name, p in parsed.items():
        for href in p.hrefs:
            page, _, frag = href.partition("#")
            target = page or name
            assert target in bundle.pages, (name, href)
            if frag:
                assert frag in parsed[target].ids, (name, href)


def test_every_number_traces_to_the_archive(planted):
    _, path = planted
    archive_values = set()
    for f in path.rglob("*.json"):
        json_scalars(json.loads(f.read_text()), archive_values)
    json_scalars(json.loads((path / "universe.ref").read_text()), archive_values)
    for name, text in render_report(path).pages.items():
        for v in parse(text).values:
            assert v in archive_values, (name, v)


def test_index_order_and_determinism(planted, tmp_path):
    _, path = planted
    loaded = read_archive(path)
    index = render_report(loaded).pages["index.html"]
    order = [int(x) for x in re.findall(r'href="discovery-(\d+)\.html"', index)]
    assert order == [d.id for d in rank(loaded.discoveries)]
    by_gen = render_report(loaded).pages["index_generality.html"]
    order = [int(x) for x in re.findall(r'href="discovery-(\d+)\.html"', by_gen)]
    assert order == [d.id for d in rank(loaded.discoveries, by="generality")]
    a, b = write_report(path, tmp_path / "r1"), write_report(path, tmp_path / "r2")
    assert tree_files(a) == tree_files(b)


def test_witness_page_lists_rejected_leaves(planted):
    camp, path = planted
    bundle = render_report(path)
    for d in camp.discoveries:
        page = bundle.pages[f"witness-{d.id:03d}.html"]
        rejected = sum(1 for n in d.witness.walk() if n.outcome == "rejected")
        accepted = sum(1 for n in d.witness.walk() if n.outcome == "accepted")
        assert page.count('<span class="rejected">rejected</span>') == 2 * rejected  # list + evidence heading
        assert page.count('<span class="accepted">accepted</span>') == 2 * accepted
        assert '<ol class="path">' in page


def test_infinity_display_and_empty_campaign(tmp_path):
    camp = crash_campaign()
    assert camp.discoveries and all(d.mean_difference == math.inf for d in camp.discoveries)
    path = write_archive(camp, MINI, tmp_path / "crash")
    index = render_report(path).pages["index.html"]
    assert 'data-value="inf">∞</td>' in index
    assert fmt_number(math.inf) == "∞" and fmt_number(math.nan) == "n/a" and fmt_number(2.0) == "2"
    empty = run_campaign(CampaignConfig((uniform("a"), uniform("b")), seed=1, max_candidates=5), MINI)
    path = write_archive(empty, MINI, tmp_path / "empty")
    assert read_archive(path).discoveries == []
    bundle = render_report(path)
    assert set(bundle.pages) == {"index.html", "index_generality.html"}
    assert "No discoveries." in bundle.pages["index.html"]
