from __future__ import annotations

import json

import pytest

from ipc_maps.cli import main
from ipc_maps.config import FetchConfig
from ipc_maps.fetch import CachedTransport, SearchSpec, endpoint_for, fetch_all
from ipc_maps.ingest import write_canonical
from ipc_maps.state import load_state

from .conftest import make_record
from .pages import FIRST_ID, FakeSearchServer

QUERY = "ICL/A01B AND ISD/2007$$"


@pytest.fixture
def no_config(tmp_path):
    return ["--config", str(tmp_path / "none.toml")]


@pytest.fixture
def recorded_search(tmp_path):
    """Pages of a seven-hit search, saved as an offline fixture directory."""
    directory = tmp_path / "pages"
    cached = CachedTransport(FakeSearchServer(total=7), directory)
    endpoint = endpoint_for("grant", FetchConfig())
    for start in (1, 4):
        spec = SearchSpec(db="grant", query=QUERY, start=start)
        fetch_all(spec, lambda _: None, cached, endpoint=endpoint)
    return directory


def _snapshot(directory):
    return {
        path.relative_to(directory): path.read_bytes()
        for path in sorted(directory.rglob("*"))
        if path.is_file()
    }


def test_basemap_overlay_and_check(tmp_path, corpus_file, patent_set_file, no_config, capsys):
    basemap_dir = tmp_path / "basemap"
    overlay_dir = tmp_path / "overlay"

    assert main(["basemap", str(corpus_file), "--out-dir", str(basemap_dir), *no_config]) == 0
    out = capsys.readouterr().out
    assert "basemap level 3 complete: classes=9 " in out
    assert "basemap level 4 complete: classes=15 " in out

    code = main(
        [
            "overlay",
            str(patent_set_file),
            "--basemap-dir",
            str(basemap_dir),
            "--out-dir",
            str(overlay_dir),
            *no_config,
        ]
    )
    assert code == 0
    assert capsys.readouterr().out.startswith("overlay complete: patents=4 skipped=0 diversity3=")

    assert main(["formats-check", str(basemap_dir), *no_config]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[-1] == "formats-check complete: files=6 failed=0"
    assert all(line.startswith("ok\t") for line in lines[:-1])


def test_reruns_are_byte_identical(tmp_path, corpus_file, patent_set_file, no_config):
    basemap_dir = tmp_path / "basemap"
    overlay_dir = tmp_path / "overlay"
    basemap = ["basemap", str(corpus_file), "--out-dir", str(basemap_dir), "--seed", "5"]
    overlay = [
        "overlay",
        str(patent_set_file),
        "--basemap-dir",
        str(basemap_dir),
        "--out-dir",
        str(overlay_dir),
    ]

    assert main([*basemap, *no_config]) == 0
    assert main([*overlay, *no_config]) == 0
    first = (_snapshot(basemap_dir), _snapshot(overlay_dir))
    assert main([*basemap, *no_config]) == 0
    assert main([*overlay, *no_config]) == 0
    assert (_snapshot(basemap_dir), _snapshot(overlay_dir)) == first


def test_corpus_without_citations_exits_with_data_error(tmp_path, no_config, capsys):
    corpus = tmp_path / "flat.tsv"
    with corpus.open("w", encoding="utf-8", newline="") as handle:
        write_canonical([make_record("1", ["A01B"]), make_record("2", ["H04L"])], handle)
    code = main(["basemap", str(corpus), "--out-dir", str(tmp_path / "out"), *no_config])
    assert code == 3
    assert "basemap: aggregate: no admissible citation at level 3" in capsys.readouterr().err


def test_overlay_without_basemap_exits_with_data_error(tmp_path, patent_set_file, no_config):
    code = main(
        [
            "overlay",
            str(patent_set_file),
            "--basemap-dir",
            str(tmp_path / "missing"),
            "--out-dir",
            str(tmp_path / "out"),
            *no_config,
        ]
    )
    assert code == 3


def test_diversity_and_compare(tmp_path, corpus_file, patent_set_file, no_config, capsys):
    basemap_dir = tmp_path / "basemap"
    assert main(["basemap", str(corpus_file), "--out-dir", str(basemap_dir), *no_config]) == 0
    capsys.readouterr()

    diversity = ["diversity", str(patent_set_file), "--basemap-dir", str(basemap_dir)]
    assert main([*diversity, *no_config]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [line.split("\t")[0] for line in lines] == ["level3", "level4"]

    compare = ["compare", str(patent_set_file), str(patent_set_file)]
    assert main([*compare, "--basemap-dir", str(basemap_dir), *no_config]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["level"] == 4
    assert result["r"] == pytest.approx(1.0)


def test_animate_needs_both_years(tmp_path, patent_set_file, no_config, capsys):
    code = main(
        [
            "animate",
            str(patent_set_file),
            "--basemap-dir",
            str(tmp_path),
            "--out-dir",
            str(tmp_path / "out"),
            "--first-year",
            "2006",
            *no_config,
        ]
    )
    assert code == 2
    assert "--first-year and --last-year go together" in capsys.readouterr().err


def test_formats_check_on_empty_directory(tmp_path, no_config):
    assert main(["formats-check", str(tmp_path), *no_config]) == 3


def test_fetch_offline(tmp_path, recorded_search, no_config, capsys):
    out = tmp_path / "records.tsv"
    state = tmp_path / "state.json"
    command = [
        "fetch",
        "--query",
        QUERY,
        "--offline-fixtures",
        str(recorded_search),
        "--out",
        str(out),
        "--state",
        str(state),
        *no_config,
    ]
    assert main(command) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["complete"] is True
    assert report["parsed"] == 7
    ids = [line.split("\t")[0] for line in out.read_text(encoding="utf-8").splitlines()]
    assert ids == [str(FIRST_ID + seq) for seq in range(1, 8)]
    assert load_state(state).next_start == 8


def test_fetch_resumes_where_it_stopped(tmp_path, recorded_search, no_config, capsys):
    out = tmp_path / "records.tsv"
    state = tmp_path / "state.json"
    command = [
        "fetch",
        "--query",
        QUERY,
        "--offline-fixtures",
        str(recorded_search),
        "--out",
        str(out),
        "--state",
        str(state),
        *no_config,
    ]
    assert main([*command, "--max", "3"]) == 0
    first = json.loads(capsys.readouterr().out)
    assert first["complete"] is False
    assert first["resume_token"] == 4

    assert main([*command, "--resume"]) == 0
    second = json.loads(capsys.readouterr().out)
    assert second["start"] == 4
    assert second["complete"] is True
    assert len(out.read_text(encoding="utf-8").splitlines()) == 7

    assert main([*command, "--resume"]) == 0
    third = json.loads(capsys.readouterr().out)
    assert third["complete"] is True
    assert third["fetched"] == 0
    assert len(out.read_text(encoding="utf-8").splitlines()) == 7


def test_fetch_needs_a_transport_choice(tmp_path, no_config):
    code = main(["fetch", "--query", QUERY, "--out", str(tmp_path / "r.tsv"), *no_config])
    assert code == 2


def test_fetch_reports_a_missing_page(tmp_path, no_config, capsys):
    empty = tmp_path / "pages"
    empty.mkdir()
    command = [
        "fetch",
        "--query",
        QUERY,
        "--offline-fixtures",
        str(empty),
        "--out",
        str(tmp_path / "r.tsv"),
        "--state",
        str(tmp_path / "state.json"),
        *no_config,
    ]
    assert main(command) == 4
    report = json.loads(capsys.readouterr().out)
    assert "no fixture page" in report["error"]
