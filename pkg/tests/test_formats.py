from __future__ import annotations

import random

import networkx as nx
import pytest

from ipc_maps.errors import (
    IndexMisalignment,
    LengthMismatch,
    LevelMismatch,
    PajekSyntaxError,
    VosSyntaxError,
)
from ipc_maps.formats import (
    ELLIPSIS,
    PajekNetwork,
    basemap_from_vos,
    emit_clu,
    emit_pajek_net,
    emit_pajek_project,
    emit_vec,
    emit_vos_map,
    format_counts,
    log_weights,
    parse_clu,
    parse_pajek_net,
    parse_pajek_project,
    parse_vec,
    parse_vos_map,
    truncate_label,
    write_atomic,
)
from ipc_maps.models import BaseMap, BaseMapEntry, Overlay

_HEADER = "id,label,x,y,cluster,weight,normalized weight,symbol,count"
HEADING = (
    "A01B Soil working in agriculture or forestry; parts, details, or accessories of "
    "agricultural machines or implements, in general"
)


def _truncation_cases():
    cases = [
        ("", ""),
        ("A01", "A01"),
        ("x" * 74, "x" * 74),
        ("x" * 75, "x" * 75),
        ("x" * 76, "x" * 75 + ELLIPSIS),
        ("word " * 14 + "abcd", "word " * 14 + "abcd"),
        ("word " * 15 + "z", "word " * 15 + ELLIPSIS),
        ("word " * 14 + "abcdef", "word " * 14 + ELLIPSIS),
        (HEADING, HEADING[: HEADING.rfind(" ", 0, 75) + 1] + ELLIPSIS),
        ("a" * 70 + " " + "b" * 10, "a" * 70 + " " + ELLIPSIS),
        (" " + "b" * 80, " " + "b" * 74 + ELLIPSIS),
    ]
    rng = random.Random(75)
    words = ["soil", "working", "of", "agricultural", "machines", "or", "implements", "x"]
    while len(cases) < 50:
        text = " ".join(rng.choice(words) for _ in range(rng.randint(1, 30)))
        if len(text) <= 75:
            expected = text
        else:
            cut = text.rfind(" ", 0, 75)
            expected = text[: cut + 1] + ELLIPSIS if cut > 0 else text[:75] + ELLIPSIS
        cases.append((text, expected))
    return cases


@pytest.mark.parametrize(("heading", "expected"), _truncation_cases())
def test_truncate_label(heading, expected):
    result = truncate_label(heading)
    assert result == expected
    assert len(result) <= 75 + len(ELLIPSIS)
    assert truncate_label(result) == result


def test_truncate_label_respects_other_limits():
    assert truncate_label("abc def ghi", max_chars=8) == "abc def ..."
    with pytest.raises(ValueError):
        truncate_label("abc", max_chars=3)


def test_long_heading_ending_in_dots_is_still_cut():
    heading = "word " * 14 + "abcd..."
    assert len(heading) == 77
    assert truncate_label(heading) == "word " * 14 + ELLIPSIS
    assert len(truncate_label(heading)) - len(ELLIPSIS) <= 75


def _basemap(level=3, clusters=(1, 2, 1), citations=(10, 0, 3)):
    symbols = ["A01", "B23", "H04"] if level == 3 else ["A01B", "B23K", "H04L"]
    entries = tuple(
        BaseMapEntry(
            symbol=symbol,
            label=f"{symbol} Heading, with comma",
            x=0.5 * index - 0.25,
            y=1.0 - index,
            cluster=cluster,
            citations=count,
        )
        for index, (symbol, cluster, count) in enumerate(zip(symbols, clusters, citations))
    )
    return BaseMap(level=level, entries=entries)


def test_log_weights_normalize_to_mean_one():
    weights, normalized = log_weights([0.0, 1.0, 3.0])
    assert weights[0] == 0.0
    nonzero = [value for value in normalized if value > 0]
    assert sum(nonzero) / len(nonzero) == pytest.approx(1.0)
    assert log_weights([0.0, 0.0]) == ([0.0, 0.0], [0.0, 0.0])


def test_vos_basemap_file():
    text = emit_vos_map(_basemap())
    lines = text.split("\n")
    assert lines[0] == "id,label,x,y,cluster,weight,normalized weight,symbol,count"
    assert lines[1].startswith('1,"A01 Heading, with comma",-0.2500,1.0000,1,2.3979,')
    assert lines[1].endswith(",A01,10")
    assert lines[2] == '2,"B23 Heading, with comma",0.2500,0.0000,2,0.0000,0.0000,B23,0'
    assert text.endswith("\n")
    rows = parse_vos_map(text)
    assert [row.label for row in rows] == [entry.label for entry in _basemap().entries]
    rebuilt = basemap_from_vos(rows, 3)
    assert rebuilt.symbols == ("A01", "B23", "H04")
    assert [entry.citations for entry in rebuilt.entries] == [10, 0, 3]
    assert emit_vos_map(rebuilt) == text


def test_vos_overlay_file_hides_empty_labels():
    overlay = Overlay(level=3, weights={"A01": 2.0}, patent_count=2, class_attribution_count=2)
    shown = parse_vos_map(emit_vos_map(_basemap(), overlay))
    hidden = parse_vos_map(emit_vos_map(_basemap(), overlay, hide_empty_labels=True))
    assert [row.label for row in shown][1] == "B23 Heading, with comma"
    assert [row.label for row in hidden] == ["A01 Heading, with comma", "", ""]
    assert [row.normalized_weight for row in hidden] == [1.0, 0.0, 0.0]
    assert [row.x for row in hidden] == [row.x for row in shown]


def test_vos_level_mismatch():
    overlay = Overlay(level=4, weights={}, patent_count=0, class_attribution_count=0)
    with pytest.raises(LevelMismatch):
        emit_vos_map(_basemap(), overlay)
    with pytest.raises(LevelMismatch):
        basemap_from_vos(parse_vos_map(emit_vos_map(_basemap())), 4)


@pytest.mark.parametrize(
    "text",
    [
        "id,label,x,y\n1,A01,0,0\n",
        f"{_HEADER}\n1,A01,0,0,1,0,0,A01\n",
        f"{_HEADER}\n1,A01,zero,0,1,0,0,A01,0\n",
        f"{_HEADER}\n2,A01,0,0,1,0,0,A01,0\n",
        f"{_HEADER}\n1,A01,0,0,1,0,0,A01,many\n",
    ],
)
def test_vos_syntax_errors(text):
    with pytest.raises(VosSyntaxError):
        parse_vos_map(text)


def test_pajek_network_section_layout():
    network = PajekNetwork(
        name="tiny", labels=["A01", "B23"], coords=[(0.0, 0.0), (1.0, 0.5)], edges={(1, 2): 0.25}
    )
    text = emit_pajek_net(network)
    assert text.split("\r\n") == [
        "*Network tiny",
        "*Vertices 2",
        '1 "A01" 0.0000 0.0000',
        '2 "B23" 1.0000 0.5000',
        "*Edges",
        "1 2 0.250000",
        "",
        "",
    ]
    assert len(text.splitlines()) == 7
    again = parse_pajek_net(text)
    assert again.labels == ["A01", "B23"]
    assert again.edges == {(1, 2): 0.25}
    assert again.coords == [(0.0, 0.0), (1.0, 0.5)]


def test_pajek_project_golden(fixtures_dir):
    graph = nx.Graph()
    graph.add_nodes_from(["A01", "B23", "H04"])
    graph.add_edge("A01", "H04", weight=0.3125)
    text = emit_pajek_project(
        _basemap(), graph, [1, 2, 1], vectors=[("citations", [10.0, 0.0, 3.0])]
    )
    golden = (fixtures_dir / "ipc3_small.paj").read_bytes().decode("utf-8")
    assert text == golden
    project = parse_pajek_project(text)
    assert project.network.labels == ["A01", "B23", "H04"]
    assert project.network.edges == {(1, 3): 0.3125}
    assert project.partitions == {"ipc3": [1, 2, 1]}
    assert project.vectors == {"citations": [10.0, 0.0, 3.0]}
    assert project.network.to_graph().has_edge("A01", "H04")


def test_pajek_project_checks_alignment():
    graph = nx.Graph()
    graph.add_nodes_from(["A01", "B23", "H04"])
    with pytest.raises(IndexMisalignment):
        emit_pajek_project(_basemap(), graph, [1, 2])
    with pytest.raises(IndexMisalignment):
        emit_pajek_project(_basemap(), graph, [1, 2, 1], vectors=[("v", [1.0])])
    graph.add_edge("A01", "Q99")
    with pytest.raises(IndexMisalignment):
        emit_pajek_project(_basemap(), graph, [1, 2, 1])


def test_random_pajek_round_trips():
    rng = random.Random(10)
    for _ in range(1000):
        size = rng.randint(1, 12)
        labels = [f"C{index:02d} label" for index in range(size)]
        coords = [(rng.randint(0, 10000) / 10000, rng.randint(0, 10000) / 10000) for _ in labels]
        edges = {}
        for _ in range(rng.randint(0, 15)):
            source, target = sorted(rng.sample(range(1, size + 1), 2)) if size > 1 else (1, 1)
            edges[(source, target)] = rng.randint(1, 10**6) / 10**6
        network = PajekNetwork(name="r", labels=labels, coords=coords, edges=edges)
        assert parse_pajek_net(emit_pajek_net(network)) == network

        values = [rng.randint(-5, 5) / rng.choice([1, 2, 4, 3]) for _ in range(size)]
        assert parse_vec(emit_vec(values)) == values
        clusters = [rng.randint(0, 9) for _ in range(size)]
        assert parse_clu(emit_clu(clusters)) == clusters


def test_random_vos_round_trips():
    rng = random.Random(7)
    pool = [f"{section}{number:02d}" for section in "ABCDEFGH" for number in range(1, 100)]
    words = ["soil", "working,", '"quoted"', "it's", "a;b", "  ", "machines", "x"]
    for _ in range(1000):
        size = rng.randint(1, 10)
        symbols = rng.sample(pool, size)
        groups = rng.randint(1, size)
        clusters = [index % groups + 1 for index in range(size)]
        rng.shuffle(clusters)
        entries = []
        for symbol, cluster in zip(symbols, clusters):
            heading = " ".join(rng.choice(words) for _ in range(rng.randint(0, 12)))
            count = rng.choice([0, 0, rng.randint(1, 10**7)])
            entries.append(
                BaseMapEntry(
                    symbol=symbol,
                    label=truncate_label(f"{symbol} {heading}", max_chars=rng.randint(4, 40)),
                    x=rng.randint(-20000, 20000) / 10000,
                    y=rng.randint(-20000, 20000) / 10000,
                    cluster=cluster,
                    citations=count,
                    isolated=count == 0,
                )
            )
        base = BaseMap(level=3, entries=tuple(entries))
        text = emit_vos_map(base)
        rebuilt = basemap_from_vos(parse_vos_map(text), 3)
        assert rebuilt == base
        assert emit_vos_map(rebuilt) == text

        weights = {symbol: rng.randint(1, 60) / rng.choice([1, 3, 7]) for symbol in symbols[::2]}
        overlay = Overlay(level=3, weights=weights, patent_count=1, class_attribution_count=1)
        rows = parse_vos_map(emit_vos_map(base, overlay, hide_empty_labels=True))
        assert [row.symbol for row in rows] == symbols
        assert [row.count for row in rows] == [weights.get(symbol, 0.0) for symbol in symbols]


def test_basemap_rebuilds_when_the_label_cuts_the_symbol():
    entry = BaseMapEntry(symbol="A01", label="A0...", x=0.0, y=0.0, cluster=1, citations=4)
    rebuilt = basemap_from_vos(parse_vos_map(emit_vos_map(BaseMap(3, (entry,)))), 3)
    assert rebuilt.entries[0].symbol == "A01"
    assert rebuilt.entries[0].citations == 4


def test_vec_and_clu_layout():
    assert emit_vec([1.0, 0.5, 0.0]) == "*Vertices 3\r\n1\r\n0.5\r\n0\r\n"
    assert emit_clu([2, 0]) == "*Vertices 2\r\n2\r\n0\r\n"
    with pytest.raises(LengthMismatch):
        emit_vec([1.0], expected=2)
    with pytest.raises(LengthMismatch):
        emit_clu([1, 2, 3], expected=2)


@pytest.mark.parametrize(
    ("text", "line"),
    [
        ("1 2\r\n", 1),
        ("*Vertices 2\r\n1\r\n", 1),
        ("*Vertices 1\r\nx\r\n", 2),
        ("*Vertices two\r\n", 1),
    ],
)
def test_vec_syntax_errors(text, line):
    with pytest.raises(PajekSyntaxError) as info:
        parse_vec(text)
    assert info.value.line == line


def test_pajek_syntax_errors():
    with pytest.raises(PajekSyntaxError):
        parse_pajek_net('*Network n\r\n*Edges\r\n1 2\r\n')
    with pytest.raises(PajekSyntaxError) as info:
        parse_pajek_net('*Vertices 2\r\n1 "a"\r\n2 "b"\r\n*Edges\r\n1 3 1.0\r\n')
    assert info.value.line == 5
    with pytest.raises(PajekSyntaxError):
        parse_pajek_net("*Matrix\r\n")


def test_pajek_reader_accepts_arcs_and_comments():
    text = '% made by hand\n*Vertices 3\n1 "a"\n2 "b"\n3 c 0.1 0.2\n*Arcs\n1 2 2\n3 1\n'
    network = parse_pajek_net(text)
    assert network.directed
    assert network.labels == ["a", "b", "c"]
    assert network.coords == [None, None, (0.1, 0.2)]
    assert network.edges == {(1, 2): 2.0, (3, 1): 1.0}
    assert network.to_graph().has_edge("c", "a")


def test_counts_csv():
    overlays = [
        Overlay(
            level=3,
            weights={"B23": 1 / 3, "A01": 2 / 3},
            patent_count=1,
            class_attribution_count=3,
            patent_counts={"A01": 1, "B23": 1},
        )
    ]
    assert format_counts(overlays) == (
        "class,level,patents,fractional_count\n"
        "A01,3,1,0.666667\n"
        "B23,3,1,0.333333\n"
    )


def test_write_atomic_replaces_content(tmp_path):
    target = tmp_path / "deep" / "out.txt"
    write_atomic(target, "one\r\n")
    write_atomic(target, "two\r\n")
    assert target.read_bytes() == b"two\r\n"
    assert sorted(path.name for path in target.parent.iterdir()) == ["out.txt"]
