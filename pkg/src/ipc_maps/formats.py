"""VOSViewer map files and Pajek network, partition, vector and project files."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import re
import tempfile
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx

from .errors import (
    IndexMisalignment,
    LengthMismatch,
    LevelMismatch,
    PajekSyntaxError,
    VosSyntaxError,
)
from .models import BaseMap, BaseMapEntry, Overlay

logger = logging.getLogger(__name__)

VOS_COLUMNS = (
    "id",
    "label",
    "x",
    "y",
    "cluster",
    "weight",
    "normalized weight",
    "symbol",
    "count",
)
CRLF = "\r\n"
ELLIPSIS = "..."

_VERTEX_RE = re.compile(r'^(\d+)\s+(?:"([^"]*)"|(\S+))(?:\s+(\S+)\s+(\S+))?(?:\s.*)?$')


def truncate_label(heading: str, max_chars: int = 75) -> str:
    """Cut at ``max_chars``, back to the right-most space, and append three dots."""
    if max_chars < 4:
        raise ValueError("max_chars must be at least 4")
    if len(heading) <= max_chars:
        return heading
    head = heading[:max_chars]
    cut = head.rfind(" ")
    if cut <= 0:
        return head + ELLIPSIS
    return head[: cut + 1] + ELLIPSIS


@dataclass(frozen=True, slots=True)
class VosRow:
    id: int
    label: str
    x: float
    y: float
    cluster: int
    weight: float
    normalized_weight: float
    symbol: str
    count: float


def log_weights(values: Sequence[float]) -> tuple[list[float], list[float]]:
    """ln(1 + n) weights and their mean-one normalization over nonzero entries."""
    weights = [math.log1p(value) for value in values]
    nonzero = [weight for weight in weights if weight > 0]
    mean = sum(nonzero) / len(nonzero) if nonzero else 0.0
    normalized = [weight / mean if mean > 0 else 0.0 for weight in weights]
    return weights, normalized


def emit_vos_map(
    base: BaseMap, overlay: Overlay | None = None, hide_empty_labels: bool = False
) -> str:
    if overlay is not None and overlay.level != base.level:
        raise LevelMismatch(base.level, overlay.level)
    if overlay is None:
        counts = [float(entry.citations) for entry in base.entries]
    else:
        counts = [overlay.weight(entry.symbol) for entry in base.entries]
    weights, normalized = log_weights(counts)

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(VOS_COLUMNS)
    for number, (entry, weight, scaled, count) in enumerate(
        zip(base.entries, weights, normalized, counts, strict=True), start=1
    ):
        label = entry.label
        if overlay is not None and hide_empty_labels and weight == 0:
            label = ""
        writer.writerow(
            [
                number,
                label,
                f"{entry.x:.4f}",
                f"{entry.y:.4f}",
                entry.cluster,
                f"{weight:.4f}",
                f"{scaled:.4f}",
                entry.symbol,
                _number(count),
            ]
        )
    return buffer.getvalue()


def parse_vos_map(text: str) -> list[VosRow]:
    reader = csv.reader(io.StringIO(text))
    rows: list[VosRow] = []
    for number, fields in enumerate(reader, start=1):
        if number == 1:
            if tuple(fields) != VOS_COLUMNS:
                raise VosSyntaxError(1, f"unexpected header {fields!r}")
            continue
        if not fields:
            continue
        if len(fields) != len(VOS_COLUMNS):
            raise VosSyntaxError(number, f"expected {len(VOS_COLUMNS)} columns")
        try:
            row = VosRow(
                id=int(fields[0]),
                label=fields[1],
                x=float(fields[2]),
                y=float(fields[3]),
                cluster=int(fields[4]),
                weight=float(fields[5]),
                normalized_weight=float(fields[6]),
                symbol=fields[7],
                count=float(fields[8]),
            )
        except ValueError as exc:
            raise VosSyntaxError(number, str(exc)) from exc
        if row.id != len(rows) + 1:
            raise VosSyntaxError(number, f"id {row.id} out of sequence")
        rows.append(row)
    if not rows and not text.startswith(VOS_COLUMNS[0]):
        raise VosSyntaxError(1, "missing header")
    return rows


def basemap_from_vos(rows: Sequence[VosRow], level: int) -> BaseMap:
    """Rebuild a basemap from its own map file."""
    entries = []
    for row in rows:
        symbol = row.symbol
        if len(symbol) != level:
            raise LevelMismatch(level, len(symbol))
        entries.append(
            BaseMapEntry(
                symbol=symbol,
                label=row.label,
                x=row.x,
                y=row.y,
                cluster=row.cluster,
                citations=round(row.count),
                isolated=row.count == 0,
            )
        )
    return BaseMap(level=level, entries=tuple(entries))


@dataclass(slots=True)
class PajekNetwork:
    name: str
    labels: list[str]
    coords: list[tuple[float, float] | None]
    edges: dict[tuple[int, int], float] = field(default_factory=dict)
    directed: bool = False

    def to_graph(self) -> nx.Graph:
        graph = nx.DiGraph() if self.directed else nx.Graph()
        graph.add_nodes_from(self.labels)
        for (source, target), weight in self.edges.items():
            graph.add_edge(self.labels[source - 1], self.labels[target - 1], weight=weight)
        return graph


@dataclass(slots=True)
class PajekProject:
    network: PajekNetwork
    partitions: dict[str, list[int]] = field(default_factory=dict)
    vectors: dict[str, list[float]] = field(default_factory=dict)


def network_from_basemap(base: BaseMap, graph: nx.Graph, name: str) -> PajekNetwork:
    position = {symbol: i for i, symbol in enumerate(base.symbols, start=1)}
    edges: dict[tuple[int, int], float] = {}
    for source, target, data in graph.edges(data=True):
        if source not in position or target not in position:
            raise IndexMisalignment(f"edge {source}-{target} names a class outside the basemap")
        i, j = sorted((position[source], position[target]))
        edges[(i, j)] = float(data.get("weight", 1.0))
    return PajekNetwork(
        name=name,
        labels=list(base.symbols),
        coords=_unit_square([(entry.x, entry.y) for entry in base.entries]),
        edges=dict(sorted(edges.items())),
    )


def emit_pajek_net(network: PajekNetwork) -> str:
    lines = [f"*Network {network.name}", f"*Vertices {len(network.labels)}"]
    for number, (label, point) in enumerate(
        zip(network.labels, network.coords, strict=True), start=1
    ):
        text = label.replace('"', "'")
        if point is None:
            lines.append(f'{number} "{text}"')
        else:
            lines.append(f'{number} "{text}" {point[0]:.4f} {point[1]:.4f}')
    lines.append("*Arcs" if network.directed else "*Edges")
    for (source, target), weight in sorted(network.edges.items()):
        lines.append(f"{source} {target} {weight:.6f}")
    lines.append("")
    return CRLF.join(lines) + CRLF


def emit_pajek_project(
    base: BaseMap,
    graph: nx.Graph,
    partition: Sequence[int],
    vectors: Sequence[tuple[str, Sequence[float]]] = (),
    name: str | None = None,
) -> str:
    size = len(base)
    if len(partition) != size:
        raise IndexMisalignment(f"partition has {len(partition)} entries for {size} classes")
    for vector_name, values in vectors:
        if len(values) != size:
            raise IndexMisalignment(
                f"vector {vector_name} has {len(values)} entries for {size} classes"
            )
    title = name or f"ipc{base.level}"
    parts = [emit_pajek_net(network_from_basemap(base, graph, title))]
    parts.append(_section(f"*Partition {title}", [str(int(value)) for value in partition]))
    for vector_name, values in vectors:
        parts.append(_section(f"*Vector {vector_name}", [_number(value) for value in values]))
    return "".join(parts)


def emit_vec(values: Sequence[float], expected: int | None = None) -> str:
    if expected is not None and len(values) != expected:
        raise LengthMismatch(expected, len(values))
    lines = [f"*Vertices {len(values)}", *(_number(value) for value in values)]
    return CRLF.join(lines) + CRLF


def emit_clu(clusters: Sequence[int], expected: int | None = None) -> str:
    if expected is not None and len(clusters) != expected:
        raise LengthMismatch(expected, len(clusters))
    lines = [f"*Vertices {len(clusters)}", *(str(int(value)) for value in clusters)]
    return CRLF.join(lines) + CRLF


def parse_vec(text: str) -> list[float]:
    return [float(value) for value in _parse_column(text, float)]


def parse_clu(text: str) -> list[int]:
    return [int(value) for value in _parse_column(text, int)]


def parse_pajek_net(text: str) -> PajekNetwork:
    return parse_pajek_project(text).network


def parse_pajek_project(text: str) -> PajekProject:
    network = PajekNetwork(name="", labels=[], coords=[])
    project = PajekProject(network=network)
    context = "network"
    name = ""
    seen_vertices = False
    for keyword, argument, number, body in _blocks(text):
        if keyword == "*network":
            context, name = "network", argument
            network.name = argument
        elif keyword == "*partition":
            context, name = "partition", argument
        elif keyword == "*vector":
            context, name = "vector", argument
        elif keyword == "*vertices":
            count = _vertex_count(argument, number)
            if context == "network":
                if seen_vertices:
                    raise PajekSyntaxError(number, "second network *Vertices section")
                seen_vertices = True
                _read_vertices(network, count, body)
            elif context == "partition":
                project.partitions[name] = _read_values(count, body, int, number)
            else:
                project.vectors[name] = _read_values(count, body, float, number)
        elif keyword in ("*edges", "*arcs"):
            if context != "network" or not seen_vertices:
                raise PajekSyntaxError(number, f"{keyword} before *Vertices")
            network.directed = network.directed or keyword == "*arcs"
            _read_edges(network, body)
        else:
            raise PajekSyntaxError(number, f"unknown section {keyword}")
        if keyword not in ("*vertices", "*edges", "*arcs") and body:
            raise PajekSyntaxError(body[0][0], "data outside a *Vertices section")
    if not seen_vertices:
        raise PajekSyntaxError(1, "missing *Vertices section")
    return project


def format_counts(overlays: Iterable[Overlay]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["class", "level", "patents", "fractional_count"])
    for overlay in overlays:
        for symbol in sorted(overlay.weights):
            writer.writerow(
                [
                    symbol,
                    overlay.level,
                    overlay.patent_counts.get(symbol, 0),
                    f"{overlay.weights[symbol]:.6f}",
                ]
            )
    return buffer.getvalue()


def write_atomic(path: Path, text: str) -> Path:
    """Replace ``path`` with ``text`` in one rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        "w",
        encoding="utf-8",
        newline="",
        dir=path.parent,
        prefix=f".{path.name}.",
        delete=False,
    )
    try:
        with handle:
            handle.write(text)
        os.replace(handle.name, path)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise
    return path


def _number(value: float) -> str:
    number = float(value)
    if number.is_integer():
        return str(int(number))
    return repr(number)


def _unit_square(points: Sequence[tuple[float, float]]) -> list[tuple[float, float] | None]:
    if not points:
        return []
    xs = [x for x, _ in points]
    ys = [y for _, y in points]
    span = max(max(xs) - min(xs), max(ys) - min(ys))
    if span == 0:
        return [(0.5, 0.5) for _ in points]
    return [((x - min(xs)) / span, (y - min(ys)) / span) for x, y in points]


def _section(header: str, values: Sequence[str]) -> str:
    lines = [header, f"*Vertices {len(values)}", *values, ""]
    return CRLF.join(lines) + CRLF


def _blocks(text: str) -> list[tuple[str, str, int, list[tuple[int, str]]]]:
    blocks: list[tuple[str, str, int, list[tuple[int, str]]]] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if line.startswith("*"):
            keyword, _, argument = line.partition(" ")
            blocks.append((keyword.lower(), argument.strip(), number, []))
            continue
        if not blocks:
            raise PajekSyntaxError(number, "data before the first section header")
        blocks[-1][3].append((number, line))
    return blocks


def _vertex_count(argument: str, number: int) -> int:
    try:
        return int(argument.split()[0])
    except (IndexError, ValueError) as exc:
        raise PajekSyntaxError(number, "*Vertices needs a vertex count") from exc


def _read_vertices(network: PajekNetwork, count: int, body: list[tuple[int, str]]) -> None:
    labels = [str(i) for i in range(1, count + 1)]
    coords: list[tuple[float, float] | None] = [None] * count
    for number, line in body:
        match = _VERTEX_RE.match(line)
        if match is None:
            raise PajekSyntaxError(number, f"bad vertex line {line!r}")
        vertex = int(match.group(1))
        if not 1 <= vertex <= count:
            raise PajekSyntaxError(number, f"vertex {vertex} outside 1..{count}")
        labels[vertex - 1] = match.group(2) if match.group(2) is not None else match.group(3)
        if match.group(4) is not None:
            try:
                coords[vertex - 1] = (float(match.group(4)), float(match.group(5)))
            except ValueError as exc:
                raise PajekSyntaxError(number, "bad vertex coordinates") from exc
    network.labels = labels
    network.coords = coords


def _read_edges(network: PajekNetwork, body: list[tuple[int, str]]) -> None:
    size = len(network.labels)
    for number, line in body:
        parts = line.split()
        try:
            source, target = int(parts[0]), int(parts[1])
            weight = float(parts[2]) if len(parts) > 2 else 1.0
        except (IndexError, ValueError) as exc:
            raise PajekSyntaxError(number, f"bad edge line {line!r}") from exc
        if not (1 <= source <= size and 1 <= target <= size):
            raise PajekSyntaxError(number, "edge endpoint outside the vertex range")
        key = (source, target) if network.directed else tuple(sorted((source, target)))
        network.edges[key] = weight


def _read_values(count: int, body: list[tuple[int, str]], kind: type, number: int) -> list:
    if len(body) != count:
        raise PajekSyntaxError(number, f"expected {count} values, found {len(body)}")
    values = []
    for line_number, line in body:
        try:
            values.append(kind(line.split()[0]))
        except ValueError as exc:
            raise PajekSyntaxError(line_number, f"bad value {line!r}") from exc
    return values


def _parse_column(text: str, kind: type) -> list:
    blocks = _blocks(text)
    if len(blocks) != 1 or blocks[0][0] != "*vertices":
        raise PajekSyntaxError(1, "expected a single *Vertices section")
    _, argument, number, body = blocks[0]
    return _read_values(_vertex_count(argument, number), body, kind, number)
