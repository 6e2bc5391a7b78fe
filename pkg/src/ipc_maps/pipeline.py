from __future__ import annotations

import logging
from collections.abc import Callable, Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregate import (
    CorrectionReport,
    build_citation_matrices,
    format_citation_matrix,
    format_correction_report,
    two_pass_index,
)
from .analysis import (
    SimilarityMatrix,
    correlate_overlays,
    cosine_citing,
    format_cosine,
    format_diversity,
    fractional_counts,
    kruskal_stress,
    parse_cosine,
    parse_diversity,
    rao_stirling,
)
from .community import (
    ComponentCensus,
    cluster_table,
    component_census,
    format_cluster_table,
    louvain,
    modularity,
    section_partition,
    threshold_graph,
)
from .config import AppConfig, write_resolved
from .errors import DataError, IpcMapsError, MissingBasemap, stage
from .formats import (
    basemap_from_vos,
    emit_clu,
    emit_pajek_project,
    emit_vec,
    emit_vos_map,
    format_counts,
    parse_clu,
    parse_pajek_project,
    parse_vec,
    parse_vos_map,
    truncate_label,
    write_atomic,
)
from .ingest import RecordSource, iter_admissible, read_records
from .layout import layout_mds, layout_spring
from .models import LEVELS, BaseMap, BaseMapEntry, Overlay, PatentRecord
from .scheme import IpcScheme, load_scheme

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class BasemapSummary:
    level: int
    classes: int
    isolated: int
    report: CorrectionReport
    stress: float
    clusters: int
    modularity: float
    census: ComponentCensus
    pajek_clusters: int
    pajek_modularity: float
    files: list[Path] = field(default_factory=list)


@dataclass(slots=True)
class OverlaySummary:
    patents: int
    skipped: dict[int, int]
    diversity: dict[int, float]
    files: list[Path] = field(default_factory=list)


@dataclass(slots=True)
class CheckResult:
    path: Path
    ok: bool
    detail: str


def basemap_files(level: int) -> dict[str, str]:
    return {
        "cosine": f"cos_ipc{level}.txt",
        "vos": f"ipc{level}.txt",
        "pajek": f"ipc{level}.paj",
        "correction": f"correction_ipc{level}.tsv",
        "clusters": f"clusters_ipc{level}.tsv",
        "matrix": f"matrix_ipc{level}.tsv",
    }


def run_basemap(
    source: RecordSource,
    out_dir: Path,
    config: AppConfig,
    levels: Sequence[int] = LEVELS,
    scheme: IpcScheme | None = None,
) -> list[BasemapSummary]:
    scheme = scheme or load_scheme()

    def corpus() -> Iterator[PatentRecord]:
        return iter_admissible(read_records(source))

    with stage("aggregate"):
        index = two_pass_index(
            corpus(),
            memory_cap=config.aggregate.index_memory_cap,
            path=config.aggregate.index_path,
        )
        try:
            matrices = build_citation_matrices(
                corpus(),
                index,
                scheme,
                levels=levels,
                workers=config.aggregate.workers,
                chunk_size=config.aggregate.chunk_size,
            )
        finally:
            index.close()

    summaries = []
    for level, (matrix, report) in sorted(matrices.items()):
        with stage(f"level {level}"):
            summaries.append(_basemap_level(matrix, report, scheme, out_dir, config))
    write_resolved(
        config,
        out_dir,
        extra={
            "command": "basemap",
            "corpus": source.origin,
            "levels": sorted(matrices),
            "scheme": scheme.version,
        },
    )
    return summaries


def _basemap_level(matrix, report, scheme, out_dir: Path, config: AppConfig) -> BasemapSummary:
    with stage("analysis"):
        sim = cosine_citing(matrix)

    with stage("community"):
        full_graph = threshold_graph(sim, 0.0)
        pajek_graph = threshold_graph(sim, config.community.threshold)
        census = component_census(pajek_graph)
        if config.community.basemap_clusters == "section":
            colors = section_partition(sim.classes)
            colors.modularity = modularity(full_graph, colors.membership)
        else:
            colors = louvain(full_graph, seed=config.seed)
        pajek_partition = louvain(pajek_graph, seed=config.seed)

    with stage("layout"):
        coordinates, layout_stress = _layout(sim, pajek_graph, config)

    rows = matrix.row_sums()
    entries = tuple(
        BaseMapEntry(
            symbol=symbol,
            label=truncate_label(f"{symbol} {scheme.heading(symbol)}", config.output.label_max),
            x=float(coordinates[i][0]),
            y=float(coordinates[i][1]),
            cluster=colors.membership[symbol],
            citations=rows[i],
            isolated=sim.isolated[i],
        )
        for i, symbol in enumerate(sim.classes)
    )
    base = BaseMap(level=matrix.level, entries=entries, stress=layout_stress)

    with stage("formats"):
        names = basemap_files(matrix.level)
        labels = {entry.symbol: entry.label for entry in entries}
        texts = {
            "cosine": format_cosine(sim),
            "vos": emit_vos_map(base),
            "pajek": emit_pajek_project(
                base,
                pajek_graph,
                pajek_partition.ordered(sim.classes),
                vectors=[("citations", [float(value) for value in rows])],
            ),
            "correction": format_correction_report(report),
            "clusters": format_cluster_table(cluster_table(colors.membership, labels)),
            "matrix": format_citation_matrix(matrix),
        }
        files = [_write(out_dir / names[key], text) for key, text in texts.items()]

    return BasemapSummary(
        level=matrix.level,
        classes=len(sim.classes),
        isolated=sum(sim.isolated),
        report=report,
        stress=layout_stress,
        clusters=colors.clusters,
        modularity=colors.modularity,
        census=census,
        pajek_clusters=pajek_partition.clusters,
        pajek_modularity=pajek_partition.modularity,
        files=files,
    )


def _layout(sim: SimilarityMatrix, graph, config: AppConfig) -> tuple[np.ndarray, float]:
    if config.layout.algorithm == "kamada_kawai":
        placed = layout_spring(graph, config.layout)
        coordinates = np.array([placed[symbol] for symbol in sim.classes], dtype=float)
        return coordinates, kruskal_stress(placed, sim)
    result = layout_mds(sim, config.layout)
    return result.positions, result.stress


def load_basemap(basemap_dir: Path, level: int) -> tuple[BaseMap, SimilarityMatrix]:
    names = basemap_files(level)
    vos_path = basemap_dir / names["vos"]
    cos_path = basemap_dir / names["cosine"]
    for path in (vos_path, cos_path):
        if not path.exists():
            raise MissingBasemap(f"{path} not found; run `ipc-maps basemap` first")
    base = basemap_from_vos(parse_vos_map(vos_path.read_text(encoding="utf-8")), level)
    sim = parse_cosine(cos_path.read_text(encoding="utf-8"), base.symbols, level)
    return base, sim


def load_basemaps(
    basemap_dir: Path, levels: Sequence[int] = LEVELS
) -> dict[int, tuple[BaseMap, SimilarityMatrix]]:
    with stage("basemap"):
        return {level: load_basemap(basemap_dir, level) for level in levels}


def compute_overlays(
    records: Sequence[PatentRecord],
    basemaps: dict[int, tuple[BaseMap, SimilarityMatrix]],
    scheme: IpcScheme,
) -> dict[int, Overlay]:
    overlays = {}
    for level, (_, sim) in sorted(basemaps.items()):
        overlay = fractional_counts(records, scheme, level)
        overlay.diversity = rao_stirling(overlay, sim)
        overlays[level] = overlay
    return overlays


def write_overlay(
    overlays: dict[int, Overlay],
    basemaps: dict[int, tuple[BaseMap, SimilarityMatrix]],
    out_dir: Path,
    config: AppConfig,
) -> list[Path]:
    files = []
    for level, overlay in sorted(overlays.items()):
        base, _ = basemaps[level]
        weights = [overlay.weight(symbol) for symbol in base.symbols]
        clusters = [
            entry.cluster if overlay.weight(entry.symbol) > 0 else 0 for entry in base.entries
        ]
        files.append(
            _write(
                out_dir / f"vos{level}.txt",
                emit_vos_map(base, overlay, hide_empty_labels=config.output.hide_empty_labels),
            )
        )
        files.append(_write(out_dir / f"ipc{level}.vec", emit_vec(weights, len(base))))
        files.append(_write(out_dir / f"ipc{level}.cls", emit_clu(clusters, len(base))))
    diversity = {level: overlay.diversity for level, overlay in overlays.items()}
    files.append(_write(out_dir / "ipc_rao.txt", format_diversity(diversity)))
    counts = out_dir / "counts.csv"
    if counts.exists():
        logger.warning("%s from a previous run is overwritten", counts)
    files.append(_write(counts, format_counts(overlays[level] for level in sorted(overlays))))
    return files


def run_overlay(
    source: RecordSource,
    basemap_dir: Path,
    out_dir: Path,
    config: AppConfig,
    levels: Sequence[int] = LEVELS,
    scheme: IpcScheme | None = None,
) -> OverlaySummary:
    scheme = scheme or load_scheme()
    basemaps = load_basemaps(basemap_dir, levels)
    with stage("ingest"):
        records = list(iter_admissible(read_records(source)))
    summary = _overlay_into(records, basemaps, scheme, out_dir, config)
    write_resolved(
        config,
        out_dir,
        extra={"command": "overlay", "patent_set": source.origin, "basemap": str(basemap_dir)},
    )
    return summary


def run_animate(
    source: RecordSource,
    basemap_dir: Path,
    out_dir: Path,
    config: AppConfig,
    levels: Sequence[int] = LEVELS,
    years: Sequence[int] | None = None,
    scheme: IpcScheme | None = None,
) -> dict[int, OverlaySummary]:
    """One overlay per year: issue year for grants, filing year for applications."""
    scheme = scheme or load_scheme()
    basemaps = load_basemaps(basemap_dir, levels)
    with stage("ingest"):
        records = list(iter_admissible(read_records(source)))
    undated = sum(1 for record in records if record.year is None)
    if undated:
        logger.warning("%d records without a date are left out of the animation", undated)
    by_year: dict[int, list[PatentRecord]] = {}
    for record in records:
        if record.year is not None:
            by_year.setdefault(record.year, []).append(record)
    if years is None:
        if not by_year:
            raise DataError("no dated records to animate")
        years = range(min(by_year), max(by_year) + 1)

    summaries = {}
    for year in years:
        with stage(str(year)):
            summaries[year] = _overlay_into(
                by_year.get(year, []), basemaps, scheme, out_dir / str(year), config
            )
    write_resolved(
        config,
        out_dir,
        extra={
            "command": "animate",
            "patent_set": source.origin,
            "basemap": str(basemap_dir),
            "years": list(years),
        },
    )
    return summaries


def run_diversity(
    source: RecordSource, basemap_dir: Path, levels: Sequence[int] = LEVELS
) -> dict[int, float]:
    scheme = load_scheme()
    basemaps = load_basemaps(basemap_dir, levels)
    with stage("ingest"):
        records = list(iter_admissible(read_records(source)))
    overlays = compute_overlays(records, basemaps, scheme)
    return {level: overlay.diversity for level, overlay in overlays.items()}


def run_compare(
    first: RecordSource, second: RecordSource, basemap_dir: Path, level: int
) -> tuple[float, float]:
    scheme = load_scheme()
    with stage("basemap"):
        base, _ = load_basemap(basemap_dir, level)
    with stage("ingest"):
        left = fractional_counts(iter_admissible(read_records(first)), scheme, level)
        right = fractional_counts(iter_admissible(read_records(second)), scheme, level)
    with stage("analysis"):
        return correlate_overlays(left, right, base.symbols)


def check_outputs(directory: Path) -> list[CheckResult]:
    """Re-parse every file this package writes that is found under ``directory``."""
    checkers: list[tuple[str, Callable[[str], object]]] = [
        ("cos_ipc*.txt", _check_cosine),
        ("ipc[34].txt", parse_vos_map),
        ("vos[34].txt", parse_vos_map),
        ("*.paj", parse_pajek_project),
        ("*.vec", parse_vec),
        ("*.cls", parse_clu),
        ("*.clu", parse_clu),
        ("ipc_rao.txt", parse_diversity),
    ]
    results = []
    for pattern, check in checkers:
        for path in sorted(directory.rglob(pattern)):
            try:
                check(path.read_text(encoding="utf-8"))
            except (IpcMapsError, ValueError) as exc:
                results.append(CheckResult(path=path, ok=False, detail=str(exc)))
            else:
                results.append(CheckResult(path=path, ok=True, detail="ok"))
    return results


def _check_cosine(text: str) -> SimilarityMatrix:
    symbols = sorted(
        {part for line in text.splitlines()[1:] if line for part in line.split("\t")[:2]}
    )
    header = text.split("\n", 1)[0]
    declared = int(header.rsplit("classes=", 1)[-1]) if "classes=" in header else len(symbols)
    if len(symbols) > declared:
        raise DataError(f"cosine file names {len(symbols)} classes, header says {declared}")
    padding = [f"~{i}" for i in range(declared - len(symbols))]
    return parse_cosine(text, [*symbols, *padding])


def _overlay_into(
    records: Iterable[PatentRecord],
    basemaps: dict[int, tuple[BaseMap, SimilarityMatrix]],
    scheme: IpcScheme,
    out_dir: Path,
    config: AppConfig,
) -> OverlaySummary:
    records = list(records)
    with stage("analysis"):
        overlays = compute_overlays(records, basemaps, scheme)
    with stage("formats"):
        files = write_overlay(overlays, basemaps, out_dir, config)
    return OverlaySummary(
        patents=len(records),
        skipped={level: overlay.skipped for level, overlay in overlays.items()},
        diversity={level: overlay.diversity for level, overlay in overlays.items()},
        files=files,
    )


def _write(path: Path, text: str) -> Path:
    if path.exists():
        logger.debug("replacing %s", path)
    return write_atomic(path, text)
