from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from .config import AppConfig, config_path, load_config
from .errors import ConfigError, DataError, IpcMapsError, TransportError, stage
from .fetch import (
    CachedTransport,
    FetchLimits,
    FetchReport,
    FixtureTransport,
    HttpTransport,
    SearchSpec,
    Transport,
    endpoint_for,
    fetch_all,
    harvest_query,
)
from .ingest import RecordSource, format_canonical, source_for
from .models import LEVELS, PatentRecord
from .pipeline import (
    BasemapSummary,
    OverlaySummary,
    check_outputs,
    run_animate,
    run_basemap,
    run_compare,
    run_diversity,
    run_overlay,
)
from .state import FetchState, load_state, save_state

logger = logging.getLogger(__name__)

SOURCE_KINDS = ("canonical", "grant_html", "application_html")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    try:
        config = load_config(config_path(args.config))
        if args.seed is not None:
            config.with_seed(args.seed)
        with stage(args.command):
            return args.handler(args, config)
    except IpcMapsError as exc:
        print(f"ipc-maps: {exc.describe()}", file=sys.stderr)
        return exc.exit_code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Path to config.toml")
    common.add_argument("--seed", type=int, help="Seed for layout and community detection")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    common.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")

    parser = argparse.ArgumentParser(
        prog="ipc-maps", description="IPC citation basemaps and patent overlays"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    fetch = commands.add_parser("fetch", parents=[common], help="Download a patent search")
    fetch.add_argument("--url", help="Hit-list or record url to take the query from")
    fetch.add_argument("--query", help="Advanced-search query, e.g. 'ICN/NL AND ISD/2007$$'")
    fetch.add_argument("--db", choices=("grant", "application"), default="grant")
    fetch.add_argument("--start", type=int, help="1-based hit to start from")
    fetch.add_argument("--max", type=int, dest="max_records", help="Stop after N records")
    fetch.add_argument("--delay-ms", type=int, help="Pause between requests")
    fetch.add_argument("--cache-dir", help="Directory for downloaded pages")
    fetch.add_argument("--offline-fixtures", metavar="DIR", help="Serve pages from DIR")
    fetch.add_argument("--live", action="store_true", help="Query the live endpoints")
    fetch.add_argument("--overwrite", action="store_true", help="Re-download cached pages")
    fetch.add_argument("--resume", action="store_true", help="Continue an interrupted fetch")
    fetch.add_argument("--state", help="Resume state file (default: <cache-dir>/state.json)")
    fetch.add_argument("--out", required=True, help="Canonical record file to write")
    fetch.set_defaults(handler=cmd_fetch)

    basemap = commands.add_parser("basemap", parents=[common], help="Build the basemaps")
    _add_source(basemap, "corpus")
    _add_levels(basemap)
    basemap.add_argument("--out-dir", required=True)
    basemap.add_argument("--workers", type=int, help="Aggregation worker processes")
    basemap.add_argument("--algorithm", choices=("mds", "kamada_kawai"))
    basemap.set_defaults(handler=cmd_basemap)

    overlay = commands.add_parser("overlay", parents=[common], help="Overlay a patent set")
    _add_source(overlay, "patent_set")
    _add_levels(overlay)
    overlay.add_argument("--basemap-dir", required=True)
    overlay.add_argument("--out-dir", required=True)
    overlay.add_argument("--hide-empty-labels", action="store_true")
    overlay.set_defaults(handler=cmd_overlay)

    animate = commands.add_parser("animate", parents=[common], help="One overlay per year")
    _add_source(animate, "patent_set")
    _add_levels(animate)
    animate.add_argument("--basemap-dir", required=True)
    animate.add_argument("--out-dir", required=True)
    animate.add_argument("--first-year", type=int)
    animate.add_argument("--last-year", type=int)
    animate.add_argument("--hide-empty-labels", action="store_true")
    animate.set_defaults(handler=cmd_animate)

    diversity = commands.add_parser("diversity", parents=[common], help="Rao-Stirling diversity")
    _add_source(diversity, "patent_set")
    _add_levels(diversity)
    diversity.add_argument("--basemap-dir", required=True)
    diversity.set_defaults(handler=cmd_diversity)

    check = commands.add_parser(
        "formats-check", parents=[common], help="Re-parse every output file in a directory"
    )
    check.add_argument("directory")
    check.set_defaults(handler=cmd_formats_check)

    compare = commands.add_parser("compare", parents=[common], help="Correlate two overlays")
    compare.add_argument("first")
    compare.add_argument("second")
    compare.add_argument("--kind", choices=SOURCE_KINDS)
    compare.add_argument("--second-kind", choices=SOURCE_KINDS)
    compare.add_argument("--basemap-dir", required=True)
    compare.add_argument("--level", type=int, choices=LEVELS, default=4)
    compare.set_defaults(handler=cmd_compare)
    return parser


def cmd_fetch(args: argparse.Namespace, config: AppConfig) -> int:
    if args.delay_ms is not None:
        config.fetch.delay_ms = args.delay_ms
    if args.cache_dir:
        config.fetch.cache_dir = args.cache_dir
    spec = _search_spec(args)
    state_path = Path(args.state) if args.state else Path(config.fetch.cache_dir) / "state.json"
    append = False
    if args.resume:
        state = load_state(state_path)
        if state.matches(spec.db, spec.query):
            if state.complete:
                logger.info("search already complete (%d hits); nothing to do", state.total_hits)
                print(json.dumps(_finished(spec, state).as_dict(), indent=2, sort_keys=True))
                return 0
            spec.start = state.next_start
            append = True
        else:
            logger.warning("no resume state for this search in %s; starting over", state_path)

    if args.max_records is not None:
        config.fetch.max_records = args.max_records
    limits = FetchLimits(
        max_records=config.fetch.max_records,
        page_size=config.fetch.page_size,
        window=config.fetch.window,
    )
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    transport = _transport(args, config)
    try:
        with out_path.open("a" if append else "w", encoding="utf-8", newline="") as handle:

            def sink(record: PatentRecord) -> None:
                handle.write(format_canonical(record) + "\n")

            report = fetch_all(
                spec, sink, transport, limits, endpoint=endpoint_for(spec.db, config.fetch)
            )
    finally:
        if isinstance(transport, CachedTransport) and isinstance(transport.inner, HttpTransport):
            transport.inner.close()

    save_state(
        state_path,
        FetchState(
            db=spec.db,
            query=spec.query,
            next_start=report.resume_token,
            total_hits=report.total_hits,
            complete=report.complete,
        ),
    )
    print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    return _fetch_exit_code(report)


def cmd_basemap(args: argparse.Namespace, config: AppConfig) -> int:
    if args.workers is not None:
        config.aggregate.workers = args.workers
    if args.algorithm:
        config.layout.algorithm = args.algorithm
    summaries = run_basemap(
        _source(args.corpus, args.kind), Path(args.out_dir), config, _levels(args)
    )
    for summary in summaries:
        print(_basemap_line(summary))
    return 0


def cmd_overlay(args: argparse.Namespace, config: AppConfig) -> int:
    if args.hide_empty_labels:
        config.output.hide_empty_labels = True
    summary = run_overlay(
        _source(args.patent_set, args.kind),
        Path(args.basemap_dir),
        Path(args.out_dir),
        config,
        levels=_levels(args),
    )
    print(_overlay_line("overlay", summary))
    return 0


def cmd_animate(args: argparse.Namespace, config: AppConfig) -> int:
    if args.hide_empty_labels:
        config.output.hide_empty_labels = True
    if (args.first_year is None) != (args.last_year is None):
        raise ConfigError("--first-year and --last-year go together")
    years = None
    if args.first_year is not None:
        if args.last_year < args.first_year:
            raise ConfigError("--last-year comes before --first-year")
        years = range(args.first_year, args.last_year + 1)
    summaries = run_animate(
        _source(args.patent_set, args.kind),
        Path(args.basemap_dir),
        Path(args.out_dir),
        config,
        levels=_levels(args),
        years=years,
    )
    for year, summary in summaries.items():
        print(_overlay_line(str(year), summary))
    return 0


def cmd_diversity(args: argparse.Namespace, config: AppConfig) -> int:
    values = run_diversity(
        _source(args.patent_set, args.kind), Path(args.basemap_dir), _levels(args)
    )
    for level in sorted(values):
        print(f"level{level}\t{values[level]:.3f}")
    return 0


def cmd_formats_check(args: argparse.Namespace, config: AppConfig) -> int:
    results = check_outputs(Path(args.directory))
    if not results:
        raise DataError(f"no output files found under {args.directory}")
    failures = 0
    for result in results:
        if result.ok:
            print(f"ok\t{result.path}")
        else:
            failures += 1
            print(f"FAIL\t{result.path}\t{result.detail}")
    print(f"formats-check complete: files={len(results)} failed={failures}")
    return DataError.exit_code if failures else 0


def cmd_compare(args: argparse.Namespace, config: AppConfig) -> int:
    r, p = run_compare(
        _source(args.first, args.kind),
        _source(args.second, args.second_kind or args.kind),
        Path(args.basemap_dir),
        args.level,
    )
    print(json.dumps({"level": args.level, "p": p, "r": r}, sort_keys=True))
    return 0


def _add_source(parser: argparse.ArgumentParser, name: str) -> None:
    parser.add_argument(name, help="Canonical record file, HTML page, or directory of pages")
    parser.add_argument("--kind", choices=SOURCE_KINDS, help="Override the detected source kind")


def _add_levels(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--level",
        type=int,
        choices=LEVELS,
        action="append",
        help="Digit level (repeatable; default both)",
    )


def _levels(args: argparse.Namespace) -> tuple[int, ...]:
    return tuple(sorted(set(args.level))) if args.level else LEVELS


def _source(path: str, kind: str | None) -> RecordSource:
    return source_for(path, kind)


def _search_spec(args: argparse.Namespace) -> SearchSpec:
    if args.url:
        spec = harvest_query(args.url)
    elif args.query:
        spec = SearchSpec(db=args.db, query=args.query)
    else:
        raise ConfigError("fetch needs --url or --query")
    if args.start is not None:
        if args.start < 1:
            raise ConfigError("--start is 1-based")
        spec.start = args.start
    return spec


def _transport(args: argparse.Namespace, config: AppConfig) -> Transport:
    if args.live == bool(args.offline_fixtures):
        raise ConfigError("choose exactly one of --live and --offline-fixtures")
    if args.offline_fixtures:
        return FixtureTransport(args.offline_fixtures)
    return CachedTransport(
        HttpTransport(config.fetch), config.fetch.cache_dir, overwrite=args.overwrite
    )


def _finished(spec: SearchSpec, state: FetchState) -> FetchReport:
    return FetchReport(
        db=spec.db,
        query=spec.query,
        start=state.next_start,
        total_hits=state.total_hits,
        resume_token=state.next_start,
        complete=True,
    )


def _fetch_exit_code(report: FetchReport) -> int:
    if report.error is None:
        return 0
    return TransportError.exit_code


def _basemap_line(summary: BasemapSummary) -> str:
    report = summary.report
    return (
        f"basemap level {summary.level} complete: "
        f"classes={report.classes_after} "
        f"links={report.links_after} "
        f"citations={report.citations_after} "
        f"isolated={summary.isolated} "
        f"stress={summary.stress:.4f} "
        f"clusters={summary.clusters} "
        f"modularity={summary.modularity:.3f} "
        f"largest_component={len(summary.census.largest)}"
    )


def _overlay_line(name: str, summary: OverlaySummary) -> str:
    diversity = " ".join(
        f"diversity{level}={value:.3f}" for level, value in sorted(summary.diversity.items())
    )
    skipped = sum(summary.skipped.values())
    return f"{name} complete: patents={summary.patents} skipped={skipped} {diversity}".rstrip()


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    logging.getLogger().setLevel(level)
    logging.getLogger("httpx").setLevel(logging.WARNING)


if __name__ == "__main__":
    raise SystemExit(main())
