from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError

LAYOUT_ALGORITHMS = ("mds", "kamada_kawai")
BASEMAP_CLUSTERINGS = ("louvain", "section")


@dataclass(slots=True)
class AggregateConfig:
    workers: int = 1
    chunk_size: int = 50_000
    index_memory_cap: int = 2_000_000
    index_path: str | None = None


@dataclass(slots=True)
class LayoutConfig:
    seed: int = 13
    max_iters: int = 2000
    tolerance: float = 1e-7
    algorithm: str = "mds"
    restarts: int = 4


@dataclass(slots=True)
class CommunityConfig:
    threshold: float = 0.2
    basemap_clusters: str = "louvain"


@dataclass(slots=True)
class OutputConfig:
    hide_empty_labels: bool = False
    label_max: int = 75


@dataclass(slots=True)
class FetchConfig:
    grant_endpoint: str = "https://patft.uspto.gov/netacgi/nph-Parser"
    application_endpoint: str = "https://appft.uspto.gov/netacgi/nph-Parser"
    user_agent: str = "ipc-maps/0.1"
    delay_ms: int = 1000
    attempts: int = 3
    backoff_seconds: float = 1.0
    timeout_seconds: float = 30.0
    page_size: int = 50
    window: int = 1000
    max_records: int | None = None
    cache_dir: str = ".ipc-maps/cache"


@dataclass(slots=True)
class AppConfig:
    seed: int = 13
    aggregate: AggregateConfig = field(default_factory=AggregateConfig)
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    community: CommunityConfig = field(default_factory=CommunityConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    fetch: FetchConfig = field(default_factory=FetchConfig)

    def with_seed(self, seed: int) -> AppConfig:
        self.seed = seed
        self.layout.seed = seed
        return self


def _merge(default: Any, override: Any) -> Any:
    if isinstance(default, dict) and isinstance(override, dict):
        merged: dict[str, Any] = {**default}
        for key, value in override.items():
            merged[key] = _merge(default.get(key), value)
        return merged
    return override if override is not None else default


def load_config(path: Path) -> AppConfig:
    data: dict[str, Any] = {}
    if path.exists():
        data = _read_toml(path)

    defaults = asdict(AppConfig())
    _reject_unknown(defaults, data, prefix="")
    merged = _merge(defaults, data)

    config = AppConfig(
        seed=int(merged["seed"]),
        aggregate=AggregateConfig(**merged["aggregate"]),
        layout=LayoutConfig(**merged["layout"]),
        community=CommunityConfig(**merged["community"]),
        output=OutputConfig(**merged["output"]),
        fetch=FetchConfig(**merged["fetch"]),
    )
    # The layout inherits the top-level seed unless pinned in its own section.
    if "seed" not in data.get("layout", {}):
        config.layout.seed = config.seed
    validate_config(config)
    return config


def validate_config(config: AppConfig) -> None:
    if config.layout.algorithm not in LAYOUT_ALGORITHMS:
        raise ConfigError(
            f"layout.algorithm must be one of {', '.join(LAYOUT_ALGORITHMS)}, "
            f"got {config.layout.algorithm!r}"
        )
    if config.community.basemap_clusters not in BASEMAP_CLUSTERINGS:
        raise ConfigError(
            f"community.basemap_clusters must be one of {', '.join(BASEMAP_CLUSTERINGS)}, "
            f"got {config.community.basemap_clusters!r}"
        )
    if not 0.0 <= config.community.threshold < 1.0:
        raise ConfigError(
            f"community.threshold must lie in [0, 1), got {config.community.threshold}"
        )
    if config.output.label_max < 4:
        raise ConfigError(f"output.label_max must be at least 4, got {config.output.label_max}")
    if config.layout.max_iters < 1 or config.layout.restarts < 1:
        raise ConfigError("layout.max_iters and layout.restarts must be positive")
    if config.aggregate.workers < 1 or config.aggregate.chunk_size < 1:
        raise ConfigError("aggregate.workers and aggregate.chunk_size must be positive")
    if config.fetch.page_size < 1 or config.fetch.window < config.fetch.page_size:
        raise ConfigError("fetch.window must be at least fetch.page_size")


def config_path(cli_path: str | None) -> Path:
    if cli_path:
        return Path(cli_path).expanduser()
    if env_path := os.getenv("IPC_MAPS_CONFIG"):
        return Path(env_path).expanduser()
    return Path("config.toml")


def write_resolved(config: AppConfig, out_dir: Path, extra: dict[str, Any] | None = None) -> Path:
    payload: dict[str, Any] = asdict(config)
    if extra:
        payload["run"] = extra
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "resolved-config.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _reject_unknown(defaults: dict[str, Any], data: dict[str, Any], prefix: str) -> None:
    for key, value in data.items():
        name = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key: {name}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {name} must be a table")
            _reject_unknown(defaults[key], value, prefix=f"{name}.")


def _read_toml(path: Path) -> dict[str, Any]:
    import tomllib

    try:
        with path.open("rb") as handle:
            return tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
