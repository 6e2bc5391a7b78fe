from __future__ import annotations

import logging
import math
import warnings
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DataError, LevelMismatch
from .models import ClassCitationMatrix, Overlay, PatentRecord
from .scheme import IpcScheme

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class SimilarityMatrix:
    level: int
    classes: tuple[str, ...]
    cos: np.ndarray
    isolated: tuple[bool, ...]

    def distances(self) -> np.ndarray:
        """Technological distance 1 - cos, zero on the diagonal."""
        distance = 1.0 - self.cos
        np.fill_diagonal(distance, 0.0)
        return distance

    def index(self) -> dict[str, int]:
        return {symbol: i for i, symbol in enumerate(self.classes)}

    def value(self, a: str, b: str) -> float:
        position = self.index()
        return float(self.cos[position[a], position[b]])

    @property
    def connected(self) -> np.ndarray:
        return ~np.asarray(self.isolated, dtype=bool)


def cosine_citing(matrix: ClassCitationMatrix) -> SimilarityMatrix:
    """Cosine between the citing rows of a class citation matrix."""
    rows = matrix.to_sparse()
    gram = np.asarray((rows @ rows.T).todense(), dtype=float)
    norms = np.sqrt(np.diag(gram))
    isolated = norms == 0
    safe = np.where(isolated, 1.0, norms)
    cos = gram / np.outer(safe, safe)
    cos = np.clip(cos, 0.0, 1.0)
    upper = np.triu(cos, k=1)
    cos = upper + upper.T
    np.fill_diagonal(cos, np.where(isolated, 0.0, 1.0))
    cos[isolated, :] = 0.0
    cos[:, isolated] = 0.0
    if isolated.any():
        logger.info(
            "level %d: %d of %d classes have no citing row and are isolated",
            matrix.level,
            int(isolated.sum()),
            len(matrix.classes),
        )
    return SimilarityMatrix(
        level=matrix.level,
        classes=matrix.classes,
        cos=cos,
        isolated=tuple(bool(flag) for flag in isolated),
    )


def fractional_counts(
    records: Iterable[PatentRecord], scheme: IpcScheme, level: int
) -> Overlay:
    """Split each patent's unit weight over its valid attributions at ``level``."""
    weights: dict[str, float] = {}
    patents: Counter[str] = Counter()
    patent_count = 0
    attributions = 0
    skipped = 0
    for record in records:
        symbols = [
            symbol
            for symbol in (code.at_level(level) for code in record.ipc_codes)
            if scheme.is_valid(symbol, level)
        ]
        if not symbols:
            skipped += 1
            continue
        share = 1.0 / len(symbols)
        for symbol in symbols:
            weights[symbol] = weights.get(symbol, 0.0) + share
        patents.update(set(symbols))
        patent_count += 1
        attributions += len(symbols)
    if skipped:
        logger.warning("level %d: %d patents without a valid class were skipped", level, skipped)
    return Overlay(
        level=level,
        weights=dict(sorted(weights.items())),
        patent_count=patent_count,
        class_attribution_count=attributions,
        skipped=skipped,
        patent_counts=dict(sorted(patents.items())),
    )


def rao_stirling(overlay: Overlay, sim: SimilarityMatrix) -> float:
    if overlay.level != sim.level:
        raise LevelMismatch(sim.level, overlay.level)
    weights = np.array([overlay.weight(symbol) for symbol in sim.classes], dtype=float)
    mapped = float(weights.sum())
    total = sum(overlay.weights.values())
    if total - mapped > 1e-9 * max(total, 1.0):
        logger.warning(
            "level %d: weight %.3f of %.3f falls on classes absent from the basemap",
            overlay.level,
            total - mapped,
            total,
        )
    if mapped <= 0.0:
        logger.warning("level %d: overlay has no weight on the basemap; diversity is 0", sim.level)
        return 0.0
    diversity = quadratic_entropy(weights / mapped, sim.distances())
    return min(max(diversity, 0.0), 1.0)


def quadratic_entropy(p: np.ndarray, distances: np.ndarray) -> float:
    """Sum of p_i p_j d_ij over all ordered pairs (i, j)."""
    return float(p @ distances @ p)


def kruskal_stress(
    positions: Mapping[str, tuple[float, float]], sim: SimilarityMatrix, fit_scale: bool = True
) -> float:
    """Stress of a named layout over its connected classes.

    With ``fit_scale`` the layout is first rescaled by the least-squares factor, so
    the result does not change when stored map coordinates are centred or rescaled.
    """
    symbols = [
        symbol
        for symbol, isolated in zip(sim.classes, sim.isolated, strict=True)
        if symbol in positions and not isolated
    ]
    index = sim.index()
    rows = [index[symbol] for symbol in symbols]
    points = np.array([positions[symbol] for symbol in symbols], dtype=float).reshape(-1, 2)
    distances = sim.distances()[np.ix_(rows, rows)]
    return fitted_stress(points, distances) if fit_scale else stress(points, distances)


def fitted_stress(points: np.ndarray, distances: np.ndarray) -> float:
    """Stress after the least-squares uniform rescaling of ``points``."""
    delta = points[:, None, :] - points[None, :, :]
    embedded = np.sqrt((delta**2).sum(axis=-1))
    denominator = float((embedded**2).sum())
    if denominator == 0.0:
        return stress(points, distances)
    factor = float((embedded * distances).sum()) / denominator
    return stress(points * factor, distances)


def stress(points: np.ndarray, distances: np.ndarray) -> float:
    """Kruskal stress-1 of ``points`` against target ``distances``."""
    if len(points) < 2:
        return 0.0
    delta = points[:, None, :] - points[None, :, :]
    embedded = np.sqrt((delta**2).sum(axis=-1))
    off = ~np.eye(len(points), dtype=bool)
    denominator = float((distances[off] ** 2).sum())
    if denominator == 0.0:
        return 0.0
    numerator = float(((embedded[off] - distances[off]) ** 2).sum())
    return math.sqrt(numerator / denominator)


def correlate_overlays(a: Overlay, b: Overlay, classes: Sequence[str]) -> tuple[float, float]:
    """Pearson r and two-sided p between two overlays over ``classes``."""
    if a.level != b.level:
        raise LevelMismatch(a.level, b.level)
    if len(classes) < 3:
        raise DataError("correlation needs at least three classes")
    left = np.array([a.weight(symbol) for symbol in classes], dtype=float)
    right = np.array([b.weight(symbol) for symbol in classes], dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = stats.pearsonr(left, right)
    r, p = float(result.statistic), float(result.pvalue)
    if math.isnan(r):
        logger.warning("correlation undefined: one overlay is constant over the basemap")
    return r, p


def format_cosine(sim: SimilarityMatrix) -> str:
    """Upper triangle with the diagonal; pairs absent from the file have cosine 0."""
    lines = [f"#level={sim.level} classes={len(sim.classes)} pairs=nonzero"]
    size = len(sim.classes)
    for i in range(size):
        for j in range(i, size):
            value = sim.cos[i, j]
            if value > 0.0:
                lines.append(f"{sim.classes[i]}\t{sim.classes[j]}\t{value:.6f}")
    return "\n".join(lines) + "\n"


def parse_cosine(text: str, classes: Sequence[str], level: int | None = None) -> SimilarityMatrix:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#level="):
        raise DataError("cosine file: missing header")
    header = dict(part.split("=", 1) for part in lines[0][1:].split())
    file_level = int(header["level"])
    if level is not None and file_level != level:
        raise LevelMismatch(level, file_level)
    if int(header["classes"]) != len(classes):
        raise DataError(
            f"cosine file lists {header['classes']} classes, basemap has {len(classes)}"
        )
    position = {symbol: i for i, symbol in enumerate(classes)}
    cos = np.zeros((len(classes), len(classes)), dtype=float)
    for number, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3 or parts[0] not in position or parts[1] not in position:
            raise DataError(f"cosine file line {number}: {line!r}")
        i, j = position[parts[0]], position[parts[1]]
        cos[i, j] = cos[j, i] = float(parts[2])
    isolated = tuple(bool(cos[i, i] == 0.0) for i in range(len(classes)))
    return SimilarityMatrix(level=file_level, classes=tuple(classes), cos=cos, isolated=isolated)


def format_diversity(values: Mapping[int, float]) -> str:
    return "".join(f"level{level}\t{values[level]:.3f}\n" for level in sorted(values))


def parse_diversity(text: str) -> dict[int, float]:
    values: dict[int, float] = {}
    for line in text.splitlines():
        if not line:
            continue
        name, _, value = line.partition("\t")
        if not name.startswith("level"):
            raise DataError(f"diversity file: unexpected line {line!r}")
        values[int(name[len("level") :])] = float(value)
    return values
