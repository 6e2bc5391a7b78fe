from __future__ import annotations

import logging
import re
from collections import Counter
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .analysis import SimilarityMatrix

logger = logging.getLogger(__name__)

EXACT_MAX_NODES = 8
LOUVAIN_RESTARTS = 8

_WORD_RE = re.compile(r"[a-z]+")
_STOP_WORDS = frozenset(
    """
    a an and any are as at be by e for from g i in into is it its not of on or other
    otherwise provided such than that the their thereof therefor therein these this to
    using with without specially adapted general kind kinds same used use specified
    """.split()
)


@dataclass(frozen=True, slots=True)
class ComponentCensus:
    sizes: tuple[int, ...]
    largest: tuple[str, ...]

    @property
    def components(self) -> int:
        return len(self.sizes)


@dataclass(slots=True)
class Partition:
    membership: dict[str, int]
    modularity: float

    @property
    def clusters(self) -> int:
        return len(set(self.membership.values()))

    def ordered(self, symbols: Sequence[str]) -> list[int]:
        return [self.membership[symbol] for symbol in symbols]


@dataclass(frozen=True, slots=True)
class ClusterRow:
    cluster: int
    size: int
    words: tuple[str, ...]


def threshold_graph(sim: SimilarityMatrix, tau: float) -> nx.Graph:
    """Cosine network keeping pairs with cos > tau."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {tau}")
    graph = nx.Graph()
    graph.add_nodes_from(sim.classes)
    size = len(sim.classes)
    for i in range(size):
        for j in range(i + 1, size):
            value = float(sim.cos[i, j])
            if value > tau:
                graph.add_edge(sim.classes[i], sim.classes[j], weight=value)
    census = component_census(graph)
    logger.info(
        "level %d, cos > %.2f: %d edges, %d components, largest %d of %d",
        sim.level,
        tau,
        graph.number_of_edges(),
        census.components,
        len(census.largest),
        size,
    )
    return graph


def component_census(graph: nx.Graph) -> ComponentCensus:
    components = sorted(
        (tuple(sorted(component)) for component in nx.connected_components(graph)),
        key=lambda members: (-len(members), members),
    )
    return ComponentCensus(
        sizes=tuple(len(members) for members in components),
        largest=components[0] if components else (),
    )


def louvain(graph: nx.Graph, seed: int, restarts: int = LOUVAIN_RESTARTS) -> Partition:
    """Louvain communities relabeled 1..K by descending size, isolates appended.

    Each restart is polished by single-vertex moves and the highest modularity
    wins. Graphs with at most ``EXACT_MAX_NODES`` non-isolated vertices are
    solved over every set partition instead.
    """
    if graph.number_of_edges() == 0:
        membership = {node: i for i, node in enumerate(sorted(graph.nodes), start=1)}
        return Partition(membership=membership, modularity=0.0)

    active = [node for node in graph.nodes if graph.degree(node) > 0]
    scores, total = _modularity_matrix(graph, active)
    if len(active) <= EXACT_MAX_NODES:
        labels = _exact_labels(scores, total)
    else:
        labels = _best_restart(graph, active, scores, total, seed, restarts)
    groups: dict[int, list] = {}
    for node, label in zip(active, labels.tolist(), strict=True):
        groups.setdefault(label, []).append(node)
    isolates = [[node] for node in graph.nodes if graph.degree(node) == 0]
    communities = [*groups.values(), *isolates]
    modularity = float(nx.community.modularity(graph, communities, weight="weight"))
    connected = [sorted(members) for members in communities if _has_edge(graph, members)]
    loose = sorted(
        node for members in communities if not _has_edge(graph, members) for node in members
    )
    connected.sort(key=lambda members: (-len(members), members[0]))
    membership: dict[str, int] = {}
    for cluster, members in enumerate(connected, start=1):
        for node in members:
            membership[node] = cluster
    for offset, node in enumerate(loose, start=len(connected) + 1):
        membership[node] = offset
    logger.info(
        "louvain: %d communities (%d singletons), Q = %.3f",
        len(connected) + len(loose),
        len(loose),
        modularity,
    )
    return Partition(membership=membership, modularity=modularity)


def modularity(graph: nx.Graph, membership: Mapping[str, int]) -> float:
    if graph.number_of_edges() == 0:
        return 0.0
    groups: dict[int, set[str]] = {}
    for node, cluster in membership.items():
        groups.setdefault(cluster, set()).add(node)
    return float(nx.community.modularity(graph, list(groups.values()), weight="weight"))


def section_partition(classes: Sequence[str]) -> Partition:
    """One cluster per IPC section present, numbered in section order."""
    sections = sorted({symbol[0] for symbol in classes})
    number = {section: i for i, section in enumerate(sections, start=1)}
    return Partition(
        membership={symbol: number[symbol[0]] for symbol in classes}, modularity=float("nan")
    )


def cluster_table(
    membership: Mapping[str, int], labels: Mapping[str, str], top: int = 3
) -> list[ClusterRow]:
    members: dict[int, list[str]] = {}
    for symbol, cluster in membership.items():
        members.setdefault(cluster, []).append(symbol)
    rows = []
    for cluster in sorted(members):
        words = Counter(_content_words(labels.get(symbol, "") for symbol in members[cluster]))
        ranked = sorted(words.items(), key=lambda item: (-item[1], item[0]))
        rows.append(
            ClusterRow(
                cluster=cluster,
                size=len(members[cluster]),
                words=tuple(word for word, _ in ranked[:top]),
            )
        )
    return rows


def format_cluster_table(rows: Iterable[ClusterRow]) -> str:
    lines = ["cluster\tsize\twords"]
    lines.extend(f"{row.cluster}\t{row.size}\t{', '.join(row.words)}" for row in rows)
    return "\n".join(lines) + "\n"


def _content_words(labels: Iterable[str]) -> Iterable[str]:
    for label in labels:
        for word in _WORD_RE.findall(label.lower()):
            if len(word) > 2 and word not in _STOP_WORDS:
                yield word


def _has_edge(graph: nx.Graph, members: Iterable[str]) -> bool:
    return any(graph.degree(node) > 0 for node in members)


def _modularity_matrix(graph: nx.Graph, nodes: list) -> tuple[np.ndarray, float]:
    """B = A - k k^T / 2m with self-loops counted twice, and 2m."""
    adjacency = nx.to_numpy_array(graph, nodelist=nodes, weight="weight")
    adjacency[np.diag_indices_from(adjacency)] *= 2.0
    degree = adjacency.sum(axis=1)
    total = float(degree.sum())
    return adjacency - np.outer(degree, degree) / total, total


def _quality(scores: np.ndarray, total: float, labels: np.ndarray) -> float:
    return float(scores[labels[:, None] == labels[None, :]].sum() / total)


def _restricted_growth(count: int) -> Iterator[list[int]]:
    """Every set partition of ``count`` items as a canonical label list."""
    labels = [0] * count

    def grow(position: int, blocks: int) -> Iterator[list[int]]:
        if position == count:
            yield labels
            return
        for label in range(blocks + 1):
            labels[position] = label
            yield from grow(position + 1, max(blocks, label + 1))

    yield from grow(1, 1)


def _exact_labels(scores: np.ndarray, total: float) -> np.ndarray:
    best = np.zeros(len(scores), dtype=np.int64)
    best_q = _quality(scores, total, best)
    for candidate in _restricted_growth(len(scores)):
        labels = np.asarray(candidate, dtype=np.int64)
        q = _quality(scores, total, labels)
        if q > best_q + 1e-12:
            best, best_q = labels, q
    return best


def _best_restart(
    graph: nx.Graph,
    active: list,
    scores: np.ndarray,
    total: float,
    seed: int,
    restarts: int,
) -> np.ndarray:
    position = {node: i for i, node in enumerate(active)}
    seeds = [seed, *np.random.default_rng(seed).integers(0, 2**31 - 1, restarts - 1).tolist()]
    best: np.ndarray | None = None
    best_q = -np.inf
    for attempt in seeds:
        communities = nx.community.louvain_communities(graph, weight="weight", seed=attempt)
        labels = np.zeros(len(active), dtype=np.int64)
        for label, members in enumerate(communities):
            for node in members:
                if node in position:
                    labels[position[node]] = label
        labels = _move_vertices(scores, labels)
        q = _quality(scores, total, labels)
        logger.debug("louvain restart seed %d: Q = %.6f", attempt, q)
        if q > best_q + 1e-12:
            best, best_q = labels, q
    assert best is not None
    return best


def _move_vertices(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Move single vertices to the community with the largest modularity gain until none helps."""
    labels = labels.copy()
    moved = True
    while moved:
        moved = False
        for i in range(len(labels)):
            own = int(labels[i])
            sums = np.bincount(labels, weights=scores[i], minlength=int(labels.max()) + 2)
            sums[own] -= scores[i, i]
            gains = sums - sums[own]
            target = int(np.argmax(gains))
            if gains[target] > 1e-12:
                labels[i] = target
                moved = True
    return labels
