from __future__ import annotations

import logging
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy import optimize

from .analysis import SimilarityMatrix, fitted_stress, stress
from .config import LayoutConfig

logger = logging.getLogger(__name__)

RING_MARGIN = 1.1
SPRING_TOLERANCE = 1e-14


@dataclass(slots=True)
class LayoutResult:
    classes: tuple[str, ...]
    positions: np.ndarray
    stress: float
    isolated: tuple[bool, ...]
    scale: float = 1.0
    iterations: int = 0
    history: list[float] = field(default_factory=list)

    def as_mapping(self) -> dict[str, tuple[float, float]]:
        return {
            symbol: (float(x), float(y))
            for symbol, (x, y) in zip(self.classes, self.positions, strict=True)
        }


@dataclass(slots=True)
class SmacofRun:
    points: np.ndarray
    stress: float
    iterations: int
    history: list[float]


def smacof(distances: np.ndarray, config: LayoutConfig, seed: int | None = None) -> SmacofRun:
    """Minimize Kruskal stress by iterative majorization (Guttman transform)."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    points = rng.uniform(-0.5, 0.5, size=(len(distances), 2))
    history = [stress(points, distances)]
    iterations = 0
    for iterations in range(1, config.max_iters + 1):
        points = _guttman(points, distances)
        current = stress(points, distances)
        previous = history[-1]
        history.append(current)
        if current < 1e-12 or previous - current <= config.tolerance * previous:
            break
    return SmacofRun(points=points, stress=history[-1], iterations=iterations, history=history)


def layout_mds(sim: SimilarityMatrix, config: LayoutConfig) -> LayoutResult:
    mask = sim.connected
    active = np.flatnonzero(mask)
    positions = np.zeros((len(sim.classes), 2), dtype=float)
    distances = sim.distances()[np.ix_(active, active)]

    run = SmacofRun(points=np.zeros((len(active), 2)), stress=0.0, iterations=0, history=[0.0])
    scale = 1.0
    if len(active) < 2:
        logger.warning("level %d: fewer than two connected classes to lay out", sim.level)
    elif not distances.any():
        logger.warning("level %d: all distances are zero; classes placed at the origin", sim.level)
    else:
        runs = [
            smacof(distances, config, seed=config.seed + attempt)
            for attempt in range(config.restarts)
        ]
        run = min(runs, key=lambda candidate: fitted_stress(candidate.points, distances))
        run.points, scale = _normalize(run.points)

    positions[active] = run.points
    _place_on_ring(positions, mask)
    final = fitted_stress(run.points, distances)
    logger.info("level %d: MDS stress %.4f after %d iterations", sim.level, final, run.iterations)
    return LayoutResult(
        classes=sim.classes,
        positions=positions,
        stress=final,
        isolated=sim.isolated,
        scale=scale,
        iterations=run.iterations,
        history=run.history,
    )


def layout_spring(graph: nx.Graph, config: LayoutConfig) -> dict[str, tuple[float, float]]:
    """Kamada-Kawai layout of the largest component; the rest on a surrounding ring.

    The networkx solution is refined to a tight tolerance on the same energy.
    """
    nodes = sorted(graph.nodes)
    positions = np.zeros((len(nodes), 2), dtype=float)
    mask = np.zeros(len(nodes), dtype=bool)
    components = sorted(
        (sorted(component) for component in nx.connected_components(graph)),
        key=lambda members: (-len(members), members[0]),
    )
    if components and len(components[0]) > 1:
        largest = components[0]
        rng = np.random.default_rng(config.seed)
        start = {node: tuple(rng.uniform(-0.5, 0.5, size=2)) for node in largest}
        component = graph.subgraph(largest)
        solved = nx.kamada_kawai_layout(component, pos=start, weight=None)
        points = np.array([solved[node] for node in largest], dtype=float)
        points = _refine_kamada_kawai(points, _hops(component, largest), config.max_iters)
        points, _ = _normalize(points)
        position = {node: i for i, node in enumerate(nodes)}
        for node, point in zip(largest, points, strict=True):
            positions[position[node]] = point
            mask[position[node]] = True
    else:
        logger.warning("thresholded graph has no edges; all classes placed on the ring")
    _place_on_ring(positions, mask)
    return {node: (float(x), float(y)) for node, (x, y) in zip(nodes, positions, strict=True)}


def _guttman(points: np.ndarray, distances: np.ndarray) -> np.ndarray:
    size = len(points)
    delta = points[:, None, :] - points[None, :, :]
    embedded = np.sqrt((delta**2).sum(axis=-1))
    ratio = np.divide(distances, embedded, out=np.zeros_like(distances), where=embedded > 0)
    b = -ratio
    np.fill_diagonal(b, 0.0)
    np.fill_diagonal(b, -b.sum(axis=1))
    return (b @ points) / size


def _normalize(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Center at the origin and scale to unit RMS radius; returns the divisor."""
    centered = points - points.mean(axis=0)
    radius = float(np.sqrt((centered**2).sum(axis=1).mean()))
    if radius == 0.0:
        return centered, 1.0
    return centered / radius, radius


def _place_on_ring(positions: np.ndarray, placed: np.ndarray) -> None:
    loose = np.flatnonzero(~placed)
    if not len(loose):
        return
    radius = 1.0
    if placed.any():
        radius = max(radius, float(np.sqrt((positions[placed] ** 2).sum(axis=1)).max()))
    radius *= RING_MARGIN
    angles = 2.0 * np.pi * np.arange(len(loose)) / len(loose)
    positions[loose, 0] = radius * np.cos(angles)
    positions[loose, 1] = radius * np.sin(angles)
    logger.debug("placed %d classes on a ring of radius %.3f", len(loose), radius)


def _hops(graph: nx.Graph, nodes: list) -> np.ndarray:
    lengths = dict(nx.shortest_path_length(graph))
    return np.array([[lengths[a][b] for b in nodes] for a in nodes], dtype=float)


def _refine_kamada_kawai(points: np.ndarray, hops: np.ndarray, max_iters: int) -> np.ndarray:
    delta = points[:, None, :] - points[None, :, :]
    lengths = np.sqrt((delta**2).sum(axis=-1))
    squared = float((lengths**2).sum())
    if squared > 0.0:
        points = points * float((lengths * hops).sum()) / squared
    result = optimize.minimize(
        _kamada_kawai_energy,
        points.ravel(),
        args=(hops,),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iters, "ftol": 0.0, "gtol": SPRING_TOLERANCE},
    )
    logger.debug("kamada-kawai refinement: energy %.3g after %d steps", result.fun, result.nit)
    return result.x.reshape(-1, 2)


def _kamada_kawai_energy(flat: np.ndarray, hops: np.ndarray) -> tuple[float, np.ndarray]:
    """Sum over pairs of (length / hops - 1)^2, with its gradient."""
    points = flat.reshape(-1, 2)
    delta = points[:, None, :] - points[None, :, :]
    lengths = np.sqrt((delta**2).sum(axis=-1))
    inverse = np.divide(1.0, hops, out=np.zeros_like(hops), where=hops > 0)
    offset = lengths * inverse - 1.0
    np.fill_diagonal(offset, 0.0)
    unit = np.divide(
        delta, lengths[..., None], out=np.zeros_like(delta), where=lengths[..., None] > 0
    )
    gradient = 2.0 * np.einsum("ij,ij,ijk->ik", offset, inverse, unit)
    return 0.5 * float((offset**2).sum()), gradient.ravel()
