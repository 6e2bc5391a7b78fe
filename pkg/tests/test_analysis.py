from __future__ import annotations

import math
import random

import numpy as np
import pytest

from ipc_maps.analysis import (
    SimilarityMatrix,
    correlate_overlays,
    cosine_citing,
    format_cosine,
    format_diversity,
    fractional_counts,
    kruskal_stress,
    parse_cosine,
    parse_diversity,
    quadratic_entropy,
    rao_stirling,
    stress,
)
from ipc_maps.errors import DataError, LevelMismatch
from ipc_maps.models import ClassCitationMatrix, Overlay

from .conftest import make_record


def _matrix(dense, level=3):
    classes = tuple(f"A{index:02d}" for index in range(len(dense)))
    counts = {
        (i, j): int(value)
        for i, row in enumerate(dense)
        for j, value in enumerate(row)
        if value
    }
    return ClassCitationMatrix(level=level, classes=classes, counts=counts)


def _naive_cosine(dense):
    dense = np.asarray(dense, dtype=float)
    size = len(dense)
    norms = [math.sqrt(row @ row) for row in dense]
    out = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            norm = norms[i] * norms[j]
            if norm:
                out[i, j] = (dense[i] @ dense[j]) / norm
    return out


def _similarity(cos, classes=None, level=3):
    cos = np.asarray(cos, dtype=float)
    classes = classes or tuple(f"A{index:02d}" for index in range(len(cos)))
    isolated = tuple(bool(cos[i, i] == 0) for i in range(len(cos)))
    return SimilarityMatrix(level=level, classes=tuple(classes), cos=cos, isolated=isolated)


def test_cosine_of_orthogonal_and_parallel_rows():
    sim = cosine_citing(_matrix([[1, 0, 0], [0, 2, 0], [3, 0, 0]]))
    assert sim.value("A00", "A02") == pytest.approx(1.0)
    assert sim.value("A00", "A01") == 0.0
    assert not any(sim.isolated)
    assert np.diag(sim.cos).tolist() == [1.0, 1.0, 1.0]


def test_zero_rows_are_isolated():
    sim = cosine_citing(_matrix([[1, 1, 0], [0, 0, 0], [0, 1, 1]]))
    assert sim.isolated == (False, True, False)
    assert sim.cos[1].tolist() == [0.0, 0.0, 0.0]
    assert sim.cos[:, 1].tolist() == [0.0, 0.0, 0.0]
    assert sim.value("A00", "A02") == pytest.approx(0.5)
    assert sim.connected.tolist() == [True, False, True]


def test_cosine_properties_on_random_matrices():
    rng = np.random.default_rng(7)
    for trial in range(100):
        size = int(rng.integers(2, 60)) if trial % 50 else 630
        density = rng.uniform(0.01, 0.3)
        dense = rng.integers(1, 50, size=(size, size)) * (rng.random((size, size)) < density)
        sim = cosine_citing(_matrix(dense))
        assert np.array_equal(sim.cos, sim.cos.T)
        assert sim.cos.min() >= 0.0
        assert sim.cos.max() <= 1.0
        expected = _naive_cosine(dense)
        np.fill_diagonal(expected, [0.0 if flag else 1.0 for flag in sim.isolated])
        assert np.abs(sim.cos - expected).max() <= 1e-12

        scaled = dense * rng.integers(1, 9, size=(size, 1))
        assert np.abs(cosine_citing(_matrix(scaled)).cos - sim.cos).max() <= 1e-12


def test_distances_have_zero_diagonal():
    sim = _similarity([[1.0, 0.25], [0.25, 1.0]])
    assert sim.distances().tolist() == [[0.0, 0.75], [0.75, 0.0]]


def test_fractional_counts_split_each_patent(scheme):
    records = [make_record("1", ["A01B", "A01C", "B23K"])]
    level3 = fractional_counts(records, scheme, 3)
    assert level3.weights == pytest.approx({"A01": 2 / 3, "B23": 1 / 3})
    assert level3.patent_counts == {"A01": 1, "B23": 1}
    assert level3.class_attribution_count == 3
    level4 = fractional_counts(records, scheme, 4)
    assert level4.weights == pytest.approx({"A01B": 1 / 3, "A01C": 1 / 3, "B23K": 1 / 3})


def test_fractional_counts_drop_invalid_attributions(scheme):
    records = [
        make_record("1", ["A01B", "A99Z"]),
        make_record("2", ["B23"]),
        make_record("3", ["A99Z"]),
    ]
    level4 = fractional_counts(records, scheme, 4)
    assert level4.weights == {"A01B": 1.0}
    assert level4.patent_count == 1
    assert level4.skipped == 2
    level3 = fractional_counts(records, scheme, 3)
    assert level3.weights == pytest.approx({"A01": 1.0, "B23": 1.0})
    assert level3.skipped == 1


def test_each_patent_contributes_one_unit(scheme):
    rng = random.Random(11)
    pool = scheme.usable(4)
    records = [
        make_record(str(number), [rng.choice(pool) for _ in range(rng.randint(1, 6))])
        for number in range(100_000)
    ]
    for level in (3, 4):
        overlay = fractional_counts(records, scheme, level)
        assert sum(overlay.weights.values()) == pytest.approx(100_000, abs=1e-9 * 100_000)


def _overlay(weights, level=3):
    return Overlay(
        level=level, weights=dict(weights), patent_count=1, class_attribution_count=len(weights)
    )


def test_rao_stirling_worked_case():
    sim = _similarity([[1.0, 0.6], [0.6, 1.0]], classes=("A01", "B23"))
    overlay = _overlay({"A01": 0.5, "B23": 0.5})
    assert rao_stirling(overlay, sim) == pytest.approx(0.2, abs=1e-12)


def test_rao_stirling_single_class_is_zero():
    sim = _similarity([[1.0, 0.1], [0.1, 1.0]], classes=("A01", "B23"))
    assert rao_stirling(_overlay({"B23": 4.0}), sim) == 0.0


def test_rao_stirling_without_weight_on_the_map_is_zero():
    sim = _similarity([[1.0, 0.1], [0.1, 1.0]], classes=("A01", "B23"))
    assert rao_stirling(_overlay({"H04": 1.0}), sim) == 0.0
    assert rao_stirling(_overlay({}), sim) == 0.0


def test_rao_stirling_level_mismatch():
    sim = _similarity([[1.0]], classes=("A01",))
    with pytest.raises(LevelMismatch):
        rao_stirling(_overlay({"A01B": 1.0}, level=4), sim)


def test_rao_stirling_matches_double_loop_and_ignores_scale():
    rng = np.random.default_rng(5)
    for _ in range(100):
        size = int(rng.integers(2, 40))
        raw = rng.random((size, size))
        cos = (raw + raw.T) / 2
        np.fill_diagonal(cos, 1.0)
        sim = _similarity(cos)
        weights = {
            symbol: float(value)
            for symbol, value in zip(sim.classes, rng.random(size) * (rng.random(size) < 0.6))
            if value
        }
        if not weights:
            continue
        total = sum(weights.values())
        distances = sim.distances()
        position = sim.index()
        expected = sum(
            weights[a] / total * weights[b] / total * distances[position[a], position[b]]
            for a in weights
            for b in weights
        )
        value = rao_stirling(_overlay(weights), sim)
        assert value == pytest.approx(expected, abs=1e-12)
        scaled = _overlay({symbol: weight * 37.5 for symbol, weight in weights.items()})
        assert rao_stirling(scaled, sim) == pytest.approx(value, abs=1e-12)


def test_quadratic_entropy_counts_ordered_pairs():
    distances = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert quadratic_entropy(np.array([0.5, 0.5]), distances) == pytest.approx(0.5)


def test_stress_of_an_exact_embedding_is_zero():
    points = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]])
    distances = np.array([[0.0, 3.0, 4.0], [3.0, 0.0, 5.0], [4.0, 5.0, 0.0]])
    assert stress(points, distances) == pytest.approx(0.0, abs=1e-15)


def test_stress_matches_the_formula():
    rng = np.random.default_rng(3)
    for _ in range(20):
        size = int(rng.integers(2, 12))
        points = rng.normal(size=(size, 2))
        raw = rng.random((size, size))
        distances = raw + raw.T
        np.fill_diagonal(distances, 0.0)
        numerator = denominator = 0.0
        for i in range(size):
            for j in range(size):
                if i != j:
                    embedded = math.dist(points[i], points[j])
                    numerator += (embedded - distances[i, j]) ** 2
                    denominator += distances[i, j] ** 2
        assert stress(points, distances) == pytest.approx(
            math.sqrt(numerator / denominator), abs=1e-12
        )


def test_stress_degenerate_inputs():
    assert stress(np.zeros((1, 2)), np.zeros((1, 1))) == 0.0
    assert stress(np.ones((3, 2)), np.zeros((3, 3))) == 0.0


def test_kruskal_stress_uses_named_positions():
    sim = _similarity([[1.0, 0.0], [0.0, 1.0]], classes=("A01", "B23"))
    assert kruskal_stress({"A01": (0.0, 0.0), "B23": (1.0, 0.0)}, sim) == pytest.approx(0.0)
    assert kruskal_stress({"A01": (0.0, 0.0), "B23": (2.0, 0.0)}, sim) == pytest.approx(0.0)


def test_kruskal_stress_fits_the_scale_and_skips_isolated_classes():
    sim = _similarity(np.diag([1.0, 1.0, 1.0, 0.0]), classes=("A01", "B23", "C07", "H04"))
    line = {"A01": (0.0, 0.0), "B23": (1.0, 0.0), "C07": (2.0, 0.0), "H04": (50.0, 9.0)}
    assert kruskal_stress(line, sim) == pytest.approx(1.0 / 3.0, abs=1e-12)
    wider = {symbol: (5.0 * x, 5.0 * y) for symbol, (x, y) in line.items()}
    assert kruskal_stress(wider, sim) == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert kruskal_stress(wider, sim, fit_scale=False) == pytest.approx(
        stress(np.array([(0.0, 0.0), (5.0, 0.0), (10.0, 0.0)]), 1.0 - np.eye(3))
    )


def test_correlate_overlays(scheme):
    classes = ("A01", "B23", "C07", "H04")
    a = _overlay({"A01": 1.0, "B23": 2.0, "C07": 3.0})
    b = _overlay({"A01": 2.0, "B23": 4.0, "C07": 6.0})
    r, p = correlate_overlays(a, b, classes)
    assert r == pytest.approx(1.0)
    assert p == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(DataError):
        correlate_overlays(a, b, classes[:2])
    with pytest.raises(LevelMismatch):
        correlate_overlays(a, _overlay({}, level=4), classes)


def test_correlation_of_a_constant_overlay_is_nan():
    classes = ("A01", "B23", "C07")
    r, _ = correlate_overlays(_overlay({}), _overlay({"A01": 1.0}), classes)
    assert math.isnan(r)


def test_cosine_text_round_trip():
    sim = cosine_citing(_matrix([[4, 1, 0, 0], [1, 3, 0, 0], [0, 0, 0, 0], [0, 0, 2, 5]]))
    text = format_cosine(sim)
    assert text.splitlines()[0] == "#level=3 classes=4 pairs=nonzero"
    assert len(text.splitlines()) - 1 == int(np.count_nonzero(np.triu(sim.cos)))
    again = parse_cosine(text, sim.classes, level=3)
    assert again.isolated == sim.isolated
    assert np.abs(again.cos - sim.cos).max() <= 5e-7
    with pytest.raises(LevelMismatch):
        parse_cosine(text, sim.classes, level=4)
    with pytest.raises(DataError):
        parse_cosine(text, sim.classes[:3])


def test_diversity_file():
    text = format_diversity({4: 0.8129, 3: 0.869})
    assert text == "level3\t0.869\nlevel4\t0.813\n"
    assert parse_diversity(text) == {3: 0.869, 4: 0.813}
