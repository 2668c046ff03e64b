import numpy as np
import pytest
from hypothesis import given, strategies as st

from bndp.metrics import (
    DIRECTED,
    UNDIRECTED,
    MetricsError,
    edge_confusion,
    fdr,
    hamming,
)


def masks_from_edges(p, edges):
    out = [0] * p
    for a, b in edges:
        out[b] |= 1 << a
    return out


class TestFdr:
    def test_perfect_prediction(self):
        g = masks_from_edges(4, [(0, 1), (1, 2)])
        assert fdr(g, g, DIRECTED) == 0.0
        assert fdr(g, g, UNDIRECTED) == 0.0

    def test_half_false(self):
        truth = masks_from_edges(4, [(0, 1)])
        pred = masks_from_edges(4, [(0, 1), (2, 3)])
        assert fdr(pred, truth, DIRECTED) == 0.5

    def test_zero_predictions_defined_as_zero(self):
        truth = masks_from_edges(3, [(0, 1)])
        pred = masks_from_edges(3, [])
        assert fdr(pred, truth, DIRECTED) == 0.0

    def test_reversed_edge_directed_vs_undirected(self):
        truth = masks_from_edges(2, [(0, 1)])
        pred = masks_from_edges(2, [(1, 0)])
        assert fdr(pred, truth, DIRECTED) == 1.0
        assert fdr(pred, truth, UNDIRECTED) == 0.0

    def test_node_universe_mismatch(self):
        with pytest.raises(MetricsError):
            fdr([0, 0], [0, 0, 0], DIRECTED)


class TestHamming:
    def test_identical(self):
        g = masks_from_edges(5, [(0, 1), (2, 3)])
        assert hamming(g, g, DIRECTED) == 0

    def test_empty_prediction_counts_truth(self):
        truth = masks_from_edges(8, [(i, i + 1) for i in range(7)])
        assert hamming([0] * 8, truth, DIRECTED) == 7
        assert hamming([0] * 8, truth, UNDIRECTED) == 7

    def test_triangle_reversal(self):
        tri = masks_from_edges(3, [(0, 1), (1, 2), (2, 0)])
        rev = masks_from_edges(3, [(1, 0), (2, 1), (0, 2)])
        assert hamming(tri, rev, DIRECTED) == 6
        assert hamming(tri, rev, UNDIRECTED) == 0

    def test_symmetry_undirected(self):
        a = masks_from_edges(4, [(0, 1), (1, 2)])
        b = masks_from_edges(4, [(1, 0), (2, 3)])
        assert hamming(a, b, UNDIRECTED) == hamming(b, a, UNDIRECTED)


random_graph = st.builds(
    lambda seed: _random_masks(seed),
    st.integers(min_value=0, max_value=10_000),
)


def _random_masks(seed):
    # random DAGs: parents drawn below a random relabeling
    rng = np.random.default_rng(seed)
    p = 5
    order = rng.permutation(p)
    masks = [0] * p
    for i in range(p):
        for j in range(i):
            if rng.random() < 0.35:
                masks[order[i]] |= 1 << order[j]
    return masks


class TestProperties:
    @given(random_graph, random_graph, random_graph)
    def test_triangle_inequality(self, a, b, c):
        for mode in (DIRECTED, UNDIRECTED):
            assert hamming(a, c, mode) <= hamming(a, b, mode) + hamming(b, c, mode)

    @given(random_graph)
    def test_self_distance_zero(self, g):
        assert hamming(g, g, DIRECTED) == 0

    @given(random_graph, random_graph)
    def test_undirected_tp_at_least_directed(self, a, b):
        cd = edge_confusion(a, b, DIRECTED)
        cu = edge_confusion(a, b, UNDIRECTED)
        assert cu.tp >= cd.tp

    @given(random_graph, random_graph)
    def test_confusion_counts_consistent(self, a, b):
        for mode in (DIRECTED, UNDIRECTED):
            c = edge_confusion(a, b, mode)
            assert c.tp >= 0 and c.fp >= 0 and c.fn >= 0
            assert hamming(a, b, mode) == c.fp + c.fn
            if c.fp + c.tp > 0:
                assert abs(fdr(a, b, mode) - c.fp / (c.fp + c.tp)) < 1e-12
