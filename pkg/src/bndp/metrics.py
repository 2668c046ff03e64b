"""Structure-recovery metrics: FDR and Hamming distance, directed and
undirected (skeleton) variants."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import skeleton

DIRECTED = "directed"
UNDIRECTED = "undirected"


class MetricsError(ValueError):
    """Predicted and true graphs disagree on the node universe."""


@dataclass(frozen=True)
class EdgeConfusion:
    tp: int
    fp: int
    fn: int
    mode: str


def _parent_masks(graph) -> Sequence[int]:
    masks = getattr(graph, "parents", graph)
    return [int(m) for m in masks]


def _edge_sets(predicted, truth, mode: str) -> tuple[set, set]:
    pred = _parent_masks(predicted)
    true = _parent_masks(truth)
    if len(pred) != len(true):
        raise MetricsError(
            f"graphs live on different node universes ({len(pred)} vs {len(true)})"
        )
    if mode == DIRECTED:
        def edges(masks):
            out = set()
            for child, m in enumerate(masks):
                mm = m
                while mm:
                    lsb = mm & -mm
                    out.add((lsb.bit_length() - 1, child))
                    mm ^= lsb
            return out

        return edges(pred), edges(true)
    if mode == UNDIRECTED:
        return skeleton(pred), skeleton(true)
    raise MetricsError(f"unknown mode {mode!r}")


def edge_confusion(predicted, truth, mode: str = DIRECTED) -> EdgeConfusion:
    """Edge-level confusion counts.

    In directed mode a reversed edge counts as one false positive and
    one false negative; undirected mode compares skeletons.
    """
    p_edges, t_edges = _edge_sets(predicted, truth, mode)
    tp = len(p_edges & t_edges)
    return EdgeConfusion(tp=tp, fp=len(p_edges) - tp, fn=len(t_edges) - tp, mode=mode)


def fdr(predicted, truth, mode: str = DIRECTED) -> float:
    """False discovery rate FP / (FP + TP); zero when nothing is predicted."""
    c = edge_confusion(predicted, truth, mode)
    if c.fp + c.tp == 0:
        return 0.0
    return c.fp / (c.fp + c.tp)


def hamming(predicted, truth, mode: str = DIRECTED) -> int:
    """Hamming distance FP + FN between edge sets."""
    c = edge_confusion(predicted, truth, mode)
    return c.fp + c.fn
