"""Semantic proximity prediction over region pairs, distilled from a graph.

One four-layer MLP per knowledge source scores every ordered region pair
from pooled channel descriptors; scores are symmetrized, thresholded into
neighbor sets, and pulled toward the external graph's entries by a
summed squared-error loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .knowledge import ProximityGraph
from .regions import RegionSet
from .tensor import Tensor

HIDDEN_WIDTHS = (128, 64, 32)


class SpnParams:
    """Pair-scoring MLP: 2C -> 128 -> 64 -> 32 -> 1."""

    def __init__(self, rng: np.random.Generator, channels: int,
                 hidden=HIDDEN_WIDTHS):
        widths = [2 * channels, *hidden, 1]
        self.weights = []
        self.biases = []
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            self.weights.append(T.he_normal((n_in, n_out), fan_in=n_in, rng=rng))
            self.biases.append(T.zeros((n_out,), requires_grad=True))
        self.channels = channels

    def named_parameters(self, prefix: str = "spn") -> list[tuple[str, Tensor]]:
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"{prefix}.layer{i}.weight", w))
            out.append((f"{prefix}.layer{i}.bias", b))
        return out

    def raw_scores(self, pairs: Tensor) -> Tensor:
        """Run the MLP on [n, 2C] descriptor pairs; returns [n, 1] logits."""
        x = pairs
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = T.affine(x, w, b)
            if i != last:
                x = T.leaky_relu(x, slope=0.01)
        return x


@dataclass
class PredictedGraph:
    """Symmetric pair scores with unit diagonal and thresholded neighbor sets."""

    scores: Tensor
    theta: float
    neighbors: list[np.ndarray] = field(init=False)

    def __post_init__(self):
        p = self.scores.shape[0]
        above = self.scores.data > self.theta
        np.fill_diagonal(above, True)  # i is always its own neighbor
        self.neighbors = [np.flatnonzero(above[i]) for i in range(p)]
        self._mask = above

    @property
    def p(self) -> int:
        return self.scores.shape[0]

    def neighbor_mask(self) -> np.ndarray:
        """Boolean [p, p]; row i marks N_i (diagonal always True)."""
        return self._mask


def region_descriptors(regions: RegionSet) -> Tensor:
    """Channel means per region: [p, C, d, d] -> [p, C]."""
    return T.global_avg_pool(regions.features)


def spn_edge(params: SpnParams, h_i: Tensor, h_j: Tensor) -> Tensor:
    """Symmetrized pair score for two region blocks [C, d, d]."""
    d_i = T.reshape(T.global_avg_pool(h_i), (1, -1))
    d_j = T.reshape(T.global_avg_pool(h_j), (1, -1))
    s_ij = T.sigmoid(params.raw_scores(T.concat([d_i, d_j], axis=1)))
    s_ji = T.sigmoid(params.raw_scores(T.concat([d_j, d_i], axis=1)))
    return T.reshape(0.5 * (s_ij + s_ji), ())


def predict_graph(params: SpnParams, regions: RegionSet, theta: float) -> PredictedGraph:
    """Score all pairs, symmetrize, force the diagonal to 1, threshold."""
    p = len(regions)
    if p < 1:
        raise ValueError("predict_graph needs at least one region")
    if p == 1:
        return PredictedGraph(scores=T.ones((1, 1)), theta=theta)
    desc = region_descriptors(regions)
    # all p^2 ordered pairs in one MLP pass
    left = T.take_rows(desc, np.repeat(np.arange(p), p))
    right = T.take_rows(desc, np.tile(np.arange(p), p))
    raw = T.sigmoid(params.raw_scores(T.concat([left, right], axis=1)))
    mat = T.reshape(raw, (p, p))
    sym = 0.5 * (mat + T.transpose2d(mat))
    eye = np.eye(p)
    scores = sym * Tensor(1.0 - eye) + Tensor(eye)
    return PredictedGraph(scores=scores, theta=theta)


def prox_loss(pred: PredictedGraph, external: ProximityGraph,
              labels: list[str]) -> Tensor:
    """Sum over unordered pairs of squared error against the external graph.

    Each region pair's target is the external entry for the regions'
    category labels; same-category pairs target the unit diagonal.
    """
    p = pred.p
    if len(labels) != p:
        raise ValueError(f"{p} regions but {len(labels)} labels")
    idx = [external.index_of(lab) for lab in labels]
    targets = external.adjacency[np.ix_(idx, idx)]
    if p == 1:
        return T.zeros(())
    upper = np.triu(np.ones((p, p)), k=1)
    diff = pred.scores - Tensor(targets)
    return T.total(diff * diff * Tensor(upper))
