"""Spatial graph attention over region feature blocks.

Attention scores come from globally pooled 3x3-convolved descriptors; the
propagation step itself is a convex combination of convolved neighbor
blocks, so spatial structure survives.  Heads split the channel budget
(C/K each) and concatenate back to C.  A shared 1x1 convolution fuses
the per-source outputs.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .regions import RegionSet
from .spn import PredictedGraph
from .tensor import Tensor

HEADS = 8
ATT_SLOPE = 0.2  # attention nonlinearity
OUT_SLOPE = 0.01  # feature nonlinearity
_MASK = -1e30  # additive mask; exp underflows to exactly 0 past softmax


class SgatParams:
    """Per-head 3x3 filters (stacked along the output channel axis) and
    attention vectors, for one knowledge source."""

    def __init__(self, rng: np.random.Generator, channels: int, heads: int = HEADS):
        if channels % heads:
            raise ValueError(f"head count {heads} must divide {channels} channels")
        self.channels = channels
        self.heads = heads
        self.head_channels = channels // heads
        # all heads convolved in one pass: rows k*C' .. (k+1)*C' belong to head k
        self.kernels = T.he_normal((channels, channels, 3, 3),
                                   fan_in=channels * 9, rng=rng)
        self.att = T.randn((heads, 2 * self.head_channels), rng, scale=0.1,
                           requires_grad=True)

    def named_parameters(self, prefix: str = "sgat") -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.kernels", self.kernels), (f"{prefix}.att", self.att)]


def attention_coeff(params: SgatParams, head: int, h_i: Tensor, h_j: Tensor) -> Tensor:
    """Unnormalized coefficient c_ij for one head and one ordered pair."""
    ck = params.head_channels
    w_k = T.narrow(params.kernels, 0, head * ck, ck)
    u = T.global_avg_pool(T.conv2d(h_i, w_k))
    v = T.global_avg_pool(T.conv2d(h_j, w_k))
    a_k = T.reshape(T.narrow(params.att, 0, head, 1), (2 * ck, 1))
    uv = T.reshape(T.concat([u, v], axis=0), (1, 2 * ck))
    return T.reshape(T.leaky_relu(uv @ a_k, slope=ATT_SLOPE), ())


def sgat_forward(params: SgatParams, regions: RegionSet,
                 graph: PredictedGraph) -> Tensor:
    """Propagate [p, C, d, d] blocks along the graph; returns updated blocks.

    Per head: alpha = softmax over each row's neighbor set of the pooled
    attention logits; output rows are alpha-weighted sums of convolved
    neighbor blocks.  Heads concatenate along channels, then a leaky
    nonlinearity applies elementwise.
    """
    p = len(regions)
    if graph.p != p:
        raise ValueError(f"graph over {graph.p} regions, features over {p}")
    ck = params.head_channels
    d1, d2 = regions.features.shape[-2:]

    convolved = T.conv2d(regions.features, params.kernels)  # [p, C, d, d]
    pooled = T.global_avg_pool(convolved)  # [p, C]

    mask = np.where(graph.neighbor_mask(), 0.0, _MASK)
    ones_row = Tensor(np.ones((1, p)))
    ones_col = Tensor(np.ones((p, 1)))

    head_outputs = []
    for k in range(params.heads):
        u_k = T.narrow(pooled, 1, k * ck, ck)  # [p, C']
        a_k = T.narrow(params.att, 0, k, 1)  # [1, 2C']
        a_src = T.transpose2d(T.narrow(a_k, 1, 0, ck))  # [C', 1]
        a_dst = T.transpose2d(T.narrow(a_k, 1, ck, ck))
        s = u_k @ a_src  # [p, 1] source-side logit parts
        t = u_k @ a_dst
        logits = T.leaky_relu(s @ ones_row + ones_col @ T.transpose2d(t),
                              slope=ATT_SLOPE)
        alpha = T.softmax(logits + Tensor(mask), axis=1)  # rows sum to 1
        flat = T.reshape(T.narrow(convolved, 1, k * ck, ck), (p, ck * d1 * d2))
        head_outputs.append(T.reshape(alpha @ flat, (p, ck, d1, d2)))

    return T.leaky_relu(T.concat(head_outputs, axis=1), slope=OUT_SLOPE)


def attention_matrix(params: SgatParams, regions: RegionSet,
                     graph: PredictedGraph, head: int) -> np.ndarray:
    """Normalized attention rows for one head (diagnostics and tests)."""
    p = len(regions)
    ck = params.head_channels
    with T.no_grad():
        pooled = T.global_avg_pool(T.conv2d(regions.features, params.kernels))
        u_k = T.narrow(pooled, 1, head * ck, ck)
        a_k = T.narrow(params.att, 0, head, 1)
        s = u_k @ T.transpose2d(T.narrow(a_k, 1, 0, ck))
        t = u_k @ T.transpose2d(T.narrow(a_k, 1, ck, ck))
        logits = T.leaky_relu(s @ Tensor(np.ones((1, p)))
                              + Tensor(np.ones((p, 1))) @ T.transpose2d(t),
                              slope=ATT_SLOPE)
        mask = np.where(graph.neighbor_mask(), 0.0, _MASK)
        alpha = T.softmax(logits + Tensor(mask), axis=1)
    return alpha.data


class FuseParams:
    """Shared 1x1 convolution collapsing N stacked sources back to C channels."""

    def __init__(self, rng: np.random.Generator, channels: int, n_sources: int):
        self.channels = channels
        self.n_sources = n_sources
        self.kernel = T.he_normal((channels, n_sources * channels, 1, 1),
                                  fan_in=n_sources * channels, rng=rng)
        self.bias = T.zeros((channels,), requires_grad=True)

    @classmethod
    def identity(cls, channels: int, n_sources: int = 1) -> "FuseParams":
        """Pass-through init: output equals the first source's blocks."""
        params = cls.__new__(cls)
        params.channels = channels
        params.n_sources = n_sources
        kernel = np.zeros((channels, n_sources * channels, 1, 1))
        kernel[np.arange(channels), np.arange(channels), 0, 0] = 1.0
        params.kernel = Tensor(kernel, requires_grad=True)
        params.bias = T.zeros((channels,), requires_grad=True)
        return params

    def named_parameters(self, prefix: str = "fuse") -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.kernel", self.kernel), (f"{prefix}.bias", self.bias)]


def fuse_updates(params: FuseParams, updated: list[Tensor]) -> Tensor:
    """Channel-concatenate per-source blocks and project back to C channels."""
    if len(updated) != params.n_sources:
        raise ValueError(f"fuse expects {params.n_sources} sources, got {len(updated)}")
    x = updated[0] if len(updated) == 1 else T.concat(updated, axis=1)
    return T.conv2d(x, params.kernel, params.bias)
