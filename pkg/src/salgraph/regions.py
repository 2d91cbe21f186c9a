"""Image encoder, region feature extraction, and map projection.

A small trainable convolutional encoder stands in for a pretrained
backbone: three {3x3 conv, leaky-relu, 2x2 average downsample} blocks
taking 3 channels to C=32 at 1/8 resolution.  Regions arrive as ground
truth or user-supplied boxes; their pooled feature blocks are the graph
nodes, and updated blocks are projected back into a spatial map by
elementwise max.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DataFormatError
from .tensor import Tensor

C_FEATURES = 32
DOWNSAMPLE = 8
ROI_SIZE = 7
MIN_IMAGE_SIDE = 32


@dataclass(frozen=True)
class Box:
    """Half-open pixel rectangle [x0, x1) x [y0, y1) with an optional label."""

    x0: int
    y0: int
    x1: int
    y1: int
    label: str | None = None

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise DataFormatError(f"degenerate box {self.x0},{self.y0},{self.x1},{self.y1}")
        if self.x0 < 0 or self.y0 < 0:
            raise DataFormatError("box extends past the top-left image corner")

    def check_bounds(self, width: int, height: int) -> None:
        if self.x1 > width or self.y1 > height:
            raise DataFormatError(f"box ({self.x0},{self.y0},{self.x1},{self.y1}) "
                                  f"exceeds {width}x{height} image")


def parse_boxes(text: str) -> list[Box]:
    """Parse `x0,y0,x1,y1[,label]` lines."""
    boxes = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (4, 5):
            raise DataFormatError(f"box line {lineno}: expected x0,y0,x1,y1[,label]")
        try:
            coords = [int(p) for p in parts[:4]]
        except ValueError:
            raise DataFormatError(f"box line {lineno}: non-integer coordinate") from None
        label = parts[4] if len(parts) == 5 else None
        boxes.append(Box(coords[0], coords[1], coords[2], coords[3], label))
    return boxes


def format_boxes(boxes: list[Box]) -> str:
    lines = []
    for b in boxes:
        tail = f",{b.label}" if b.label is not None else ""
        lines.append(f"{b.x0},{b.y0},{b.x1},{b.y1}{tail}")
    return "\n".join(lines) + "\n"


@dataclass
class FeatureMap:
    """Encoded map [C, H', W'] (or batched [B, C, H', W']) at 1/s resolution."""

    data: Tensor
    scale: int
    image_h: int
    image_w: int

    @property
    def grid_h(self) -> int:
        return self.data.shape[-2]

    @property
    def grid_w(self) -> int:
        return self.data.shape[-1]


@dataclass
class RegionSet:
    """Per-region pooled feature blocks [p, C, d, d] plus their source boxes."""

    boxes: list[Box]
    features: Tensor
    labels: list[str] | None = None

    def __len__(self) -> int:
        return len(self.boxes)


class EncoderParams:
    """Three conv blocks, channels 3 -> 16 -> 32 -> C."""

    def __init__(self, rng: np.random.Generator, channels=(3, 16, 32, C_FEATURES)):
        self.kernels = []
        self.biases = []
        for cin, cout in zip(channels[:-1], channels[1:]):
            self.kernels.append(T.he_normal((cout, cin, 3, 3), fan_in=cin * 9, rng=rng))
            self.biases.append(T.zeros((cout,), requires_grad=True))

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, (k, b) in enumerate(zip(self.kernels, self.biases)):
            out.append((f"encoder.block{i}.kernel", k))
            out.append((f"encoder.block{i}.bias", b))
        return out


def encode_backbone(params: EncoderParams, image: Tensor) -> FeatureMap:
    """Encode [3, H, W] (or [B, 3, H, W]) into a 1/8-resolution feature map."""
    h, w = image.shape[-2:]
    if h < MIN_IMAGE_SIDE or w < MIN_IMAGE_SIDE:
        raise DataFormatError(f"image {h}x{w} is smaller than "
                              f"{MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}")
    x = image
    for kernel, bias in zip(params.kernels, params.biases):
        x = T.avg_downsample2(T.leaky_relu(T.conv2d(x, kernel, bias), slope=0.01))
    return FeatureMap(data=x, scale=DOWNSAMPLE, image_h=h, image_w=w)


def feature_space_box(box: Box, fm: FeatureMap) -> tuple[int, int, int, int]:
    """Map an image-space box to feature cells: floor/ceil, clamped to >= 1 cell."""
    s = fm.scale
    gx0 = box.x0 // s
    gy0 = box.y0 // s
    gx1 = min(-(-box.x1 // s), fm.grid_w)
    gy1 = min(-(-box.y1 // s), fm.grid_h)
    if gx1 <= gx0:
        gx1 = min(gx0 + 1, fm.grid_w)
        gx0 = gx1 - 1
    if gy1 <= gy0:
        gy1 = min(gy0 + 1, fm.grid_h)
        gy0 = gy1 - 1
    return gx0, gy0, gx1, gy1


def extract_roi_features(fm: FeatureMap, boxes: list[Box],
                         labels: list[str] | None = None,
                         roi: int = ROI_SIZE) -> RegionSet:
    """Pool each box's feature cells to a fixed [C, roi, roi] block."""
    if fm.data.ndim != 3:
        raise DataFormatError("ROI extraction expects an unbatched feature map")
    if not boxes:
        raise DataFormatError("no boxes to extract")
    blocks = []
    for box in boxes:
        box.check_bounds(fm.image_w, fm.image_h)
        gx0, gy0, gx1, gy1 = feature_space_box(box, fm)
        patch = T.narrow(T.narrow(fm.data, 1, gy0, gy1 - gy0), 2, gx0, gx1 - gx0)
        blocks.append(T.adaptive_max_pool(patch, roi, roi))
    return RegionSet(boxes=list(boxes), features=T.stack(blocks), labels=labels)


def project_back(fm: FeatureMap, boxes: list[Box], updated: Tensor | None,
                 out_channels: int = C_FEATURES) -> Tensor:
    """Scatter updated region blocks into a fresh [C', H', W'] map.

    Each block is resized to its box's cell extent; overlaps resolve by
    elementwise max.  Cells no region touches come out exactly zero, via
    a -inf sentinel so genuinely negative features survive the merge.
    An empty region set yields the all-zero map.
    """
    gh, gw = fm.grid_h, fm.grid_w
    if not boxes:
        return T.zeros((out_channels, gh, gw))
    if updated is None or updated.ndim != 4 or updated.shape[0] != len(boxes):
        got = None if updated is None else updated.shape
        raise DataFormatError(f"expected [{len(boxes)}, C', d, d] blocks, got {got}")
    sentinel = -1e30
    written = np.zeros((gh, gw))
    merged = None
    for r, box in enumerate(boxes):
        gx0, gy0, gx1, gy1 = feature_space_box(box, fm)
        block = T.bilinear_resize(T.narrow(updated, 0, r, 1), gy1 - gy0, gx1 - gx0)
        block = T.reshape(block, (updated.shape[1], gy1 - gy0, gx1 - gx0))
        frame = T.pad2d(block, gy0, gh - gy1, gx0, gw - gx1, fill=sentinel)
        merged = frame if merged is None else T.maximum(merged, frame)
        written[gy0:gy1, gx0:gx1] = 1.0
    # zero-fill untouched cells; multiplying kills the sentinel and its gradient
    return merged * Tensor(np.broadcast_to(written, merged.shape).copy())
