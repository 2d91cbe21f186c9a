"""Synthetic scenes whose saliency is grounded in a category graph.

Each scene scatters rectangles with category-specific color/texture
signatures over a noisy background, marks one object as the attention
seed (brighter fill, white inner border), and assigns ground-truth
saliency mass 1.0 to the seed and, to every other object, mass equal to
its category's proximity to the seed's category.  The blurred,
normalized mass map is the density; fixations are samples from it.

Salient objects therefore raise the saliency of semantically related
objects by construction, which is exactly the signal the graph branch
is meant to exploit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from . import fileio
from .errors import DataFormatError
from .knowledge import (ProximityGraph, Taxonomy, build_wup_graph,
                        parse_taxonomy)
from .metrics import format_fixations, parse_fixations
from .regions import Box, format_boxes, parse_boxes
from .rng import derive_rng

DEFAULT_CATEGORIES = ["dog", "cat", "bird", "car", "bus", "cup", "bowl", "spoon"]

DEFAULT_TAXONOMY_TEXT = """\
root\t-
animal\troot
vehicle\troot
object\troot
dog\tanimal
cat\tanimal
bird\tanimal
car\tvehicle
bus\tvehicle
cup\tobject
bowl\tobject
spoon\tobject
"""

# (r, g, b) base fill and texture style per category
_SIGNATURES = {
    "dog": ((0.55, 0.35, 0.15), "speckle"),
    "cat": ((0.55, 0.55, 0.55), "hstripes"),
    "bird": ((0.20, 0.45, 0.80), "dots"),
    "car": ((0.80, 0.15, 0.15), "vstripes"),
    "bus": ((0.85, 0.75, 0.10), "solid"),
    "cup": ((0.10, 0.70, 0.70), "checker"),
    "bowl": ((0.70, 0.20, 0.70), "vgrad"),
    "spoon": ((0.25, 0.65, 0.25), "diag"),
}

_PLACEMENT_RETRIES = 400
_MAX_OVERLAP = 0.25  # intersection over smaller box area
RELATED_BIAS_FLOOR = 0.3  # label sampling: floor + (1-floor) * proximity


def default_taxonomy() -> Taxonomy:
    return parse_taxonomy(DEFAULT_TAXONOMY_TEXT)


def default_generation_graph() -> ProximityGraph:
    return build_wup_graph(default_taxonomy(), DEFAULT_CATEGORIES)


@dataclass
class SceneSpec:
    """Generator configuration; categories and their graph default to the
    built-in taxonomy."""

    width: int = 64
    height: int = 64
    min_objects: int = 3
    max_objects: int = 8
    n_fixations: int = 20
    blur_sigma: float = 1.5
    seed: int = 0
    categories: list[str] = field(default_factory=lambda: list(DEFAULT_CATEGORIES))
    graph: ProximityGraph | None = None

    def __post_init__(self):
        if self.width < 32 or self.height < 32:
            raise DataFormatError("scenes must be at least 32x32")
        if not (1 <= self.min_objects <= self.max_objects):
            raise DataFormatError("object count range is invalid")
        if self.n_fixations < 1:
            raise DataFormatError("need at least one fixation per scene")
        if self.graph is None:
            self.graph = default_generation_graph()
        if self.graph.labels != self.categories:
            raise DataFormatError("generation graph labels must match categories")


@dataclass
class SaliencySample:
    image: np.ndarray  # [3, H, W] floats in [0, 1]
    boxes: list[Box]  # labeled
    fixations: np.ndarray  # [n, 2] ints (x, y)
    density: np.ndarray  # [H, W], sums to 1
    seed_index: int | None = None  # generator-only: which box seeded the mass


def _texture(style: str, h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    ys, xs = np.mgrid[0:h, 0:w]
    if style == "solid":
        return np.zeros((h, w))
    if style == "hstripes":
        return ((ys // 2) % 2) * 0.30 - 0.15
    if style == "vstripes":
        return ((xs // 2) % 2) * 0.30 - 0.15
    if style == "dots":
        return np.where((xs % 3 == 1) & (ys % 3 == 1), 0.35, -0.05)
    if style == "checker":
        return (((xs // 2) + (ys // 2)) % 2) * 0.30 - 0.15
    if style == "vgrad":
        return np.linspace(-0.18, 0.18, h)[:, None] + np.zeros((1, w))
    if style == "diag":
        return (((xs + ys) // 2) % 2) * 0.30 - 0.15
    if style == "speckle":
        return rng.uniform(-0.18, 0.18, size=(h, w))
    raise ValueError(f"unknown texture style {style!r}")


def _paint(image: np.ndarray, box: Box, label: str, is_seed: bool,
           rng: np.random.Generator) -> None:
    color, style = _SIGNATURES[label]
    h = box.y1 - box.y0
    w = box.x1 - box.x0
    tex = _texture(style, h, w, rng)
    patch = np.clip(np.asarray(color)[:, None, None] + tex[None], 0.0, 1.0)
    if is_seed:
        patch = np.clip(patch + 0.30, 0.0, 1.0)
        patch[:, 0, :] = 1.0
        patch[:, -1, :] = 1.0
        patch[:, :, 0] = 1.0
        patch[:, :, -1] = 1.0
    image[:, box.y0:box.y1, box.x0:box.x1] = patch


def _overlap_frac(a: Box, b: Box) -> float:
    ix = max(0, min(a.x1, b.x1) - max(a.x0, b.x0))
    iy = max(0, min(a.y1, b.y1) - max(a.y0, b.y0))
    inter = ix * iy
    smaller = min((a.x1 - a.x0) * (a.y1 - a.y0), (b.x1 - b.x0) * (b.y1 - b.y0))
    return inter / smaller


def _place_boxes(spec: SceneSpec, labels: list[str],
                 rng: np.random.Generator) -> list[Box]:
    boxes: list[Box] = []
    attempts = 0
    side_max = min(20, spec.width // 3, spec.height // 3)
    for label in labels:
        while True:
            attempts += 1
            if attempts > _PLACEMENT_RETRIES:
                raise DataFormatError(
                    f"could not place {len(labels)} objects in "
                    f"{spec.width}x{spec.height} after {_PLACEMENT_RETRIES} tries")
            w = int(rng.integers(10, side_max + 1))
            h = int(rng.integers(10, side_max + 1))
            x0 = int(rng.integers(0, spec.width - w + 1))
            y0 = int(rng.integers(0, spec.height - h + 1))
            cand = Box(x0, y0, x0 + w, y0 + h, label)
            if all(_overlap_frac(cand, other) <= _MAX_OVERLAP for other in boxes):
                boxes.append(cand)
                break
    return boxes


def _sample_labels(spec: SceneSpec, rng: np.random.Generator) -> tuple[list[str], int]:
    """One seed category plus related-biased companions; seed goes first."""
    cats = spec.categories
    adj = spec.graph.adjacency
    n_obj = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    seed_idx = int(rng.integers(len(cats)))
    # companions never repeat the seed category, so the seed keeps the
    # strictly largest mass and the density peak stays in its box
    weights = RELATED_BIAS_FLOOR + (1.0 - RELATED_BIAS_FLOOR) * adj[seed_idx]
    weights[seed_idx] = 0.0
    weights = weights / weights.sum()
    others = rng.choice(len(cats), size=n_obj - 1, p=weights)
    return [cats[seed_idx]] + [cats[i] for i in others], seed_idx


def generate_scene(spec: SceneSpec, rng: np.random.Generator) -> SaliencySample:
    labels, seed_idx = _sample_labels(spec, rng)
    boxes = _place_boxes(spec, labels, rng)

    image = np.clip(rng.normal(0.5, 0.04, size=(3, spec.height, spec.width)),
                    0.0, 1.0)
    # paint seed last so its marker survives any allowed overlap
    for i in range(len(boxes) - 1, -1, -1):
        _paint(image, boxes[i], labels[i], is_seed=(i == 0), rng=rng)

    mass = np.zeros((spec.height, spec.width))
    adj = spec.graph.adjacency
    for i, box in enumerate(boxes):
        weight = 1.0 if i == 0 else adj[seed_idx, spec.graph.index_of(labels[i])]
        region = mass[box.y0:box.y1, box.x0:box.x1]
        np.maximum(region, weight, out=region)

    blurred = gaussian_filter(mass, sigma=spec.blur_sigma, mode="constant")
    density = blurred / blurred.sum()

    flat = rng.choice(density.size, size=spec.n_fixations, p=density.ravel())
    fixations = np.stack([flat % spec.width, flat // spec.width], axis=1)
    return SaliencySample(image=image, boxes=boxes, fixations=fixations,
                          density=density, seed_index=0)


def generate_dataset(spec: SceneSpec, n: int) -> list[SaliencySample]:
    if n < 1:
        raise DataFormatError("dataset size must be at least 1")
    rng = derive_rng(spec.seed, "scenes")
    return [generate_scene(spec, rng) for _ in range(n)]


# ---------------------------------------------------------------------------
# on-disk dataset layout
# ---------------------------------------------------------------------------


def save_dataset(out_dir, samples: list[SaliencySample],
                 categories: list[str] | None = None) -> None:
    """Write samples plus the corpus/category/taxonomy side files that the
    graph builders consume."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stems = []
    corpus_lines = []
    for i, sample in enumerate(samples):
        stem = f"sample_{i:05d}"
        stems.append(stem)
        fileio.save_tensor(out / f"{stem}.image.gtsr", sample.image)
        fileio.save_tensor(out / f"{stem}.density.gtsr", sample.density)
        (out / f"{stem}.boxes.txt").write_text(format_boxes(sample.boxes),
                                               encoding="utf-8")
        (out / f"{stem}.fix.txt").write_text(format_fixations(sample.fixations),
                                             encoding="utf-8")
        corpus_lines.append(",".join(b.label for b in sample.boxes))
    (out / "dataset.txt").write_text("\n".join(stems) + "\n", encoding="utf-8")
    (out / "corpus.txt").write_text("\n".join(corpus_lines) + "\n", encoding="utf-8")
    cats = categories if categories is not None else DEFAULT_CATEGORIES
    (out / "categories.txt").write_text("\n".join(cats) + "\n", encoding="utf-8")
    (out / "taxonomy.txt").write_text(DEFAULT_TAXONOMY_TEXT, encoding="utf-8")


def load_dataset(data_dir) -> list[SaliencySample]:
    root = Path(data_dir)
    manifest = root / "dataset.txt"
    if not manifest.is_file():
        raise DataFormatError(f"{root}: missing dataset.txt manifest")
    samples = []
    for stem in manifest.read_text(encoding="utf-8").split():
        image = fileio.load_tensor(root / f"{stem}.image.gtsr")
        density = fileio.load_tensor(root / f"{stem}.density.gtsr")
        if image.ndim != 3 or image.shape[0] != 3:
            raise DataFormatError(f"{stem}: image must be [3, H, W]")
        if density.shape != image.shape[1:]:
            raise DataFormatError(f"{stem}: density shape {density.shape} does not "
                                  f"match image {image.shape[1:]}")
        boxes = parse_boxes((root / f"{stem}.boxes.txt").read_text(encoding="utf-8"))
        for box in boxes:
            box.check_bounds(image.shape[2], image.shape[1])
            if box.label is None:
                raise DataFormatError(f"{stem}: training boxes need labels")
        fixations = parse_fixations((root / f"{stem}.fix.txt").read_text(encoding="utf-8"))
        density = density / density.sum()  # restore exact unit mass after f32 storage
        samples.append(SaliencySample(image=image, boxes=boxes,
                                      fixations=fixations, density=density))
    if not samples:
        raise DataFormatError(f"{root}: empty dataset")
    return samples
