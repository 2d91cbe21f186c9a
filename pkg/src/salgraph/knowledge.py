"""External semantic-relatedness graphs over category labels.

Two builders produce the supervision graphs: one from a taxonomy via
Wu-Palmer similarity (edge threshold 0.5), one from co-occurrence counts
in a pre-labeled corpus (edge threshold 0.3).  Both yield a symmetric
matrix with unit diagonal and entries in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError

WUP_THRESHOLD = 0.5
COOCCURRENCE_THRESHOLD = 0.3


@dataclass
class Taxonomy:
    """Rooted tree of labels; ``parent`` omits the root."""

    parent: dict[str, str]
    root: str
    _depths: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for node in list(self.parent) + [self.root]:
            self.depth(node)

    def __contains__(self, label: str) -> bool:
        return label == self.root or label in self.parent

    def root_path(self, label: str) -> list[str]:
        """Nodes from the root down to ``label``, inclusive."""
        if label not in self:
            raise KeyError(f"unknown taxonomy label: {label!r}")
        path = [label]
        while path[-1] != self.root:
            path.append(self.parent[path[-1]])
        return path[::-1]

    def depth(self, label: str) -> int:
        """Inclusive node count on the root path; depth(root) == 1."""
        cached = self._depths.get(label)
        if cached is None:
            cached = self._depths[label] = len(self.root_path(label))
        return cached


def parse_taxonomy(text: str) -> Taxonomy:
    """Parse ``child<TAB>parent`` lines; the root is declared as ``name<TAB>-``."""
    parent: dict[str, str] = {}
    root = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise DataFormatError(f"taxonomy line {lineno}: expected 'child<TAB>parent'")
        child, par = parts
        if par == "-":
            if root is not None and root != child:
                raise DataFormatError(f"taxonomy line {lineno}: second root {child!r}")
            root = child
            continue
        if child in parent and parent[child] != par:
            raise DataFormatError(f"taxonomy line {lineno}: {child!r} has two parents")
        parent[child] = par
    if root is None:
        raise DataFormatError("taxonomy declares no root ('name<TAB>-' line)")
    # every chain must terminate at the root without cycles
    for node in parent:
        seen = {node}
        cur = node
        while cur != root:
            cur = parent.get(cur)
            if cur is None:
                raise DataFormatError(f"taxonomy node {node!r} does not reach the root")
            if cur in seen:
                raise DataFormatError(f"taxonomy cycle through {cur!r}")
            seen.add(cur)
    return Taxonomy(parent=parent, root=root)


def load_taxonomy(path) -> Taxonomy:
    return parse_taxonomy(Path(path).read_text(encoding="utf-8"))


def wup_similarity(taxonomy: Taxonomy, a: str, b: str) -> float:
    """2 * depth(lcs) / (depth(a) + depth(b)), depths inclusive of the root."""
    pa = taxonomy.root_path(a)
    pb = taxonomy.root_path(b)
    lcs_depth = 0
    for na, nb in zip(pa, pb):
        if na != nb:
            break
        lcs_depth += 1
    return 2.0 * lcs_depth / (len(pa) + len(pb))


@dataclass
class ProximityGraph:
    """Symmetric category-relatedness matrix with its edge threshold."""

    labels: list[str]
    adjacency: np.ndarray
    theta: float

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=np.float64)
        q = len(self.labels)
        if self.adjacency.shape != (q, q):
            raise DataFormatError(f"adjacency is {self.adjacency.shape}, expected ({q}, {q})")
        if not np.array_equal(self.adjacency, self.adjacency.T):
            raise DataFormatError("adjacency must be symmetric")
        if self.adjacency.min() < 0.0 or self.adjacency.max() > 1.0:
            raise DataFormatError("adjacency entries must lie in [0, 1]")
        if not np.all(np.diag(self.adjacency) == 1.0):
            raise DataFormatError("adjacency diagonal must be 1.0")
        self._index = {label: i for i, label in enumerate(self.labels)}
        if len(self._index) != q:
            raise DataFormatError("duplicate labels in proximity graph")

    def value(self, a: str, b: str) -> float:
        try:
            return float(self.adjacency[self._index[a], self._index[b]])
        except KeyError as exc:
            raise KeyError(f"label {exc.args[0]!r} not in graph") from None

    def index_of(self, label: str) -> int:
        if label not in self._index:
            raise KeyError(f"label {label!r} not in graph")
        return self._index[label]


def build_wup_graph(taxonomy: Taxonomy, categories: list[str],
                    theta: float = WUP_THRESHOLD) -> ProximityGraph:
    for c in categories:
        if c not in taxonomy:
            raise KeyError(f"category {c!r} not in taxonomy")
    q = len(categories)
    adj = np.ones((q, q))
    for i in range(q):
        for j in range(i + 1, q):
            adj[i, j] = adj[j, i] = wup_similarity(taxonomy, categories[i], categories[j])
    # self-similarity is exactly 1, so the diagonal needs no forcing
    return ProximityGraph(labels=list(categories), adjacency=adj, theta=theta)


def build_cooccurrence_graph(records: list[list[str]], categories: list[str],
                             theta: float = COOCCURRENCE_THRESHOLD) -> ProximityGraph:
    """Pair-presence counts, max-normalized over off-diagonal pairs.

    A record contributes at most 1 to each unordered pair regardless of
    how many times a label repeats within it.
    """
    if not records:
        raise DataFormatError("co-occurrence corpus is empty")
    known = set(categories)
    index = {c: i for i, c in enumerate(categories)}
    q = len(categories)
    counts = np.zeros((q, q))
    for rec in records:
        present = sorted({label for label in rec})
        for label in present:
            if label not in known:
                raise KeyError(f"corpus label {label!r} not in category list")
        for a_pos, a in enumerate(present):
            for b in present[a_pos + 1:]:
                i, j = index[a], index[b]
                counts[i, j] += 1.0
                counts[j, i] += 1.0
    peak = counts.max()
    if peak == 0.0:
        raise DataFormatError("no category pair ever co-occurs; cannot normalize")
    adj = counts / peak
    np.fill_diagonal(adj, 1.0)
    return ProximityGraph(labels=list(categories), adjacency=adj, theta=theta)


def parse_corpus(text: str) -> list[list[str]]:
    """One record per line, comma-separated labels; blank lines are skipped."""
    records = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        records.append([part.strip() for part in line.split(",") if part.strip()])
    return records


def load_corpus(path) -> list[list[str]]:
    return parse_corpus(Path(path).read_text(encoding="utf-8"))


def load_categories(path) -> list[str]:
    """One category label per line."""
    labels = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()
              if ln.strip() and not ln.startswith("#")]
    if not labels:
        raise DataFormatError(f"{path}: no category labels")
    return labels


# ---------------------------------------------------------------------------
# graph file format
# ---------------------------------------------------------------------------


def save_graph(path, graph: ProximityGraph) -> None:
    lines = ["GRAPH1", ",".join(graph.labels), f"theta={graph.theta!r}"]
    for row in graph.adjacency:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_graph(path, expected_labels: list[str] | None = None) -> ProximityGraph:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 3 or lines[0].strip() != "GRAPH1":
        raise DataFormatError(f"{path}: not a GRAPH1 file")
    labels = [part.strip() for part in lines[1].split(",")]
    if not lines[2].startswith("theta="):
        raise DataFormatError(f"{path}: missing theta line")
    try:
        theta = float(lines[2][len("theta="):])
    except ValueError:
        raise DataFormatError(f"{path}: malformed theta value") from None
    rows = [ln for ln in lines[3:] if ln.strip()]
    if len(rows) != len(labels):
        raise DataFormatError(f"{path}: expected {len(labels)} matrix rows, got {len(rows)}")
    try:
        adj = np.array([[float(v) for v in row.split(",")] for row in rows])
    except ValueError:
        raise DataFormatError(f"{path}: non-numeric adjacency entry") from None
    graph = ProximityGraph(labels=labels, adjacency=adj, theta=theta)
    if expected_labels is not None and labels != list(expected_labels):
        raise DataFormatError(f"{path}: graph labels {labels} do not match "
                              f"expected {list(expected_labels)}")
    return graph
