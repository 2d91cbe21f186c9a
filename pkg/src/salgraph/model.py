"""Full model assembly: encoder, per-source SPN + sGAT, priors, head.

The knowledge branch is optional (an empty source list skips SPN and
sGAT entirely) and the center-bias priors can be disabled; the head's
input width adjusts accordingly.  Checkpoints are ZIP archives of
split-precision tensor pairs so the 64-bit parameter state survives the
32-bit on-disk tensor format.
"""

from __future__ import annotations

import zipfile
from pathlib import Path

import numpy as np

from . import fileio, tensor as T
from .errors import DataFormatError
from .head import HeadParams, N_PRIORS, PriorParams, head_predict, prior_maps
from .regions import (Box, C_FEATURES, EncoderParams, FeatureMap, ROI_SIZE,
                      encode_backbone, extract_roi_features, project_back)
from .rng import derive_rng
from .sgat import FuseParams, HEADS, SgatParams, fuse_updates, sgat_forward
from .spn import PredictedGraph, SpnParams, predict_graph
from .tensor import Tensor

_CKPT_FORMAT = "salgraph-checkpoint-1"


class SalGraphModel:
    """All parameter groups plus the forward pass."""

    def __init__(self, rng: np.random.Generator, sources: list[str],
                 thetas: dict[str, float] | None = None,
                 center_bias: bool = True, channels: int = C_FEATURES,
                 heads: int = HEADS, n_priors: int = N_PRIORS,
                 roi: int = ROI_SIZE):
        if len(set(sources)) != len(sources):
            raise DataFormatError(f"duplicate knowledge sources: {sources}")
        thetas = thetas or {}
        for name in thetas:
            if name not in sources:
                raise DataFormatError(f"theta given for unknown source {name!r}")
        self.sources = list(sources)
        self.thetas = {name: float(thetas.get(name, 0.5)) for name in sources}
        self.center_bias = bool(center_bias)
        self.channels = channels
        self.heads = heads
        self.n_priors = n_priors
        self.roi = roi

        self.encoder = EncoderParams(rng, channels=(3, 16, 32, channels))
        self.mb_kernel = T.he_normal((channels, channels, 3, 3),
                                     fan_in=channels * 9, rng=rng)
        self.mb_bias = T.zeros((channels,), requires_grad=True)
        self.spn = {name: SpnParams(rng, channels) for name in self.sources}
        self.sgat = {name: SgatParams(rng, channels, heads) for name in self.sources}
        self.fuse = FuseParams(rng, channels, len(self.sources)) if self.sources else None
        self.priors = PriorParams(rng, n_priors) if center_bias else None
        head_in = ((channels if self.sources else 0) + channels
                   + (n_priors if center_bias else 0))
        self.head = HeadParams(rng, head_in)

    # -- parameter bookkeeping -------------------------------------------------

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = list(self.encoder.named_parameters())
        out.append(("baseline.kernel", self.mb_kernel))
        out.append(("baseline.bias", self.mb_bias))
        for name in self.sources:
            out.extend(self.spn[name].named_parameters(prefix=f"spn.{name}"))
        for name in self.sources:
            out.extend(self.sgat[name].named_parameters(prefix=f"sgat.{name}"))
        if self.fuse is not None:
            out.extend(self.fuse.named_parameters())
        if self.priors is not None:
            out.extend(self.priors.named_parameters())
        out.extend(self.head.named_parameters())
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def parameter_report(self) -> dict[str, int]:
        """Per-group parameter counts; group = first dotted name component."""
        groups: dict[str, int] = {}
        for name, p in self.named_parameters():
            group = name.split(".")[0]
            groups[group] = groups.get(group, 0) + p.size
        groups["total"] = sum(p.size for p in self.parameters())
        return groups

    # -- forward passes ----------------------------------------------------------

    def _graph_branch(self, fm: FeatureMap, boxes: list[Box],
                      labels: list[str] | None):
        """Region graph propagation; returns (m_e, per-source graphs, regions)."""
        if not self.sources or not boxes:
            zero = T.zeros((self.channels, fm.grid_h, fm.grid_w))
            return (zero if self.sources else None), {}, None
        regions = extract_roi_features(fm, boxes, labels=labels, roi=self.roi)
        graphs: dict[str, PredictedGraph] = {}
        updated = []
        for name in self.sources:
            pg = predict_graph(self.spn[name], regions, self.thetas[name])
            graphs[name] = pg
            updated.append(sgat_forward(self.sgat[name], regions, pg))
        fused = fuse_updates(self.fuse, updated)
        m_e = project_back(fm, boxes, fused, out_channels=self.channels)
        return m_e, graphs, regions

    def forward_sample(self, image: Tensor, boxes: list[Box],
                       labels: list[str] | None = None):
        """One image [3, H, W] to a saliency map [H, W] plus the predicted
        per-source graphs (needed by the distillation loss)."""
        fm = encode_backbone(self.encoder, image)
        m_b = T.conv2d(fm.data, self.mb_kernel, self.mb_bias)
        m_e, graphs, _ = self._graph_branch(fm, boxes, labels)
        parts = ([m_e] if m_e is not None else []) + [m_b]
        if self.priors is not None:
            parts.append(prior_maps(self.priors, fm.grid_h, fm.grid_w))
        yhat = head_predict(self.head, parts, fm.image_h, fm.image_w)
        return yhat, graphs

    def forward_batch(self, images: Tensor, boxes_list: list[list[Box]],
                      labels_list: list[list[str] | None]):
        """Batched forward: images [B, 3, H, W] to maps [B, H, W].

        The encoder, baseline conv, priors, and head run once on the whole
        batch; the region branch runs per sample since p varies.
        """
        b, _, h, w = images.shape
        fm = encode_backbone(self.encoder, images)
        m_b = T.conv2d(fm.data, self.mb_kernel, self.mb_bias)
        gh, gw = fm.grid_h, fm.grid_w

        parts = []
        all_graphs: list[dict[str, PredictedGraph]] = []
        if self.sources:
            m_e_rows = []
            for i in range(b):
                fm_i = FeatureMap(
                    data=T.reshape(T.narrow(fm.data, 0, i, 1),
                                   (self.channels, gh, gw)),
                    scale=fm.scale, image_h=h, image_w=w)
                m_e, graphs, _ = self._graph_branch(fm_i, boxes_list[i],
                                                    labels_list[i])
                m_e_rows.append(m_e)
                all_graphs.append(graphs)
            parts.append(T.stack(m_e_rows))
        else:
            all_graphs = [{} for _ in range(b)]
        parts.append(m_b)
        if self.priors is not None:
            pm = prior_maps(self.priors, gh, gw)
            parts.append(T.stack([pm] * b))
        yhat = head_predict(self.head, parts, h, w)
        return yhat, all_graphs

    def predict_map(self, image: np.ndarray, boxes: list[Box]) -> np.ndarray:
        """Inference-only saliency map as a plain array."""
        with T.no_grad():
            yhat, _ = self.forward_sample(Tensor(image), boxes)
        return yhat.data


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def _meta_lines(model: SalGraphModel) -> str:
    thetas = ",".join(repr(model.thetas[s]) for s in model.sources)
    return "".join(f"{k}={v}\n" for k, v in [
        ("format", _CKPT_FORMAT),
        ("sources", ",".join(model.sources)),
        ("thetas", thetas),
        ("center_bias", int(model.center_bias)),
        ("channels", model.channels),
        ("heads", model.heads),
        ("n_priors", model.n_priors),
        ("roi", model.roi),
    ])


def save_checkpoint(path, model: SalGraphModel) -> None:
    """Write all parameters into one deterministic ZIP archive.

    Each tensor is stored as two f32 GTSR1 entries: the rounded value and
    the rounding residual, which reconstruct the f64 state to ~1e-14
    relative error on load.
    """
    entries: list[tuple[str, bytes]] = [("meta.txt", _meta_lines(model).encode())]
    for name, p in model.named_parameters():
        hi = p.data.astype(np.float32).astype(np.float64)
        lo = p.data - hi
        entries.append((f"params/{name}.hi.gtsr", fileio.tensor_to_bytes(hi)))
        entries.append((f"params/{name}.lo.gtsr", fileio.tensor_to_bytes(lo)))
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for entry_name, payload in entries:
            info = zipfile.ZipInfo(entry_name, date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, payload)


def _parse_meta(text: str) -> dict[str, str]:
    meta = {}
    for line in text.splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    return meta


def load_checkpoint(path) -> SalGraphModel:
    path = Path(path)
    if not path.is_file():
        raise DataFormatError(f"{path}: checkpoint not found")
    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile:
        raise DataFormatError(f"{path}: not a checkpoint archive") from None
    with zf:
        names = set(zf.namelist())
        if "meta.txt" not in names:
            raise DataFormatError(f"{path}: checkpoint lacks meta.txt")
        meta = _parse_meta(zf.read("meta.txt").decode("utf-8"))
        if meta.get("format") != _CKPT_FORMAT:
            raise DataFormatError(f"{path}: unknown checkpoint format "
                                  f"{meta.get('format')!r}")
        sources = [s for s in meta.get("sources", "").split(",") if s]
        theta_vals = [float(v) for v in meta.get("thetas", "").split(",") if v]
        if len(theta_vals) != len(sources):
            raise DataFormatError(f"{path}: thetas do not align with sources")
        model = SalGraphModel(
            rng=derive_rng(0, "checkpoint-shell"),
            sources=sources,
            thetas=dict(zip(sources, theta_vals)),
            center_bias=bool(int(meta.get("center_bias", "1"))),
            channels=int(meta.get("channels", C_FEATURES)),
            heads=int(meta.get("heads", HEADS)),
            n_priors=int(meta.get("n_priors", N_PRIORS)),
            roi=int(meta.get("roi", ROI_SIZE)),
        )
        for name, p in model.named_parameters():
            hi_name = f"params/{name}.hi.gtsr"
            lo_name = f"params/{name}.lo.gtsr"
            if hi_name not in names or lo_name not in names:
                raise DataFormatError(f"{path}: missing parameter entry {name}")
            hi = fileio.tensor_from_bytes(zf.read(hi_name), origin=hi_name)
            lo = fileio.tensor_from_bytes(zf.read(lo_name), origin=lo_name)
            if hi.shape != p.data.shape:
                raise DataFormatError(f"{path}: parameter {name} has shape "
                                      f"{hi.shape}, expected {p.data.shape}")
            p.data = hi + lo
    return model
