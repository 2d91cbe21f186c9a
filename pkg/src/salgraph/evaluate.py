"""Model evaluation over a dataset and the knowledge-source ablation grid."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import DataFormatError
from .knowledge import ProximityGraph, load_graph
from .metrics import MetricReport, evaluate_map, fixation_density
from .model import SalGraphModel
from .scenes import SaliencySample, load_dataset
from .train import train_run

ABLATION_VARIANTS = ("none", "cooccurrence", "wup", "both")
_SAUC_SEED_STRIDE = 7919  # distinct per-sample streams from one run seed


@dataclass
class EvalResult:
    reports: list[MetricReport]
    mean: MetricReport
    predictions: list[np.ndarray]


def evaluate_model(model: SalGraphModel, dataset: list[SaliencySample],
                   indices=None, fixation_blur_sigma: float = 2.0,
                   seed: int = 0) -> EvalResult:
    """Predict and score each selected sample.

    NSS and AUC use the recorded fixation points directly; CC, SIM, and
    KL compare against a blurred-fixation density, the usual form of the
    distributed ground truth.  Shuffled-AUC negatives pool the fixations
    of every other selected sample.
    """
    if indices is None:
        indices = np.arange(len(dataset))
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) < 2:
        raise DataFormatError("evaluation needs at least two samples "
                              "(shuffled AUC draws negatives from other images)")
    chosen = [dataset[i] for i in indices]
    reports = []
    predictions = []
    for pos, sample in enumerate(chosen):
        pred = model.predict_map(sample.image, sample.boxes)
        h, w = pred.shape
        gt = fixation_density(sample.fixations, h, w, fixation_blur_sigma)
        others = [s.fixations for j, s in enumerate(chosen) if j != pos]
        reports.append(evaluate_map(pred, gt, sample.fixations, others,
                                    seed=seed + _SAUC_SEED_STRIDE * pos))
        predictions.append(pred)
    return EvalResult(reports=reports, mean=MetricReport.mean(reports),
                      predictions=predictions)


def write_metrics_csv(path, reports: list[MetricReport], mean: MetricReport,
                      names: list[str] | None = None) -> None:
    lines = ["sample," + ",".join(MetricReport.COLUMNS)]
    for i, report in enumerate(reports):
        name = names[i] if names else str(i)
        lines.append(name + "," + ",".join(repr(v) for v in report.row()))
    lines.append("mean," + ",".join(repr(v) for v in mean.row()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# ablation
# ---------------------------------------------------------------------------


def _load_ablation_graphs(config: RunConfig) -> dict[str, ProximityGraph]:
    graphs = {}
    if config.graph_cooccurrence is None or config.graph_wup is None:
        raise DataFormatError("ablation config must set graph_cooccurrence "
                              "and graph_wup")
    graphs["cooccurrence"] = load_graph(config.graph_cooccurrence)
    graphs["wup"] = load_graph(config.graph_wup)
    return graphs


def ablate_run(config: RunConfig, progress=None) -> dict:
    """Train and evaluate each knowledge variant across the shared seed set.

    Returns {"runs": [(variant, seed, MetricReport)], "means": {variant:
    MetricReport}} with every run evaluated on its seed's validation split.
    """
    if config.data_dir is None:
        raise DataFormatError("ablation config must set data_dir")
    dataset = load_dataset(config.data_dir)
    all_graphs = _load_ablation_graphs(config)

    runs: list[tuple[str, int, MetricReport]] = []
    means: dict[str, MetricReport] = {}
    for variant in ABLATION_VARIANTS:
        variant_cfg = config.with_overrides(sources=variant)
        graphs = {name: all_graphs[name] for name in variant_cfg.source_names()}
        variant_reports = []
        for seed in config.ablate_seeds:
            run_cfg = variant_cfg.with_overrides(seed=seed)
            result = train_run(run_cfg, dataset, graphs)
            evaluation = evaluate_model(
                result.model, dataset, indices=result.val_indices,
                fixation_blur_sigma=config.fixation_blur_sigma, seed=seed)
            runs.append((variant, seed, evaluation.mean))
            variant_reports.append(evaluation.mean)
            if progress is not None:
                progress(variant, seed, evaluation.mean)
        means[variant] = MetricReport.mean(variant_reports)
    return {"runs": runs, "means": means}


_ABLATION_COLUMNS = ("cc", "auc", "nss", "sauc")


def write_ablation_csv(path, outcome: dict) -> None:
    """Mean table in the four-variant layout; one row per variant."""
    lines = ["variant," + ",".join(_ABLATION_COLUMNS)]
    for variant in ABLATION_VARIANTS:
        report = outcome["means"][variant]
        lines.append(variant + ","
                     + ",".join(repr(getattr(report, c)) for c in _ABLATION_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_ablation_runs_csv(path, outcome: dict) -> None:
    lines = ["variant,seed," + ",".join(_ABLATION_COLUMNS)]
    for variant, seed, report in outcome["runs"]:
        lines.append(f"{variant},{seed},"
                     + ",".join(repr(getattr(report, c)) for c in _ABLATION_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
