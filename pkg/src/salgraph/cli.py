"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .config import RunConfig, scene_spec_from_file
from .errors import DataFormatError, NumericError
from .evaluate import (ablate_run, evaluate_model, write_ablation_csv,
                       write_ablation_runs_csv, write_metrics_csv)
from .knowledge import (COOCCURRENCE_THRESHOLD, WUP_THRESHOLD,
                        build_cooccurrence_graph, build_wup_graph,
                        load_categories, load_corpus, load_graph,
                        load_taxonomy, save_graph)
from .metrics import MetricReport, evaluate_map, fixation_density
from .model import load_checkpoint
from .regions import parse_boxes
from .scenes import generate_dataset, load_dataset, save_dataset
from .train import save_artifacts, train_run


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage problems; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="salgraph",
                     description="Graph-based saliency prediction on synthetic scenes")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("build-graph", help="build a proximity graph file")
    p.add_argument("--kind", required=True, choices=("cooccurrence", "wup"))
    p.add_argument("--input", required=True,
                   help="corpus file (cooccurrence) or taxonomy file (wup)")
    p.add_argument("--categories", required=True, help="category list, one per line")
    p.add_argument("--theta", type=float, default=None,
                   help="edge threshold override")
    p.add_argument("--out", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic scene dataset")
    p.add_argument("--spec", required=True, help="scene config file")
    p.add_argument("--count", required=True, type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--graphs", default="",
                   help="comma-separated graph files; empty trains without "
                        "the knowledge branch")
    p.add_argument("--out", required=True, help="checkpoint path")

    p = sub.add_parser("eval", help="evaluate a checkpoint over a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--blur-sigma", type=float, default=2.0,
                   help="fixation blur for the distribution ground truth")

    p = sub.add_parser("predict", help="predict one saliency map")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True, help=".gtsr [3,H,W] or grayscale .pgm")
    p.add_argument("--boxes", required=True)
    p.add_argument("--out", required=True,
                   help="output prefix; writes <out>.gtsr and <out>.pgm")

    p = sub.add_parser("ablate", help="run the knowledge-source ablation grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("metrics", help="score externally produced maps")
    p.add_argument("--data", required=True)
    p.add_argument("--maps", required=True,
                   help="directory of <stem>.pred.gtsr prediction maps")
    p.add_argument("--report", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--blur-sigma", type=float, default=2.0)

    return parser


# ---------------------------------------------------------------------------
# subcommand bodies
# ---------------------------------------------------------------------------


def _cmd_build_graph(args) -> int:
    categories = load_categories(args.categories)
    if args.kind == "wup":
        taxonomy = load_taxonomy(args.input)
        theta = args.theta if args.theta is not None else WUP_THRESHOLD
        graph = build_wup_graph(taxonomy, categories, theta=theta)
    else:
        records = load_corpus(args.input)
        theta = args.theta if args.theta is not None else COOCCURRENCE_THRESHOLD
        graph = build_cooccurrence_graph(records, categories, theta=theta)
    save_graph(args.out, graph)
    print(f"wrote {args.kind} graph over {len(categories)} categories to {args.out}")
    return 0


def _cmd_gen_data(args) -> int:
    spec = scene_spec_from_file(args.spec)
    samples = generate_dataset(spec, args.count)
    save_dataset(args.out, samples, categories=spec.categories)
    print(f"wrote {len(samples)} scenes to {args.out}")
    return 0


def _cmd_train(args) -> int:
    config = RunConfig.from_file(args.config)
    graphs = {}
    for entry in [e for e in args.graphs.split(",") if e.strip()]:
        path = Path(entry.strip())
        name = path.stem.lower()
        if name in graphs:
            raise DataFormatError(f"duplicate graph name {name!r}")
        graphs[name] = load_graph(path)
    dataset = load_dataset(args.data)

    def progress(iteration, value):
        if iteration == 1 or iteration % 50 == 0:
            print(f"iteration {iteration}: loss {value:.6f}")

    result = train_run(config, dataset, graphs, progress=progress)
    out = Path(args.out)
    save_artifacts(result, out,
                   csv_path=out.with_name(out.stem + "_loss.csv"),
                   figure_path=out.with_name(out.stem + "_loss.png"))
    print(f"final loss {result.losses[-1]:.6f}; checkpoint at {out}")
    return 0


def _cmd_eval(args) -> int:
    model = load_checkpoint(args.ckpt)
    dataset = load_dataset(args.data)
    result = evaluate_model(model, dataset, fixation_blur_sigma=args.blur_sigma,
                            seed=args.seed)
    stems = [f"sample_{i:05d}" for i in range(len(dataset))]
    write_metrics_csv(args.report, result.reports, result.mean, names=stems)
    report = Path(args.report)
    from .figures import save_metric_bars, save_prediction_gallery
    save_metric_bars(result.mean, report.with_suffix(".png"))
    save_prediction_gallery(dataset, result.predictions,
                            report.with_name(report.stem + "_gallery.png"))
    cols = ",".join(MetricReport.COLUMNS)
    vals = ",".join(f"{v:.4f}" for v in result.mean.row())
    print(f"mean {cols} = {vals}")
    return 0


def _load_image(path) -> np.ndarray:
    p = Path(path)
    if p.suffix == ".pgm":
        gray = fileio.load_pgm(p)
        return np.stack([gray, gray, gray])
    arr = fileio.load_tensor(p)
    if arr.ndim == 2:
        arr = np.stack([arr, arr, arr])
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise DataFormatError(f"{p}: image tensor must be [3, H, W] or [H, W]")
    return arr


def _cmd_predict(args) -> int:
    model = load_checkpoint(args.ckpt)
    image = _load_image(args.image)
    boxes = parse_boxes(Path(args.boxes).read_text(encoding="utf-8"))
    for box in boxes:
        box.check_bounds(image.shape[2], image.shape[1])
    pred = model.predict_map(image, boxes)
    out = Path(args.out)
    fileio.save_tensor(out.with_suffix(".gtsr"), pred)
    fileio.save_pgm(out.with_suffix(".pgm"), pred)
    print(f"wrote {out.with_suffix('.gtsr')} and {out.with_suffix('.pgm')}")
    return 0


def _cmd_ablate(args) -> int:
    config = RunConfig.from_file(args.config)

    def progress(variant, seed, mean):
        print(f"{variant} seed {seed}: NSS {mean.nss:.4f}, CC {mean.cc:.4f}")

    outcome = ablate_run(config, progress=progress)
    out = Path(args.out)
    write_ablation_csv(out, outcome)
    write_ablation_runs_csv(out.with_name(out.stem + "_runs.csv"), outcome)
    from .figures import save_ablation_bars
    save_ablation_bars(outcome["means"], out.with_suffix(".png"))
    print(f"wrote ablation table to {out}")
    return 0


def _cmd_metrics(args) -> int:
    dataset = load_dataset(args.data)
    maps_dir = Path(args.maps)
    if len(dataset) < 2:
        raise DataFormatError("need at least two samples for shuffled AUC")
    reports = []
    stems = []
    for i, sample in enumerate(dataset):
        stem = f"sample_{i:05d}"
        stems.append(stem)
        pred_path = maps_dir / f"{stem}.pred.gtsr"
        if not pred_path.is_file():
            raise DataFormatError(f"missing prediction map {pred_path}")
        pred = fileio.load_tensor(pred_path)
        h, w = sample.density.shape
        gt = fixation_density(sample.fixations, h, w, args.blur_sigma)
        others = [s.fixations for j, s in enumerate(dataset) if j != i]
        reports.append(evaluate_map(pred, gt, sample.fixations, others,
                                    seed=args.seed + 7919 * i))
    write_metrics_csv(args.report, reports, MetricReport.mean(reports), names=stems)
    print(f"scored {len(reports)} maps into {args.report}")
    return 0


_COMMANDS = {
    "build-graph": _cmd_build_graph,
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "ablate": _cmd_ablate,
    "metrics": _cmd_metrics,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (DataFormatError, FileNotFoundError, KeyError) as exc:
        detail = exc.args[0] if exc.args else exc
        print(f"salgraph: data error: {detail}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"salgraph: numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
