"""Minibatch training of the full model against the composite objective."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .config import RunConfig
from .errors import NumericError
from .head import loss_sal, loss_total
from .knowledge import ProximityGraph
from .model import SalGraphModel, save_checkpoint
from .optim import Adam
from .rng import derive_rng
from .scenes import SaliencySample
from .spn import prox_loss
from .tensor import Tensor


@dataclass
class TrainResult:
    model: SalGraphModel
    losses: list[float]
    train_indices: np.ndarray
    val_indices: np.ndarray


def split_dataset(n: int, val_fraction: float, seed: int):
    """Seeded shuffle split; the validation share rounds to >= 1 sample."""
    order = derive_rng(seed, "split").permutation(n)
    n_val = int(round(val_fraction * n))
    if val_fraction > 0.0 and n > 1:
        n_val = min(max(n_val, 1), n - 1)
    else:
        n_val = 0
    return order[n_val:], order[:n_val]


def batch_loss(model: SalGraphModel, batch: list[SaliencySample],
               graphs: dict[str, ProximityGraph], config: RunConfig) -> Tensor:
    """Mean over the batch of the per-sample composite loss."""
    images = Tensor(np.stack([s.image for s in batch]))
    boxes_list = [s.boxes for s in batch]
    labels_list = [[b.label for b in s.boxes] for s in batch]
    yhats, pred_graphs = model.forward_batch(images, boxes_list, labels_list)

    h, w = batch[0].density.shape
    acc = None
    for i, sample in enumerate(batch):
        yhat_i = T.reshape(T.narrow(yhats, 0, i, 1), (h, w))
        sal = loss_sal(yhat_i, Tensor(sample.density), sample.fixations,
                       beta=config.beta, gamma=config.gamma)
        prox_terms = []
        if config.lam > 0.0:
            for name in model.sources:
                prox_terms.append(prox_loss(pred_graphs[i][name], graphs[name],
                                            labels_list[i]))
        term = loss_total(sal, prox_terms, config.lam)
        acc = term if acc is None else acc + term
    return acc * (1.0 / len(batch))


def train_run(config: RunConfig, dataset: list[SaliencySample],
              graphs: dict[str, ProximityGraph],
              progress=None) -> TrainResult:
    """Fit a fresh model; all randomness derives from config.seed."""
    source_names = list(graphs.keys())
    thetas = {}
    for name in source_names:
        override = getattr(config, f"theta_{name}", None)
        thetas[name] = override if override is not None else graphs[name].theta

    train_idx, val_idx = split_dataset(len(dataset), config.val_fraction,
                                       config.seed)
    if not len(train_idx):
        raise NumericError("training split is empty")

    model = SalGraphModel(
        rng=derive_rng(config.seed, "init"),
        sources=source_names,
        thetas=thetas,
        center_bias=config.center_bias,
        channels=config.channels,
        heads=config.heads,
        n_priors=config.n_priors,
    )
    optimizer = Adam(model.parameters(), lr=config.lr, decay=config.lr_decay)
    batch_rng = derive_rng(config.seed, "batches")

    losses: list[float] = []
    for iteration in range(1, config.iterations + 1):
        picks = batch_rng.choice(train_idx, size=config.batch_size,
                                 replace=len(train_idx) < config.batch_size)
        batch = [dataset[i] for i in picks]
        loss = batch_loss(model, batch, graphs, config)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss {value} at iteration {iteration}")
        optimizer.zero_grad()
        T.backward(loss)
        optimizer.step()
        losses.append(value)
        if progress is not None:
            progress(iteration, value)

    return TrainResult(model=model, losses=losses,
                       train_indices=train_idx, val_indices=val_idx)


def write_loss_csv(path, losses: list[float]) -> None:
    lines = ["iteration,loss"]
    lines += [f"{i},{value!r}" for i, value in enumerate(losses, 1)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_artifacts(result: TrainResult, ckpt_path, csv_path=None,
                   figure_path=None) -> None:
    save_checkpoint(ckpt_path, result.model)
    if csv_path is not None:
        write_loss_csv(csv_path, result.losses)
    if figure_path is not None:
        from .figures import save_loss_curve
        save_loss_curve(result.losses, figure_path)
