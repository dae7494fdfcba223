"""Seeded minibatch SGD(+momentum) loop for both head kinds, with dev selection."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import bayes_head, linear_head, metrics
from .dataset import CLASSIFICATION, EmbeddingDataset
from .linear_head import SIGMOID, SOFTMAX, DenseLinearHead, ScalarGaussianPrior


class TrainingError(RuntimeError):
    """Diverged or misconfigured training run."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 32
    mc_samples: int = 1
    kl_weight: object = "auto"  # float, or "auto" = 1 / batches per epoch
    seed: int = 0
    selection_metric: str = "uar"  # uar | spearman | loss
    sigma_init: float = 0.1
    eval_samples: int = 100  # MC draws for dev evaluation of bayes heads

    def __post_init__(self):
        if self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise TrainingError("bad learning_rate/momentum")
        if self.epochs < 1 or self.batch_size < 1 or self.mc_samples < 1:
            raise TrainingError("epochs, batch_size, mc_samples must be positive")
        if self.selection_metric not in ("uar", "spearman", "loss"):
            raise TrainingError(f"unknown selection metric {self.selection_metric!r}")
        if self.kl_weight != "auto" and float(self.kl_weight) < 0:
            raise TrainingError("kl_weight must be nonnegative or 'auto'")


@dataclass
class EpochEntry:
    train_loss: float
    data_term: float
    kl_term: float
    dev_metric: float


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    wall_seconds: float = 0.0

    def to_json_dict(self) -> dict:
        # wall_seconds deliberately excluded: report files must be
        # byte-identical across reruns with the same seed
        return {
            "best_epoch": self.best_epoch,
            "epochs": [
                {
                    "train_loss": e.train_loss,
                    "data_term": e.data_term,
                    "kl_term": e.kl_term,
                    "dev_metric": e.dev_metric,
                }
                for e in self.epochs
            ],
        }


def _link_for(dataset: EmbeddingDataset) -> str:
    return SOFTMAX if dataset.task_kind == CLASSIFICATION else SIGMOID


def _dev_outputs(head, dev: EmbeddingDataset, config: TrainConfig, epoch: int):
    if isinstance(head, bayes_head.GaussianVariationalHead):
        eval_rng = np.random.default_rng((config.seed, 7919, epoch))
        return bayes_head.predict_mean_batch(
            head, dev.features, config.eval_samples, eval_rng
        )
    _, out = linear_head.forward(head, dev.features)
    return out


def _dev_metric(head, dev: EmbeddingDataset, config: TrainConfig, epoch: int) -> float:
    out = _dev_outputs(head, dev, config, epoch)
    if config.selection_metric == "uar":
        return metrics.uar(dev.targets, out.argmax(axis=1), dev.num_outputs)
    if config.selection_metric == "spearman":
        _, mean_rho, _ = metrics.spearman_rho(out, dev.targets)
        return mean_rho
    if isinstance(head, bayes_head.GaussianVariationalHead):
        # loss selection uses the deterministic data fit at the posterior mean
        dense = DenseLinearHead(head.mu_w, head.mu_b, head.link)
        return -linear_head.loss(dense, dev.features, dev.targets)
    return -linear_head.loss(head, dev.features, dev.targets)


def train(head_kind: str, train_set: EmbeddingDataset, dev_set: EmbeddingDataset,
          config: TrainConfig, prior: ScalarGaussianPrior | None = None):
    """Run the full loop; returns (head from the best dev epoch, TrainReport)."""
    if head_kind not in ("linear", "bayes"):
        raise TrainingError(f"unknown head kind {head_kind!r}")
    if train_set.task_kind != dev_set.task_kind or train_set.num_features != dev_set.num_features:
        raise TrainingError("train/dev shape mismatch")
    if head_kind == "bayes" and prior is None:
        raise TrainingError("bayes training requires a prior")

    t0 = time.monotonic()
    rng = np.random.default_rng(config.seed)
    n, d, k = len(train_set), train_set.num_features, train_set.num_outputs
    link = _link_for(train_set)
    num_batches = math.ceil(n / config.batch_size)
    kl_weight = (
        1.0 / num_batches if config.kl_weight == "auto" else float(config.kl_weight)
    )

    if head_kind == "linear":
        params = {"weights": np.zeros((k, d)), "bias": np.zeros(k)}
    else:
        h0 = bayes_head.init_from_prior(d, k, link, prior, config.sigma_init, rng)
        params = {
            "mu_w": h0.mu_w.copy(),
            "rho_w": h0.rho_w.copy(),
            "mu_b": h0.mu_b.copy(),
            "rho_b": h0.rho_b.copy(),
        }
    velocity = {name: np.zeros_like(p) for name, p in params.items()}

    def current_head():
        if head_kind == "linear":
            return DenseLinearHead(params["weights"], params["bias"], link)
        return bayes_head.GaussianVariationalHead(
            mu_w=params["mu_w"], rho_w=params["rho_w"],
            mu_b=params["mu_b"], rho_b=params["rho_b"],
            link=link, prior=prior,
        )

    report = TrainReport()
    best_metric = -math.inf
    best_params = {name: p.copy() for name, p in params.items()}
    best_epoch = -1

    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        epoch_loss = epoch_data = epoch_kl = 0.0
        for bi in range(num_batches):
            idx = perm[bi * config.batch_size : (bi + 1) * config.batch_size]
            x, y = train_set.features[idx], train_set.targets[idx]
            head = current_head()
            if head_kind == "linear":
                value = linear_head.loss(head, x, y)
                dw, db = linear_head.loss_gradient(head, x, y)
                grads = {"weights": dw, "bias": db}
                data_term, kl_term = value, 0.0
            else:
                eps = [bayes_head.draw_epsilon(head, rng) for _ in range(config.mc_samples)]
                value, data_term, kl_term = bayes_head.elbo_loss(
                    head, x, y, kl_weight=kl_weight, epsilons=eps
                )
                grads = bayes_head.elbo_gradient(
                    head, x, y, kl_weight=kl_weight, epsilons=eps
                )
            if not math.isfinite(value):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {bi}"
                )
            for name in params:
                velocity[name] = config.momentum * velocity[name] - config.learning_rate * grads[name]
                params[name] = params[name] + velocity[name]
            epoch_loss += value / num_batches
            epoch_data += data_term / num_batches
            epoch_kl += kl_term / num_batches

        dev_metric = _dev_metric(current_head(), dev_set, config, epoch)
        report.epochs.append(EpochEntry(epoch_loss, epoch_data, epoch_kl, dev_metric))
        if dev_metric > best_metric:
            best_metric = dev_metric
            best_epoch = epoch
            best_params = {name: p.copy() for name, p in params.items()}

    for name in params:
        params[name] = best_params[name]
    report.best_epoch = best_epoch
    report.wall_seconds = time.monotonic() - t0
    return current_head(), report
