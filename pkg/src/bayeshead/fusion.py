"""Prediction tables and combination strategies: late fusion, voting, averaging."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import trainer
from .dataset import EmbeddingDataset, concat_features

PROBABILITIES = "probabilities"
INTENSITIES = "intensities"

_ROW_SUM_TOL = 1e-6


class FusionError(ValueError):
    """Misaligned tables or invalid fusion weights."""


@dataclass(frozen=True)
class PredictionTable:
    """Per-example output rows (probabilities or intensities) keyed by id."""

    ids: tuple
    outputs: np.ndarray  # (n, k)
    kind: str
    source: str = ""

    def __post_init__(self):
        out = np.asarray(self.outputs, dtype=np.float64)
        if out.ndim != 2 or out.shape[0] != len(self.ids):
            raise FusionError("outputs must be (n, k) matching ids")
        if self.kind not in (PROBABILITIES, INTENSITIES):
            raise FusionError(f"unknown table kind {self.kind!r}")
        if not np.all(np.isfinite(out)):
            raise FusionError("non-finite outputs")
        if self.kind == PROBABILITIES:
            if out.size and np.max(np.abs(out.sum(axis=1) - 1.0)) > _ROW_SUM_TOL:
                raise FusionError("probability rows must sum to 1")
            if out.size and out.min() < 0:
                raise FusionError("negative probability")
        else:
            if out.size and (out.min() < 0 or out.max() > 1):
                raise FusionError("intensities must lie in [0,1]")
        if len(set(self.ids)) != len(self.ids):
            raise FusionError("duplicate ids in prediction table")
        out.flags.writeable = False
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "outputs", out)

    @property
    def k_out(self) -> int:
        return self.outputs.shape[1]

    def __len__(self):
        return len(self.ids)


@dataclass(frozen=True)
class FusionSpec:
    """Weighted table list for late fusion; at least one positive weight."""

    tables: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.tables) != len(self.weights) or not self.tables:
            raise FusionError("need equally many tables and weights")
        w = [float(x) for x in self.weights]
        if any(x < 0 for x in w):
            raise FusionError("weights must be nonnegative")
        if sum(w) <= 0:
            raise FusionError("all-zero weights")
        object.__setattr__(self, "tables", tuple(self.tables))
        object.__setattr__(self, "weights", tuple(w))


def _align(tables) -> list:
    """Reorder every table to the first table's id order; id sets must match."""
    base = tables[0]
    aligned = [base]
    for t in tables[1:]:
        if t.k_out != base.k_out:
            raise FusionError("tables disagree on output dimension")
        if t.ids == base.ids:
            aligned.append(t)
            continue
        if set(t.ids) != set(base.ids):
            raise FusionError("tables do not cover identical id sets")
        pos = {rid: i for i, rid in enumerate(t.ids)}
        order = [pos[rid] for rid in base.ids]
        aligned.append(
            PredictionTable(base.ids, t.outputs[order], t.kind, t.source)
        )
    return aligned


def late_fuse(spec: FusionSpec) -> PredictionTable:
    """Weighted sum of probability rows, stored renormalized by the weight sum."""
    tables = _align(spec.tables)
    total = np.zeros_like(tables[0].outputs)
    for t, w in zip(tables, spec.weights):
        total = total + w * t.outputs
    fused = total / sum(spec.weights)
    source = "late_fuse(" + ",".join(
        f"{t.source or 'table'}*{w:g}" for t, w in zip(tables, spec.weights)
    ) + ")"
    return PredictionTable(tables[0].ids, fused, tables[0].kind, source)


def majority_vote(tables) -> PredictionTable:
    """Most frequent argmax per example; ties go to the highest summed
    probability among tied classes, then the lowest class index. Rows are
    indicator vectors of the winner."""
    if len(tables) < 2:
        raise FusionError("majority vote needs at least 2 tables")
    tables = _align(list(tables))
    n, k = tables[0].outputs.shape
    votes = np.stack([t.outputs.argmax(axis=1) for t in tables])  # (T, n)
    summed = np.sum([t.outputs for t in tables], axis=0)  # (n, k)
    out = np.zeros((n, k))
    for i in range(n):
        counts = np.bincount(votes[:, i], minlength=k)
        top = counts.max()
        tied = np.flatnonzero(counts == top)
        if len(tied) > 1:
            best = summed[i, tied].max()
            tied = tied[summed[i, tied] == best]
        out[i, tied[0]] = 1.0
    return PredictionTable(
        tables[0].ids, out, PROBABILITIES, f"majority_vote({len(tables)})"
    )


def average_intensities(tables) -> PredictionTable:
    """Elementwise mean of aligned regression tables, in table-index order."""
    if len(tables) < 2:
        raise FusionError("averaging needs at least 2 tables")
    tables = _align(list(tables))
    if any(t.kind != INTENSITIES for t in tables):
        raise FusionError("average_intensities expects intensity tables")
    acc = np.zeros_like(tables[0].outputs)
    for t in tables:
        acc = acc + t.outputs
    return PredictionTable(
        tables[0].ids, acc / len(tables), INTENSITIES,
        f"average_intensities({len(tables)})",
    )


def early_fuse_train(train_a: EmbeddingDataset, train_b: EmbeddingDataset,
                     dev_a: EmbeddingDataset, dev_b: EmbeddingDataset,
                     head_kind: str, config: trainer.TrainConfig, prior=None):
    """Concatenate the two modalities and train one head on the joint vector."""
    joint_train = concat_features(train_a, train_b)
    joint_dev = concat_features(dev_a, dev_b)
    return trainer.train(head_kind, joint_train, joint_dev, config, prior=prior)


def table_from_outputs(dataset: EmbeddingDataset, outputs, source: str) -> PredictionTable:
    kind = PROBABILITIES if dataset.task_kind == ds.CLASSIFICATION else INTENSITIES
    return PredictionTable(dataset.ids, np.asarray(outputs), kind, source)


def save_table(table: PredictionTable, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["id"] + [f"p{j}" for j in range(table.k_out)]
    lines = [",".join(header)]
    for i, rid in enumerate(table.ids):
        lines.append(",".join([rid] + [ds._fmt(v) for v in table.outputs[i]]))
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    manifest = {"kind": table.kind, "source": table.source}
    ds._manifest_path(path).write_bytes(
        (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8")
    )


def load_table(path) -> PredictionTable:
    path = Path(path)
    mpath = ds._manifest_path(path)
    if not mpath.exists():
        raise FusionError(f"missing manifest {mpath}")
    manifest = json.loads(mpath.read_text("utf-8"))
    lines = path.read_text("utf-8").splitlines()
    if not lines:
        raise FusionError("empty table file")
    k = len(lines[0].split(",")) - 1
    ids, rows = [], []
    for row, line in enumerate(lines[1:], start=1):
        cells = line.split(",")
        if len(cells) != k + 1:
            raise FusionError(f"row {row}: expected {k + 1} columns")
        ids.append(cells[0])
        rows.append([float(c) for c in cells[1:]])
    return PredictionTable(
        tuple(ids),
        np.asarray(rows, dtype=np.float64).reshape(len(ids), k),
        manifest["kind"],
        manifest.get("source", ""),
    )


def tune_fusion_weights(tables, weight_grids, dev_set: EmbeddingDataset):
    """Grid-search late-fusion weights, selecting the best dev UAR.

    weight_grids: one candidate list per table; returns (best weights tuple,
    best UAR, per-combination results)."""
    from itertools import product

    from . import metrics

    if len(tables) != len(weight_grids):
        raise FusionError("need one weight grid per table")
    results = []
    best = None
    for combo in product(*weight_grids):
        if sum(combo) <= 0:
            continue
        fused = late_fuse(FusionSpec(tuple(tables), tuple(combo)))
        # align fused rows to the dev set's ids
        pos = {rid: i for i, rid in enumerate(fused.ids)}
        try:
            order = [pos[rid] for rid in dev_set.ids]
        except KeyError as e:
            raise FusionError(f"table id {e.args[0]!r} missing from dev set") from None
        pred = fused.outputs[order].argmax(axis=1)
        score = metrics.uar(dev_set.targets, pred, dev_set.num_outputs)
        results.append({"weights": list(combo), "uar": score})
        if best is None or score > best[1]:
            best = (tuple(combo), score)
    if best is None:
        raise FusionError("no valid weight combination in the grid")
    return best[0], best[1], results
