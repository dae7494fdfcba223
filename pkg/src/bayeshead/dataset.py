"""Embedding datasets: data model, CSV+manifest I/O, synthesis, label merging."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CLASSIFICATION = "classification"
REGRESSION = "regression"

MERGED_CLASS_NAMES = ("no_affil", "yes_affil", "no_presta", "yes_presta")

# 9 significant digits; parsing then re-formatting is a fixed point.
_FLOAT_FMT = "%.9g"


class DatasetError(ValueError):
    """Raised for malformed dataset files or invariant violations."""


def _fmt(x: float) -> str:
    return _FLOAT_FMT % x


@dataclass(frozen=True)
class EmbeddingDataset:
    """Fixed-dimension feature vectors with class labels or intensity targets."""

    task_kind: str
    num_features: int
    num_outputs: int
    ids: tuple
    features: np.ndarray  # (n, d) float64
    targets: np.ndarray  # (n,) int for classification, (n, M) float for regression
    class_names: tuple = ()
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task_kind not in (CLASSIFICATION, REGRESSION):
            raise DatasetError(f"unknown task kind {self.task_kind!r}")
        if self.num_features < 0 or self.num_outputs < 1:
            raise DatasetError("non-positive dimensions")
        feats = np.asarray(self.features, dtype=np.float64).reshape(
            len(self.ids), self.num_features
        )
        if not np.all(np.isfinite(feats)):
            bad = int(np.argwhere(~np.isfinite(feats).all(axis=1))[0, 0])
            raise DatasetError(f"row {bad}: non-finite feature")
        if self.task_kind == CLASSIFICATION:
            tgt = np.asarray(self.targets, dtype=np.int64).reshape(len(self.ids))
            if tgt.size and (tgt.min() < 0 or tgt.max() >= self.num_outputs):
                bad = int(np.argwhere((tgt < 0) | (tgt >= self.num_outputs))[0, 0])
                raise DatasetError(f"row {bad}: class index out of range")
            if self.class_names and len(self.class_names) != self.num_outputs:
                raise DatasetError("class_names length != num_outputs")
        else:
            tgt = np.asarray(self.targets, dtype=np.float64).reshape(
                len(self.ids), self.num_outputs
            )
            if tgt.size and (not np.all(np.isfinite(tgt)) or tgt.min() < 0 or tgt.max() > 1):
                bad = int(
                    np.argwhere(
                        ~(np.isfinite(tgt) & (tgt >= 0) & (tgt <= 1)).all(axis=1)
                    )[0, 0]
                )
                raise DatasetError(f"row {bad}: target out of [0,1]")
        if len(set(self.ids)) != len(self.ids):
            seen = set()
            for i, rid in enumerate(self.ids):
                if rid in seen:
                    raise DatasetError(f"row {i}: duplicate id {rid!r}")
                seen.add(rid)
        feats.flags.writeable = False
        tgt.flags.writeable = False
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "targets", tgt)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    def __len__(self):
        return len(self.ids)

    def subset(self, indices) -> "EmbeddingDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return EmbeddingDataset(
            task_kind=self.task_kind,
            num_features=self.num_features,
            num_outputs=self.num_outputs,
            ids=tuple(self.ids[i] for i in indices),
            features=self.features[indices].copy(),
            targets=self.targets[indices].copy(),
            class_names=self.class_names,
            provenance=dict(self.provenance),
        )


@dataclass(frozen=True)
class SyntheticSpec:
    """Seeded recipe for a synthetic dataset (gaussian blobs or planted regression)."""

    kind: str  # "blobs" | "planted_regression"
    num_examples: int
    num_features: int
    num_outputs: int
    class_separation: float = 0.0
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("blobs", "planted_regression"):
            raise DatasetError(f"unknown synthetic kind {self.kind!r}")
        if self.num_examples < self.num_outputs:
            raise DatasetError("num_examples must be >= num_outputs")
        if self.num_features < 1 or self.num_outputs < 1:
            raise DatasetError("non-positive dimensions")
        if self.class_separation < 0 or self.noise_std < 0:
            raise DatasetError("separation and noise_std must be nonnegative")
        if self.kind == "blobs" and self.num_features < self.num_outputs:
            raise DatasetError("blobs need num_features >= num_classes")


def _manifest_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".manifest.json")


def save_dataset(dataset: EmbeddingDataset, path) -> None:
    """Write <name>.csv plus <name>.manifest.json; deterministic bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = dataset.num_features
    if dataset.task_kind == CLASSIFICATION:
        header = ["id"] + [f"f{j}" for j in range(d)] + ["y"]
    else:
        header = (
            ["id"]
            + [f"f{j}" for j in range(d)]
            + [f"y{m}" for m in range(dataset.num_outputs)]
        )
    lines = [",".join(header)]
    for i, rid in enumerate(dataset.ids):
        cells = [rid] + [_fmt(v) for v in dataset.features[i]]
        if dataset.task_kind == CLASSIFICATION:
            cells.append(str(int(dataset.targets[i])))
        else:
            cells.extend(_fmt(v) for v in dataset.targets[i])
        lines.append(",".join(cells))
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))

    manifest = {
        "task": dataset.task_kind,
        "num_features": dataset.num_features,
        "num_outputs": dataset.num_outputs,
        "provenance": dataset.provenance,
    }
    if dataset.task_kind == CLASSIFICATION:
        manifest["class_names"] = list(dataset.class_names)
    _manifest_path(path).write_bytes(
        (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8")
    )


def load_dataset(path) -> EmbeddingDataset:
    """Read a CSV + manifest pair, validating every invariant with row numbers."""
    path = Path(path)
    mpath = _manifest_path(path)
    if not mpath.exists():
        raise DatasetError(f"missing manifest {mpath}")
    if not path.exists():
        raise DatasetError(f"missing dataset file {path}")
    manifest = json.loads(mpath.read_text("utf-8"))
    task = manifest.get("task")
    if task not in (CLASSIFICATION, REGRESSION):
        raise DatasetError(f"manifest: bad task {task!r}")
    d = int(manifest["num_features"])
    k = int(manifest["num_outputs"])
    n_target_cols = 1 if task == CLASSIFICATION else k

    lines = path.read_text("utf-8").splitlines()
    if not lines:
        raise DatasetError("empty dataset file (missing header)")
    expected_cols = 1 + d + n_target_cols
    ids, feats, tgts = [], [], []
    for row, line in enumerate(lines[1:], start=1):
        cells = line.split(",")
        if len(cells) != expected_cols:
            raise DatasetError(
                f"row {row}: expected {expected_cols} columns, got {len(cells)}"
            )
        ids.append(cells[0])
        try:
            fv = [float(c) for c in cells[1 : 1 + d]]
        except ValueError as e:
            raise DatasetError(f"row {row}: unparsable feature ({e})") from None
        if not all(np.isfinite(fv)):
            raise DatasetError(f"row {row}: non-finite feature")
        feats.append(fv)
        if task == CLASSIFICATION:
            try:
                y = int(cells[1 + d])
            except ValueError:
                raise DatasetError(f"row {row}: unparsable class index") from None
            if not 0 <= y < k:
                raise DatasetError(f"row {row}: class index out of range")
            tgts.append(y)
        else:
            y = [float(c) for c in cells[1 + d :]]
            if not all(np.isfinite(v) and 0 <= v <= 1 for v in y):
                raise DatasetError(f"row {row}: target out of [0,1]")
            tgts.append(y)
    seen = set()
    for row, rid in enumerate(ids, start=1):
        if rid in seen:
            raise DatasetError(f"row {row}: duplicate id {rid!r}")
        seen.add(rid)

    if task == CLASSIFICATION:
        targets = np.asarray(tgts, dtype=np.int64).reshape(len(ids))
    else:
        targets = np.asarray(tgts, dtype=np.float64).reshape(len(ids), k)
    return EmbeddingDataset(
        task_kind=task,
        num_features=d,
        num_outputs=k,
        ids=tuple(ids),
        features=np.asarray(feats, dtype=np.float64).reshape(len(ids), d),
        targets=targets,
        class_names=tuple(manifest.get("class_names", ())),
        provenance=dict(manifest.get("provenance", {})),
    )


def generate_synthetic(spec: SyntheticSpec) -> EmbeddingDataset:
    """Deterministically expand a SyntheticSpec into a dataset."""
    rng = np.random.default_rng(spec.seed)
    n, d = spec.num_examples, spec.num_features
    if spec.kind == "blobs":
        k = spec.num_outputs
        # balanced labels, counts differ by at most 1
        labels = np.arange(n) % k
        centers = np.zeros((k, d))
        centers[np.arange(k), np.arange(k)] = spec.class_separation
        feats = centers[labels] + spec.noise_std * rng.standard_normal((n, d))
        return EmbeddingDataset(
            task_kind=CLASSIFICATION,
            num_features=d,
            num_outputs=k,
            ids=tuple(f"ex{i:05d}" for i in range(n)),
            features=feats,
            targets=labels,
            class_names=tuple(f"class{c}" for c in range(k)),
            provenance={"synthetic": "blobs", "seed": spec.seed},
        )
    m = spec.num_outputs
    feats = rng.standard_normal((n, d))
    planted = rng.standard_normal((m, d)) / np.sqrt(d)
    bias = rng.standard_normal(m) * 0.1
    logits = feats @ planted.T + bias
    targets = 1.0 / (1.0 + np.exp(-logits))
    if spec.noise_std > 0:
        targets = targets + spec.noise_std * rng.standard_normal((n, m))
    targets = np.clip(targets, 0.0, 1.0)
    return EmbeddingDataset(
        task_kind=REGRESSION,
        num_features=d,
        num_outputs=m,
        ids=tuple(f"ex{i:05d}" for i in range(n)),
        features=feats,
        targets=targets,
        provenance={"synthetic": "planted_regression", "seed": spec.seed},
    )


def _require_aligned_ids(a: EmbeddingDataset, b: EmbeddingDataset) -> None:
    if a.ids != b.ids:
        raise DatasetError("datasets do not share identical ids in identical order")


def merge_binary_labels(a: EmbeddingDataset, b: EmbeddingDataset) -> EmbeddingDataset:
    """Combine two aligned binary label columns into one 4-class dataset.

    Dataset `a` carries the no/yes column, `b` the affil/presta column; the
    merged index is 2*b + a, giving classes no_affil, yes_affil, no_presta,
    yes_presta in that fixed order.
    """
    for ds, name in ((a, "a"), (b, "b")):
        if ds.task_kind != CLASSIFICATION or ds.num_outputs != 2:
            raise DatasetError(f"dataset {name} must be binary classification")
    _require_aligned_ids(a, b)
    if not np.array_equal(a.features, b.features):
        raise DatasetError("datasets do not share identical features")
    merged = 2 * b.targets + a.targets
    return EmbeddingDataset(
        task_kind=CLASSIFICATION,
        num_features=a.num_features,
        num_outputs=4,
        ids=a.ids,
        features=a.features.copy(),
        targets=merged,
        class_names=MERGED_CLASS_NAMES,
        provenance={**a.provenance, **b.provenance},
    )


def split_merged_labels(merged: EmbeddingDataset):
    """Invert merge_binary_labels: recover the (no/yes, affil/presta) columns."""
    if merged.task_kind != CLASSIFICATION or merged.num_outputs != 4:
        raise DatasetError("expected a 4-class merged dataset")

    def binary(names, targets):
        return EmbeddingDataset(
            task_kind=CLASSIFICATION,
            num_features=merged.num_features,
            num_outputs=2,
            ids=merged.ids,
            features=merged.features.copy(),
            targets=targets,
            class_names=names,
            provenance=dict(merged.provenance),
        )

    return (
        binary(("no", "yes"), merged.targets % 2),
        binary(("affil", "presta"), merged.targets // 2),
    )


def concat_features(a: EmbeddingDataset, b: EmbeddingDataset) -> EmbeddingDataset:
    """Early-fusion concatenation: a's features first, targets copied from a."""
    if a.task_kind != b.task_kind:
        raise DatasetError("task kinds differ")
    _require_aligned_ids(a, b)
    if not np.array_equal(a.targets, b.targets):
        raise DatasetError("targets differ between datasets")
    return EmbeddingDataset(
        task_kind=a.task_kind,
        num_features=a.num_features + b.num_features,
        num_outputs=a.num_outputs,
        ids=a.ids,
        features=np.hstack([a.features, b.features]),
        targets=a.targets.copy(),
        class_names=a.class_names,
        provenance={**a.provenance, **b.provenance},
    )


def split_by_fraction(dataset: EmbeddingDataset, dev_fraction: float, seed: int):
    """Seeded shuffle split into (train, dev); dev gets round(n * dev_fraction)."""
    if not 0 < dev_fraction < 1:
        raise DatasetError("dev_fraction must lie in (0,1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(dataset))
    n_dev = max(1, int(round(len(dataset) * dev_fraction)))
    dev_idx = np.sort(perm[:n_dev])
    train_idx = np.sort(perm[n_dev:])
    return dataset.subset(train_idx), dataset.subset(dev_idx)
