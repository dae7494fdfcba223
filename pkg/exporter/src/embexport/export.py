"""Run a frozen encoder over an input manifest and emit a dataset file pair.

The output format (CSV with a JSON manifest sidecar, 9-significant-digit
reals) matches the embedding-dataset toolkit's file interface exactly, so
exported files load there without modification.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import EncoderError, build_encoder

MEAN = "mean"
SUMMARY = "summary"


class ExportError(ValueError):
    """Invalid export jobs or inputs."""


@dataclass(frozen=True)
class ExportJob:
    """One export run: inputs, encoder choice, pooling, layer, output path."""

    items: tuple  # dicts: {"id", "text" | "path", "label"}
    encoder: str
    pooling: str = MEAN
    layer: int = 0
    dim: int = 64  # built-in encoders only
    task: str = "classification"
    class_names: tuple = ()
    num_outputs: int = 0  # regression only

    def __post_init__(self):
        if self.pooling not in (MEAN, SUMMARY):
            raise ExportError(f"unknown pooling {self.pooling!r}")
        if self.task not in ("classification", "regression"):
            raise ExportError(f"unknown task {self.task!r}")
        if self.task == "classification" and not self.class_names:
            raise ExportError("classification jobs need class_names")
        if self.task == "regression" and self.num_outputs < 1:
            raise ExportError("regression jobs need num_outputs >= 1")
        if not self.items:
            raise ExportError("no input items")
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "class_names", tuple(self.class_names))


def load_job(path) -> ExportJob:
    payload = json.loads(Path(path).read_text("utf-8"))
    return ExportJob(
        items=tuple(payload["items"]),
        encoder=payload["encoder"],
        pooling=payload.get("pooling", MEAN),
        layer=int(payload.get("layer", 0)),
        dim=int(payload.get("dim", 64)),
        task=payload.get("task", "classification"),
        class_names=tuple(payload.get("class_names", ())),
        num_outputs=int(payload.get("num_outputs", 0)),
    )


def _pool(stack: np.ndarray, pooling: str) -> np.ndarray:
    if pooling == SUMMARY:
        return stack[0]
    return stack.mean(axis=0)


def _target_cells(job: ExportJob, item: dict) -> list:
    label = item.get("label")
    if job.task == "classification":
        if label not in job.class_names:
            raise ExportError(
                f"item {item.get('id')!r}: label {label!r} not in class_names"
            )
        return [str(job.class_names.index(label))]
    values = np.asarray(label, dtype=np.float64).reshape(-1)
    if values.shape != (job.num_outputs,):
        raise ExportError(f"item {item.get('id')!r}: expected {job.num_outputs} targets")
    if values.min() < 0 or values.max() > 1:
        raise ExportError(f"item {item.get('id')!r}: targets must lie in [0,1]")
    return ["%.9g" % v for v in values]


def run_export(job: ExportJob, out_path) -> Path:
    """Encode every item in manifest order and write <out>.csv + manifest."""
    encoder = build_encoder(job.encoder, job.layer, job.dim)
    rows = []
    dim = None
    for i, item in enumerate(job.items):
        rid = item.get("id", f"item{i:05d}")
        try:
            stack = encoder.encode(item)
        except EncoderError as e:
            raise ExportError(f"item {rid!r}: {e}") from None
        vec = _pool(np.asarray(stack, dtype=np.float64), job.pooling)
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise ExportError(f"item {rid!r}: inconsistent embedding dimension")
        rows.append((rid, vec, _target_cells(job, item)))

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if job.task == "classification":
        header = ["id"] + [f"f{j}" for j in range(dim)] + ["y"]
    else:
        header = ["id"] + [f"f{j}" for j in range(dim)] + [
            f"y{m}" for m in range(job.num_outputs)
        ]
    lines = [",".join(header)]
    for rid, vec, targets in rows:
        lines.append(",".join([rid] + ["%.9g" % v for v in vec] + targets))
    out_path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))

    manifest = {
        "task": job.task,
        "num_features": dim,
        "num_outputs": len(job.class_names) if job.task == "classification" else job.num_outputs,
        "provenance": {
            "encoder": job.encoder,
            "pooling": job.pooling,
            "source_layer": str(job.layer),
        },
    }
    if job.task == "classification":
        manifest["class_names"] = list(job.class_names)
    mpath = out_path.with_name(out_path.stem + ".manifest.json")
    mpath.write_bytes(
        (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8")
    )
    return out_path
