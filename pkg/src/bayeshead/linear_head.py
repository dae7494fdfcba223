"""Deterministic linear head: forward, losses, analytic gradients, prior extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SOFTMAX = "softmax"
SIGMOID = "sigmoid"

_PRIOR_STD_FLOOR = 1e-6


class HeadError(ValueError):
    """Shape or link mismatches around prediction heads."""


def stable_softmax(z: np.ndarray) -> np.ndarray:
    """Softmax along the last axis with max-subtraction."""
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class DenseLinearHead:
    """Weight matrix + bias + link; the point-estimate model and prior source."""

    weights: np.ndarray  # (k_out, d)
    bias: np.ndarray  # (k_out,)
    link: str
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise HeadError(f"inconsistent shapes {w.shape} / {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise HeadError("non-finite parameters")
        if self.link not in (SOFTMAX, SIGMOID):
            raise HeadError(f"unknown link {self.link!r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def k_out(self) -> int:
        return self.weights.shape[0]

    @property
    def num_features(self) -> int:
        return self.weights.shape[1]


def forward(head: DenseLinearHead, x: np.ndarray):
    """Return (logits, link outputs) for one input vector or a (n, d) batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != head.num_features:
        raise HeadError(
            f"input dimension {x.shape[-1]} != head dimension {head.num_features}"
        )
    z = x @ head.weights.T + head.bias
    if head.link == SOFTMAX:
        return z, stable_softmax(z)
    return z, sigmoid(z)


def loss(head: DenseLinearHead, features: np.ndarray, targets: np.ndarray) -> float:
    """Mean NLL (softmax link) or mean squared error (sigmoid link) over the batch."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[0] == 0:
        raise HeadError("empty batch")
    z, out = forward(head, features)
    if head.link == SOFTMAX:
        targets = np.asarray(targets, dtype=np.int64).reshape(-1)
        # log-softmax for numerical safety
        zs = z - np.max(z, axis=1, keepdims=True)
        logp = zs - np.log(np.sum(np.exp(zs), axis=1, keepdims=True))
        return float(-np.mean(logp[np.arange(len(targets)), targets]))
    targets = np.asarray(targets, dtype=np.float64).reshape(features.shape[0], -1)
    if targets.shape[1] != head.k_out:
        raise HeadError("target dimension mismatch")
    return float(np.mean((out - targets) ** 2))


def output_gradient(head: DenseLinearHead, z: np.ndarray, out: np.ndarray,
                    targets: np.ndarray) -> np.ndarray:
    """Per-example dLoss/dlogits, already carrying the batch-mean 1/n factor."""
    n = z.shape[0]
    if head.link == SOFTMAX:
        targets = np.asarray(targets, dtype=np.int64).reshape(-1)
        dz = out.copy()
        dz[np.arange(n), targets] -= 1.0
        return dz / n
    targets = np.asarray(targets, dtype=np.float64).reshape(n, -1)
    m = targets.shape[1]
    return 2.0 * (out - targets) * out * (1.0 - out) / (m * n)


def loss_gradient(head: DenseLinearHead, features: np.ndarray, targets: np.ndarray):
    """Analytic (dW, db) of loss() over the batch."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[0] == 0:
        raise HeadError("empty batch")
    z, out = forward(head, features)
    dz = output_gradient(head, z, out, targets)
    return dz.T @ features, dz.sum(axis=0)


@dataclass(frozen=True)
class ScalarGaussianPrior:
    """Shared scalar N(m0, s0^2) prior over every variational parameter."""

    m0: float
    s0: float

    def __post_init__(self):
        if not (np.isfinite(self.m0) and np.isfinite(self.s0) and self.s0 > 0):
            raise HeadError("prior needs finite m0 and s0 > 0")


def extract_prior(head: DenseLinearHead) -> ScalarGaussianPrior:
    """Pooled mean / sample std (ddof=1) of all weight and bias entries."""
    pooled = np.concatenate([head.weights.ravel(), head.bias.ravel()])
    if pooled.size < 2:
        raise HeadError("need at least 2 parameters to extract a prior")
    s0 = float(np.std(pooled, ddof=1))
    return ScalarGaussianPrior(float(np.mean(pooled)), max(s0, _PRIOR_STD_FLOOR))


def save_checkpoint(head: DenseLinearHead, path) -> None:
    payload = {
        "type": "dense_linear",
        "link": head.link,
        "d": head.num_features,
        "k_out": head.k_out,
        "weights": head.weights.ravel().tolist(),
        "bias": head.bias.tolist(),
        "trained_on": head.provenance,
    }
    Path(path).write_bytes(
        (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")
    )


def load_checkpoint(path) -> DenseLinearHead:
    payload = json.loads(Path(path).read_text("utf-8"))
    if payload.get("type") != "dense_linear":
        raise HeadError(f"not a dense_linear checkpoint: {path}")
    d, k = int(payload["d"]), int(payload["k_out"])
    return DenseLinearHead(
        weights=np.asarray(payload["weights"], dtype=np.float64).reshape(k, d),
        bias=np.asarray(payload["bias"], dtype=np.float64),
        link=payload["link"],
        provenance=dict(payload.get("trained_on", {})),
    )
