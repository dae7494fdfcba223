"""Monte-Carlo confidence analysis: correct-vs-wrong partition and Gaussian fits."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bayes_head
from .dataset import CLASSIFICATION, EmbeddingDataset

_STD_FLOOR = 1e-6
_GRID_POINTS = 201


class UncertaintyError(ValueError):
    """Unsupported head/dataset combinations for the confidence analysis."""


def pdf_point(mean: float, std: float, x: float) -> float:
    """Normal density N(mean, std^2) at x."""
    if std <= 0:
        raise UncertaintyError("std must be positive")
    if not math.isfinite(x):
        raise UncertaintyError("non-finite evaluation point")
    return math.exp(-((x - mean) ** 2) / (2.0 * std**2)) / (std * math.sqrt(2.0 * math.pi))


@dataclass(frozen=True)
class GaussianFit:
    mean: float
    std: float  # sample std (ddof=1), floored at _STD_FLOOR

    def curve(self, grid: np.ndarray) -> np.ndarray:
        return np.array([pdf_point(self.mean, self.std, x) for x in grid])


@dataclass
class PredictionDistribution:
    sampled_outputs: np.ndarray  # (S, k)
    mean_outputs: np.ndarray  # (k,)
    predicted_class: int
    confidence: float


@dataclass
class UncertaintyReport:
    num_samples: int
    correct_confidences: np.ndarray
    wrong_confidences: np.ndarray
    grid: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.0, _GRID_POINTS))
    correct_fit: GaussianFit | None = None
    wrong_fit: GaussianFit | None = None
    separation: float | None = None  # mean_correct - mean_wrong
    variance_ratio: float | None = None  # var_wrong / var_correct
    single_sided: bool = False

    def to_json_dict(self) -> dict:
        d = {
            "num_samples": self.num_samples,
            "num_correct": int(len(self.correct_confidences)),
            "num_wrong": int(len(self.wrong_confidences)),
            "single_sided": self.single_sided,
            "correct_confidences": self.correct_confidences.tolist(),
            "wrong_confidences": self.wrong_confidences.tolist(),
        }
        if not self.single_sided:
            d.update(
                correct_fit={"mean": self.correct_fit.mean, "std": self.correct_fit.std},
                wrong_fit={"mean": self.wrong_fit.mean, "std": self.wrong_fit.std},
                separation=self.separation,
                variance_ratio=self.variance_ratio,
            )
        return d


def _fit(confidences: np.ndarray) -> GaussianFit:
    std = float(np.std(confidences, ddof=1)) if len(confidences) > 1 else 0.0
    return GaussianFit(float(np.mean(confidences)), max(std, _STD_FLOOR))


def predict_distribution(head, x, num_samples: int, rng) -> PredictionDistribution:
    mean, sampled = bayes_head.predict_mean(head, x, num_samples, rng)
    predicted = int(mean.argmax())
    return PredictionDistribution(sampled, mean, predicted, float(mean[predicted]))


def analyze(head, dataset: EmbeddingDataset, num_samples: int = 500,
            seed: int = 0) -> UncertaintyReport:
    """Partition MC confidences by correctness and fit a Gaussian to each side.

    Per-example RNGs derive from (seed, example index), so results are a pure
    function of (head, dataset, num_samples, seed) regardless of evaluation
    order.
    """
    if num_samples < 2:
        raise UncertaintyError("num_samples must be >= 2")
    if dataset.task_kind != CLASSIFICATION:
        raise UncertaintyError("uncertainty analysis supports classification only")
    correct, wrong = [], []
    for i in range(len(dataset)):
        rng = np.random.default_rng((seed, i))
        dist = predict_distribution(head, dataset.features[i], num_samples, rng)
        (correct if dist.predicted_class == int(dataset.targets[i]) else wrong).append(
            dist.confidence
        )
    report = UncertaintyReport(
        num_samples=num_samples,
        correct_confidences=np.asarray(correct),
        wrong_confidences=np.asarray(wrong),
    )
    if not correct or not wrong:
        report.single_sided = True
        return report
    report.correct_fit = _fit(report.correct_confidences)
    report.wrong_fit = _fit(report.wrong_confidences)
    report.separation = report.correct_fit.mean - report.wrong_fit.mean
    report.variance_ratio = (report.wrong_fit.std / report.correct_fit.std) ** 2
    return report


def save_report(report: UncertaintyReport, path) -> None:
    Path(path).write_bytes(
        (json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n").encode("utf-8")
    )


def save_curves(report: UncertaintyReport, path) -> None:
    """CSV `set,x,density` over the report grid; requires a two-sided report."""
    if report.single_sided:
        raise UncertaintyError("single-sided report has no density curves")
    lines = ["set,x,density"]
    for name, fit in (("correct", report.correct_fit), ("wrong", report.wrong_fit)):
        for x, y in zip(report.grid, fit.curve(report.grid)):
            lines.append(f"{name},{x:.9g},{y:.9g}")
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def render_svg(report: UncertaintyReport, path, width: int = 640, height: int = 400) -> None:
    """Self-contained SVG of both density curves with a small legend."""
    if report.single_sided:
        raise UncertaintyError("single-sided report has no density curves")
    grid = report.grid
    curves = {
        "correct": (report.correct_fit.curve(grid), "#2a7"),
        "wrong": (report.wrong_fit.curve(grid), "#c33"),
    }
    ymax = max(c.max() for c, _ in curves.values()) or 1.0
    pad = 40
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
    ]
    for i, (name, (curve, color)) in enumerate(curves.items()):
        pts = " ".join(
            f"{pad + x * (width - 2 * pad):.2f},"
            f"{height - pad - (y / ymax) * (height - 2 * pad):.2f}"
            for x, y in zip(grid, curve)
        )
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = pad + 18 * i
        parts.append(
            f'<rect x="{width - pad - 110}" y="{ly}" width="12" height="12" fill="{color}"/>'
            f'<text x="{width - pad - 92}" y="{ly + 11}" font-size="13">{name}</text>'
        )
    parts.append(
        f'<text x="{width // 2}" y="{height - 8}" font-size="13" text-anchor="middle">confidence</text>'
    )
    parts.append("</svg>")
    Path(path).write_bytes(("\n".join(parts) + "\n").encode("utf-8"))
