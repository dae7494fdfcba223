import math

import numpy as np
import pytest

from bayeshead import linear_head, trainer
from bayeshead.bayes_head import GaussianVariationalHead, softplus_inv
from bayeshead.dataset import SyntheticSpec, generate_synthetic, split_by_fraction
from bayeshead.linear_head import ScalarGaussianPrior
from bayeshead.uncertainty import (
    UncertaintyError,
    analyze,
    pdf_point,
    render_svg,
    save_curves,
    save_report,
)


class TestPdfPoint:
    def test_standard_normal_mode(self):
        assert pdf_point(0.0, 1.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-9)

    def test_one_std_away(self):
        mode = pdf_point(0.0, 1.0, 0.0)
        assert pdf_point(0.0, 1.0, 1.0) == pytest.approx(mode * math.exp(-0.5), abs=1e-12)
        assert pdf_point(0.0, 1.0, -1.0) == pytest.approx(mode * math.exp(-0.5), abs=1e-12)

    def test_narrow_peak(self):
        assert pdf_point(0.9, 0.05, 0.9) == pytest.approx(7.9788456, abs=1e-4)

    def test_symmetry_exact(self):
        for delta in (0.01, 0.3, 2.0):
            assert pdf_point(0.0, 0.2, delta) == pdf_point(0.0, 0.2, -delta)

    def test_integrates_to_one(self):
        mean, std = 0.3, 0.07
        grid = np.linspace(mean - 6 * std, mean + 6 * std, 2001)
        dens = [pdf_point(mean, std, x) for x in grid]
        assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-3)

    def test_rejects_bad_inputs(self):
        with pytest.raises(UncertaintyError):
            pdf_point(0.0, 0.0, 0.0)
        with pytest.raises(UncertaintyError):
            pdf_point(0.0, 1.0, float("nan"))


def degenerate_head(mu_w, mu_b, prior=None):
    mu_w = np.asarray(mu_w, dtype=np.float64)
    mu_b = np.asarray(mu_b, dtype=np.float64)
    return GaussianVariationalHead(
        mu_w, np.full_like(mu_w, -40.0), mu_b, np.full_like(mu_b, -40.0),
        "softmax", prior or ScalarGaussianPrior(0.0, 1.0),
    )


@pytest.fixture(scope="module")
def overlap_report():
    ds = generate_synthetic(SyntheticSpec("blobs", 1000, 16, 2, 1.5, 1.0, 0))
    tr, dv = split_by_fraction(ds, 0.3, 0)
    cfg = trainer.TrainConfig(epochs=100, learning_rate=1.0, seed=0)
    lhead, _ = trainer.train("linear", tr, dv, cfg)
    prior = linear_head.extract_prior(lhead)
    bhead, _ = trainer.train("bayes", tr, dv, cfg, prior=prior)
    return analyze(bhead, dv, num_samples=200, seed=0)


class TestAnalyze:
    def test_degenerate_posterior_confidences(self):
        head = degenerate_head([[3.0, -3.0], [-3.0, 3.0]], [0.0, 0.0])
        ds = generate_synthetic(SyntheticSpec("blobs", 20, 2, 2, 4.0, 0.3, 1))
        report = analyze(head, ds, num_samples=10, seed=2)
        all_conf = np.concatenate([report.correct_confidences, report.wrong_confidences])
        for i in range(len(ds)):
            _, det = linear_head.forward(
                linear_head.DenseLinearHead(head.mu_w, head.mu_b, "softmax"),
                ds.features[i],
            )
            assert np.any(np.abs(all_conf - det.max()) < 1e-9)

    def test_all_correct_is_single_sided(self):
        head = degenerate_head([[5.0, 0.0], [0.0, 5.0]], [0.0, 0.0])
        ds = generate_synthetic(SyntheticSpec("blobs", 20, 2, 2, 10.0, 0.1, 3))
        report = analyze(head, ds, num_samples=5, seed=4)
        assert report.single_sided
        assert len(report.wrong_confidences) == 0
        assert report.separation is None

    def test_partition_is_total(self, overlap_report):
        assert (
            len(overlap_report.correct_confidences)
            + len(overlap_report.wrong_confidences)
            == 300
        )

    def test_separation_and_variance_ratio(self, overlap_report):
        assert overlap_report.separation > 0
        assert overlap_report.variance_ratio > 1

    def test_pure_function_of_seed(self):
        head = degenerate_head([[1.0, -1.0], [-1.0, 1.0]], [0.1, -0.1])
        head = GaussianVariationalHead(
            head.mu_w, softplus_inv(np.full((2, 2), 0.5)),
            head.mu_b, softplus_inv(np.full(2, 0.5)), "softmax", head.prior,
        )
        ds = generate_synthetic(SyntheticSpec("blobs", 30, 2, 2, 1.0, 1.0, 5))
        r1 = analyze(head, ds, num_samples=20, seed=6)
        r2 = analyze(head, ds, num_samples=20, seed=6)
        assert np.array_equal(r1.correct_confidences, r2.correct_confidences)
        assert np.array_equal(r1.wrong_confidences, r2.wrong_confidences)

    def test_rejects_small_sample_count(self):
        head = degenerate_head([[1.0]], [0.0])
        ds = generate_synthetic(SyntheticSpec("blobs", 4, 1, 1, 0.0, 1.0, 0))
        with pytest.raises(UncertaintyError):
            analyze(head, ds, num_samples=1, seed=0)


class TestOutputs:
    def test_report_and_curves_files(self, overlap_report, tmp_path):
        save_report(overlap_report, tmp_path / "r.json")
        save_curves(overlap_report, tmp_path / "c.csv")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "set,x,density"
        assert len(lines) == 1 + 2 * 201

    def test_svg_render(self, overlap_report, tmp_path):
        render_svg(overlap_report, tmp_path / "r.svg")
        text = (tmp_path / "r.svg").read_text()
        assert text.startswith("<svg") and "polyline" in text
        assert "correct" in text and "wrong" in text
