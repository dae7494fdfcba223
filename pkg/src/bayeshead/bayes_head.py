"""Mean-field Gaussian variational linear head.

Each parameter has an independent N(mu, softplus(rho)^2) posterior against a
shared scalar Gaussian prior; sampling uses the reparameterization trick so
both the stochastic data term and the closed-form KL have analytic gradients
in (mu, rho).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linear_head import (
    SOFTMAX,
    DenseLinearHead,
    HeadError,
    ScalarGaussianPrior,
    forward,
    output_gradient,
    sigmoid,
)


def softplus(rho):
    """ln(1 + e^rho), overflow-safe for large |rho|."""
    return np.logaddexp(0.0, rho)


def softplus_inv(sigma):
    """rho with softplus(rho) = sigma; sigma must be positive."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise HeadError("softplus_inv needs sigma > 0")
    return np.where(sigma > 30, sigma, np.log(np.expm1(np.minimum(sigma, 30.0))))


@dataclass(frozen=True)
class GaussianVariationalHead:
    """Variational parameters (mu, rho) per weight/bias entry plus the prior."""

    mu_w: np.ndarray  # (k_out, d)
    rho_w: np.ndarray
    mu_b: np.ndarray  # (k_out,)
    rho_b: np.ndarray
    link: str
    prior: ScalarGaussianPrior
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        arrs = {}
        for name in ("mu_w", "rho_w", "mu_b", "rho_b"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(a)):
                raise HeadError(f"non-finite {name}")
            arrs[name] = a
        if arrs["mu_w"].shape != arrs["rho_w"].shape or arrs["mu_b"].shape != arrs["rho_b"].shape:
            raise HeadError("mu/rho shape mismatch")
        if arrs["mu_w"].ndim != 2 or arrs["mu_b"].shape != (arrs["mu_w"].shape[0],):
            raise HeadError("inconsistent weight/bias shapes")
        for name, a in arrs.items():
            object.__setattr__(self, name, a)

    @property
    def k_out(self) -> int:
        return self.mu_w.shape[0]

    @property
    def num_features(self) -> int:
        return self.mu_w.shape[1]

    @property
    def sigma_w(self) -> np.ndarray:
        return softplus(self.rho_w)

    @property
    def sigma_b(self) -> np.ndarray:
        return softplus(self.rho_b)


@dataclass(frozen=True)
class WeightSample:
    """One reparameterized draw: w = mu + softplus(rho) * epsilon."""

    w: np.ndarray
    b: np.ndarray
    epsilon_w: np.ndarray
    epsilon_b: np.ndarray

    def as_dense(self, link: str) -> DenseLinearHead:
        return DenseLinearHead(weights=self.w, bias=self.b, link=link)


def draw_epsilon(head: GaussianVariationalHead, rng: np.random.Generator):
    """Standard-normal draws, weights first then biases (fixed order)."""
    return (
        rng.standard_normal(head.mu_w.shape),
        rng.standard_normal(head.mu_b.shape),
    )


def sample_weights(head: GaussianVariationalHead, rng: np.random.Generator,
                   epsilon=None) -> WeightSample:
    """Draw one weight sample; deterministic given the rng state or epsilon."""
    eps_w, eps_b = draw_epsilon(head, rng) if epsilon is None else epsilon
    return WeightSample(
        w=head.mu_w + head.sigma_w * eps_w,
        b=head.mu_b + head.sigma_b * eps_b,
        epsilon_w=eps_w,
        epsilon_b=eps_b,
    )


def _kl_terms(mu, sigma, prior: ScalarGaussianPrior):
    return (
        np.log(prior.s0 / sigma)
        + (sigma**2 + (mu - prior.m0) ** 2) / (2.0 * prior.s0**2)
        - 0.5
    )


def kl_to_prior(head: GaussianVariationalHead) -> float:
    """Closed-form KL(q || prior) summed over every weight and bias parameter."""
    return float(
        np.sum(_kl_terms(head.mu_w, head.sigma_w, head.prior))
        + np.sum(_kl_terms(head.mu_b, head.sigma_b, head.prior))
    )


def _task_loss_and_dz(head: GaussianVariationalHead, sample: WeightSample,
                      features, targets):
    dense = sample.as_dense(head.link)
    z, out = forward(dense, features)
    if head.link == SOFTMAX:
        y = np.asarray(targets, dtype=np.int64).reshape(-1)
        zs = z - np.max(z, axis=1, keepdims=True)
        logp = zs - np.log(np.sum(np.exp(zs), axis=1, keepdims=True))
        value = float(-np.mean(logp[np.arange(len(y)), y]))
    else:
        y = np.asarray(targets, dtype=np.float64).reshape(z.shape[0], -1)
        value = float(np.mean((out - y) ** 2))
    dz = output_gradient(dense, z, out, targets)
    return value, dz


def _elbo(head: GaussianVariationalHead, features, targets, epsilons,
          kl_weight: float, want_grad: bool):
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[0] == 0:
        raise HeadError("empty batch")
    data_term = 0.0
    grads = None
    if want_grad:
        grads = {
            "mu_w": np.zeros_like(head.mu_w),
            "rho_w": np.zeros_like(head.rho_w),
            "mu_b": np.zeros_like(head.mu_b),
            "rho_b": np.zeros_like(head.rho_b),
        }
    s = len(epsilons)
    for eps in epsilons:
        sample = sample_weights(head, rng=None, epsilon=eps)
        value, dz = _task_loss_and_dz(head, sample, features, targets)
        data_term += value / s
        if want_grad:
            dw = dz.T @ features
            db = dz.sum(axis=0)
            grads["mu_w"] += dw / s
            grads["mu_b"] += db / s
            grads["rho_w"] += dw * sample.epsilon_w * sigmoid(head.rho_w) / s
            grads["rho_b"] += db * sample.epsilon_b * sigmoid(head.rho_b) / s
    kl_term = kl_to_prior(head)
    if want_grad and kl_weight != 0.0:
        p = head.prior
        grads["mu_w"] += kl_weight * (head.mu_w - p.m0) / p.s0**2
        grads["mu_b"] += kl_weight * (head.mu_b - p.m0) / p.s0**2
        sw, sb = head.sigma_w, head.sigma_b
        grads["rho_w"] += kl_weight * (sw / p.s0**2 - 1.0 / sw) * sigmoid(head.rho_w)
        grads["rho_b"] += kl_weight * (sb / p.s0**2 - 1.0 / sb) * sigmoid(head.rho_b)
    total = data_term + kl_weight * kl_term
    return total, data_term, kl_term, grads


def _resolve_epsilons(head, mc_samples, rng, epsilons):
    if epsilons is not None:
        return list(epsilons)
    if mc_samples < 1:
        raise HeadError("mc_samples must be >= 1")
    return [draw_epsilon(head, rng) for _ in range(mc_samples)]


def elbo_loss(head: GaussianVariationalHead, features, targets, mc_samples=1,
              kl_weight=1.0, rng=None, epsilons=None):
    """Negative-ELBO value: (total, data_term, kl_term).

    data_term averages the task loss over mc_samples reparameterized draws;
    pass `epsilons` explicitly to freeze the draws (gradient checking).
    """
    eps = _resolve_epsilons(head, mc_samples, rng, epsilons)
    total, data_term, kl_term, _ = _elbo(head, features, targets, eps, kl_weight, False)
    return total, data_term, kl_term


def elbo_gradient(head: GaussianVariationalHead, features, targets, mc_samples=1,
                  kl_weight=1.0, rng=None, epsilons=None):
    """Analytic gradients of elbo_loss total w.r.t. mu_w, rho_w, mu_b, rho_b."""
    eps = _resolve_epsilons(head, mc_samples, rng, epsilons)
    _, _, _, grads = _elbo(head, features, targets, eps, kl_weight, True)
    return grads


def init_from_prior(d: int, k_out: int, link: str, prior: ScalarGaussianPrior,
                    sigma_init: float, rng: np.random.Generator) -> GaussianVariationalHead:
    """mu = m0 + U(-0.01, 0.01) jitter; rho chosen so every sigma = sigma_init."""
    if d < 1 or k_out < 1:
        raise HeadError("invalid dimensions")
    if sigma_init <= 0:
        raise HeadError("sigma_init must be positive")
    rho0 = float(softplus_inv(sigma_init))
    return GaussianVariationalHead(
        mu_w=prior.m0 + rng.uniform(-0.01, 0.01, size=(k_out, d)),
        rho_w=np.full((k_out, d), rho0),
        mu_b=prior.m0 + rng.uniform(-0.01, 0.01, size=k_out),
        rho_b=np.full(k_out, rho0),
        link=link,
        prior=prior,
    )


def predict_mean(head: GaussianVariationalHead, x, num_samples: int,
                 rng: np.random.Generator):
    """MC prediction for one input: (mean over draws, all per-draw outputs)."""
    if num_samples < 1:
        raise HeadError("num_samples must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    sampled = np.empty((num_samples, head.k_out))
    for s in range(num_samples):
        sample = sample_weights(head, rng)
        _, out = forward(sample.as_dense(head.link), x)
        sampled[s] = out
    # sequential reduction in draw order keeps results bit-reproducible
    mean = np.zeros(head.k_out)
    for s in range(num_samples):
        mean += sampled[s]
    return mean / num_samples, sampled


def predict_mean_batch(head: GaussianVariationalHead, features, num_samples: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Mean MC outputs for a whole (n, d) batch, one shared draw per sample."""
    if num_samples < 1:
        raise HeadError("num_samples must be >= 1")
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    acc = np.zeros((features.shape[0], head.k_out))
    for _ in range(num_samples):
        sample = sample_weights(head, rng)
        _, out = forward(sample.as_dense(head.link), features)
        acc += out
    return acc / num_samples


def save_checkpoint(head: GaussianVariationalHead, path, seed=None) -> None:
    payload = {
        "type": "bayes_linear",
        "link": head.link,
        "d": head.num_features,
        "k_out": head.k_out,
        "mu_w": head.mu_w.ravel().tolist(),
        "rho_w": head.rho_w.ravel().tolist(),
        "mu_b": head.mu_b.tolist(),
        "rho_b": head.rho_b.tolist(),
        "prior": {"m0": head.prior.m0, "s0": head.prior.s0},
        "seed": seed,
        "trained_on": head.provenance,
    }
    Path(path).write_bytes(
        (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")
    )


def load_checkpoint(path) -> GaussianVariationalHead:
    payload = json.loads(Path(path).read_text("utf-8"))
    if payload.get("type") != "bayes_linear":
        raise HeadError(f"not a bayes_linear checkpoint: {path}")
    d, k = int(payload["d"]), int(payload["k_out"])
    return GaussianVariationalHead(
        mu_w=np.asarray(payload["mu_w"], dtype=np.float64).reshape(k, d),
        rho_w=np.asarray(payload["rho_w"], dtype=np.float64).reshape(k, d),
        mu_b=np.asarray(payload["mu_b"], dtype=np.float64),
        rho_b=np.asarray(payload["rho_b"], dtype=np.float64),
        link=payload["link"],
        prior=ScalarGaussianPrior(payload["prior"]["m0"], payload["prior"]["s0"]),
        provenance=dict(payload.get("trained_on", {})),
    )
