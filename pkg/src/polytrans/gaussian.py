"""Diagonal Gaussians over latent vectors.

Means and log-variances are :class:`~polytrans.ndtensor.Tensor` objects whose
last axis is the latent dimension; any leading axes are batch axes and the KL
helpers return one value per batch row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ndtensor as nd
from .errors import ClampViolation, DimMismatch

LOG_VAR_MIN = -20.0
LOG_VAR_MAX = 20.0
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DiagGaussian:
    mean: nd.Tensor
    log_var: nd.Tensor

    def __post_init__(self):
        if self.mean.shape != self.log_var.shape:
            raise DimMismatch(f"mean {self.mean.shape} vs log_var {self.log_var.shape}")

    @classmethod
    def make(cls, mean, log_var, strict: bool = False) -> "DiagGaussian":
        """Build a Gaussian, clamping log-variances into [-20, 20].

        In strict mode an out-of-range log-variance raises instead.
        """
        mean, log_var = nd.as_tensor(mean), nd.as_tensor(log_var)
        if mean.shape != log_var.shape:
            raise DimMismatch(f"mean {mean.shape} vs log_var {log_var.shape}")
        lv = log_var.data
        if np.any(lv < LOG_VAR_MIN) or np.any(lv > LOG_VAR_MAX):
            if strict:
                raise ClampViolation("log_var outside [-20, 20]")
            log_var = nd.clamp(log_var, LOG_VAR_MIN, LOG_VAR_MAX)
        return cls(mean, log_var)

    @classmethod
    def standard(cls, dim: int, batch: tuple[int, ...] = ()) -> "DiagGaussian":
        shape = tuple(batch) + (dim,)
        return cls(nd.zeros(shape), nd.zeros(shape))

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    @property
    def variance(self) -> np.ndarray:
        return np.exp(self.log_var.data)


def reparameterize(g: DiagGaussian, noise) -> nd.Tensor:
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape[-1:] != (g.dim,) or (noise.ndim == g.mean.ndim and noise.shape != g.mean.shape):
        raise DimMismatch(f"noise {noise.shape} for gaussian {g.mean.shape}")
    return g.mean + nd.exp(g.log_var * 0.5) * noise


def kl_to_standard(g: DiagGaussian) -> nd.Tensor:
    """KL(g || N(0, I)) = 1/2 sum(mu^2 + sigma^2 - 1 - log sigma^2)."""
    terms = nd.square(g.mean) + nd.exp(g.log_var) - 1.0 - g.log_var
    return nd.sum_(terms, axis=-1) * 0.5


def kl_between(q: DiagGaussian, r: DiagGaussian) -> nd.Tensor:
    """Closed-form KL(q || r) for diagonal Gaussians."""
    if q.mean.shape[-1] != r.mean.shape[-1]:
        raise DimMismatch(f"dims {q.dim} vs {r.dim}")
    inv_r = nd.exp(nd.neg(r.log_var))
    terms = (
        r.log_var
        - q.log_var
        + (nd.exp(q.log_var) + nd.square(q.mean - r.mean)) * inv_r
        - 1.0
    )
    return nd.sum_(terms, axis=-1) * 0.5


def log_prob(g: DiagGaussian, x) -> float | np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != g.dim:
        raise DimMismatch(f"point dim {x.shape[-1]} vs {g.dim}")
    mu, lv = g.mean.data, g.log_var.data
    return -0.5 * np.sum(LOG_2PI + lv + (x - mu) ** 2 / np.exp(lv), axis=-1)


def sample(g: DiagGaussian, n: int, rng: np.random.Generator) -> np.ndarray:
    eps = rng.standard_normal((n,) + g.mean.shape)
    return g.mean.data + np.exp(0.5 * g.log_var.data) * eps


def mc_kl(q: DiagGaussian, r: DiagGaussian, n: int, seed: int, return_stderr: bool = False):
    """Monte-Carlo estimate of KL(q || r) from ``n`` draws of q."""
    if q.dim != r.dim:
        raise DimMismatch(f"dims {q.dim} vs {r.dim}")
    if n < 1:
        raise ValueError("n must be >= 1")
    z = sample(q, n, np.random.default_rng(seed))
    diffs = log_prob(q, z) - log_prob(r, z)
    est = float(np.mean(diffs))
    if return_stderr:
        return est, float(np.std(diffs) / math.sqrt(n))
    return est
