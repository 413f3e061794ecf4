"""Frechet distance between Gaussian fits of two image sets.

``fid_proxy`` uses raw flattened pixels as the feature space, so its values
are a pixel-space Frechet distance and are labelled FID-proxy everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["GaussianStats", "gaussian_stats", "frechet_distance", "fid_proxy"]

CLIP_EIG = -1e-8
FAIL_EIG = -1e-6
RIDGE = 1e-6


@dataclass
class GaussianStats:
    mean: np.ndarray
    covariance: np.ndarray


def gaussian_stats(samples):
    """Sample mean and unbiased covariance of a ``(n, d)`` feature array."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least 2 samples of shape (n, d)")
    mu = x.mean(axis=0)
    xc = x - mu
    cov = xc.T @ xc / (x.shape[0] - 1)
    return GaussianStats(mu, cov)


def _psd_sqrt(a, what):
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    if w.min(initial=0.0) < FAIL_EIG:
        raise ValueError(f"{what} has eigenvalue {w.min():.3e}; not positive semidefinite")
    w = np.where(w < 0, 0.0, w)
    return (v * np.sqrt(w)) @ v.T, w


def frechet_distance(a, b):
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}).

    The trace of the square root is taken as tr sqrt(S_a^{1/2} S_b S_a^{1/2}),
    a symmetric PSD matrix with the same eigenvalues as S_a S_b.
    """
    if a.mean.shape != b.mean.shape or a.covariance.shape != b.covariance.shape:
        raise ValueError(f"dimension mismatch: {a.mean.shape} vs {b.mean.shape}")
    diff = a.mean - b.mean
    root_a, _ = _psd_sqrt(a.covariance, "first covariance")
    _psd_sqrt(b.covariance, "second covariance")
    _, w = _psd_sqrt(root_a @ b.covariance @ root_a, "covariance product")
    d = float(diff @ diff + np.trace(a.covariance) + np.trace(b.covariance) - 2 * np.sqrt(w).sum())
    return max(d, 0.0)


def fid_proxy(generated, real, ridge=RIDGE):
    """Pixel-space Frechet distance between two image stacks of the same shape."""
    g = np.asarray(generated, dtype=np.float64)
    r = np.asarray(real, dtype=np.float64)
    if len(g) == 0 or len(r) == 0:
        raise ValueError("both image sets must be non-empty")
    if g.shape[1:] != r.shape[1:]:
        raise ValueError(f"image shapes differ: {g.shape[1:]} vs {r.shape[1:]}")
    sa = gaussian_stats(g.reshape(len(g), -1))
    sb = gaussian_stats(r.reshape(len(r), -1))
    eye = ridge * np.eye(len(sa.mean))
    return frechet_distance(GaussianStats(sa.mean, sa.covariance + eye),
                            GaussianStats(sb.mean, sb.covariance + eye))
