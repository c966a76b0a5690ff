"""Shared numerics helpers and flag categories.

Numerical events that the simulation harness must report (weight resets,
regularized solves, estimator fallbacks) are emitted as warnings from these
categories; callers that need counts record them with an ``always`` filter.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


class RegularizationWarning(UserWarning):
    """A matrix solve needed regularization or a pseudo-inverse fallback."""


class WeightResetWarning(UserWarning):
    """All particle weights underflowed and were reset to uniform."""


class EstimatorFallbackWarning(UserWarning):
    """An estimator failed and a documented fallback path was used."""


def splitmix64(x: int) -> int:
    """One SplitMix64 output step; the documented, platform-stable seed mixer."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def derive_seed(master: int, *indices: int) -> int:
    """Mix a master seed with stream indices into an independent 64-bit seed.

    Each index is folded in with one SplitMix64 round, so
    ``derive_seed(m, a, b)`` and ``derive_seed(m, b, a)`` differ.
    """
    x = splitmix64(master & MASK64)
    for idx in indices:
        x = splitmix64((x ^ (idx & MASK64)) & MASK64)
    return x


def psd_factor(cov: np.ndarray) -> np.ndarray:
    """Rank-revealing factor L with L L^T = cov for symmetric PSD input.

    Coordinates whose diagonal entry is exactly zero produce exactly zero
    rows, so sampling is deterministic along them.
    """
    cov = np.asarray(cov, dtype=float)
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    w = np.where(w > 1e-15 * max(w.max(), 0.0), w, 0.0)
    L = v * np.sqrt(w)
    L[np.diag(cov) == 0.0, :] = 0.0
    return L


def psd_log_density(diffs: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Gaussian log-density of residuals under a PSD covariance.

    For singular covariances this is the density on the support subspace
    (pseudo-inverse quadratic form, pseudo-determinant normalization); any
    component of ``diffs`` outside the support yields ``-inf``.
    """
    diffs = np.atleast_2d(np.asarray(diffs, dtype=float))
    w, v = np.linalg.eigh(0.5 * (cov + cov.T))
    tol = 1e-15 * max(w.max(), 0.0)
    keep = w > tol
    proj = diffs @ v
    quad = np.sum(proj[:, keep] ** 2 / w[keep], axis=1)
    off_support = np.any(np.abs(proj[:, ~keep]) > 1e-9, axis=1)
    logdet = np.sum(np.log(2.0 * np.pi * w[keep]))
    out = -0.5 * (quad + logdet)
    out[off_support] = -np.inf
    return out
