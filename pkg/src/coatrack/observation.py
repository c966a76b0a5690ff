"""Differential-phase observations of a narrowband source.

Each antenna reports the phase of the received tone relative to the phase at
the array's reference location, so the unknown transmit phase cancels.  The
clean observation is the extra propagation distance scaled to radians and
wrapped; noise is additive Gaussian on the unwrapped phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import TWO_PI, ArrayGeometry, extra_distance


@dataclass(frozen=True)
class MeasurementModel:
    """Phase-profile observation model: geometry + wavelength + noise level.

    ``sigma_eta`` is the per-antenna phase noise standard deviation in
    radians; the noise covariance is ``sigma_eta^2 * I``.
    """

    geometry: ArrayGeometry
    lam: float
    sigma_eta: float

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError("wavelength must be positive")
        if self.sigma_eta < 0.0:
            raise ValueError("noise std must be nonnegative")

    @property
    def n_antennas(self) -> int:
        return self.geometry.n_antennas


def wrap_signed(phase):
    """Remainder of phase / 2pi carrying the sign of the argument."""
    return np.fmod(phase, TWO_PI)


def unwrapped_phase(model: MeasurementModel, p):
    """Differential phases before wrapping, ``2 pi / lambda * extra_distance``.

    Broadcasts over source positions of shape (..., 3) -> (..., N).
    """
    return (TWO_PI / model.lam) * extra_distance(model.geometry, p)


def observe_clean(model: MeasurementModel, p):
    """Noise-free wrapped differential phases at source position(s) ``p``."""
    return wrap_signed(unwrapped_phase(model, p))


def observe_noisy(model: MeasurementModel, p, rng: np.random.Generator):
    """One noisy phase snapshot; deterministic given the generator state.

    Gaussian noise accumulates on the unwrapped phase and the sum is then
    re-wrapped with the same signed convention.
    """
    raw = unwrapped_phase(model, p)
    noise = rng.normal(0.0, model.sigma_eta, size=raw.shape) if model.sigma_eta > 0 else 0.0
    return wrap_signed(raw + noise)


def phase_residual(z, h):
    """Elementwise difference ``z - h`` wrapped to (-pi, pi]."""
    z = np.asarray(z, dtype=float)
    h = np.asarray(h, dtype=float)
    if z.shape[-1] != h.shape[-1]:
        raise ValueError(f"length mismatch: {z.shape[-1]} vs {h.shape[-1]}")
    r = z - h
    r -= TWO_PI * np.round(r / TWO_PI)
    # rounding can overshoot the boundary by an ulp; fold back into (-pi, pi]
    r = np.where(r > np.pi, r - TWO_PI, r)
    return np.where(r <= -np.pi, r + TWO_PI, r)


def log_likelihood(model: MeasurementModel, z, p):
    """Gaussian log-likelihood of measurement ``z`` at source position(s) ``p``.

    Independent per antenna with variance ``sigma_eta^2``; residuals are
    wrapped to (-pi, pi] so the value is continuous across wrap boundaries.
    Includes the full normalization constant, so values are comparable
    across scenarios.  Broadcasts over positions (..., 3) -> (...,).
    """
    if model.sigma_eta <= 0.0:
        raise ValueError("log_likelihood requires sigma_eta > 0")
    r = phase_residual(z, observe_clean(model, p))
    n = model.n_antennas
    const = -0.5 * n * np.log(TWO_PI * model.sigma_eta**2)
    return const - 0.5 * np.sum(r**2, axis=-1) / model.sigma_eta**2
