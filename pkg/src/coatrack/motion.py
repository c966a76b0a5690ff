"""Nearly-constant-velocity motion model with white acceleration noise.

State layout is ``[x, y, z, vx, vy, vz]`` (positions in meters, velocities in
meters per step).  The process covariance follows the continuous white-noise
acceleration discretization, block-structured per axis, and may be singular
when an axis has zero acceleration variance.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class MotionModel:
    """Linear transition ``s' = A s + w``, ``w ~ N(0, Q)``.

    ``qa`` is the per-axis acceleration variance diagonal for the standard
    6-state model; generic (A, Q) pairs of any dimension are accepted for
    oracle constructions.
    """

    A: np.ndarray
    Q: np.ndarray
    tau: float
    qa: np.ndarray | None = None

    @cached_property
    def noise_factor(self) -> np.ndarray:
        """Rank-revealing factor L with L L^T = Q; exact zeros stay zero."""
        w, v = np.linalg.eigh(0.5 * (self.Q + self.Q.T))
        w = np.where(w > 1e-15 * max(w.max(), 0.0), w, 0.0)
        L = v * np.sqrt(w)
        # PSD with Q_ii = 0 forces the whole row to zero; make that exact
        L[np.diag(self.Q) == 0.0, :] = 0.0
        return L

    @cached_property
    def q_inverse(self) -> tuple[np.ndarray, bool]:
        """Inverse of Q with zero diagonal entries floored.

        Zero diagonals (axes with no process noise) are replaced by
        ``1e-12 * max(diag(Q))`` before inversion so the information-form
        recursions stay defined; the boolean reports whether flooring was
        needed.  Those components of any downstream bound are then dominated
        by the prior rather than the data.
        """
        q = 0.5 * (self.Q + self.Q.T)
        diag = np.diag(q).copy()
        floor = 1e-12 * max(diag.max(), np.finfo(float).tiny)
        regularized = bool(np.any(diag <= 0.0))
        if regularized:
            q = q + np.diag(np.where(diag <= 0.0, floor, 0.0))
        return np.linalg.inv(q), regularized


def make_ncv(tau: float, sigma2_ax: float, sigma2_ay: float, sigma2_az: float) -> MotionModel:
    """Nearly-constant-velocity model for one step of duration ``tau``.

    ``A = [[I, tau I], [0, I]]`` and
    ``Q = [[tau^3/3 Qa, tau^2/2 Qa], [tau^2/2 Qa, tau Qa]]`` with
    ``Qa = diag(sigma2_ax, sigma2_ay, sigma2_az)``.
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    qa_diag = np.array([sigma2_ax, sigma2_ay, sigma2_az], dtype=float)
    if np.any(qa_diag < 0.0):
        raise ValueError("acceleration variances must be nonnegative")
    qa = np.diag(qa_diag)
    eye = np.eye(3)
    A = np.block([[eye, tau * eye], [np.zeros((3, 3)), eye]])
    Q = np.block(
        [[tau**3 / 3.0 * qa, tau**2 / 2.0 * qa], [tau**2 / 2.0 * qa, tau * qa]]
    )
    return MotionModel(A=A, Q=Q, tau=float(tau), qa=qa)


def sample_noise(model: MotionModel, rng: np.random.Generator, size: int | None = None):
    """Draw process-noise vectors; axes with zero variance get exactly zero."""
    L = model.noise_factor
    dim = L.shape[0]
    if size is None:
        return L @ rng.standard_normal(dim)
    return rng.standard_normal((size, dim)) @ L.T


def propagate(model: MotionModel, s, rng: np.random.Generator):
    """One motion step ``A s + w``; deterministic given the generator state."""
    s = np.asarray(s, dtype=float)
    return model.A @ s + sample_noise(model, rng)
