"""Recursive posterior Cramér-Rao bound for the tracking problem.

The Bayesian information matrix is propagated step by step instead of
inverting the joint trajectory information matrix; the per-step expected
data information is approximated by Monte Carlo over state trajectories
drawn from the prior and motion model.  The first measurement is folded
into the initial information (prior information plus the first snapshot),
matching the simulation timing where trackers update at the initial state
before any motion step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from ._common import RegularizationWarning, derive_seed, psd_factor
from .fisher import data_fim_state
from .motion import MotionModel
from .observation import MeasurementModel
from .trackers import GaussianBelief

if TYPE_CHECKING:  # pragma: no cover
    from .harness import Scenario


@dataclass
class PcrlbTrace:
    """Per-step Bayesian information, its inverse, and the position bound."""

    info: np.ndarray  # (K, 6, 6) Bayesian FIM after each measurement
    cov: np.ndarray  # (K, 6, 6) inverse (bound on the error covariance)
    peb: np.ndarray  # (K,) sqrt of the trace of the position block of cov
    flags: dict = field(default_factory=dict)


def prior_fim(belief: GaussianBelief) -> np.ndarray:
    """Information matrix of a Gaussian prior, ``cov^{-1}``.

    Zero variance entries on the diagonal are floored at 1e-12 so degenerate
    priors (e.g. exactly known velocity components) stay invertible.
    """
    cov = np.array(belief.cov, dtype=float)
    diag = np.diag(cov).copy()
    floor = 1e-12
    np.fill_diagonal(cov, np.maximum(diag, floor))
    try:
        out = np.linalg.inv(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("prior covariance is singular beyond its diagonal") from exc
    return 0.5 * (out + out.T)


def recursion_step(j_prev: np.ndarray, motion: MotionModel, expected_data_fim: np.ndarray) -> np.ndarray:
    """One information-recursion step.

    ``J_k = D22 - D21 (J_{k-1} + D11)^{-1} D12`` with
    ``D11 = A^T Q^{-1} A``, ``D12 = -A^T Q^{-1}``, ``D21 = D12^T`` and
    ``D22 = Q^{-1} + J^D_k``.  A singular inner matrix falls back to a
    pseudo-inverse and emits a :class:`RegularizationWarning`.
    """
    q_inv, regularized = motion.q_inverse
    if regularized:
        warnings.warn(
            "process covariance diagonal floored for inversion",
            RegularizationWarning,
            stacklevel=2,
        )
    A = motion.A
    d11 = A.T @ q_inv @ A
    d12 = -A.T @ q_inv
    d22 = q_inv + expected_data_fim
    inner = j_prev + d11
    try:
        solved = np.linalg.solve(inner, d12)
    except np.linalg.LinAlgError:
        warnings.warn(
            "singular information recursion inner matrix; using pseudo-inverse",
            RegularizationWarning,
            stacklevel=2,
        )
        solved = np.linalg.pinv(inner) @ d12
    j_new = d22 - d12.T @ solved
    return 0.5 * (j_new + j_new.T)


def _sample_state_trajectories(
    model: MeasurementModel,
    motion: MotionModel,
    prior: GaussianBelief,
    n_steps: int,
    n_traj: int,
    rng: np.random.Generator,
    max_attempts: int = 100,
):
    """Draw state trajectories from the prior and motion model.

    Trajectories that hit the array's polar axis (where the observation
    gradient is undefined) are redrawn and counted.

    Returns:
        (states, n_resampled) with states of shape (n_traj, n_steps, dim).
    """
    dim = prior.mean.shape[0]
    L0 = psd_factor(prior.cov)
    states = np.empty((n_traj, n_steps, dim))
    n_resampled = 0
    axis_xy = model.geometry.reference[:2]
    for t in range(n_traj):
        for attempt in range(max_attempts):
            s = prior.mean + L0 @ rng.standard_normal(dim)
            traj = np.empty((n_steps, dim))
            traj[0] = s
            for k in range(1, n_steps):
                noise = motion.noise_factor @ rng.standard_normal(dim)
                traj[k] = motion.A @ traj[k - 1] + noise
            on_axis = np.any(
                np.all(np.isclose(traj[:, :2], axis_xy, atol=1e-12), axis=1)
            )
            if not on_axis:
                break
            n_resampled += 1
        states[t] = traj
    return states, n_resampled


def expected_data_fim_mc(
    model: MeasurementModel,
    motion: MotionModel,
    prior: GaussianBelief,
    k: int,
    n_traj: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Monte Carlo estimate of the expected data FIM at step ``k`` (0-based).

    Averages the single-snapshot state FIM over ``n_traj`` trajectories
    sampled from the prior and motion model up to step ``k``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    states, _ = _sample_state_trajectories(model, motion, prior, k + 1, n_traj, rng)
    fims = data_fim_state(model, states[:, k, :3])
    return fims.mean(axis=0)


def trace_bound(
    model: MeasurementModel,
    motion: MotionModel,
    prior: GaussianBelief,
    n_steps: int,
    n_traj: int,
    seed: int,
) -> PcrlbTrace:
    """Full bound trace for ``n_steps`` measurement snapshots.

    Snapshot 0 is taken at the initial state, so
    ``J_0 = prior^{-1} + E[J^D_0]`` and subsequent steps apply the
    information recursion with the expected per-snapshot data FIM.
    """
    rng = np.random.default_rng(derive_seed(seed, 0xB0CD))
    states, n_resampled = _sample_state_trajectories(
        model, motion, prior, n_steps, n_traj, rng
    )
    flags = {"trajectories_resampled": n_resampled, "regularizations": 0}
    expected = [
        data_fim_state(model, states[:, k, :3]).mean(axis=0) for k in range(n_steps)
    ]
    info = np.empty((n_steps, 6, 6))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RegularizationWarning)
        j = prior_fim(prior) + expected[0]
        info[0] = j
        for k in range(1, n_steps):
            j = recursion_step(j, motion, expected[k])
            info[k] = j
    flags["regularizations"] = sum(
        1 for w in caught if issubclass(w.category, RegularizationWarning)
    )
    cov = np.linalg.inv(info)
    cov = 0.5 * (cov + cov.transpose(0, 2, 1))
    peb = np.sqrt(np.trace(cov[:, :3, :3], axis1=1, axis2=2))
    return PcrlbTrace(info=info, cov=cov, peb=peb, flags=flags)


def run_pcrlb(scenario: "Scenario") -> PcrlbTrace:
    """Bound trace for a simulation scenario (truth-side models)."""
    model = scenario.build_truth_model()
    motion = scenario.build_truth_motion()
    prior = GaussianBelief(mean=scenario.s0_array, cov=scenario.prior_cov())
    return trace_bound(
        model,
        motion,
        prior,
        n_steps=scenario.steps,
        n_traj=scenario.pcrlb_n_traj,
        seed=scenario.seed,
    )
