"""Bayesian trackers for the phase-profile observation model.

Provides an extended Kalman filter, a multistart maximum-likelihood position
estimator, and a sequential importance-resampling particle filter with three
proposal choices: the motion prior, a Gaussian centered on the per-snapshot
ML estimate, and a per-particle linearization of the optimal proposal.

Filter innovations, likelihood evaluations, and the ML objective use
residuals wrapped to (-pi, pi]; Jacobians differentiate the unwrapped phase.
The one deliberate exception is the linearized-optimal proposal, whose
innovation is the raw difference of wrapped quantities as printed -- see
``_linopt_moments``.  Particle weights use the Gaussian kernel without its
normalization constant (the constant cancels when weights are normalized),
so the underflow-reset guard keys on relative likelihood mismatch rather
than on the absolute density scale.

The observation interface is duck-typed so linear-Gaussian surrogates can be
run through the exact same code paths for oracle checks: any object with
``predict``, ``jacobian``, ``residual``, ``loglik_kernel`` and ``noise_var``
is accepted in place of a phase :class:`MeasurementModel`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._common import (
    EstimatorFallbackWarning,
    RegularizationWarning,
    WeightResetWarning,
    psd_factor,
    psd_log_density,
)
from .fisher import grad_extra_distance
from .geometry import TWO_PI
from .motion import MotionModel, sample_noise
from .observation import MeasurementModel, observe_clean, phase_residual


class MleFailure(RuntimeError):
    """Raised when every maximum-likelihood search start diverged."""


@dataclass(frozen=True)
class GaussianBelief:
    """Gaussian state belief (mean vector, covariance matrix)."""

    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class ParticleSet:
    """Weighted particles; weights are kept normalized to sum 1."""

    states: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class MleConfig:
    """Multistart search settings for the ML position estimator."""

    box: np.ndarray  # (3, 2) position bounds in meters
    starts: int = 32
    max_iter: int = 500
    grad_tol: float = 1e-8


@dataclass(frozen=True)
class IsConfig:
    """Importance-sampling configuration for the particle filter."""

    kind: str = "prior"  # prior | likelihood | linearized_optimal
    spread_cov: np.ndarray | None = None  # likelihood-IS proposal covariance
    mle: MleConfig | None = None
    pinv_rtol: float = 1e-10


# --------------------------------------------------------------------------
# observation seam: phase model by default, duck-typed surrogates otherwise

def _predict(model, states):
    states = np.asarray(states, dtype=float)
    if isinstance(model, MeasurementModel):
        return observe_clean(model, states[..., :3])
    return model.predict(states)


def _jacobian(model, states):
    if isinstance(model, MeasurementModel):
        return jacobian(model, np.asarray(states, dtype=float)[..., :3])
    return model.jacobian(np.asarray(states, dtype=float))


def _residual(model, z, zhat):
    if isinstance(model, MeasurementModel):
        return phase_residual(z, zhat)
    return model.residual(z, zhat)


def _loglik_kernel(model, z, states):
    """Log-likelihood without its additive constant, ``-0.5 sum r^2 / var``."""
    states = np.asarray(states, dtype=float)
    if isinstance(model, MeasurementModel):
        # the residual wraps mod 2pi, so the unwrapped phase can be compared
        # directly without wrapping it first
        from .observation import unwrapped_phase

        r = phase_residual(z, unwrapped_phase(model, states[..., :3]))
        return -0.5 * np.sum(r**2, axis=-1) / model.sigma_eta**2
    return model.loglik_kernel(z, states)


def _noise_var(model) -> float:
    if isinstance(model, MeasurementModel):
        return model.sigma_eta**2
    return float(model.noise_var)


def _predict_and_obs_jacobian(model, states):
    """Predicted measurement and Jacobian over the observable state block.

    For the phase model the observable block is the position (velocity
    columns are identically zero and omitted); surrogates report their full
    Jacobian.  Returns (zhat, jac, block_dim).
    """
    states = np.asarray(states, dtype=float)
    if isinstance(model, MeasurementModel):
        from .fisher import extra_distance_and_gradient
        from .observation import wrap_signed

        dd, grads = extra_distance_and_gradient(model.geometry, states[..., :3])
        scale = TWO_PI / model.lam
        return wrap_signed(scale * dd), scale * grads, 3
    jac = model.jacobian(states)
    return model.predict(states), jac, jac.shape[-1]


def jacobian(model: MeasurementModel, p):
    """Measurement Jacobian rows ``(2 pi / lambda) grad dd_n`` over the state.

    Velocity columns are identically zero.  Broadcasts over positions
    (..., 3) -> (..., N, 6).
    """
    p = np.asarray(p, dtype=float)
    grads = grad_extra_distance(model.geometry, p)
    out = np.zeros(grads.shape[:-1] + (6,))
    out[..., :3] = (TWO_PI / model.lam) * grads
    return out


# --------------------------------------------------------------------------
# extended Kalman filter

def ekf_step(belief: GaussianBelief, z, model, motion: MotionModel):
    """One filter iteration: measurement update at ``belief`` then time update.

    ``belief`` is the predicted state for the current snapshot.  Returns
    ``(posterior, prediction)``: the posterior carries the state estimate for
    this snapshot, the prediction feeds the next call.  A singular innovation
    covariance falls back to a regularized Joseph-form update and emits a
    :class:`RegularizationWarning`.
    """
    m = np.asarray(belief.mean, dtype=float)
    P = np.asarray(belief.cov, dtype=float)
    H = _jacobian(model, m)
    v = _residual(model, z, _predict(model, m))
    var = _noise_var(model)
    S = H @ P @ H.T + var * np.eye(H.shape[0])
    try:
        K = np.linalg.solve(S, H @ P).T
        if not np.all(np.isfinite(K)):
            raise np.linalg.LinAlgError("non-finite gain")
        m_post = m + K @ v
        P_post = P - K @ S @ K.T
    except np.linalg.LinAlgError:
        warnings.warn(
            "singular innovation covariance; regularized Joseph update",
            RegularizationWarning,
            stacklevel=2,
        )
        S = S + (1e-12 * max(np.trace(S) / S.shape[0], 1e-30)) * np.eye(S.shape[0])
        K = np.linalg.solve(S, H @ P).T
        m_post = m + K @ v
        ikh = np.eye(P.shape[0]) - K @ H
        P_post = ikh @ P @ ikh.T + var * (K @ K.T)
    P_post = 0.5 * (P_post + P_post.T)
    posterior = GaussianBelief(mean=m_post, cov=P_post)
    prediction = GaussianBelief(
        mean=motion.A @ m_post,
        cov=0.5 * ((motion.A @ P_post @ motion.A.T + motion.Q)
                   + (motion.A @ P_post @ motion.A.T + motion.Q).T),
    )
    return posterior, prediction


# --------------------------------------------------------------------------
# multistart maximum likelihood

def _mle_value(model, z, positions):
    """Sum-of-squared wrapped residuals objective (sigma-independent)."""
    r = _residual(model, z, _predict(model, positions))
    return -0.5 * np.sum(r**2, axis=-1)


def _mle_objective(model, z, positions):
    """Objective, gradient, and Gauss-Newton matrix in one measurement pass."""
    zhat, jac, _ = _predict_and_obs_jacobian(model, positions)
    jac = jac[..., :3]
    r = _residual(model, z, zhat)
    value = -0.5 * np.sum(r**2, axis=-1)
    grad = np.einsum("...n,...ni->...i", r, jac)
    gauss = np.einsum("...ni,...nj->...ij", jac, jac)
    return value, grad, gauss


def mle(model, z, search_box, starts: int, rng: np.random.Generator,
        max_iter: int = 500, grad_tol: float = 1e-8) -> np.ndarray:
    """Maximize the measurement likelihood over source positions.

    Multistart local ascent with uniform starts over the box.  The objective
    is the sigma-independent sum of squared wrapped residuals, whose
    maximizer equals the ML position.  Each start runs a damped Gauss-Newton
    (Levenberg-Marquardt) iteration with backtracking on the damping
    parameter; plain gradient steps zigzag badly on this objective because
    the range direction is orders of magnitude flatter than the bearing
    directions.  Starts stop at gradient norm below ``grad_tol``, after
    ``max_iter`` iterations, or once the damping saturates.

    Args:
        model: observation model.
        z: one measurement snapshot.
        search_box: (3, 2) array of per-axis position bounds.
        starts: number of restarts (>= 1).
        rng: random stream for the start draws.

    Returns:
        6-vector state estimate with velocity components zeroed.

    Raises:
        MleFailure: if every start produced a non-finite objective.
    """
    box = np.asarray(search_box, dtype=float).reshape(3, 2)
    if starts < 1:
        raise ValueError("starts must be >= 1")
    if np.any(box[:, 1] < box[:, 0]):
        raise ValueError("empty search box")
    lo, hi = box[:, 0], box[:, 1]
    pos = lo + (hi - lo) * rng.uniform(size=(starts, 3))

    with np.errstate(invalid="ignore"):
        val, grad, gauss = _mle_objective(model, z, pos)
    bad = ~np.isfinite(val)
    val[bad] = -np.inf
    grad[bad] = 0.0
    damping = np.full(starts, 1e-3)
    damping_max = 1e10
    converged = bad.copy()
    for _ in range(max_iter):
        gnorm = np.linalg.norm(grad, axis=1)
        converged |= ~np.isfinite(gnorm) | (~converged & (gnorm < grad_tol))
        rows = np.flatnonzero(~converged)
        if rows.size == 0:
            break
        diag = np.einsum("aii->ai", gauss[rows])
        floor = 1e-12 * np.max(diag, axis=1, keepdims=True) + 1e-300
        damp = damping[rows, None] * np.maximum(diag, floor)
        system = gauss[rows] + damp[:, :, None] * np.eye(3)
        delta = np.linalg.solve(system, grad[rows][..., None])[..., 0]
        trial = np.clip(pos[rows] + delta, lo, hi)
        with np.errstate(invalid="ignore"):
            tval = _mle_value(model, z, trial)
        better = np.isfinite(tval) & (tval > val[rows])
        accepted = rows[better]
        # stop starts whose accepted gains are negligible (ridge crawling)
        gain = tval[better] - val[accepted]
        stalled = gain < np.maximum(1e-6 * np.abs(val[accepted]), 1e-10)
        pos[accepted] = trial[better]
        val[accepted] = tval[better]
        if accepted.size:
            # gradient and GN matrix only where the position moved
            with np.errstate(invalid="ignore"):
                _, grad[accepted], gauss[accepted] = _mle_objective(
                    model, z, pos[accepted]
                )
        damping[accepted] = np.maximum(damping[accepted] / 3.0, 1e-12)
        converged[accepted[stalled]] = True
        rejected = rows[~better]
        damping[rejected] *= 10.0
        converged[rejected[damping[rejected] > damping_max]] = True
    if not np.any(np.isfinite(val)):
        raise MleFailure("all maximum-likelihood starts diverged")
    best = int(np.argmax(val))
    out = np.zeros(6)
    out[:3] = pos[best]
    return out


# --------------------------------------------------------------------------
# particle filter

def pf_init(mean, cov, m: int, rng: np.random.Generator) -> ParticleSet:
    """Draw ``m`` particles from a Gaussian prior with uniform weights."""
    mean = np.asarray(mean, dtype=float)
    L = psd_factor(np.asarray(cov, dtype=float))
    states = mean + rng.standard_normal((m, mean.shape[0])) @ L.T
    return ParticleSet(states=states, weights=np.full(m, 1.0 / m))


def resample_multinomial(ps: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """Draw ``M`` particles i.i.d. from the categorical weight distribution."""
    m = ps.size
    idx = rng.choice(m, size=m, replace=True, p=ps.weights)
    return ParticleSet(states=ps.states[idx].copy(), weights=np.full(m, 1.0 / m))


def _transition_log_density(motion: MotionModel, states, predicted):
    """Log N(states; predicted, Q) with the regularized process covariance.

    Exactly-deterministic coordinates (zero process noise) contribute zero
    when the displacement is zero and a catastrophically negative value
    otherwise, so off-manifold proposals get (numerically) zero weight.
    """
    q_inv, _ = motion.q_inverse
    _, logdet_inv = np.linalg.slogdet(q_inv)
    dim = q_inv.shape[0]
    logdet = -logdet_inv  # logdet(Q_reg)
    diff = states - predicted
    quad = np.einsum("mi,ij,mj->m", diff, q_inv, diff)
    return -0.5 * (quad + logdet + dim * np.log(TWO_PI))


def is_sample_prior(ps: ParticleSet, motion: MotionModel, rng: np.random.Generator):
    """Propose from the transition density; proposal equals the transition.

    Returns (states, log_proposal, predicted_means); the weight correction
    ``log p(s'|s) - log q`` cancels exactly for this proposal.
    """
    predicted = ps.states @ motion.A.T
    states = predicted + sample_noise(motion, rng, ps.size)
    log_q = _transition_log_density(motion, states, predicted)
    return states, log_q, predicted


def is_sample_likelihood(ps: ParticleSet, z, model, is_cfg: IsConfig,
                         rng: np.random.Generator, motion: MotionModel):
    """Propose all particles around the per-snapshot ML estimate.

    Runs the ML search once, then draws from a Gaussian centered at the
    estimate with the configured spread covariance.  If the search fails the
    step falls back to the prior proposal and emits an
    :class:`EstimatorFallbackWarning`.
    """
    try:
        if hasattr(model, "mle_estimate"):
            s_ml = np.asarray(model.mle_estimate(z, rng), dtype=float)
        else:
            cfg = is_cfg.mle
            if cfg is None:
                raise ValueError("likelihood IS requires an MleConfig")
            s_ml = mle(model, z, cfg.box, cfg.starts, rng,
                       max_iter=cfg.max_iter, grad_tol=cfg.grad_tol)
    except MleFailure:
        warnings.warn(
            "ML search failed; falling back to the prior proposal",
            EstimatorFallbackWarning,
            stacklevel=2,
        )
        return is_sample_prior(ps, motion, rng)
    spread = np.asarray(is_cfg.spread_cov, dtype=float)
    L = psd_factor(spread)
    states = s_ml + rng.standard_normal((ps.size, s_ml.shape[0])) @ L.T
    log_q = psd_log_density(states - s_ml, spread)
    predicted = ps.states @ motion.A.T
    return states, log_q, predicted


def _linopt_moments(ps: ParticleSet, z, model, motion: MotionModel,
                    is_cfg: IsConfig):
    """Per-particle mean and covariance of the linearized optimal proposal.

    Returns (mu, cov, predicted) with shapes (M, dim), (M, dim, dim), (M, dim).
    """
    m = ps.size
    predicted = ps.states @ motion.A.T
    dim = predicted.shape[1]
    var = _noise_var(model)

    if isinstance(model, MeasurementModel):
        # factorized Jacobian: jac = scale * coeffs @ basis over the position
        # block; all products below contract against the factors so the full
        # (M, N, 3) tensor is never materialized
        from .fisher import gradient_parts
        from .observation import wrap_signed

        delta, coeffs, basis = gradient_parts(model.geometry, predicted[..., :3])
        scale = TWO_PI / model.lam
        zhat = wrap_signed(scale * delta)
        block = 3
        ctc = coeffs.transpose(0, 2, 1) @ coeffs  # (M, 3, 3)
        hth = scale**2 * (basis.transpose(0, 2, 1) @ ctc @ basis)

        def jac_dot(x):  # (M, block) -> (M, N)
            bx = (basis @ x[..., None])[..., 0]
            return scale * (coeffs @ bx[..., None])[..., 0]

        def jac_t_dot(v):  # (M, N) -> (M, block)
            cv = (coeffs.transpose(0, 2, 1) @ v[..., None])[..., 0]
            return scale * (basis.transpose(0, 2, 1) @ cv[..., None])[..., 0]

    else:
        jac = model.jacobian(predicted)
        zhat = model.predict(predicted)
        block = jac.shape[-1]
        hth = np.einsum("mni,mnj->mij", jac, jac)

        def jac_dot(x):
            return np.einsum("mni,mi->mn", jac, x)

        def jac_t_dot(v):
            return np.einsum("mni,mn->mi", jac, v)

    # The linearization innovation is the raw difference of the (wrapped)
    # measurement and prediction, not the nearest-representative residual:
    # the resulting wrap-branch sensitivity is what makes this proposal
    # fragile near the array, where the likelihood is sharp -- roughening
    # the assumed noise recovers it.  EKF innovations and likelihood
    # evaluations elsewhere do use wrapped residuals.
    resid = np.asarray(z, dtype=float) - zhat

    # Rt = H^+ R H^+T and its pseudo-inverse share the eigenbasis of H^T H:
    # pinv(Rt) = (1/var) V diag(w_kept) V^T with H^T H = V diag(w) V^T.
    # Only the observable block is nonzero, so the eigenproblem stays small.
    w, v = np.linalg.eigh(hth)
    tol = (is_cfg.pinv_rtol**2) * w[:, -1:]
    keep = w > np.maximum(tol, 0.0)
    if not np.all(np.sum(keep, axis=1) >= block):
        warnings.warn(
            "rank-deficient linearized observation; proposal restricted to "
            "the identified subspace",
            RegularizationWarning,
            stacklevel=2,
        )
    rt_inv_block = np.einsum("mik,mk,mjk->mij", v, np.where(keep, w, 0.0), v) / var

    q_inv, _ = motion.q_inverse
    prec = np.tile(q_inv, (m, 1, 1))
    prec[:, :block, :block] += rt_inv_block
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.transpose(0, 2, 1))

    inner = (resid + jac_dot(predicted[:, :block])) / var
    rhs = predicted @ q_inv.T
    rhs[:, :block] += jac_t_dot(inner)
    mu = np.einsum("mij,mj->mi", cov, rhs)
    return mu, cov, predicted


def is_sample_linopt(ps: ParticleSet, z, model, motion: MotionModel,
                     is_cfg: IsConfig, rng: np.random.Generator):
    """Per-particle Gaussian approximation of the optimal proposal.

    The observation is linearized at each particle's predicted state; the
    measurement is mapped into state space through the tolerance-thresholded
    pseudo-inverse of the Jacobian, giving the proposal covariance
    ``(Q^{-1} + Rt^{-1})^{-1}`` and the product-of-Gaussians mean.  State
    directions the linearized observation cannot identify keep the prior
    (process) covariance.
    """
    mu, cov, predicted = _linopt_moments(ps, z, model, motion, is_cfg)
    m, dim = mu.shape

    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        ew, ev = np.linalg.eigh(cov)
        ew = np.maximum(ew, 1e-18 * ew[:, -1:])
        L = np.linalg.cholesky(
            np.einsum("mik,mk,mjk->mij", ev, ew, ev)
        )
    xi = rng.standard_normal((m, dim))
    states = mu + np.einsum("mij,mj->mi", L, xi)

    # proposal log-density from the Cholesky factor
    diff = states - mu
    sol = np.linalg.solve(L, diff[..., None])[..., 0]
    quad = np.sum(sol**2, axis=1)
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)
    log_q = -0.5 * (quad + logdet + dim * np.log(TWO_PI))
    return states, log_q, predicted


def pf_step(ps: ParticleSet, z, model, motion: MotionModel, is_cfg: IsConfig,
            rng: np.random.Generator, propagate: bool = True):
    """One sample-weight-estimate-resample iteration of the particle filter.

    With ``propagate=False`` the current particles are treated as the
    predictive set for this snapshot (used for the first measurement, whose
    predictive distribution is the prior itself) and only reweighted.

    Weights follow ``w ∝ w_prev · p(z|s') · p(s'|s) / q(s'|s, z)``, which
    reduces to the bare likelihood for the prior proposal.  Non-finite
    likelihoods zero the affected particle; if the unnormalized weight sum
    falls below 1e-300 all weights reset to ``1/M`` and a
    :class:`WeightResetWarning` is emitted.

    Returns:
        (resampled ParticleSet, weighted state estimate before resampling).
    """
    if propagate:
        if is_cfg.kind == "prior":
            states, log_q, predicted = is_sample_prior(ps, motion, rng)
        elif is_cfg.kind == "likelihood":
            states, log_q, predicted = is_sample_likelihood(
                ps, z, model, is_cfg, rng, motion
            )
        elif is_cfg.kind == "linearized_optimal":
            states, log_q, predicted = is_sample_linopt(
                ps, z, model, motion, is_cfg, rng
            )
        else:
            raise ValueError(f"unknown importance-sampling kind {is_cfg.kind!r}")
        log_trans = _transition_log_density(motion, states, predicted)
        log_correction = log_trans - log_q
    else:
        states = ps.states
        log_correction = np.zeros(ps.size)

    kernel = _loglik_kernel(model, z, states)
    with np.errstate(divide="ignore"):
        log_w = np.log(ps.weights) + kernel + log_correction
    log_w = np.where(np.isnan(log_w), -np.inf, log_w)
    with np.errstate(over="ignore"):
        w = np.exp(log_w)
    total = w.sum()
    if not np.isfinite(total):
        # overflow in individual weights: renormalize in log space
        shift = np.max(log_w[np.isfinite(log_w)])
        w = np.exp(log_w - shift)
        total = w.sum()
    if total < 1e-300:
        warnings.warn(
            "particle weights underflowed; reset to uniform",
            WeightResetWarning,
            stacklevel=2,
        )
        w = np.full(ps.size, 1.0 / ps.size)
    else:
        w = w / total
    weighted = ParticleSet(states=states, weights=w)
    estimate = w @ states
    return resample_multinomial(weighted, rng), estimate
