"""Independent oracle constructions shared across the test suite.

Everything here is deliberately written from scratch (textbook recursions,
brute-force block assembly) so the checks stay independent of the library
code paths they validate.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class LinearObservation:
    """Linear-Gaussian observation surrogate matching the tracker seam."""

    H: np.ndarray  # (N, dim)
    sigma: float

    @property
    def noise_var(self) -> float:
        return self.sigma**2

    def predict(self, states):
        return np.asarray(states, dtype=float) @ self.H.T

    def jacobian(self, states):
        states = np.asarray(states, dtype=float)
        shape = states.shape[:-1] + self.H.shape
        return np.broadcast_to(self.H, shape).copy()

    def residual(self, z, zhat):
        return z - zhat

    def loglik_kernel(self, z, states):
        r = z - self.predict(states)
        return -0.5 * np.sum(r**2, axis=-1) / self.noise_var

    def observe(self, state, rng):
        return self.predict(state) + rng.normal(0.0, self.sigma, size=self.H.shape[0])

    def mle_estimate(self, z, rng):
        sol, *_ = np.linalg.lstsq(self.H, np.asarray(z, dtype=float), rcond=None)
        return sol


def kalman_filter(A, Q, H, sigma, m0, P0, measurements):
    """Textbook Kalman filter: update at the prior, then predict.

    Returns (means, covs) of the posterior at each measurement index.
    """
    A = np.atleast_2d(A)
    Q = np.atleast_2d(Q)
    H = np.atleast_2d(H)
    R = sigma**2 * np.eye(H.shape[0])
    m = np.asarray(m0, dtype=float).copy()
    P = np.asarray(P0, dtype=float).copy()
    means, covs = [], []
    for z in measurements:
        S = H @ P @ H.T + R
        K = P @ H.T @ np.linalg.inv(S)
        m = m + K @ (np.atleast_1d(z) - H @ m)
        P = P - K @ S @ K.T
        P = 0.5 * (P + P.T)
        means.append(m.copy())
        covs.append(P.copy())
        m = A @ m
        P = A @ P @ A.T + Q
    return np.array(means), np.array(covs)


def joint_posterior_info(A, Q, Sigma0, data_fims):
    """Posterior information of the last state by brute-force block assembly.

    Builds the full trajectory information matrix over states s_0..s_{K-1}
    (Gaussian prior on s_0, Gaussian transitions, per-step data information),
    inverts it, and returns the inverse of the lower-right covariance block.
    """
    A = np.atleast_2d(A)
    Q = np.atleast_2d(Q)
    Sigma0 = np.atleast_2d(Sigma0)
    dim = A.shape[0]
    K = len(data_fims)
    big = np.zeros((K * dim, K * dim))
    big[:dim, :dim] += np.linalg.inv(Sigma0)
    q_inv = np.linalg.inv(Q)
    for k in range(K):
        sl = slice(k * dim, (k + 1) * dim)
        big[sl, sl] += np.atleast_2d(data_fims[k])
    for k in range(K - 1):
        a = slice(k * dim, (k + 1) * dim)
        b = slice((k + 1) * dim, (k + 2) * dim)
        big[a, a] += A.T @ q_inv @ A
        big[a, b] += -A.T @ q_inv
        big[b, a] += -q_inv @ A
        big[b, b] += q_inv
    cov = np.linalg.inv(big)
    tail = slice((K - 1) * dim, K * dim)
    return np.linalg.inv(cov[tail, tail])
