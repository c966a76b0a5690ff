"""Scenario assembly, seeded Monte Carlo campaigns, and error metrics.

A campaign runs ``n_runs`` independent realizations of truth trajectory,
measurements, and every configured tracker on identical measurements.  Runs
derive their random streams from the master seed through a documented
SplitMix64 mix, so campaigns are reproducible across platforms and across
process-pool scheduling.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._common import (
    EstimatorFallbackWarning,
    RegularizationWarning,
    WeightResetWarning,
    derive_seed,
    psd_factor,
)
from .geometry import (
    ArrayGeometry,
    field_boundaries,
    make_circular_array,
    make_rectangular_array,
)
from .motion import MotionModel, make_ncv, propagate
from .observation import MeasurementModel, observe_noisy
from .trackers import (
    GaussianBelief,
    IsConfig,
    MleConfig,
    MleFailure,
    ekf_step,
    mle,
    pf_init,
    pf_step,
)

TRACKER_NAMES = ("ekf", "mle", "pf_prior", "pf_likelihood", "pf_linopt")

_IS_KIND = {
    "pf_prior": "prior",
    "pf_likelihood": "likelihood",
    "pf_linopt": "linearized_optimal",
}

_FLAG_CATEGORIES = {
    "weight_resets": WeightResetWarning,
    "regularizations": RegularizationWarning,
    "estimator_fallbacks": EstimatorFallbackWarning,
}


@dataclass(frozen=True)
class Scenario:
    """Complete description of one simulation campaign."""

    # array and signal
    array_kind: str = "rectangular"  # rectangular | circular
    n_y: int = 20
    n_z: int = 20
    spacing: float = 0.005
    ring_n: int = 0
    ring_diameter: float = 0.0
    reference: tuple = (0.0, 0.0, 1.0)
    lam: float = 0.01
    sigma: float = np.deg2rad(20.0)  # truth measurement noise std (rad)
    gamma_m: float = 0.0  # tracker noise std = sigma * (1 + gamma_m)
    # motion
    tau: float = 1.0
    accel_std: tuple = (0.03, 0.03, 0.0)  # truth accel noise std (m/step^3)
    gamma_t: float = 1.0  # tracker process-noise variance multiplier
    # truth trajectory and prior
    s0: tuple = (2.5, -9.1, 1.5, 0.01, 0.97, 0.0)
    waypoints: tuple | None = None  # optional position polyline override
    prior_mean: tuple | None = None  # None: drawn per run as N(s0, prior cov)
    prior_std: tuple = (0.5, 0.5, 0.01, 0.001, 0.097, 0.0)
    # campaign
    steps: int = 20
    trackers: tuple = ("ekf", "mle", "pf_prior", "pf_likelihood", "pf_linopt")
    particles: int = 1000
    n_runs: int = 100
    seed: int = 20260811
    mle_starts: int = 32
    mle_box: tuple = ((0.5, 4.5), (-12.0, 12.0), (1.0, 2.0))
    likelihood_spread_std: tuple | None = None  # None: use the prior stds
    pinv_rtol: float = 1e-10
    pcrlb_n_traj: int = 200
    cdf_max: float = 5.0
    cdf_points: int = 101

    def __post_init__(self):
        if self.steps < 1 or self.n_runs < 1:
            raise ValueError("steps and n_runs must be >= 1")
        if self.sigma <= 0.0:
            raise ValueError("measurement noise std must be positive")
        unknown = [t for t in self.trackers if t not in TRACKER_NAMES]
        if unknown:
            raise ValueError(f"unknown tracker(s) {unknown}; choose from {TRACKER_NAMES}")

    # ---- builders -------------------------------------------------------
    def build_geometry(self) -> ArrayGeometry:
        if self.array_kind == "rectangular":
            return make_rectangular_array(self.n_y, self.n_z, self.spacing, self.reference)
        if self.array_kind == "circular":
            return make_circular_array(self.ring_n, self.ring_diameter, self.reference)
        raise ValueError(f"unknown array kind {self.array_kind!r}")

    def build_truth_model(self) -> MeasurementModel:
        return MeasurementModel(self.build_geometry(), self.lam, self.sigma)

    def build_tracker_model(self) -> MeasurementModel:
        return MeasurementModel(
            self.build_geometry(), self.lam, self.sigma * (1.0 + self.gamma_m)
        )

    def build_truth_motion(self) -> MotionModel:
        sx, sy, sz = (v**2 for v in self.accel_std)
        return make_ncv(self.tau, sx, sy, sz)

    def build_tracker_motion(self) -> MotionModel:
        sx, sy, sz = (self.gamma_t * v**2 for v in self.accel_std)
        return make_ncv(self.tau, sx, sy, sz)

    def prior_cov(self) -> np.ndarray:
        return np.diag(np.asarray(self.prior_std, dtype=float) ** 2)

    def mle_config(self) -> MleConfig:
        return MleConfig(box=np.asarray(self.mle_box, dtype=float), starts=self.mle_starts)

    def is_config(self, kind: str) -> IsConfig:
        spread_std = self.likelihood_spread_std or self.prior_std
        spread = np.diag(np.asarray(spread_std, dtype=float) ** 2)
        return IsConfig(
            kind=kind,
            spread_cov=spread,
            mle=self.mle_config(),
            pinv_rtol=self.pinv_rtol,
        )

    def fraunhofer(self) -> float:
        return field_boundaries(self.build_geometry().diameter, self.lam)[1]

    def cdf_thresholds(self) -> np.ndarray:
        return np.linspace(0.0, self.cdf_max, self.cdf_points)

    @property
    def s0_array(self) -> np.ndarray:
        return np.asarray(self.s0, dtype=float)


@dataclass
class RunRecord:
    """Outcome of one Monte Carlo run: truth, estimates, errors, flags."""

    run: int
    truth: np.ndarray  # (K, 6)
    estimates: dict  # name -> (K, 6)
    errors: dict  # name -> (K,)
    flags: dict = field(default_factory=dict)  # name -> {category: count}


def _interpolate_waypoints(waypoints: np.ndarray, steps: int, tau: float) -> np.ndarray:
    """Sample a position polyline at ``steps`` arc-length-uniform points.

    Velocities are forward differences over the step interval; the last step
    repeats the previous velocity.
    """
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 2:
        raise ValueError("waypoints must be an (n >= 2, 3) array")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    samples = np.linspace(0.0, arc[-1], steps)
    pos = np.stack([np.interp(samples, arc, pts[:, i]) for i in range(3)], axis=1)
    vel = np.empty_like(pos)
    vel[:-1] = np.diff(pos, axis=0) / tau
    vel[-1] = vel[-2] if steps > 1 else 0.0
    return np.concatenate([pos, vel], axis=1)


def generate_truth(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """Truth trajectory: the initial state followed by ``steps - 1`` motion
    steps, or the waypoint polyline when one is configured."""
    if scenario.waypoints is not None:
        return _interpolate_waypoints(
            np.asarray(scenario.waypoints, dtype=float), scenario.steps, scenario.tau
        )
    motion = scenario.build_truth_motion()
    traj = np.empty((scenario.steps, 6))
    traj[0] = scenario.s0_array
    for k in range(1, scenario.steps):
        traj[k] = propagate(motion, traj[k - 1], rng)
    return traj


def _draw_prior_mean(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    if scenario.prior_mean is not None:
        return np.asarray(scenario.prior_mean, dtype=float)
    L = psd_factor(scenario.prior_cov())
    return scenario.s0_array + L @ rng.standard_normal(6)


def _run_tracker(name, scenario, model, motion, measurements, m0, cov0, rng):
    """Per-step state estimates for one tracker on a fixed measurement set."""
    k_steps = measurements.shape[0]
    estimates = np.empty((k_steps, 6))
    if name == "ekf":
        belief = GaussianBelief(mean=m0, cov=cov0)
        for k in range(k_steps):
            posterior, belief = ekf_step(belief, measurements[k], model, motion)
            estimates[k] = posterior.mean
    elif name == "mle":
        cfg = scenario.mle_config()
        previous = m0
        for k in range(k_steps):
            try:
                previous = mle(
                    model, measurements[k], cfg.box, cfg.starts, rng,
                    max_iter=cfg.max_iter, grad_tol=cfg.grad_tol,
                )
            except MleFailure:
                warnings.warn(
                    "ML tracker failed; holding the previous estimate",
                    EstimatorFallbackWarning,
                    stacklevel=2,
                )
            estimates[k] = previous
    else:
        is_cfg = scenario.is_config(_IS_KIND[name])
        ps = pf_init(m0, cov0, scenario.particles, rng)
        for k in range(k_steps):
            ps, estimates[k] = pf_step(
                ps, measurements[k], model, motion, is_cfg, rng, propagate=(k > 0)
            )
    return estimates


def run_single(scenario: Scenario, run_index: int) -> RunRecord:
    """One seeded realization: truth, shared measurements, all trackers."""
    master = scenario.seed
    rng_truth = np.random.default_rng(derive_seed(master, run_index, 1))
    rng_meas = np.random.default_rng(derive_seed(master, run_index, 2))
    rng_prior = np.random.default_rng(derive_seed(master, run_index, 3))

    truth = generate_truth(scenario, rng_truth)
    truth_model = scenario.build_truth_model()
    measurements = np.stack(
        [observe_noisy(truth_model, truth[k, :3], rng_meas) for k in range(scenario.steps)]
    )

    m0 = _draw_prior_mean(scenario, rng_prior)
    cov0 = scenario.prior_cov()
    tracker_model = scenario.build_tracker_model()
    tracker_motion = scenario.build_tracker_motion()

    estimates, errors, flags = {}, {}, {}
    for t_index, name in enumerate(scenario.trackers):
        rng_t = np.random.default_rng(derive_seed(master, run_index, 10 + t_index))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            est = _run_tracker(
                name, scenario, tracker_model, tracker_motion, measurements,
                m0, cov0, rng_t,
            )
        estimates[name] = est
        errors[name] = np.linalg.norm(est[:, :3] - truth[:, :3], axis=1)
        flags[name] = {
            key: sum(1 for w in caught if issubclass(w.category, cat))
            for key, cat in _FLAG_CATEGORIES.items()
        }
    return RunRecord(run=run_index, truth=truth, estimates=estimates,
                     errors=errors, flags=flags)


def _run_single_args(args) -> RunRecord:
    return run_single(*args)


def run_campaign(scenario: Scenario, threads: int = 1):
    """All Monte Carlo runs plus a summary.

    Runs are independent with derived substreams; results are ordered by run
    index, so the output is identical for any worker count.

    Returns:
        (records, summary) where summary maps tracker name to pooled metrics.
    """
    t_start = time.perf_counter()
    indices = list(range(scenario.n_runs))
    if threads > 1 and scenario.n_runs > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_run_single_args, [(scenario, i) for i in indices]))
    else:
        records = [run_single(scenario, i) for i in indices]
    elapsed = time.perf_counter() - t_start

    fraunhofer = scenario.fraunhofer()
    reference = np.asarray(scenario.reference, dtype=float)
    thresholds = scenario.cdf_thresholds()
    summary = {
        "n_runs": scenario.n_runs,
        "steps": scenario.steps,
        "fraunhofer_m": fraunhofer,
        "elapsed_s": elapsed,
        "trackers": {},
    }
    for name in scenario.trackers:
        pooled = np.concatenate([rec.errors[name] for rec in records])
        inside = np.concatenate(
            [
                rec.errors[name][
                    np.linalg.norm(rec.truth[:, :3] - reference, axis=1) <= fraunhofer
                ]
                for rec in records
            ]
        )
        cdf = empirical_cdf(pooled, thresholds)
        flag_totals = {
            key: int(sum(rec.flags[name][key] for rec in records))
            for key in _FLAG_CATEGORIES
        }
        summary["trackers"][name] = {
            "median_error_m": float(np.median(pooled)),
            "median_error_inside_fresnel_m": (
                float(np.median(inside)) if inside.size else None
            ),
            "cdf_at_1m": float(np.mean(pooled <= 1.0)),
            "flags": flag_totals,
        }
    return records, summary


def empirical_cdf(errors, thresholds) -> np.ndarray:
    """Fraction of pooled per-step errors at or below each threshold."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("no error records")
    thresholds = np.asarray(thresholds, dtype=float)
    return np.mean(errors[None, :] <= thresholds[:, None], axis=1)


def rmse_per_step(records, name):
    """Per-step position RMSE across runs with its Monte Carlo standard error.

    The standard error follows the delta method for sqrt of a mean:
    ``se(rmse) = std(e^2) / (2 rmse sqrt(n))``.
    """
    errs = np.stack([rec.errors[name] for rec in records])  # (n_runs, K)
    mse = np.mean(errs**2, axis=0)
    rmse = np.sqrt(mse)
    n = errs.shape[0]
    se_mse = np.std(errs**2, axis=0, ddof=1) / np.sqrt(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.where(rmse > 0, se_mse / (2.0 * rmse), 0.0)
    return rmse, se
