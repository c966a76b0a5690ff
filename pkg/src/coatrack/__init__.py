"""Near-field source tracking with a single large antenna array.

The wavefront reaching a large array is spherical when the source sits in
the radiating near field, so the per-antenna differential phase profile
carries both bearing and range.  This package simulates that observation
model, provides closed-form and recursive information bounds for it, and
implements EKF / maximum-likelihood / particle-filter trackers together
with a reproducible Monte Carlo campaign harness and CLI.
"""

from .geometry import (
    ArrayGeometry,
    SphericalCoords,
    extra_distance,
    field_boundaries,
    from_spherical,
    geometric_term,
    make_circular_array,
    make_rectangular_array,
    to_spherical,
)
from .motion import MotionModel, make_ncv, propagate
from .observation import (
    MeasurementModel,
    log_likelihood,
    observe_clean,
    observe_noisy,
    phase_residual,
)
from .trackers import (
    GaussianBelief,
    IsConfig,
    MleConfig,
    ParticleSet,
    ekf_step,
    jacobian,
    mle,
    pf_init,
    pf_step,
    resample_multinomial,
)

__all__ = [
    "ArrayGeometry",
    "SphericalCoords",
    "MeasurementModel",
    "MotionModel",
    "GaussianBelief",
    "ParticleSet",
    "IsConfig",
    "MleConfig",
    "make_rectangular_array",
    "make_circular_array",
    "to_spherical",
    "from_spherical",
    "geometric_term",
    "extra_distance",
    "field_boundaries",
    "observe_clean",
    "observe_noisy",
    "phase_residual",
    "log_likelihood",
    "make_ncv",
    "propagate",
    "jacobian",
    "ekf_step",
    "mle",
    "pf_init",
    "pf_step",
    "resample_multinomial",
]

__version__ = "0.1.0"
