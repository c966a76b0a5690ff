"""Analytic phase-model gradients and closed-form Fisher information.

The per-snapshot (data) Fisher information of the wrapped-phase observation
model is assembled from the gradient of the extra-distance function; wrapping
never enters these computations because left/right derivatives at the wrap
discontinuities coincide with the derivative of the unwrapped phase.

Closed forms are provided for the general array (per-parameter sums over
antennas), for rings of antennas with an on-axis source, for half-wavelength
rectangular lattices with an on-axis source, and for their values at the
Fresnel-region boundary and in the far field.  Algebraically equivalent but
cancellation-free rearrangements are used throughout so the far-field decay
is representable; in particular

    2 + x - 2 sqrt(1 + x) == (sqrt(1 + x) - 1)^2
    1 - g r - sqrt(f)     == -r^2 (1 - g^2) / (1 - g r + sqrt(f))

with f = 1 + r^2 - 2 g r.
"""

from __future__ import annotations

import numpy as np

from .geometry import ArrayGeometry, SphericalCoords, _frame_terms
from .observation import MeasurementModel

FOUR_PI_SQ = 4.0 * np.pi**2


def _stable_range_term(r, g):
    """(d extra_distance / d range)^2 per antenna, cancellation-free.

    ``r = d_n0 / d``; equals ``(1 - g r - sqrt(f))^2 / f``.
    """
    f = np.maximum(1.0 + r * (r - 2.0 * g), 0.0)
    sf = np.sqrt(f)
    num = r * r * (1.0 - g * g)
    den = sf * (1.0 - g * r + sf)
    return (num / den) ** 2


def _check_off_axis(sin_theta):
    if np.any(sin_theta == 0.0):
        raise ValueError(
            "source on the array polar axis: azimuth gradient undefined"
        )


def gradient_parts(geom: ArrayGeometry, p):
    """Factorized extra-distance gradients: ``grads = coeffs @ basis``.

    ``coeffs`` holds the per-(source, antenna) scalar weights of the three
    source-frame directions (radial, elevation, azimuth) stacked in
    ``basis``; hot paths contract against the factors directly instead of
    materializing the full (..., N, 3) gradient tensor.

    Returns:
        (delta, coeffs, basis) with shapes (..., N), (..., N, 3), (..., 3, 3).
    """
    p = np.asarray(p, dtype=float)
    d, u, g, r, f_minus_1, f, sf = _frame_terms(geom, p)
    delta = d[..., None] * f_minus_1 / (sf + 1.0)

    cos_t = u[..., 2]
    sin_t = np.hypot(u[..., 0], u[..., 1])
    _check_off_axis(sin_t)
    cos_p = u[..., 0] / sin_t
    sin_p = u[..., 1] / sin_t
    if np.any(f < 1e-300):
        raise ValueError("source position coincides with an antenna")

    inv_d = 1.0 / d
    grad_theta = np.stack([cos_p * cos_t, sin_p * cos_t, -sin_t], axis=-1) * inv_d[..., None]
    grad_phi = np.stack(
        [-sin_p, cos_p, np.zeros_like(sin_p)], axis=-1
    ) * (inv_d / sin_t)[..., None]

    # partial derivatives of g w.r.t. the source angles; the angle
    # differences expand over per-antenna sines/cosines to stay batched
    sin_tn = np.sin(geom.theta_n0)
    cos_tn = np.cos(geom.theta_n0)
    cos_pn = np.cos(geom.phi_n0)
    sin_pn = np.sin(geom.phi_n0)
    cos_dp = cos_pn * cos_p[..., None] + sin_pn * sin_p[..., None]
    sin_dp = sin_pn * cos_p[..., None] - cos_pn * sin_p[..., None]
    dg_dtheta = cos_t[..., None] * sin_tn * cos_dp - sin_t[..., None] * cos_tn
    dg_dphi = sin_dp * sin_tn * sin_t[..., None]

    # scalar coefficients multiplying the three basis gradients:
    # grad dd = (d dd/d d) u + (d dd/d theta) grad_theta + (d dd/d phi) grad_phi
    c_radial = -(r * r) * (1.0 - g * g) / (sf * (1.0 - g * r + sf))
    c_g = -geom.d_n0 / sf
    coeffs = np.stack([c_radial, c_g * dg_dtheta, c_g * dg_dphi], axis=-1)
    basis = np.stack([u, grad_theta, grad_phi], axis=-2)
    return delta, coeffs, basis


def extra_distance_and_gradient(geom: ArrayGeometry, p):
    """Extra distances together with their position gradients.

    One pass over the shared per-(source, antenna) terms; used by hot paths
    that need both the predicted phases and the measurement Jacobian.

    Returns:
        (delta, grads) with shapes (..., N) and (..., N, 3).
    """
    delta, coeffs, basis = gradient_parts(geom, p)
    return delta, coeffs @ basis


def grad_extra_distance(geom: ArrayGeometry, p, n: int | None = None):
    """Gradient of the per-antenna extra distance w.r.t. source position.

    Chain rule through range, elevation and azimuth of the source; the
    radial coefficient is evaluated in its cancellation-free form.  Velocity
    derivatives are identically zero and are not included here (see
    ``trackers.jacobian`` for the padded state-space rows).

    Args:
        geom: array geometry.
        p: source position(s), shape (..., 3); must be off the polar axis.
        n: optional antenna index.

    Returns:
        (..., N, 3) array of dimensionless gradients (or (..., 3) for fixed n).
    """
    _, grads = extra_distance_and_gradient(geom, p)
    if n is None:
        return grads
    return grads[..., n, :]


def data_fim_state(model: MeasurementModel, p):
    """Single-snapshot Fisher information over the 6-dim state at position p.

    ``(1/sigma^2) (2 pi / lambda)^2 sum_n grad dd_n grad dd_n^T`` in the
    position block; velocity rows and columns are identically zero.
    Broadcasts over positions (..., 3) -> (..., 6, 6).
    """
    if model.sigma_eta <= 0.0:
        raise ValueError("data FIM requires sigma_eta > 0")
    grads = grad_extra_distance(model.geometry, p)
    scale = FOUR_PI_SQ / (model.lam**2 * model.sigma_eta**2)
    pos_block = scale * np.einsum("...ni,...nj->...ij", grads, grads)
    out_shape = pos_block.shape[:-2] + (6, 6)
    fim = np.zeros(out_shape)
    fim[..., :3, :3] = pos_block
    return fim


def _polar_terms(d_n0, theta_n0, phi_n0, source: SphericalCoords):
    """Per-antenna squared derivatives of the extra distance in (d, theta, phi)."""
    g = np.sin(theta_n0) * np.sin(source.theta) * np.cos(phi_n0 - source.phi) + np.cos(
        theta_n0
    ) * np.cos(source.theta)
    r = d_n0 / source.d
    f = np.maximum(1.0 + r * (r - 2.0 * g), 0.0)
    dg_dtheta = np.cos(source.theta) * np.sin(theta_n0) * np.cos(
        phi_n0 - source.phi
    ) - np.sin(source.theta) * np.cos(theta_n0)
    dg_dphi = np.sin(phi_n0 - source.phi) * np.sin(theta_n0) * np.sin(source.theta)
    return {
        "range": _stable_range_term(r, g),
        "elevation": d_n0**2 / f * dg_dtheta**2,
        "azimuth": d_n0**2 / f * dg_dphi**2,
    }


def data_fim_polar(model: MeasurementModel, source: SphericalCoords, which: str) -> float:
    """Scalar Fisher information on range, elevation, or azimuth.

    Exact for any array geometry and source position:
    ``(4 pi^2 / (lambda^2 sigma^2)) sum_n (d dd_n / d xi)^2``.
    """
    if model.sigma_eta <= 0.0:
        raise ValueError("data FIM requires sigma_eta > 0")
    terms = _polar_terms(
        model.geometry.d_n0, model.geometry.theta_n0, model.geometry.phi_n0, source
    )
    if which not in terms:
        raise ValueError(f"unknown parameter {which!r}; use range/elevation/azimuth")
    scale = FOUR_PI_SQ / (model.lam**2 * model.sigma_eta**2)
    return float(scale * np.sum(terms[which]))


def fim_circular(n: int, diameter: float, lam: float, sigma_eta: float, d: float):
    """Range/elevation/azimuth FIM for a ring with an on-axis source.

    Requires the source on the ring's perpendicular axis (geometric term zero
    for every antenna).  The angle expressions use the identity
    ``sum cos^2(2 pi k / n) = n / 2``, valid for n >= 3.

    Returns:
        (j_range, j_elevation, j_azimuth).
    """
    x = diameter**2 / (4.0 * d**2)
    rt = x / (np.sqrt(1.0 + x) + 1.0)  # sqrt(1+x) - 1 without cancellation
    j_d = (4.0 * n * np.pi**2 / (lam**2 * sigma_eta**2)) * rt**2 / (1.0 + x)
    j_ang = (n * np.pi**2 / (2.0 * lam**2 * sigma_eta**2)) * diameter**2 / (1.0 + x)
    return float(j_d), float(j_ang), float(j_ang)


def fim_circular_at_fresnel(n: int, diameter: float, lam: float, sigma_eta: float):
    """Ring FIMs evaluated at the Fraunhofer distance, where
    ``D^2 / 4 d^2 = lambda^2 / 16 D^2``."""
    x = lam**2 / (16.0 * diameter**2)
    rt = x / (np.sqrt(1.0 + x) + 1.0)
    j_d = (4.0 * n * np.pi**2 / (lam**2 * sigma_eta**2)) * rt**2 / (1.0 + x)
    j_ang = (n * np.pi**2 / (2.0 * lam**2 * sigma_eta**2)) * diameter**2 / (1.0 + x)
    return float(j_d), float(j_ang), float(j_ang)


def fim_circular_far_field(n: int, diameter: float, lam: float, sigma_eta: float):
    """Ring FIM limits for distances far beyond the Fraunhofer boundary."""
    j_ang = diameter**2 * n * np.pi**2 / (2.0 * lam**2 * sigma_eta**2)
    return 0.0, float(j_ang), float(j_ang)


def _rect_indices(n_y: int, n_z: int):
    iy, iz = np.meshgrid(np.arange(n_y, dtype=float), np.arange(n_z, dtype=float), indexing="ij")
    return iy.ravel(), iz.ravel()


def fim_rectangular(n_y: int, n_z: int, lam: float, sigma_eta: float, d: float):
    """Range/elevation/azimuth FIM for a half-wavelength rectangular lattice
    with an on-axis source.

    Antenna (iy, iz) sits at ``(lambda/2) (0, iy, iz)``; the source is on the
    lattice's perpendicular axis.  Returns (j_range, j_elevation, j_azimuth).
    """
    iy, iz = _rect_indices(n_y, n_z)
    n_sq = iy**2 + iz**2
    x = lam**2 * n_sq / (4.0 * d**2)
    rt = x / (np.sqrt(1.0 + x) + 1.0)
    j_d = (FOUR_PI_SQ / (lam**2 * sigma_eta**2)) * np.sum(rt**2 / (1.0 + x))
    # n_tilde^2 cos^2(theta_n0) = iz^2 and sin^2 -> iy^2
    common = d**2 / (n_sq * lam**2 + 4.0 * d**2)
    j_theta = (FOUR_PI_SQ / sigma_eta**2) * np.sum(iz**2 * common)
    j_phi = (FOUR_PI_SQ / sigma_eta**2) * np.sum(iy**2 * common)
    return float(j_d), float(j_theta), float(j_phi)


def fim_rectangular_at_fresnel(n_y: int, n_z: int, sigma_eta: float, lam: float = 1.0):
    """Rectangular-lattice FIMs at the Fraunhofer distance.

    Uses the whole-count aperture ``D = (lambda/2) sqrt(n_y^2 + n_z^2)`` so
    the per-antenna weight is ``x_n = (n_tilde / N_tilde^2)^2``, independent
    of the wavelength.  The angle values are wavelength-free as printed; the
    range value carries a ``1/lambda^2`` prefactor, so pass ``lam`` to get an
    absolute value (the default reports it in units of ``1/lambda^2``).
    """
    iy, iz = _rect_indices(n_y, n_z)
    n_sq = iy**2 + iz**2
    big_n_sq = float(n_y**2 + n_z**2)
    x = n_sq / big_n_sq**2
    rt = x / (np.sqrt(1.0 + x) + 1.0)
    j_d = (FOUR_PI_SQ / (lam**2 * sigma_eta**2)) * np.sum(rt**2 / (1.0 + x))
    j_theta = (np.pi**2 / sigma_eta**2) * np.sum(iz**2 / (1.0 + x))
    j_phi = (np.pi**2 / sigma_eta**2) * np.sum(iy**2 / (1.0 + x))
    return float(j_d), float(j_theta), float(j_phi)


def fim_rectangular_far_field(n_y: int, n_z: int, sigma_eta: float):
    """Rectangular-lattice FIM limits far beyond the Fraunhofer boundary.

    The elevation information grows with the antenna count along z and the
    azimuth information with the count along y.
    """
    j_theta = (np.pi**2 / sigma_eta**2) * n_y * n_z * (2 * n_z - 1) * (n_z - 1) / 6.0
    j_phi = (np.pi**2 / sigma_eta**2) * n_y * n_z * (2 * n_y - 1) * (n_y - 1) / 6.0
    return 0.0, float(j_theta), float(j_phi)
