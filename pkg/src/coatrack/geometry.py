"""Antenna-array geometry and source coordinates.

Everything downstream (phases, Fisher information, trackers) is driven by the
relative geometry between a source point and an array: per-antenna offsets
from a reference location, the spherical coordinates of the source seen from
that reference, and the extra propagation distance each antenna sees relative
to the reference.  All functions here are pure and broadcast over batches of
source positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SphericalCoords:
    """Range/elevation/azimuth of a point relative to a reference.

    Conventions: ``d >= 0``; elevation ``theta`` in [0, pi] measured from the
    +z axis; azimuth ``phi`` in (-pi, pi] measured from +x toward +y.
    """

    d: float
    theta: float
    phi: float


@dataclass(frozen=True)
class ArrayGeometry:
    """A rigid antenna array described relative to a reference location.

    ``d_n0``, ``theta_n0``, ``phi_n0`` give the spherical coordinates of each
    antenna as seen from ``reference``.  ``diameter`` is the array aperture
    used for the field-region boundaries.  ``ring_convention`` marks arrays
    whose reference is a virtual point (ring center) rather than antenna 0,
    in which case ``d_n0[0] != 0``.
    """

    reference: np.ndarray
    antennas: np.ndarray
    d_n0: np.ndarray
    theta_n0: np.ndarray
    phi_n0: np.ndarray
    diameter: float
    ring_convention: bool = False
    # cached unit direction vectors toward each antenna, zeros for d_n0 == 0
    unit_n0: np.ndarray = field(repr=False, default=None)

    @property
    def n_antennas(self) -> int:
        return self.antennas.shape[0]

    @classmethod
    def from_positions(cls, reference, antennas, diameter=None, ring_convention=False):
        """Build a geometry from explicit antenna positions.

        Derived angles follow :func:`to_spherical`; an antenna coincident with
        the reference gets ``theta = phi = 0`` (its angles are unobservable).
        """
        reference = np.asarray(reference, dtype=float).reshape(3)
        antennas = np.atleast_2d(np.asarray(antennas, dtype=float))
        offsets = antennas - reference
        d_n0 = np.linalg.norm(offsets, axis=1)
        theta_n0 = np.zeros_like(d_n0)
        phi_n0 = np.zeros_like(d_n0)
        nz = d_n0 > 0.0
        # atan2 form of the elevation is well-conditioned at the poles
        theta_n0[nz] = np.arctan2(
            np.hypot(offsets[nz, 0], offsets[nz, 1]), offsets[nz, 2]
        )
        phi_n0[nz] = np.arctan2(offsets[nz, 1], offsets[nz, 0])
        phi_n0[phi_n0 == -np.pi] = np.pi
        if diameter is None:
            diameter = _max_pairwise_distance(antennas)
        return cls(
            reference=reference,
            antennas=antennas,
            d_n0=d_n0,
            theta_n0=theta_n0,
            phi_n0=phi_n0,
            diameter=float(diameter),
            ring_convention=ring_convention,
            unit_n0=_unit_vectors(theta_n0, phi_n0, d_n0),
        )


def _max_pairwise_distance(points: np.ndarray) -> float:
    if points.shape[0] == 1:
        return 0.0
    diff = points[:, None, :] - points[None, :, :]
    return float(np.max(np.linalg.norm(diff, axis=-1)))


def _unit_vectors(theta, phi, d_n0):
    u = np.stack(
        [np.cos(phi) * np.sin(theta), np.sin(phi) * np.sin(theta), np.cos(theta)],
        axis=-1,
    )
    u[d_n0 == 0.0] = 0.0
    return u


def make_rectangular_array(n_y: int, n_z: int, spacing: float, reference) -> ArrayGeometry:
    """Uniform rectangular array on the YZ-plane, antenna 0 at the reference.

    Antenna (iy, iz) sits at ``reference + spacing * (0, iy, iz)`` with
    ``iy in [0, n_y)``, ``iz in [0, n_z)``, enumerated iy-major.  The aperture
    is the corner-to-corner span ``spacing * sqrt((n_y-1)^2 + (n_z-1)^2)``.
    Off-reference antennas get azimuth pi/2 (they lie in the x=const plane);
    pure-z antennas keep that value since it is unobservable at theta = 0.
    """
    if n_y < 1 or n_z < 1:
        raise ValueError("antenna counts must be >= 1")
    if spacing <= 0.0:
        raise ValueError("spacing must be positive")
    reference = np.asarray(reference, dtype=float).reshape(3)
    iy, iz = np.meshgrid(np.arange(n_y), np.arange(n_z), indexing="ij")
    iy = iy.ravel().astype(float)
    iz = iz.ravel().astype(float)
    antennas = reference + spacing * np.stack([np.zeros_like(iy), iy, iz], axis=1)
    n_tilde = np.hypot(iy, iz)
    d_n0 = spacing * n_tilde
    theta_n0 = np.zeros_like(d_n0)
    nz = n_tilde > 0.0
    theta_n0[nz] = np.arccos(iz[nz] / n_tilde[nz])
    phi_n0 = np.full_like(d_n0, np.pi / 2.0)
    phi_n0[0] = 0.0
    diameter = spacing * float(np.hypot(n_y - 1, n_z - 1))
    return ArrayGeometry(
        reference=reference,
        antennas=antennas,
        d_n0=d_n0,
        theta_n0=theta_n0,
        phi_n0=phi_n0,
        diameter=diameter,
        unit_n0=_unit_vectors(theta_n0, phi_n0, d_n0),
    )


def make_circular_array(n: int, diameter: float, reference) -> ArrayGeometry:
    """Ring of ``n`` antennas on the YZ-plane centered at the reference.

    Every antenna is at range ``diameter / 2`` from the reference with
    azimuth pi/2 and elevation ``2*pi*k/n``.  The reference is the ring
    center, not an array element, so ``d_n0[0] != 0``; the instance records
    this via ``ring_convention``.
    """
    if n < 1:
        raise ValueError("antenna count must be >= 1")
    if diameter <= 0.0:
        raise ValueError("diameter must be positive")
    reference = np.asarray(reference, dtype=float).reshape(3)
    theta_n0 = TWO_PI * np.arange(n) / n
    phi_n0 = np.full(n, np.pi / 2.0)
    d_n0 = np.full(n, diameter / 2.0)
    unit = _unit_vectors(theta_n0, phi_n0, d_n0)
    antennas = reference + d_n0[:, None] * unit
    return ArrayGeometry(
        reference=reference,
        antennas=antennas,
        d_n0=d_n0,
        theta_n0=theta_n0,
        phi_n0=phi_n0,
        diameter=float(diameter),
        ring_convention=True,
        unit_n0=unit,
    )


def to_spherical(p, reference) -> SphericalCoords:
    """Range/elevation/azimuth of point ``p`` seen from ``reference``.

    Raises for coincident points (angles undefined).  On the polar axis the
    azimuth is unobservable and returned as 0.
    """
    p = np.asarray(p, dtype=float).reshape(3)
    reference = np.asarray(reference, dtype=float).reshape(3)
    off = p - reference
    d = float(np.linalg.norm(off))
    if d == 0.0:
        raise ValueError("point coincides with the reference; angles undefined")
    theta = float(np.arctan2(np.hypot(off[0], off[1]), off[2]))
    phi = float(np.arctan2(off[1], off[0]))
    if phi == -np.pi:
        phi = np.pi
    return SphericalCoords(d=d, theta=theta, phi=phi)


def from_spherical(coords: SphericalCoords, reference) -> np.ndarray:
    """Inverse of :func:`to_spherical`."""
    reference = np.asarray(reference, dtype=float).reshape(3)
    st = np.sin(coords.theta)
    return reference + coords.d * np.array(
        [np.cos(coords.phi) * st, np.sin(coords.phi) * st, np.cos(coords.theta)]
    )


def geometric_term(theta_n0, phi_n0, theta, phi):
    """Cosine of the angle between the antenna and source directions.

    ``sin(theta_n0) sin(theta) cos(phi_n0 - phi) + cos(theta_n0) cos(theta)``,
    broadcast over any mix of antenna and source angle arrays.
    """
    return np.sin(theta_n0) * np.sin(theta) * np.cos(phi_n0 - phi) + np.cos(
        theta_n0
    ) * np.cos(theta)


def _source_frame(geom: ArrayGeometry, p):
    """Per-source (d, unit vector, g per antenna) for a batch of positions.

    ``p`` has shape (..., 3); returns d (...,), u (..., 3), g (..., N).
    The geometric term is evaluated as the Cartesian dot product of unit
    direction vectors, which equals its angular form identically.
    """
    p = np.asarray(p, dtype=float)
    off = p - geom.reference
    d = np.linalg.norm(off, axis=-1)
    if np.any(d == 0.0):
        raise ValueError("source position coincides with the reference")
    u = off / d[..., None]
    g = u @ geom.unit_n0.T
    return d, u, g


def _frame_terms(geom: ArrayGeometry, p):
    """Shared per-(source, antenna) quantities for phases and gradients.

    Returns d (...,), u (..., 3), g (..., N), r = d_n0/d, f - 1, f, sqrt(f).
    """
    d, u, g = _source_frame(geom, p)
    r = geom.d_n0 * (1.0 / d)[..., None]
    f_minus_1 = r * (r - 2.0 * g)
    # f = (1 - r)^2 at g = 1; clamp tiny negative rounding away from sqrt
    f = np.maximum(1.0 + f_minus_1, 0.0)
    return d, u, g, r, f_minus_1, f, np.sqrt(f)


def extra_distance(geom: ArrayGeometry, p, n: int | None = None):
    """Extra distance traveled to reach each antenna relative to the reference.

    Computed as ``d * (sqrt(f_n) - 1)`` with
    ``f_n = 1 + (d_n0/d)^2 - 2 (d_n0/d) g_n``, evaluated in the
    cancellation-free form ``d (f_n - 1) / (sqrt(f_n) + 1)``.
    Equals ``|q_n - p| - |q_0 - p|`` exactly.

    Args:
        geom: array geometry.
        p: source position(s), shape (..., 3).
        n: optional antenna index; when given, returns that antenna's value.

    Returns:
        (..., N) array of extra distances in meters (or (...,) for fixed n).
    """
    d, _, _, _, f_minus_1, _, sf = _frame_terms(geom, p)
    delta = d[..., None] * f_minus_1 / (sf + 1.0)
    if n is None:
        return delta
    return delta[..., n]


def field_boundaries(diameter: float, lam: float) -> tuple[float, float]:
    """(inner radiating near-field radius, Fraunhofer distance).

    ``0.62 sqrt(D^3 / lambda)`` and ``2 D^2 / lambda``.
    """
    if diameter <= 0.0 or lam <= 0.0:
        raise ValueError("diameter and wavelength must be positive")
    return 0.62 * np.sqrt(diameter**3 / lam), 2.0 * diameter**2 / lam
