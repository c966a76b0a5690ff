import numpy as np
import pytest

from coatrack import fisher as F
from coatrack import geometry as G
from coatrack import observation as O

C_LIGHT = 299792458.0
LAM28 = C_LIGHT / 28e9
SIGMA = np.deg2rad(20.0)


def fd_gradient(geom, p, step):
    out = np.empty((geom.n_antennas, 3))
    for i in range(3):
        e = np.zeros(3)
        e[i] = step
        out[:, i] = (
            G.extra_distance(geom, p + e) - G.extra_distance(geom, p - e)
        ) / (2 * step)
    return out


class TestGradient:
    def test_reference_antenna_zero(self, array_20x20):
        g = F.grad_extra_distance(array_20x20, [2.0, 1.0, 1.4], n=0)
        np.testing.assert_array_equal(g, np.zeros(3))

    def test_finite_difference_oracle(self, array_20x20, rng):
        for _ in range(100):
            p = array_20x20.reference + rng.normal(scale=3.0, size=3)
            d = np.linalg.norm(p - array_20x20.reference)
            if d < 0.05 or np.hypot(*(p - array_20x20.reference)[:2]) < 1e-3:
                continue
            grads = F.grad_extra_distance(array_20x20, p)
            fd = fd_gradient(array_20x20, p, 1e-6 * max(1.0, d))
            num = np.linalg.norm(grads - fd, axis=1)[1:]
            den = np.linalg.norm(fd, axis=1)[1:]
            assert np.max(num / den) < 1e-6

    def test_far_field_decay(self, array_20x20):
        d_f = G.field_boundaries(array_20x20.diameter, 0.01)[1]
        direction = np.array([1.0, 0.3, 0.1])
        direction /= np.linalg.norm(direction)
        near = F.grad_extra_distance(
            array_20x20, array_20x20.reference + d_f * direction
        )
        far = F.grad_extra_distance(
            array_20x20, array_20x20.reference + 1e3 * d_f * direction
        )
        scale = np.max(np.abs(near))
        assert np.max(np.abs(far)) < 1e-3 * scale

    def test_polar_axis_rejected(self, array_20x20):
        with pytest.raises(ValueError):
            F.grad_extra_distance(array_20x20, array_20x20.reference + [0, 0, 2.0])


class TestDataFimState:
    def test_single_antenna_zero(self):
        geom = G.make_rectangular_array(1, 1, 0.005, [0.0, 0.0, 0.0])
        model = O.MeasurementModel(geom, 0.01, SIGMA)
        fim = F.data_fim_state(model, [1.0, 0.5, 0.2])
        np.testing.assert_array_equal(fim, np.zeros((6, 6)))

    def test_matches_jacobian_outer_product(self, model_20x20, rng):
        from coatrack.trackers import jacobian

        for _ in range(10):
            p = model_20x20.geometry.reference + rng.normal(scale=2.0, size=3)
            if np.hypot(*(p - model_20x20.geometry.reference)[:2]) < 1e-2:
                continue
            fim = F.data_fim_state(model_20x20, p)
            H = jacobian(model_20x20, p)
            ref = H.T @ H / model_20x20.sigma_eta**2
            np.testing.assert_allclose(fim, ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())

    def test_velocity_block_zero(self, model_20x20):
        fim = F.data_fim_state(model_20x20, [2.0, 1.0, 1.4])
        np.testing.assert_array_equal(fim[3:, :], np.zeros((3, 6)))
        np.testing.assert_array_equal(fim[:, 3:], np.zeros((6, 3)))

    def test_far_field_vanishes(self, model_20x20):
        d_f = G.field_boundaries(model_20x20.geometry.diameter, model_20x20.lam)[1]
        u = np.array([1.0, 0.2, 0.05])
        u /= np.linalg.norm(u)
        ref = model_20x20.geometry.reference
        near = F.data_fim_state(model_20x20, ref + 0.5 * d_f * u)
        far = F.data_fim_state(model_20x20, ref + 100 * d_f * u)
        assert np.linalg.norm(far) < 1e-4 * np.linalg.norm(near)

    def test_positive_semidefinite(self, model_20x20, rng):
        for _ in range(20):
            p = model_20x20.geometry.reference + rng.normal(scale=3.0, size=3)
            if np.hypot(*(p - model_20x20.geometry.reference)[:2]) < 1e-2:
                continue
            fim = F.data_fim_state(model_20x20, p)
            eigs = np.linalg.eigvalsh(fim)
            assert eigs.min() >= -1e-9 * max(eigs.max(), 1.0)

    def test_sigma_scale_law(self, array_20x20):
        p = [2.0, 1.0, 1.4]
        a = F.data_fim_state(O.MeasurementModel(array_20x20, 0.01, 0.1), p)
        b = F.data_fim_state(O.MeasurementModel(array_20x20, 0.01, 0.3), p)
        np.testing.assert_allclose(a, 9.0 * b, rtol=1e-12)


def circular_model(n=400, diameter=0.14):
    geom = G.make_circular_array(n, diameter, [0.0, 0.0, 0.0])
    return O.MeasurementModel(geom, LAM28, SIGMA)


def boresight(d):
    return G.SphericalCoords(d=d, theta=np.pi / 2, phi=0.0)


class TestPolarFim:
    def test_range_info_vanishes_far_out(self):
        model = circular_model()
        d_f = G.field_boundaries(0.14, LAM28)[1]
        near = F.data_fim_polar(model, boresight(0.5 * d_f), "range")
        far = F.data_fim_polar(model, boresight(1e6 * d_f), "range")
        assert far < 1e-12 * near

    def test_matches_circular_closed_form(self):
        model = circular_model()
        for d in (0.5, 2.0, 3.66, 50.0):
            closed = F.fim_circular(400, 0.14, LAM28, SIGMA, d)
            for which, expected in zip(("range", "elevation", "azimuth"), closed):
                general = F.data_fim_polar(model, boresight(d), which)
                assert general == pytest.approx(expected, rel=1e-10)

    def test_matches_finite_difference_of_extra_distance(self):
        model = circular_model(n=64, diameter=0.2)
        d = 1.3
        h = 1e-6 * max(1.0, d)
        src = boresight(d)
        geom = model.geometry
        p_of = lambda dd: G.from_spherical(G.SphericalCoords(dd, src.theta, src.phi), geom.reference)
        deriv = (G.extra_distance(geom, p_of(d + h)) - G.extra_distance(geom, p_of(d - h))) / (2 * h)
        expected = (4 * np.pi**2 / (LAM28**2 * SIGMA**2)) * np.sum(deriv**2)
        got = F.data_fim_polar(model, src, "range")
        assert got == pytest.approx(expected, rel=1e-6)

    def test_off_axis_matches_printed_circular_sums(self):
        # circular-array specialization at a generic source position,
        # evaluated from its printed form (well-conditioned distances only)
        n, diameter = 64, 0.2
        model = circular_model(n=n, diameter=diameter)
        src = G.SphericalCoords(d=0.35, theta=1.1, phi=0.4)
        theta_n0 = 2 * np.pi * np.arange(n) / n
        g = np.sin(theta_n0) * np.sin(src.theta) * np.cos(np.pi / 2 - src.phi) + np.cos(
            theta_n0
        ) * np.cos(src.theta)
        d, D = src.d, diameter
        denom = 4 * d**2 + D**2 - 4 * g * d * D
        jd = (4 * np.pi**2 / (LAM28**2 * SIGMA**2)) * np.sum(
            (8 * d**2 + D**2 * (g**2 + 1) - 8 * g * d * D
             - 2 * (2 * d - g * D) * np.sqrt(denom)) / denom
        )
        dg_dt = np.cos(src.theta) * np.sin(theta_n0) * np.cos(np.pi / 2 - src.phi) \
            - np.sin(src.theta) * np.cos(theta_n0)
        dg_dp = np.sin(np.pi / 2 - src.phi) * np.sin(theta_n0) * np.sin(src.theta)
        jt = (4 * np.pi**2 / (LAM28**2 * SIGMA**2)) * np.sum(d**2 * D**2 / denom * dg_dt**2)
        jp = (4 * np.pi**2 / (LAM28**2 * SIGMA**2)) * np.sum(d**2 * D**2 / denom * dg_dp**2)
        assert F.data_fim_polar(model, src, "range") == pytest.approx(jd, rel=1e-10)
        assert F.data_fim_polar(model, src, "elevation") == pytest.approx(jt, rel=1e-10)
        assert F.data_fim_polar(model, src, "azimuth") == pytest.approx(jp, rel=1e-10)

    def test_unknown_parameter_rejected(self):
        with pytest.raises(ValueError):
            F.data_fim_polar(circular_model(), boresight(1.0), "bogus")


class TestCircularClosedForms:
    def test_far_field_limits(self):
        jd, jt, jp = F.fim_circular(400, 0.14, LAM28, SIGMA, 1e9)
        _, jt_inf, jp_inf = F.fim_circular_far_field(400, 0.14, LAM28, SIGMA)
        assert jd == pytest.approx(0.0, abs=1e-12 * jt_inf)
        assert jt == pytest.approx(jt_inf, rel=1e-9)
        assert jp == pytest.approx(jp_inf, rel=1e-9)

    def test_fresnel_boundary_specialization(self):
        d_f = G.field_boundaries(0.14, LAM28)[1]
        at_df = F.fim_circular(400, 0.14, LAM28, SIGMA, d_f)
        boundary = F.fim_circular_at_fresnel(400, 0.14, LAM28, SIGMA)
        np.testing.assert_allclose(at_df, boundary, rtol=1e-12)
        # angle information is already at its asymptote near the boundary
        _, jt_inf, _ = F.fim_circular_far_field(400, 0.14, LAM28, SIGMA)
        assert boundary[1] == pytest.approx(jt_inf, rel=1e-3)

    def test_range_info_strictly_decreasing(self):
        lower, d_f = G.field_boundaries(0.14, LAM28)
        ds = np.linspace(lower, 100 * d_f, 400)
        jds = np.array([F.fim_circular(400, 0.14, LAM28, SIGMA, d)[0] for d in ds])
        assert np.all(np.diff(jds) < 0.0)

    def test_elevation_equals_azimuth(self):
        _, jt, jp = F.fim_circular(100, 0.2, LAM28, SIGMA, 1.7)
        assert jt == jp


class TestRectangularClosedForms:
    def test_far_field_formulas(self):
        _, jt, jp = F.fim_rectangular(2, 2, LAM28, SIGMA, 1e7)
        expected = 2 * np.pi**2 / SIGMA**2
        assert jt == pytest.approx(expected, rel=1e-8)
        assert jp == pytest.approx(expected, rel=1e-8)
        ff = F.fim_rectangular_far_field(2, 2, SIGMA)
        assert ff[1] == pytest.approx(expected)
        assert ff[2] == pytest.approx(expected)

    def test_far_field_counts_drive_angles(self):
        _, jt, jp = F.fim_rectangular_far_field(10, 3, SIGMA)
        assert jt == pytest.approx((np.pi**2 / SIGMA**2) * 10 * 3 * 5 * 2 / 6)
        assert jp == pytest.approx((np.pi**2 / SIGMA**2) * 10 * 3 * 19 * 9 / 6)

    def test_matches_general_sums(self, rng):
        model = O.MeasurementModel(
            G.make_rectangular_array(20, 20, LAM28 / 2, [0.0, 0.0, 0.0]), LAM28, SIGMA
        )
        for d in (0.5, 3.0, 40.0):
            closed = F.fim_rectangular(20, 20, LAM28, SIGMA, d)
            for which, expected in zip(("range", "elevation", "azimuth"), closed):
                general = F.data_fim_polar(model, boresight(d), which)
                assert general == pytest.approx(expected, rel=1e-10)

    def test_fresnel_specialization_consistency(self):
        # whole-count aperture convention: D = (lam/2) sqrt(ny^2 + nz^2)
        big_d = (LAM28 / 2) * np.hypot(20, 20)
        d_f = 2 * big_d**2 / LAM28
        boundary = F.fim_rectangular_at_fresnel(20, 20, SIGMA, lam=LAM28)
        direct = F.fim_rectangular(20, 20, LAM28, SIGMA, d_f)
        np.testing.assert_allclose(boundary, direct, rtol=1e-9)

    def test_fresnel_specialization_single_antenna(self):
        assert F.fim_rectangular_at_fresnel(1, 1, SIGMA) == (0.0, 0.0, 0.0)

    def test_fresnel_specialization_symmetry(self):
        _, jt, jp = F.fim_rectangular_at_fresnel(14, 14, SIGMA)
        assert jt == pytest.approx(jp, rel=1e-12)

    def test_angle_values_wavelength_free(self):
        a = F.fim_rectangular_at_fresnel(8, 5, SIGMA, lam=0.01)
        b = F.fim_rectangular_at_fresnel(8, 5, SIGMA, lam=1.0)
        assert a[1] == pytest.approx(b[1], rel=1e-14)
        assert a[2] == pytest.approx(b[2], rel=1e-14)
        assert a[0] == pytest.approx(b[0] / 0.01**2, rel=1e-12)
