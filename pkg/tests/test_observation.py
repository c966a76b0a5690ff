import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coatrack import geometry as G
from coatrack import observation as O

angle = st.floats(-6.0, 6.0, allow_nan=False)


def line_array(n=3, spacing=0.004):
    return G.make_rectangular_array(n, 1, spacing, [0.0, 0.0, 0.0])


class TestWrap:
    def test_keeps_sign_of_argument(self):
        assert O.wrap_signed(2.5 * np.pi) == pytest.approx(0.5 * np.pi)
        assert O.wrap_signed(-2.5 * np.pi) == pytest.approx(-0.5 * np.pi)
        assert O.wrap_signed(0.3) == pytest.approx(0.3)
        assert O.wrap_signed(-0.3) == pytest.approx(-0.3)

    @given(x=st.floats(-100.0, 100.0, allow_nan=False))
    @settings(max_examples=200, deadline=None)
    def test_range_open_two_pi(self, x):
        w = O.wrap_signed(x)
        assert -2 * np.pi < w < 2 * np.pi
        assert np.sign(w) in (0.0, np.sign(x))


class TestObserveClean:
    def test_reference_element_zero(self, model_20x20):
        z = O.observe_clean(model_20x20, [2.0, 1.0, 1.4])
        assert z[0] == 0.0

    def test_quarter_wavelength(self):
        # one antenna a quarter wavelength farther: phase pi/2
        geom = G.ArrayGeometry.from_positions(
            [0.0, 0.0, 0.0], [[0.0, 0.0, 0.0], [0.0, 0.0, 0.1]]
        )
        model = O.MeasurementModel(geom, 0.01, 0.0)
        p = np.array([10.0, 0.0, 0.0])
        delta = G.extra_distance(geom, p, n=1)
        expected = O.wrap_signed(2 * np.pi / 0.01 * delta)
        z = O.observe_clean(model, p)
        assert z[1] == pytest.approx(expected)

    def test_wrap_convention_values(self):
        # 0.25 wavelengths -> pi/2; 1.25 wavelengths (2.5 pi) -> pi/2 again
        lam = 0.01
        assert O.wrap_signed(2 * np.pi / lam * 0.0025) == pytest.approx(np.pi / 2)
        assert O.wrap_signed(2 * np.pi / lam * 0.0125) == pytest.approx(np.pi / 2)

    def test_invariant_to_whole_wavelength_path_shift(self, model_20x20, rng):
        p = np.array([1.7, -0.4, 1.2])
        base = O.unwrapped_phase(model_20x20, p)
        for k in (-3, 1, 7):
            shifted = O.wrap_signed(base + 2 * np.pi * k)
            r = O.phase_residual(shifted, O.observe_clean(model_20x20, p))
            np.testing.assert_allclose(r, 0.0, atol=1e-9)


class TestObserveNoisy:
    def test_zero_noise_equals_clean(self, model_20x20, rng):
        model = O.MeasurementModel(model_20x20.geometry, model_20x20.lam, 0.0)
        p = [2.0, 0.5, 1.2]
        np.testing.assert_array_equal(
            O.observe_noisy(model, p, rng), O.observe_clean(model, p)
        )

    def test_deterministic_given_seed(self, model_20x20):
        p = [2.0, 0.5, 1.2]
        a = O.observe_noisy(model_20x20, p, np.random.default_rng(99))
        b = O.observe_noisy(model_20x20, p, np.random.default_rng(99))
        np.testing.assert_array_equal(a, b)

    def test_noise_moment(self):
        # sample std of the wrapped residual matches sigma within 2 percent
        geom = line_array()
        sigma = np.deg2rad(20.0)
        model = O.MeasurementModel(geom, 0.01, sigma)
        p = np.array([3.0, 0.2, 0.1])
        rng = np.random.default_rng(4)
        draws = O.observe_noisy(model, np.tile(p, (100_000, 1)), rng)
        clean = O.observe_clean(model, p)
        resid = O.phase_residual(draws, clean)
        assert np.std(resid[:, 1]) == pytest.approx(sigma, rel=0.02)


class TestPhaseResidual:
    def test_identical_inputs(self):
        z = np.array([0.1, -2.0, 3.0])
        np.testing.assert_array_equal(O.phase_residual(z, z), np.zeros(3))

    def test_nearest_representative(self):
        r = O.phase_residual(np.array([0.1]), np.array([2 * np.pi - 0.1]))
        assert r[0] == pytest.approx(0.2)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            O.phase_residual(np.zeros(3), np.zeros(4))

    @given(z=st.lists(angle, min_size=1, max_size=8),
           h=st.lists(angle, min_size=1, max_size=8))
    @settings(max_examples=300, deadline=None)
    def test_range_and_antisymmetry(self, z, h):
        n = min(len(z), len(h))
        z = np.asarray(z[:n])
        h = np.asarray(h[:n])
        r = O.phase_residual(z, h)
        assert np.all(r <= np.pi) and np.all(r > -np.pi)
        r_rev = O.phase_residual(h, z)
        boundary = np.isclose(np.abs(r), np.pi)
        np.testing.assert_allclose(r[~boundary], -r_rev[~boundary], atol=1e-9)


class TestLogLikelihood:
    def test_maximal_at_clean_measurement(self, model_20x20, rng):
        p = np.array([2.0, 1.0, 1.4])
        z = O.observe_clean(model_20x20, p)
        best = O.log_likelihood(model_20x20, z, p)
        n = model_20x20.n_antennas
        const = -0.5 * n * np.log(2 * np.pi * model_20x20.sigma_eta**2)
        assert best == pytest.approx(const)
        for _ in range(20):
            other = z + rng.normal(scale=0.3, size=n)
            assert O.log_likelihood(model_20x20, other, p) <= best + 1e-12

    def test_sigma_scale_law(self, array_20x20):
        p = [2.0, 1.0, 1.4]
        z = O.observe_clean(O.MeasurementModel(array_20x20, 0.01, 1.0), p) + 0.05
        quads = []
        for sigma in (0.2, 0.4):
            model = O.MeasurementModel(array_20x20, 0.01, sigma)
            const = -0.5 * model.n_antennas * np.log(2 * np.pi * sigma**2)
            quads.append(O.log_likelihood(model, z, p) - const)
        assert quads[1] == pytest.approx(quads[0] / 4.0)

    def test_wrap_consistency_single_element(self, model_20x20):
        p = [2.0, 1.0, 1.4]
        z = O.observe_clean(model_20x20, p) + 0.1
        z2 = z.copy()
        z2[5] += 2 * np.pi
        a = O.log_likelihood(model_20x20, z, p)
        b = O.log_likelihood(model_20x20, z2, p)
        assert a == pytest.approx(b, abs=1e-9)

    def test_grid_oracle_two_antennas(self, rng):
        geom = line_array(n=2, spacing=0.004)
        model = O.MeasurementModel(geom, 0.01, np.deg2rad(15.0))
        truth = np.array([0.4, 0.15, 0.0])
        z = O.observe_noisy(model, truth, rng)
        xs = np.linspace(0.2, 0.6, 41)
        ys = np.linspace(-0.05, 0.35, 41)
        XX, YY = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([XX, YY, np.zeros_like(XX)], axis=-1)
        ll = O.log_likelihood(model, z, pts)
        # brute-force objective: sum of squared wrapped residuals
        sq = np.sum(
            O.phase_residual(z, O.observe_clean(model, pts)) ** 2, axis=-1
        )
        assert np.argmax(ll) == np.argmin(sq)

    def test_zero_sigma_rejected(self, array_20x20):
        model = O.MeasurementModel(array_20x20, 0.01, 0.0)
        with pytest.raises(ValueError):
            O.log_likelihood(model, np.zeros(400), [1.0, 0.0, 1.0])


class TestLikelihoodSurfaceShape:
    """Near-field surfaces are peaky; far-field range profiles are flat."""

    truth = np.array([1.51, 1.51, 1.0])
    ref = np.array([0.0, 0.0, 1.0])

    def _grid_ll(self, n_side):
        lam = 0.01
        geom = G.make_rectangular_array(n_side, n_side, lam / 2, self.ref)
        model = O.MeasurementModel(geom, lam, np.deg2rad(20.0))
        z = O.observe_clean(model, self.truth)
        offs = np.arange(-25, 26) * 0.1
        XX, YY = np.meshgrid(self.truth[0] + offs, self.truth[1] + offs, indexing="ij")
        pts = np.stack([XX, YY, np.full_like(XX, self.truth[2])], axis=-1)
        return model, z, O.log_likelihood(model, z, pts)

    def test_unique_peak_inside_fresnel(self):
        model, z, ll = self._grid_ll(20)
        d_f = G.field_boundaries(model.geometry.diameter, model.lam)[1]
        assert np.linalg.norm(self.truth - self.ref) < d_f
        i, j = np.unravel_index(np.argmax(ll), ll.shape)
        assert (i, j) == (25, 25)  # grid center = true position
        flat = np.sort(ll.ravel())
        assert flat[-1] - flat[-2] > 1.0

    def test_flat_range_profile_outside_fresnel(self):
        model, z, ll = self._grid_ll(4)
        d_true = np.linalg.norm(self.truth - self.ref)
        d_f = G.field_boundaries(model.geometry.diameter, model.lam)[1]
        assert d_true > 10 * d_f
        u = (self.truth - self.ref) / d_true
        ds = np.linspace(max(0.3, d_true - 2.5), d_true + 2.5, 51)
        profile = O.log_likelihood(model, z, self.ref + ds[:, None] * u)
        grid_span = ll.max() - ll.min()
        assert profile.max() - profile.min() < 0.05 * grid_span
