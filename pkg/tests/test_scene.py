import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caossim import scene as sc
from caossim.errors import ConfigError, LayoutError
from caossim.plan import PixelGrid


def oversampled_trapezoid(a, b, refine):
    """Independent quadrature: trapezoid on the union grid refined `refine` times."""
    lo = max(a.support[0], b.support[0])
    hi = min(a.support[1], b.support[1])
    if hi <= lo:
        return 0.0
    knots = np.unique(np.clip(np.concatenate([a.wavelengths, b.wavelengths]), lo, hi))
    fine = [knots]
    steps = np.linspace(0.0, 1.0, refine, endpoint=False)[1:]
    fine.append((knots[:-1, None] + np.diff(knots)[:, None] * steps[None, :]).ravel())
    grid = np.unique(np.concatenate(fine))
    return float(np.trapezoid(a.sample(grid) * b.sample(grid), grid))


class TestBandIntegrate:
    def test_disjoint_supports(self):
        a = sc.flat_spectrum(350, 1000)
        b = sc.flat_spectrum(1100, 1800)
        assert sc.band_integrate(a, b) == 0.0

    def test_flat_rectangle(self):
        a = sc.flat_spectrum(500, 600)
        b = sc.flat_spectrum(500, 600)
        assert sc.band_integrate(a, b) == pytest.approx(100.0, rel=1e-12)

    def test_gaussian_pair_matches_fine_grid_oracle(self):
        led = sc.gaussian_spectrum(530, 35)
        filt = sc.gaussian_spectrum(550, 40)
        got = sc.band_integrate(led, filt)
        oracle = oversampled_trapezoid(led, filt, refine=10)
        assert got == pytest.approx(oracle, rel=1e-6)
        assert got > 0

    @settings(deadline=None, max_examples=20)
    @given(st.floats(min_value=0.01, max_value=50.0))
    def test_bilinear_in_either_argument(self, factor):
        a = sc.gaussian_spectrum(530, 35)
        b = sc.gaussian_spectrum(550, 40)
        base = sc.band_integrate(a, b)
        assert sc.band_integrate(a.scaled(factor), b) == pytest.approx(factor * base, rel=1e-12)
        assert sc.band_integrate(a, b.scaled(factor)) == pytest.approx(factor * base, rel=1e-12)

    def test_symmetric(self):
        a = sc.gaussian_spectrum(455, 18)
        b = sc.flat_spectrum(400, 500, 0.7)
        assert sc.band_integrate(a, b) == pytest.approx(sc.band_integrate(b, a), rel=1e-14)


class TestGaussianSpectrum:
    def test_half_maximum_at_half_fwhm(self):
        curve = sc.gaussian_spectrum(455, 18)
        for wl in (455 - 9, 455 + 9):
            assert curve.sample(np.array([wl]))[0] == pytest.approx(0.5, abs=1e-3)

    def test_peak_is_one(self):
        curve = sc.gaussian_spectrum(625, 17)
        assert curve.sample(np.array([625.0]))[0] == pytest.approx(1.0, abs=1e-12)

    def test_fwhm_recovered_within_half_nm(self):
        curve = sc.gaussian_spectrum(530, 35)
        fine = np.linspace(*curve.support, 20001)
        vals = curve.sample(fine)
        above = fine[vals >= 0.5]
        assert (above[-1] - above[0]) == pytest.approx(35.0, abs=0.5)

    def test_rejects_bad_fwhm(self):
        with pytest.raises(ConfigError):
            sc.gaussian_spectrum(500, 0.0)


class TestHdrTarget:
    def test_six_patch_levels(self):
        grid = PixelGrid(24, 16)
        target = sc.hdr_patch_target(grid, [0, 20, 30, 48, 58, 64])
        values = set(np.unique(target.irradiance))
        expected = {0.0} | {10.0 ** (-d / 20.0) for d in (0, 20, 30, 48, 58, 64)}
        assert values == expected
        assert target.irradiance.min() == 0.0
        assert target.irradiance.max() == 1.0
        assert np.isclose(sorted(values)[1], 10.0**-3.2)

    def test_single_open_patch(self):
        grid = PixelGrid(4, 4)
        target = sc.hdr_patch_target(grid, [0], layout=(1, 1))
        x0, y0, w, h = sc.hdr_patch_layout(grid, (1, 1)).patches[0]
        assert np.all(target.irradiance[y0 : y0 + h, x0 : x0 + w] == 1.0)

    def test_layout_errors(self):
        with pytest.raises(LayoutError):
            sc.hdr_patch_target(PixelGrid(2, 2), [0, 20, 30, 48, 58, 64])
        with pytest.raises(LayoutError):
            sc.hdr_patch_target(PixelGrid(24, 16), [0, 20])


class TestDualBandSource:
    def test_nonzero_in_both_detector_bands(self):
        grid = PixelGrid(8, 8)
        target = sc.dual_band_source(grid, spot=(4, 4), radius=2.0)
        si = target.effective_irradiance(sc.si_band_responsivity())
        ge = target.effective_irradiance(sc.ge_band_responsivity())
        assert si.max() > 0
        assert ge.max() > 0
        spot = sc.disc_mask(grid, (4, 4), 2.0)
        assert np.all(si[~spot] == 0) and np.all(ge[~spot] == 0)


class TestTwoHoleTarget:
    def setup_method(self):
        self.grid = PixelGrid(16, 8)
        self.green_led = sc.gaussian_spectrum(530, 35)
        self.red_led = sc.gaussian_spectrum(625, 17)
        self.blue_led = sc.gaussian_spectrum(455, 18)
        self.green_filter = sc.gaussian_spectrum(550, 40)
        self.red_filter = sc.gaussian_spectrum(620, 10)
        self.sources = [(self.green_led, 1), (self.red_led, 2), (self.blue_led, 3)]

    def test_matched_filter_lights_one_image(self):
        target = sc.two_hole_target(
            self.grid,
            hole_positions=[(4, 4), (12, 4)],
            hole_filters=[self.red_filter, self.green_filter],
            sources=self.sources,
            hole_radius=2.0,
        )
        green_img, red_img, blue_img = target.per_source
        right = sc.disc_mask(self.grid, (12, 4), 2.0)
        left = sc.disc_mask(self.grid, (4, 4), 2.0)
        assert np.all(green_img[right] > 0) and np.all(green_img[~right] == 0)
        assert np.all(red_img[left] > 0) and np.all(red_img[~left] == 0)
        assert np.all(blue_img == 0)

    def test_disjoint_filter_dark_everywhere(self):
        uv_filter = sc.gaussian_spectrum(200, 10)
        target = sc.two_hole_target(
            self.grid,
            hole_positions=[(4, 4)],
            hole_filters=[uv_filter],
            sources=self.sources,
            hole_radius=2.0,
        )
        assert np.all(target.per_source == 0)


class TestFileFormats:
    def test_pgm_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.uniform(0, 3.7, size=(5, 7))
        path = tmp_path / "img.pgm"
        sc.write_image_pgm(img, path)
        back = sc.read_image_pgm(path)
        assert back.shape == img.shape
        assert np.allclose(back, img, atol=3.7 / 65535.0)

    def test_csv_roundtrip(self, tmp_path):
        img = np.arange(12, dtype=np.float64).reshape(3, 4) / 7.0
        path = tmp_path / "img.csv"
        sc.write_image_csv(img, path)
        assert np.array_equal(sc.read_image_csv(path), img)

    def test_curve_roundtrip(self, tmp_path):
        curve = sc.gaussian_spectrum(455, 18)
        path = tmp_path / "curve.csv"
        sc.write_curve_csv(curve, path)
        back = sc.read_curve_csv(path)
        assert np.array_equal(back.wavelengths, curve.wavelengths)
        assert np.array_equal(back.values, curve.values)


def test_scene_rejects_negative_values():
    grid = PixelGrid(2, 2)
    with pytest.raises(ConfigError):
        sc.Scene(grid=grid, irradiance=np.array([[1.0, -0.1], [0.0, 0.0]]))


def test_detector_model_validation():
    with pytest.raises(ConfigError):
        sc.DetectorModel(gain=0.0)
    with pytest.raises(ConfigError):
        sc.DetectorModel(pink_noise=(1.0, 3.0))
    sc.DetectorModel(pink_noise=(1.0, 1.0), adc_bits=16, adc_fullscale=10.0)
