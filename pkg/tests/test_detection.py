import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from beamtrack.detection import (
    Method, build_weights, decide_batch, gaussian_ser, ml_decide, simulate_symbols, snr_ratio_landscape,
    symbol_error_gaussian, symbol_error_mc, v_moments, weights_for,
)
from beamtrack.model import ArrayGeometry, BeamParams, LinkBudget, cell_means, cell_signal_counts
from beamtrack.sim import sample_ppm_frame, substream

from conftest import gaussian, power_beam, quad_cell

PS_LINK = LinkBudget(0.01, 1550e-9, 0.0, 1e-12, 0.5)


def fig6(noise, n=4, x0=0.3, y0=-0.45):
    g = ArrayGeometry(1.0, n)
    return power_beam(PS_LINK, 0.5, noise, 0.2, x0, y0, g), g


class TestWeights:
    def test_no_signal(self, geom4):
        w = build_weights((0.1, 0.2), BeamParams(0.0, 0.2, 0, 0, 1.0), geom4)
        assert not w.alpha.any()

    def test_unit_snr_gives_ln2(self, geom4):
        b = BeamParams(1.0, 0.2, 0.0, 0.0, 1.0)
        sig = cell_signal_counts(b, geom4)
        noise_level = sig[5] / geom4.cell_area_A
        w = build_weights((0.0, 0.0), BeamParams(1.0, 0.2, 0.0, 0.0, noise_level), geom4)
        assert w.alpha[5] == pytest.approx(math.log(2))

    def test_fig6_against_quadrature(self):
        b, g = fig6(1.8)
        w = build_weights((b.x0, b.y0), b, g)
        f = gaussian(b)
        noise = b.lambda_n * g.cell_area_A
        for m in range(g.M):
            assert w.alpha[m] == pytest.approx(math.log1p(quad_cell(f, *g.cell_bounds(m)) / noise), rel=1e-8)

    def test_needs_noise(self, geom4):
        with pytest.raises(ValueError):
            build_weights((0, 0), BeamParams(1.0, 0.2), geom4)

    def test_per_row_constants(self, geom4):
        a = weights_for(np.array([0.1, -0.2]), np.array([0.0, 0.3]), np.array([1.0, 2.0]), 0.2,
                        np.array([0.5, 0.7]), geom4)
        b = build_weights((-0.2, 0.3), BeamParams(2.0, 0.2, 0, 0, 0.7), geom4).alpha
        np.testing.assert_allclose(a[1], b)


class TestDecisions:
    def test_no_noise_always_correct(self, geom4):
        b = BeamParams(0.4, 0.2, 0.1, 0.1, 0.0)
        w = build_weights((0.1, 0.1), BeamParams(0.4, 0.2, 0.1, 0.1, 0.5), geom4)
        rng = substream(40)
        hits = 0
        for _ in range(2000):
            f = sample_ppm_frame(b, geom4, 4, 2, rng)
            if f.slots[2].total > 0:
                hits += 1
                assert ml_decide(f, w, rng) == 2
        assert hits > 100

    def test_empty_slots_uniform(self):
        n, order = 10 ** 5, 4
        d = decide_batch(np.zeros((n, order, 16)), np.ones(16), substream(41))
        freq = np.bincount(d, minlength=order) / n
        se = math.sqrt(0.25 * 0.75 / n)
        assert np.all(np.abs(freq - 0.25) < 4.5 * se)

    def test_equal_weights_pick_largest_total(self):
        z = np.random.default_rng(42).poisson(2.0, (500, 3, 9))
        tot = z.sum(axis=2)
        srt = np.sort(tot, axis=1)
        keep = srt[:, -1] > srt[:, -2]
        d = decide_batch(z[keep], np.full(9, 0.7), substream(43))
        np.testing.assert_array_equal(d, tot[keep].argmax(axis=1))

    @given(st.floats(0.01, 100.0))
    def test_scale_invariance(self, c):
        z = np.random.default_rng(44).poisson(1.0, (200, 3, 4))
        alpha = np.array([0.1, 0.7, 1.3, 0.2])
        a = decide_batch(z, alpha, substream(45))
        b = decide_batch(z, c * alpha, substream(45))
        np.testing.assert_array_equal(a, b)


class TestSymbolError:
    def test_zero_mean_statistic(self, geom4):
        b = BeamParams(0.0, 0.2, 0, 0, 1.0)
        # I0 = 0 gives alpha = 0 and sigma_v = 0; use the closed form directly
        for order in (2, 4, 8):
            assert gaussian_ser(0.0, 1.0, order) == pytest.approx(1 - 0.5 ** (order - 1))
        with pytest.raises(ZeroDivisionError):
            symbol_error_gaussian(b, (0, 0), geom4, 2)

    def test_order_monotone(self):
        for r in (0.1, 1.0, 3.0):
            assert gaussian_ser(r, 1.0, 4) > gaussian_ser(r, 1.0, 2)

    def test_decreasing_in_snr(self):
        noise = [1.8, 1.4, 1.0, 0.8]
        ser = []
        for v in noise:
            b, g = fig6(v)
            ser.append(symbol_error_gaussian(b, (b.x0, b.y0), g, 2).p_symbol_error)
            mc = symbol_error_mc(b, (b.x0, b.y0), g, 2, 20000, substream(46, int(10 * v)))
            assert mc.method is Method.MONTE_CARLO and mc.trials == 20000
        assert np.all(np.diff(ser) < 0)

    def test_strong_clean_link(self, geom4):
        b = BeamParams(20.0, 0.2, 0.1, 0.1, 1e-6)
        assert symbol_error_gaussian(b, (0.1, 0.1), geom4, 2).p_symbol_error < 1e-12
        assert symbol_error_mc(b, (0.1, 0.1), geom4, 2, 1000, substream(47)).p_symbol_error == 0.0

    def test_perfect_knowledge_is_best(self):
        for v in (0.8, 1.8):
            b, g = fig6(v)
            best = symbol_error_gaussian(b, (b.x0, b.y0), g, 2).p_symbol_error
            for c in [(0.0, 0.0), (0.35, -0.4), (-0.5, 0.5)]:
                assert symbol_error_gaussian(b, c, g, 2).p_symbol_error >= best

    def test_gaussian_close_to_mc(self):
        for v in (1.4, 1.8):
            b, g = fig6(v)
            gs = symbol_error_gaussian(b, (b.x0, b.y0), g, 2).p_symbol_error
            mc = symbol_error_mc(b, (b.x0, b.y0), g, 2, 2 * 10 ** 5, substream(48, int(10 * v))).p_symbol_error
            assert abs(gs - mc) / mc < 0.10

    def test_decreases_with_cells(self):
        ser = []
        for n in (4, 6, 8):
            b, g = fig6(1.8, n)
            ser.append(symbol_error_gaussian(b, (b.x0, b.y0), g, 2).p_symbol_error)
        assert ser[0] > ser[1] > ser[2]

    def test_mc_validation(self, geom4):
        with pytest.raises(ValueError):
            symbol_error_mc(BeamParams(1.0, 0.2, 0, 0, 1.0), (0, 0), geom4, 2, 0, substream(1))


def test_v_moments_match_simulation():
    b, g = fig6(1.0)
    alpha = build_weights((0.25, -0.4), b, g).alpha
    mu, sigma = v_moments(b, alpha, g)
    rng = substream(49)
    n = 10 ** 5
    noise = b.lambda_n * g.cell_area_A
    y1 = rng.poisson(cell_means(b, g), (n, g.M)) @ alpha
    y0 = rng.poisson(noise, (n, g.M)) @ alpha
    v = y1 - y0
    assert abs(v.mean() - mu) < 4 * sigma / math.sqrt(n)
    d = v - v.mean()
    se_var = math.sqrt(((d ** 4).mean() - (d ** 2).mean() ** 2) / n)
    assert abs(v.var(ddof=1) - sigma ** 2) < 4 * se_var


def test_simulated_symbols_shape():
    ok = simulate_symbols(np.ones((7, 4)), 0.5, np.ones(4), 3, substream(50))
    assert ok.shape == (7,) and ok.dtype == bool


class TestLandscape:
    def test_peak_near_truth_for_large_array(self):
        b, g = fig6(1.8, n=16, x0=0.1, y0=-0.2)
        land = snr_ratio_landscape(b, g, grid=41)
        step = land.xs[1] - land.xs[0]
        ax, ay = land.argmax
        assert abs(ax - 0.1) <= step + 1e-12 and abs(ay + 0.2) <= step + 1e-12

    def test_symmetric_about_centre(self):
        g = ArrayGeometry(1.0, 4)
        b = BeamParams(0.3, 0.2, 0.0, 0.0, 0.5)
        r = snr_ratio_landscape(b, g, grid=21).ratio
        np.testing.assert_allclose(r, r[:, ::-1], rtol=1e-10)
        np.testing.assert_allclose(r, r[::-1, :], rtol=1e-10)
        np.testing.assert_allclose(r, r.T, rtol=1e-10)

    def test_truth_beats_displaced(self):
        for n in (4, 6, 8):
            b, g = fig6(1.8, n)
            alpha_true = build_weights((b.x0, b.y0), b, g).alpha
            alpha_off = build_weights((b.x0 - 0.4, b.y0 + 0.4 / math.sqrt(2)), b, g).alpha
            mu1, s1 = v_moments(b, alpha_true, g)
            mu2, s2 = v_moments(b, alpha_off, g)
            assert mu1 / s1 > mu2 / s2
