import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from ratfilter.pencil import DiskRegion, make_rng
from ratfilter.rational import (NearPoleError, composite_coeffs, eval_compact, eval_composite, filter_map,
                                gauss_rule, mobius_T, optimal_ratio, pole_mapping_check,
                                separation_ratio_closed, separation_ratio_grid, trapezoid_rule,
                                zolotarev_eval, zolotarev_function, zolotarev_infimum, zolotarev_params)

UNIT = DiskRegion(0, 1)
GRID_REGION = DiskRegion(-260 + 1000j, 115)


# Relative accuracy is asserted where |R| is not negligible: |z - c| <= 1.1 r.
# Further out the partial fractions cancel to |R| ~ |(z - c) / r|^-k and only an
# absolute bound is meaningful (see the far-field tests).
WORKING_RADIUS = 1.1


def random_points(region, k, n, seed, margin=1e-6, rho=WORKING_RADIUS):
    """n points uniform in |z - c| <= rho r, away from the poles of R_k."""
    rng = make_rng(seed)
    out = []
    while len(out) < n:
        y = rho * np.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
        if abs(y ** k + 1) > margin:
            out.append(region.center + region.radius * y)
    return np.array(out)


def far_points(region, n, seed):
    rng = make_rng(seed)
    y = rng.uniform(1.1, 3, n) * np.exp(2j * np.pi * rng.uniform(size=n))
    return region.center + region.radius * y


class TestTrapezoid:
    def test_k1(self):
        pw = trapezoid_rule(UNIT, 1)
        np.testing.assert_allclose(pw.poles, [-1], atol=1e-15)
        np.testing.assert_allclose(pw.weights, [-1], atol=1e-15)
        z = 0.3 + 0.2j
        assert abs(pw(z) - 1 / (1 + z)) < 1e-15

    def test_r4_at_three_quarters(self):
        assert abs(trapezoid_rule(UNIT, 4)(0.75)) == pytest.approx(0.7596, abs=5e-4)

    @pytest.mark.parametrize("k", [2, 3, 8, 16, 32])
    def test_poles_are_roots_of_minus_one(self, k):
        pw = trapezoid_rule(GRID_REGION, k)
        y = (pw.poles - pw.center) / pw.radius
        np.testing.assert_allclose(y ** k, -1, atol=1e-12)

    @pytest.mark.parametrize("k", [1, 5, 16, 32])
    def test_sum_equals_compact(self, k):
        pw = trapezoid_rule(UNIT, k)
        z = random_points(UNIT, k, 100, k)
        np.testing.assert_allclose(pw(z), eval_compact(UNIT, k, z), rtol=1e-12)

    @pytest.mark.parametrize("k", [16, 64])
    def test_far_field_absolute(self, k):
        pw = trapezoid_rule(GRID_REGION, k)
        z = far_points(GRID_REGION, 200, k)
        scale = np.abs(pw.weights[:, None] / (pw.poles[:, None] - z[None, :])).sum(axis=0)
        # z - p_i is formed in absolute coordinates, so allow |c| / r extra rounding
        assert np.all(np.abs(pw(z) - eval_compact(GRID_REGION, k, z)) <= 1e-14 * scale)

    def test_exact_pole_is_nan(self):
        pw = trapezoid_rule(UNIT, 4)
        assert np.isnan(pw(pw.poles[0]))

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            trapezoid_rule(UNIT, 0)


class TestGauss:
    def test_k2_hand_computed(self):
        # one Gauss-Legendre node per semicircle: theta = pi/2 and 3 pi/2, omega = 2
        pw = gauss_rule(DiskRegion(1, 2), 2)
        np.testing.assert_allclose(pw.poles, [1 + 2j, 1 - 2j], atol=1e-15)
        np.testing.assert_allclose(pw.weights, [2 * 1j * 2 / 4, 2 * -1j * 2 / 4], atol=1e-15)

    def test_k2_equals_trapezoid_k2(self):
        z = random_points(UNIT, 2, 20, 0)
        np.testing.assert_allclose(gauss_rule(UNIT, 2)(z), trapezoid_rule(UNIT, 2)(z), rtol=1e-14)

    def test_consistency_at_centre(self):
        for k in (8, 32, 64):
            pw = gauss_rule(GRID_REGION, k)
            assert abs(pw(pw.center) - 1) < 1e-6

    def test_odd_rejected(self):
        with pytest.raises(ValueError):
            gauss_rule(UNIT, 5)


class TestCompact:
    def test_r16_at_three_quarters(self):
        assert eval_compact(UNIT, 16, 0.75) == pytest.approx(0.9901, abs=5e-5)

    def test_centre_is_one(self):
        for k in (1, 7, 64):
            assert eval_compact(GRID_REGION, k, GRID_REGION.center) == 1

    def test_outside_value(self):
        lam3 = 2 ** 0.25 * np.exp(1j * np.pi / 4)
        r3 = abs(eval_compact(UNIT, 16, lam3))
        assert r3 == pytest.approx(1 / 17, abs=1e-12)
        assert r3 / abs(eval_compact(UNIT, 16, 0.75)) == pytest.approx(0.0594, abs=5e-4)

    def test_near_pole(self):
        with pytest.raises(NearPoleError):
            eval_compact(UNIT, 4, np.exp(1j * np.pi / 4))

    @pytest.mark.parametrize("region", [UNIT, GRID_REGION])
    @pytest.mark.parametrize("k", [1, 2, 7, 16, 33, 64])
    def test_sum_compact_identity(self, region, k):
        pw = trapezoid_rule(region, k)
        z = random_points(region, k, 200, 1000 + k)
        ref = eval_compact(region, k, z)
        assert np.max(np.abs(pw(z) - ref) / np.abs(ref)) < 1e-11


class TestMobius:
    def test_values(self):
        assert mobius_T(1) == 0
        assert mobius_T(0.5) == 1

    def test_pole(self):
        with pytest.raises(ZeroDivisionError):
            mobius_T(0)

    @pytest.mark.parametrize("k1", [2, 3, 8])
    def test_inverts_filter(self, k1):
        z = random_points(UNIT, k1, 100, k1, margin=1e-3)
        np.testing.assert_allclose(mobius_T(eval_compact(UNIT, k1, z)), z ** k1, rtol=1e-12, atol=1e-12)


class TestCompositeCoeffs:
    def test_k2_two(self):
        cc = composite_coeffs(2)
        np.testing.assert_allclose(cc.shifts, [(1 - 1j) / 2, (1 + 1j) / 2], atol=1e-15)
        assert cc.direct_term == 0

    def test_k2_two_weights_close_the_identity(self):
        # c = sigma / (2 (1 + sigma)) for sigma = +-i
        cc = composite_coeffs(2)
        np.testing.assert_allclose(cc.weights, [(1 + 1j) / 4, (1 - 1j) / 4], atol=1e-15)

    def test_k2_one(self):
        cc = composite_coeffs(1)
        assert cc.shifts.size == 0 and cc.direct_term == 1

    @pytest.mark.parametrize("k2", [3, 5, 7])
    def test_odd_excludes_minus_one(self, k2):
        cc = composite_coeffs(k2)
        assert cc.shifts.size == k2 - 1
        assert cc.direct_term == pytest.approx(1 / k2)
        np.testing.assert_allclose(cc.roots ** k2, -1, atol=1e-13)

    @pytest.mark.parametrize("k2", [2, 4, 8, 16])
    def test_even_shift_count(self, k2):
        cc = composite_coeffs(k2)
        assert cc.shifts.size == k2
        np.testing.assert_allclose(cc.shifts, 1 / (1 + cc.roots), atol=1e-15)

    @pytest.mark.xfail(strict=True, reason="roots of x^k2 = -1 and x^2k2 = -1 never coincide, "
                                           "so no shift of k2 survives a doubling")
    @pytest.mark.parametrize("k2", [2, 4, 8])
    def test_shifts_nest_under_doubling(self, k2):
        small, big = composite_coeffs(k2).shifts, composite_coeffs(2 * k2).shifts
        assert all(np.min(np.abs(big - s)) < 1e-14 for s in small)

    @pytest.mark.parametrize("k2", [2, 4, 8, 16])
    def test_doubling_roots_are_disjoint(self, k2):
        small, big = composite_coeffs(k2).roots, composite_coeffs(2 * k2).roots
        assert min(np.min(np.abs(big - s)) for s in small) > 0.1 / k2


class TestComposite:
    @pytest.mark.parametrize("k1, k2", [(8, 8), (2, 3), (3, 2), (1, 7), (5, 5)])
    def test_equals_compact(self, k1, k2):
        z = random_points(GRID_REGION, k1 * k2, 100, 10 * k1 + k2, margin=1e-4)
        ref = eval_compact(GRID_REGION, k1 * k2, z)
        val = eval_composite(GRID_REGION, k1, k2, z)
        assert np.max(np.abs(val - ref) / np.abs(ref)) < 1e-11

    @pytest.mark.parametrize("k1, k2", [(8, 8), (3, 5)])
    def test_far_field_absolute(self, k1, k2):
        z = far_points(UNIT, 200, k1 + k2)
        inner = eval_compact(UNIT, k1, z)
        cc = composite_coeffs(k2)
        scale = abs(cc.direct_term) * np.abs(inner) + sum(np.abs(c * inner / (inner - s))
                                                          for c, s in zip(cc.weights, cc.shifts))
        err = np.abs(eval_composite(UNIT, k1, k2, z) - eval_compact(UNIT, k1 * k2, z))
        assert np.all(err <= 1e-15 * scale)

    def test_k2_one_exact(self):
        z = random_points(UNIT, 6, 50, 3)
        np.testing.assert_array_equal(eval_composite(UNIT, 6, 1, z), eval_compact(UNIT, 6, z))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.floats(0, WORKING_RADIUS), st.floats(0, 2 * np.pi))
    def test_identity_property(self, k1, k2, rho, phi):
        z = rho * np.exp(1j * phi)
        assume(abs(z ** (k1 * k2) + 1) > 1e-6 and abs(z ** k1 + 1) > 1e-6)
        ref = eval_compact(UNIT, k1 * k2, z)
        assert abs(eval_composite(UNIT, k1, k2, z) - ref) <= 1e-11 * abs(ref)


class TestPoleMapping:
    def test_k1_2_k2_2(self):
        for i in range(4):
            m = pole_mapping_check(UNIT, 2, 2, i)
            assert m.distance < 1e-12 and not m.excluded

    def test_k1_1_k2_2_hits_both_shifts(self):
        hit = {pole_mapping_check(UNIT, 1, 2, i).shift_index for i in range(2)}
        assert hit == {0, 1}

    def test_odd_excluded(self):
        maps = [pole_mapping_check(UNIT, 2, 3, i) for i in range(6)]
        assert sum(m.excluded for m in maps) == 2
        assert all(m.distance < 1e-12 for m in maps)


class TestRatios:
    def test_closed_value(self):
        assert separation_ratio_closed(1, 1.1, 16) == pytest.approx(0.5563, abs=1e-4)

    def test_closed_trivial(self):
        assert separation_ratio_closed(1, 2, 1) == 2

    def test_closed_asymptotics(self):
        q = separation_ratio_closed(1, 1.1, 128) / optimal_ratio(1, 1.1, 128)
        assert 1.999 <= q <= 2.001

    def test_optimal(self):
        assert optimal_ratio(1, 2, 1) == 0.5
        assert optimal_ratio(1, 1.1, 16) == pytest.approx(0.2176, abs=1e-4)
        vals = [optimal_ratio(1, 1.1, k) for k in range(1, 40)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_invalid_annulus(self):
        for f in (separation_ratio_closed, optimal_ratio):
            with pytest.raises(ValueError):
                f(1.1, 1, 4)

    def test_grid_trapezoid(self):
        r = separation_ratio_grid(trapezoid_rule(UNIT, 16), 1, 1.1, 1000)
        assert r == pytest.approx(separation_ratio_closed(1, 1.1, 16), rel=0.02)

    def test_grid_gauss(self):
        assert separation_ratio_grid(gauss_rule(UNIT, 16), 1, 1.1, 1000) == pytest.approx(1.0685, rel=0.02)

    def test_grid_trapezoid_k2(self):
        r = separation_ratio_grid(trapezoid_rule(UNIT, 2), 1, 2, 1000)
        assert r == pytest.approx(2 / 3, rel=0.02)

    @pytest.mark.parametrize("k", [8, 16, 32])
    def test_ordering(self, k):
        gauss = separation_ratio_grid(gauss_rule(UNIT, k), 1, 1.1, 400)
        assert optimal_ratio(1, 1.1, k) < separation_ratio_closed(1, 1.1, k) < gauss

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            separation_ratio_grid(trapezoid_rule(UNIT, 4), 1, 1.1, 1)

    def test_filter_map_shape(self):
        re, im, mag = filter_map(trapezoid_rule(UNIT, 4), 0, 1.5, 11)
        assert re.shape == im.shape == mag.shape == (121,)
        assert mag[60] == pytest.approx(1.0)


class TestZolotarev:
    def test_params(self):
        p = zolotarev_params(1, 1.1)
        g = (np.sqrt(1.1) - 1) / (np.sqrt(1.1) + 1)
        assert p.gamma == pytest.approx(g) and p.ell == pytest.approx(g * g)
        assert p.alpha == pytest.approx(np.sqrt(1.1)) and p.beta == -p.alpha

    def test_zero_at_sqrt_ell(self):
        p = zolotarev_params(1, 1.1)
        assert zolotarev_function(p, 16, np.sqrt(p.ell)) == 0

    def test_composed_value(self):
        assert zolotarev_eval(zolotarev_params(1, 2), 3, 2) == pytest.approx(1 / 8)

    def test_composed_is_inverse_power(self):
        p = zolotarev_params(0.5, 3)
        z = random_points(UNIT, 1, 50, 7) * 2
        np.testing.assert_allclose(zolotarev_eval(p, 5, z), z ** -5.0, rtol=1e-10)

    def test_infimum_against_grid(self):
        # ratio sup_{-S} |r| / inf_{S} |r| for S the image of |z| <= a, evaluated on samples
        a, b, k = 1, 1.1, 16
        p = zolotarev_params(a, b)
        t = np.exp(2j * np.pi * np.arange(4000) / 4000)
        inner = np.abs(zolotarev_eval(p, k, a * t)).min()
        outer = np.abs(zolotarev_eval(p, k, b * t)).max()
        assert outer / inner == pytest.approx(zolotarev_infimum(p, k), rel=1e-9)
        assert zolotarev_infimum(p, k) == pytest.approx(optimal_ratio(a, b, k), rel=1e-12)

    def test_map_pole(self):
        p = zolotarev_params(1, 2)
        with pytest.raises(NearPoleError):
            zolotarev_eval(p, 2, p.beta)
