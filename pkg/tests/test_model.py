"""System and detector descriptions."""

import math

import numpy as np
import pytest

from zenosim.errors import DimensionMismatch, NonHermitianInput, NonIntegrableF, ZeroStrength
from zenosim.model import (
    SystemSpec,
    TwoLevelPreset,
    correlation,
    custom_detector,
    gaussian_detector,
    required_duration,
    strength,
)

SQRT_PI_OVER_2 = 1.2533141373155003


def fig1_detector():
    return gaussian_detector(sigma=1.0, lam=50.0, tau=0.1)


class TestCorrelation:
    def test_normalization_at_zero(self):
        assert correlation(fig1_detector(), 0.0) == 1.0
        nu = np.linspace(-3, 3, 7)
        det = custom_detector(nu, np.exp(-nu ** 2), lam=1.0, tau=1.0)
        assert correlation(det, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_values(self):
        det = gaussian_detector(sigma=1.0, lam=1.0, tau=1.0)
        assert correlation(det, 1.0) == pytest.approx(0.6065306597126334, rel=1e-12)
        assert correlation(det, 10.0) == pytest.approx(1.9287498479639178e-22, rel=1e-10)

    def test_custom_interpolation_and_zero_outside(self):
        nu = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
        f = np.array([0.0, 0.5, 1.0, 0.5, 0.0])
        det = custom_detector(nu, f, lam=1.0, tau=1.0)
        assert correlation(det, 0.5) == pytest.approx(0.75)
        assert correlation(det, 5.0) == 0.0

    def test_complex_custom_f_allowed(self):
        nu = np.linspace(-4, 4, 401)
        f = np.exp(-nu ** 2) * np.exp(0.2j * nu)
        f[200] = 1.0  # F(0) = 1 exactly
        det = custom_detector(nu, f, lam=1.0, tau=1.0)
        val = correlation(det, 1.0)
        assert abs(val.imag) > 0


class TestStrength:
    def test_gaussian_c(self):
        s = strength(gaussian_detector(sigma=1.0, lam=1.0, tau=1.0))
        assert s.C == pytest.approx(SQRT_PI_OVER_2, rel=1e-12)

    def test_fig1_lambda(self):
        s = strength(fig1_detector())
        assert s.Lambda == pytest.approx(50.0 / SQRT_PI_OVER_2, rel=1e-12)
        assert s.Lambda == pytest.approx(39.89422804014327, rel=1e-10)

    def test_zero_coupling(self):
        s = strength(gaussian_detector(sigma=2.0, lam=0.0, tau=1.0))
        assert s.Lambda == 0.0

    def test_custom_matches_gaussian(self):
        nu = np.linspace(-12, 12, 20001)
        det = custom_detector(nu, np.exp(-nu ** 2 / 2.0), lam=5.0, tau=1.0)
        s = strength(det)
        assert s.C == pytest.approx(SQRT_PI_OVER_2, rel=1e-6)

    def test_non_integrable_table(self):
        nu = np.linspace(-3, 3, 61)
        f = np.full(61, 0.9)
        f[30] = 1.0
        det = custom_detector(nu, f, lam=1.0, tau=1.0)
        with pytest.raises(NonIntegrableF):
            strength(det)

    def test_integral_consistency_with_correlation(self):
        # numerically integrating F over [-12 sigma, 12 sigma] reproduces 2C
        for sigma in (0.5, 1.0, 2.0):
            det = gaussian_detector(sigma=sigma, lam=3.0, tau=0.2)
            nu = np.linspace(-12 * sigma, 12 * sigma, 4001)
            integral = np.trapezoid(correlation(det, nu).real, nu)
            assert abs(integral - 2.0 * strength(det).C) < 1e-8


class TestRequiredDuration:
    def test_fig1_bound(self):
        det = fig1_detector()
        bound = required_duration(det, delta_e=2.0, hbar=1.0)
        assert bound == pytest.approx(0.012533141373155003, rel=1e-10)
        assert det.tau > bound  # Fig. 1's tau = 0.1 satisfies the bound

    def test_inverse_proportionality(self):
        det = fig1_detector()
        assert required_duration(det, 4.0, 1.0) == pytest.approx(
            required_duration(det, 2.0, 1.0) / 2.0)

    def test_unit_case(self):
        nu = np.linspace(-30, 30, 6001)
        det = custom_detector(nu, np.exp(-np.abs(nu)), lam=1.0, tau=1.0)
        # C = 1 for the exponential table, so hbar/(Lambda dE) = 1
        assert required_duration(det, 1.0, 1.0) == pytest.approx(1.0, rel=1e-4)

    def test_zero_strength(self):
        with pytest.raises(ZeroStrength):
            required_duration(gaussian_detector(1.0, 0.0, 1.0), 1.0, 1.0)


class TestDetectorValidation:
    def test_rejects_bad_tau(self):
        with pytest.raises(ValueError):
            gaussian_detector(sigma=1.0, lam=1.0, tau=0.0)

    def test_rejects_bad_f0(self):
        nu = np.linspace(-2, 2, 41)
        with pytest.raises(ValueError):
            custom_detector(nu, 0.5 * np.exp(-nu ** 2), lam=1.0, tau=1.0)

    def test_rejects_f_above_one(self):
        nu = np.linspace(-2, 2, 41)
        f = np.exp(-nu ** 2)
        f[25] = 1.2
        with pytest.raises(ValueError):
            custom_detector(nu, f, lam=1.0, tau=1.0)


class TestPointerStates:
    def test_pointer_overlap_equals_f(self):
        # overlap of detector states shifted by two level energies is
        # F(lambda tau w12); checked against the position-distribution rule
        from zenosim.superop import default_rule
        det = fig1_detector()
        rule = default_rule(det, 512)
        for w12 in (0.3, 1.0, 2.0):
            nu = det.lam * det.tau * w12
            overlap = np.sum(rule.weights * np.exp(1j * nu * rule.nodes))
            assert overlap == pytest.approx(correlation(det, nu), abs=1e-10)


class TestTwoLevelPreset:
    def test_expansion(self):
        preset = TwoLevelPreset(omega=2.0, v=1.0 + 0.5j, hbar=1.0)
        sys = preset.to_system()
        assert sys.levels == (-1.0, 1.0)
        v = sys.v_at(0.0)
        assert v[1, 0] == 1.0 + 0.5j
        assert v[0, 1] == 1.0 - 0.5j

    def test_rabi_frequency(self):
        assert TwoLevelPreset(2.0, 1.0).rabi_frequency == pytest.approx(
            math.sqrt(8.0), rel=1e-14)

    def test_zero_coupling(self):
        preset = TwoLevelPreset(omega=1.5, v=0.0)
        assert preset.rabi_frequency == pytest.approx(1.5)
        assert np.all(preset.v_matrix() == 0)


class TestSystemSpec:
    def test_flat_indexing_with_alpha(self):
        sys = SystemSpec(levels=(0.0, 2.0), alpha_energies=((0.0, 0.5), (0.0,)),
                         v=np.zeros((3, 3)))
        assert sys.dim == 3
        assert sys.flat_index(0, 1) == 1
        assert sys.flat_index(1, 0) == 2
        np.testing.assert_allclose(sys.e0, [0.0, 0.0, 2.0])
        np.testing.assert_allclose(sys.e1, [0.0, 0.5, 0.0])

    def test_omega_matrices(self):
        sys = SystemSpec(levels=(0.0, 2.0), alpha_energies=((0.0, 0.5), (0.0,)),
                         v=np.zeros((3, 3)), hbar=2.0)
        w_lvl = sys.omega_level()
        w_full = sys.omega_full()
        assert w_lvl[2, 0] == pytest.approx(1.0)
        assert w_lvl[1, 0] == 0.0  # same level, alpha ignored
        assert w_full[1, 0] == pytest.approx(0.25)

    def test_requires_two_levels(self):
        with pytest.raises(ValueError):
            SystemSpec(levels=(1.0,))

    def test_rejects_non_hermitian_v(self):
        with pytest.raises(NonHermitianInput):
            SystemSpec(levels=(0.0, 1.0), v=np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_rejects_non_hermitian_callable_sample(self):
        bad = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
        with pytest.raises(NonHermitianInput):
            SystemSpec(levels=(0.0, 1.0), v=lambda t: bad)

    def test_rejects_wrong_v_dimension(self):
        with pytest.raises(DimensionMismatch):
            SystemSpec(levels=(0.0, 1.0), v=np.zeros((3, 3)))

    def test_constant_and_callable_v(self):
        vmat = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
        s1 = SystemSpec(levels=(0.0, 1.0), v=vmat)
        assert s1.constant_v
        s2 = SystemSpec(levels=(0.0, 1.0), v=lambda t: np.cos(t) * vmat)
        assert not s2.constant_v
        np.testing.assert_allclose(s2.v_at(0.3), np.cos(0.3) * vmat)
