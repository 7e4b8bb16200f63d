"""Echo synthesis, range compression, and point-echo fitting tests."""

import numpy as np
import pytest

from vasense.radio import ArrayGeometry, LinkBudget, RadioConfig, Scatterer, Scene
from vasense.waveform import (analytic_point_profile, dirichlet_derivative,
                              dirichlet_kernel, echo_design_matrix,
                              equalize_and_cancel, estimate_self_interference,
                              fit_point_echoes, qpsk_symbols, range_compress,
                              synthesize_cube, synthesize_received)

CFG = RadioConfig(fc=28e9, B=200e6, K=64)
NOISELESS = 1e-30   # effectively zero; used with rng=None


def quiet_scene(*scats):
    return Scene(scatterers=list(scats), noise_power=NOISELESS)


class TestDirichlet:
    def test_unit_peak_and_integer_nulls(self):
        assert dirichlet_kernel(0.0, 64) == pytest.approx(1.0, abs=1e-15)
        ints = np.arange(1, 64, dtype=float)
        assert np.max(np.abs(dirichlet_kernel(ints, 64))) < 1e-14

    def test_frozen_values(self):
        # independent high-precision evaluations
        assert dirichlet_kernel(3.37, 64) == pytest.approx(
            -0.08708219796804043, rel=1e-13)
        assert dirichlet_kernel(-17.8125, 64) == pytest.approx(
            -0.011315792688739961, rel=1e-13)

    def test_periodicity_sign(self):
        # S(nu + K) = (-1)^(K-1) S(nu) for even K flips sign
        x = np.linspace(-2.3, 2.3, 17)
        assert np.allclose(dirichlet_kernel(x + 64, 64),
                           -dirichlet_kernel(x, 64), atol=1e-12)
        assert np.allclose(dirichlet_kernel(x + 128, 64),
                           dirichlet_kernel(x, 64), atol=1e-12)

    def test_even_symmetry(self):
        x = np.linspace(0.01, 30.0, 57)
        assert np.allclose(dirichlet_kernel(-x, 64), dirichlet_kernel(x, 64),
                           atol=1e-13)

    def test_series_branch_continuity(self):
        # values straddling the series/quotient switch agree
        for base in (0.0, 64.0, -64.0):
            x = base + np.array([-2e-3, -1.0001e-3, -0.9999e-3, 0.9999e-3,
                                 1.0001e-3, 2e-3])
            v = dirichlet_kernel(x, 64)
            assert np.all(np.isfinite(v))
            assert np.max(np.abs(np.diff(v))) < 1e-5

    def test_derivative_matches_finite_difference(self):
        x = np.concatenate([np.linspace(-5.7, 5.7, 41), [1e-4, -1e-4, 63.9997]])
        h = 1e-6
        fd = (dirichlet_kernel(x + h, 64) - dirichlet_kernel(x - h, 64)) / (2 * h)
        assert np.allclose(dirichlet_derivative(x, 64), fd, atol=1e-7)

    def test_derivative_frozen_value(self):
        assert dirichlet_derivative(3.37, 64) == pytest.approx(
            -0.092782976339261232, rel=1e-12)

    def test_rejects_degenerate_K(self):
        with pytest.raises(ValueError):
            dirichlet_kernel(0.5, 1)


class TestQpsk:
    def test_unit_modulus_and_determinism(self):
        s1 = qpsk_symbols(64, np.random.default_rng(3))
        s2 = qpsk_symbols(64, np.random.default_rng(3))
        assert np.allclose(np.abs(s1), 1.0, atol=1e-15)
        assert np.array_equal(s1, s2)
        # all four constellation points occur
        assert len(set(np.round(np.angle(s1), 6))) == 4


class TestSynthesis:
    def test_compressed_echo_matches_closed_form(self):
        """z[l] = (alpha/r^2) exp(-j kappa r) S(l - nu) exactly (noiseless)."""
        scat = Scatterer(position=(0.07, 0.48, -0.03), rcs=0.01)
        scene = quiet_scene(scat)
        arr = ArrayGeometry.single()
        q = np.array([0.001, -0.002, 0.0005])
        symbols = qpsk_symbols(64, np.random.default_rng(0))
        Y = synthesize_received(scene, arr, q, symbols, CFG, rng=None)
        z = range_compress(equalize_and_cancel(Y, symbols, scene.gamma))
        r = float(np.linalg.norm(scat.pos - q))
        alpha = scene.amplitudes(CFG)[0]
        expected = analytic_point_profile(alpha, r, CFG)
        assert np.max(np.abs(z[0] - expected)) < 1e-16
        # the peak bin carries the spherical spreading and carrier phase
        nu = CFG.range_to_bin(r)
        peak = z[0, int(round(nu))]
        assert abs(peak) <= abs(alpha) / r**2

    def test_superposition_of_scatterers(self):
        s1 = Scatterer(position=(0.0, 0.5, 0.0), rcs=0.01)
        s2 = Scatterer(position=(0.3, 1.2, 0.1), rcs=0.02)
        arr = ArrayGeometry.uniform_linear(2, 0.005, axis=2)
        q = np.zeros(3)
        symbols = np.ones(64, dtype=complex)
        y12 = synthesize_received(quiet_scene(s1, s2), arr, q, symbols, CFG, rng=None)
        y1 = synthesize_received(quiet_scene(s1), arr, q, symbols, CFG, rng=None)
        y2 = synthesize_received(quiet_scene(s2), arr, q, symbols, CFG, rng=None)
        assert np.allclose(y12, y1 + y2, rtol=1e-12, atol=1e-18)

    def test_self_interference_cancellation_roundtrip(self):
        gamma = 10 ** (-35 / 20.0)
        scene = Scene(scatterers=[], gamma=gamma, noise_power=NOISELESS)
        symbols = qpsk_symbols(64, np.random.default_rng(5))
        Y = synthesize_received(scene, ArrayGeometry.single(), np.zeros(3),
                                symbols, CFG, rng=None)
        resid = equalize_and_cancel(Y, symbols, gamma)
        assert np.max(np.abs(resid)) < 1e-16

    def test_estimate_self_interference(self):
        gamma = 10 ** (-35 / 20.0) * np.exp(1j * 0.4)
        scene = Scene(scatterers=[], gamma=gamma, noise_power=NOISELESS)
        rng = np.random.default_rng(11)
        frames, syms = [], []
        for _ in range(6):
            s = qpsk_symbols(64, rng)
            frames.append(synthesize_received(scene, ArrayGeometry.single(),
                                              np.zeros(3), s, CFG, rng=None))
            syms.append(s)
        ghat = estimate_self_interference(np.array(frames), np.array(syms))
        assert ghat == pytest.approx(gamma, rel=1e-10)

    def test_noise_level_statistics(self):
        sigma2 = 1e-9
        scene = Scene(scatterers=[], noise_power=sigma2)
        rng = np.random.default_rng(17)
        symbols = np.ones(64, dtype=complex)
        Y = np.concatenate([
            synthesize_received(scene, ArrayGeometry.single(), np.zeros(3),
                                symbols, CFG, rng)
            for _ in range(400)])
        mean_power = float(np.mean(np.abs(Y) ** 2))
        assert mean_power == pytest.approx(sigma2, rel=0.05)

    def test_symbol_validation(self):
        scene = quiet_scene()
        bad = np.ones(64, dtype=complex)
        bad[3] = 0.0
        with pytest.raises(ValueError):
            synthesize_received(scene, ArrayGeometry.single(), np.zeros(3),
                                bad, CFG, rng=None)
        with pytest.raises(ValueError):
            equalize_and_cancel(np.ones((1, 64), complex), bad, 0.0)

    def test_cube_shape_and_consistency(self):
        scat = Scatterer(position=(0.0, 0.5, 0.0), rcs=0.01)
        arr = ArrayGeometry.uniform_linear(4, 0.005, axis=2)
        traj = np.zeros((3, 3))
        traj[:, 0] = [0.0, 0.001, 0.002]
        cube = synthesize_cube(quiet_scene(scat), arr, traj, CFG, rng=None)
        assert cube.values.shape == (4, 3, 64)
        assert cube.N == 4 and cube.M == 3
        # same position twice gives identical noiseless profiles
        cube2 = synthesize_cube(quiet_scene(scat), arr, traj, CFG, rng=None)
        assert np.array_equal(cube.values, cube2.values)


class TestEchoFitting:
    def test_design_matrix_columns(self):
        X = echo_design_matrix(np.array([2.0, 3.4]), 64)
        assert X.shape == (64, 2)
        assert np.allclose(X[:, 0], dirichlet_kernel(np.arange(64) - 2.0, 64))

    def test_joint_fit_recovers_overlapping_amplitudes(self):
        a_true = np.array([1.5 - 0.7j, -0.3 + 2.2j])
        nus = np.array([2.0, 3.4])
        profile = echo_design_matrix(nus, 64) @ a_true
        a_hat, gain = fit_point_echoes(profile, nus)
        assert np.allclose(a_hat, a_true, rtol=1e-12)
        # frozen oracle: with unit-norm columns and cross-gain S(-1.4),
        # diag((X^T X)^{-1}) = 1/(1 - S(1.4)^2)
        assert gain[0] == pytest.approx(1.0491327503786962, rel=1e-12)
        assert gain[1] == pytest.approx(gain[0], rel=1e-12)

    def test_fit_beats_naive_readout_under_leakage(self):
        a_true = np.array([1.0 + 0.0j, 1.0 + 0.0j])
        nus = np.array([2.0, 3.4])
        profile = echo_design_matrix(nus, 64) @ a_true
        naive = profile[2]            # direct sample at the first echo's bin
        a_hat, _ = fit_point_echoes(profile, nus)
        err_naive = abs(naive - a_true[0])
        err_fit = abs(a_hat[0] - a_true[0])
        assert err_naive > 1e-2       # leakage corrupts the raw sample
        assert err_fit < 1e-12

    def test_coincident_delays_raise(self):
        with pytest.raises(np.linalg.LinAlgError):
            fit_point_echoes(np.zeros(64, complex), np.array([5.0, 5.0]))
