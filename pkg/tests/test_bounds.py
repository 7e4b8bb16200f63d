"""Fisher information and position-bound tests.

The independent oracle perturbs the full synthesis pipeline (transmit,
equalize, range-compress) with central finite differences and assembles
the Gaussian-model Fisher matrix numerically; the analytic blocks must
reproduce it.
"""

import numpy as np
import pytest

from vasense.bounds import (BcrbReport, MeanModel, SingularBlockError,
                            bcrb_position, bound_report, crb_known_position,
                            fisher_blocks, mu_vector, radial_sensitivity)
from vasense.radio import ArrayGeometry, RadioConfig, Scatterer, Scene
from vasense.trajectory import error_covariance, generate_trajectory, imu_preset
from vasense.waveform import equalize_and_cancel, range_compress, synthesize_received

CFG = RadioConfig(fc=28e9, B=200e6, K=32)


def pipeline_mean(p, deltas, alpha, q_hat, array, cfg):
    """Noiseless observation stack via the actual synthesis chain.

    The true phase-center path is q_hat - delta; the scatterer amplitude is
    injected through a unit-link scene with a direct amplitude override.
    """
    M = q_hat.shape[0]
    out = np.empty((M, array.N, cfg.K), dtype=complex)
    symbols = np.ones(cfg.K, dtype=complex)
    scene = Scene(scatterers=[Scatterer(position=tuple(p), rcs=1.0)],
                  noise_power=1e-30)
    base = scene.amplitudes(cfg)[0]
    for m in range(M):
        q_true = q_hat[m] - deltas[m]
        Y = synthesize_received(scene, array, q_true, symbols, cfg, rng=None)
        out[m] = range_compress(equalize_and_cancel(Y, symbols, 0.0))
    return out * (alpha / base)


def fd_fisher(model: MeanModel, noise_power: float, step=1e-7) -> np.ndarray:
    """Finite-difference Fisher matrix for theta = [p, delta_1.., Re a, Im a].

    J_ij = (2K/sigma^2) Re sum conj(dmu_i) dmu_j in the compressed domain
    (the 1/K-normalized inverse DFT scales products by 1/K).
    """
    M = model.M
    q_hat = model.trajectory
    p0 = model.target.copy()
    d0 = np.zeros((M, 3))
    a0 = model.alpha
    n_par = 3 + 3 * (M - 1) + 2

    def mean(theta):
        p = theta[0:3]
        deltas = np.zeros((M, 3))
        deltas[1:] = theta[3:3 + 3 * (M - 1)].reshape(M - 1, 3)
        alpha = theta[-2] + 1j * theta[-1]
        return pipeline_mean(p, deltas, alpha, q_hat, model.array, model.cfg)

    theta0 = np.concatenate([p0, d0[1:].ravel(), [a0.real, a0.imag]])
    grads = []
    for i in range(n_par):
        tp, tm = theta0.copy(), theta0.copy()
        tp[i] += step
        tm[i] -= step
        grads.append((mean(tp) - mean(tm)) / (2 * step))
    J = np.empty((n_par, n_par))
    scale = 2.0 * model.cfg.K / noise_power
    for i in range(n_par):
        for j in range(i, n_par):
            J[i, j] = J[j, i] = scale * float(
                np.sum(np.real(np.conj(grads[i]) * grads[j])))
    return J


def assemble(blocks) -> np.ndarray:
    top = np.hstack([blocks.J_pp, blocks.J_pd, blocks.J_pa])
    mid = np.hstack([blocks.J_pd.T, blocks.J_dd, blocks.J_da])
    bot = np.hstack([blocks.J_pa.T, blocks.J_da.T, blocks.J_aa])
    return np.vstack([top, mid, bot])


def small_model(seed=0, M=4, N=2):
    rng = np.random.default_rng(seed)
    traj = rng.normal(0.0, 0.01, size=(M, 3))
    target = np.array([0.05, 0.45, -0.03]) + rng.normal(0.0, 0.05, size=3)
    alpha = (1e-5 * (1 + rng.uniform(-0.5, 0.5))) * np.exp(1j * rng.uniform(0, 2 * np.pi))
    arr = (ArrayGeometry.single() if N == 1
           else ArrayGeometry.uniform_linear(N, CFG.wavelength / 2, axis=2))
    return MeanModel(alpha, target, traj, CFG, arr)


class TestFisherBlocks:
    def test_matches_pipeline_finite_differences(self):
        for seed in range(3):
            model = small_model(seed)
            sigma2 = 1e-12
            J_fd = fd_fisher(model, sigma2)
            J_an = assemble(fisher_blocks(model, sigma2))
            denom = np.linalg.norm(J_fd)
            assert np.linalg.norm(J_an - J_fd) / denom < 1e-5

    def test_mean_vector_matches_pipeline(self):
        model = small_model(1)
        stack = pipeline_mean(model.target, np.zeros((model.M, 3)), model.alpha,
                              model.trajectory, model.array, CFG)
        for m in range(model.M):
            assert np.allclose(mu_vector(model, m, 0), stack[m, 0],
                               rtol=1e-10, atol=1e-22)

    def test_validation(self):
        model = small_model(0)
        with pytest.raises(ValueError):
            fisher_blocks(model, 0.0)
        model_zero = small_model(0)
        model_zero.alpha = 0.0
        with pytest.raises(ValueError):
            fisher_blocks(model_zero, 1e-12)

    def test_radial_sensitivity_near_kappa_squared(self):
        model = small_model(2)
        s = radial_sensitivity(model, 0)
        # phase term dominates: kappa^2 ~ 1.38e6, envelope adds a few percent
        assert 0.9 * CFG.kappa**2 < s < 1.3 * CFG.kappa**2


class TestScaling:
    def test_crb_scales_exactly_inverse_snr(self):
        model = small_model(3)
        c1 = crb_known_position(fisher_blocks(model, 1e-12))
        c2 = crb_known_position(fisher_blocks(model, 1e-10))
        assert np.allclose(c2, 100.0 * c1, rtol=1e-12)

    def test_bcrb_between_floor_and_crb(self):
        arr = ArrayGeometry.uniform_linear(4, CFG.wavelength / 2, axis=2)
        traj = generate_trajectory("sinusoidal-perturbed", 0.05, CFG, T=0.026)
        model = MeanModel(2e-5, np.array([0.0, 0.5, 0.0]), traj.q, CFG, arr)
        prior = error_covariance(imu_preset("consumer", T=0.026), traj.M)
        rep = bound_report(model, 1e-12, prior)
        assert rep.sqrt_trace_bcrb >= rep.sqrt_trace_crb
        # monotone nonincreasing in SNR
        rep2 = bound_report(model, 1e-13, prior)
        assert rep2.sqrt_trace_bcrb <= rep.sqrt_trace_bcrb + 1e-15

    def test_bcrb_floor_at_high_snr(self):
        arr = ArrayGeometry.uniform_linear(4, CFG.wavelength / 2, axis=2)
        traj = generate_trajectory("sinusoidal-perturbed", 0.05, CFG, T=0.026)
        model = MeanModel(2e-5, np.array([0.0, 0.5, 0.0]), traj.q, CFG, arr)
        prior = error_covariance(imu_preset("consumer", T=0.026), traj.M)
        hi = bound_report(model, 1e-16, prior).sqrt_trace_bcrb
        hi10 = bound_report(model, 1e-17, prior).sqrt_trace_bcrb
        assert abs(hi - hi10) / hi < 0.01       # flat: prior-limited floor
        lo = bound_report(model, 1e-12, prior).sqrt_trace_crb
        assert hi > lo                          # the floor exceeds the CRB there

    def test_range_variance_projection(self):
        model = small_model(4)
        rep = BcrbReport(crb_known=np.diag([1.0, 4.0, 9.0]),
                         bcrb=np.diag([2.0, 8.0, 18.0]),
                         axis_std_known=np.array([1.0, 2.0, 3.0]),
                         axis_std_bcrb=np.sqrt([2.0, 8.0, 18.0]))
        assert rep.range_variance([0, 1, 0]) == pytest.approx(8.0)
        assert rep.range_variance([0, 2, 0]) == pytest.approx(8.0)  # normalized
        assert rep.range_variance([1, 0, 0], bayesian=False) == pytest.approx(1.0)


class TestDegenerateGeometry:
    def test_single_element_static_position_is_singular(self):
        # one antenna that never moves cannot resolve three coordinates
        traj = np.zeros((3, 3))
        model = MeanModel(1e-5, np.array([0.0, 0.5, 0.0]), traj, CFG,
                          ArrayGeometry.single())
        with pytest.raises(SingularBlockError):
            crb_known_position(fisher_blocks(model, 1e-12))

    def test_prior_dimension_mismatch(self):
        model = small_model(5)
        prior = error_covariance(imu_preset("consumer", T=0.026), model.M + 3)
        with pytest.raises(ValueError):
            bcrb_position(fisher_blocks(model, 1e-12), prior)
