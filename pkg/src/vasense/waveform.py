"""OFDM echo synthesis, equalization, and range compression.

The received subcarrier samples at slow-time index m are

    Y_n[k] = gamma*S[k] + sum_q (alpha_q / r_nq^2) exp(-j*2*pi*f_k*tau_nq) S[k] + W,

with tau = 2r/c and f_k the symmetric subcarrier grid of RadioConfig.
After equalization and self-interference cancellation, a centered inverse
DFT concentrates each echo into a Dirichlet-kernel peak:

    z_n[l] = sum_q (alpha_q / r^2) exp(-j*kappa*r) S(l - nu) + noise,

where nu = 2*B*r/c and S is the (real) Dirichlet kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from vasense.radio import ArrayGeometry, RadioConfig, Scene

# Below this value of |sin(pi*nu/K)| the kernel ratio is evaluated by its
# analytic limit / Taylor series instead of the raw quotient.
_SING_EPS = 1e-3


def _fold(nu, K):
    """Offset from the nearest multiple of K, and that multiple's index."""
    j = np.round(np.asarray(nu, dtype=float) / K)
    return nu - j * K, j.astype(int)


def _sign_at_multiple(j, K):
    # S(j*K + e) = sigma * S(e) with sigma = (-1)^(j*(K-1))
    if K % 2 == 1:
        return np.ones_like(np.asarray(j, dtype=float))
    return np.where(np.asarray(j) % 2 == 0, 1.0, -1.0)


def dirichlet_kernel(nu, K: int):
    """Periodic sinc S(nu) = sin(pi*nu)/(K*sin(pi*nu/K)).

    Total function: removable singularities at nu = 0 (mod K) are filled
    by the limit.  Accepts scalars or arrays.
    """
    if K < 2:
        raise ValueError("K must be >= 2")
    nu = np.asarray(nu, dtype=float)
    eps, j = _fold(nu, K)
    sigma = _sign_at_multiple(j, K)
    x = np.pi * eps
    near = np.abs(eps) < _SING_EPS
    # quotient form away from the singularity
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.sin(np.pi * nu) / (K * np.sin(np.pi * nu / K))
    # series around the singularity: S(e) ~ 1 - (pi*e)^2/6 * (1 - 1/K^2)
    series = sigma * (1.0 - x * x / 6.0 * (1.0 - 1.0 / K**2)
                      + x**4 / 360.0 * (3.0 - 10.0 / K**2 + 7.0 / K**4))
    out = np.where(near, series, direct)
    return out if out.ndim else float(out)


def dirichlet_derivative(nu, K: int):
    """Derivative S'(nu) of the Dirichlet kernel.

    Evaluated in closed form; near nu = 0 (mod K) the quotient cancels
    catastrophically, so a Taylor branch is used (S' -> 0 at the
    singularities by local symmetry).
    """
    if K < 2:
        raise ValueError("K must be >= 2")
    nu = np.asarray(nu, dtype=float)
    eps, j = _fold(nu, K)
    sigma = _sign_at_multiple(j, K)
    x = np.pi * eps
    near = np.abs(eps) < _SING_EPS
    s = np.sin(np.pi * nu / K)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.pi * (np.cos(np.pi * nu) * s
                          - np.sin(np.pi * nu) * np.cos(np.pi * nu / K) / K) / (K * s * s)
    # S'(e) ~ -(pi^2 e / 3)(1 - 1/K^2) + O(e^3)
    series = sigma * (-(np.pi * x / 3.0) * (1.0 - 1.0 / K**2)
                      + np.pi * x**3 * (3.0 - 10.0 / K**2 + 7.0 / K**4) / 90.0)
    out = np.where(near, series, direct)
    return out if out.ndim else float(out)


def qpsk_symbols(K: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-modulus QPSK symbols for one OFDM observation."""
    quadrant = rng.integers(0, 4, size=K)
    return np.exp(1j * (np.pi / 4.0 + quadrant * np.pi / 2.0))


def synthesize_received(scene: Scene, array: ArrayGeometry, q_m: np.ndarray,
                        symbols: np.ndarray, cfg: RadioConfig,
                        rng: np.random.Generator | None = None) -> np.ndarray:
    """Frequency-domain received subcarriers for one observation, shape (N, K).

    rng=None disables the additive noise term.
    """
    symbols = np.asarray(symbols)
    if symbols.shape != (cfg.K,):
        raise ValueError(f"expected {cfg.K} symbols, got shape {symbols.shape}")
    if np.any(np.abs(symbols) == 0):
        raise ValueError("symbols must be nonzero (equalizability)")

    ant = array.element_positions(np.asarray(q_m, dtype=float))  # (N, 3)
    Y = np.broadcast_to(scene.gamma * symbols, (array.N, cfg.K)).astype(complex).copy()

    if scene.Q:
        p = scene.positions()                                    # (Q, 3)
        r = np.linalg.norm(p[None, :, :] - ant[:, None, :], axis=-1)  # (N, Q)
        if np.any(r <= 0.0):
            raise ValueError("scatterer coincides with an antenna element")
        alpha = scene.amplitudes(cfg)                            # (Q,)
        tau = 2.0 * r / SPEED_OF_LIGHT
        fk = cfg.subcarrier_frequencies()                        # (K,)
        # (N, Q, K) echo phases summed over scatterers
        phase = np.exp(-2j * np.pi * fk[None, None, :] * tau[:, :, None])
        echo = np.einsum("q,nq,nqk->nk", alpha, 1.0 / r**2, phase)
        Y += echo * symbols

    if rng is not None and scene.noise_power > 0:
        scale = np.sqrt(scene.noise_power / 2.0)
        Y += scale * (rng.standard_normal(Y.shape) + 1j * rng.standard_normal(Y.shape))
    return Y


def equalize_and_cancel(Y: np.ndarray, symbols: np.ndarray, gamma_hat: complex) -> np.ndarray:
    """Remove the symbols and subtract the estimated self-interference."""
    symbols = np.asarray(symbols)
    if np.any(np.abs(symbols) == 0):
        raise ValueError("cannot equalize a zero symbol")
    return Y / symbols - gamma_hat


def range_compress(Y_eq: np.ndarray) -> np.ndarray:
    """Centered inverse DFT along the last axis.

    z[l] = (1/K) sum_k Yeq[k] exp(j*2*pi*(k-(K-1)/2)*l/K).  With the
    symmetric subcarrier grid this yields the real-Dirichlet point
    response with carrier phase exp(-j*kappa*r).
    """
    K = Y_eq.shape[-1]
    ell = np.arange(K)
    derot = np.exp(-1j * np.pi * (K - 1) * ell / K)
    return np.fft.ifft(Y_eq, axis=-1) * derot


def analytic_point_profile(alpha: complex, r: float, cfg: RadioConfig) -> np.ndarray:
    """Noiseless range profile of a single scatterer at range r (closed form)."""
    nu = cfg.range_to_bin(r)
    ell = np.arange(cfg.K)
    A = alpha / r**2 * np.exp(-1j * cfg.kappa * r)
    return A * dirichlet_kernel(ell - nu, cfg.K)


def echo_design_matrix(nus: np.ndarray, K: int) -> np.ndarray:
    """Columns S(l - nu_q) of the point-echo model, shape (K, Q)."""
    nus = np.atleast_1d(np.asarray(nus, dtype=float))
    ell = np.arange(K)
    return dirichlet_kernel(ell[:, None] - nus[None, :], K)


def fit_point_echoes(profile: np.ndarray, nus: np.ndarray, K: int | None = None):
    """Joint least-squares complex amplitudes of echoes at known delays.

    Solves min_a ||z - X a||^2 with X the Dirichlet design matrix; returns
    (a, gain) where gain_q = [(X^T X)^{-1}]_qq is the noise-variance
    amplification of each amplitude estimate relative to a lone echo.
    Unlike per-echo interpolation this is unbiased under mutual leakage,
    at the cost of noise amplification when delays nearly coincide.
    """
    if K is None:
        K = profile.shape[-1]
    X = echo_design_matrix(nus, K)
    gram = X.T @ X
    try:
        gram_inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "echo delays too close: singular design matrix") from exc
    a = gram_inv @ (X.T @ profile)
    return a, np.diag(gram_inv).copy()


def estimate_self_interference(Y_cal: np.ndarray, symbols_cal: np.ndarray) -> complex:
    """Self-interference estimate from target-free calibration frames.

    Y_cal: (F, N, K) received frames with no early-range target;
    symbols_cal: (F, K).  Returns the mean of Y/S over everything.
    """
    eq = Y_cal / symbols_cal[:, None, :]
    return complex(eq.mean())


@dataclass
class RangeCube:
    """Range-compressed profiles indexed (antenna n, slow time m, bin l)."""

    values: np.ndarray  # complex, (N, M, K)
    cfg: RadioConfig

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[2] != self.cfg.K:
            raise ValueError(f"cube shape {self.values.shape} inconsistent with K={self.cfg.K}")

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.values.shape[1]


def synthesize_cube(scene: Scene, array: ArrayGeometry, trajectory: np.ndarray,
                    cfg: RadioConfig, rng: np.random.Generator | None = None,
                    gamma_hat: complex | None = None) -> RangeCube:
    """Full pipeline over a trajectory: synthesize, equalize, compress.

    trajectory: (M, 3) phase-center positions.  gamma_hat=None uses the
    oracle value (perfect cancellation); pass an estimate otherwise.
    Fresh QPSK symbols are drawn per observation when rng is given,
    otherwise a fixed all-ones symbol set is used.
    """
    traj = np.asarray(trajectory, dtype=float)
    M = traj.shape[0]
    ghat = scene.gamma if gamma_hat is None else gamma_hat
    z = np.empty((array.N, M, cfg.K), dtype=complex)
    for m in range(M):
        if rng is not None:
            symbols = qpsk_symbols(cfg.K, rng)
        else:
            symbols = np.ones(cfg.K, dtype=complex)
        Y = synthesize_received(scene, array, traj[m], symbols, cfg, rng)
        z[:, m, :] = range_compress(equalize_and_cancel(Y, symbols, ghat))
    return RangeCube(values=z, cfg=cfg)
