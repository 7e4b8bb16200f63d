"""Phase-center trajectories, IMU corruption, and the correlated error prior.

An accelerometer with bias b_a ~ N(0, sigma_b^2 I) and per-sample noise
n_m ~ N(0, sigma_a^2 I) is double-integrated to estimate the phase-center
path.  With the rectangle-rule integrator the stacked position errors
delta_1..delta_{M-1} are zero-mean Gaussian with covariance C_t (x) I_3,

  [C_t]_{mn} = (sigma_b^2 T^4 / 4) m(m+1) n(n+1)
             + sigma_a^2 T^4 sum_{i=1}^{min(m,n)} (m-i+1)(n-i+1),

so the bias term grows like m^2 n^2 and dominates long apertures.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from vasense.radio import RadioConfig


@dataclass(frozen=True)
class ImuSpec:
    """Accelerometer error magnitudes at the slow-time rate."""

    sigma_a: float        # noise std [m/s^2 per sample]
    sigma_b: float        # bias std [m/s^2]
    T: float = 1e-3       # sampling interval [s]

    def __post_init__(self):
        if self.sigma_a < 0 or self.sigma_b < 0:
            raise ValueError("noise and bias stds must be nonnegative")
        if self.T <= 0:
            raise ValueError("sampling interval must be positive")
        if self.sigma_a == 0 and self.sigma_b == 0:
            raise ValueError("at least one of sigma_a, sigma_b must be nonzero")


# Grade presets.  sigma_a is the raw per-sample accelerometer noise at the
# slow-time rate; sigma_b is the residual constant bias remaining after the
# startup rest calibration that precedes the aperture gesture (the initial
# bias offset itself is assumed calibrated out while the device is still).
IMU_PRESETS = {
    "consumer": dict(sigma_a=1.5e-1, sigma_b=1e-3),
    "high": dict(sigma_a=2e-2, sigma_b=1e-4),
}


def imu_preset(name: str, T: float = 1e-3) -> ImuSpec:
    try:
        params = IMU_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown IMU preset {name!r}; choose from {sorted(IMU_PRESETS)}")
    return ImuSpec(T=T, **params)


@dataclass
class Trajectory:
    """True phase-center path sampled at the slow-time interval T."""

    q: np.ndarray          # (M, 3) positions [m]
    T: float               # slow-time interval [s]
    aperture: float        # nominal aperture length A [m]

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if self.q.ndim != 2 or self.q.shape[1] != 3:
            raise ValueError("trajectory must be (M, 3)")
        if self.M < 2:
            raise ValueError(f"need at least 2 slow-time samples, got {self.M}")

    @property
    def M(self) -> int:
        return self.q.shape[0]


def slow_time_count(aperture: float, cfg: RadioConfig) -> int:
    """M = ceil(4*A/lambda) slow-time acquisitions for aperture length A."""
    return math.ceil(4.0 * aperture / cfg.wavelength)


def _resample_arclength(points: np.ndarray, M: int, total: float) -> np.ndarray:
    """M samples along a densely tabulated curve, uniformly spaced in arc length."""
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    # sample spacing total/M keeps adjacent samples within lambda/4
    targets = np.arange(M) * (total / M)
    out = np.empty((M, 3))
    for ax in range(3):
        out[:, ax] = np.interp(targets, s, points[:, ax])
    return out


def generate_trajectory(kind: str, aperture: float, cfg: RadioConfig,
                        T: float = 1e-3, arc_radius: float = 0.3,
                        wiggle_amplitude: float | None = None,
                        wiggle_cycles: float = 3.0) -> Trajectory:
    """Synthetic hand-motion path of total length ~A with M = ceil(4A/lambda).

    kinds: 'linear-sweep' (uniform spacing along x), 'arc' (circular arc of
    the given radius), 'sinusoidal-perturbed' (sweep plus transverse wiggle).
    Samples are spaced A/M <= lambda/4 apart in arc length.
    """
    if aperture <= 0:
        raise ValueError(f"aperture length must be positive, got {aperture}")
    M = slow_time_count(aperture, cfg)
    if M < 2:
        raise ValueError(f"aperture {aperture} m yields M={M} < 2 slow-time samples")

    if kind == "linear-sweep":
        s = (np.arange(M) - (M - 1) / 2.0) * (aperture / M)
        q = np.zeros((M, 3))
        q[:, 0] = s
    elif kind == "arc":
        # dense tabulation, then equal-arc-length resampling
        theta_total = aperture / arc_radius
        t = np.linspace(0.0, theta_total, 64 * M)
        dense = np.stack([arc_radius * np.sin(t),
                          arc_radius * (1.0 - np.cos(t)),
                          np.zeros_like(t)], axis=1)
        q = _resample_arclength(dense, M, aperture)
        q -= q.mean(axis=0)
    elif kind == "sinusoidal-perturbed":
        # hand tremor wiggles out of the sweep axis in both transverse
        # directions; without that, a 1-D sweep leaves the out-of-plane
        # coordinate unobservable
        amp = cfg.wavelength / 2.0 if wiggle_amplitude is None else wiggle_amplitude
        t = np.linspace(0.0, 1.0, 64 * M)
        dense = np.stack([aperture * t,
                          amp * np.sin(2.0 * np.pi * wiggle_cycles * t),
                          amp * np.sin(2.0 * np.pi * (wiggle_cycles - 1.0) * t + 0.5)], axis=1)
        # rescale so the total arc length is exactly A
        arclen = np.sum(np.linalg.norm(np.diff(dense, axis=0), axis=1))
        dense *= aperture / arclen
        q = _resample_arclength(dense, M, aperture)
        q -= q.mean(axis=0)
    else:
        raise ValueError(f"unknown trajectory kind {kind!r}")
    return Trajectory(q=q, T=T, aperture=aperture)


@dataclass
class ErrorPrior:
    """Correlated trajectory-error prior: Cov(delta) = C_t (x) I_3."""

    C_t: np.ndarray   # (M-1, M-1)

    def __post_init__(self):
        self.C_t = np.asarray(self.C_t, dtype=float)
        if self.C_t.ndim != 2 or self.C_t.shape[0] != self.C_t.shape[1]:
            raise ValueError("C_t must be square")

    @property
    def M(self) -> int:
        return self.C_t.shape[0] + 1

    def full_covariance(self) -> np.ndarray:
        """Materialized C_t (x) I_3; only for small M."""
        return np.kron(self.C_t, np.eye(3))


def error_covariance(spec: ImuSpec, M: int) -> ErrorPrior:
    """Closed-form double-integration error covariance, indices 1..M-1."""
    if M < 2:
        raise ValueError("M must be >= 2")
    m = np.arange(1, M)
    T4 = spec.T**4
    bias = (spec.sigma_b**2 * T4 / 4.0) * np.outer(m * (m + 1), m * (m + 1))
    # noise term: sum_{i=1}^{min(m,n)} (m-i+1)(n-i+1)
    #           = lo(lo+1)(2lo+1)/6 + |m-n| lo(lo+1)/2   with lo = min(m,n)
    lo = np.minimum.outer(m, m).astype(float)
    gap = np.abs(np.subtract.outer(m, m)).astype(float)
    noise = lo * (lo + 1) * (2 * lo + 1) / 6.0 + gap * lo * (lo + 1) / 2.0
    noise *= spec.sigma_a**2 * T4
    return ErrorPrior(C_t=bias + noise)


@dataclass
class ImuRun:
    """One realization of the IMU-estimated trajectory."""

    q_hat: np.ndarray   # (M, 3) estimated positions
    delta: np.ndarray   # (M, 3) position errors, delta[0] = 0
    bias: np.ndarray    # (3,) drawn accelerometer bias


def simulate_imu(traj: Trajectory, spec: ImuSpec, rng: np.random.Generator,
                 scheme: str = "rectangle") -> ImuRun:
    """Corrupt the true accelerations and double-integrate.

    True accelerations are the finite differences consistent with the chosen
    integrator, so a perfect IMU reproduces the path exactly.  'rectangle'
    matches the closed-form prior of error_covariance(); 'trapezoid' is a
    smoother-integration variant kept for realism studies.
    """
    q = traj.q
    M = traj.M
    T = spec.T
    v = np.diff(q, axis=0) / T                       # v[m] for m = 1..M-1
    bias = rng.normal(0.0, spec.sigma_b, size=3)
    noise = rng.normal(0.0, spec.sigma_a, size=(M - 1, 3))
    err_acc = bias + noise                           # acceleration error at steps 1..M-1

    delta = np.zeros((M, 3))
    if scheme == "rectangle":
        # v_err_m = v_err_{m-1} + T*e_m ; delta_m = delta_{m-1} + T*v_err_m
        v_err = np.cumsum(T * err_acc, axis=0)
        delta[1:] = np.cumsum(T * v_err, axis=0)
    elif scheme == "trapezoid":
        v_err = np.zeros((M, 3))
        for m in range(1, M):
            e_prev = err_acc[m - 2] if m >= 2 else err_acc[0]
            v_err[m] = v_err[m - 1] + T * (err_acc[m - 1] + e_prev) / 2.0
            delta[m] = delta[m - 1] + T * (v_err[m] + v_err[m - 1]) / 2.0
    else:
        raise ValueError(f"unknown integration scheme {scheme!r}")
    _ = v  # truth reconstruction is exact by construction for both schemes
    return ImuRun(q_hat=q + delta, delta=delta, bias=bias)


def sample_errors(prior: ErrorPrior, rng: np.random.Generator) -> np.ndarray:
    """Draw delta ~ N(0, C_t (x) I_3), returned as a 3*(M-1) vector.

    The Kronecker structure is exploited: one factorization of C_t is
    applied independently per axis.
    """
    Ct = prior.C_t
    n = Ct.shape[0]
    if not np.any(Ct):
        return np.zeros(3 * n)
    # symmetric PSD factorization via eigendecomposition (Cholesky fails on
    # the semidefinite boundary)
    w, V = np.linalg.eigh(Ct)
    if w.min() < -1e-10 * max(w.max(), 1.0):
        raise np.linalg.LinAlgError(
            f"C_t is not positive semidefinite (min eigenvalue {w.min():.3e})")
    L = V * np.sqrt(np.clip(w, 0.0, None))
    draws = L @ rng.standard_normal((n, 3))   # (M-1, 3)
    return draws.reshape(-1)


def write_trajectory_csv(path, traj: Trajectory, run: ImuRun | None = None,
                         corrected: np.ndarray | None = None) -> None:
    """CSV export (m, qx, qy, qz, qhat*, [qcorr*]) for inspection and diffing."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["m", "qx", "qy", "qz", "qhatx", "qhaty", "qhatz"]
        if corrected is not None:
            header += ["qcorrx", "qcorry", "qcorrz"]
        writer.writerow(header)
        q_hat = run.q_hat if run is not None else traj.q
        for m in range(traj.M):
            row = [m] + [f"{x:.12e}" for x in traj.q[m]] + [f"{x:.12e}" for x in q_hat[m]]
            if corrected is not None:
                row += [f"{x:.12e}" for x in corrected[m]]
            writer.writerow(row)
