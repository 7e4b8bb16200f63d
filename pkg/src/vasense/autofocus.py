"""EKF autofocus: trajectory-drift correction from echo phase residuals.

Strong stationary reflections (calibration points) are extracted from a
provisional image built on the early, low-drift part of the aperture.  For
each acquisition the matched-filter phase of every calibration echo is
compared against its value at the first acquisition; the phase difference

    psi_{m,q} = wrap(phi_{m,q} - phi_{0,q}) ~ -kappa * (r_{m,q} - r_{0,q})

observes the projection of the trajectory error delta_m on the look
direction.  An extended Kalman filter with the accelerometer's
double-integration dynamics fuses these wrapped observations into a
per-acquisition drift estimate; the corrected trajectory is then used to
re-focus the image once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from vasense.imaging import (CalibrationSet, ImageGrid, extract_calibration,
                             interpolate_profile, matched_field_grid,
                             refine_position)
from vasense.radio import ArrayGeometry, RadioConfig
from vasense.trajectory import ImuSpec
from vasense.waveform import RangeCube

# Multiplicative safety margin on the small-error phase-noise model
# 1/sqrt(2*SNR); covers interpolation leakage and linearization error.
PHASE_NOISE_INFLATION = 1.5

# A matched-filter sample must exceed this multiple of the noise floor to
# contribute a phase observation.
VALIDITY_SIGMA = 3.0


def wrap_phase(x):
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x), 2.0 * np.pi)


@dataclass
class PhaseObservation:
    """Matched-filter output for one (acquisition, element, point) triple."""

    value: complex       # interpolated profile sample
    phase: float         # its argument
    snr: float           # |value|^2 over the estimated noise variance
    valid: bool          # above the detection threshold


def noise_floor(profile: np.ndarray) -> float:
    """Per-bin noise variance estimate from the upper half of a range profile.

    The usable scene occupies the near bins; the far half is assumed
    target-free.  Returns mean |z|^2 over those bins.
    """
    K = profile.shape[-1]
    return float(np.mean(np.abs(profile[..., K // 2:]) ** 2))


def matched_filter_phase(profile: np.ndarray, nu: float, cfg: RadioConfig,
                         window: int = 8, noise_var: float | None = None) -> PhaseObservation:
    """Fractional-delay matched filter at predicted bin nu with validity test."""
    if noise_var is None:
        noise_var = noise_floor(profile)
    v = interpolate_profile(profile, nu, window)
    # Var of the normalized interpolation is sigma_z^2 / sum(w^2) >= sigma_z^2
    snr = np.inf if noise_var == 0 else abs(v) ** 2 / noise_var
    valid = bool(v != 0 and snr >= VALIDITY_SIGMA**2)
    return PhaseObservation(value=v, phase=float(np.angle(v)), snr=snr, valid=valid)


def differential_phases(phi: np.ndarray, phi_ref: np.ndarray) -> np.ndarray:
    """Wrapped phase differences against the reference acquisition."""
    return wrap_phase(np.asarray(phi) - np.asarray(phi_ref))


@dataclass
class EkfState:
    """Drift filter state [delta, v_err, b] in R^9 with covariance."""

    x: np.ndarray = field(default_factory=lambda: np.zeros(9))
    P: np.ndarray = field(default_factory=lambda: np.zeros((9, 9)))

    @property
    def delta(self) -> np.ndarray:
        return self.x[0:3]

    @property
    def v_err(self) -> np.ndarray:
        return self.x[3:6]

    @property
    def bias(self) -> np.ndarray:
        return self.x[6:9]


def initial_state(spec: ImuSpec) -> EkfState:
    """Start of the aperture: zero drift by construction, bias prior only."""
    P = np.zeros((9, 9))
    P[6:9, 6:9] = spec.sigma_b**2 * np.eye(3)
    return EkfState(P=P)


def transition_matrices(spec: ImuSpec) -> tuple[np.ndarray, np.ndarray]:
    """State transition F and process noise Q for one slow-time step.

    Velocity integrates the bias over the step and position integrates the
    updated velocity (the same rectangle rule as the closed-form error
    prior), so delta gains T*v + T^2*b per step.  Accelerometer noise
    enters through the same [T^2, T, 0] integration vector.
    """
    T = spec.T
    F = np.eye(9)
    F[0:3, 3:6] = T * np.eye(3)
    F[0:3, 6:9] = T**2 * np.eye(3)
    F[3:6, 6:9] = T * np.eye(3)
    gvec = np.array([T**2, T, 0.0])
    Q = spec.sigma_a**2 * np.kron(np.outer(gvec, gvec), np.eye(3))
    return F, Q


def predict(state: EkfState, spec: ImuSpec) -> EkfState:
    F, Q = transition_matrices(spec)
    return EkfState(x=F @ state.x, P=F @ state.P @ F.T + Q)


def update(state: EkfState, psi: np.ndarray, predicted: np.ndarray,
           H: np.ndarray, noise_var: np.ndarray) -> EkfState:
    """Joseph-form EKF update with innovation wrapping.

    psi: measured wrapped phase differences; predicted: model values at the
    prior state; H: observation Jacobian rows (n_obs, 9); noise_var:
    per-observation phase variance.
    """
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    predicted = np.atleast_1d(np.asarray(predicted, dtype=float))
    noise_var = np.atleast_1d(np.asarray(noise_var, dtype=float))
    H = np.atleast_2d(H)
    if psi.size == 0:
        return state
    innov = wrap_phase(psi - predicted)
    S = H @ state.P @ H.T + np.diag(noise_var)
    K = np.linalg.solve(S, H @ state.P).T             # (9, n_obs)
    x = state.x + K @ innov
    IKH = np.eye(9) - K @ H
    P = IKH @ state.P @ IKH.T + K @ np.diag(noise_var) @ K.T
    return EkfState(x=x, P=P)


@dataclass
class AutofocusResult:
    """Per-acquisition drift estimates and the corrected trajectory."""

    delta_hat: np.ndarray        # (M, 3) filtered drift estimates
    q_corr: np.ndarray           # (M, 3) corrected trajectory q_hat - delta_hat
    calibration: CalibrationSet
    valid_fraction: float        # share of phase observations that passed
    final_covariance: np.ndarray  # (9, 9) terminal state covariance


def _phase_table(cube: RangeCube, ant: np.ndarray, points: np.ndarray,
                 m: int, cfg: RadioConfig, floors: np.ndarray, window: int):
    """Observations for one acquisition: phases, validity, SNR per (q, n).

    All calibration echoes of one profile are fitted jointly (unbiased
    under mutual leakage); the per-echo noise gain from the fit deflates
    the SNR used for validity and weighting.
    """
    from vasense.waveform import fit_point_echoes

    N = cube.N
    Q = points.shape[0]
    phases = np.zeros((Q, N))
    snrs = np.zeros((Q, N))
    valid = np.zeros((Q, N), dtype=bool)
    for n in range(N):
        nus = np.array([cfg.range_to_bin(np.linalg.norm(points[qi] - ant[m, n]))
                        for qi in range(Q)])
        amps, gain = fit_point_echoes(cube.values[n, m], nus, cfg.K)
        for qi in range(Q):
            v = amps[qi]
            var = floors[n, m] * gain[qi]
            snr = np.inf if var == 0 else abs(v) ** 2 / var
            phases[qi, n] = float(np.angle(v))
            snrs[qi, n] = snr
            valid[qi, n] = bool(v != 0 and snr >= VALIDITY_SIGMA**2)
    return phases, snrs, valid


def run_autofocus(cube: RangeCube, q_hat: np.ndarray, array: ArrayGeometry,
                  cfg: RadioConfig, spec: ImuSpec,
                  calibration: CalibrationSet | None = None,
                  search_center: np.ndarray | None = None,
                  search_half_extent: np.ndarray | None = None,
                  n_points: int = 3, grid_spacing: float | None = None,
                  refine_calibration: bool = False,
                  window: int = 8) -> AutofocusResult:
    """Full autofocus pass over one acquisition cube.

    If no calibration set is given, a provisional matched-field image over
    the requested search region is formed from the early low-drift fraction
    of the aperture and its strongest peaks are used.  With
    refine_calibration, supplied (approximate) calibration positions are
    polished on the same early slice before use.  Phase differences against
    acquisition 0 then drive the drift filter.
    """
    q_hat = np.asarray(q_hat, dtype=float)
    M = q_hat.shape[0]
    if cube.M != M:
        raise ValueError("cube and trajectory disagree on the number of acquisitions")

    M0 = max(8, -(-M // 10))                      # early, still-accurate slice
    M0 = min(M0, M)
    sub = RangeCube(values=cube.values[:, :M0, :], cfg=cfg)

    if calibration is None:
        if search_center is None or search_half_extent is None:
            raise ValueError("need a search region to extract calibration points")
        if grid_spacing is None:
            grid_spacing = cfg.wavelength / 8.0
        grid = ImageGrid.centered(search_center, search_half_extent, grid_spacing)
        provisional = matched_field_grid(sub, q_hat[:M0], array, grid, cfg, window)
        calibration = extract_calibration(provisional, n_points)
        if calibration.Q == 0:
            raise ValueError("no calibration peaks found in the provisional image")
        refine_calibration = True
    if refine_calibration:
        refined = np.array([refine_position(sub, q_hat[:M0], array, cfg, p, window)
                            for p in calibration.points])
        calibration = CalibrationSet(points=refined,
                                     magnitudes=calibration.magnitudes,
                                     complete=calibration.complete)

    pts = calibration.points
    ant = array.element_positions(q_hat)          # (M, N, 3)
    floors = np.empty((cube.N, M))
    for n in range(cube.N):
        for m in range(M):
            floors[n, m] = noise_floor(cube.values[n, m])

    phi0, snr0, valid0 = _phase_table(cube, ant, pts, 0, cfg, floors, window)
    r0 = np.linalg.norm(pts[:, None, :] - ant[0][None, :, :], axis=-1)  # (Q, N)

    state = initial_state(spec)
    delta_hat = np.zeros((M, 3))
    n_total = 0
    n_valid = int(np.count_nonzero(valid0))
    n_total += valid0.size

    for m in range(1, M):
        state = predict(state, spec)
        phim, snrm, validm = _phase_table(cube, ant, pts, m, cfg, floors, window)
        ok = validm & valid0
        n_total += validm.size
        n_valid += int(np.count_nonzero(validm))
        if np.any(ok):
            rows = []
            psi = []
            pred = []
            noise = []
            for qi, n in np.argwhere(ok):
                # true element position is ant - delta; residual range uses
                # the prior drift estimate
                w = pts[qi] - ant[m, n] + state.delta
                r = np.linalg.norm(w)
                u = w / r
                pred.append(-cfg.kappa * (r - r0[qi, n]))
                psi.append(wrap_phase(phim[qi, n] - phi0[qi, n]))
                row = np.zeros(9)
                row[0:3] = -cfg.kappa * u
                rows.append(row)
                # phase difference carries the noise of both acquisitions
                sigma2 = PHASE_NOISE_INFLATION**2 * 0.5 * (1.0 / snrm[qi, n]
                                                           + 1.0 / snr0[qi, n])
                noise.append(sigma2)
            state = update(state, np.array(psi), np.array(pred), np.array(rows),
                           np.array(noise))
        delta_hat[m] = state.delta

    valid_fraction = n_valid / n_total if n_total else 0.0
    return AutofocusResult(delta_hat=delta_hat, q_corr=q_hat - delta_hat,
                           calibration=calibration, valid_fraction=valid_fraction,
                           final_covariance=state.P)
