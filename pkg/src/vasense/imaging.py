"""Near-field backprojection imaging, peak extraction, and localization.

The image at candidate position r is the coherent sum over acquisitions
and elements of the fractionally-interpolated range profile at the
predicted delay, rephased by exp(+j*kappa*r_hat).  Per-voxel sums run in
fixed (m, n) order, so results do not depend on how voxels are scheduled.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from vasense import _kernels
from vasense.radio import ArrayGeometry, RadioConfig
from vasense.waveform import (RangeCube, dirichlet_kernel, echo_design_matrix,
                              fit_point_echoes)


class MissCounter:
    """Counts out-of-window delay lookups (returned as zeros, not errors)."""

    def __init__(self):
        self.count = 0

    def add(self, n: int):
        self.count += int(n)

    def reset(self):
        self.count = 0


interp_misses = MissCounter()


@dataclass
class ImageGrid:
    """Regular voxel grid with complex image values."""

    origin: np.ndarray            # (3,) corner voxel center [m]
    spacing: np.ndarray           # (3,) per-axis step [m]
    dims: tuple[int, int, int]
    values: np.ndarray = None     # complex, shape dims

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.spacing = np.asarray(self.spacing, dtype=float)
        if np.any(self.spacing <= 0):
            raise ValueError("grid spacing must be positive")
        if any(d < 1 for d in self.dims):
            raise ValueError("grid dims must be >= 1")
        if self.values is None:
            self.values = np.zeros(self.dims, dtype=complex)
        elif self.values.shape != tuple(self.dims):
            raise ValueError("values shape does not match dims")

    @classmethod
    def centered(cls, center, half_extent, spacing) -> "ImageGrid":
        """Grid symmetric about `center`; axes with zero half-extent collapse
        to a single voxel (2-D slice mode)."""
        center = np.asarray(center, dtype=float)
        half = np.asarray(half_extent, dtype=float)
        spacing = np.broadcast_to(np.asarray(spacing, dtype=float), (3,)).copy()
        dims = tuple(int(np.floor(h / s)) * 2 + 1 for h, s in zip(half, spacing))
        origin = center - (np.array(dims) - 1) / 2.0 * spacing
        return cls(origin=origin, spacing=spacing, dims=dims)

    def voxel_centers(self) -> np.ndarray:
        """All voxel centers, shape (G, 3), C-order flattening of dims."""
        axes = [self.origin[i] + np.arange(self.dims[i]) * self.spacing[i] for i in range(3)]
        xx, yy, zz = np.meshgrid(*axes, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)

    def index_to_position(self, idx) -> np.ndarray:
        return self.origin + np.asarray(idx, dtype=float) * self.spacing

    def copy_empty(self) -> "ImageGrid":
        return ImageGrid(origin=self.origin.copy(), spacing=self.spacing.copy(),
                         dims=self.dims)


def interpolate_profile(z: np.ndarray, nu: float, window: int = 8,
                        counter: MissCounter = interp_misses) -> complex:
    """Band-limited fractional-delay lookup of one range profile.

    Normalized truncated Dirichlet matched sum over the `window` nearest
    bins; exact at integer nu.  Out-of-window delays yield 0 and bump the
    miss counter.
    """
    K = z.shape[-1]
    if not 0.0 <= nu < K:
        counter.add(1)
        return 0.0j
    window = int(min(window, K))
    lo = int(np.clip(np.floor(nu) - window // 2 + 1, 0, K - window))
    ell = np.arange(lo, lo + window)
    w = dirichlet_kernel(ell - nu, K)
    return complex(np.dot(z[lo:lo + window], w) / np.dot(w, w))


def window_response(nu_eval: float, nu_src: float, K: int, window: int = 8) -> float:
    """Response of the normalized interpolation window at nu_eval to a
    unit-amplitude echo centered at nu_src.

    Equals ~1 when nu_eval == nu_src and the cross-talk gain otherwise;
    used to cancel leakage between same-window echoes.
    """
    if not 0.0 <= nu_eval < K:
        return 0.0
    window = int(min(window, K))
    lo = int(np.clip(np.floor(nu_eval) - window // 2 + 1, 0, K - window))
    ell = np.arange(lo, lo + window)
    w = dirichlet_kernel(ell - nu_eval, K)
    src = dirichlet_kernel(ell - nu_src, K)
    return float(np.dot(src, w) / np.dot(w, w))


def image_values(cube: RangeCube, traj_estimate: np.ndarray, array: ArrayGeometry,
                 points: np.ndarray, cfg: RadioConfig, window: int = 8,
                 counter: MissCounter = interp_misses) -> np.ndarray:
    """Backprojection sums at arbitrary query points (the imaging kernel)."""
    traj = np.asarray(traj_estimate, dtype=float)
    if cube.values.shape[0] != array.N or cube.values.shape[1] != traj.shape[0]:
        raise ValueError("cube dimensions inconsistent with trajectory/array")
    ant = array.element_positions(traj)             # (M, N, 3)
    vals, misses = _kernels.backproject_points(
        cube.values, ant, np.atleast_2d(points), cfg.two_b_over_c, cfg.kappa, window)
    counter.add(misses)
    return vals


def backproject(cube: RangeCube, traj_estimate: np.ndarray, array: ArrayGeometry,
                grid: ImageGrid, cfg: RadioConfig, window: int = 8) -> ImageGrid:
    """Fill a voxel grid with the backprojection image."""
    out = grid.copy_empty()
    vals = image_values(cube, traj_estimate, array, grid.voxel_centers(), cfg, window)
    out.values = vals.reshape(grid.dims)
    return out


def matched_field_values(cube: RangeCube, traj_estimate: np.ndarray, array: ArrayGeometry,
                         points: np.ndarray, cfg: RadioConfig, window: int = 8,
                         counter: MissCounter = interp_misses) -> np.ndarray:
    """Unknown-amplitude matched-field statistic T(r) = |<h(r), z>|^2 / ||h(r)||^2.

    The template h includes the 1/r^2 spreading loss, so T is free of the
    amplitude-trend bias of the plain coherent sum and peaks exactly at the
    scatterer on noiseless data.  Use this for localization; use
    backproject() for display and peak extraction.
    """
    traj = np.asarray(traj_estimate, dtype=float)
    if cube.values.shape[0] != array.N or cube.values.shape[1] != traj.shape[0]:
        raise ValueError("cube dimensions inconsistent with trajectory/array")
    ant = array.element_positions(traj)
    vals, misses = _kernels.matched_field_points(
        cube.values, ant, np.atleast_2d(points), cfg.two_b_over_c, cfg.kappa, window)
    counter.add(misses)
    return vals


def matched_field_grid(cube: RangeCube, traj_estimate: np.ndarray, array: ArrayGeometry,
                       grid: ImageGrid, cfg: RadioConfig, window: int = 8) -> ImageGrid:
    """Voxel grid of sqrt(T); compatible with localize()/extract_calibration()."""
    out = grid.copy_empty()
    vals = matched_field_values(cube, traj_estimate, array, grid.voxel_centers(), cfg, window)
    out.values = np.sqrt(vals).astype(complex).reshape(grid.dims)
    return out


def cancel_point_echoes(cube: RangeCube, traj_estimate: np.ndarray, array: ArrayGeometry,
                        known_points: np.ndarray, cfg: RadioConfig,
                        keep: np.ndarray | None = None) -> RangeCube:
    """Subtract the echoes of known scatterers from every range profile.

    Per (acquisition, element) the complex amplitudes of all known_points
    are fitted jointly and the fitted contributions are removed, except
    for the rows selected by `keep` (boolean mask over known_points).
    Including a to-be-kept scatterer in the fit still matters: it prevents
    its energy from being absorbed into the subtracted components.
    """
    known_points = np.atleast_2d(np.asarray(known_points, dtype=float))
    Qk = known_points.shape[0]
    keep_mask = np.zeros(Qk, dtype=bool) if keep is None else np.asarray(keep, dtype=bool)
    if keep_mask.shape != (Qk,):
        raise ValueError("keep mask must match the number of known points")
    ant = array.element_positions(np.asarray(traj_estimate, dtype=float))  # (M, N, 3)
    out = cube.values.copy()
    K = cfg.K
    for m in range(cube.M):
        for n in range(cube.N):
            nus = cfg.range_to_bin(
                np.linalg.norm(known_points - ant[m, n][None, :], axis=1))
            amps, _ = fit_point_echoes(out[n, m], nus, K)
            X = echo_design_matrix(nus, K)
            amps = np.where(keep_mask, 0.0, amps)
            out[n, m] -= X @ amps
    return RangeCube(values=out, cfg=cfg)


@dataclass
class CalibrationSet:
    """Strong stationary reflection points used as autofocus references."""

    points: np.ndarray        # (Q, 3) refined positions
    magnitudes: np.ndarray    # (Q,) peak |I|
    complete: bool = True     # False if fewer maxima than requested exist

    @property
    def Q(self) -> int:
        return self.points.shape[0]


def _local_maxima(power: np.ndarray) -> np.ndarray:
    """Indices of strict 26-neighborhood local maxima (singleton axes ok)."""
    padded = np.pad(power, 1, mode="constant", constant_values=-np.inf)
    center = padded[1:-1, 1:-1, 1:-1]
    is_max = np.ones(power.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            for dk in (-1, 0, 1):
                if di == dj == dk == 0:
                    continue
                neigh = padded[1 + di:padded.shape[0] - 1 + di,
                               1 + dj:padded.shape[1] - 1 + dj,
                               1 + dk:padded.shape[2] - 1 + dk]
                is_max &= center > neigh
    return np.argwhere(is_max)


def _quadratic_refine(power: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Separable 3-point parabola fit per axis; fractional index offsets."""
    offs = np.zeros(3)
    for ax in range(3):
        i = idx[ax]
        if power.shape[ax] < 3 or i == 0 or i == power.shape[ax] - 1:
            continue
        sl = list(idx)
        sl[ax] = slice(i - 1, i + 2)
        f = power[tuple(sl)].astype(float)
        denom = f[0] - 2.0 * f[1] + f[2]
        if denom < 0:  # proper maximum curvature
            offs[ax] = float(np.clip(0.5 * (f[0] - f[2]) / denom, -0.5, 0.5))
    return offs


def extract_calibration(image: ImageGrid, Q: int, min_separation_cells: float = 2.0) -> CalibrationSet:
    """The Q strongest local maxima of |I|^2, sub-voxel refined.

    Maxima closer than `min_separation_cells` to an already-accepted,
    stronger maximum are suppressed.  Ordering: descending magnitude,
    lexicographic voxel index on ties.
    """
    if Q < 1:
        raise ValueError("Q must be >= 1")
    if not np.any(image.values):
        return CalibrationSet(points=np.zeros((0, 3)), magnitudes=np.zeros(0), complete=False)
    power = np.abs(image.values) ** 2
    cand = _local_maxima(power)
    if cand.size == 0:
        return CalibrationSet(points=np.zeros((0, 3)), magnitudes=np.zeros(0), complete=False)
    mags = power[tuple(cand.T)]
    # sort by descending power, lexicographic index tie-break (stable keys)
    order = np.lexsort((cand[:, 2], cand[:, 1], cand[:, 0], -mags))
    selected = []
    for i in order:
        if len(selected) == Q:
            break
        if any(np.linalg.norm(cand[i] - cand[j]) < min_separation_cells for j in selected):
            continue
        selected.append(i)
    pts = []
    peak_mag = []
    for i in selected:
        offs = _quadratic_refine(power, cand[i])
        pts.append(image.index_to_position(cand[i] + offs))
        peak_mag.append(np.sqrt(power[tuple(cand[i])]))
    return CalibrationSet(points=np.array(pts), magnitudes=np.array(peak_mag),
                          complete=len(selected) == Q)


def localize(image: ImageGrid) -> tuple[np.ndarray, float]:
    """Global |I| maximum with quadratic sub-voxel refinement."""
    if not np.any(image.values):
        raise ValueError("cannot localize an all-zero image")
    power = np.abs(image.values) ** 2
    idx = np.array(np.unravel_index(np.argmax(power), power.shape))
    offs = _quadratic_refine(power, idx)
    return image.index_to_position(idx + offs), float(np.sqrt(power[tuple(idx)]))


def refine_position(cube: RangeCube, traj_estimate: np.ndarray, array: ArrayGeometry,
                    cfg: RadioConfig, start: np.ndarray, window: int = 8,
                    scale: float | None = None,
                    bounds: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Continuous polish of a localization estimate.

    Maximizes the matched-field statistic by Nelder-Mead starting from a
    grid peak; needed when the accuracy target is far below the voxel
    spacing.  `bounds`, if given as (lower, upper), confines the polish to
    the declared search region: with a defocused aperture the statistic
    has no dominant peak and an unconstrained simplex can wander
    arbitrarily far from the region the grid search covered.
    """
    start = np.asarray(start, dtype=float)
    if scale is None:
        scale = cfg.wavelength / 8.0
    if bounds is not None:
        lo, hi = (np.asarray(b, dtype=float) for b in bounds)
        start = np.clip(start, lo, hi)

    def neg_mag(x):
        if bounds is not None and (np.any(x < lo) or np.any(x > hi)):
            return np.inf
        return -matched_field_values(cube, traj_estimate, array, x[None, :], cfg, window)[0]

    res = scipy.optimize.minimize(
        neg_mag, start, method="Nelder-Mead",
        options=dict(xatol=1e-7, fatol=1e-12, maxiter=400,
                     initial_simplex=start + np.vstack([np.zeros(3), np.eye(3) * scale])))
    x = res.x
    return np.clip(x, lo, hi) if bounds is not None else x


def image_to_csv(path, image: ImageGrid, floor_db: float = -120.0) -> None:
    """CSV export: one voxel per row (x, y, z, re, im, mag_db)."""
    pts = image.voxel_centers()
    vals = image.values.ravel()
    peak = np.max(np.abs(vals))
    ref = peak if peak > 0 else 1.0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z", "re", "im", "mag_db"])
        for p, v in zip(pts, vals):
            mag = np.abs(v)
            db = 20.0 * np.log10(mag / ref) if mag > 0 else floor_db
            writer.writerow([f"{p[0]:.9e}", f"{p[1]:.9e}", f"{p[2]:.9e}",
                             f"{v.real:.9e}", f"{v.imag:.9e}", f"{max(db, floor_db):.4f}"])


def image_to_pgm(path, image: ImageGrid, dynamic_range_db: float = 40.0) -> None:
    """8-bit binary PGM of the magnitude in dB, clipped to the given range.

    The image must be reducible to 2-D (at most two non-singleton axes).
    """
    mag = np.abs(np.squeeze(image.values))
    if mag.ndim > 2:
        raise ValueError("PGM export needs a 2-D image slice")
    mag = np.atleast_2d(mag)
    peak = mag.max()
    if peak <= 0:
        db = np.full(mag.shape, -dynamic_range_db)
    else:
        with np.errstate(divide="ignore"):
            db = 20.0 * np.log10(np.where(mag > 0, mag / peak, np.nan))
        db = np.where(np.isfinite(db), db, -dynamic_range_db)
        db = np.clip(db, -dynamic_range_db, 0.0)
    pix = np.round((db + dynamic_range_db) / dynamic_range_db * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n".encode())
        fh.write(pix.tobytes())
