"""Backprojection inner loops: numba-accelerated with a pure-numpy fallback.

The numpy path is selected when the environment variable
``VASENSE_DISABLE_NUMBA=1`` is set, or when numba is unavailable.  Both
backends accumulate the per-point sums in the same fixed (m, n) order, so
each backend is bit-reproducible run to run.

Contract shared by both implementations:

    backproject_points(cube, ant_pos, pts, two_b_c, kappa, window)

      cube    (N, M, K) complex128 range-compressed profiles
      ant_pos (M, N, 3) float64 antenna positions per acquisition
      pts     (G, 3)    float64 query positions
      returns (G,)      complex128 coherent sums
              int       count of out-of-window delay lookups (treated as 0)

Per point g:  I = sum_m sum_n interp(z_{n,m}, nu_hat) * exp(+j*kappa*r_hat)
with nu_hat = two_b_c * r_hat and normalized Dirichlet interpolation over
the `window` nearest bins.
"""

from __future__ import annotations

import math
import os

import numpy as np

_SING_EPS = 1e-3


def _use_numba() -> bool:
    if os.environ.get("VASENSE_DISABLE_NUMBA", "0") == "1":
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = _use_numba()


def _dirichlet_scalar(x: float, K: int) -> float:
    # scalar twin of waveform.dirichlet_kernel, njit-compilable
    j = round(x / K)
    eps = x - j * K
    if K % 2 == 0 and j % 2 != 0:
        sigma = -1.0
    else:
        sigma = 1.0
    if abs(eps) < _SING_EPS:
        u = math.pi * eps
        return sigma * (1.0 - u * u / 6.0 * (1.0 - 1.0 / K**2)
                        + u**4 / 360.0 * (3.0 - 10.0 / K**2 + 7.0 / K**4))
    return math.sin(math.pi * x) / (K * math.sin(math.pi * x / K))


def _backproject_points_py(cube, ant_pos, pts, two_b_c, kappa, window):
    M, N = ant_pos.shape[0], ant_pos.shape[1]
    K = cube.shape[2]
    G = pts.shape[0]
    out = np.zeros(G, dtype=np.complex128)
    misses = 0
    for g in range(G):
        acc = 0.0 + 0.0j
        for m in range(M):
            for n in range(N):
                dx = pts[g, 0] - ant_pos[m, n, 0]
                dy = pts[g, 1] - ant_pos[m, n, 1]
                dz = pts[g, 2] - ant_pos[m, n, 2]
                r = math.sqrt(dx * dx + dy * dy + dz * dz)
                nu = two_b_c * r
                if nu < 0.0 or nu >= K:
                    misses += 1
                    continue
                lo = int(math.floor(nu)) - window // 2 + 1
                if lo < 0:
                    lo = 0
                elif lo > K - window:
                    lo = K - window
                num = 0.0 + 0.0j
                den = 0.0
                for t in range(window):
                    ell = lo + t
                    w = _dirichlet_scalar(ell - nu, K)
                    num += cube[n, m, ell] * w
                    den += w * w
                phase = kappa * r
                acc += (num / den) * complex(math.cos(phase), math.sin(phase))
        out[g] = acc
    return out, misses


def _matched_field_points_py(cube, ant_pos, pts, two_b_c, kappa, window):
    """Unknown-amplitude matched-field statistic T = |<h, z>|^2 / ||h||^2.

    h is the point-response template with 1/r^2 spreading; by Cauchy-Schwarz
    T peaks exactly at the true scatterer position on noiseless data, unlike
    the plain coherent sum whose 1/r^2 amplitude trend biases the peak
    toward the sensor.
    """
    M, N = ant_pos.shape[0], ant_pos.shape[1]
    K = cube.shape[2]
    G = pts.shape[0]
    out = np.zeros(G)
    misses = 0
    for g in range(G):
        num = 0.0 + 0.0j
        den = 0.0
        for m in range(M):
            for n in range(N):
                dx = pts[g, 0] - ant_pos[m, n, 0]
                dy = pts[g, 1] - ant_pos[m, n, 1]
                dz = pts[g, 2] - ant_pos[m, n, 2]
                r = math.sqrt(dx * dx + dy * dy + dz * dz)
                nu = two_b_c * r
                if nu < 0.0 or nu >= K:
                    misses += 1
                    continue
                lo = int(math.floor(nu)) - window // 2 + 1
                if lo < 0:
                    lo = 0
                elif lo > K - window:
                    lo = K - window
                corr = 0.0 + 0.0j
                energy = 0.0
                for t in range(window):
                    ell = lo + t
                    w = _dirichlet_scalar(ell - nu, K)
                    corr += cube[n, m, ell] * w
                    energy += w * w
                phase = kappa * r
                r2 = r * r
                num += (corr / r2) * complex(math.cos(phase), math.sin(phase))
                den += energy / (r2 * r2)
        if den > 0.0:
            out[g] = (num.real * num.real + num.imag * num.imag) / den
    return out, misses


if USE_NUMBA:
    import numba

    _dirichlet_scalar_jit = numba.njit(cache=True)(_dirichlet_scalar)

    @numba.njit(cache=True)
    def _backproject_points_jit(cube, ant_pos, pts, two_b_c, kappa, window):
        M, N = ant_pos.shape[0], ant_pos.shape[1]
        K = cube.shape[2]
        G = pts.shape[0]
        out = np.zeros(G, dtype=np.complex128)
        misses = 0
        for g in range(G):
            acc = 0.0 + 0.0j
            for m in range(M):
                for n in range(N):
                    dx = pts[g, 0] - ant_pos[m, n, 0]
                    dy = pts[g, 1] - ant_pos[m, n, 1]
                    dz = pts[g, 2] - ant_pos[m, n, 2]
                    r = math.sqrt(dx * dx + dy * dy + dz * dz)
                    nu = two_b_c * r
                    if nu < 0.0 or nu >= K:
                        misses += 1
                        continue
                    lo = int(math.floor(nu)) - window // 2 + 1
                    if lo < 0:
                        lo = 0
                    elif lo > K - window:
                        lo = K - window
                    num = 0.0 + 0.0j
                    den = 0.0
                    for t in range(window):
                        ell = lo + t
                        w = _dirichlet_scalar_jit(ell - nu, K)
                        num += cube[n, m, ell] * w
                        den += w * w
                    phase = kappa * r
                    acc += (num / den) * complex(math.cos(phase), math.sin(phase))
            out[g] = acc
        return out, misses

    @numba.njit(cache=True)
    def _matched_field_points_jit(cube, ant_pos, pts, two_b_c, kappa, window):
        M, N = ant_pos.shape[0], ant_pos.shape[1]
        K = cube.shape[2]
        G = pts.shape[0]
        out = np.zeros(G)
        misses = 0
        for g in range(G):
            num = 0.0 + 0.0j
            den = 0.0
            for m in range(M):
                for n in range(N):
                    dx = pts[g, 0] - ant_pos[m, n, 0]
                    dy = pts[g, 1] - ant_pos[m, n, 1]
                    dz = pts[g, 2] - ant_pos[m, n, 2]
                    r = math.sqrt(dx * dx + dy * dy + dz * dz)
                    nu = two_b_c * r
                    if nu < 0.0 or nu >= K:
                        misses += 1
                        continue
                    lo = int(math.floor(nu)) - window // 2 + 1
                    if lo < 0:
                        lo = 0
                    elif lo > K - window:
                        lo = K - window
                    corr = 0.0 + 0.0j
                    energy = 0.0
                    for t in range(window):
                        ell = lo + t
                        w = _dirichlet_scalar_jit(ell - nu, K)
                        corr += cube[n, m, ell] * w
                        energy += w * w
                    phase = kappa * r
                    r2 = r * r
                    num += (corr / r2) * complex(math.cos(phase), math.sin(phase))
                    den += energy / (r2 * r2)
            if den > 0.0:
                out[g] = (num.real * num.real + num.imag * num.imag) / den
        return out, misses


def _backproject_points_numpy(cube, ant_pos, pts, two_b_c, kappa, window):
    """Vectorized fallback: loops over (m, n), vectorizes over points."""
    M, N = ant_pos.shape[0], ant_pos.shape[1]
    K = cube.shape[2]
    G = pts.shape[0]
    out = np.zeros(G, dtype=np.complex128)
    misses = 0
    from vasense.waveform import dirichlet_kernel
    for m in range(M):
        for n in range(N):
            d = pts - ant_pos[m, n]
            r = np.sqrt(np.einsum("gi,gi->g", d, d))
            nu = two_b_c * r
            ok = (nu >= 0.0) & (nu < K)
            misses += int(np.count_nonzero(~ok))
            nu_ok = nu[ok]
            lo = np.clip(np.floor(nu_ok).astype(np.int64) - window // 2 + 1, 0, K - window)
            num = np.zeros(nu_ok.shape, dtype=np.complex128)
            den = np.zeros(nu_ok.shape)
            for t in range(window):
                ell = lo + t
                w = dirichlet_kernel(ell - nu_ok, K)
                num += cube[n, m, ell] * w
                den += w * w
            contrib = np.zeros(G, dtype=np.complex128)
            contrib[ok] = (num / den) * np.exp(1j * kappa * r[ok])
            out += contrib
    return out, misses


def _matched_field_points_numpy(cube, ant_pos, pts, two_b_c, kappa, window):
    """Vectorized fallback: loops over (m, n), vectorizes over points."""
    M, N = ant_pos.shape[0], ant_pos.shape[1]
    K = cube.shape[2]
    G = pts.shape[0]
    num = np.zeros(G, dtype=np.complex128)
    den = np.zeros(G)
    misses = 0
    from vasense.waveform import dirichlet_kernel
    for m in range(M):
        for n in range(N):
            d = pts - ant_pos[m, n]
            r = np.sqrt(np.einsum("gi,gi->g", d, d))
            nu = two_b_c * r
            ok = (nu >= 0.0) & (nu < K)
            misses += int(np.count_nonzero(~ok))
            nu_ok = nu[ok]
            lo = np.clip(np.floor(nu_ok).astype(np.int64) - window // 2 + 1, 0, K - window)
            corr = np.zeros(nu_ok.shape, dtype=np.complex128)
            energy = np.zeros(nu_ok.shape)
            for t in range(window):
                ell = lo + t
                w = dirichlet_kernel(ell - nu_ok, K)
                corr += cube[n, m, ell] * w
                energy += w * w
            r2 = r[ok] ** 2
            num[ok] += (corr / r2) * np.exp(1j * kappa * r[ok])
            den[ok] += energy / r2**2
    out = np.zeros(G)
    pos = den > 0.0
    out[pos] = np.abs(num[pos]) ** 2 / den[pos]
    return out, misses


def backproject_points(cube: np.ndarray, ant_pos: np.ndarray, pts: np.ndarray,
                       two_b_c: float, kappa: float, window: int = 8):
    """Coherent backprojection sums at arbitrary query points.

    Returns (values (G,) complex, out_of_window_count).
    """
    cube = np.ascontiguousarray(cube, dtype=np.complex128)
    ant_pos = np.ascontiguousarray(ant_pos, dtype=np.float64)
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    window = int(min(window, cube.shape[2]))
    if USE_NUMBA:
        return _backproject_points_jit(cube, ant_pos, pts, two_b_c, kappa, window)
    return _backproject_points_numpy(cube, ant_pos, pts, two_b_c, kappa, window)


def matched_field_points(cube: np.ndarray, ant_pos: np.ndarray, pts: np.ndarray,
                         two_b_c: float, kappa: float, window: int = 8):
    """Unknown-amplitude matched-field statistic at arbitrary query points.

    Returns (values (G,) float, out_of_window_count).
    """
    cube = np.ascontiguousarray(cube, dtype=np.complex128)
    ant_pos = np.ascontiguousarray(ant_pos, dtype=np.float64)
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    window = int(min(window, cube.shape[2]))
    if USE_NUMBA:
        return _matched_field_points_jit(cube, ant_pos, pts, two_b_c, kappa, window)
    return _matched_field_points_numpy(cube, ant_pos, pts, two_b_c, kappa, window)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
