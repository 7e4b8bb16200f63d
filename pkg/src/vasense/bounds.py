"""Deterministic and Bayesian Cramer-Rao bounds for single-scatterer localization.

The observation stack is the noiseless range profile mu_{n,m} = (alpha/r^2)
exp(-j*kappa*r) s(nu) over the aperture (and optionally over the array
elements), with unknowns: target position p, per-acquisition trajectory
errors delta_m (correlated Gaussian prior), and the complex reflectivity
alpha treated as two real nuisance parameters.  The position bound follows
by Schur complements of the prior-augmented Fisher information.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from vasense.radio import ArrayGeometry, RadioConfig
from vasense.trajectory import ErrorPrior
from vasense.waveform import dirichlet_derivative, dirichlet_kernel

# condition-number threshold beyond which C_t gets a diagonal jitter before
# inversion (double-integration priors are severely ill-conditioned)
_COND_LIMIT = 1e12
_JITTER = 1e-12


class SingularBlockError(np.linalg.LinAlgError):
    """An information block required by the Schur complement is singular."""

    def __init__(self, block: str, detail: str = ""):
        self.block = block
        super().__init__(f"singular block {block!r}: unobservable geometry"
                         + (f": {detail}" if detail else ""))


@dataclass
class MeanModel:
    """Noiseless observation model over the aperture.

    With the default single-element array this is the textbook
    single-antenna bound; passing the physical array makes the bound
    match the data volume an N-element estimator actually consumes.
    """

    alpha: complex
    target: np.ndarray          # (3,)
    trajectory: np.ndarray      # (M, 3) phase-center positions
    cfg: RadioConfig
    array: ArrayGeometry = field(default_factory=ArrayGeometry.single)

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=float)
        self.trajectory = np.asarray(self.trajectory, dtype=float)
        if self.trajectory.ndim != 2 or self.trajectory.shape[1] != 3:
            raise ValueError("trajectory must be (M, 3)")
        ant = self.array.element_positions(self.trajectory)      # (M, N, 3)
        diff = self.target[None, None, :] - ant
        self.ranges = np.linalg.norm(diff, axis=-1)              # (M, N)
        if np.any(self.ranges <= 0):
            raise ValueError("target coincides with an antenna position")
        self.look = diff / self.ranges[..., None]                # (M, N, 3)
        self.nu = self.cfg.range_to_bin(self.ranges)
        self.beta = -2.0 / self.ranges - 1j * self.cfg.kappa

    @property
    def M(self) -> int:
        return self.trajectory.shape[0]

    @property
    def N(self) -> int:
        return self.array.N

    def _scalar_amp(self):
        return (self.alpha / self.ranges**2) * np.exp(-1j * self.cfg.kappa * self.ranges)

    def mu_stack(self) -> np.ndarray:
        """All conditional means, shape (M, N, K)."""
        ell = np.arange(self.cfg.K)
        s = dirichlet_kernel(ell[None, None, :] - self.nu[..., None], self.cfg.K)
        return self._scalar_amp()[..., None] * s

    def mu_radial_stack(self) -> np.ndarray:
        """d(mu_{m,n})/d(r_{m,n}) for all m, n, shape (M, N, K)."""
        ell = np.arange(self.cfg.K)
        x = ell[None, None, :] - self.nu[..., None]
        s = dirichlet_kernel(x, self.cfg.K)
        sd = dirichlet_derivative(x, self.cfg.K)
        amp = self._scalar_amp()[..., None]
        return amp * (self.beta[..., None] * s - self.cfg.two_b_over_c * sd)


def mu_vector(model: MeanModel, m: int, n: int = 0) -> np.ndarray:
    """Conditional mean of the range profile at slow-time index m."""
    return model.mu_stack()[m, n]


def mu_radial_derivative(model: MeanModel, m: int, n: int = 0) -> np.ndarray:
    """Derivative of mu_m with respect to the range r_m."""
    return model.mu_radial_stack()[m, n]


def radial_sensitivity(model: MeanModel, m: int, n: int = 0) -> float:
    """Dimensionless sensitivity ||beta*s - (2B/c)*s'||^2 / ||s||^2.

    Approaches kappa^2 in the phase-dominated regime; the envelope term
    adds the bandwidth contribution.
    """
    ell = np.arange(model.cfg.K)
    x = ell - model.nu[m, n]
    s = dirichlet_kernel(x, model.cfg.K)
    sd = dirichlet_derivative(x, model.cfg.K)
    vec = model.beta[m, n] * s - model.cfg.two_b_over_c * sd
    return float(np.sum(np.abs(vec) ** 2) / np.sum(s**2))


@dataclass
class FimBlocks:
    """Fisher information blocks for theta = [p, delta_1..delta_{M-1}, Re a, Im a]."""

    J_pp: np.ndarray    # (3, 3)
    J_pd: np.ndarray    # (3, 3(M-1))
    J_dd: np.ndarray    # (3(M-1), 3(M-1)), block-diagonal in m
    J_pa: np.ndarray    # (3, 2)
    J_da: np.ndarray    # (3(M-1), 2)
    J_aa: np.ndarray    # (2, 2)

    @property
    def M(self) -> int:
        return self.J_pd.shape[1] // 3 + 1


def fisher_blocks(model: MeanModel, noise_power: float) -> FimBlocks:
    """Analytic Fisher blocks of the Gaussian observation stack.

    [J]_ij = (2/sigma_w^2) Re sum_{m,n,k} (d mu/d theta_i)^H (d mu/d theta_j)
    with sigma_w^2 the per-subcarrier noise variance; position and error
    derivatives go through r by the chain rule with d r/d p = u and
    d r/d delta_m = +u (q_m = qhat_m - delta_m).  Elements of the same
    acquisition share delta_m, so their contributions add inside each 3x3
    block.

    The inner products are evaluated in the compressed (range-profile)
    domain, where the 1/K-normalized inverse DFT shrinks both the signal
    inner products and the white noise variance by K; the scale 2K/sigma_w^2
    makes the result identical to the subcarrier-domain information.
    """
    if noise_power <= 0:
        raise ValueError("noise power must be positive")
    if model.M < 2:
        raise ValueError("need M >= 2")
    if model.alpha == 0:
        raise ValueError("alpha = 0 makes the reflectivity block singular")

    M = model.M
    scale = 2.0 * model.cfg.K / noise_power
    mu = model.mu_stack()
    dmu = model.mu_radial_stack()

    g = np.sum(np.abs(dmu) ** 2, axis=-1)                 # (M, N) ||mu'||^2
    h = np.sum(np.abs(mu) ** 2, axis=-1)                  # (M, N) ||mu||^2
    c = np.sum(np.conj(dmu) * mu, axis=-1) / model.alpha  # (M, N) mu'^H (mu/alpha)
    u = model.look                                        # (M, N, 3)

    guu = np.einsum("mn,mni,mnj->mij", g, u, u)           # (M, 3, 3)
    J_pp = guu.sum(axis=0) * scale

    # alpha columns: derivatives w.r.t. (Re a, Im a) are mu/a and j*mu/a
    ca = np.stack([np.real(c), -np.imag(c)], axis=-1)     # (M, N, 2)
    uca = np.einsum("mni,mnk->mik", u, ca)                # (M, 3, 2)
    J_pa = uca.sum(axis=0) * scale

    n3 = 3 * (M - 1)
    J_pd = np.zeros((3, n3))
    J_dd = np.zeros((n3, n3))
    J_da = np.zeros((n3, 2))
    for m in range(1, M):
        sl = slice(3 * (m - 1), 3 * m)
        J_pd[:, sl] = scale * guu[m]
        J_dd[sl, sl] = scale * guu[m]
        J_da[sl, :] = scale * uca[m]
    J_aa = scale * np.sum(h) / np.abs(model.alpha) ** 2 * np.eye(2)
    return FimBlocks(J_pp=J_pp, J_pd=J_pd, J_dd=J_dd, J_pa=J_pa, J_da=J_da, J_aa=J_aa)


@dataclass
class BcrbReport:
    """Position bounds with and without trajectory uncertainty."""

    crb_known: np.ndarray        # (3, 3), known trajectory, alpha nuisance
    bcrb: np.ndarray             # (3, 3), trajectory prior + alpha nuisance
    axis_std_known: np.ndarray   # (3,)
    axis_std_bcrb: np.ndarray    # (3,)
    radial_sensitivity: np.ndarray = None  # I_m per acquisition, optional

    @property
    def sqrt_trace_crb(self) -> float:
        return float(np.sqrt(np.trace(self.crb_known)))

    @property
    def sqrt_trace_bcrb(self) -> float:
        return float(np.sqrt(np.trace(self.bcrb)))

    def range_variance(self, direction: np.ndarray, bayesian: bool = True) -> float:
        """Variance bound projected on a unit direction (range axis)."""
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        mat = self.bcrb if bayesian else self.crb_known
        return float(d @ mat @ d)


def _solve_psd(mat: np.ndarray, rhs: np.ndarray, block: str) -> np.ndarray:
    try:
        out = scipy.linalg.solve(mat, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularBlockError(block, str(exc)) from exc
    if not np.all(np.isfinite(out)):
        raise SingularBlockError(block, "non-finite solve result")
    return out


def _inv_prior(prior: ErrorPrior) -> np.ndarray:
    """(C_t (x) I_3)^{-1} = C_t^{-1} (x) I_3, with conditioning jitter."""
    Ct = prior.C_t.copy()
    cond = np.linalg.cond(Ct)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        Ct = Ct + _JITTER * np.max(np.diag(Ct)) * np.eye(Ct.shape[0])
    try:
        Ct_inv = scipy.linalg.solve(Ct, np.eye(Ct.shape[0]), assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularBlockError("C_t", str(exc)) from exc
    return np.kron(Ct_inv, np.eye(3))


def crb_known_position(blocks: FimBlocks) -> np.ndarray:
    """Known-trajectory CRB: delta parameters removed, alpha still nuisance."""
    S = blocks.J_pp - blocks.J_pa @ _solve_psd(blocks.J_aa, blocks.J_pa.T, "J_aa")
    return _solve_psd(S, np.eye(3), "position information (alpha nuisance removed)")


def bcrb_position(blocks: FimBlocks, prior: ErrorPrior,
                  sensitivity: np.ndarray | None = None) -> BcrbReport:
    """Bayesian CRB: augment the delta block with the prior, then eliminate.

    BCRB(p) = (J_pp - J_pd Psi^{-1} J_pd^T - G S_a^{-1} G^T)^{-1} with
    Psi = J_dd + C_delta^{-1}, S_a = J_aa - J_da^T Psi^{-1} J_da and
    G = J_pa - J_pd Psi^{-1} J_da.
    """
    if 3 * prior.C_t.shape[0] != blocks.J_dd.shape[0]:
        raise ValueError("prior dimension does not match the Fisher delta block")
    psi = blocks.J_dd + _inv_prior(prior)
    psi_inv_pd = _solve_psd(psi, blocks.J_pd.T, "Psi")       # (n, 3)
    psi_inv_da = _solve_psd(psi, blocks.J_da, "Psi")         # (n, 2)
    S_a = blocks.J_aa - blocks.J_da.T @ psi_inv_da
    G = blocks.J_pa - blocks.J_pd @ psi_inv_da
    inner = (blocks.J_pp - blocks.J_pd @ psi_inv_pd
             - G @ _solve_psd(S_a, G.T, "S_alpha"))
    bcrb = _solve_psd(inner, np.eye(3), "BCRB inner matrix")
    crb = crb_known_position(blocks)
    return BcrbReport(
        crb_known=crb, bcrb=bcrb,
        axis_std_known=np.sqrt(np.clip(np.diag(crb), 0.0, None)),
        axis_std_bcrb=np.sqrt(np.clip(np.diag(bcrb), 0.0, None)),
        radial_sensitivity=sensitivity,
    )


def bound_report(model: MeanModel, noise_power: float, prior: ErrorPrior) -> BcrbReport:
    """Convenience wrapper: Fisher blocks + both bounds for one geometry."""
    blocks = fisher_blocks(model, noise_power)
    sens = np.array([radial_sensitivity(model, m) for m in range(model.M)])
    return bcrb_position(blocks, prior, sensitivity=sens)
