"""Radio, array, and scene configuration types."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT


@dataclass(frozen=True)
class RadioConfig:
    """OFDM subcarrier grid and the derived sensing constants.

    Subcarriers are laid out symmetrically around the carrier:
    f_k = fc + (k - (K-1)/2) * df for k = 0..K-1, so fc is the band
    center.  With this convention the range-compressed point response is
    the real Dirichlet kernel and the carrier phase term is exactly
    exp(-j*kappa*r) with kappa = 4*pi/lambda.
    """

    fc: float          # carrier frequency [Hz]
    B: float           # bandwidth [Hz]
    K: int = 64        # subcarrier count

    def __post_init__(self):
        if self.fc <= 0:
            raise ValueError(f"carrier frequency must be positive, got {self.fc}")
        if self.B <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.B}")
        if self.K < 2:
            raise ValueError(f"need at least 2 subcarriers, got {self.K}")

    @property
    def df(self) -> float:
        """Subcarrier spacing [Hz]."""
        return self.B / self.K

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.fc

    @property
    def kappa(self) -> float:
        """Round-trip carrier wavenumber 4*pi/lambda [rad/m]."""
        return 4.0 * math.pi / self.wavelength

    @property
    def range_resolution(self) -> float:
        """First-null range resolution c/(2B) [m]."""
        return SPEED_OF_LIGHT / (2.0 * self.B)

    @property
    def two_b_over_c(self) -> float:
        """Range-to-bin conversion factor: nu = 2*B*r/c."""
        return 2.0 * self.B / SPEED_OF_LIGHT

    def subcarrier_frequencies(self) -> np.ndarray:
        k = np.arange(self.K)
        return self.fc + (k - (self.K - 1) / 2.0) * self.df

    def range_to_bin(self, r) -> np.ndarray:
        return self.two_b_over_c * np.asarray(r)


@dataclass(frozen=True)
class LinkBudget:
    """Transmit power and antenna gains entering the radar equation."""

    P_t: float = 1.0   # transmit power [W]
    G_t: float = 1.0   # transmit gain (linear)
    G_r: float = 1.0   # receive gain (linear)

    def __post_init__(self):
        if self.P_t <= 0 or self.G_t <= 0 or self.G_r <= 0:
            raise ValueError("powers and gains must be positive")


@dataclass(frozen=True)
class Scatterer:
    """Point scatterer on the user's body."""

    position: tuple[float, float, float]   # [m]
    rcs: float = 0.01                      # reflective cross-section [m^2]
    cross_pol: float = 1.0                 # cross-polarization coupling, (0, 1]
    phase: float = 0.0                     # reflection phase [rad]

    def __post_init__(self):
        if self.rcs < 0:
            raise ValueError(f"RCS must be nonnegative, got {self.rcs}")
        if not 0.0 < abs(self.cross_pol) <= 1.0:
            raise ValueError(f"cross-pol coupling must be in (0, 1], got {self.cross_pol}")

    @property
    def pos(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)


def complex_amplitude(scat: Scatterer, link: LinkBudget, cfg: RadioConfig) -> complex:
    """Complex echo amplitude of one scatterer (radar equation).

    |alpha| = sqrt(P_t*G_t*G_r*lambda^2*sigma_rcs / (4*pi)^3) * chi,
    arg(alpha) = reflection phase.
    """
    lam = cfg.wavelength
    mag = math.sqrt(link.P_t * link.G_t * link.G_r * lam**2 * scat.rcs / (4.0 * math.pi) ** 3)
    return mag * scat.cross_pol * complex(math.cos(scat.phase), math.sin(scat.phase))


@dataclass
class Scene:
    """Scatterers plus the residual self-interference and noise level."""

    scatterers: list[Scatterer]
    gamma: complex = 0.0          # residual self-interference coefficient
    noise_power: float = 1e-12    # sigma_w^2, linear power
    link: LinkBudget = field(default_factory=LinkBudget)

    # residual self-interference is typically below -30 dB after
    # cross-polarization suppression; larger values are suspicious
    GAMMA_LIMIT_DB = -30.0

    def __post_init__(self):
        if self.noise_power <= 0:
            raise ValueError(f"noise power must be positive, got {self.noise_power}")
        if abs(self.gamma) ** 2 > 10.0 ** (self.GAMMA_LIMIT_DB / 10.0) * (1 + 1e-12):
            raise ValueError(
                f"|gamma|^2 = {abs(self.gamma)**2:.3e} exceeds the "
                f"{self.GAMMA_LIMIT_DB} dB self-interference budget"
            )

    @property
    def Q(self) -> int:
        return len(self.scatterers)

    def amplitudes(self, cfg: RadioConfig) -> np.ndarray:
        return np.array([complex_amplitude(s, self.link, cfg) for s in self.scatterers])

    def positions(self) -> np.ndarray:
        if not self.scatterers:
            return np.zeros((0, 3))
        return np.stack([s.pos for s in self.scatterers])


@dataclass(frozen=True)
class ArrayGeometry:
    """Element displacements from the array phase center.

    The mean displacement must be zero (phase-center convention).
    """

    displacements: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        d = self.offsets
        if d.shape[0] < 1:
            raise ValueError("need at least one element")
        if np.max(np.abs(d.mean(axis=0))) > 1e-12:
            raise ValueError("element displacements must average to zero (phase center)")

    @property
    def offsets(self) -> np.ndarray:
        return np.asarray(self.displacements, dtype=float)

    @property
    def N(self) -> int:
        return len(self.displacements)

    @classmethod
    def single(cls) -> "ArrayGeometry":
        return cls(((0.0, 0.0, 0.0),))

    @classmethod
    def uniform_linear(cls, n: int, spacing: float, axis: int = 0) -> "ArrayGeometry":
        """N-element ULA centered on the phase center."""
        if n < 1:
            raise ValueError("need at least one element")
        pos = (np.arange(n) - (n - 1) / 2.0) * spacing
        d = np.zeros((n, 3))
        d[:, axis] = pos
        return cls(tuple(map(tuple, d)))

    def element_positions(self, q: np.ndarray) -> np.ndarray:
        """Element positions for phase-center location(s) q.

        q may be (3,) or (M, 3); returns (N, 3) or (M, N, 3).
        """
        q = np.asarray(q, dtype=float)
        return q[..., None, :] + self.offsets
