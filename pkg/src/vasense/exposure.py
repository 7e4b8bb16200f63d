"""Distance-aware EIRP power control under a point-source exposure limit.

A maximum permissible exposure (MPE) power-density limit S_lim at distance
r caps the radiated power at EIRP <= 4*pi*S_lim*r^2.  The baseline policy
assumes worst-case proximity and transmits a constant conservative level;
the distance-aware policy backs the measured distance off by a multiple of
its estimation-uncertainty bound and spends the verified standoff as
transmit power.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def watt_to_dbm(watt: float) -> float:
    if watt <= 0:
        return -math.inf
    return 10.0 * math.log10(watt / 1e-3)


@dataclass(frozen=True)
class MpePolicy:
    """Exposure policy parameters.

    s_lim: power density limit [W/m^2]; r_s: certification distance at
    which the constant baseline is set [m]; r_off: off-body threshold
    beyond which no proximity constraint applies [m]; eirp_max: hardware
    ceiling [W]; k: one-sided guard multiplier on the range-error std;
    eirp_base_override: optional fixed baseline level [W] replacing the
    formula value 4*pi*s_lim*r_s^2.
    """

    s_lim: float = 10.0
    r_s: float = 0.025
    r_off: float = 0.50
    eirp_max: float = dbm_to_watt(34.0)
    k: float = 2.58
    eirp_base_override: float | None = dbm_to_watt(25.0)

    def __post_init__(self):
        if not 0.0 < self.r_s < self.r_off:
            raise ValueError("need 0 < r_s < r_off")
        if self.s_lim <= 0:
            raise ValueError("power density limit must be positive")
        if self.k < 0:
            raise ValueError("guard multiplier must be nonnegative")
        if self.eirp_max <= 4.0 * math.pi * self.s_lim * self.r_s**2:
            raise ValueError("eirp_max must exceed the certification-distance limit")

    @property
    def eirp_base(self) -> float:
        """Constant baseline level [W]: override if set, else the formula."""
        if self.eirp_base_override is not None:
            return self.eirp_base_override
        return eirp_mpe_limit(self.r_s, self.s_lim)


def eirp_mpe_limit(r: float, s_lim: float) -> float:
    """Largest EIRP [W] whose far-field density at distance r stays <= s_lim."""
    if r <= 0:
        raise ValueError("distance must be positive")
    return 4.0 * math.pi * s_lim * r * r


def eirp_baseline(r: float, policy: MpePolicy) -> float:
    """Distance-agnostic policy: constant level on-body, ceiling off-body."""
    if r <= 0:
        raise ValueError("distance must be positive")
    if r <= policy.r_off:
        return policy.eirp_base
    return policy.eirp_max


def effective_distance(r_hat: float, crb_r: float, k: float) -> float:
    """Guard-banded distance r_eff = max(r_hat - k*sqrt(crb_r), 0)."""
    if r_hat <= 0:
        raise ValueError("measured distance must be positive")
    if crb_r < 0:
        raise ValueError("range variance bound must be nonnegative")
    return max(r_hat - k * math.sqrt(crb_r), 0.0)


def eirp_proposed(r_hat: float, crb_r: float, policy: MpePolicy) -> float:
    """Distance-aware policy: the MPE limit at the guard-banded distance.

    Returns min(4*pi*s_lim*r_eff^2, eirp_max); zero when the uncertainty
    swallows the whole measured distance (full back-off).
    """
    r_eff = effective_distance(r_hat, crb_r, policy.k)
    if r_eff <= 0.0:
        return 0.0
    return min(eirp_mpe_limit(r_eff, policy.s_lim), policy.eirp_max)


def policy_gain_db(r_hat: float, crb_r: float, policy: MpePolicy) -> float:
    """Proposed-over-baseline gain in dB at a measured distance."""
    prop = eirp_proposed(r_hat, crb_r, policy)
    base = eirp_baseline(r_hat, policy)
    if prop <= 0:
        return -math.inf
    return 10.0 * math.log10(prop / base)


def coverage_estimate(r_true: float, sigma_r: float, k: float, draws: int,
                      rng) -> float:
    """Empirical probability that the guard-banded distance stays safe.

    Draws Gaussian range measurements r_hat = r_true + sigma_r*Z and
    returns the fraction with r_true >= r_hat - k*sigma_r.  The population
    value is Phi(k) regardless of r_true and sigma_r.
    """
    if sigma_r <= 0:
        raise ValueError("range-error std must be positive")
    if draws < 1:
        raise ValueError("need at least one draw")
    r_hat = r_true + sigma_r * rng.standard_normal(draws)
    r_eff = r_hat - k * sigma_r
    return float(np.mean(r_true >= r_eff))


def write_curves_csv(path, distances, crb_by_label: dict[str, list[float]],
                     policy: MpePolicy, metadata: list[str] | None = None) -> None:
    """Policy curves: one row per distance, one proposed column per label.

    crb_by_label maps a curve label (e.g. an aperture tag) to the range
    variance bound at each distance.
    """
    labels = list(crb_by_label)
    for lab in labels:
        if len(crb_by_label[lab]) != len(distances):
            raise ValueError(f"curve {lab!r} length does not match distances")
    with open(path, "w", newline="") as fh:
        for line in metadata or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["r_m", "eirp_baseline_dbm", "eirp_mpe_dbm"]
                        + [f"eirp_proposed_dbm_{lab}" for lab in labels])
        for i, r in enumerate(distances):
            row = [f"{r:.6f}",
                   f"{watt_to_dbm(eirp_baseline(r, policy)):.4f}",
                   f"{watt_to_dbm(eirp_mpe_limit(r, policy.s_lim)):.4f}"]
            for lab in labels:
                row.append(f"{watt_to_dbm(eirp_proposed(r, crb_by_label[lab][i], policy)):.4f}")
            writer.writerow(row)
