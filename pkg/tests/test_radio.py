"""Configuration, link-budget, and geometry type tests."""

import numpy as np
import pytest

from vasense.radio import (ArrayGeometry, LinkBudget, RadioConfig, Scatterer,
                           Scene, complex_amplitude)

CFG = RadioConfig(fc=28e9, B=200e6, K=64)


def test_derived_constants_match_independent_values():
    # frozen from an independent high-precision evaluation
    assert CFG.wavelength == pytest.approx(0.0107068735, rel=1e-12)
    assert CFG.kappa == pytest.approx(1173.6732122929418, rel=1e-12)
    assert CFG.range_resolution == pytest.approx(0.749481145, rel=1e-12)
    assert CFG.df == pytest.approx(200e6 / 64, rel=1e-15)
    assert CFG.two_b_over_c == pytest.approx(2.0 * 200e6 / 299792458.0, rel=1e-15)


def test_subcarrier_grid_is_centered_on_carrier():
    f = CFG.subcarrier_frequencies()
    assert f.shape == (64,)
    assert np.mean(f) == pytest.approx(28e9, rel=1e-15)
    assert np.all(np.diff(f) > 0)
    assert f[1] - f[0] == pytest.approx(CFG.df, rel=1e-12)


def test_range_to_bin_roundtrip():
    r = 0.62
    nu = CFG.range_to_bin(r)
    assert nu == pytest.approx(2.0 * CFG.B * r / 299792458.0, rel=1e-14)


@pytest.mark.parametrize("kwargs", [dict(fc=0.0, B=1e8), dict(fc=1e9, B=-1.0),
                                    dict(fc=1e9, B=1e8, K=1)])
def test_radio_validation(kwargs):
    with pytest.raises(ValueError):
        RadioConfig(**kwargs)


def test_complex_amplitude_radar_equation():
    # |alpha| = sqrt(P G_t G_r lambda^2 sigma / (4 pi)^3); frozen oracle
    scat = Scatterer(position=(0.0, 0.5, 0.0), rcs=0.01)
    alpha = complex_amplitude(scat, LinkBudget(), CFG)
    assert abs(alpha) == pytest.approx(2.4035207485290119e-05, rel=1e-12)
    assert alpha.imag == 0.0

    phased = Scatterer(position=(0.0, 0.5, 0.0), rcs=0.01, phase=np.pi / 3)
    a2 = complex_amplitude(phased, LinkBudget(), CFG)
    assert abs(a2) == pytest.approx(abs(alpha), rel=1e-12)
    assert np.angle(a2) == pytest.approx(np.pi / 3, rel=1e-12)

    # quadratic in the wavelength-and-power scalings
    boosted = complex_amplitude(scat, LinkBudget(P_t=4.0), CFG)
    assert abs(boosted) == pytest.approx(2.0 * abs(alpha), rel=1e-12)


def test_scene_rejects_large_self_interference():
    with pytest.raises(ValueError):
        Scene(scatterers=[], gamma=0.1)
    Scene(scatterers=[], gamma=10 ** (-35 / 20.0))  # within budget


def test_scene_requires_positive_noise():
    with pytest.raises(ValueError):
        Scene(scatterers=[], noise_power=0.0)


def test_array_phase_center_is_mean_position():
    arr = ArrayGeometry.uniform_linear(4, 0.005, axis=2)
    assert arr.N == 4
    assert np.allclose(arr.offsets.mean(axis=0), 0.0, atol=1e-15)
    q = np.array([1.0, 2.0, 3.0])
    pos = arr.element_positions(q)
    assert pos.shape == (4, 3)
    assert np.allclose(pos.mean(axis=0), q, atol=1e-12)
    # trajectory broadcast
    traj = np.zeros((5, 3))
    assert arr.element_positions(traj).shape == (5, 4, 3)


def test_array_rejects_offcenter_elements():
    with pytest.raises(ValueError):
        ArrayGeometry(displacements=((0.0, 0.0, 0.0), (0.01, 0.0, 0.0)))


def test_scatterer_validation():
    with pytest.raises(ValueError):
        Scatterer(position=(0, 1, 0), rcs=-1.0)
    with pytest.raises(ValueError):
        Scatterer(position=(0, 1, 0), cross_pol=0.0)
