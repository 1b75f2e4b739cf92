import numpy as np
import pytest

from hardy_nls.grid import UsageError
from hardy_nls.modulation import (CutoffProfile, FitUnavailable, calibrate_delta0, compactness_scale,
                                  distance, fit_modulation, plain_gradient, scaled_profile,
                                  virial_V, virial_sample)


def test_fit_recovers_planted(small):
    for th, mu in ((0.5, 0.7), (-1.3, 2.5)):
        f = fit_modulation(small, scaled_profile(small, th, mu))
        assert abs(np.angle(np.exp(1j * (f.theta - th)))) < 1e-10
        assert f.mu == pytest.approx(mu, rel=1e-10)
        assert abs(f.alpha) < 1e-6 and f.v_norm < 1e-3 * np.sqrt(small.M)


def test_fit_orthogonality(small, rng):
    r = small.grid.r
    u = scaled_profile(small, 0.3, 1.2) + 0.02 * np.exp(-(r - 2) ** 2) * (1 + 1j) / r ** small.s
    f = fit_modulation(small, u)
    assert abs(f.J0) < 1e-9 * small.M and abs(f.J1) < 1e-9 * small.M
    assert f.d == pytest.approx(distance(small, u))


def test_fit_unavailable(small):
    with pytest.raises(FitUnavailable):
        fit_modulation(small, 0.3 * small.phi_h)


def test_calibration(small):
    lev = calibrate_delta0(small, np.random.default_rng(0), trials=3, levels=[1e-3, 1e-2])
    assert lev == 1e-2


def test_cutoff_profile():
    c = CutoffProfile()
    r = np.linspace(0, 4, 4001)
    p0, p1, p2, p3, p4 = c.derivs(r)
    inner = r <= 1
    assert np.allclose(p0[inner], r[inner] ** 2)
    assert np.all(p0[r >= 3] == 0)
    assert p2.max() <= 2 + 1e-12
    # each derivative matches a local central difference of the previous one
    x = np.linspace(0.5, 3.5, 301)
    h = 1e-5
    up, dn = c.derivs(x + h), c.derivs(x - h)
    mid = c.derivs(x)
    for j in range(4):
        fd = (up[j] - dn[j]) / (2 * h)
        assert np.allclose(fd, mid[j + 1], atol=1e-5 * (1 + np.abs(mid[j + 1]).max()))
    with pytest.raises(UsageError):
        CutoffProfile(outer=2.0)


def test_virial_on_ground_state(model):
    W = scaled_profile(model, 0.0, 1.0)
    for R in (2.0, 5.0):
        vs = virial_sample(model, W, R)
        assert abs(vs.A_R) <= 1e-8 * model.M
        assert vs.dtV_R == 0.0
        assert vs.dttV_direct == pytest.approx(vs.dttV_R, abs=1e-6 * model.M)
    with pytest.raises(UsageError):
        virial_sample(model, W, 100.0)


def test_virial_V_monotone(small):
    v = [virial_V(small, small.phi_h, R) for R in (1.0, 2.0, 4.0)]
    assert v[0] > v[1] > v[2] > 0
    assert v[0] < plain_gradient(small.grid, small.params, small.phi_h)


def test_compactness_equivariance(model):
    # rapidly decaying profile, sampled in closed form at each scale
    def prof(params, r):
        return r * r * np.exp(-r * r)
    base = compactness_scale(model, scaled_profile(model, 0.0, 1.0, prof))
    for mu in (0.5, 2.0, 4.0):
        lam = compactness_scale(model, scaled_profile(model, 1.0, mu, prof))
        assert lam * mu == pytest.approx(base, rel=1e-8)


def test_compactness_of_w(model):
    lam = compactness_scale(model, model.phi_h)
    assert 0.2 < lam < 0.4
    with pytest.raises(UsageError):
        compactness_scale(model, np.zeros(model.grid.n))
