import numpy as np
import pytest

from hardy_nls.spectral import solve_trichotomy
from hardy_nls.threshold import (ContractionFailure, branch_sign, fit_rate, lp_solve,
                                 smooth_cutoff, tuned_blowup_datum)


@pytest.fixture(scope="module")
def tr_small(params, small):
    return solve_trichotomy(params, small.grid, small)


@pytest.fixture(scope="module")
def lp(tr_small):
    return lp_solve(1e-3, tr_small, richardson=False)


def test_lp_converges(lp, tr_small):
    assert lp.converged
    assert lp.max_contraction < 0.5
    # y- starts at the seed and decays at roughly e0
    assert lp.y_minus[0] == pytest.approx(1e-3)
    j = np.searchsorted(lp.t, 1.0)
    assert lp.y_minus[j] / lp.y_minus[0] == pytest.approx(np.exp(-tr_small.e0 * lp.t[j]), rel=0.05)


def test_lp_quadratic_tangency(tr_small):
    # y+(0) and the center part are O(y0^2)
    a = lp_solve(1e-3, tr_small, richardson=False)
    b = lp_solve(2e-3, tr_small, richardson=False)
    assert b.y0_plus / a.y0_plus == pytest.approx(4.0, rel=0.05)
    assert b.vc0_norm / a.vc0_norm == pytest.approx(4.0, rel=0.05)


def test_branch_sign_flips(tr_small):
    s1, _ = branch_sign(tr_small, 1e-3, richardson=False)
    s2, _ = branch_sign(tr_small, -1e-3, richardson=False)
    assert {s1, s2} == {-1.0, 1.0}


def test_bad_lambda(tr_small):
    with pytest.raises(ValueError):
        lp_solve(1e-3, tr_small, lam=2 * tr_small.e0)


def test_large_seed_fails(tr_small):
    with pytest.raises(ContractionFailure):
        lp_solve(5.0, tr_small, max_iter=15, richardson=False)


def test_fit_rate_synthetic(rng):
    t = np.linspace(0, 10, 201)
    d = 1e-8 * np.exp(1.7 * t) * (1 + 1e-3 * rng.standard_normal(t.size))
    f = fit_rate(t, d, lo=1e-7, hi=1e-2)
    assert f["rate"] == pytest.approx(1.7, rel=1e-3)
    assert f["r2"] > 0.999
    assert np.isnan(fit_rate(t[:3], d[:3])["rate"])


def test_cutoff_and_blowup_datum(small):
    r = small.grid.r
    chi = smooth_cutoff(r, 5.0)
    assert np.all(chi[r <= 5.0] == 1) and np.all(chi[r >= 10.0] == 0)
    u, c = tuned_blowup_datum(small, 10.0)
    assert small.energy(u) == pytest.approx(small.M / 3, rel=1e-9)
    assert small.kinetic(u) > small.M
