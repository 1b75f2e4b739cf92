import numpy as np
import pytest

from hardy_nls.grid import PhysParams, UsageError, assemble_sector_op, build_grid
from hardy_nls.spectral import (energy_cosine, frobenius_exponents, gap_estimates,
                                generalized_kernel_check, sector_spectrum)


def test_sector_counts(small):
    s5 = sector_spectrum(small.sector_op(5), 4)
    s1 = sector_spectrum(small.sector_op(1), 4)
    assert s5.negative_count == 1
    assert s1.negative_count == 0 or abs(s1.eigenvalues[0]) < 1e-8
    s15 = sector_spectrum(assemble_sector_op(small.grid, small.params, 1, 5), 3)
    assert s15.eigenvalues[0] > 0


def test_l2_eigenvectors_orthonormal(small):
    s = sector_spectrum(small.sector_op(5), 4)
    G = s.eigenvectors.T @ (small.mass[:, None] * s.eigenvectors)
    assert np.allclose(G, np.eye(4), atol=1e-8)


def test_h1a_pencil_and_gaps(small):
    h5 = sector_spectrum(small.sector_op(5), 4, "h1a")
    h1 = sector_spectrum(small.sector_op(1), 4, "h1a")
    # lambda_1 = -4 on W (A_5 W = -4 A_0 W), lambda_2 = 0 on W1
    assert h5.eigenvalues[0] == pytest.approx(-4.0, rel=1e-8)
    assert abs(h5.eigenvalues[1]) < 1e-6
    lam3, lt2 = gap_estimates(h5, h1)
    assert lam3 > 0 and lt2 > 0
    v = h5.eigenvectors[:, 0]
    assert energy_cosine(small.sector_op(5), v, small.phi_h) > 0.999999
    with pytest.raises(UsageError):
        gap_estimates(sector_spectrum(small.sector_op(5), 3), h1)


def test_pencil_guard(small):
    with pytest.raises(UsageError):
        sector_spectrum(small.sector_op(5), 3, pencil="other")


def test_trichotomy_pair(trich):
    m = trich.model
    B = m.mass
    V1, V2 = trich.vp.real, trich.vp.imag
    # JL V+ = e0 V+ in the real 2n form
    r1 = trich.A1 @ V2 - trich.e0 * B * V1
    r2 = -trich.A5 @ V1 - trich.e0 * B * V2
    scale = trich.e0 * (np.linalg.norm(B * V1) + np.linalg.norm(B * V2))
    assert (np.linalg.norm(r1) + np.linalg.norm(r2)) / scale < 1e-8
    assert trich.pair(trich.L_dual(trich.vp), trich.vm) == pytest.approx(1.0, rel=1e-10)
    assert trich.y_plus(trich.vp) == pytest.approx(1.0, rel=1e-10)
    assert abs(trich.y_minus(trich.vp)) < 1e-10
    v = np.exp(-(m.grid.r - 2) ** 2) * (1 + 1j)
    c = trich.center(v)
    assert abs(trich.y_plus(c)) < 1e-10 * np.max(np.abs(v)) and abs(trich.y_minus(c)) < 1e-10


def test_generalized_kernel(trich):
    out = generalized_kernel_check(trich)
    assert out["kernel_dim"] == 2
    assert out["negative_c5"] == 1
    assert out["y_on_discrete_kernel"] < 1e-6


def test_frobenius_roots():
    P = PhysParams(-0.05)
    fr = frobenius_exponents(P, 1)
    assert fr["s_plus"] == pytest.approx((-1 + np.sqrt(9 - 0.2)) / 2)
    assert fr["s_plus"] + fr["s_minus"] == pytest.approx(-1.0)
    fit = frobenius_exponents(P, 1, build_grid(P, 512, 200.0))
    assert fit["relative_deviation"] < 0.01
